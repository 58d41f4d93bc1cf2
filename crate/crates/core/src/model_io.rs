//! Model, vector and report files.
//!
//! Models use a line-oriented text format whose weight blocks may instead be
//! stored as raw little-endian `f32`. The grammar is in `docs/FORMAT.md`.
//! Values are written with 17 significant digits, so text files roundtrip
//! exactly.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::preimage::AffineLayer;
use crate::stability::{Activation, MlpModel, ModelLayer, SpectrumReport};

pub const MAGIC: &str = "relu-mlp";
pub const FORMAT_VERSION: u32 = 1;

/// Where and why a file failed to parse. Lines are 1-based; offsets are
/// byte offsets from the start of the file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: expected `{MAGIC} <version>` header, found {found:?}")]
    BadHeader { line: usize, found: String },
    #[error("line {line}: unsupported format version {version}")]
    UnsupportedVersion { line: usize, version: String },
    #[error("line {line}: expected `layers <count>`, found {found:?}")]
    BadLayerCount { line: usize, found: String },
    #[error("line {line}: malformed layer header {found:?}")]
    BadLayerHeader { line: usize, found: String },
    #[error("line {line}: expected layer {expected}, found layer {found}")]
    LayerIndexMismatch {
        line: usize,
        expected: usize,
        found: String,
    },
    #[error("line {line}: header declares {declared} layers but the file has {found}")]
    LayerCountMismatch {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("line {line}: layer has a zero dimension")]
    ZeroDimension { line: usize },
    #[error("line {line}: unknown activation {tag:?}")]
    UnknownActivation { line: usize, tag: String },
    #[error("line {line}: unknown block encoding {tag:?}")]
    UnknownEncoding { line: usize, tag: String },
    #[error("line {line}: {token:?} is not a number")]
    InvalidNumber { line: usize, token: String },
    #[error("line {line}: non-finite value {token:?}")]
    NonFiniteValue { line: usize, token: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    RowLength {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error(
        "line {line}: layer takes {found} inputs but the previous layer has {expected} outputs"
    )]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: file ends before {expected}")]
    UnexpectedEof { line: usize, expected: String },
    #[error("offset {offset}: binary block needs {expected} bytes, {available} available")]
    TruncatedBinary {
        offset: usize,
        expected: usize,
        available: usize,
    },
    #[error("offset {offset}: binary block is not followed by a newline")]
    MissingBlockTerminator { offset: usize },
    #[error("offset {offset}: binary block holds a non-finite value")]
    NonFiniteBinary { offset: usize },
    #[error("line {line}: expected `end`, found {found:?}")]
    MissingEnd { line: usize, found: String },
    #[error("line {line}: data after `end`")]
    TrailingData { line: usize },
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("file holds no rows")]
    Empty,
}

/// Storage of one layer's weight and bias block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockEncoding {
    Text,
    F32Le,
}

impl BlockEncoding {
    fn tag(self) -> &'static str {
        match self {
            BlockEncoding::Text => "text",
            BlockEncoding::F32Le => "f32le",
        }
    }
}

/// Canonical float rendering: 17 significant digits, exponent form.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_float(token: &str, line: usize) -> Result<f64, ParseError> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(ParseError::NonFiniteValue {
            line,
            token: token.to_string(),
        }),
        Err(_) => Err(ParseError::InvalidNumber {
            line,
            token: token.to_string(),
        }),
    }
}

fn parse_row(text: &str, line: usize, sep: Option<char>) -> Result<Vec<f64>, ParseError> {
    match sep {
        None => text
            .split_ascii_whitespace()
            .map(|t| parse_float(t, line))
            .collect(),
        Some(c) => text.split(c).map(|t| parse_float(t.trim(), line)).collect(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader {
            bytes,
            pos: 0,
            line: 0,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    /// Next line without its terminator, or `None` at end of input.
    fn next_line(&mut self) -> Result<Option<&'a str>, ParseError> {
        if self.at_end() {
            return Ok(None);
        }
        self.line += 1;
        let rest = &self.bytes[self.pos..];
        let len = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        self.pos += (len + 1).min(rest.len());
        std::str::from_utf8(&rest[..len])
            .map(Some)
            .map_err(|_| ParseError::InvalidUtf8 { line: self.line })
    }

    fn expect_line(&mut self, what: &str) -> Result<&'a str, ParseError> {
        let line = self.line + 1;
        self.next_line()?.ok_or_else(|| ParseError::UnexpectedEof {
            line,
            expected: what.to_string(),
        })
    }

    /// `count` little-endian f32 values followed by `\n`; counts as one line.
    fn binary_block(&mut self, count: usize) -> Result<Vec<f64>, ParseError> {
        let start = self.pos;
        let needed = count.checked_mul(4).unwrap_or(usize::MAX);
        let available = self.bytes.len() - start;
        if needed > available {
            return Err(ParseError::TruncatedBinary {
                offset: start,
                expected: needed,
                available,
            });
        }
        let block = &self.bytes[start..start + needed];
        let mut out = Vec::with_capacity(count);
        for (i, chunk) in block.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
            if !v.is_finite() {
                return Err(ParseError::NonFiniteBinary {
                    offset: start + 4 * i,
                });
            }
            out.push(f64::from(v));
        }
        self.pos = start + needed;
        if self.bytes.get(self.pos) != Some(&b'\n') {
            return Err(ParseError::MissingBlockTerminator { offset: self.pos });
        }
        self.pos += 1;
        self.line += 1;
        Ok(out)
    }
}

fn parse_count(token: Option<&str>) -> Option<usize> {
    token.and_then(|t| t.parse::<usize>().ok())
}

/// Parses a model from the bytes of a model file.
pub fn parse_model(bytes: &[u8]) -> Result<MlpModel, ParseError> {
    let mut r = Reader::new(bytes);

    let header = r.expect_line("the header")?;
    let mut tokens = header.split(' ');
    if tokens.next() != Some(MAGIC) {
        return Err(ParseError::BadHeader {
            line: r.line,
            found: header.to_string(),
        });
    }
    match (tokens.next(), tokens.next()) {
        (Some(v), None) if v == FORMAT_VERSION.to_string() => {}
        (Some(v), None) => {
            return Err(ParseError::UnsupportedVersion {
                line: r.line,
                version: v.to_string(),
            })
        }
        _ => {
            return Err(ParseError::BadHeader {
                line: r.line,
                found: header.to_string(),
            })
        }
    }

    let count_line = r.expect_line("the layer count")?;
    let mut tokens = count_line.split(' ');
    let declared = match (tokens.next(), parse_count(tokens.next()), tokens.next()) {
        (Some("layers"), Some(n), None) if n > 0 => n,
        _ => {
            return Err(ParseError::BadLayerCount {
                line: r.line,
                found: count_line.to_string(),
            })
        }
    };

    let mut layers: Vec<ModelLayer> = Vec::new();
    loop {
        let text = r.expect_line("`end`")?;
        let line = r.line;
        let tokens: Vec<&str> = text.split(' ').collect();
        match tokens[0] {
            "end" if tokens.len() == 1 => {
                if layers.len() != declared {
                    return Err(ParseError::LayerCountMismatch {
                        line,
                        declared,
                        found: layers.len(),
                    });
                }
                break;
            }
            "layer" => {}
            _ if layers.len() == declared => {
                return Err(ParseError::MissingEnd {
                    line,
                    found: text.to_string(),
                })
            }
            _ => {
                return Err(ParseError::BadLayerHeader {
                    line,
                    found: text.to_string(),
                })
            }
        }
        if layers.len() == declared {
            return Err(ParseError::LayerCountMismatch {
                line,
                declared,
                found: declared + 1,
            });
        }
        if tokens.len() != 6 {
            return Err(ParseError::BadLayerHeader {
                line,
                found: text.to_string(),
            });
        }
        if parse_count(Some(tokens[1])) != Some(layers.len() + 1) {
            return Err(ParseError::LayerIndexMismatch {
                line,
                expected: layers.len() + 1,
                found: tokens[1].to_string(),
            });
        }
        let (rows, cols) = match (parse_count(Some(tokens[2])), parse_count(Some(tokens[3]))) {
            (Some(r), Some(c)) => (r, c),
            _ => {
                return Err(ParseError::BadLayerHeader {
                    line,
                    found: text.to_string(),
                })
            }
        };
        if rows == 0 || cols == 0 {
            return Err(ParseError::ZeroDimension { line });
        }
        if let Some(prev) = layers.last() {
            if prev.affine.outputs() != cols {
                return Err(ParseError::DimensionMismatch {
                    line,
                    expected: prev.affine.outputs(),
                    found: cols,
                });
            }
        }
        let activation =
            Activation::from_tag(tokens[4]).ok_or_else(|| ParseError::UnknownActivation {
                line,
                tag: tokens[4].to_string(),
            })?;
        let entries = rows.checked_mul(cols).ok_or(ParseError::BadLayerHeader {
            line,
            found: text.to_string(),
        })?;

        let (weights, bias) = match tokens[5] {
            "text" => {
                let mut weights = Vec::new();
                for _ in 0..rows {
                    let row_text = r.expect_line("the weight block")?;
                    let row = parse_row(row_text, r.line, None)?;
                    if row.len() != cols {
                        return Err(ParseError::RowLength {
                            line: r.line,
                            expected: cols,
                            found: row.len(),
                        });
                    }
                    weights.extend(row);
                }
                let bias_text = r.expect_line("the bias")?;
                let bias = parse_row(bias_text, r.line, None)?;
                if bias.len() != rows {
                    return Err(ParseError::RowLength {
                        line: r.line,
                        expected: rows,
                        found: bias.len(),
                    });
                }
                (weights, bias)
            }
            "f32le" => {
                let weights = r.binary_block(entries)?;
                let bias = r.binary_block(rows)?;
                (weights, bias)
            }
            other => {
                return Err(ParseError::UnknownEncoding {
                    line,
                    tag: other.to_string(),
                })
            }
        };
        let weight = DenseMatrix::new(rows, cols, weights).expect("sizes and values checked");
        let affine = AffineLayer::new(weight, bias.into()).expect("sizes and values checked");
        layers.push(ModelLayer { affine, activation });
    }

    if !r.at_end() {
        return Err(ParseError::TrailingData { line: r.line + 1 });
    }
    Ok(MlpModel::new(layers).expect("chaining checked while parsing"))
}

/// Serializes a model with every block in `encoding`. `F32Le` rounds
/// weights to single precision.
pub fn model_to_bytes(model: &MlpModel, encoding: BlockEncoding) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(
        format!(
            "{MAGIC} {FORMAT_VERSION}\nlayers {}\n",
            model.layers().len()
        )
        .as_bytes(),
    );
    for (l, layer) in model.layers().iter().enumerate() {
        let w = &layer.affine.weight;
        out.extend_from_slice(
            format!(
                "layer {} {} {} {} {}\n",
                l + 1,
                w.rows(),
                w.cols(),
                layer.activation.tag(),
                encoding.tag()
            )
            .as_bytes(),
        );
        match encoding {
            BlockEncoding::Text => {
                for row in w.row_iter() {
                    out.extend_from_slice(join(row, " ").as_bytes());
                    out.push(b'\n');
                }
                out.extend_from_slice(join(&layer.affine.bias, " ").as_bytes());
                out.push(b'\n');
            }
            BlockEncoding::F32Le => {
                for &v in w.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                out.push(b'\n');
                for &v in layer.affine.bias.iter() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                out.push(b'\n');
            }
        }
    }
    out.extend_from_slice(b"end\n");
    out
}

/// Canonical text encoding of a model.
pub fn model_to_text(model: &MlpModel) -> String {
    String::from_utf8(model_to_bytes(model, BlockEncoding::Text)).expect("text encoding is ASCII")
}

fn join(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(|&v| format_float(v))
        .collect::<Vec<_>>()
        .join(sep)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path) -> impl FnOnce(ParseError) -> Error + '_ {
    move |source| Error::Parse {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    parse_model(&read(path)?).map_err(parse_err(path))
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), model_to_text(model).as_bytes())
}

pub fn save_model_binary(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &model_to_bytes(model, BlockEncoding::F32Le))
}

/// One value per line. A trailing newline is optional; blank lines are not
/// allowed.
pub fn parse_vector(text: &str) -> Result<Vector, ParseError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vector::zeros(0));
    }
    body.split('\n')
        .enumerate()
        .map(|(i, t)| parse_float(t.trim(), i + 1))
        .collect::<Result<Vec<f64>, _>>()
        .map(Vector::from)
}

/// Comma-separated rows of equal length.
pub fn parse_vectors(text: &str) -> Result<Vec<Vector>, ParseError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    let mut out: Vec<Vector> = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let row = parse_row(line, i + 1, Some(','))?;
        if let Some(first) = out.first() {
            if row.len() != first.len() {
                return Err(ParseError::RowLength {
                    line: i + 1,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        out.push(row.into());
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        source: ParseError::InvalidUtf8 { line: 0 },
    })
}

pub fn load_vector(path: impl AsRef<Path>) -> Result<Vector> {
    let path = path.as_ref();
    parse_vector(&read_text(path)?).map_err(parse_err(path))
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<Vec<Vector>> {
    let path = path.as_ref();
    parse_vectors(&read_text(path)?).map_err(parse_err(path))
}

/// A matrix stored as comma-separated rows.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let rows = load_vectors(path)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            source: ParseError::Empty,
        });
    }
    DenseMatrix::from_rows(&rows)
}

pub fn vector_to_text(v: &[f64]) -> String {
    v.iter().map(|&x| format_float(x) + "\n").collect()
}

pub fn vectors_to_text<V: AsRef<[f64]>>(vs: &[V]) -> String {
    vs.iter().map(|v| join(v.as_ref(), ",") + "\n").collect()
}

pub fn save_vector(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), vector_to_text(v).as_bytes())
}

pub fn save_vectors<V: AsRef<[f64]>>(vs: &[V], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), vectors_to_text(vs).as_bytes())
}

pub fn save_matrix(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<&[f64]> = m.row_iter().collect();
    save_vectors(&rows, path)
}

pub fn save_report(report: &SpectrumReport, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), report.to_csv().as_bytes())
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text.as_bytes()),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}
