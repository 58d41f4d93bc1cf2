//! Command-line front end. Layers are numbered from 1.
//!
//! Exit codes: 0 success, 1 usage or other failure, 2 inconsistent output,
//! 3 simplex stall, 4 file I/O or parse failure. `RELU_PREIMAGE_THREADS`
//! caps the worker pool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix, Vector};
use crate::model_io::{self, write_output};
use crate::preimage::{self, AffineLayer};
use crate::stability::{self, MlpModel};
use crate::{omni, Tolerances};

pub const THREADS_ENV: &str = "RELU_PREIMAGE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "relu-preimage",
    version,
    about = "Preimage and inverse-stability analysis of ReLU networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Outputs at or below this value count as zero.
    #[arg(long, global = true, default_value_t = preimage::ACT_TOL)]
    pub act_tol: f64,
    /// Relative tolerance for numerical rank.
    #[arg(long, global = true, default_value_t = crate::linalg::DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// LP feasibility tolerance.
    #[arg(long, global = true, default_value_t = crate::lp::FEAS_TOL)]
    pub feas_tol: f64,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the preimage of one layer's output (JSON).
    Classify(ClassifyArgs),
    /// Test a matrix for omnidirectionality (JSON).
    Omni(OmniArgs),
    /// Maximise <c, x> over the preimage of a layer output (JSON).
    Probe(ProbeArgs),
    /// Per-layer singular value statistics over a batch of inputs (CSV).
    Spectrum(SpectrumArgs),
    /// Correlation sweep for the units a ReLU layer switches off (CSV).
    CorrSweep(CorrSweepArgs),
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Model file (see docs/FORMAT.md).
    #[arg(long)]
    pub model: PathBuf,
    /// 1-based layer index.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Network input; propagated through the earlier layers.
    #[arg(
        long,
        required_unless_present = "activation",
        conflicts_with = "activation"
    )]
    pub input: Option<PathBuf>,
    /// The layer output `y` itself.
    #[arg(long)]
    pub activation: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OmniArgs {
    /// Matrix as comma-separated rows.
    #[arg(long)]
    pub matrix: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Model file (see docs/FORMAT.md).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Network input whose layer output fixes the preimage.
    #[arg(long)]
    pub x_star: PathBuf,
    /// Objective direction in the layer's input space.
    #[arg(long)]
    pub c: PathBuf,
    /// Lower box bound on every input coordinate of the layer.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lower: f64,
    /// Upper box bound on every input coordinate of the layer.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub upper: f64,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Model file (see docs/FORMAT.md).
    #[arg(long)]
    pub model: PathBuf,
    /// Inputs as comma-separated rows.
    #[arg(long, conflicts_with = "samples")]
    pub inputs: Option<PathBuf>,
    /// Draw this many standard Gaussian inputs instead.
    #[arg(long, required_unless_present = "inputs")]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorrSweepArgs {
    /// Model file (see docs/FORMAT.md).
    #[arg(long)]
    pub model: PathBuf,
    /// Network input; propagated through the earlier layers.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Ascending comma-separated values of c.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4,8,16")]
    pub grid: Vec<f64>,
}

impl Common {
    pub fn tolerances(&self) -> Result<Tolerances> {
        for (name, v) in [
            ("act-tol", self.act_tol),
            ("rank-tol", self.rank_tol),
            ("feas-tol", self.feas_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "--{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Tolerances {
            act_tol: self.act_tol,
            rank_tol: self.rank_tol,
            feas_tol: self.feas_tol,
        })
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InconsistentOutput(_) => 2,
        Error::SolverStalled { .. } => 3,
        Error::Io { .. } | Error::Parse { .. } => 4,
        _ => 1,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let tol = cli.common.tolerances()?;
    let out = cli.common.output.as_deref();
    match &cli.command {
        Command::Classify(a) => cmd_classify(a, &tol, out),
        Command::Omni(a) => cmd_omni(a, &tol, out),
        Command::Probe(a) => cmd_probe(a, &tol, out),
        Command::Spectrum(a) => cmd_spectrum(a, &tol, out),
        Command::CorrSweep(a) => cmd_corr_sweep(a, &tol, out),
    }
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write_output(out, &text)
}

fn layer_at(model: &MlpModel, layer: usize) -> Result<&AffineLayer> {
    let count = model.layers().len();
    if layer == 0 || layer > count {
        return Err(Error::InvalidInput(format!(
            "layer {layer} out of range 1..={count}"
        )));
    }
    Ok(&model.layers()[layer - 1].affine)
}

/// Input of layer `layer` (1-based) for network input `x`.
fn layer_input(model: &MlpModel, layer: usize, x: &[f64]) -> Result<Vector> {
    model.forward_until(x, layer - 1)
}

fn cmd_classify(a: &ClassifyArgs, tol: &Tolerances, out: Option<&Path>) -> Result<()> {
    let model = model_io::load_model(&a.model)?;
    let affine = layer_at(&model, a.layer)?;
    let y = match (&a.input, &a.activation) {
        (_, Some(path)) => model_io::load_vector(path)?,
        (Some(path), None) => {
            let h = layer_input(&model, a.layer, &model_io::load_vector(path)?)?;
            preimage::forward(affine, &h)?
        }
        (None, None) => return Err(Error::InvalidInput("give --input or --activation".into())),
    };
    let class = preimage::classify_preimage_with(affine, &y, tol)?;
    let mut v = json!({
        "layer": a.layer,
        "kind": class.kind.to_string(),
        "diagnostics": class.diagnostics,
        "boundary_degenerate": class.boundary_degenerate,
    });
    if let Some(p) = &class.point {
        v["point"] = json!(p);
    }
    if let Some(r) = &class.reduced {
        v["k"] = json!(r.k);
        v["ktilde"] = json!(r.ktilde);
    }
    emit_json(out, &v)
}

fn cmd_omni(a: &OmniArgs, tol: &Tolerances, out: Option<&Path>) -> Result<()> {
    let m = model_io::load_matrix(&a.matrix)?;
    let report = omni::omnidirectional_with(&m, &tol.lp_options())?;
    emit_json(
        out,
        &serde_json::to_value(&report).expect("report serializes"),
    )
}

fn cmd_probe(a: &ProbeArgs, tol: &Tolerances, out: Option<&Path>) -> Result<()> {
    let model = model_io::load_model(&a.model)?;
    let affine = layer_at(&model, a.layer)?;
    let h_star = layer_input(&model, a.layer, &model_io::load_vector(&a.x_star)?)?;
    let c = model_io::load_vector(&a.c)?;
    let n = affine.inputs();
    let lower = vec![a.lower; n];
    let upper = vec![a.upper; n];
    let x = preimage::invariance_probe_with(affine, &h_star, &c, &lower, &upper, tol)?;
    if c.len() != x.len() {
        return Err(Error::dims("objective and layer input differ in length"));
    }
    let y_star = preimage::forward(affine, &h_star)?;
    let y = preimage::forward(affine, &x)?;
    let gap = y
        .iter()
        .zip(y_star.iter())
        .fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
    emit_json(
        out,
        &json!({
            "layer": a.layer,
            "x": x,
            "objective": dot(&c, &x),
            "objective_star": dot(&c, &h_star),
            "output_gap": gap,
        }),
    )
}

/// `count` standard Gaussian inputs from a seeded stream.
pub fn gaussian_inputs(dim: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

fn cmd_spectrum(a: &SpectrumArgs, tol: &Tolerances, out: Option<&Path>) -> Result<()> {
    let model = model_io::load_model(&a.model)?;
    let inputs = match (&a.inputs, a.samples) {
        (Some(path), _) => model_io::load_vectors(path)?,
        (None, Some(n)) => gaussian_inputs(model.input_dim(), n, a.seed),
        (None, None) => return Err(Error::InvalidInput("give --inputs or --samples".into())),
    };
    let report = stability::layerwise_report_with(&model, &inputs, tol.act_tol)?;
    write_output(out, &report.to_csv())
}

/// Accumulated linear map up to and including layer `layer`'s weights, and
/// the units that layer switches off at `x`.
pub fn prefix_and_mask(
    model: &MlpModel,
    layer: usize,
    x: &[f64],
    act_tol: f64,
) -> Result<(DenseMatrix, Vec<usize>)> {
    layer_at(model, layer)?;
    let lin = stability::linearize_with(model, x, act_tol)?;
    let mut acc = DenseMatrix::identity(model.input_dim());
    for (l, ml) in model.layers()[..layer].iter().enumerate() {
        acc = ml.affine.weight.matmul(&acc)?;
        if l + 1 < layer {
            acc = acc.zero_rows(&lin.chain.index_sets[l]);
        }
    }
    Ok((acc, lin.chain.index_sets[layer - 1].clone()))
}

fn cmd_corr_sweep(a: &CorrSweepArgs, tol: &Tolerances, out: Option<&Path>) -> Result<()> {
    let model = model_io::load_model(&a.model)?;
    let x = model_io::load_vector(&a.input)?;
    let (acc, off) = prefix_and_mask(&model, a.layer, &x, tol.act_tol)?;
    let sweep = stability::correlation_sweep(&acc, &off, &a.grid)?;
    write_output(out, &sweep.to_csv())
}
