mod common;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use relu_preimage::model_io::{self, BlockEncoding, ParseError};
use relu_preimage::stability::{Activation, MlpModel, ModelLayer};
use relu_preimage::Error;

fn random_model(rng: &mut ChaCha8Rng) -> MlpModel {
    let depth = rng.gen_range(1..=4);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=7)).collect();
    let acts = [
        Activation::Relu,
        Activation::None,
        Activation::SoftmaxIgnored,
    ];
    let layers = dims
        .windows(2)
        .map(|w| {
            let mut layer = common::gaussian_layer(rng, w[1], w[0]);
            // mix magnitudes so the exponent format is exercised
            layer.weight = layer.weight.scaled(10f64.powi(rng.gen_range(-30..30)));
            ModelLayer {
                affine: layer,
                activation: acts[rng.gen_range(0..3)],
            }
        })
        .collect();
    MlpModel::new(layers).unwrap()
}

#[test]
fn models_roundtrip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(51);
    for i in 0..50 {
        let model = random_model(&mut rng);
        let path = dir.path().join(format!("m{i}.txt"));
        model_io::save_model(&model, &path).unwrap();
        let loaded = model_io::load_model(&path).unwrap();
        assert_eq!(loaded, model);
        let again = dir.path().join(format!("m{i}b.txt"));
        model_io::save_model(&loaded, &again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }
}

#[test]
fn binary_blocks_roundtrip_in_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(52);
    for i in 0..20 {
        let model = random_model(&mut rng);
        let path = dir.path().join(format!("b{i}.bin"));
        model_io::save_model_binary(&model, &path).unwrap();
        let loaded = model_io::load_model(&path).unwrap();
        for (a, b) in loaded.layers().iter().zip(model.layers()) {
            assert_eq!(a.activation, b.activation);
            for (x, y) in a.affine.weight.data().iter().zip(b.affine.weight.data()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        // widened values survive the text format untouched
        let text = model_io::model_to_text(&loaded);
        assert_eq!(model_io::parse_model(text.as_bytes()).unwrap(), loaded);
    }
}

#[test]
fn vectors_roundtrip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(53);
    for i in 0..50 {
        let n = rng.gen_range(0..20);
        let v: Vec<f64> = common::gaussian_vec(&mut rng, n)
            .into_iter()
            .map(|x| x * 1e-7)
            .collect();
        let path = dir.path().join(format!("v{i}"));
        model_io::save_vector(&v, &path).unwrap();
        assert_eq!(
            model_io::load_vector(&path).unwrap().as_slice(),
            v.as_slice()
        );
    }
    let batch: Vec<Vec<f64>> = (0..50).map(|_| common::gaussian_vec(&mut rng, 4)).collect();
    let path = dir.path().join("batch.csv");
    model_io::save_vectors(&batch, &path).unwrap();
    let loaded = model_io::load_vectors(&path).unwrap();
    assert_eq!(loaded.len(), 50);
    assert!(loaded
        .iter()
        .zip(&batch)
        .all(|(a, b)| a.len() == 4 && a.as_slice() == b.as_slice()));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(model_io::load_vectors(&empty).unwrap().is_empty());
}

#[test]
fn wide_chain_loads_and_mismatch_is_caught() {
    let mut rng = common::rng(54);
    let l1 = common::gaussian_layer(&mut rng, 100, 784);
    let l2 = common::gaussian_layer(&mut rng, 100, 100);
    let model = MlpModel::relu_mlp(vec![l1.clone(), l2]).unwrap();
    let text = model_io::model_to_text(&model);
    assert_eq!(
        model_io::parse_model(text.as_bytes()).unwrap().output_dim(),
        100
    );

    let bad_layer = common::gaussian_layer(&mut rng, 10, 99);
    let bad = MlpModel::relu_mlp(vec![l1.clone()]).unwrap();
    let mut text = model_io::model_to_text(&bad).replace("layers 1", "layers 2");
    text.truncate(text.len() - "end\n".len());
    let tail = model_io::model_to_text(&MlpModel::relu_mlp(vec![bad_layer.clone()]).unwrap());
    let block = tail.split_once("layer 1 ").unwrap().1;
    text.push_str("layer 2 ");
    text.push_str(block);
    assert!(matches!(
        model_io::parse_model(text.as_bytes()),
        Err(ParseError::DimensionMismatch {
            expected: 100,
            found: 99,
            ..
        })
    ));
    assert!(matches!(
        MlpModel::relu_mlp(vec![l1, bad_layer]),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn corrupted_files_fail_with_their_own_error() {
    assert!(model_io::parse_model(common::GOOD.as_bytes()).is_ok());
    for (name, text, check) in common::corruptions() {
        match model_io::parse_model(text.as_bytes()) {
            Ok(_) => panic!("{name}: parsed"),
            Err(e) => assert!(check(&e), "{name}: {e:?}"),
        }
    }
}

#[test]
fn corrupted_binary_blocks() {
    let model = model_io::parse_model(common::GOOD.as_bytes()).unwrap();
    let bytes = model_io::model_to_bytes(&model, BlockEncoding::F32Le);
    let first_block = bytes.windows(6).position(|w| w == b"f32le\n").unwrap() + 6;
    let cut = &bytes[..first_block + 6];
    assert!(matches!(
        model_io::parse_model(cut),
        Err(ParseError::TruncatedBinary {
            expected: 16,
            available: 6,
            ..
        })
    ));
    let mut nan = bytes.clone();
    nan[first_block..first_block + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(
        matches!(model_io::parse_model(&nan), Err(ParseError::NonFiniteBinary { offset }) if offset == first_block)
    );

    let mut unterminated = bytes.clone();
    unterminated[first_block + 16] = b'x';
    assert!(matches!(
        model_io::parse_model(&unterminated),
        Err(ParseError::MissingBlockTerminator { .. })
    ));
}

#[test]
fn io_errors_carry_the_path() {
    let err = model_io::load_model("/definitely/not/here.txt").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/definitely/not/here.txt"));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nan.txt");
    std::fs::write(&p, "1.0\nnan\n").unwrap();
    let err = model_io::load_vector(&p).unwrap_err();
    assert!(matches!(
        err,
        Error::Parse {
            source: ParseError::NonFiniteValue { line: 2, .. },
            ..
        }
    ));
}

#[test]
fn matrices_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(55);
    let m = common::gaussian_matrix(&mut rng, 7, 3);
    let p = dir.path().join("m.csv");
    model_io::save_matrix(&m, &p).unwrap();
    assert_eq!(model_io::load_matrix(&p).unwrap(), m);
    let empty = dir.path().join("e.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(model_io::load_matrix(&empty).is_err());
}
