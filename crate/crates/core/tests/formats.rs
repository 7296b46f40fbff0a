use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sdtdl::baseline::nearest_centroid;
use sdtdl::io::{decode_model, encode_model, read_predictions, write_history, write_predictions};
use sdtdl::solver::{accuracy, HistoryRow};
use sdtdl::synthetic::{generate, SyntheticSpec};
use sdtdl::{fit, DenseTensor, Error, FormatError, Hyperparams, LabeledTensorSet};

fn fitted() -> (sdtdl::FitOutput, LabeledTensorSet) {
    let d = generate(&SyntheticSpec { seed: 2, ..Default::default() }).unwrap();
    let h = Hyperparams { max_outer_iters: 1, ..Hyperparams::object_preset().with_ranks(vec![3, 3]) };
    (fit(&d.source, &d.target, &h, None).unwrap(), d.target)
}

#[test]
fn model_container_rejects_damage() {
    let (out, _) = fitted();
    let bytes = encode_model(&out.model);
    let p = Path::new("model.sdtdl");
    assert_eq!(decode_model(&bytes, p).unwrap(), out.model);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_model(&bad, p), Err(Error::Format(FormatError::BadMagic { .. }))));

    let mut newer = bytes.clone();
    newer[4] = 9;
    assert!(matches!(decode_model(&newer, p), Err(Error::Format(FormatError::VersionMismatch { found: 9, .. }))));

    for cut in [3, 9, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_model(&bytes[..cut], p), Err(Error::Format(_))), "cut at {cut}");
    }
}

#[test]
fn prediction_file_roundtrip() {
    let (out, _) = fitted();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("predictions.txt");
    write_predictions(&path, &out.labels).unwrap();
    let back = read_predictions(&path).unwrap();
    let labels: Vec<usize> = back.iter().map(|p| p.0).collect();
    let conf: Vec<u64> = back.iter().map(|p| p.1.to_bits()).collect();
    assert_eq!(labels, out.labels.labels);
    assert_eq!(conf, out.labels.combined_conf.iter().map(|c| c.to_bits()).collect::<Vec<_>>());

    fs::write(&path, "index,label,confidence\n1,2,0.5\n3,1,0.5\n").unwrap();
    let err = read_predictions(&path).unwrap_err().to_string();
    assert!(err.contains(":3"), "{err}");
}

#[test]
fn history_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    let rows = [
        HistoryRow { iter: 0, objective: 12.5, n_selected: 8, accuracy: Some(0.75) },
        HistoryRow { iter: 1, objective: 3.0, n_selected: 8, accuracy: None },
    ];
    write_history(&path, &rows).unwrap();
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        "iter,objective,n_selected,accuracy\n0,12.5,8,0.75\n1,3,8,\n"
    );
}

#[test]
fn baseline_on_pure_noise_is_chance() {
    let (c, n_s, n_t) = (4usize, 200usize, 2000usize);
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let source = DenseTensor::from_fn(vec![3, 3, n_s], |_| r.sample(StandardNormal));
    let target = DenseTensor::from_fn(vec![3, 3, n_t], |_| r.sample(StandardNormal));
    let labels: Vec<usize> = (0..n_s).map(|_| r.random_range(1..=c)).collect();
    let truth: Vec<usize> = (0..n_t).map(|_| r.random_range(1..=c)).collect();
    let source = LabeledTensorSet::new(source, Some(labels), c).unwrap();
    let target = LabeledTensorSet::unlabeled(target, c).unwrap();
    let acc = accuracy(&nearest_centroid(&source, &target).unwrap(), &truth);
    // truth is independent of the data, so hits are Binomial(n_t, 1/c); 4σ band
    let sd = (0.25 * 0.75 / n_t as f64).sqrt();
    assert!((acc - 0.25).abs() <= 4.0 * sd, "{acc}");
}
