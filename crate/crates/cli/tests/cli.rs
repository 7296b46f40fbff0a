use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdtdl::io::{encode_tensor, read_tensor, tensor_to_matrix, write_labels, write_predictions, write_tensor};
use sdtdl::{hooi, DenseTensor, PseudoLabels};

fn sdtdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdtdl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sdtdl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let d = dir.join("data");
    let mut args = vec!["synth", "--out", s(&d)];
    args.extend_from_slice(extra);
    ok(&args);
    d
}

fn fit(data: &Path, out: &Path, extra: &[&str]) -> String {
    let files = ["source.tensor", "source_labels.txt", "target.tensor", "truth.txt"].map(|f| data.join(f));
    let mut args = vec![
        "fit",
        "--source",
        s(&files[0]),
        "--source-labels",
        s(&files[1]),
        "--target",
        s(&files[2]),
        "--truth",
        s(&files[3]),
        "--ranks",
        "3,3",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

fn history(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,objective,n_selected,accuracy"));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .parse()
        .unwrap()
}

#[test]
fn synth_fit_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    fit(&data, &out, &[]);
    let rows = history(&out.join("history.csv"));
    let acc = |r: &Vec<String>| r[3].parse::<f64>().unwrap();
    assert!(acc(rows.last().unwrap()) >= acc(&rows[0]));

    let pred = dir.path().join("again.txt");
    ok(&["predict", "--model", s(&out.join("model.sdtdl")), "--target", s(&data.join("target.tensor")), "--out", s(&pred)]);
    assert_eq!(fs::read(&pred).unwrap(), fs::read(out.join("predictions.txt")).unwrap());

    let report = ok(&["eval", "--predictions", s(&pred), "--truth", s(&data.join("truth.txt"))]);
    assert!(value(&report, "accuracy") >= 0.0);

    // refitting is bitwise reproducible
    let again = dir.path().join("run2");
    fit(&data, &again, &["--seed", "7"]);
    for f in ["model.sdtdl", "predictions.txt", "history.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_iterations_write_only_the_init_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--seed", "4"]);
    let out = dir.path().join("run");
    fit(&data, &out, &["--max-iters", "0"]);
    let rows = history(&out.join("history.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "0");
}

#[test]
fn missing_source_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let missing = dir.path().join("absent.tensor");
    let out = sdtdl(&[
        "fit",
        "--source",
        s(&missing),
        "--source-labels",
        s(&data.join("source_labels.txt")),
        "--target",
        s(&data.join("target.tensor")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.tensor"));
}

#[test]
fn predict_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let run = dir.path().join("run");
    fit(&data, &run, &["--max-iters", "1"]);
    let model = run.join("model.sdtdl");

    let empty = dir.path().join("empty.tensor");
    write_tensor(&empty, &DenseTensor::zeros(vec![8, 8, 0])).unwrap();
    let pred = dir.path().join("p.txt");
    ok(&["predict", "--model", s(&model), "--target", s(&empty), "--out", s(&pred)]);
    assert_eq!(fs::read_to_string(&pred).unwrap(), "index,label,confidence\n");

    let wrong = dir.path().join("wrong.tensor");
    write_tensor(&wrong, &DenseTensor::zeros(vec![8, 7, 3])).unwrap();
    let out = sdtdl(&["predict", "--model", s(&model), "--target", s(&wrong), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
}

fn predictions_file(dir: &Path, labels: &[usize]) -> PathBuf {
    let path = dir.join("pred.txt");
    let n = labels.len();
    let probs = tensor_to_matrix(&DenseTensor::zeros(vec![n, 1])).unwrap();
    let pl = PseudoLabels {
        labels: labels.to_vec(),
        combined_conf: vec![0.5; n],
        fidelity_probs: probs.clone(),
        centroid_probs: probs,
        selected: vec![true; n],
    };
    write_predictions(&path, &pl).unwrap();
    path
}

fn eval(dir: &Path, predicted: &[usize], truth: &[usize]) -> String {
    let pred = predictions_file(dir, predicted);
    let t = dir.join("truth.txt");
    write_labels(&t, truth).unwrap();
    ok(&["eval", "--predictions", s(&pred), "--truth", s(&t)])
}

#[test]
fn eval_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(value(&eval(d, &[1, 2, 2, 1], &[1, 2, 2, 1]), "accuracy"), 1.0);
    assert_eq!(value(&eval(d, &[2, 1, 1, 2], &[1, 2, 2, 1]), "accuracy"), 0.0);
    // class 1: 2 of 3 right, class 2: 1 of 2, class 3: 0 of 1 → 3/6 overall
    let r = eval(d, &[1, 1, 3, 2, 1, 2], &[1, 1, 1, 2, 2, 3]);
    assert_eq!(value(&r, "accuracy"), 0.5);
    assert_eq!(value(&r, "class_1"), 2.0 / 3.0);
    assert_eq!(value(&r, "class_2"), 0.5);
    assert_eq!(value(&r, "class_3"), 0.0);
}

#[test]
fn synth_is_deterministic_and_validated() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = synth(a.path(), &["--seed", "11"]);
    let db = synth(b.path(), &["--seed", "11"]);
    for f in ["source.tensor", "source_labels.txt", "target.tensor", "truth.txt"] {
        assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f}");
    }
    let out = sdtdl(&["synth", "--classes", "20", "--out", s(&a.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decompose_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--source-per-class", "2"]);
    let input = data.join("source.tensor");
    let t = read_tensor(&input).unwrap();

    let full = dir.path().join("full");
    let report = ok(&["decompose", "--input", s(&input), "--ranks", "8,8,6", "--out", s(&full)]);
    assert!(value(&report, "reconstruction_error") <= 1e-10);

    let low = dir.path().join("low");
    ok(&["decompose", "--input", s(&input), "--ranks", "2,3,2", "--out", s(&low)]);
    let text = fs::read_to_string(low.join("fit.csv")).unwrap();
    let fits: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(fits.windows(2).all(|w| w[1] >= w[0] - 1e-10 * w[0]));

    let lib = hooi(&t, &[2, 3, 2], false, 20, 1e-6).unwrap();
    assert_eq!(read_tensor(low.join("core.tensor")).unwrap(), lib.core);
    for (m, f) in lib.factors.iter().enumerate() {
        let got = tensor_to_matrix(&read_tensor(low.join(format!("factor_{m}.tensor"))).unwrap()).unwrap();
        assert_eq!(&got, f.matrix());
    }
    assert_eq!(fits, lib.fit_history);
}

fn baseline(data: &Path) -> f64 {
    value(
        &ok(&[
            "baseline",
            "--source",
            s(&data.join("source.tensor")),
            "--source-labels",
            s(&data.join("source_labels.txt")),
            "--target",
            s(&data.join("target.tensor")),
            "--truth",
            s(&data.join("truth.txt")),
        ]),
        "accuracy",
    )
}

#[test]
fn baseline_cases() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(baseline(&synth(dir.path(), &["--shift", "0", "--noise", "0"])), 1.0);
    let one = tempfile::tempdir().unwrap();
    assert_eq!(baseline(&synth(one.path(), &["--classes", "1"])), 1.0);
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "source = {}\nsource_labels = {}\ntarget = {}\n# weights\ntheta = twenty\n",
            s(&data.join("source.tensor")),
            s(&data.join("source_labels.txt")),
            s(&data.join("target.tensor"))
        ),
    )
    .unwrap();
    let out = sdtdl(&["fit", "--config", s(&conf), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.conf:5"));

    // the flag wins over the bad file value
    let report = ok(&["fit", "--config", s(&conf), "--theta", "20", "--ranks", "3,3", "--max-iters", "0", "--out", s(&dir.path().join("o"))]);
    assert!(report.contains("iterations=0"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.tensor");
    fs::write(&junk, b"NOPE0000").unwrap();
    let out = sdtdl(&["decompose", "--input", s(&junk), "--ranks", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));

    let t = dir.path().join("t.tensor");
    write_tensor(&t, &DenseTensor::zeros(vec![3, 3])).unwrap();
    let out = sdtdl(&["decompose", "--input", s(&t), "--ranks", "4,1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    // a NaN payload is unreadable data
    let nan = dir.path().join("nan.tensor");
    let mut bytes = encode_tensor(&DenseTensor::zeros(vec![2, 2]));
    let at = bytes.len() - 8;
    bytes[at..].copy_from_slice(&f64::NAN.to_le_bytes());
    fs::write(&nan, bytes).unwrap();
    let out = sdtdl(&["decompose", "--input", s(&nan), "--ranks", "1,1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));

    // finite entries whose Gram matrix overflows
    let big = dir.path().join("big.tensor");
    write_tensor(&big, &DenseTensor::new(vec![2, 2], vec![1e200, 2e200, -1e200, 3e200]).unwrap()).unwrap();
    let out = sdtdl(&["decompose", "--input", s(&big), "--ranks", "1,1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}
