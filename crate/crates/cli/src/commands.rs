use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sdtdl::baseline::{nearest_centroid, per_class_accuracy};
use sdtdl::io::{
    load_model, read_labels, read_predictions, read_tensor, save_model, write_history, write_labels,
    write_predictions, write_tensor,
};
use sdtdl::pseudo_label::label_targets;
use sdtdl::solver::accuracy;
use sdtdl::synthetic::{generate, SyntheticSpec};
use sdtdl::{fit as fit_model, hooi, LabeledTensorSet};

use crate::config::Settings;
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

struct Inputs {
    source: LabeledTensorSet,
    target: LabeledTensorSet,
    truth: Option<Vec<usize>>,
}

/// Loads source, target and optional truth; the class count is the largest
/// source label.
fn load_inputs(s: &Settings) -> Result<Inputs, CliError> {
    let source_path = s.require_path("source")?;
    let labels_path = s.require_path("source_labels")?;
    let target_path = s.require_path("target")?;
    let samples = read_tensor(&source_path)?;
    let labels = read_labels(&labels_path)?;
    let classes = labels.iter().copied().max().ok_or_else(|| {
        CliError::Config(format!("{}: no source labels", labels_path.display()))
    })?;
    let source = LabeledTensorSet::new(samples, Some(labels), classes)?;
    let target = LabeledTensorSet::unlabeled(read_tensor(&target_path)?, classes)?;
    if target.sample_dims() != source.sample_dims() {
        return Err(CliError::Config(format!(
            "{} has samples of dims {:?} but {} has {:?}",
            target_path.display(),
            target.sample_dims(),
            source_path.display(),
            source.sample_dims()
        )));
    }
    let truth = match s.path("truth") {
        Some(p) => {
            let t = read_labels(&p)?;
            if t.len() != target.len() {
                return Err(CliError::Config(format!(
                    "{}: {} labels for {} target samples",
                    p.display(),
                    t.len(),
                    target.len()
                )));
            }
            Some(t)
        }
        None => None,
    };
    Ok(Inputs { source, target, truth })
}

fn report(predicted: &[usize], truth: &[usize], classes: usize) -> String {
    let mut out = format!("accuracy={}\n", accuracy(predicted, truth));
    for (c, acc) in per_class_accuracy(predicted, truth, classes).iter().enumerate() {
        match acc {
            Some(a) => writeln!(out, "class_{}={}", c + 1, a).unwrap(),
            None => writeln!(out, "class_{}=n/a", c + 1).unwrap(),
        }
    }
    out
}

pub fn fit(s: &Settings) -> Result<(), CliError> {
    let hyper = s.hyperparams()?;
    let _ = s.seed()?;
    let out = s.path("out").unwrap_or_else(|| PathBuf::from("."));
    let inputs = load_inputs(s)?;
    let result = fit_model(&inputs.source, &inputs.target, &hyper, inputs.truth.as_deref())?;
    create_dir(&out)?;
    save_model(out.join("model.sdtdl"), &result.model)?;
    write_predictions(out.join("predictions.txt"), &result.labels)?;
    write_history(out.join("history.csv"), &result.history)?;

    let last = result.history.last().expect("history holds the initialization row");
    println!("iterations={}", last.iter);
    println!("objective={}", last.objective);
    println!("selected={}/{}", last.n_selected, inputs.target.len());
    if let Some(truth) = &inputs.truth {
        print!("{}", report(&result.labels.labels, truth, inputs.source.class_count()));
    }
    println!("output={}", out.display());
    Ok(())
}

pub fn predict(model: &Path, target: &Path, out: &Path) -> Result<(), CliError> {
    let model = load_model(model)?;
    let samples = read_tensor(target)?;
    let target = LabeledTensorSet::unlabeled(samples, model.class_count())?;
    let labels = label_targets(&model, &target)?;
    write_predictions(out, &labels)?;
    println!("predicted={}", labels.len());
    Ok(())
}

pub fn eval(predictions: &Path, truth: &Path) -> Result<(), CliError> {
    let predicted: Vec<usize> = read_predictions(predictions)?.into_iter().map(|(l, _)| l).collect();
    let truth_labels = read_labels(truth)?;
    if predicted.len() != truth_labels.len() {
        return Err(CliError::Config(format!(
            "{} has {} predictions but {} has {} labels",
            predictions.display(),
            predicted.len(),
            truth.display(),
            truth_labels.len()
        )));
    }
    let classes = predicted.iter().chain(&truth_labels).copied().max().unwrap_or(0);
    print!("{}", report(&predicted, &truth_labels, classes));
    Ok(())
}

pub fn synth(spec: &SyntheticSpec, out: &Path) -> Result<(), CliError> {
    let data = generate(spec)?;
    create_dir(out)?;
    write_tensor(out.join("source.tensor"), data.source.samples())?;
    write_labels(out.join("source_labels.txt"), data.source.labels().expect("generated source is labeled"))?;
    write_tensor(out.join("target.tensor"), data.target.samples())?;
    write_labels(out.join("truth.txt"), &data.truth)?;
    println!("source={}", data.source.len());
    println!("target={}", data.target.len());
    println!("output={}", out.display());
    Ok(())
}

pub fn decompose(input: &Path, ranks: &[usize], max_sweeps: usize, tol: f64, out: &Path) -> Result<(), CliError> {
    let t = read_tensor(input)?;
    let res = hooi(&t, ranks, false, max_sweeps, tol)?;
    let error = t.sub(&res.reconstruct()?)?.frobenius_norm();
    let norm = t.frobenius_norm();
    let relative = if norm > 0.0 { error / norm } else { 0.0 };

    create_dir(out)?;
    write_tensor(out.join("core.tensor"), &res.core)?;
    for (m, f) in res.factors.iter().enumerate() {
        write_tensor(out.join(format!("factor_{m}.tensor")), &sdtdl::io::matrix_to_tensor(f.matrix()))?;
    }
    let mut fit_csv = String::from("sweep,fit\n");
    for (k, v) in res.fit_history.iter().enumerate() {
        writeln!(fit_csv, "{k},{v}").unwrap();
    }
    write_text(&out.join("fit.csv"), &fit_csv)?;
    let summary = format!(
        "sweeps={}\nfit={}\nreconstruction_error={error}\nrelative_error={relative}\n",
        res.fit_history.len() - 1,
        res.fit_history.last().unwrap(),
    );
    write_text(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn baseline(s: &Settings) -> Result<(), CliError> {
    let inputs = load_inputs(s)?;
    let truth = inputs
        .truth
        .ok_or_else(|| CliError::Config("baseline needs target ground truth (flag --truth)".into()))?;
    let predicted = nearest_centroid(&inputs.source, &inputs.target)?;
    print!("{}", report(&predicted, &truth, inputs.source.class_count()));
    Ok(())
}
