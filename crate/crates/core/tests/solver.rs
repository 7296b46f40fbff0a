use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sdtdl::baseline::nearest_centroid;
use sdtdl::io::{load_model, save_model};
use sdtdl::pseudo_label::label_targets;
use sdtdl::solver::{
    accuracy, initialize, objective, update_class_dict, update_domain_source, update_domain_target,
    ClassSubproblem, Codes,
};
use sdtdl::synthetic::{generate, SyntheticData, SyntheticSpec};
use sdtdl::tensor::{mode_product, DenseTensor};
use sdtdl::{fit, hooi, Hyperparams, LabeledTensorSet, TensorDictionary};

fn hyper() -> Hyperparams {
    Hyperparams::object_preset().with_ranks(vec![3, 3])
}

fn data(seed: u64) -> SyntheticData {
    generate(&SyntheticSpec { seed, ..Default::default() }).unwrap()
}

fn random_tensor(seed: u64, dims: Vec<usize>) -> DenseTensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    DenseTensor::from_fn(dims, |_| r.sample(StandardNormal))
}

fn projector(d: &TensorDictionary, mode: usize) -> DMatrix<f64> {
    let f = d.factors()[mode].matrix();
    f * f.transpose()
}

/// `⟦codes; U⟧` over the leading modes by repeated mode products.
fn expand(codes: &DenseTensor, dict: &TensorDictionary) -> DenseTensor {
    dict.factors()
        .iter()
        .enumerate()
        .fold(codes.clone(), |t, (m, f)| mode_product(&t, f.matrix(), m).unwrap())
}

fn mean_last(t: &DenseTensor) -> Vec<f64> {
    let n = t.last_extent();
    (0..t.len() / n).map(|k| t.values()[k * n..(k + 1) * n].iter().sum::<f64>() / n as f64).collect()
}

fn scatter(t: &DenseTensor, mu: &[f64]) -> f64 {
    let n = t.last_extent();
    t.values().iter().enumerate().map(|(i, v)| (v - mu[i / n]).powi(2)).sum()
}

#[test]
fn objective_matches_term_by_term_sum() {
    let d = data(21);
    let state = initialize(&d.source, &d.target, &hyper()).unwrap();
    let (m, c) = (&state.model, &state.codes);
    let xs = d.source.class_tensors().unwrap();
    let ys = state.target_selected.class_tensors().unwrap();
    let mut oracle = 0.0;
    for k in 0..3 {
        let xr = xs[k].sub(&expand(&c.source_domain[k], &m.u_source)).unwrap();
        let xr = xr.sub(&expand(&c.source_class[k], &m.w_class[k])).unwrap();
        oracle += xr.frobenius_norm_sq();
        if ys[k].last_extent() > 0 {
            let yr = ys[k].sub(&expand(&c.target_domain[k], &m.u_target)).unwrap();
            let yr = yr.sub(&expand(&c.target_class[k], &m.w_class[k])).unwrap();
            oracle += m.hyper.theta * yr.frobenius_norm_sq();
            let (ma, mb) = (mean_last(&c.source_class[k]), mean_last(&c.target_class[k]));
            oracle += m.hyper.lambda * (scatter(&c.source_class[k], &mb) + scatter(&c.target_class[k], &ma));
        }
    }
    let got = objective(m, &d.source, &state.target_selected, c).unwrap();
    assert!((got - oracle).abs() <= 1e-9 * oracle, "{got} vs {oracle}");
}

#[test]
fn zero_codes_leave_only_the_data_norms() {
    let d = data(22);
    let state = initialize(&d.source, &d.target, &hyper()).unwrap();
    let zero_like = |v: &[DenseTensor]| v.iter().map(|t| DenseTensor::zeros(t.dims().to_vec())).collect::<Vec<_>>();
    let codes = Codes {
        source_domain: zero_like(&state.codes.source_domain),
        source_class: zero_like(&state.codes.source_class),
        target_domain: zero_like(&state.codes.target_domain),
        target_class: zero_like(&state.codes.target_class),
    };
    let got = objective(&state.model, &d.source, &state.target_selected, &codes).unwrap();
    let want = d.source.samples().frobenius_norm_sq()
        + state.model.hyper.theta * state.target_selected.samples().frobenius_norm_sq();
    assert!((got - want).abs() <= 1e-9 * want);
}

#[test]
fn identity_phi_update_is_plain_hooi() {
    let x = random_tensor(1, vec![5, 4, 6]);
    let y = random_tensor(2, vec![5, 4, 3]);
    let sub = ClassSubproblem::new(x, y, 1.0, 0.0).unwrap();
    assert_eq!(sub.phi, DMatrix::identity(9, 9));
    let (w, _, _) = update_class_dict(&sub, &[2, 3], 20, 1e-6).unwrap();
    let reference = hooi(&sub.z_tilde().unwrap(), &[2, 3], true, 20, 1e-6).unwrap().dictionary();
    for m in 0..2 {
        assert!((projector(&w, m) - projector(&reference, m)).amax() <= 1e-8);
    }
}

#[test]
fn full_rank_class_dictionary_fits_exactly() {
    let x = random_tensor(3, vec![3, 2, 4]);
    let y = random_tensor(4, vec![3, 2, 2]);
    let sub = ClassSubproblem::new(x.clone(), y.clone(), 4.0, 0.3).unwrap();
    let (w, a, b) = update_class_dict(&sub, &[3, 2], 20, 1e-6).unwrap();
    assert!(x.sub(&expand(&a, &w)).unwrap().frobenius_norm() <= 1e-10);
    assert!(y.sub(&expand(&b, &w)).unwrap().frobenius_norm() <= 1e-10);
}

#[test]
fn each_domain_update_does_not_raise_the_objective() {
    for seed in 0..5 {
        let d = data(30 + seed);
        let mut state = initialize(&d.source, &d.target, &hyper()).unwrap();
        let before = objective(&state.model, &d.source, &state.target_selected, &state.codes).unwrap();
        let (u, a0) = update_domain_source(&d.source, &state.model, &state.codes).unwrap();
        state.model.u_source = u;
        state.codes.source_domain = a0;
        let mid = objective(&state.model, &d.source, &state.target_selected, &state.codes).unwrap();
        let (u, b0) = update_domain_target(&state.target_selected, &state.model, &state.codes).unwrap();
        state.model.u_target = u;
        state.codes.target_domain = b0;
        let after = objective(&state.model, &d.source, &state.target_selected, &state.codes).unwrap();
        assert!(mid <= before * (1.0 + 1e-8), "seed {seed}: {before} -> {mid}");
        assert!(after <= mid * (1.0 + 1e-8), "seed {seed}: {mid} -> {after}");
    }
}

#[test]
fn no_domain_shift_is_classified_perfectly() {
    let d = generate(&SyntheticSpec { shift: 0.0, noise: 0.0, seed: 5, ..Default::default() }).unwrap();
    let out = fit(&d.source, &d.target, &hyper(), Some(&d.truth)).unwrap();
    assert_eq!(accuracy(&out.labels.labels, &d.truth), 1.0);
    assert_eq!(accuracy(&nearest_centroid(&d.source, &d.target).unwrap(), &d.truth), 1.0);
}

#[test]
fn zero_outer_iterations_keep_initial_predictions() {
    let d = data(7);
    let h = Hyperparams { max_outer_iters: 0, ..hyper() };
    let out = fit(&d.source, &d.target, &h, Some(&d.truth)).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.history[0].iter, 0);
    let init = initialize(&d.source, &d.target, &h).unwrap();
    assert_eq!(out.labels.labels, init.pseudo.labels);
    assert!(!out.model.use_target_dictionary);
}

#[test]
fn fitted_dictionaries_stay_orthonormal() {
    let d = data(8);
    let out = fit(&d.source, &d.target, &hyper(), None).unwrap();
    assert!(out.model.max_orthonormality_error() <= 1e-8);
    assert!(out.history.iter().all(|r| r.accuracy.is_none()));
    assert!(out.history.iter().all(|r| r.n_selected == 72));
}

#[test]
fn saved_model_reproduces_fit_predictions() {
    let d = data(9);
    let out = fit(&d.source, &d.target, &hyper(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.sdtdl");
    save_model(&path, &out.model).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, out.model);
    let again = label_targets(&loaded, &d.target).unwrap();
    assert_eq!(again.labels, out.labels.labels);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&again.combined_conf), bits(&out.labels.combined_conf));
}

#[test]
fn single_source_sample_per_class_runs() {
    let d = generate(&SyntheticSpec { source_per_class: 1, seed: 3, ..Default::default() }).unwrap();
    let out = fit(&d.source, &d.target, &hyper(), Some(&d.truth)).unwrap();
    assert!(out.history.iter().all(|r| r.objective.is_finite()));
}

#[test]
fn input_validation() {
    let d = data(10);
    let unlabeled = LabeledTensorSet::unlabeled(d.source.samples().clone(), 3).unwrap();
    assert!(fit(&unlabeled, &d.target, &hyper(), None).is_err());
    assert!(fit(&d.source, &d.target, &hyper().with_ranks(vec![9, 3]), None).is_err());
    assert!(fit(&d.source, &d.target, &hyper(), Some(&[1, 2])).is_err());
    let other = LabeledTensorSet::unlabeled(DenseTensor::zeros(vec![4, 4, 5]), 3).unwrap();
    assert!(fit(&d.source, &other, &hyper(), None).is_err());
}
