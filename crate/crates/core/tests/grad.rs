mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use xai_assure::data::Instance;
use xai_assure::grad::{
    self, exact_hessian, exact_hessian_with_limit, fd, hvp, HessianMethod, HessianOperator, OutputTarget,
};
use xai_assure::model::{train, Activation, ModelArchitecture, TrainedModel, TrainingConfig};
use xai_assure::util::{dot, max_relative_error};
use xai_assure::Error;

#[test]
fn logreg_parameter_gradient_closed_form() {
    let ds = common::grid_dataset(2);
    let m = common::linear(&ds, &[0.4, -0.9], 0.3, 0.05);
    for (v, y) in [([1.0, 2.0], 1u8), ([-3.0, 0.0], 0), ([2.0, -1.0], 1)] {
        let x = Instance::complete("q", "q", v.to_vec(), y);
        let xt = [v[0] / 2.0, v[1] / 2.0, 1.0];
        let p = common::sigmoid(0.4 * xt[0] - 0.9 * xt[1] + 0.3);
        let theta = [0.4, -0.9, 0.3];
        let expected: Vec<f64> = (0..3).map(|k| (p - f64::from(y)) * xt[k] + 0.05 * theta[k]).collect();
        let g = grad::param_gradient(&m, &x).unwrap();
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "{g:?} vs {expected:?}");
        }
    }
}

#[test]
fn perfect_prediction_has_zero_gradient() {
    // Clamped region: p rounds to the label.
    let ds = common::grid_dataset(1);
    let m = common::linear(&ds, &[200.0], 0.0, 0.0);
    let x = Instance::complete("q", "q", vec![3.0], 1);
    assert!(grad::param_gradient(&m, &x).unwrap().iter().all(|&g| g == 0.0));
}

#[test]
fn input_gradient_closed_forms() {
    let ds = common::grid_dataset(3);
    let w = [0.5, -1.5, 2.0];
    let m = common::linear(&ds, &w, -0.2, 0.0);
    for v in [[0.0, 0.0, 0.0], [3.0, -2.0, 1.0], [-1.0, 1.0, -3.0]] {
        let x = Instance::complete("q", "q", v.to_vec(), 0);
        let g = grad::input_gradient(&m, &x, OutputTarget::Logit).unwrap();
        assert_eq!(g.encoded, w.to_vec());
        let p = m.predict_proba(&x).unwrap();
        let gp = grad::input_gradient(&m, &x, OutputTarget::Probability).unwrap();
        for (a, wk) in gp.encoded.iter().zip(&w) {
            assert!((a - p * (1.0 - p) * wk).abs() < 1e-10);
        }
    }
}

fn is_smooth(m: &TrainedModel) -> bool {
    m.layers().iter().all(|l| l.activation() != Some(Activation::Relu))
}

// Central differences at h = 1e-4 straddle a ReLU kink now and then; the
// oracle is then repeated at a step too small to reach the kink.
const KINK_STEP: f64 = 1e-6;

#[test]
fn finite_difference_battery() {
    let mut worst = 0.0f64;
    let mut kink_retries = 0;
    for seed in 0..20u64 {
        let ds = common::cohort(8, seed);
        let zoo = common::zoo(&ds, seed);
        let x = &ds.instances[(seed as usize * 7) % ds.len()];
        for m in &zoo {
            let enc = m.encode(x).unwrap();
            let analytic = grad::param_gradient_encoded(m, &enc, x.label);
            let numeric = fd::param_gradient(m, &enc, x.label, fd::FD_STEP);
            let mut e1 = max_relative_error(&analytic, &numeric);
            if e1 > 1e-4 && !is_smooth(m) {
                kink_retries += 1;
                e1 = max_relative_error(&analytic, &fd::param_gradient(m, &enc, x.label, KINK_STEP));
            }
            for of in [OutputTarget::Logit, OutputTarget::Probability] {
                let a = grad::input_gradient_encoded(m, &enc, of);
                let n = fd::input_gradient(m, &enc, of, fd::FD_STEP);
                let mut e2 = max_relative_error(&a, &n);
                if e2 > 1e-4 && !is_smooth(m) {
                    kink_retries += 1;
                    e2 = max_relative_error(&a, &fd::input_gradient(m, &enc, of, KINK_STEP));
                }
                assert!(e2 <= 1e-4, "seed {seed} {} input {of:?}: {e2:e}", m.architecture.name());
                worst = worst.max(e2);
            }
            assert!(e1 <= 1e-4, "seed {seed} {} params: {e1:e}", m.architecture.name());
            worst = worst.max(e1);
        }
    }
    eprintln!("worst finite-difference relative error {worst:e}, kink retries {kink_retries}");
    assert!(kink_retries <= 4, "{kink_retries} retries out of 240 checks");
}

#[test]
fn hvp_examples() {
    let ds = common::cohort(10, 2);
    for m in common::zoo(&ds, 2) {
        let op = HessianOperator::new(&m, &ds, 0.01).unwrap();
        let zero = vec![0.0; op.dimension()];
        assert!(hvp(&op, &zero).unwrap().iter().all(|&x| x == 0.0));
        assert!(hvp(&op, &[1.0]).is_err());
    }

    // Saturated predictions and no regularizer: H = 0.
    let schema = common::toy_schema(&["a"]);
    let flat = common::toy_dataset(&schema, vec![(vec![-2.0], 0), (vec![-1.0], 0), (vec![1.0], 1), (vec![2.0], 1)]);
    let m = common::linear(&flat, &[1000.0], 0.0, 0.0);
    let op = HessianOperator::new(&m, &flat, 1.0).unwrap();
    assert_eq!(hvp(&op, &[0.3, -1.7]).unwrap(), vec![0.3, -1.7]);
}

#[test]
fn hvp_matches_dense_hessian() {
    // logreg, n = 50, d = 10.
    let names: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = common::toy_schema(&refs);
    let rows = (0..50)
        .map(|i| {
            let v: Vec<f64> = (0..10).map(|j| (((i * 13 + j * 7) % 17) as f64 - 8.0) / 3.0).collect();
            let y = u8::from((i * 5 + 1) % 3 == 0);
            (v, y)
        })
        .collect();
    let ds = common::toy_dataset(&schema, rows);
    let m = train(&ds, &ModelArchitecture::logreg(10), &TrainingConfig::newton(1e-2, 1)).unwrap();
    check_hvp_against_dense(&m, &ds);

    let cohort = common::cohort(10, 5);
    for m in common::zoo(&cohort, 5) {
        check_hvp_against_dense(&m, &cohort);
    }
}

fn check_hvp_against_dense(m: &TrainedModel, ds: &xai_assure::data::Dataset) {
    let h = exact_hessian(m, ds).unwrap();
    let p = m.parameter_count();
    let v: Vec<f64> = (0..p).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
    let dense = (&h * DVector::from_vec(v.clone())).as_slice().to_vec();
    // Differencing the gradient is only valid where it is smooth.
    let methods: &[HessianMethod] = if is_smooth(m) {
        &[HessianMethod::Exact, HessianMethod::FiniteDifference]
    } else {
        &[HessianMethod::Exact]
    };
    for &method in methods {
        let op = HessianOperator::new(m, ds, 0.0).unwrap().with_method(method);
        let err = max_relative_error(&hvp(&op, &v).unwrap(), &dense);
        assert!(err <= 1e-4, "{} {method:?}: {err:e}", m.architecture.name());
    }
}

#[test]
fn logreg_hessian_closed_form_symmetric_and_positive() {
    let ds = common::cohort(20, 3);
    let width = m_width(&ds);
    let m = train(&ds, &ModelArchitecture::logreg(width), &TrainingConfig::newton(1e-3, 1)).unwrap();
    let h = exact_hessian(&m, &ds).unwrap();
    let p = width + 1;
    let mut expected = DMatrix::<f64>::identity(p, p) * 1e-3;
    let train_rows: Vec<&Instance> = ds.train().collect();
    for inst in &train_rows {
        let mut x = m.encode(inst).unwrap();
        x.push(1.0);
        let pr = m.predict_proba(inst).unwrap();
        let xv = DVector::from_vec(x);
        expected += (&xv * xv.transpose()) * (pr * (1.0 - pr) / train_rows.len() as f64);
    }
    assert!((&h - &expected).abs().max() < 1e-10);
    assert!((&h - h.transpose()).abs().max() <= 1e-10);
    let min_eig = h.symmetric_eigen().eigenvalues.min();
    assert!(min_eig > 0.0, "min eigenvalue {min_eig}");
}

fn m_width(ds: &xai_assure::data::Dataset) -> usize {
    xai_assure::model::InputEncoder::fit(ds).unwrap().width
}

#[test]
fn hessian_guard() {
    let ds = common::cohort(5, 1);
    let m = &common::zoo(&ds, 1)[1];
    match exact_hessian_with_limit(m, &ds, 10) {
        Err(Error::HessianGuard { count, limit }) => {
            assert_eq!(count, m.parameter_count());
            assert_eq!(limit, 10);
        }
        other => panic!("expected guard error, got {other:?}"),
    }
}

#[test]
fn folded_gradients_sum_one_hot_components() {
    let ds = common::cohort(10, 9);
    for m in common::zoo(&ds, 9) {
        for inst in ds.instances.iter().take(5) {
            let g = grad::input_gradient(&m, inst, OutputTarget::Probability).unwrap();
            assert_eq!(g.folded.len(), 25);
            for (j, f) in m.encoder.features.iter().enumerate() {
                let mut acc = 0.0;
                for v in &g.encoded[f.offset..f.offset + f.width] {
                    acc += *v;
                }
                assert_eq!(acc.to_bits(), g.folded[j].to_bits());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_is_linear_and_symmetric(
        seed in 0u64..1000,
        arch in 0usize..4,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        method_fd in any::<bool>(),
    ) {
        let ds = common::cohort(6, seed);
        let m = &common::zoo(&ds, seed)[arch];
        let method = if method_fd && is_smooth(m) { HessianMethod::FiniteDifference } else { HessianMethod::Exact };
        let op = HessianOperator::new(m, &ds, 0.01).unwrap().with_method(method);
        let p = op.dimension();
        let u: Vec<f64> = (0..p).map(|i| ((i as u64 * 31 + seed) % 13) as f64 / 6.0 - 1.0).collect();
        let v: Vec<f64> = (0..p).map(|i| ((i as u64 * 17 + seed * 3) % 11) as f64 / 5.0 - 1.0).collect();
        let hu = hvp(&op, &u).unwrap();
        let hv = hvp(&op, &v).unwrap();
        if method == HessianMethod::Exact {
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = hvp(&op, &mix).unwrap();
            let rhs: Vec<f64> = hu.iter().zip(&hv).map(|(x, y)| a * x + b * y).collect();
            prop_assert!(max_relative_error(&lhs, &rhs) <= 1e-8);
            let (uv, vu) = (dot(&u, &hv), dot(&v, &hu));
            prop_assert!((uv - vu).abs() <= 1e-8 * uv.abs().max(vu.abs()).max(1e-12));
        } else {
            let (uv, vu) = (dot(&u, &hv), dot(&v, &hu));
            prop_assert!((uv - vu).abs() <= 1e-4 * uv.abs().max(vu.abs()).max(1e-12));
        }
    }
}
