//! Analytic gradients and Hessian-vector products checked against finite
//! differences and the dense Hessian.

use xai_assure::data::{default_weaning_schema, generate_cohort, CohortConfig};
use xai_assure::grad::{self, fd, exact_hessian, hvp, HessianOperator, OutputTarget};
use xai_assure::model::{train, ModelArchitecture, TrainingConfig};
use xai_assure::util::max_relative_error;

fn main() -> xai_assure::Result<()> {
    let ds = generate_cohort(&CohortConfig::default(), &default_weaning_schema())?;
    let x = ds.train().next().unwrap();
    let width = xai_assure::model::InputEncoder::fit(&ds)?.width;
    let cfg = TrainingConfig {
        epochs: 20,
        ..TrainingConfig::default()
    };
    for arch in [
        ModelArchitecture::logreg(width),
        ModelArchitecture::default_mlp(width),
        ModelArchitecture::default_conv1d(width),
    ] {
        let m = train(&ds, &arch, &cfg)?;
        let enc = m.encode(x)?;
        let analytic = grad::param_gradient_encoded(&m, &enc, x.label);
        let numeric = fd::param_gradient(&m, &enc, x.label, fd::FD_STEP);
        let input = grad::input_gradient_encoded(&m, &enc, OutputTarget::Probability);
        let input_fd = fd::input_gradient(&m, &enc, OutputTarget::Probability, fd::FD_STEP);
        println!(
            "{:<7} params {:>4}  dL/dtheta rel.err {:.2e}  dp/dx rel.err {:.2e}",
            arch.name(),
            m.parameter_count(),
            max_relative_error(&analytic, &numeric),
            max_relative_error(&input, &input_fd)
        );

        let op = HessianOperator::new(&m, &ds, 0.0)?;
        let v: Vec<f64> = (0..m.parameter_count()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let h = exact_hessian(&m, &ds)?;
        let dense = h * nalgebra::DVector::from_vec(v.clone());
        println!(
            "        HVP vs dense Hessian rel.err {:.2e}",
            max_relative_error(&hvp(&op, &v)?, dense.as_slice())
        );
    }
    Ok(())
}
