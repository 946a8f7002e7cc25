//! The four attribution methods on one record, with completeness checks.

use xai_assure::attribution::{
    attribute, exact_shapley, local_importance, AttributionMethod, AttributionOptions, Baseline,
};
use xai_assure::data::{default_weaning_schema, generate_cohort, CohortConfig};
use xai_assure::model::{train, ModelArchitecture, TrainingConfig};

fn main() -> xai_assure::Result<()> {
    let ds = generate_cohort(&CohortConfig::default(), &default_weaning_schema())?;
    let width = xai_assure::model::InputEncoder::fit(&ds)?.width;
    let m = train(&ds, &ModelArchitecture::default_mlp(width), &TrainingConfig::default())?;
    let x = ds.test().next().unwrap();
    let baseline = Baseline::training_median(&m);
    let options = AttributionOptions::default();

    for method in [
        AttributionMethod::GradientXInput,
        AttributionMethod::IntegratedGradients,
        AttributionMethod::Deeplift,
    ] {
        let a = attribute(&m, x, method, &baseline, &options)?;
        let sum: f64 = a.scores.iter().sum();
        println!(
            "{:<22} sum {:+.6}  f(x)-f(b) {:+.6}  residual {}",
            method.name(),
            sum,
            a.output - a.baseline_output,
            a.residual.map_or("-".into(), |r| format!("{r:.1e}"))
        );
    }

    let local = local_importance(&m, x, "ig", &baseline, &options)?;
    println!("\n{} p(remain intubated) = {:.3}", x.id, local.prediction);
    let mut top = local.contributions.clone();
    top.sort_by(|a, b| b.score.abs().total_cmp(&a.score.abs()));
    for c in top.iter().take(6) {
        println!("  {:<32} {:+.4}  {}", c.feature, c.score, c.gloss);
    }

    // Exact Shapley enumerates coalitions, so it runs on a narrower model.
    let names = ["PEEP set", "Inspired O2 Fraction", "Heart Rate", "SpO2", "Richmond-RAS Scale"];
    let small = ds.project(&names)?;
    let w = xai_assure::model::InputEncoder::fit(&small)?.width;
    let ms = train(&small, &ModelArchitecture::default_mlp(w), &TrainingConfig::default())?;
    let xs = small.test().next().unwrap();
    let phi = exact_shapley(&ms, xs, &Baseline::training_median(&ms), 15)?;
    println!("\nShapley on {} features:", names.len());
    for (f, s) in phi.features.iter().zip(&phi.scores) {
        println!("  {f:<22} {s:+.5}");
    }
    println!("  efficiency residual {:.1e}", phi.residual.unwrap_or(0.0));
    Ok(())
}
