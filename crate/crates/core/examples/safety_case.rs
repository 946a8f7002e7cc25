//! The weaning safety argument: bind report files to its solutions, compute
//! goal status and write Graphviz output.

use xai_assure::safetycase::{
    bind_evidence_in, build_weaning_pattern, export_dot, status_in, validate, ArtifactKind, EvidenceArtifact,
};

fn main() -> xai_assure::Result<()> {
    let dir = std::env::temp_dir().join("xai-assure-safety-case-example");
    std::fs::create_dir_all(&dir).map_err(|e| xai_assure::Error::Config(e.to_string()))?;
    let evidence = [
        ("S2", "metrics.json", ArtifactKind::MetricsReport, false),
        ("S3", "influence.json", ArtifactKind::InfluenceReport, false),
        ("S4", "metrics.json", ArtifactKind::MetricsReport, false),
        ("S5", "attribution.json", ArtifactKind::AttributionReport, false),
        ("S6", "counterfactuals.json", ArtifactKind::CfReport, true),
    ];

    let mut g = build_weaning_pattern();
    for f in validate(&g) {
        println!("before binding: {}", f.message);
    }
    for (solution, file, kind, partial) in evidence {
        xai_assure::util::write_bytes(&dir.join(file), format!("{{\"report\": \"{file}\"}}\n").as_bytes())?;
        g = bind_evidence_in(&g, solution, EvidenceArtifact::new(kind, file).partial(partial), &dir)?;
    }

    // The wrong kind of report is refused.
    let wrong = bind_evidence_in(&g, "S4", EvidenceArtifact::new(ArtifactKind::CfReport, "counterfactuals.json"), &dir);
    println!("binding a cf_report to S4: {}", wrong.unwrap_err());

    let status = status_in(&g, &dir)?;
    for (goal, s) in &status.goals {
        println!("{goal:<3} {s}");
    }

    // Editing a bound file makes its binding stale.
    xai_assure::util::write_bytes(&dir.join("attribution.json"), b"{}\n")?;
    let status = status_in(&g, &dir)?;
    for s in &status.stale {
        println!("stale: {} ({})", s.solution, s.path.display());
    }
    println!("G8 is now {}", status.goals["G8"]);

    println!("\n{}", export_dot(&g));
    Ok(())
}
