//! Safety arguments in Goal Structuring Notation, bound to generated evidence.

mod graph;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use graph::{
    bind_evidence, bind_evidence_in, export_dot, export_json, import_json, stale_evidence, structural_findings, validate,
    verify_evidence, ArtifactKind, EdgeKind, EvidenceArtifact, FindingKind, GsnEdge, GsnGraph, GsnNode, NodeKind,
    ValidationFinding, GSN_FORMAT_VERSION, NEEDS_DEVELOPMENT_TAG, XAI_TAG,
};

/// Ordered weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalStatus {
    Unsupported,
    Undeveloped,
    PartiallySupported,
    Supported,
}

impl GoalStatus {
    pub fn name(self) -> &'static str {
        match self {
            GoalStatus::Unsupported => "unsupported",
            GoalStatus::Undeveloped => "undeveloped",
            GoalStatus::PartiallySupported => "partially_supported",
            GoalStatus::Supported => "supported",
        }
    }
}

impl std::fmt::Display for GoalStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaleBinding {
    pub solution: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssuranceStatus {
    pub goals: BTreeMap<String, GoalStatus>,
    pub solutions: BTreeMap<String, GoalStatus>,
    pub stale: Vec<StaleBinding>,
}

impl AssuranceStatus {
    pub fn goal(&self, id: &str) -> Option<GoalStatus> {
        self.goals.get(id).copied()
    }
}

fn goal(id: &str, statement: &str) -> GsnNode {
    GsnNode::new(id, NodeKind::Goal, statement)
}

fn solution(id: &str, statement: &str, kinds: &[ArtifactKind], xai: bool) -> GsnNode {
    let mut n = GsnNode::new(id, NodeKind::Solution, statement);
    n.expected_kinds = kinds.to_vec();
    if xai {
        n.tags.push(XAI_TAG.to_string());
    }
    n
}

fn edge(from: &str, to: &str, kind: EdgeKind) -> GsnEdge {
    GsnEdge {
        from: from.into(),
        to: to.into(),
        kind,
    }
}

/// The weaning-model argument. Data management (G1) and analytical
/// validation (G5) are left undeveloped.
pub fn build_weaning_pattern() -> GsnGraph {
    use ArtifactKind::*;
    let mut g1 = goal("G1", "Data management activities produce data fit for the weaning model");
    g1.undeveloped = true;
    let mut g3 = goal("G3", "The learnt model reflects the safety requirement");
    g3.tags.push(NEEDS_DEVELOPMENT_TAG.to_string());
    let mut g5 = goal("G5", "Analytical and technical validation of the model is complete");
    g5.undeveloped = true;
    let nodes = vec![
        goal("G0", "The weaning ML model satisfies its safety requirement"),
        GsnNode::new("C0", NodeKind::Context, "Definition of the ML model used to predict extubation readiness"),
        GsnNode::new("C1", NodeKind::Context, "Safety requirement: readiness for extubation is predicted in a timely way"),
        GsnNode::new("St0", NodeKind::Strategy, "Argue over each stage of the model development process"),
        g1,
        goal("G2", "The choice of model takes explainability into account"),
        g3,
        goal("G4", "Verification and validation show the safety requirements are met"),
        g5,
        goal("G6", "Predictive performance has been demonstrated"),
        goal("G7", "The model has been clinically validated"),
        goal("G8", "A valid clinical association has been demonstrated"),
        goal("G9", "Robustness of the model has been demonstrated"),
        solution("S2", "Performance comparison across candidate models", &[MetricsReport], false),
        solution("S3", "Training-data influence analysis", &[InfluenceReport], true),
        solution("S4", "Test-set performance results", &[MetricsReport], false),
        solution("S5", "Feature importance analysis", &[AttributionReport], true),
        solution("S6", "Counterfactual explanations", &[CfReport, RobustnessReport], true),
    ];
    use EdgeKind::{InContextOf as C, SupportedBy as S};
    let edges = vec![
        edge("G0", "C0", C),
        edge("G0", "C1", C),
        edge("G0", "St0", S),
        edge("St0", "G1", S),
        edge("St0", "G2", S),
        edge("St0", "G3", S),
        edge("St0", "G4", S),
        edge("G2", "S2", S),
        edge("G3", "S3", S),
        edge("G4", "G5", S),
        edge("G4", "G6", S),
        edge("G4", "G7", S),
        edge("G6", "S4", S),
        edge("G7", "G8", S),
        edge("G7", "G9", S),
        edge("G8", "S5", S),
        edge("G9", "S6", S),
    ];
    GsnGraph {
        format_version: GSN_FORMAT_VERSION,
        root: "G0".into(),
        nodes,
        edges,
    }
}

/// Status with relative evidence paths resolved under the working directory.
pub fn status(g: &GsnGraph) -> Result<AssuranceStatus> {
    status_in(g, Path::new("."))
}

/// Goal statuses under the weakest-child rule, strategies being transparent.
/// A stale artifact counts as absent.
pub fn status_in(g: &GsnGraph, base: &Path) -> Result<AssuranceStatus> {
    let structural = structural_findings(g);
    if let Some(f) = structural.first() {
        return Err(Error::Structure(format!(
            "{} structural finding(s), first: {}",
            structural.len(),
            f.message
        )));
    }
    let stale: Vec<StaleBinding> = stale_evidence(g, base)
        .into_iter()
        .map(|(solution, path)| StaleBinding { solution, path })
        .collect();
    let mut solutions = BTreeMap::new();
    for n in g.nodes.iter().filter(|n| n.kind == NodeKind::Solution) {
        let fresh: Vec<&EvidenceArtifact> = n
            .evidence
            .iter()
            .filter(|e| !stale.iter().any(|s| s.solution == n.id && s.path == e.path))
            .collect();
        let s = if fresh.iter().any(|e| !e.partial) {
            GoalStatus::Supported
        } else if !fresh.is_empty() {
            GoalStatus::PartiallySupported
        } else {
            GoalStatus::Unsupported
        };
        solutions.insert(n.id.clone(), s);
    }
    let mut goals = BTreeMap::new();
    for n in g.goals() {
        let s = node_status(g, &n.id, &solutions);
        goals.insert(n.id.clone(), s);
    }
    Ok(AssuranceStatus { goals, solutions, stale })
}

fn node_status(g: &GsnGraph, id: &str, solutions: &BTreeMap<String, GoalStatus>) -> GoalStatus {
    if let Some(s) = solutions.get(id) {
        return *s;
    }
    let node = g.node(id).expect("validated graph");
    let children = g.supporters(id);
    let weakest = children.iter().map(|c| node_status(g, c, solutions)).min();
    match (node.undeveloped, weakest) {
        (true, Some(w)) => w.min(GoalStatus::Undeveloped),
        (true, None) => GoalStatus::Undeveloped,
        (false, Some(w)) => w,
        (false, None) => GoalStatus::Unsupported,
    }
}
