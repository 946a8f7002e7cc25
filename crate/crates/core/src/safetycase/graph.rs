//! GSN graph types, evidence binding, validation and export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const GSN_FORMAT_VERSION: u32 = 1;
pub const XAI_TAG: &str = "explainable-AI evidence";
pub const NEEDS_DEVELOPMENT_TAG: &str = "needs further development";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Goal,
    Strategy,
    Solution,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    SupportedBy,
    InContextOf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    QualityReport,
    MetricsReport,
    InfluenceReport,
    AttributionReport,
    CfReport,
    RobustnessReport,
    Freeform,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvidenceArtifact {
    pub kind: ArtifactKind,
    /// Resolved against the base directory given to binding and status.
    pub path: PathBuf,
    pub content_hash: String,
    pub model_hash: Option<String>,
    pub created_at: Option<String>,
    pub partial: bool,
}

impl EvidenceArtifact {
    /// An artifact whose hash is filled in at bind time.
    pub fn new(kind: ArtifactKind, path: impl Into<PathBuf>) -> Self {
        EvidenceArtifact {
            kind,
            path: path.into(),
            content_hash: String::new(),
            model_hash: None,
            created_at: None,
            partial: false,
        }
    }

    pub fn partial(mut self, partial: bool) -> Self {
        self.partial = partial;
        self
    }

    pub fn with_model_hash(mut self, hash: impl Into<String>) -> Self {
        self.model_hash = Some(hash.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GsnNode {
    pub id: String,
    pub kind: NodeKind,
    pub statement: String,
    #[serde(default)]
    pub undeveloped: bool,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Artifact kinds a solution accepts; empty accepts any.
    #[serde(default)]
    pub expected_kinds: Vec<ArtifactKind>,
    #[serde(default)]
    pub evidence: Vec<EvidenceArtifact>,
}

impl GsnNode {
    pub fn new(id: &str, kind: NodeKind, statement: &str) -> Self {
        GsnNode {
            id: id.to_string(),
            kind,
            statement: statement.to_string(),
            undeveloped: false,
            tags: Vec::new(),
            expected_kinds: Vec::new(),
            evidence: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GsnEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GsnGraph {
    pub format_version: u32,
    pub root: String,
    pub nodes: Vec<GsnNode>,
    pub edges: Vec<GsnEdge>,
}

impl GsnGraph {
    pub fn node(&self, id: &str) -> Option<&GsnNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn node_mut(&mut self, id: &str) -> Option<&mut GsnNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn goals(&self) -> impl Iterator<Item = &GsnNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Goal)
    }

    /// Targets of `supported_by` edges out of `id`, in edge order.
    pub fn supporters(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::SupportedBy && e.from == id)
            .map(|e| e.to.as_str())
            .collect()
    }

    pub fn contexts_of(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::InContextOf && e.from == id)
            .map(|e| e.to.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let g: GsnGraph = serde_json::from_slice(bytes)?;
        if g.format_version != GSN_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "GSN format version {} is not supported",
                g.format_version
            )));
        }
        Ok(g)
    }
}

pub fn export_json(g: &GsnGraph) -> Result<Vec<u8>> {
    g.to_json()
}

pub fn import_json(bytes: &[u8]) -> Result<GsnGraph> {
    GsnGraph::from_json(bytes)
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Attaches evidence to a solution, hashing the file under `base`. Returns
/// the updated graph.
pub fn bind_evidence_in(g: &GsnGraph, solution_id: &str, artifact: EvidenceArtifact, base: &Path) -> Result<GsnGraph> {
    let node = g
        .node(solution_id)
        .ok_or_else(|| Error::UnknownId(solution_id.to_string()))?;
    if node.kind != NodeKind::Solution {
        return Err(Error::Binding(format!("`{solution_id}` is a {:?}, not a solution", node.kind)));
    }
    if artifact.kind != ArtifactKind::Freeform
        && !node.expected_kinds.is_empty()
        && !node.expected_kinds.contains(&artifact.kind)
    {
        return Err(Error::Binding(format!(
            "`{solution_id}` expects {:?}, got {:?}",
            node.expected_kinds, artifact.kind
        )));
    }
    let bytes = util::read_bytes(&resolve(base, &artifact.path))?;
    let mut artifact = artifact;
    artifact.content_hash = util::sha256_hex(&bytes);
    let mut out = g.clone();
    let node = out.node_mut(solution_id).expect("checked above");
    // Rebinding the same path replaces the earlier record.
    node.evidence.retain(|e| e.path != artifact.path);
    node.evidence.push(artifact);
    Ok(out)
}

pub fn bind_evidence(g: &GsnGraph, solution_id: &str, artifact: EvidenceArtifact) -> Result<GsnGraph> {
    bind_evidence_in(g, solution_id, artifact, Path::new("."))
}

/// Bound artifacts whose file is missing or no longer matches its hash.
pub fn stale_evidence(g: &GsnGraph, base: &Path) -> Vec<(String, PathBuf)> {
    let mut out = Vec::new();
    for n in &g.nodes {
        for e in &n.evidence {
            if !is_fresh(e, base) {
                out.push((n.id.clone(), e.path.clone()));
            }
        }
    }
    out
}

fn is_fresh(e: &EvidenceArtifact, base: &Path) -> bool {
    util::read_bytes(&resolve(base, &e.path)).is_ok_and(|b| util::sha256_hex(&b) == e.content_hash)
}

/// Errors on the first stale binding.
pub fn verify_evidence(g: &GsnGraph, base: &Path) -> Result<()> {
    match stale_evidence(g, base).into_iter().next() {
        Some((solution, path)) => Err(Error::StaleEvidence { solution, path }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DuplicateId,
    EmptyStatement,
    DanglingEdge,
    IllegalEdge,
    NoRoot,
    MultipleRoots,
    Cycle,
    Orphan,
    MisplacedUndeveloped,
    SolutionLacksEvidence,
}

impl FindingKind {
    /// Everything but missing evidence breaks the argument's structure.
    pub fn is_structural(self) -> bool {
        self != FindingKind::SolutionLacksEvidence
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationFinding {
    pub kind: FindingKind,
    pub structural: bool,
    pub nodes: Vec<String>,
    pub message: String,
}

fn finding(kind: FindingKind, nodes: Vec<String>, message: String) -> ValidationFinding {
    ValidationFinding {
        kind,
        structural: kind.is_structural(),
        nodes,
        message,
    }
}

fn edge_legal(kind: EdgeKind, from: NodeKind, to: NodeKind) -> bool {
    use NodeKind::*;
    match kind {
        EdgeKind::SupportedBy => matches!((from, to), (Goal, Goal | Strategy | Solution) | (Strategy, Goal)),
        EdgeKind::InContextOf => matches!((from, to), (Goal | Strategy, Context)),
    }
}

/// Checks notation rules; problems are findings, never errors.
pub fn validate(g: &GsnGraph) -> Vec<ValidationFinding> {
    let mut out = Vec::new();
    let mut kinds: BTreeMap<&str, NodeKind> = BTreeMap::new();
    for n in &g.nodes {
        if kinds.insert(&n.id, n.kind).is_some() {
            out.push(finding(FindingKind::DuplicateId, vec![n.id.clone()], format!("node id `{}` is used twice", n.id)));
        }
        if n.statement.trim().is_empty() {
            out.push(finding(FindingKind::EmptyStatement, vec![n.id.clone()], format!("`{}` has no statement", n.id)));
        }
        if n.undeveloped && !matches!(n.kind, NodeKind::Goal | NodeKind::Strategy) {
            out.push(finding(
                FindingKind::MisplacedUndeveloped,
                vec![n.id.clone()],
                format!("`{}` is a {:?}; only goals and strategies can be undeveloped", n.id, n.kind),
            ));
        }
    }
    let mut support: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut has_parent: BTreeSet<&str> = BTreeSet::new();
    for e in &g.edges {
        let (Some(&from), Some(&to)) = (kinds.get(e.from.as_str()), kinds.get(e.to.as_str())) else {
            out.push(finding(
                FindingKind::DanglingEdge,
                vec![e.from.clone(), e.to.clone()],
                format!("edge `{}` -> `{}` references a missing node", e.from, e.to),
            ));
            continue;
        };
        if !edge_legal(e.kind, from, to) {
            out.push(finding(
                FindingKind::IllegalEdge,
                vec![e.from.clone(), e.to.clone()],
                format!("{:?} edge from {from:?} `{}` to {to:?} `{}` is not allowed", e.kind, e.from, e.to),
            ));
        }
        has_parent.insert(&e.to);
        if e.kind == EdgeKind::SupportedBy {
            support.entry(&e.from).or_default().push(&e.to);
        }
    }
    let roots: Vec<String> = g
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Goal | NodeKind::Strategy) && !has_parent.contains(n.id.as_str()))
        .map(|n| n.id.clone())
        .collect();
    match roots.as_slice() {
        [] => out.push(finding(FindingKind::NoRoot, Vec::new(), "no root goal".into())),
        [r] if *r == g.root && kinds.get(r.as_str()) == Some(&NodeKind::Goal) => {}
        [r] => out.push(finding(
            FindingKind::NoRoot,
            vec![r.clone()],
            format!("the only parentless node `{r}` is not the declared root goal `{}`", g.root),
        )),
        _ => out.push(finding(
            FindingKind::MultipleRoots,
            roots.clone(),
            format!("{} parentless goals or strategies: {}", roots.len(), roots.join(", ")),
        )),
    }
    if let Some(cycle) = find_cycle(&g.nodes, &support) {
        out.push(finding(
            FindingKind::Cycle,
            cycle.clone(),
            format!("supported_by cycle: {}", cycle.join(" -> ")),
        ));
    }
    // Reachability from the root over any edge.
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack = vec![g.root.as_str()];
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            continue;
        }
        stack.extend(g.edges.iter().filter(|e| e.from == id).map(|e| e.to.as_str()));
    }
    for n in &g.nodes {
        if !seen.contains(n.id.as_str()) && !roots.contains(&n.id) {
            out.push(finding(FindingKind::Orphan, vec![n.id.clone()], format!("`{}` is not reachable from the root", n.id)));
        }
    }
    for n in g.nodes.iter().filter(|n| n.kind == NodeKind::Solution) {
        if n.evidence.is_empty() {
            out.push(finding(
                FindingKind::SolutionLacksEvidence,
                vec![n.id.clone()],
                format!("solution lacks evidence: `{}`", n.id),
            ));
        }
    }
    out
}

pub fn structural_findings(g: &GsnGraph) -> Vec<ValidationFinding> {
    validate(g).into_iter().filter(|f| f.structural).collect()
}

fn find_cycle(nodes: &[GsnNode], support: &BTreeMap<&str, Vec<&str>>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        id: &'a str,
        support: &BTreeMap<&'a str, Vec<&'a str>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        match marks.get(id) {
            Some(Mark::Done) => return None,
            Some(Mark::Open) => {
                let start = path.iter().position(|p| *p == id).unwrap_or(0);
                let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(id.to_string());
                return Some(cycle);
            }
            None => {}
        }
        marks.insert(id, Mark::Open);
        path.push(id);
        for next in support.get(id).into_iter().flatten() {
            if let Some(c) = visit(next, support, marks, path) {
                return Some(c);
            }
        }
        path.pop();
        marks.insert(id, Mark::Done);
        None
    }
    let mut marks = BTreeMap::new();
    for n in nodes {
        let mut path = Vec::new();
        if let Some(c) = visit(&n.id, support, &mut marks, &mut path) {
            return Some(c);
        }
    }
    None
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Goals as boxes, strategies as parallelograms, solutions as circles,
/// contexts as rounded boxes; each undeveloped node gets a diamond.
pub fn export_dot(g: &GsnGraph) -> String {
    let mut out = String::from("digraph gsn {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n");
    for n in &g.nodes {
        let shape = match n.kind {
            NodeKind::Goal => "shape=box",
            NodeKind::Strategy => "shape=parallelogram",
            NodeKind::Solution => "shape=circle",
            NodeKind::Context => "shape=box, style=rounded",
        };
        let fill = if n.tags.iter().any(|t| t == XAI_TAG) {
            ", style=filled, fillcolor=\"#ffbf00\""
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "  \"{}\" [{shape}{fill}, label=\"{}\\n{}\"];",
            dot_escape(&n.id),
            dot_escape(&n.id),
            dot_escape(&n.statement)
        );
        if n.undeveloped {
            let _ = writeln!(
                out,
                "  \"{}__undeveloped\" [shape=diamond, label=\"\", width=0.3, height=0.3];\n  \"{}\" -> \"{}__undeveloped\" [arrowhead=none];",
                dot_escape(&n.id),
                dot_escape(&n.id),
                dot_escape(&n.id)
            );
        }
    }
    for e in &g.edges {
        let style = match e.kind {
            EdgeKind::SupportedBy => "arrowhead=normal",
            EdgeKind::InContextOf => "arrowhead=empty",
        };
        let _ = writeln!(out, "  \"{}\" -> \"{}\" [{style}];", dot_escape(&e.from), dot_escape(&e.to));
    }
    out.push_str("}\n");
    out
}
