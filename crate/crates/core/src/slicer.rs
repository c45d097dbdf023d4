//! Bidirectional hop-bounded slicing around patched statements.
//!
//! Points of interest are the statements touched by a patch: deleted lines
//! on the vulnerable side, added lines on the secure side. A slice keeps every
//! statement within `h` dependence edges of a point of interest, in either
//! direction. Each side is then complemented with the unchanged statements the
//! other side's slice kept, so both variants show the same context.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PatchError, PatchLineSets, VulnFixInstance};
use crate::graph::{build_pdg, NodeId, ParseError, ProgramDependenceGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Vulnerable,
    Secure,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointsOfInterest {
    pub vulnerable_pois: BTreeSet<NodeId>,
    pub secure_pois: BTreeSet<NodeId>,
}

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("hop limit must be at least 1")]
    ZeroHopLimit,
    #[error("node {node} is not in the graph ({len} nodes)")]
    UnknownNode { node: NodeId, len: usize },
    #[error("{side:?} source: {source}")]
    Parse {
        side: Side,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Patch(#[from] PatchError),
}

/// Parallel sliced variants of one vulnerability-fix instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicedPair {
    pub instance_id: String,
    pub vulnerable_slice: String,
    pub secure_slice: String,
    pub hop_limit: usize,
    pub kept_lines_vuln: Vec<usize>,
    pub kept_lines_sec: Vec<usize>,
    pub original_lines_vuln: usize,
    pub original_lines_sec: usize,
    /// Counterpart lines that could not be matched by text and stayed on
    /// their own side.
    #[serde(default)]
    pub unmatched_lines: usize,
}

impl SlicedPair {
    pub fn empty(instance: &VulnFixInstance, hop_limit: usize) -> Self {
        SlicedPair {
            instance_id: instance.id.clone(),
            vulnerable_slice: String::new(),
            secure_slice: String::new(),
            hop_limit,
            kept_lines_vuln: Vec::new(),
            kept_lines_sec: Vec::new(),
            original_lines_vuln: instance.vulnerable_code.lines().count(),
            original_lines_sec: instance.secure_code.lines().count(),
            unmatched_lines: 0,
        }
    }

    /// True for pairs produced from whitespace-only patches.
    pub fn is_empty(&self) -> bool {
        self.kept_lines_vuln.is_empty() && self.kept_lines_sec.is_empty()
    }

    /// Kept lines over original lines, both sides together.
    pub fn kept_ratio(&self) -> f64 {
        let original = self.original_lines_vuln + self.original_lines_sec;
        if original == 0 {
            return 0.0;
        }
        (self.kept_lines_vuln.len() + self.kept_lines_sec.len()) as f64 / original as f64
    }
}

/// Nodes whose span (or trailing scaffold line) holds a patch line of `side`.
pub fn locate_pois(
    pdg: &ProgramDependenceGraph,
    lines: &PatchLineSets,
    side: Side,
) -> BTreeSet<NodeId> {
    let patch: BTreeSet<usize> = match side {
        Side::Vulnerable => lines.deleted_numbers().collect(),
        Side::Secure => lines.added_numbers().collect(),
    };
    pdg.nodes
        .iter()
        .filter(|n| {
            (n.span.0..=n.span.1).any(|l| patch.contains(&l))
                || n.scaffold_lines.iter().any(|l| patch.contains(l))
        })
        .map(|n| n.node_id)
        .collect()
}

/// Points of interest on both sides of an instance.
pub fn points_of_interest(
    vulnerable: &ProgramDependenceGraph,
    secure: &ProgramDependenceGraph,
    lines: &PatchLineSets,
) -> PointsOfInterest {
    PointsOfInterest {
        vulnerable_pois: locate_pois(vulnerable, lines, Side::Vulnerable),
        secure_pois: locate_pois(secure, lines, Side::Secure),
    }
}

/// `pois` plus every node within `h` edges backward or forward of one.
///
/// Edge kinds are not distinguished. The two directions are explored
/// independently from the points of interest.
pub fn slice(
    pdg: &ProgramDependenceGraph,
    pois: &BTreeSet<NodeId>,
    h: usize,
) -> Result<BTreeSet<NodeId>, SliceError> {
    if h == 0 {
        return Err(SliceError::ZeroHopLimit);
    }
    if let Some(&node) = pois.iter().find(|p| !pdg.contains(**p)) {
        return Err(SliceError::UnknownNode {
            node,
            len: pdg.nodes.len(),
        });
    }
    let mut out = pois.clone();
    out.extend(bounded_reach(&pdg.predecessors(), pois, h));
    out.extend(bounded_reach(&pdg.successors(), pois, h));
    Ok(out)
}

fn bounded_reach(adj: &[Vec<NodeId>], start: &BTreeSet<NodeId>, h: usize) -> Vec<NodeId> {
    let mut depth: HashMap<NodeId, usize> = start.iter().map(|s| (*s, 0)).collect();
    let mut queue: VecDeque<NodeId> = start.iter().copied().collect();
    let mut reached = Vec::new();
    while let Some(n) = queue.pop_front() {
        let d = depth[&n];
        if d == h {
            continue;
        }
        for &next in &adj[n] {
            if let std::collections::hash_map::Entry::Vacant(e) = depth.entry(next) {
                e.insert(d + 1);
                reached.push(next);
                queue.push_back(next);
            }
        }
    }
    reached
}

/// Builds both sliced variants from per-side slice node sets.
///
/// Each side keeps its own sliced statements plus the unchanged lines of the
/// counterpart's sliced statements, mapped across versions through the diff
/// and checked for identical text. Enclosing compound headers and the imports
/// of every enclosing scope are kept as well.
pub fn reconstruct_pair(
    instance: &VulnFixInstance,
    vuln_pdg: &ProgramDependenceGraph,
    sec_pdg: &ProgramDependenceGraph,
    vuln_nodes: &BTreeSet<NodeId>,
    sec_nodes: &BTreeSet<NodeId>,
    hop_limit: usize,
) -> Result<SlicedPair, SliceError> {
    for (pdg, nodes) in [(vuln_pdg, vuln_nodes), (sec_pdg, sec_nodes)] {
        if let Some(&node) = nodes.iter().find(|n| !pdg.contains(**n)) {
            return Err(SliceError::UnknownNode {
                node,
                len: pdg.nodes.len(),
            });
        }
    }
    let vuln_src: Vec<&str> = instance.vulnerable_code.lines().collect();
    let sec_src: Vec<&str> = instance.secure_code.lines().collect();
    let diff = instance.diff()?;
    let pairs = diff.unchanged_line_pairs(vuln_src.len(), sec_src.len());
    let old_to_new: HashMap<usize, usize> = pairs.iter().copied().collect();
    let new_to_old: HashMap<usize, usize> = pairs.iter().map(|(o, n)| (*n, *o)).collect();

    let mut unmatched = 0;
    let vuln_own = node_lines(vuln_pdg, vuln_nodes);
    let sec_own = node_lines(sec_pdg, sec_nodes);
    let from_sec = map_lines(&sec_own, &new_to_old, &sec_src, &vuln_src, &mut unmatched);
    let from_vuln = map_lines(&vuln_own, &old_to_new, &vuln_src, &sec_src, &mut unmatched);
    if unmatched > 0 {
        log::warn!(
            "{}: {unmatched} unchanged lines did not match across versions",
            instance.id
        );
    }

    let kept_vuln = complete(vuln_pdg, vuln_nodes, vuln_own, from_sec, vuln_src.len());
    let kept_sec = complete(sec_pdg, sec_nodes, sec_own, from_vuln, sec_src.len());
    Ok(SlicedPair {
        instance_id: instance.id.clone(),
        vulnerable_slice: render(&vuln_src, &kept_vuln),
        secure_slice: render(&sec_src, &kept_sec),
        hop_limit,
        kept_lines_vuln: kept_vuln,
        kept_lines_sec: kept_sec,
        original_lines_vuln: vuln_src.len(),
        original_lines_sec: sec_src.len(),
        unmatched_lines: unmatched,
    })
}

fn node_lines(pdg: &ProgramDependenceGraph, nodes: &BTreeSet<NodeId>) -> BTreeSet<usize> {
    nodes.iter().flat_map(|n| pdg.nodes[*n].lines()).collect()
}

fn map_lines(
    lines: &BTreeSet<usize>,
    mapping: &HashMap<usize, usize>,
    from_src: &[&str],
    to_src: &[&str],
    unmatched: &mut usize,
) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for line in lines {
        let Some(&target) = mapping.get(line) else {
            continue;
        };
        match (from_src.get(line - 1), to_src.get(target - 1)) {
            (Some(a), Some(b)) if a == b => {
                out.insert(target);
            }
            _ => *unmatched += 1,
        }
    }
    out
}

/// Adds enclosing headers and in-scope imports of every kept statement.
fn complete(
    pdg: &ProgramDependenceGraph,
    sliced: &BTreeSet<NodeId>,
    mut kept: BTreeSet<usize>,
    mapped: BTreeSet<usize>,
    total: usize,
) -> Vec<usize> {
    let mut anchors: BTreeSet<NodeId> = sliced.clone();
    for line in &mapped {
        if let Some(n) = pdg.nodes_at_line(*line).map(|n| n.node_id).max() {
            anchors.insert(n);
        }
    }
    kept.extend(mapped);

    let mut extra: BTreeSet<NodeId> = BTreeSet::new();
    let mut scopes: BTreeSet<usize> = BTreeSet::new();
    for &a in &anchors {
        scopes.insert(pdg.nodes[a].scope);
        for p in pdg.ancestors(a) {
            scopes.insert(pdg.nodes[p].scope);
            extra.insert(p);
        }
    }
    if !anchors.is_empty() {
        for n in pdg
            .nodes
            .iter()
            .filter(|n| n.is_import && scopes.contains(&n.scope))
        {
            extra.insert(n.node_id);
            extra.extend(pdg.ancestors(n.node_id));
        }
    }
    for n in extra {
        kept.extend(pdg.nodes[n].lines());
    }
    kept.into_iter()
        .filter(|l| *l >= 1 && *l <= total)
        .collect()
}

fn render(src: &[&str], kept: &[usize]) -> String {
    kept.iter()
        .map(|l| src[l - 1])
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses both versions, locates points of interest and slices with hop
/// limit `h`. Whitespace-only patches give an empty pair.
pub fn slice_instance(instance: &VulnFixInstance, h: usize) -> Result<SlicedPair, SliceError> {
    if h == 0 {
        return Err(SliceError::ZeroHopLimit);
    }
    let lines = instance.parse_patch()?;
    if lines.is_whitespace_only() {
        return Ok(SlicedPair::empty(instance, h));
    }
    let vuln_pdg = build_pdg(&instance.vulnerable_code, instance.language).map_err(|source| {
        SliceError::Parse {
            side: Side::Vulnerable,
            source,
        }
    })?;
    let sec_pdg = build_pdg(&instance.secure_code, instance.language).map_err(|source| {
        SliceError::Parse {
            side: Side::Secure,
            source,
        }
    })?;
    let pois = points_of_interest(&vuln_pdg, &sec_pdg, &lines);
    let vuln_nodes = slice(&vuln_pdg, &pois.vulnerable_pois, h)?;
    let sec_nodes = slice(&sec_pdg, &pois.secure_pois, h)?;
    reconstruct_pair(instance, &vuln_pdg, &sec_pdg, &vuln_nodes, &sec_nodes, h)
}

/// Slices every instance in parallel, preserving input order.
pub fn slice_corpus(
    instances: &[VulnFixInstance],
    h: usize,
) -> Vec<Result<SlicedPair, SliceError>> {
    instances.par_iter().map(|i| slice_instance(i, h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CweId, Language};
    use crate::graph::{DependenceEdge, EdgeKind, NodeKind, StatementNode};
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> ProgramDependenceGraph {
        let nodes = (0..n)
            .map(|i| StatementNode {
                node_id: i,
                span: (i + 1, i + 1),
                kind: NodeKind::Simple,
                defined_vars: BTreeSet::new(),
                used_vars: BTreeSet::new(),
                parent: None,
                scope: 0,
                scaffold_lines: Vec::new(),
                is_import: false,
            })
            .collect();
        let mut edges: Vec<DependenceEdge> = edges
            .iter()
            .map(|(s, d)| DependenceEdge {
                src: *s,
                dst: *d,
                kind: EdgeKind::Data,
            })
            .collect();
        edges.sort();
        edges.dedup();
        ProgramDependenceGraph {
            language: Language::Python,
            nodes,
            edges,
        }
    }

    fn set(ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().copied().collect()
    }

    #[test]
    fn empty_pois_give_empty_slice() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        assert!(slice(&g, &BTreeSet::new(), 2).unwrap().is_empty());
    }

    #[test]
    fn chain_backward() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(slice(&g, &set(&[3]), 2).unwrap(), set(&[1, 2, 3]));
    }

    #[test]
    fn chain_both_directions() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(slice(&g, &set(&[1]), 2).unwrap(), set(&[0, 1, 2, 3]));
    }

    #[test]
    fn backward_then_forward_is_not_followed() {
        // 0 -> 1 and 0 -> 2: from poi 1, node 0 is one hop back, but 2 is
        // only reachable by turning around.
        let g = graph(3, &[(0, 1), (0, 2)]);
        assert_eq!(slice(&g, &set(&[1]), 2).unwrap(), set(&[0, 1]));
    }

    #[test]
    fn zero_hops_and_unknown_nodes_are_errors() {
        let g = graph(2, &[(0, 1)]);
        assert!(matches!(
            slice(&g, &set(&[0]), 0),
            Err(SliceError::ZeroHopLimit)
        ));
        assert!(matches!(
            slice(&g, &set(&[5]), 1),
            Err(SliceError::UnknownNode { node: 5, len: 2 })
        ));
    }

    /// Naive oracle: all simple paths of length ≤ h, enumerated by DFS.
    fn naive(
        n: usize,
        edges: &[(usize, usize)],
        pois: &BTreeSet<usize>,
        h: usize,
    ) -> BTreeSet<usize> {
        fn walk(
            cur: usize,
            left: usize,
            adj: &dyn Fn(usize) -> Vec<usize>,
            seen: &mut Vec<usize>,
            out: &mut BTreeSet<usize>,
        ) {
            out.insert(cur);
            if left == 0 {
                return;
            }
            for next in adj(cur) {
                if !seen.contains(&next) {
                    seen.push(next);
                    walk(next, left - 1, adj, seen, out);
                    seen.pop();
                }
            }
        }
        let fwd = |u: usize| {
            edges
                .iter()
                .filter(|e| e.0 == u)
                .map(|e| e.1)
                .collect::<Vec<_>>()
        };
        let bwd = |u: usize| {
            edges
                .iter()
                .filter(|e| e.1 == u)
                .map(|e| e.0)
                .collect::<Vec<_>>()
        };
        let mut out = BTreeSet::new();
        for &p in pois {
            assert!(p < n);
            walk(p, h, &fwd, &mut vec![p], &mut out);
            walk(p, h, &bwd, &mut vec![p], &mut out);
        }
        out
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, BTreeSet<usize>, usize)>
    {
        (1usize..=30).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0..n, 0..n), 0..60),
                prop::collection::btree_set(0..n, 0..4),
                1usize..5,
            )
        })
    }

    proptest! {
        #[test]
        fn matches_path_enumeration((n, edges, pois, h) in random_graph()) {
            let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
            let g = graph(n, &edges);
            prop_assert_eq!(slice(&g, &pois, h).unwrap(), naive(n, &edges, &pois, h));
        }

        #[test]
        fn monotone_in_h((n, edges, pois, h) in random_graph()) {
            let g = graph(n, &edges);
            let small = slice(&g, &pois, h).unwrap();
            let large = slice(&g, &pois, h + 1).unwrap();
            prop_assert!(small.is_subset(&large));
            prop_assert!(pois.is_subset(&small));
        }
    }

    fn instance(vuln: &str, sec: &str, patch: &str) -> VulnFixInstance {
        VulnFixInstance {
            id: "t1".into(),
            cwe_id: CweId::new(79),
            language: Language::Python,
            vulnerable_code: vuln.into(),
            secure_code: sec.into(),
            patch: patch.into(),
        }
    }

    #[test]
    fn identical_slices_are_symmetric() {
        let src = "a = 1\nb = a\nc = b\n";
        let inst = instance(src, src, "");
        let g = build_pdg(src, Language::Python).unwrap();
        let nodes = set(&[0, 1]);
        let pair = reconstruct_pair(&inst, &g, &g, &nodes, &nodes, 2).unwrap();
        assert_eq!(pair.vulnerable_slice, pair.secure_slice);
        assert_eq!(pair.vulnerable_slice, "a = 1\nb = a");
    }

    #[test]
    fn counterpart_line_appears_once() {
        let vuln = "a = 1\nb = 2\nc = a\n";
        let sec = "a = 1\nb = 2\nc = b\n";
        let patch = "--- a\n+++ b\n@@ -1,3 +1,3 @@\n a = 1\n b = 2\n-c = a\n+c = b\n";
        let inst = instance(vuln, sec, patch);
        let pair = slice_instance(&inst, 1).unwrap();
        // Vulnerable side keeps `a = 1` itself and gains `b = 2` from the secure side.
        assert_eq!(pair.vulnerable_slice, "a = 1\nb = 2\nc = a");
        assert_eq!(pair.secure_slice, "a = 1\nb = 2\nc = b");
        assert_eq!(pair.kept_lines_vuln, vec![1, 2, 3]);
        assert_eq!(pair.unmatched_lines, 0);
    }

    #[test]
    fn whitespace_patch_gives_empty_pair() {
        let vuln = "a = 1\n\nb = a\n";
        let sec = "a = 1\n\n\nb = a\n";
        let patch = "--- a\n+++ b\n@@ -1,3 +1,4 @@\n a = 1\n \n+\n b = a\n";
        let pair = slice_instance(&instance(vuln, sec, patch), 2).unwrap();
        assert!(pair.is_empty());
        assert_eq!(pair.vulnerable_slice, "");
        assert_eq!(pair.hop_limit, 2);
    }

    #[test]
    fn poi_inside_multiline_statement() {
        let src = "x = call(\n    a,\n    b,\n)\ny = 2\n";
        let g = build_pdg(src, Language::Python).unwrap();
        let lines = PatchLineSets {
            deleted_lines: vec![(3, "    b,".into())],
            added_lines: vec![],
        };
        let pois = locate_pois(&g, &lines, Side::Vulnerable);
        let oracle: BTreeSet<usize> = g
            .nodes
            .iter()
            .filter(|n| n.span.0 <= 3 && 3 <= n.span.1)
            .map(|n| n.node_id)
            .collect();
        assert_eq!(pois, oracle);
        assert_eq!(pois, set(&[0]));
        assert!(locate_pois(&g, &PatchLineSets::default(), Side::Secure).is_empty());
    }

    #[test]
    fn enclosing_headers_and_imports_are_kept() {
        let vuln = "import os\nimport re\n\ndef f(p):\n    q = 1\n    if p:\n        return os.system(p)\n    return q\n";
        let sec = "import os\nimport re\n\ndef f(p):\n    q = 1\n    if p:\n        return os.system(re.escape(p))\n    return q\n";
        let patch = "--- a\n+++ b\n@@ -6,3 +6,3 @@\n     if p:\n-        return os.system(p)\n+        return os.system(re.escape(p))\n     return q\n";
        let pair = slice_instance(&instance(vuln, sec, patch), 1).unwrap();
        assert!(pair.secure_slice.contains("def f(p):"));
        assert!(pair.secure_slice.contains("    if p:"));
        assert!(pair.secure_slice.starts_with("import os\nimport re"));
        assert!(!pair.secure_slice.contains("q = 1"));
    }
}
