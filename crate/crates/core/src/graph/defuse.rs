//! Intra-procedural reaching definitions over the statement tree.
//!
//! A definition `d` of `v` reaches a later use `u` of `v` in the same scope
//! unless another definition of `v` sits in the same block as `d`, after `d`
//! and before `u` (last writer wins inside an arm; arms merge). Definitions
//! later in an enclosing loop reach back to uses in that loop. Names with no
//! definition in the use's scope resolve to every definition in the nearest
//! enclosing scope that has one (module imports, globals, closures).

use std::collections::{BTreeSet, HashMap};

use super::{FlatInfo, NodeId, StatementNode};

#[derive(Debug, Clone)]
struct DefSite {
    node: NodeId,
    block: (Option<NodeId>, usize),
}

pub(crate) fn data_edges(
    nodes: &[StatementNode],
    info: &[FlatInfo],
    scope_parents: &[Option<usize>],
) -> BTreeSet<(NodeId, NodeId)> {
    let mut sites: HashMap<(usize, &str), Vec<DefSite>> = HashMap::new();
    for (node, extra) in nodes.iter().zip(info) {
        for var in &node.defined_vars {
            sites
                .entry((node.scope, var.as_str()))
                .or_default()
                .push(DefSite {
                    node: node.node_id,
                    block: extra.block,
                });
        }
        if let Some((inner, params)) = &extra.inner {
            for var in params {
                sites
                    .entry((*inner, var.as_str()))
                    .or_default()
                    .push(DefSite {
                        node: node.node_id,
                        block: (Some(node.node_id), 0),
                    });
            }
        }
    }
    // Nodes are pushed in textual order, so each list is already sorted by node id.

    let mut edges = BTreeSet::new();
    for use_node in nodes {
        let u = use_node.node_id;
        for var in &use_node.used_vars {
            match sites.get(&(use_node.scope, var.as_str())) {
                Some(defs) => {
                    for (i, d) in defs.iter().enumerate() {
                        if d.node == u {
                            continue;
                        }
                        let reaches = if d.node < u {
                            !defs[i + 1..]
                                .iter()
                                .take_while(|k| k.node < u)
                                .any(|k| k.block == d.block && k.node > d.node)
                        } else {
                            share_loop(&info[d.node].loops, &info[u].loops)
                        };
                        if reaches {
                            edges.insert((d.node, u));
                        }
                    }
                }
                None => {
                    let mut scope = scope_parents[use_node.scope];
                    while let Some(s) = scope {
                        if let Some(defs) = sites.get(&(s, var.as_str())) {
                            for d in defs {
                                if d.node != u {
                                    edges.insert((d.node, u));
                                }
                            }
                            break;
                        }
                        scope = scope_parents[s];
                    }
                }
            }
        }
    }
    edges
}

fn share_loop(a: &[NodeId], b: &[NodeId]) -> bool {
    a.iter().any(|l| b.contains(l))
}
