use tree_sitter::Node;

use super::{named_children, node_text, parse_tree, ParseError};
use crate::corpus::Language;

/// Names of all function and method calls in `source`, in source order with
/// duplicates removed (first occurrence wins).
///
/// Attribute chains are flattened to dotted names: `yaml.safe_load(x)` gives
/// `yaml.safe_load`, `self.db.cursor().execute(q)` gives
/// `self.db.cursor.execute`. C++ `::` and `->` separators become `.` as well.
/// Calls inside regions the parser could not recover contribute nothing.
pub fn extract_api_calls(source: &str, language: Language) -> Result<Vec<String>, ParseError> {
    if source.trim().is_empty() {
        return Ok(Vec::new());
    }
    let tree = parse_tree(source, language)?;
    let src = source.as_bytes();
    let mut out: Vec<String> = Vec::new();
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        if node.kind() == "ERROR" {
            continue;
        }
        if matches!(node.kind(), "call" | "call_expression") {
            if let Some(function) = node.child_by_field_name("function") {
                if let Some(name) = callee_name(function, src) {
                    if !out.contains(&name) {
                        out.push(name);
                    }
                }
            }
        }
        let mut kids = named_children(node);
        kids.reverse();
        stack.extend(kids);
    }
    Ok(out)
}

fn callee_name(node: Node, src: &[u8]) -> Option<String> {
    match node.kind() {
        "identifier" | "field_identifier" | "namespace_identifier" | "type_identifier" => {
            Some(node_text(node, src).to_string())
        }
        "attribute" => {
            let object = callee_name(node.child_by_field_name("object")?, src)?;
            let attr = node_text(node.child_by_field_name("attribute")?, src);
            Some(format!("{object}.{attr}"))
        }
        "field_expression" => {
            let object = callee_name(node.child_by_field_name("argument")?, src)?;
            let field = node_text(node.child_by_field_name("field")?, src);
            Some(format!("{object}.{field}"))
        }
        "qualified_identifier" => {
            let name = node.child_by_field_name("name")?;
            let tail = callee_name(name, src)?;
            match node.child_by_field_name("scope") {
                Some(scope) => Some(format!("{}.{tail}", callee_name(scope, src)?)),
                None => Some(tail),
            }
        }
        "template_function" | "template_type" => {
            callee_name(node.child_by_field_name("name")?, src)
        }
        "call" | "call_expression" | "subscript" | "subscript_expression" => {
            let inner = node
                .child_by_field_name("function")
                .or_else(|| node.child_by_field_name("value"))
                .or_else(|| node.child_by_field_name("argument"))?;
            callee_name(inner, src)
        }
        "pointer_expression" => callee_name(node.child_by_field_name("argument")?, src),
        "parenthesized_expression" => callee_name(*named_children(node).first()?, src),
        _ => None,
    }
}
