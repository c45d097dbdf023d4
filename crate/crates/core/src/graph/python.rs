use std::collections::BTreeSet;

use tree_sitter::Node;

use super::{children, end_line, named_children, node_text, start_line, NodeKind, Stmt};

pub(crate) fn module(root: Node, src: &[u8]) -> Vec<Stmt> {
    block(root, src)
}

fn block(node: Node, src: &[u8]) -> Vec<Stmt> {
    named_children(node)
        .into_iter()
        .filter_map(|child| statement(child, src))
        .collect()
}

/// Last line of a compound header: the line of the `:` that opens `body`.
fn header_end(node: Node, body: Option<Node>) -> usize {
    let limit = body.map_or(usize::MAX, |b| b.start_byte());
    children(node)
        .into_iter()
        .rfind(|c| c.kind() == ":" && c.start_byte() <= limit)
        .map_or_else(|| start_line(node), end_line)
}

fn body_of(node: Node) -> Option<Node> {
    node.child_by_field_name("body")
        .or_else(|| node.child_by_field_name("consequence"))
        .or_else(|| {
            named_children(node)
                .into_iter()
                .find(|c| c.kind() == "block")
        })
}

fn statement(node: Node, src: &[u8]) -> Option<Stmt> {
    let kind = node.kind();
    let simple = |kind| Stmt::new(kind, start_line(node), end_line(node));
    let stmt = match kind {
        "comment" => return None,
        "expression_statement" => {
            let mut s = simple(NodeKind::Simple);
            effects(node, src, &mut s.defs, &mut s.uses);
            s
        }
        "return_statement" => {
            let mut s = simple(NodeKind::Return);
            effects(node, src, &mut s.defs, &mut s.uses);
            s
        }
        "import_statement" | "import_from_statement" | "future_import_statement" => {
            let mut s = simple(NodeKind::Simple);
            s.is_import = true;
            import_bindings(node, src, &mut s.defs);
            s
        }
        "if_statement" => {
            let body = node.child_by_field_name("consequence");
            let mut s = Stmt::new(
                NodeKind::BranchHead,
                start_line(node),
                header_end(node, body),
            );
            if let Some(cond) = node.child_by_field_name("condition") {
                effects(cond, src, &mut s.defs, &mut s.uses);
            }
            s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
            let mut cursor = node.walk();
            for alt in node.children_by_field_name("alternative", &mut cursor) {
                if let Some(clause) = clause(alt, src) {
                    s.arms.push(vec![clause]);
                }
            }
            s
        }
        "for_statement" => {
            let body = node.child_by_field_name("body");
            let mut s = Stmt::new(NodeKind::LoopHead, start_line(node), header_end(node, body));
            if let Some(left) = node.child_by_field_name("left") {
                targets(left, src, &mut s.defs, &mut s.uses);
            }
            if let Some(right) = node.child_by_field_name("right") {
                effects(right, src, &mut s.defs, &mut s.uses);
            }
            s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
            if let Some(alt) = node
                .child_by_field_name("alternative")
                .and_then(|a| clause(a, src))
            {
                s.arms.push(vec![alt]);
            }
            s
        }
        "while_statement" => {
            let body = node.child_by_field_name("body");
            let mut s = Stmt::new(NodeKind::LoopHead, start_line(node), header_end(node, body));
            if let Some(cond) = node.child_by_field_name("condition") {
                effects(cond, src, &mut s.defs, &mut s.uses);
            }
            s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
            if let Some(alt) = node
                .child_by_field_name("alternative")
                .and_then(|a| clause(a, src))
            {
                s.arms.push(vec![alt]);
            }
            s
        }
        "try_statement" => {
            let body = node.child_by_field_name("body");
            let mut s = Stmt::new(
                NodeKind::BranchHead,
                start_line(node),
                header_end(node, body),
            );
            s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
            for child in named_children(node) {
                if matches!(
                    child.kind(),
                    "except_clause" | "except_group_clause" | "else_clause" | "finally_clause"
                ) {
                    if let Some(c) = clause(child, src) {
                        s.arms.push(vec![c]);
                    }
                }
            }
            s
        }
        "with_statement" => {
            let body = node.child_by_field_name("body");
            let mut s = Stmt::new(NodeKind::Simple, start_line(node), header_end(node, body));
            for child in named_children(node) {
                if child.kind() == "with_clause" {
                    with_items(child, src, &mut s.defs, &mut s.uses);
                }
            }
            s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
            s
        }
        "function_definition" => function(node, src, start_line(node)),
        "class_definition" => class(node, src, start_line(node)),
        "decorated_definition" => {
            let definition = node.child_by_field_name("definition")?;
            let mut s = match definition.kind() {
                "function_definition" => function(definition, src, start_line(node)),
                "class_definition" => class(definition, src, start_line(node)),
                _ => statement(definition, src)?,
            };
            s.start = start_line(node);
            for child in named_children(node) {
                if child.kind() == "decorator" {
                    effects(child, src, &mut s.defs, &mut s.uses);
                }
            }
            s
        }
        "match_statement" => {
            let body = node.child_by_field_name("body");
            let mut s = Stmt::new(
                NodeKind::BranchHead,
                start_line(node),
                header_end(node, body),
            );
            let mut cursor = node.walk();
            for subject in node.children_by_field_name("subject", &mut cursor) {
                effects(subject, src, &mut s.defs, &mut s.uses);
            }
            if let Some(body) = body {
                for case in named_children(body) {
                    if case.kind() != "case_clause" {
                        continue;
                    }
                    let case_body = case.child_by_field_name("consequence");
                    let mut c = Stmt::new(
                        NodeKind::BranchHead,
                        start_line(case),
                        header_end(case, case_body),
                    );
                    if let Some(guard) = case.child_by_field_name("guard") {
                        effects(guard, src, &mut c.defs, &mut c.uses);
                    }
                    for pattern in named_children(case) {
                        if pattern.kind() == "case_pattern" {
                            pattern_captures(pattern, src, &mut c.defs);
                        }
                    }
                    c.arms
                        .push(case_body.map(|b| block(b, src)).unwrap_or_default());
                    s.arms.push(vec![c]);
                }
            }
            s
        }
        "ERROR" => {
            let mut s = simple(NodeKind::Other);
            collect_uses(node, src, &mut s.uses, &BTreeSet::new());
            s
        }
        _ => {
            let mut s = simple(NodeKind::Simple);
            effects(node, src, &mut s.defs, &mut s.uses);
            s
        }
    };
    Some(stmt)
}

/// `elif`, `else`, `except` and `finally` clauses become guard nodes of their own.
fn clause(node: Node, src: &[u8]) -> Option<Stmt> {
    let body = body_of(node);
    let mut s = Stmt::new(
        NodeKind::BranchHead,
        start_line(node),
        header_end(node, body),
    );
    match node.kind() {
        "elif_clause" => {
            if let Some(cond) = node.child_by_field_name("condition") {
                effects(cond, src, &mut s.defs, &mut s.uses);
            }
        }
        "except_clause" | "except_group_clause" => {
            for child in named_children(node) {
                if Some(child.id()) == body.map(|b| b.id()) {
                    continue;
                }
                if child.kind() == "as_pattern" {
                    if let Some(value) = named_children(child).first() {
                        effects(*value, src, &mut s.defs, &mut s.uses);
                    }
                    if let Some(alias) = child.child_by_field_name("alias") {
                        targets(alias, src, &mut s.defs, &mut s.uses);
                    }
                } else {
                    effects(child, src, &mut s.defs, &mut s.uses);
                }
            }
        }
        "else_clause" | "finally_clause" => {}
        _ => return None,
    }
    s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
    Some(s)
}

fn function(node: Node, src: &[u8], start: usize) -> Stmt {
    let body = node.child_by_field_name("body");
    let mut s = Stmt::new(NodeKind::DefHeader, start, header_end(node, body));
    if let Some(name) = node.child_by_field_name("name") {
        s.defs.insert(node_text(name, src).to_string());
    }
    let mut params = BTreeSet::new();
    if let Some(parameters) = node.child_by_field_name("parameters") {
        for p in named_children(parameters) {
            parameter(p, src, &mut params, &mut s.uses);
        }
    }
    if let Some(ret) = node.child_by_field_name("return_type") {
        collect_uses(ret, src, &mut s.uses, &BTreeSet::new());
    }
    s.scope_params = Some(params);
    s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
    s
}

fn class(node: Node, src: &[u8], start: usize) -> Stmt {
    let body = node.child_by_field_name("body");
    let mut s = Stmt::new(NodeKind::DefHeader, start, header_end(node, body));
    if let Some(name) = node.child_by_field_name("name") {
        s.defs.insert(node_text(name, src).to_string());
    }
    if let Some(supers) = node.child_by_field_name("superclasses") {
        effects(supers, src, &mut s.defs, &mut s.uses);
    }
    s.scope_params = Some(BTreeSet::new());
    s.arms.push(body.map(|b| block(b, src)).unwrap_or_default());
    s
}

fn parameter(node: Node, src: &[u8], params: &mut BTreeSet<String>, uses: &mut BTreeSet<String>) {
    match node.kind() {
        "identifier" => {
            params.insert(node_text(node, src).to_string());
        }
        "default_parameter" | "typed_default_parameter" => {
            if let Some(name) = node.child_by_field_name("name") {
                parameter(name, src, params, uses);
            }
            if let Some(value) = node.child_by_field_name("value") {
                collect_uses(value, src, uses, &BTreeSet::new());
            }
            if let Some(ty) = node.child_by_field_name("type") {
                collect_uses(ty, src, uses, &BTreeSet::new());
            }
        }
        "typed_parameter" => {
            for child in named_children(node) {
                if child.kind() == "type" {
                    collect_uses(child, src, uses, &BTreeSet::new());
                } else {
                    parameter(child, src, params, uses);
                }
            }
        }
        "list_splat_pattern" | "dictionary_splat_pattern" | "tuple_pattern" => {
            for child in named_children(node) {
                parameter(child, src, params, uses);
            }
        }
        _ => {}
    }
}

fn import_bindings(node: Node, src: &[u8], defs: &mut BTreeSet<String>) {
    let mut cursor = node.walk();
    for name in node.children_by_field_name("name", &mut cursor) {
        match name.kind() {
            "aliased_import" => {
                if let Some(alias) = name.child_by_field_name("alias") {
                    defs.insert(node_text(alias, src).to_string());
                }
            }
            "dotted_name" => {
                if let Some(first) = named_children(name).first() {
                    defs.insert(node_text(*first, src).to_string());
                }
            }
            _ => {}
        }
    }
}

fn with_items(clause: Node, src: &[u8], defs: &mut BTreeSet<String>, uses: &mut BTreeSet<String>) {
    for item in named_children(clause) {
        let Some(value) = item.child_by_field_name("value") else {
            continue;
        };
        if value.kind() == "as_pattern" {
            if let Some(expr) = named_children(value).first() {
                effects(*expr, src, defs, uses);
            }
            if let Some(alias) = value.child_by_field_name("alias") {
                targets(alias, src, defs, uses);
            }
        } else {
            effects(value, src, defs, uses);
        }
    }
}

fn pattern_captures(node: Node, src: &[u8], defs: &mut BTreeSet<String>) {
    if node.kind() == "identifier"
        && node
            .parent()
            .is_some_and(|p| p.kind() != "dotted_name" || named_children(p).len() == 1)
    {
        defs.insert(node_text(node, src).to_string());
        return;
    }
    for child in named_children(node) {
        pattern_captures(child, src, defs);
    }
}

/// Definitions and uses of an expression or simple statement. Assignment
/// targets are definitions; walrus targets too.
fn effects(node: Node, src: &[u8], defs: &mut BTreeSet<String>, uses: &mut BTreeSet<String>) {
    match node.kind() {
        "assignment" => {
            if let Some(left) = node.child_by_field_name("left") {
                targets(left, src, defs, uses);
            }
            if let Some(right) = node.child_by_field_name("right") {
                effects(right, src, defs, uses);
            }
            if let Some(ty) = node.child_by_field_name("type") {
                collect_uses(ty, src, uses, &BTreeSet::new());
            }
        }
        "augmented_assignment" => {
            if let Some(left) = node.child_by_field_name("left") {
                targets(left, src, defs, uses);
                collect_uses(left, src, uses, &BTreeSet::new());
            }
            if let Some(right) = node.child_by_field_name("right") {
                effects(right, src, defs, uses);
            }
        }
        "named_expression" => {
            if let Some(name) = node.child_by_field_name("name") {
                targets(name, src, defs, uses);
            }
            if let Some(value) = node.child_by_field_name("value") {
                effects(value, src, defs, uses);
            }
        }
        "delete_statement" | "global_statement" | "nonlocal_statement" => {
            collect_uses(node, src, uses, &BTreeSet::new());
        }
        _ => {
            let has_nested_binding = contains_kind(
                node,
                &["assignment", "augmented_assignment", "named_expression"],
            );
            if has_nested_binding {
                for child in named_children(node) {
                    effects(child, src, defs, uses);
                }
            } else {
                collect_uses(node, src, uses, &BTreeSet::new());
            }
        }
    }
}

fn contains_kind(node: Node, kinds: &[&str]) -> bool {
    if kinds.contains(&node.kind()) {
        return true;
    }
    // Bindings inside lambdas and comprehensions do not leak.
    if matches!(
        node.kind(),
        "lambda"
            | "list_comprehension"
            | "set_comprehension"
            | "dictionary_comprehension"
            | "generator_expression"
    ) {
        return false;
    }
    named_children(node)
        .into_iter()
        .any(|c| contains_kind(c, kinds))
}

/// Assignment targets: bare names are defined; for `a.b = ...` and
/// `a[i] = ...` the base name is both defined and used.
fn targets(node: Node, src: &[u8], defs: &mut BTreeSet<String>, uses: &mut BTreeSet<String>) {
    match node.kind() {
        "identifier" => {
            defs.insert(node_text(node, src).to_string());
        }
        "attribute" | "subscript" => {
            if let Some(base) = base_name(node, src) {
                defs.insert(base);
            }
            collect_uses(node, src, uses, &BTreeSet::new());
        }
        "pattern_list"
        | "tuple_pattern"
        | "list_pattern"
        | "tuple"
        | "list"
        | "expression_list"
        | "parenthesized_expression"
        | "list_splat_pattern"
        | "list_splat"
        | "as_pattern_target" => {
            for child in named_children(node) {
                targets(child, src, defs, uses);
            }
        }
        _ => collect_uses(node, src, uses, &BTreeSet::new()),
    }
}

fn base_name(node: Node, src: &[u8]) -> Option<String> {
    match node.kind() {
        "identifier" => Some(node_text(node, src).to_string()),
        "attribute" => base_name(node.child_by_field_name("object")?, src),
        "subscript" => base_name(node.child_by_field_name("value")?, src),
        "parenthesized_expression" => base_name(*named_children(node).first()?, src),
        _ => None,
    }
}

/// Identifiers read by an expression. Attribute names, keyword-argument
/// names, callee names of plain calls, and names bound by lambdas or
/// comprehensions are excluded.
pub(crate) fn collect_uses(
    node: Node,
    src: &[u8],
    uses: &mut BTreeSet<String>,
    bound: &BTreeSet<String>,
) {
    match node.kind() {
        "identifier" => {
            let name = node_text(node, src);
            if !bound.contains(name) {
                uses.insert(name.to_string());
            }
        }
        "attribute" => {
            if let Some(object) = node.child_by_field_name("object") {
                collect_uses(object, src, uses, bound);
            }
        }
        "keyword_argument" => {
            if let Some(value) = node.child_by_field_name("value") {
                collect_uses(value, src, uses, bound);
            }
        }
        "call" => {
            if let Some(function) = node.child_by_field_name("function") {
                if function.kind() != "identifier" {
                    collect_uses(function, src, uses, bound);
                }
            }
            if let Some(args) = node.child_by_field_name("arguments") {
                collect_uses(args, src, uses, bound);
            }
        }
        "lambda" => {
            let mut inner = bound.clone();
            if let Some(params) = node.child_by_field_name("parameters") {
                let mut ignored = BTreeSet::new();
                for p in named_children(params) {
                    parameter(p, src, &mut inner, &mut ignored);
                }
            }
            if let Some(body) = node.child_by_field_name("body") {
                collect_uses(body, src, uses, &inner);
            }
        }
        "list_comprehension"
        | "set_comprehension"
        | "dictionary_comprehension"
        | "generator_expression" => {
            let mut inner = bound.clone();
            let mut throwaway = BTreeSet::new();
            for child in named_children(node) {
                if child.kind() == "for_in_clause" {
                    if let Some(left) = child.child_by_field_name("left") {
                        let mut names = BTreeSet::new();
                        targets(left, src, &mut names, &mut throwaway);
                        inner.extend(names);
                    }
                }
            }
            for child in named_children(node) {
                if child.kind() == "for_in_clause" {
                    if let Some(right) = child.child_by_field_name("right") {
                        collect_uses(right, src, uses, &inner);
                    }
                } else {
                    collect_uses(child, src, uses, &inner);
                }
            }
        }
        "comment" | "string_content" | "escape_sequence" => {}
        _ => {
            for child in named_children(node) {
                collect_uses(child, src, uses, bound);
            }
        }
    }
}
