use std::collections::BTreeSet;

use tree_sitter::Node;

use super::{children, end_line, named_children, node_text, start_line, NodeKind, Stmt};

pub(crate) fn translation_unit(root: Node, src: &[u8]) -> Vec<Stmt> {
    items(root, src)
}

fn items(node: Node, src: &[u8]) -> Vec<Stmt> {
    named_children(node)
        .into_iter()
        .flat_map(|child| statement(child, src))
        .collect()
}

/// Statements of a body: the children of a compound statement, or the single
/// statement of an unbraced body.
fn body(node: Node, src: &[u8]) -> (Vec<Stmt>, Vec<usize>) {
    if node.kind() == "compound_statement" {
        (items(node, src), brace_lines(node))
    } else {
        (statement(node, src), Vec::new())
    }
}

/// Lines holding only the braces of a compound statement.
fn brace_lines(node: Node) -> Vec<usize> {
    let mut lines = Vec::new();
    for child in children(node) {
        if matches!(child.kind(), "{" | "}") {
            lines.push(start_line(child));
        }
    }
    lines
}

/// Last header line: the end of every child that is not the body or an else branch.
fn header_end(node: Node, skip: &[&str]) -> usize {
    let mut end = start_line(node);
    let mut cursor = node.walk();
    for (i, child) in node.children(&mut cursor).enumerate() {
        let field = node.field_name_for_child(i as u32);
        if field.is_some_and(|f| skip.contains(&f))
            || matches!(child.kind(), "compound_statement" | "else_clause")
        {
            break;
        }
        end = end.max(end_line(child));
    }
    end
}

fn statement(node: Node, src: &[u8]) -> Vec<Stmt> {
    let simple = |kind| Stmt::new(kind, start_line(node), end_line(node));
    let stmt = match node.kind() {
        "comment" | "access_specifier" | "{" | "}" | ";" => return Vec::new(),
        "compound_statement" | "declaration_list" | "linkage_specification" => {
            return items(node, src);
        }
        "labeled_statement" => {
            return named_children(node)
                .into_iter()
                .filter(|c| c.kind() != "statement_identifier")
                .flat_map(|c| statement(c, src))
                .collect();
        }
        "expression_statement" | "throw_statement" => {
            let mut s = simple(NodeKind::Simple);
            effects(node, src, &mut s.defs, &mut s.uses);
            s
        }
        "return_statement" | "co_return_statement" => {
            let mut s = simple(NodeKind::Return);
            effects(node, src, &mut s.defs, &mut s.uses);
            s
        }
        "declaration" | "field_declaration" => {
            if let Some(s) = declaration_with_body(node, src) {
                s
            } else {
                let mut s = simple(NodeKind::Simple);
                declaration(node, src, &mut s.defs, &mut s.uses);
                s
            }
        }
        "preproc_include" | "using_declaration" => {
            let mut s = simple(NodeKind::Simple);
            s.is_import = true;
            s
        }
        "preproc_def" | "preproc_function_def" => {
            let mut s = simple(NodeKind::Simple);
            if let Some(name) = node.child_by_field_name("name") {
                s.defs.insert(node_text(name, src).to_string());
            }
            s
        }
        "preproc_if" | "preproc_ifdef" | "preproc_elif" | "preproc_else" | "preproc_elifdef" => {
            preproc_conditional(node, src)
        }
        "if_statement" => {
            let mut s = Stmt::new(
                NodeKind::BranchHead,
                start_line(node),
                header_end(node, &["consequence", "alternative"]),
            );
            if let Some(cond) = node.child_by_field_name("condition") {
                effects(cond, src, &mut s.defs, &mut s.uses);
            }
            if let Some(cons) = node.child_by_field_name("consequence") {
                let (stmts, braces) = body(cons, src);
                s.arms.push(stmts);
                s.scaffold.extend(braces);
            }
            if let Some(alt) = node.child_by_field_name("alternative") {
                s.arms.push(vec![else_clause(alt, src)]);
            }
            s
        }
        "while_statement" => {
            let mut s = Stmt::new(
                NodeKind::LoopHead,
                start_line(node),
                header_end(node, &["body"]),
            );
            if let Some(cond) = node.child_by_field_name("condition") {
                effects(cond, src, &mut s.defs, &mut s.uses);
            }
            if let Some(b) = node.child_by_field_name("body") {
                let (stmts, braces) = body(b, src);
                s.arms.push(stmts);
                s.scaffold.extend(braces);
            }
            s
        }
        "do_statement" => {
            let mut s = Stmt::new(NodeKind::LoopHead, start_line(node), start_line(node));
            if let Some(cond) = node.child_by_field_name("condition") {
                effects(cond, src, &mut s.defs, &mut s.uses);
                s.scaffold.extend(start_line(cond)..=end_line(node));
            }
            if let Some(b) = node.child_by_field_name("body") {
                let (stmts, braces) = body(b, src);
                s.arms.push(stmts);
                s.scaffold.extend(braces);
            }
            s
        }
        "for_statement" | "for_range_loop" => {
            let mut s = Stmt::new(
                NodeKind::LoopHead,
                start_line(node),
                header_end(node, &["body"]),
            );
            for child in named_children(node) {
                if Some(child.id()) == node.child_by_field_name("body").map(|b| b.id()) {
                    continue;
                }
                match child.kind() {
                    "declaration" => declaration(child, src, &mut s.defs, &mut s.uses),
                    _ => effects(child, src, &mut s.defs, &mut s.uses),
                }
            }
            if node.kind() == "for_range_loop" {
                if let Some(decl) = node.child_by_field_name("declarator") {
                    declarator_names(decl, src, &mut s.defs, &mut s.uses);
                }
            }
            if let Some(b) = node.child_by_field_name("body") {
                let (stmts, braces) = body(b, src);
                s.arms.push(stmts);
                s.scaffold.extend(braces);
            }
            s
        }
        "switch_statement" => {
            let mut s = Stmt::new(
                NodeKind::BranchHead,
                start_line(node),
                header_end(node, &["body"]),
            );
            if let Some(cond) = node.child_by_field_name("condition") {
                effects(cond, src, &mut s.defs, &mut s.uses);
            }
            if let Some(b) = node.child_by_field_name("body") {
                s.scaffold.extend(brace_lines(b));
                for case in named_children(b) {
                    if case.kind() == "case_statement" {
                        s.arms.push(vec![case_statement(case, src)]);
                    } else {
                        s.arms.push(statement(case, src));
                    }
                }
            }
            s
        }
        "case_statement" => case_statement(node, src),
        "try_statement" => {
            let mut s = Stmt::new(NodeKind::BranchHead, start_line(node), start_line(node));
            if let Some(b) = node.child_by_field_name("body") {
                let (stmts, braces) = body(b, src);
                s.arms.push(stmts);
                s.scaffold.extend(braces);
            }
            for child in named_children(node) {
                if child.kind() == "catch_clause" {
                    let mut c = Stmt::new(
                        NodeKind::BranchHead,
                        start_line(child),
                        header_end(child, &["body"]),
                    );
                    if let Some(params) = child.child_by_field_name("parameters") {
                        for p in named_children(params) {
                            if let Some(d) = p.child_by_field_name("declarator") {
                                declarator_names(d, src, &mut c.defs, &mut c.uses);
                            }
                        }
                    }
                    if let Some(b) = child.child_by_field_name("body") {
                        let (stmts, braces) = body(b, src);
                        c.arms.push(stmts);
                        c.scaffold.extend(braces);
                    }
                    s.arms.push(vec![c]);
                }
            }
            s
        }
        "function_definition" => function(node, src, start_line(node)),
        "template_declaration" => {
            let start = start_line(node);
            let mut out = Vec::new();
            for child in named_children(node) {
                if matches!(child.kind(), "template_parameter_list") {
                    continue;
                }
                let mut inner = statement(child, src);
                if let Some(first) = inner.first_mut() {
                    first.start = first.start.min(start);
                }
                out.extend(inner);
            }
            return out;
        }
        "namespace_definition" => {
            let mut s = Stmt::new(
                NodeKind::Other,
                start_line(node),
                header_end(node, &["body"]),
            );
            if let Some(b) = node.child_by_field_name("body") {
                s.arms.push(items(b, src));
                s.scaffold.extend(brace_lines(b));
            }
            s
        }
        "class_specifier" | "struct_specifier" | "union_specifier" => {
            if let Some(s) = type_with_methods(node, src) {
                s
            } else {
                simple(NodeKind::Simple)
            }
        }
        "break_statement"
        | "continue_statement"
        | "goto_statement"
        | "type_definition"
        | "enum_specifier"
        | "alias_declaration"
        | "static_assert_declaration"
        | "namespace_alias_definition"
        | "template_instantiation" => simple(NodeKind::Simple),
        "ERROR" => {
            let mut s = simple(NodeKind::Other);
            collect_uses(node, src, &mut s.uses);
            s
        }
        _ => {
            let mut s = simple(NodeKind::Simple);
            effects(node, src, &mut s.defs, &mut s.uses);
            s
        }
    };
    vec![stmt]
}

fn else_clause(node: Node, src: &[u8]) -> Stmt {
    let mut s = Stmt::new(NodeKind::BranchHead, start_line(node), start_line(node));
    if let Some(inner) = named_children(node).into_iter().next() {
        let (stmts, braces) = body(inner, src);
        s.arms.push(stmts);
        s.scaffold.extend(braces);
    }
    s
}

fn case_statement(node: Node, src: &[u8]) -> Stmt {
    let value = node.child_by_field_name("value");
    let colon_end = children(node)
        .into_iter()
        .find(|c| c.kind() == ":")
        .map_or_else(|| start_line(node), end_line);
    let mut s = Stmt::new(NodeKind::BranchHead, start_line(node), colon_end);
    if let Some(v) = value {
        effects(v, src, &mut s.defs, &mut s.uses);
    }
    let mut stmts = Vec::new();
    for child in named_children(node) {
        if Some(child.id()) == value.map(|v| v.id()) {
            continue;
        }
        stmts.extend(statement(child, src));
    }
    s.arms.push(stmts);
    s
}

fn preproc_conditional(node: Node, src: &[u8]) -> Stmt {
    let mut s = Stmt::new(NodeKind::BranchHead, start_line(node), start_line(node));
    let skip = ["name", "condition", "alternative"];
    let mut arm = Vec::new();
    let mut cursor = node.walk();
    for (i, child) in node.children(&mut cursor).enumerate() {
        if !child.is_named()
            || node
                .field_name_for_child(i as u32)
                .is_some_and(|f| skip.contains(&f))
        {
            continue;
        }
        arm.extend(statement(child, src));
    }
    if let Some(cond) = node.child_by_field_name("condition") {
        collect_uses(cond, src, &mut s.uses);
    }
    s.arms.push(arm);
    if let Some(alt) = node.child_by_field_name("alternative") {
        s.arms.push(vec![preproc_conditional(alt, src)]);
    }
    if matches!(node.kind(), "preproc_if" | "preproc_ifdef") {
        s.scaffold.push(end_line(node));
    }
    s
}

fn function(node: Node, src: &[u8], start: usize) -> Stmt {
    let mut s = Stmt::new(NodeKind::DefHeader, start, header_end(node, &["body"]));
    let mut params = BTreeSet::new();
    if let Some(decl) = node.child_by_field_name("declarator") {
        function_signature(decl, src, &mut s.defs, &mut params, &mut s.uses);
    }
    s.scope_params = Some(params);
    if let Some(b) = node.child_by_field_name("body") {
        s.scaffold.extend(brace_lines(b));
        if b.kind() == "compound_statement" {
            s.arms.push(items(b, src));
        }
    }
    s
}

fn function_signature(
    decl: Node,
    src: &[u8],
    name: &mut BTreeSet<String>,
    params: &mut BTreeSet<String>,
    uses: &mut BTreeSet<String>,
) {
    match decl.kind() {
        "function_declarator" => {
            if let Some(inner) = decl.child_by_field_name("declarator") {
                let mut ignored = BTreeSet::new();
                declarator_names(inner, src, name, &mut ignored);
            }
            if let Some(list) = decl.child_by_field_name("parameters") {
                for p in named_children(list) {
                    if let Some(d) = p.child_by_field_name("declarator") {
                        declarator_names(d, src, params, uses);
                    }
                    if let Some(default) = p.child_by_field_name("default_value") {
                        collect_uses(default, src, uses);
                    }
                }
            }
        }
        _ => {
            if let Some(inner) = decl.child_by_field_name("declarator").or_else(|| {
                named_children(decl)
                    .into_iter()
                    .find(|c| c.kind().ends_with("declarator"))
            }) {
                function_signature(inner, src, name, params, uses);
            }
        }
    }
}

/// A struct or class that carries method definitions is laid out as a
/// container node so its methods become separate scopes.
fn type_with_methods(node: Node, src: &[u8]) -> Option<Stmt> {
    let body = node.child_by_field_name("body")?;
    let has_methods = named_children(body)
        .iter()
        .any(|c| matches!(c.kind(), "function_definition" | "template_declaration"));
    if !has_methods {
        return None;
    }
    let mut s = Stmt::new(
        NodeKind::Other,
        start_line(node),
        header_end(node, &["body"]),
    );
    if let Some(name) = node.child_by_field_name("name") {
        s.defs.insert(node_text(name, src).to_string());
    }
    s.arms.push(items(body, src));
    s.scaffold.extend(brace_lines(body));
    s.scaffold.push(end_line(node));
    Some(s)
}

fn declaration_with_body(node: Node, src: &[u8]) -> Option<Stmt> {
    let ty = node.child_by_field_name("type")?;
    let mut s = type_with_methods(ty, src)?;
    s.start = start_line(node);
    s.scaffold.push(end_line(node));
    Some(s)
}

fn declaration(node: Node, src: &[u8], defs: &mut BTreeSet<String>, uses: &mut BTreeSet<String>) {
    let mut cursor = node.walk();
    for decl in node.children_by_field_name("declarator", &mut cursor) {
        match decl.kind() {
            "init_declarator" => {
                if let Some(d) = decl.child_by_field_name("declarator") {
                    declarator_names(d, src, defs, uses);
                }
                if let Some(v) = decl.child_by_field_name("value") {
                    effects(v, src, defs, uses);
                }
            }
            _ => declarator_names(decl, src, defs, uses),
        }
    }
}

fn declarator_names(
    node: Node,
    src: &[u8],
    defs: &mut BTreeSet<String>,
    uses: &mut BTreeSet<String>,
) {
    match node.kind() {
        "identifier" | "field_identifier" => {
            defs.insert(node_text(node, src).to_string());
        }
        "array_declarator" => {
            if let Some(d) = node.child_by_field_name("declarator") {
                declarator_names(d, src, defs, uses);
            }
            if let Some(size) = node.child_by_field_name("size") {
                collect_uses(size, src, uses);
            }
        }
        "init_declarator" => {
            if let Some(d) = node.child_by_field_name("declarator") {
                declarator_names(d, src, defs, uses);
            }
            if let Some(v) = node.child_by_field_name("value") {
                effects(v, src, defs, uses);
            }
        }
        "function_declarator" => {
            if let Some(d) = node.child_by_field_name("declarator") {
                declarator_names(d, src, defs, uses);
            }
        }
        _ => {
            for child in named_children(node) {
                if child.kind().ends_with("declarator")
                    || matches!(child.kind(), "identifier" | "field_identifier")
                {
                    declarator_names(child, src, defs, uses);
                }
            }
        }
    }
}

/// Definitions and uses of an expression. Assignment and update targets
/// are definitions; `*p = x` defines `p`.
fn effects(node: Node, src: &[u8], defs: &mut BTreeSet<String>, uses: &mut BTreeSet<String>) {
    match node.kind() {
        "assignment_expression" => {
            let compound = node
                .child_by_field_name("operator")
                .is_some_and(|op| node_text(op, src) != "=");
            if let Some(left) = node.child_by_field_name("left") {
                targets(left, src, defs, uses);
                if compound {
                    collect_uses(left, src, uses);
                }
            }
            if let Some(right) = node.child_by_field_name("right") {
                effects(right, src, defs, uses);
            }
        }
        "update_expression" => {
            if let Some(arg) = node.child_by_field_name("argument") {
                targets(arg, src, defs, uses);
                collect_uses(arg, src, uses);
            }
        }
        "declaration" => declaration(node, src, defs, uses),
        "lambda_expression" => collect_uses(node, src, uses),
        _ => {
            if contains_binding(node) {
                for child in named_children(node) {
                    effects(child, src, defs, uses);
                }
            } else {
                collect_uses(node, src, uses);
            }
        }
    }
}

fn contains_binding(node: Node) -> bool {
    match node.kind() {
        "assignment_expression" | "update_expression" | "declaration" => true,
        "lambda_expression" => false,
        _ => named_children(node).into_iter().any(contains_binding),
    }
}

fn targets(node: Node, src: &[u8], defs: &mut BTreeSet<String>, uses: &mut BTreeSet<String>) {
    match node.kind() {
        "identifier" => {
            defs.insert(node_text(node, src).to_string());
        }
        "pointer_expression" | "field_expression" | "subscript_expression" => {
            if let Some(base) = base_name(node, src) {
                defs.insert(base);
            }
            collect_uses(node, src, uses);
        }
        "parenthesized_expression" => {
            for child in named_children(node) {
                targets(child, src, defs, uses);
            }
        }
        _ => collect_uses(node, src, uses),
    }
}

fn base_name(node: Node, src: &[u8]) -> Option<String> {
    match node.kind() {
        "identifier" => Some(node_text(node, src).to_string()),
        "pointer_expression" | "field_expression" | "subscript_expression" => {
            base_name(node.child_by_field_name("argument")?, src)
        }
        "parenthesized_expression" => base_name(*named_children(node).first()?, src),
        _ => None,
    }
}

/// Identifiers read by an expression. Member names, type names, labels,
/// namespace-qualified names and the callee of a plain call are excluded.
pub(crate) fn collect_uses(node: Node, src: &[u8], uses: &mut BTreeSet<String>) {
    match node.kind() {
        "identifier" => {
            uses.insert(node_text(node, src).to_string());
        }
        "field_identifier"
        | "type_identifier"
        | "primitive_type"
        | "type_descriptor"
        | "statement_identifier"
        | "namespace_identifier"
        | "qualified_identifier"
        | "template_argument_list"
        | "string_literal"
        | "char_literal"
        | "raw_string_literal"
        | "comment"
        | "system_lib_string" => {}
        "field_expression" => {
            if let Some(arg) = node.child_by_field_name("argument") {
                collect_uses(arg, src, uses);
            }
        }
        "call_expression" => {
            if let Some(function) = node.child_by_field_name("function") {
                if !matches!(
                    function.kind(),
                    "identifier" | "qualified_identifier" | "template_function"
                ) {
                    collect_uses(function, src, uses);
                }
            }
            if let Some(args) = node.child_by_field_name("arguments") {
                collect_uses(args, src, uses);
            }
        }
        "sizeof_expression" | "cast_expression" => {
            for child in named_children(node) {
                if child.kind() != "type_descriptor" {
                    collect_uses(child, src, uses);
                }
            }
        }
        _ => {
            for child in named_children(node) {
                collect_uses(child, src, uses);
            }
        }
    }
}
