//! `{name}` placeholder substitution.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("placeholder {{{0}}} has no value")]
    Unresolved(String),
}

/// Replaces every `{name}` (name = ASCII letters, digits, `_`) in one pass.
/// Substituted values are not scanned again, so code containing braces is
/// safe. A placeholder without a value is an error; other braces are copied.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| TemplateError::Unresolved(name.to_string()))?;
            out.push_str(value);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Placeholder names left in `text`.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let n = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if n > 0 && after[n..].starts_with('}') {
            out.push(after[..n].to_string());
        }
        rest = after;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_once() {
        let got = render("a {x} b {y}", &[("x", "{y}"), ("y", "2")]).unwrap();
        assert_eq!(got, "a {y} b 2");
    }

    #[test]
    fn unresolved_is_an_error() {
        assert_eq!(
            render("{missing}", &[]),
            Err(TemplateError::Unresolved("missing".into()))
        );
    }

    #[test]
    fn other_braces_are_literal() {
        assert_eq!(
            render("f() { return {}; } {a b}", &[]).unwrap(),
            "f() { return {}; } {a b}"
        );
        assert_eq!(placeholders("x {a} {b c} {d}"), vec!["a", "d"]);
    }
}
