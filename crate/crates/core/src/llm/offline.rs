use super::{
    last_fenced_block, ClientError, CompletionClient, CompletionRequest, PromptStyle, Stage,
};

/// Deterministic stand-in model that answers from the prompt text alone.
///
/// Guidelines are derived from the patch lines quoted in the prompt, causes
/// from the identifiers on deleted lines, drafts and generations echo the
/// task code. Useful for offline builds, demos and reproducibility checks.
#[derive(Debug, Clone, Default)]
pub struct OfflineClient;

const MAX_ITEMS: usize = 12;

const KEYWORDS: &[&str] = &[
    "and", "as", "assert", "break", "case", "char", "class", "const", "continue", "def", "del",
    "do", "elif", "else", "except", "false", "False", "finally", "for", "from", "if", "import",
    "in", "int", "is", "lambda", "None", "not", "or", "pass", "raise", "return", "self", "sizeof",
    "static", "struct", "switch", "true", "True", "try", "unsigned", "void", "while", "with",
    "yield",
];

impl CompletionClient for OfflineClient {
    fn model(&self) -> String {
        "offline".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let prompt = request.prompt.as_str();
        Ok(match request.stage {
            Stage::Guideline => guidelines(prompt),
            Stage::GuidelineMerge => merge_bullets(prompt),
            Stage::Cause => cause(prompt),
            Stage::CauseMerge => merge_paragraphs(prompt),
            Stage::CauseAnalysis => {
                let code = last_fenced_block(prompt).unwrap_or(prompt);
                let names = identifiers(code.lines());
                if names.is_empty() {
                    "The potential vulnerability is unclear because the task exposes no identifiers.".into()
                } else {
                    format!(
                        "The potential vulnerability concerns code that uses {} without validating the data that flows through them.",
                        quoted(&names)
                    )
                }
            }
            Stage::Draft => match request.style {
                PromptStyle::Chat => last_fenced_block(prompt).unwrap_or(prompt).to_string(),
                PromptStyle::Completion => prompt.to_string(),
            },
            Stage::Generate => match last_fenced_block(prompt) {
                Some(code) => code.to_string(),
                None => prompt.to_string(),
            },
        })
    }
}

/// Added and deleted lines of each `### Security Patch` section.
fn patch_lines(prompt: &str) -> Vec<(Vec<String>, Vec<String>)> {
    let mut cases = Vec::new();
    let mut current: Option<(Vec<String>, Vec<String>)> = None;
    for line in prompt.lines() {
        if line.starts_with("### Security Patch") {
            if let Some(c) = current.take() {
                cases.push(c);
            }
            current = Some((Vec::new(), Vec::new()));
            continue;
        }
        if line.starts_with("## ") || line.starts_with("### ") || line.starts_with("# ") {
            if let Some(c) = current.take() {
                cases.push(c);
            }
            continue;
        }
        let Some((added, deleted)) = current.as_mut() else {
            continue;
        };
        if line.starts_with("+++") || line.starts_with("---") {
            continue;
        }
        if let Some(rest) = line.strip_prefix('+') {
            if !rest.trim().is_empty() {
                added.push(rest.trim().to_string());
            }
        } else if let Some(rest) = line.strip_prefix('-') {
            if !rest.trim().is_empty() {
                deleted.push(rest.trim().to_string());
            }
        }
    }
    cases.extend(current);
    cases
}

fn guidelines(prompt: &str) -> String {
    let mut bullets: Vec<String> = Vec::new();
    for (added, deleted) in patch_lines(prompt) {
        let bullet = match (added.first(), deleted.first()) {
            (Some(a), Some(d)) => format!("- Use `{a}` instead of `{d}`."),
            (Some(a), None) => format!("- Add the check `{a}` before using untrusted data."),
            (None, Some(d)) => format!("- Avoid `{d}`."),
            (None, None) => continue,
        };
        if !bullets.contains(&bullet) {
            bullets.push(bullet);
        }
    }
    if bullets.is_empty() {
        bullets.push("- Validate untrusted input before it reaches sensitive operations.".into());
    }
    bullets.truncate(MAX_ITEMS);
    bullets.join("\n")
}

fn merge_bullets(prompt: &str) -> String {
    let mut bullets: Vec<&str> = Vec::new();
    for line in prompt.lines() {
        let line = line.trim();
        if line.starts_with("- ") && !bullets.contains(&line) {
            bullets.push(line);
        }
    }
    bullets.truncate(MAX_ITEMS);
    bullets.join("\n")
}

fn cause(prompt: &str) -> String {
    let cases = patch_lines(prompt);
    let deleted = cases.iter().flat_map(|(_, d)| d.iter().map(String::as_str));
    let mut names = identifiers(deleted);
    if names.is_empty() {
        names = identifiers(cases.iter().flat_map(|(a, _)| a.iter().map(String::as_str)));
    }
    if names.is_empty() {
        return "The vulnerability is caused by missing validation of untrusted input.".into();
    }
    format!(
        "The vulnerability is caused by code that uses {} on data that is not validated or restricted.",
        quoted(&names)
    )
}

fn merge_paragraphs(prompt: &str) -> String {
    let mut sentences: Vec<&str> = Vec::new();
    let mut in_section = false;
    for line in prompt.lines() {
        if line.starts_with("# ") {
            in_section = line.starts_with("# Extracted");
            continue;
        }
        if !in_section {
            continue;
        }
        for sentence in line.split_inclusive(". ").map(str::trim) {
            if !sentence.is_empty() && !sentences.contains(&sentence) {
                sentences.push(sentence);
            }
        }
    }
    sentences.join(" ")
}

/// Identifier and dotted-name tokens in first-occurrence order.
fn identifiers<'a>(lines: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in lines {
        for raw in line.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.')) {
            let token = raw.trim_matches('.');
            let starts_ok = token
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
            if starts_ok
                && token.len() > 1
                && !KEYWORDS.contains(&token)
                && !out.iter().any(|t| t == token)
            {
                out.push(token.to_string());
            }
        }
    }
    out.truncate(MAX_ITEMS);
    out
}

fn quoted(names: &[String]) -> String {
    names
        .iter()
        .map(|n| format!("`{n}`"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(stage: Stage, prompt: &str) -> String {
        let req = CompletionRequest::new(stage, prompt, PromptStyle::Chat, 0.0);
        OfflineClient.complete(&req).unwrap()
    }

    #[test]
    fn guideline_from_patch() {
        let prompt = "# Vulnerability-Fix Data List\n\n## Case 1\n### Vulnerable Code\nx\n\n### Security Patch\n--- a\n+++ b\n@@ -1 +1 @@\n-data = yaml.load(c)\n+data = yaml.safe_load(c)\n";
        assert_eq!(
            ask(Stage::Guideline, prompt),
            "- Use `data = yaml.safe_load(c)` instead of `data = yaml.load(c)`."
        );
        let cause = ask(Stage::Cause, prompt);
        assert!(cause.contains("`yaml.load`"), "{cause}");
    }

    #[test]
    fn merge_deduplicates() {
        let prompt =
            "Merge.\n\n# Extracted Guidelines 1\n- a\n- b\n\n# Extracted Guidelines 2\n- b\n- c\n";
        assert_eq!(ask(Stage::GuidelineMerge, prompt), "- a\n- b\n- c");
    }

    #[test]
    fn answers_are_deterministic() {
        let prompt = "Please identify:\n```python\nos.system(cmd)\n```\n";
        assert_eq!(
            ask(Stage::CauseAnalysis, prompt),
            ask(Stage::CauseAnalysis, prompt)
        );
        assert_eq!(ask(Stage::Draft, prompt), "os.system(cmd)");
    }
}
