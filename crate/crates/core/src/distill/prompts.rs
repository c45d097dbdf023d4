//! Prompt text for guideline and cause distillation.

use std::fmt::Write as _;

use crate::corpus::VulnFixInstance;

const GUIDELINE_HEAD: &str = "Extract common security knowledge from the provided multiple cases. Identify and summarize distinctive guidelines.

# Output Format
Provide a clear and concise summary of each guideline in a sentence. Ensure that each guideline is distinct.

# Output Example
- Use parameterized queries instead of string interpolation or concatenation to prevent SQL injection attacks.


Extract security guidelines from the following cases:

";

const GUIDELINE_MERGE_HEAD: &str = "Merge extracted security guidelines by combining those with identical meanings into a single, clear, and concise sentence for each guideline.";

const CAUSE_HEAD: &str = "Identify and summarize the common cause of the vulnerabilities in the provided multiple cases in a concise and informative paragraph. The output should at least include the name of the vulnerability and its cause. Focus solely on the underlying cause of the vulnerability without mentioning any fixing information.
The output should be a text-only paragraph, without any other structure.

Summarize the vulnerability cause of the following cases:

";

const CAUSE_MERGE_HEAD: &str = "Merge the extracted vulnerability causes into one concise and informative paragraph. Keep the name of the vulnerability and every distinct cause, and combine causes with identical meanings. Do not mention any fixing information.
The output should be a text-only paragraph, without any other structure.";

fn case_list(out: &mut String, cases: &[&VulnFixInstance]) {
    out.push_str("# Vulnerability-Fix Data List\n");
    for (i, case) in cases.iter().enumerate() {
        let _ = write!(
            out,
            "\n## Case {}\n### Vulnerable Code\n{}\n\n### Security Patch\n{}\n",
            i + 1,
            case.vulnerable_code.trim_end_matches('\n'),
            case.patch.trim_end_matches('\n'),
        );
    }
}

fn numbered(out: &mut String, head: &str, label: &str, snippets: &[String]) {
    out.push_str(head);
    out.push('\n');
    for (i, s) in snippets.iter().enumerate() {
        let _ = write!(out, "\n# {label} {}\n{}\n", i + 1, s.trim_end_matches('\n'));
    }
}

/// First-level guideline extraction over a batch of instances.
pub fn guideline_prompt(cases: &[&VulnFixInstance]) -> String {
    let mut out = String::from(GUIDELINE_HEAD);
    case_list(&mut out, cases);
    out
}

/// Merge prompt over a batch of guideline snippets.
pub fn guideline_merge_prompt(snippets: &[String]) -> String {
    let mut out = String::new();
    numbered(
        &mut out,
        GUIDELINE_MERGE_HEAD,
        "Extracted Guidelines",
        snippets,
    );
    out
}

/// First-level cause summarization over a batch of instances.
pub fn cause_prompt(cases: &[&VulnFixInstance]) -> String {
    let mut out = String::from(CAUSE_HEAD);
    case_list(&mut out, cases);
    out
}

/// Merge prompt over a batch of cause paragraphs.
pub fn cause_merge_prompt(snippets: &[String]) -> String {
    let mut out = String::new();
    numbered(&mut out, CAUSE_MERGE_HEAD, "Extracted Causes", snippets);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CweId, Language};

    fn case(code: &str, patch: &str) -> VulnFixInstance {
        VulnFixInstance {
            id: "x".into(),
            cwe_id: CweId::new(89),
            language: Language::Python,
            vulnerable_code: code.into(),
            secure_code: code.into(),
            patch: patch.into(),
        }
    }

    #[test]
    fn guideline_prompt_layout() {
        let a = case("a()\n", "--- a\n+++ b\n");
        let b = case("b()", "-b()\n+c()");
        let prompt = guideline_prompt(&[&a, &b]);
        assert!(prompt
            .starts_with("Extract common security knowledge from the provided multiple cases."));
        assert!(prompt.ends_with(
            "# Vulnerability-Fix Data List\n\n## Case 1\n### Vulnerable Code\na()\n\n### Security Patch\n--- a\n+++ b\n\n## Case 2\n### Vulnerable Code\nb()\n\n### Security Patch\n-b()\n+c()\n"
        ));
    }

    #[test]
    fn merge_prompt_layout() {
        let prompt = guideline_merge_prompt(&["- a".into(), "- b\n".into()]);
        assert_eq!(
            prompt,
            format!("{GUIDELINE_MERGE_HEAD}\n\n# Extracted Guidelines 1\n- a\n\n# Extracted Guidelines 2\n- b\n")
        );
        assert!(cause_merge_prompt(&["x".into()]).ends_with("\n# Extracted Causes 1\nx\n"));
    }
}
