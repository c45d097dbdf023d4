//! Unified diff parsing and application.
//!
//! Only single-file diffs are accepted. Hunk bodies are validated against
//! their `@@ -a,b +c,d @@` headers, and every context or deleted line is
//! checked against the source when the diff is applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Deleted and added lines of a patch, keyed by their line number in the
/// vulnerable and secure source respectively (1-based).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLineSets {
    pub deleted_lines: Vec<(usize, String)>,
    pub added_lines: Vec<(usize, String)>,
}

impl PatchLineSets {
    pub fn is_empty(&self) -> bool {
        self.deleted_lines.is_empty() && self.added_lines.is_empty()
    }

    /// True when every changed line is blank, i.e. the patch only touches whitespace.
    pub fn is_whitespace_only(&self) -> bool {
        self.deleted_lines
            .iter()
            .chain(&self.added_lines)
            .all(|(_, text)| text.trim().is_empty())
    }

    pub fn deleted_numbers(&self) -> impl Iterator<Item = usize> + '_ {
        self.deleted_lines.iter().map(|(n, _)| *n)
    }

    pub fn added_numbers(&self) -> impl Iterator<Item = usize> + '_ {
        self.added_lines.iter().map(|(n, _)| *n)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatchError {
    #[error("malformed hunk header at diff line {line}: {text:?}")]
    MalformedHeader { line: usize, text: String },
    #[error(
        "hunk {hunk} ({header}) declares -{expected_old}/+{expected_new} lines but its body has -{found_old}/+{found_new}"
    )]
    HunkMismatch {
        hunk: usize,
        header: String,
        expected_old: usize,
        expected_new: usize,
        found_old: usize,
        found_new: usize,
    },
    #[error("unexpected line outside any hunk at diff line {line}: {text:?}")]
    UnexpectedLine { line: usize, text: String },
    #[error("diff touches {files} files; only single-file patches are supported")]
    MultiFile { files: usize },
    #[error("hunk {hunk} ({header}) does not match the source at line {line}: expected {expected:?}, found {found:?}")]
    SourceMismatch {
        hunk: usize,
        header: String,
        line: usize,
        expected: String,
        found: Option<String>,
    },
    #[error("hunk {hunk} ({header}) overlaps or precedes the previous hunk")]
    HunkOrder { hunk: usize, header: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Deleted(String),
    Added(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub header: String,
    pub old_start: usize,
    pub old_count: usize,
    pub new_start: usize,
    pub new_count: usize,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    /// First old-side line covered by the hunk. For pure insertions
    /// (`old_count == 0`) the header names the line *after which* text is added.
    fn first_old(&self) -> usize {
        if self.old_count == 0 {
            self.old_start + 1
        } else {
            self.old_start
        }
    }

    fn first_new(&self) -> usize {
        if self.new_count == 0 {
            self.new_start + 1
        } else {
            self.new_start
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnifiedDiff {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

fn parse_range(range: &str) -> Option<(usize, usize)> {
    match range.split_once(',') {
        Some((start, count)) => Some((start.parse().ok()?, count.parse().ok()?)),
        None => Some((range.parse().ok()?, 1)),
    }
}

fn parse_hunk_header(text: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = text.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let mut parts = rest[..end].split_whitespace();
    let old = parts.next()?.strip_prefix('-')?;
    let new = parts.next()?.strip_prefix('+')?;
    if parts.next().is_some() {
        return None;
    }
    let (old_start, old_count) = parse_range(old)?;
    let (new_start, new_count) = parse_range(new)?;
    Some((old_start, old_count, new_start, new_count))
}

fn header_path(text: &str) -> String {
    let path = text[4..].split('\t').next().unwrap_or("").trim();
    path.to_string()
}

/// Parses a unified diff. Headers (`---`/`+++`, `diff --git`, `index`) are
/// optional; a diff consisting only of hunks is accepted.
pub fn parse_unified_diff(text: &str) -> Result<UnifiedDiff, PatchError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut diff = UnifiedDiff::default();
    let mut file_headers = 0usize;
    let mut i = 0;

    while i < lines.len() {
        let line = lines[i];
        if line.starts_with("@@") {
            let (old_start, old_count, new_start, new_count) =
                parse_hunk_header(line).ok_or_else(|| PatchError::MalformedHeader {
                    line: i + 1,
                    text: line.to_string(),
                })?;
            let hunk_index = diff.hunks.len() + 1;
            let mut hunk = Hunk {
                header: line.to_string(),
                old_start,
                old_count,
                new_start,
                new_count,
                lines: Vec::new(),
            };
            let (mut old_seen, mut new_seen) = (0usize, 0usize);
            i += 1;
            while i < lines.len() && (old_seen < old_count || new_seen < new_count) {
                let body = lines[i];
                match body.as_bytes().first() {
                    Some(b' ') => {
                        hunk.lines.push(HunkLine::Context(body[1..].to_string()));
                        old_seen += 1;
                        new_seen += 1;
                    }
                    None => {
                        // Trailing whitespace stripped by an editor: an empty context line.
                        hunk.lines.push(HunkLine::Context(String::new()));
                        old_seen += 1;
                        new_seen += 1;
                    }
                    Some(b'-') => {
                        hunk.lines.push(HunkLine::Deleted(body[1..].to_string()));
                        old_seen += 1;
                    }
                    Some(b'+') => {
                        hunk.lines.push(HunkLine::Added(body[1..].to_string()));
                        new_seen += 1;
                    }
                    Some(b'\\') => {}
                    _ => break,
                }
                i += 1;
            }
            // A "\ No newline at end of file" marker may trail the body.
            while i < lines.len() && lines[i].starts_with('\\') {
                i += 1;
            }
            let overflow = i < lines.len()
                && matches!(lines[i].as_bytes().first(), Some(b' ' | b'+'))
                || (i < lines.len()
                    && lines[i].starts_with('-')
                    && !(lines[i].starts_with("--- ")
                        && lines.get(i + 1).is_some_and(|l| l.starts_with("+++ "))));
            if old_seen != old_count || new_seen != new_count || overflow {
                let (mut found_old, mut found_new) = (old_seen, new_seen);
                if overflow {
                    // Count the surplus body lines for the error message.
                    let mut j = i;
                    while j < lines.len() {
                        match lines[j].as_bytes().first() {
                            Some(b' ') => {
                                found_old += 1;
                                found_new += 1;
                            }
                            Some(b'-') if !lines[j].starts_with("--- ") => found_old += 1,
                            Some(b'+') if !lines[j].starts_with("+++ ") => found_new += 1,
                            _ => break,
                        }
                        j += 1;
                    }
                }
                return Err(PatchError::HunkMismatch {
                    hunk: hunk_index,
                    header: hunk.header,
                    expected_old: old_count,
                    expected_new: new_count,
                    found_old,
                    found_new,
                });
            }
            if let Some(prev) = diff.hunks.last() {
                if hunk.first_old() < prev.first_old() + prev.old_count {
                    return Err(PatchError::HunkOrder {
                        hunk: hunk_index,
                        header: hunk.header,
                    });
                }
            }
            diff.hunks.push(hunk);
            continue;
        }

        if line.starts_with("--- ") && lines.get(i + 1).is_some_and(|l| l.starts_with("+++ ")) {
            file_headers += 1;
            if file_headers > 1 {
                return Err(PatchError::MultiFile {
                    files: file_headers,
                });
            }
            diff.old_path = Some(header_path(line));
            diff.new_path = Some(header_path(lines[i + 1]));
            i += 2;
            continue;
        }

        let is_preamble = line.trim().is_empty()
            || line.starts_with("diff ")
            || line.starts_with("index ")
            || line.starts_with("new file mode")
            || line.starts_with("deleted file mode")
            || line.starts_with("similarity index")
            || line.starts_with("old mode")
            || line.starts_with("new mode");
        if line.starts_with("diff --git") && !diff.hunks.is_empty() {
            return Err(PatchError::MultiFile { files: 2 });
        }
        if !is_preamble {
            return Err(PatchError::UnexpectedLine {
                line: i + 1,
                text: line.to_string(),
            });
        }
        i += 1;
    }
    Ok(diff)
}

impl UnifiedDiff {
    /// Deleted lines with their old-side numbers and added lines with their
    /// new-side numbers. Context lines are excluded.
    pub fn line_sets(&self) -> PatchLineSets {
        let mut sets = PatchLineSets::default();
        for hunk in &self.hunks {
            let mut old_line = hunk.first_old();
            let mut new_line = hunk.first_new();
            for line in &hunk.lines {
                match line {
                    HunkLine::Context(_) => {
                        old_line += 1;
                        new_line += 1;
                    }
                    HunkLine::Deleted(text) => {
                        sets.deleted_lines.push((old_line, text.clone()));
                        old_line += 1;
                    }
                    HunkLine::Added(text) => {
                        sets.added_lines.push((new_line, text.clone()));
                        new_line += 1;
                    }
                }
            }
        }
        sets
    }

    /// Applies the diff to `old`, checking every context and deleted line.
    /// The result has no trailing newline.
    pub fn apply(&self, old: &str) -> Result<String, PatchError> {
        let source: Vec<&str> = old.lines().collect();
        let mut out: Vec<&str> = Vec::with_capacity(source.len());
        let mut cursor = 1usize;
        for (index, hunk) in self.hunks.iter().enumerate() {
            let start = hunk.first_old();
            while cursor < start {
                let Some(line) = source.get(cursor - 1) else {
                    return Err(PatchError::SourceMismatch {
                        hunk: index + 1,
                        header: hunk.header.clone(),
                        line: cursor,
                        expected: String::new(),
                        found: None,
                    });
                };
                out.push(line);
                cursor += 1;
            }
            for line in &hunk.lines {
                match line {
                    HunkLine::Context(text) | HunkLine::Deleted(text) => {
                        let found = source.get(cursor - 1).copied();
                        if found != Some(text.as_str()) {
                            return Err(PatchError::SourceMismatch {
                                hunk: index + 1,
                                header: hunk.header.clone(),
                                line: cursor,
                                expected: text.clone(),
                                found: found.map(str::to_string),
                            });
                        }
                        if let HunkLine::Context(text) = line {
                            out.push(text);
                        }
                        cursor += 1;
                    }
                    HunkLine::Added(text) => out.push(text),
                }
            }
        }
        while cursor <= source.len() {
            out.push(source[cursor - 1]);
            cursor += 1;
        }
        Ok(out.join("\n"))
    }

    /// Pairs `(old_line, new_line)` of every line the diff leaves unchanged,
    /// given the line counts of both versions.
    pub fn unchanged_line_pairs(&self, old_len: usize, new_len: usize) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        let (mut old_line, mut new_line) = (1usize, 1usize);
        for hunk in &self.hunks {
            while old_line < hunk.first_old() && new_line < hunk.first_new() {
                pairs.push((old_line, new_line));
                old_line += 1;
                new_line += 1;
            }
            old_line = hunk.first_old();
            new_line = hunk.first_new();
            for line in &hunk.lines {
                match line {
                    HunkLine::Context(_) => {
                        pairs.push((old_line, new_line));
                        old_line += 1;
                        new_line += 1;
                    }
                    HunkLine::Deleted(_) => old_line += 1,
                    HunkLine::Added(_) => new_line += 1,
                }
            }
        }
        while old_line <= old_len && new_line <= new_len {
            pairs.push((old_line, new_line));
            old_line += 1;
            new_line += 1;
        }
        pairs
    }
}
