//! Vulnerability-fix corpus ingestion.
//!
//! The corpus is JSONL, one record per line with the fields `id`, `cwe_id`,
//! `language`, `vulnerable_code`, `secure_code` and `patch`. Loading
//! normalizes line endings, drops empty and duplicate records, skips
//! unsupported languages, and quarantines records whose patch does not turn
//! the vulnerable code into the secure code.

mod diff;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use diff::{parse_unified_diff, Hunk, HunkLine, PatchError, PatchLineSets, UnifiedDiff};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Canonical CWE identifier, `CWE-<decimal>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CweId(u32);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid CWE identifier {0:?}")]
pub struct InvalidCweId(pub String);

impl CweId {
    pub fn new(number: u32) -> Self {
        CweId(number)
    }

    pub fn number(&self) -> u32 {
        self.0
    }
}

impl FromStr for CweId {
    type Err = InvalidCweId;

    /// Accepts `CWE-79`, `cwe-079` and similar; rejects anything without the prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let digits = trimmed
            .get(..4)
            .filter(|prefix| prefix.eq_ignore_ascii_case("CWE-"))
            .map(|_| &trimmed[4..])
            .ok_or_else(|| InvalidCweId(s.to_string()))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(InvalidCweId(s.to_string()));
        }
        digits
            .parse()
            .map(CweId)
            .map_err(|_| InvalidCweId(s.to_string()))
    }
}

impl TryFrom<String> for CweId {
    type Error = InvalidCweId;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<CweId> for String {
    fn from(value: CweId) -> Self {
        value.to_string()
    }
}

impl fmt::Display for CweId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CWE-{}", self.0)
    }
}

impl PartialOrd for CweId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CweId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    C,
    Cpp,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unsupported language {0:?}")]
pub struct UnsupportedLanguage(pub String);

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::C => "c",
            Language::Cpp => "cpp",
        }
    }
}

impl FromStr for Language {
    type Err = UnsupportedLanguage;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "c" => Ok(Language::C),
            "cpp" | "c++" | "cxx" => Ok(Language::Cpp),
            _ => Err(UnsupportedLanguage(s.to_string())),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One vulnerability-fix record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnFixInstance {
    pub id: String,
    pub cwe_id: CweId,
    pub language: Language,
    pub vulnerable_code: String,
    pub secure_code: String,
    pub patch: String,
}

impl VulnFixInstance {
    /// Parses the patch and checks every changed line against the matching source.
    pub fn parse_patch(&self) -> Result<PatchLineSets, PatchError> {
        parse_patch(self)
    }

    pub fn diff(&self) -> Result<UnifiedDiff, PatchError> {
        parse_unified_diff(&self.patch)
    }
}

/// Deleted lines (numbered in the vulnerable code) and added lines (numbered
/// in the secure code) of an instance's patch.
pub fn parse_patch(instance: &VulnFixInstance) -> Result<PatchLineSets, PatchError> {
    let diff = parse_unified_diff(&instance.patch)?;
    let sets = diff.line_sets();
    let vulnerable: Vec<&str> = instance.vulnerable_code.lines().collect();
    let secure: Vec<&str> = instance.secure_code.lines().collect();
    let check = |lines: &[(usize, String)], source: &[&str]| {
        for (number, text) in lines {
            let found = source.get(number.wrapping_sub(1)).copied();
            if found != Some(text.as_str()) {
                let hunk = locate_hunk(&diff, *number);
                return Err(PatchError::SourceMismatch {
                    hunk: hunk + 1,
                    header: diff
                        .hunks
                        .get(hunk)
                        .map(|h| h.header.clone())
                        .unwrap_or_default(),
                    line: *number,
                    expected: text.clone(),
                    found: found.map(str::to_string),
                });
            }
        }
        Ok(())
    };
    check(&sets.deleted_lines, &vulnerable)?;
    check(&sets.added_lines, &secure)?;
    Ok(sets)
}

fn locate_hunk(diff: &UnifiedDiff, line: usize) -> usize {
    diff.hunks
        .iter()
        .rposition(|h| h.old_start <= line || h.new_start <= line)
        .unwrap_or(0)
}

/// Converts CRLF and lone CR line endings to LF.
pub fn normalize_newlines(text: &str) -> String {
    if !text.contains('\r') {
        return text.to_string();
    }
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn trim_trailing_newlines(text: &str) -> &str {
    text.trim_end_matches('\n')
}

/// Checks that applying the patch to the vulnerable code yields the secure
/// code, ignoring trailing newlines.
pub fn check_reconstruction(instance: &VulnFixInstance) -> Result<(), String> {
    let diff = parse_unified_diff(&instance.patch).map_err(|e| e.to_string())?;
    parse_patch(instance).map_err(|e| e.to_string())?;
    let rebuilt = diff
        .apply(&instance.vulnerable_code)
        .map_err(|e| e.to_string())?;
    if trim_trailing_newlines(&rebuilt) == trim_trailing_newlines(&instance.secure_code) {
        Ok(())
    } else {
        Err("applying the patch to vulnerable_code does not reproduce secure_code".into())
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    cwe_id: String,
    language: String,
    vulnerable_code: String,
    secure_code: String,
    patch: String,
}

/// A JSONL line that could not be parsed as a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// A well-formed record kept aside because it failed validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRecord {
    pub line: usize,
    pub id: String,
    pub reason: String,
    pub record: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub records_read: usize,
    pub duplicates_removed: usize,
    pub empty_dropped: usize,
    pub unsupported_language: usize,
    pub malformed: Vec<RecordError>,
    pub rejected: Vec<RejectedRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub instances: Vec<VulnFixInstance>,
    pub report: LoadReport,
}

/// Loads and validates a JSONL corpus file.
pub fn load_corpus(path: &Path) -> Result<LoadedCorpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_corpus(&text))
}

/// Same as [`load_corpus`] over in-memory JSONL text.
pub fn parse_corpus(text: &str) -> LoadedCorpus {
    let mut out = LoadedCorpus::default();
    let mut seen: HashSet<(String, String, CweId)> = HashSet::new();

    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        out.report.records_read += 1;
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                out.report.malformed.push(RecordError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let raw: RawRecord = match serde_json::from_value(value.clone()) {
            Ok(r) => r,
            Err(e) => {
                out.report.malformed.push(RecordError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let vulnerable_code = normalize_newlines(&raw.vulnerable_code);
        let secure_code = normalize_newlines(&raw.secure_code);
        if vulnerable_code.trim().is_empty() || secure_code.trim().is_empty() {
            out.report.empty_dropped += 1;
            continue;
        }
        let Ok(language) = raw.language.parse::<Language>() else {
            log::warn!(
                "line {line_no}: skipping record {} with unsupported language {:?}",
                raw.id,
                raw.language
            );
            out.report.unsupported_language += 1;
            continue;
        };
        let reject = |reason: String| RejectedRecord {
            line: line_no,
            id: raw.id.clone(),
            reason,
            record: value.clone(),
        };
        let cwe_id = match raw.cwe_id.parse::<CweId>() {
            Ok(c) => c,
            Err(e) => {
                out.report.rejected.push(reject(e.to_string()));
                continue;
            }
        };
        if !seen.insert((vulnerable_code.clone(), secure_code.clone(), cwe_id)) {
            out.report.duplicates_removed += 1;
            continue;
        }
        let instance = VulnFixInstance {
            id: raw.id.clone(),
            cwe_id,
            language,
            vulnerable_code,
            secure_code,
            patch: normalize_newlines(&raw.patch),
        };
        if let Err(reason) = check_reconstruction(&instance) {
            out.report.rejected.push(reject(reason));
            continue;
        }
        out.instances.push(instance);
    }
    out
}

/// Serializes instances as JSONL in the ingest format.
pub fn to_jsonl(instances: &[VulnFixInstance]) -> String {
    let mut out = String::new();
    for instance in instances {
        out.push_str(&serde_json::to_string(instance).expect("instance serializes"));
        out.push('\n');
    }
    out
}

/// Writes `instances` as JSONL, creating parent directories.
pub fn write_corpus(path: &Path, instances: &[VulnFixInstance]) -> Result<(), CorpusError> {
    let err = |source| CorpusError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(err)?;
    }
    fs::write(path, to_jsonl(instances)).map_err(err)
}

/// Location of the quarantine file for a corpus: `<input>.rejected.jsonl`.
pub fn rejected_path(input: &Path) -> PathBuf {
    let mut name = input.as_os_str().to_os_string();
    name.push(".rejected.jsonl");
    PathBuf::from(name)
}

/// Writes rejected records next to the input. Returns the quarantine path.
pub fn write_rejected(input: &Path, report: &LoadReport) -> Result<PathBuf, CorpusError> {
    let path = rejected_path(input);
    let err = |source| CorpusError::Write {
        path: path.clone(),
        source,
    };
    let file = fs::File::create(&path).map_err(err)?;
    let mut writer = BufWriter::new(file);
    for rejected in &report.rejected {
        let line = serde_json::to_string(rejected).expect("rejected record serializes");
        writeln!(writer, "{line}").map_err(err)?;
    }
    writer.flush().map_err(err)?;
    Ok(path)
}

/// SHA-256 over the normalized JSONL serialization.
pub fn corpus_hash(instances: &[VulnFixInstance]) -> String {
    hex::encode(Sha256::digest(to_jsonl(instances).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, vuln: &str, sec: &str, patch: &str) -> String {
        serde_json::json!({
            "id": id,
            "cwe_id": "CWE-502",
            "language": "python",
            "vulnerable_code": vuln,
            "secure_code": sec,
            "patch": patch,
        })
        .to_string()
    }

    const VULN: &str = "import yaml\ndata = yaml.load(s)\n";
    const SEC: &str = "import yaml\ndata = yaml.safe_load(s)\n";
    const PATCH: &str = "--- a.py\n+++ b.py\n@@ -1,2 +1,2 @@\n import yaml\n-data = yaml.load(s)\n+data = yaml.safe_load(s)\n";

    #[test]
    fn cwe_ids_are_canonical() {
        assert_eq!("cwe-079".parse::<CweId>().unwrap().to_string(), "CWE-79");
        assert!("CWE-".parse::<CweId>().is_err());
        assert!("79".parse::<CweId>().is_err());
        assert!("CWE-7a".parse::<CweId>().is_err());
    }

    #[test]
    fn duplicates_are_removed() {
        let line = record("a", VULN, SEC, PATCH);
        let text = format!("{line}\n{}\n", record("b", VULN, SEC, PATCH));
        let loaded = parse_corpus(&text);
        assert_eq!(loaded.instances.len(), 1);
        assert_eq!(loaded.instances[0].id, "a");
        assert_eq!(loaded.report.duplicates_removed, 1);
    }

    #[test]
    fn empty_secure_code_is_dropped() {
        let text = record("a", VULN, "   \n", PATCH);
        let loaded = parse_corpus(&text);
        assert!(loaded.instances.is_empty());
        assert_eq!(loaded.report.empty_dropped, 1);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let text = format!("{}\n{{not json\n", record("a", VULN, SEC, PATCH));
        let loaded = parse_corpus(&text);
        assert_eq!(loaded.instances.len(), 1);
        assert_eq!(loaded.report.malformed.len(), 1);
        assert_eq!(loaded.report.malformed[0].line, 2);
    }

    #[test]
    fn unsupported_language_is_skipped() {
        let text = record("a", VULN, SEC, PATCH).replace("\"python\"", "\"java\"");
        let loaded = parse_corpus(&text);
        assert!(loaded.instances.is_empty());
        assert_eq!(loaded.report.unsupported_language, 1);
    }

    #[test]
    fn inconsistent_patch_is_quarantined() {
        let text = record("a", VULN, "import yaml\ndata = other(s)\n", PATCH);
        let loaded = parse_corpus(&text);
        assert!(loaded.instances.is_empty());
        assert_eq!(loaded.report.rejected.len(), 1);
        assert_eq!(loaded.report.rejected[0].id, "a");
    }

    #[test]
    fn crlf_is_normalized() {
        let text = record(
            "a",
            &VULN.replace('\n', "\r\n"),
            &SEC.replace('\n', "\r\n"),
            &PATCH.replace('\n', "\r\n"),
        );
        let loaded = parse_corpus(&text);
        assert_eq!(loaded.instances.len(), 1);
        assert_eq!(loaded.instances[0].vulnerable_code, VULN);
    }

    #[test]
    fn parse_patch_maps_lines_into_sources() {
        let loaded = parse_corpus(&record("a", VULN, SEC, PATCH));
        let sets = loaded.instances[0].parse_patch().unwrap();
        assert_eq!(
            sets.deleted_lines,
            vec![(2, "data = yaml.load(s)".to_string())]
        );
        assert_eq!(
            sets.added_lines,
            vec![(2, "data = yaml.safe_load(s)".to_string())]
        );
    }

    #[test]
    fn rejected_path_appends_suffix() {
        assert_eq!(
            rejected_path(Path::new("/x/data.jsonl")),
            PathBuf::from("/x/data.jsonl.rejected.jsonl")
        );
    }
}
