//! Per-CWE guideline and cause distillation.
//!
//! Instances are grouped by CWE. Each cluster is cut into batches of at most
//! `b` instances; every batch is summarized, and the resulting snippets are
//! merged batch-wise, level by level, until one snippet is left. The
//! recursion runs once with the guideline prompts and once with the cause
//! prompts.

pub mod prompts;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CweId, VulnFixInstance};
use crate::graph::extract_api_calls;
use crate::llm::{
    complete_nonempty, ClientError, CompletionClient, CompletionRequest, PromptStyle, Stage,
};

/// Distilled knowledge for one CWE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweEntry {
    pub cwe_id: CweId,
    pub guideline: String,
    pub cause_summary: String,
    /// Call name to number of occurrences across member instances.
    pub api_vocabulary: BTreeMap<String, usize>,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("batch size must be at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("{cwe}: {stage} call failed: {source}")]
    Client {
        cwe: CweId,
        stage: &'static str,
        #[source]
        source: ClientError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillOptions {
    pub batch_size: usize,
    pub temperature: f64,
    pub style: PromptStyle,
}

impl Default for DistillOptions {
    fn default() -> Self {
        DistillOptions {
            batch_size: 10,
            temperature: 0.0,
            style: PromptStyle::Chat,
        }
    }
}

/// Number of model calls made at each level of one recursion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursionStats {
    pub calls_per_level: Vec<usize>,
}

impl RecursionStats {
    pub fn total_calls(&self) -> usize {
        self.calls_per_level.iter().sum()
    }
}

/// Groups instances by CWE, keeping corpus order inside each cluster.
pub fn cluster(instances: &[VulnFixInstance]) -> BTreeMap<CweId, Vec<&VulnFixInstance>> {
    let mut out: BTreeMap<CweId, Vec<&VulnFixInstance>> = BTreeMap::new();
    for inst in instances {
        out.entry(inst.cwe_id).or_default().push(inst);
    }
    out
}

/// Expected call count of one recursion over `n` items with batch size `b`.
pub fn expected_calls(n: usize, b: usize) -> usize {
    if n == 0 || b < 2 {
        return 0;
    }
    let mut level = n.div_ceil(b);
    let mut total = level;
    while level > 1 {
        level = level.div_ceil(b);
        total += level;
    }
    total
}

/// Bottom-up summarization: one `first` call per batch of `items`, then
/// `merge` calls over batches of snippets until a single snippet remains.
/// Batches within a level run concurrently.
pub fn summarize_recursive<I, F, M>(
    items: &[I],
    batch_size: usize,
    client: &dyn CompletionClient,
    first: F,
    merge: M,
) -> Result<(String, RecursionStats), ClientError>
where
    I: Sync,
    F: Fn(&[I]) -> CompletionRequest + Sync,
    M: Fn(&[String]) -> CompletionRequest + Sync,
{
    assert!(batch_size >= 2, "batch size must be at least 2");
    assert!(!items.is_empty(), "nothing to summarize");
    let mut stats = RecursionStats::default();
    let call =
        |req: CompletionRequest| complete_nonempty(client, &req).map(|s| s.trim().to_string());

    let mut snippets: Vec<String> = items
        .par_chunks(batch_size)
        .map(|batch| call(first(batch)))
        .collect::<Result<_, _>>()?;
    stats.calls_per_level.push(snippets.len());
    while snippets.len() > 1 {
        snippets = snippets
            .par_chunks(batch_size)
            .map(|batch| call(merge(batch)))
            .collect::<Result<_, _>>()?;
        stats.calls_per_level.push(snippets.len());
    }
    let last = snippets.pop().expect("one snippet remains");
    Ok((last, stats))
}

/// Guideline and cause summaries of one cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSummary {
    pub guideline: String,
    pub cause_summary: String,
    pub guideline_stats: RecursionStats,
    pub cause_stats: RecursionStats,
}

pub fn summarize_cluster(
    cluster: &[&VulnFixInstance],
    client: &dyn CompletionClient,
    options: &DistillOptions,
) -> Result<ClusterSummary, DistillError> {
    if options.batch_size < 2 {
        return Err(DistillError::BatchTooSmall(options.batch_size));
    }
    let Some(first) = cluster.first() else {
        return Err(DistillError::EmptyCluster);
    };
    let cwe = first.cwe_id;
    let req =
        |stage, prompt| CompletionRequest::new(stage, prompt, options.style, options.temperature);
    let (guideline, guideline_stats) = summarize_recursive(
        cluster,
        options.batch_size,
        client,
        |b| req(Stage::Guideline, prompts::guideline_prompt(b)),
        |s| req(Stage::GuidelineMerge, prompts::guideline_merge_prompt(s)),
    )
    .map_err(|source| DistillError::Client {
        cwe,
        stage: "guideline",
        source,
    })?;
    let (cause_summary, cause_stats) = summarize_recursive(
        cluster,
        options.batch_size,
        client,
        |b| req(Stage::Cause, prompts::cause_prompt(b)),
        |s| req(Stage::CauseMerge, prompts::cause_merge_prompt(s)),
    )
    .map_err(|source| DistillError::Client {
        cwe,
        stage: "cause",
        source,
    })?;
    Ok(ClusterSummary {
        guideline,
        cause_summary,
        guideline_stats,
        cause_stats,
    })
}

/// Multiset of call names over the vulnerable and secure code of `members`.
/// Sources that fail to parse contribute nothing.
pub fn api_vocabulary(members: &[&VulnFixInstance]) -> BTreeMap<String, usize> {
    let mut vocab = BTreeMap::new();
    for inst in members {
        for code in [&inst.vulnerable_code, &inst.secure_code] {
            match extract_api_calls(code, inst.language) {
                Ok(calls) => {
                    for c in calls {
                        *vocab.entry(c).or_insert(0) += 1;
                    }
                }
                Err(e) => log::warn!("{}: no API calls extracted: {e}", inst.id),
            }
        }
    }
    vocab
}

/// Distills one cluster into an entry.
pub fn build_entry(
    members: &[&VulnFixInstance],
    client: &dyn CompletionClient,
    options: &DistillOptions,
) -> Result<CweEntry, DistillError> {
    let summary = summarize_cluster(members, client, options)?;
    Ok(CweEntry {
        cwe_id: members[0].cwe_id,
        guideline: summary.guideline,
        cause_summary: summary.cause_summary,
        api_vocabulary: api_vocabulary(members),
        member_ids: members.iter().map(|m| m.id.clone()).collect(),
    })
}

/// Distills every cluster concurrently. Results are in CWE order; a failing
/// cluster does not stop the others.
pub fn build_entries(
    clusters: &BTreeMap<CweId, Vec<&VulnFixInstance>>,
    client: &dyn CompletionClient,
    options: &DistillOptions,
) -> Vec<(CweId, Result<CweEntry, DistillError>)> {
    let work: Vec<(&CweId, &Vec<&VulnFixInstance>)> = clusters.iter().collect();
    work.par_iter()
        .map(|(cwe, members)| (**cwe, build_entry(members, client, options)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use crate::llm::stub::{CountingClient, FailingClient, ScriptedClient};

    fn inst(id: &str, cwe: u32, vuln: &str, sec: &str) -> VulnFixInstance {
        VulnFixInstance {
            id: id.into(),
            cwe_id: CweId::new(cwe),
            language: Language::Python,
            vulnerable_code: vuln.into(),
            secure_code: sec.into(),
            patch: String::new(),
        }
    }

    #[test]
    fn clusters_preserve_order() {
        let xs = vec![
            inst("i1", 1, "", ""),
            inst("i2", 1, "", ""),
            inst("i3", 2, "", ""),
        ];
        let c = cluster(&xs);
        assert_eq!(c.len(), 2);
        let ids: Vec<_> = c[&CweId::new(1)].iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, vec!["i1", "i2"]);
        assert_eq!(c[&CweId::new(2)].len(), 1);
        assert!(cluster(&[]).is_empty());
    }

    fn count(n: usize, b: usize) -> RecursionStats {
        let items: Vec<usize> = (0..n).collect();
        let client = CountingClient::new();
        let req = |p: String| CompletionRequest::new(Stage::Guideline, p, PromptStyle::Chat, 0.0);
        let (_, stats) = summarize_recursive(
            &items,
            b,
            &client,
            |batch| req(format!("{batch:?}")),
            |snips| req(snips.join("|")),
        )
        .unwrap();
        assert_eq!(client.calls(), stats.total_calls());
        stats
    }

    #[test]
    fn call_counts() {
        assert_eq!(count(1, 10).calls_per_level, vec![1]);
        assert_eq!(count(23, 10).calls_per_level, vec![3, 1]);
        assert_eq!(count(100, 10).calls_per_level, vec![10, 1]);
        assert_eq!(count(101, 10).calls_per_level, vec![11, 2, 1]);
        for n in [1, 2, 9, 10, 11, 99, 1000] {
            for b in [2, 3, 10] {
                assert_eq!(
                    count(n, b).total_calls(),
                    expected_calls(n, b),
                    "n={n} b={b}"
                );
            }
        }
    }

    #[test]
    fn fixed_replies_pass_through() {
        let xs = [inst("a", 79, "x = f(y)\n", "x = g(y)\n")];
        let members: Vec<&VulnFixInstance> = xs.iter().collect();
        let client = ScriptedClient::new(|r| {
            Ok(match r.stage {
                Stage::Guideline | Stage::GuidelineMerge => "G".into(),
                _ => "C".into(),
            })
        });
        let entry = build_entry(&members, &client, &DistillOptions::default()).unwrap();
        assert_eq!(entry.guideline, "G");
        assert_eq!(entry.cause_summary, "C");
        assert_eq!(entry.member_ids, vec!["a"]);
        let expected: BTreeMap<String, usize> = [("f".to_string(), 1), ("g".to_string(), 1)].into();
        assert_eq!(entry.api_vocabulary, expected);
    }

    #[test]
    fn call_free_members_give_empty_vocabulary() {
        let xs = [inst("a", 79, "x = 1\n", "x = 2\n")];
        let members: Vec<&VulnFixInstance> = xs.iter().collect();
        assert!(api_vocabulary(&members).is_empty());
    }

    #[test]
    fn failures_and_bad_batch_sizes() {
        let xs = [inst("a", 79, "", "")];
        let members: Vec<&VulnFixInstance> = xs.iter().collect();
        let err = build_entry(
            &members,
            &FailingClient::new("down"),
            &DistillOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DistillError::Client {
                stage: "guideline",
                ..
            }
        ));
        let opts = DistillOptions {
            batch_size: 1,
            ..Default::default()
        };
        assert!(matches!(
            build_entry(&members, &CountingClient::new(), &opts),
            Err(DistillError::BatchTooSmall(1))
        ));
        let blank = ScriptedClient::new(|_| Ok(String::new()));
        let err = build_entry(&members, &blank, &DistillOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            DistillError::Client {
                source: ClientError::EmptyResponse,
                ..
            }
        ));
    }
}
