use std::collections::{BTreeMap, BTreeSet};

use seckb::corpus::{CweId, Language};
use seckb::distill::CweEntry;
use seckb::index::fusion::{Facet, FusionParams, Thresholds};
use seckb::index::{Example, HashEmbedder, KnowledgeBase, Manifest};
use seckb::llm::stub::{CountingClient, FixedClient};
use seckb::llm::OfflineClient;
use seckb::pipeline::{records_to_jsonl, run_task, Clients, PipelineConfig, Task};

fn vocab(items: &[(&str, usize)]) -> BTreeMap<String, usize> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn entry(cwe: u32, guideline: &str, apis: &[(&str, usize)]) -> CweEntry {
    CweEntry {
        cwe_id: CweId::new(cwe),
        guideline: guideline.into(),
        cause_summary: format!("cause of CWE-{cwe}"),
        api_vocabulary: vocab(apis),
        member_ids: vec![format!("m{cwe}")],
    }
}

fn example(id: &str, cwe: u32, language: Language, code: &str, apis: &[(&str, usize)]) -> Example {
    Example {
        id: id.into(),
        cwe_id: CweId::new(cwe),
        language,
        secure_slice: code.into(),
        api_vocabulary: vocab(apis),
    }
}

fn kb() -> KnowledgeBase<f64> {
    let entries = [
        entry(
            89,
            "- Use parameterized queries.",
            &[("cursor.execute", 2), ("sqlite3.connect", 1)],
        ),
        entry(
            78,
            "- Pass argument lists, not shell strings.",
            &[("os.system", 1), ("subprocess.run", 1)],
        ),
    ]
    .into_iter()
    .map(|e| (e.cwe_id, e))
    .collect();
    let examples = vec![
        example(
            "ex89",
            89,
            Language::Python,
            "cur.execute(\"SELECT 1 WHERE a = ?\", (a,))",
            &[("cur.execute", 2)],
        ),
        example(
            "ex89c",
            89,
            Language::C,
            "sqlite3_bind_text(stmt, 1, a, -1, NULL);",
            &[("cur.execute", 2)],
        ),
        example(
            "ex78",
            78,
            Language::Python,
            "subprocess.run([\"ls\", d])",
            &[("subprocess.run", 2)],
        ),
    ];
    KnowledgeBase::build(
        Manifest::new("test".into(), 3),
        entries,
        examples,
        &HashEmbedder::new(64),
    )
    .unwrap()
}

fn task() -> Task {
    Task {
        id: "lookup".into(),
        language: Language::Python,
        prompt: "def lookup(conn, name):\n    \"\"\"Return the row for name.\"\"\"\n".into(),
    }
}

fn api_only() -> PipelineConfig<f64> {
    PipelineConfig {
        fusion: FusionParams {
            thresholds: Thresholds {
                api: 0.0,
                cause: 0.75,
                code: 0.65,
            },
            ..FusionParams::default()
        },
        disabled_facets: BTreeSet::from([Facet::Cause, Facet::Code]),
        record_timings: false,
        ..PipelineConfig::default()
    }
}

#[test]
fn api_overlap_selects_the_matching_cwe() {
    // The draft calls conn.cursor.execute, whose parts cursor and execute
    // occur only in the CWE-89 vocabulary. With the api facet alone, CWE-89
    // is the single candidate at rank 1: fused score 1 / (1 + 60).
    let kb = kb();
    let embedder = HashEmbedder::new(64);
    let clients = Clients {
        draft: &FixedClient::new("```python\nrow = conn.cursor().execute(q)\n```"),
        cause: &FixedClient::new("SQL injection"),
        generate: &OfflineClient,
        embedder: &embedder,
    };
    let records = run_task(&task(), Some(&kb), &clients, &api_only()).unwrap();
    let r = &records[0];
    assert_eq!(
        r.analysis.draft_apis,
        vec!["conn.cursor.execute", "conn.cursor"]
    );
    assert_eq!(r.facets, vec![Facet::Api]);
    assert_eq!(r.cwe_shortlist.len(), 1);
    assert_eq!(r.cwe_shortlist[0].0, CweId::new(89));
    assert!((r.cwe_shortlist[0].1 - 1.0 / 61.0).abs() < 1e-15);
    let ctx = r.context.as_ref().unwrap();
    assert_eq!(ctx.cwe_id, CweId::new(89));
    assert_eq!(ctx.example_id, "ex89");
    assert_eq!(ctx.guideline, "- Use parameterized queries.");
    assert!(r.prompt.contains("- Use parameterized queries.") && r.prompt.contains("(a,))"));
}

#[test]
fn examples_follow_the_task_language() {
    let kb = kb();
    let embedder = HashEmbedder::new(64);
    let clients = Clients {
        draft: &FixedClient::new("conn.cursor().execute(q)"),
        cause: &FixedClient::new("SQL injection"),
        generate: &OfflineClient,
        embedder: &embedder,
    };
    let mut t = task();
    t.language = Language::C;
    let records = run_task(&t, Some(&kb), &clients, &api_only()).unwrap();
    assert_eq!(records[0].context.as_ref().unwrap().example_id, "ex89c");
}

#[test]
fn no_overlap_falls_back_to_zero_shot() {
    let kb = kb();
    let embedder = HashEmbedder::new(64);
    let clients = Clients {
        draft: &FixedClient::new("print(name)"),
        cause: &FixedClient::new("none"),
        generate: &OfflineClient,
        embedder: &embedder,
    };
    let r = &run_task(&task(), Some(&kb), &clients, &api_only()).unwrap()[0];
    assert!(r.cwe_shortlist.is_empty());
    assert!(r.context.is_none());
    assert!(r.prompt.starts_with("Generate the following python code."));
}

#[test]
fn samples_share_one_analysis_and_runs_repeat_exactly() {
    let kb = kb();
    let embedder = HashEmbedder::new(64);
    let config = PipelineConfig::<f64> {
        samples: 3,
        record_timings: false,
        ..PipelineConfig::default()
    };
    let run = || {
        let draft = CountingClient::new();
        let clients = Clients {
            draft: &draft,
            cause: &OfflineClient,
            generate: &OfflineClient,
            embedder: &embedder,
        };
        let records = run_task(&task(), Some(&kb), &clients, &config).unwrap();
        assert_eq!(draft.calls(), 1);
        records
    };
    let first = run();
    assert_eq!(first.len(), 3);
    assert!(first.iter().all(|r| r.analysis == first[0].analysis));
    let second = run();
    assert_eq!(records_to_jsonl(&first), records_to_jsonl(&second));
}
