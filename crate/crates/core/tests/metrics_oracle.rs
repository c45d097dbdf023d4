use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use seckb::metrics::{aggregate, load_verdicts, SampleVerdict};

const DRAWS: usize = 1_000_000;

/// Estimates the mean over tasks of the chance that a random k-subset holds
/// a sample passing both checks (or the functional check alone). Each draw
/// picks a task uniformly, then k distinct samples by partial shuffling.
fn monte_carlo(verdicts: &[SampleVerdict], k: usize, secure: bool, rng: &mut StdRng) -> f64 {
    let mut by_task: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for v in verdicts {
        let ok = v.functional_pass && (!secure || v.security_pass);
        by_task.entry(&v.task_id).or_default().push(ok);
    }
    let tasks: Vec<Vec<bool>> = by_task.into_values().collect();
    let mut hits = 0usize;
    let mut order: Vec<usize> = Vec::new();
    for _ in 0..DRAWS {
        let samples = &tasks[rng.gen_range(0..tasks.len())];
        order.clear();
        order.extend(0..samples.len());
        for i in 0..k {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }
        if order[..k].iter().any(|&i| samples[i]) {
            hits += 1;
        }
    }
    hits as f64 / DRAWS as f64
}

#[test]
fn fixture_report_matches_monte_carlo() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/verdicts.jsonl");
    let verdicts = load_verdicts(&path).unwrap();
    let report = aggregate::<f64>(&verdicts, &[1, 5]).unwrap();
    assert!(report.excluded.is_empty());
    let mut rng = StdRng::seed_from_u64(11);
    for k in [1, 5] {
        let sp = monte_carlo(&verdicts, k, true, &mut rng);
        let pass = monte_carlo(&verdicts, k, false, &mut rng);
        assert!(
            (report.secure_pass_at_k[&k] - sp).abs() < 0.005,
            "SP@{k}: {} vs {sp}",
            report.secure_pass_at_k[&k]
        );
        assert!(
            (report.pass_at_k[&k] - pass).abs() < 0.005,
            "Pass@{k}: {} vs {pass}",
            report.pass_at_k[&k]
        );
    }
    let secure = verdicts.iter().filter(|v| v.security_pass).count() as f64 / verdicts.len() as f64;
    assert!((report.secure_rate_micro - secure).abs() < 1e-12);
}
