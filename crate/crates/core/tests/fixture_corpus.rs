use std::path::PathBuf;

use seckb::corpus::load_corpus;
use seckb::graph::build_pdg;
use seckb::slicer::{locate_pois, slice, slice_instance, Side};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

#[test]
fn corpus_loads_cleanly() {
    let loaded = load_corpus(&fixture("corpus.jsonl")).unwrap();
    assert_eq!(
        loaded.report.rejected.len(),
        0,
        "{:?}",
        loaded.report.rejected
    );
    assert!(loaded.report.malformed.is_empty());
    assert!(loaded.instances.len() >= 10);
}

#[test]
fn slices_shrink_the_corpus() {
    let loaded = load_corpus(&fixture("corpus.jsonl")).unwrap();
    let mut ratios = Vec::new();
    for inst in &loaded.instances {
        let pair = slice_instance(inst, 2).unwrap();
        assert!(!pair.is_empty(), "{}", inst.id);
        assert_eq!(pair.unmatched_lines, 0, "{}", inst.id);
        println!("{} {:.3}", inst.id, pair.kept_ratio());
        ratios.push(pair.kept_ratio());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("mean {mean:.3}");
    assert!(mean < 0.5, "mean kept ratio {mean}");
}

#[test]
fn slices_grow_with_hop_limit() {
    let loaded = load_corpus(&fixture("corpus.jsonl")).unwrap();
    for inst in &loaded.instances {
        let lines = inst.parse_patch().unwrap();
        for (side, code) in [
            (Side::Vulnerable, &inst.vulnerable_code),
            (Side::Secure, &inst.secure_code),
        ] {
            let pdg = build_pdg(code, inst.language).unwrap();
            let pois = locate_pois(&pdg, &lines, side);
            let mut previous = slice(&pdg, &pois, 1).unwrap();
            for h in 2..=6 {
                let next = slice(&pdg, &pois, h).unwrap();
                assert!(previous.is_subset(&next), "{} h={h}", inst.id);
                previous = next;
            }
        }
    }
}
