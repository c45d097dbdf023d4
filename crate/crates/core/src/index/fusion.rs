//! Thresholded, rank-capped reciprocal rank fusion.
//!
//! fused(d) = Σ_i V_i(d) / (r_i(d) + α), with V_i(d) = 1 when the facet score
//! exceeds its threshold and the facet rank is within the cap, else 0.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::scalar::{cmp_desc, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    Api,
    Cause,
    Code,
}

impl Facet {
    pub const ALL: [Facet; 3] = [Facet::Api, Facet::Cause, Facet::Code];

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::Api => "api",
            Facet::Cause => "cause",
            Facet::Code => "code",
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct FacetScore<T> {
    pub facet: Facet,
    pub candidate_id: String,
    pub raw_score: T,
    /// 1-based position in the facet's list.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct FusedCandidate<T> {
    pub candidate_id: String,
    /// Every facet that listed the candidate, gated or not.
    pub facets: BTreeMap<Facet, FacetScore<T>>,
    pub fused_score: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct Thresholds<T> {
    pub api: T,
    pub cause: T,
    pub code: T,
}

impl<T: Copy> Thresholds<T> {
    pub fn get(&self, facet: Facet) -> T {
        match facet {
            Facet::Api => self.api,
            Facet::Cause => self.cause,
            Facet::Code => self.code,
        }
    }
}

impl<T: Scalar> Default for Thresholds<T> {
    fn default() -> Self {
        Thresholds {
            api: T::of(4.0),
            cause: T::of(0.75),
            code: T::of(0.65),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct FusionParams<T> {
    pub thresholds: Thresholds<T>,
    pub alpha: T,
    pub rank_cap: usize,
}

impl<T: Scalar> Default for FusionParams<T> {
    fn default() -> Self {
        FusionParams {
            thresholds: Thresholds::default(),
            alpha: T::of(60.0),
            rank_cap: 10,
        }
    }
}

impl<T: Scalar> FusionParams<T> {
    /// Parameters that let every listed candidate through.
    pub fn ungated(alpha: T) -> Self {
        let open = T::neg_infinity();
        FusionParams {
            thresholds: Thresholds {
                api: open,
                cause: open,
                code: open,
            },
            alpha,
            rank_cap: usize::MAX,
        }
    }

    pub fn admits(&self, score: &FacetScore<T>) -> bool {
        score.raw_score > self.thresholds.get(score.facet) && score.rank <= self.rank_cap
    }
}

/// Ranks raw facet scores: descending score, ties by candidate id.
pub fn rank_facet<T: Scalar>(facet: Facet, scores: Vec<(String, T)>) -> Vec<FacetScore<T>> {
    let mut scores = scores;
    scores.sort_by(|a, b| cmp_desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
    scores
        .into_iter()
        .enumerate()
        .map(|(i, (candidate_id, raw_score))| FacetScore {
            facet,
            candidate_id,
            raw_score,
            rank: i + 1,
        })
        .collect()
}

/// Fuses ranked facet lists. Candidates with a positive fused score are
/// returned best first, ties by candidate id.
pub fn rrf_fuse<T: Scalar>(
    lists: &[Vec<FacetScore<T>>],
    params: &FusionParams<T>,
) -> Vec<FusedCandidate<T>> {
    let mut by_id: BTreeMap<&str, FusedCandidate<T>> = BTreeMap::new();
    for score in lists.iter().flatten() {
        let entry = by_id
            .entry(&score.candidate_id)
            .or_insert_with(|| FusedCandidate {
                candidate_id: score.candidate_id.clone(),
                facets: BTreeMap::new(),
                fused_score: T::zero(),
            });
        if params.admits(score) {
            entry.fused_score =
                entry.fused_score + T::one() / (T::of_usize(score.rank) + params.alpha);
        }
        entry.facets.insert(score.facet, score.clone());
    }
    let mut out: Vec<FusedCandidate<T>> = by_id
        .into_values()
        .filter(|c| c.fused_score > T::zero())
        .collect();
    out.sort_by(|a, b| {
        cmp_desc(a.fused_score, b.fused_score).then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(facet: Facet, items: &[(&str, f64)]) -> Vec<FacetScore<f64>> {
        rank_facet(
            facet,
            items.iter().map(|(id, s)| (id.to_string(), *s)).collect(),
        )
    }

    #[test]
    fn single_rank_one() {
        let fused = rrf_fuse(
            &[list(Facet::Cause, &[("a", 0.9)])],
            &FusionParams::default(),
        );
        assert_eq!(fused.len(), 1);
        assert!((fused[0].fused_score - 1.0 / 61.0).abs() < 1e-15);
    }

    #[test]
    fn gated_everywhere_is_dropped() {
        let lists = [
            list(Facet::Cause, &[("a", 0.1)]),
            list(Facet::Api, &[("a", 1.0)]),
        ];
        assert!(rrf_fuse(&lists, &FusionParams::default()).is_empty());
    }

    #[test]
    fn two_facets_beat_one() {
        let lists = [
            list(Facet::Cause, &[("a", 0.9), ("b", 0.8)]),
            list(Facet::Api, &[("a", 9.0)]),
            list(Facet::Code, &[("c", 0.99)]),
        ];
        let fused = rrf_fuse(&lists, &FusionParams::default());
        assert_eq!(fused[0].candidate_id, "a");
        assert!((fused[0].fused_score - 2.0 / 61.0).abs() < 1e-15);
        assert_eq!(fused[1].candidate_id, "c");
        assert_eq!(fused[2].candidate_id, "b");
        assert!((fused[2].fused_score - 1.0 / 62.0).abs() < 1e-15);
    }

    #[test]
    fn rank_cap_gates() {
        let items: Vec<(String, f64)> = (0..12)
            .map(|i| (format!("c{i:02}"), 0.99 - i as f64 * 0.01))
            .collect();
        let fused = rrf_fuse(&[rank_facet(Facet::Cause, items)], &FusionParams::default());
        assert_eq!(fused.len(), 10);
        assert_eq!(fused.last().unwrap().candidate_id, "c09");
    }

    #[test]
    fn ties_rank_by_id() {
        let ranked = list(Facet::Api, &[("b", 5.0), ("a", 5.0), ("c", 6.0)]);
        let ids: Vec<_> = ranked
            .iter()
            .map(|s| (s.candidate_id.as_str(), s.rank))
            .collect();
        assert_eq!(ids, vec![("c", 1), ("a", 2), ("b", 3)]);
    }
}
