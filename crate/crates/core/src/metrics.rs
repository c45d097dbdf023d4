//! Pass@k, SecurePass@k and SecureRate from externally supplied verdicts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the sample count n = {n}")]
    KExceedsN { n: usize, k: usize },
    #[error("pass count {passed} exceeds the sample count n = {n}")]
    CountExceedsN { n: usize, passed: usize },
    #[error("no k requested")]
    NoK,
    #[error("{path}:{line}: {message}")]
    Verdicts {
        path: String,
        line: usize,
        message: String,
    },
}

/// Unbiased estimate of the probability that at least one of `k` samples
/// drawn without replacement from `n` (of which `passed` pass) passes:
/// `1 - C(n - passed, k) / C(n, k)`.
///
/// The binomial ratio is evaluated as the product of `(n - passed - i) / (n - i)`
/// for `i` in `0..k`, so nothing overflows. Results are exactly 0 when
/// `passed == 0` and exactly 1 when `n - passed < k`.
pub fn pass_at_k<T>(n: usize, passed: usize, k: usize) -> Result<T, MetricError>
where
    T: Num + FromPrimitive + Clone,
{
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if k > n {
        return Err(MetricError::KExceedsN { n, k });
    }
    if passed > n {
        return Err(MetricError::CountExceedsN { n, passed });
    }
    if passed == 0 {
        return Ok(T::zero());
    }
    if n - passed < k {
        return Ok(T::one());
    }
    let of = |v: usize| T::from_usize(v).expect("count representable in scalar");
    let mut ratio = T::one();
    for i in 0..k {
        ratio = ratio * of(n - passed - i) / of(n - i);
    }
    Ok(T::one() - ratio)
}

/// [`pass_at_k`] with `sp`, the number of samples passing both the
/// functional tests and the security checks.
pub fn secure_pass_at_k<T>(n: usize, sp: usize, k: usize) -> Result<T, MetricError>
where
    T: Num + FromPrimitive + Clone,
{
    pass_at_k(n, sp, k)
}

/// Outcome of external checks on one generated sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub task_id: String,
    pub sample_id: usize,
    pub functional_pass: bool,
    pub security_pass: bool,
}

/// Reads verdicts from JSONL, one object per line.
pub fn load_verdicts(path: &Path) -> Result<Vec<SampleVerdict>, MetricError> {
    let err = |line, message: String| MetricError::Verdicts {
        path: path.display().to_string(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(0, e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics<T> {
    pub task_id: String,
    pub n: usize,
    pub functional_passes: usize,
    pub secure_passes: usize,
    pub secure_rate: T,
    /// Keyed by k.
    pub pass_at_k: BTreeMap<usize, T>,
    pub secure_pass_at_k: BTreeMap<usize, T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedTask {
    pub task_id: String,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub ks: Vec<usize>,
    pub excluded: Vec<ExcludedTask>,
    pub tasks: Vec<TaskMetrics<T>>,
    /// Security passes over all samples of the included tasks.
    pub secure_rate_micro: T,
    /// Mean of the per-task secure rates.
    pub secure_rate_macro: T,
    pub pass_at_k: BTreeMap<usize, T>,
    pub secure_pass_at_k: BTreeMap<usize, T>,
}

/// Per-task metrics plus their unweighted means. A sample counts towards
/// SecurePass@k only if it passes both checks; SecureRate counts security
/// passes alone. Tasks with fewer samples than the largest k are excluded
/// and listed in the report.
pub fn aggregate<T: Scalar>(
    verdicts: &[SampleVerdict],
    ks: &[usize],
) -> Result<MetricReport<T>, MetricError> {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let max_k = *ks.last().ok_or(MetricError::NoK)?;
    if ks[0] == 0 {
        return Err(MetricError::ZeroK);
    }

    let mut by_task: BTreeMap<&str, Vec<&SampleVerdict>> = BTreeMap::new();
    for v in verdicts {
        by_task.entry(&v.task_id).or_default().push(v);
    }

    let mut tasks = Vec::new();
    let mut excluded = Vec::new();
    let (mut total, mut secure_total) = (0usize, 0usize);
    for (task_id, samples) in by_task {
        let n = samples.len();
        if n < max_k {
            log::warn!("task {task_id} has {n} samples, fewer than k = {max_k}; excluded");
            excluded.push(ExcludedTask {
                task_id: task_id.to_string(),
                n,
                reason: format!("{n} samples < k = {max_k}"),
            });
            continue;
        }
        let c = samples.iter().filter(|v| v.functional_pass).count();
        let sp = samples
            .iter()
            .filter(|v| v.functional_pass && v.security_pass)
            .count();
        let secure = samples.iter().filter(|v| v.security_pass).count();
        total += n;
        secure_total += secure;
        let mut pass = BTreeMap::new();
        let mut spass = BTreeMap::new();
        for &k in &ks {
            pass.insert(k, pass_at_k::<T>(n, c, k)?);
            spass.insert(k, secure_pass_at_k::<T>(n, sp, k)?);
        }
        tasks.push(TaskMetrics {
            task_id: task_id.to_string(),
            n,
            functional_passes: c,
            secure_passes: sp,
            secure_rate: T::of_usize(secure) / T::of_usize(n),
            pass_at_k: pass,
            secure_pass_at_k: spass,
        });
    }

    let mean = |values: Vec<T>| {
        if values.is_empty() {
            T::zero()
        } else {
            let len = T::of_usize(values.len());
            values.into_iter().sum::<T>() / len
        }
    };
    let pass_at_k = ks
        .iter()
        .map(|&k| (k, mean(tasks.iter().map(|t| t.pass_at_k[&k]).collect())))
        .collect();
    let secure_pass_at_k = ks
        .iter()
        .map(|&k| {
            (
                k,
                mean(tasks.iter().map(|t| t.secure_pass_at_k[&k]).collect()),
            )
        })
        .collect();
    Ok(MetricReport {
        secure_rate_micro: if total == 0 {
            T::zero()
        } else {
            T::of_usize(secure_total) / T::of_usize(total)
        },
        secure_rate_macro: mean(tasks.iter().map(|t| t.secure_rate).collect()),
        ks,
        excluded,
        tasks,
        pass_at_k,
        secure_pass_at_k,
    })
}

impl<T: Scalar> MetricReport<T> {
    /// Plain-text table: one row per task and a final mean row.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for e in &self.excluded {
            let _ = writeln!(out, "excluded {}: {}", e.task_id, e.reason);
        }
        let mut header = format!("{:<24} {:>5} {:>10}", "task", "n", "SecRate");
        for k in &self.ks {
            let _ = write!(
                header,
                " {:>9} {:>9}",
                format!("Pass@{k}"),
                format!("SP@{k}")
            );
        }
        let _ = writeln!(out, "{header}");
        let row = |out: &mut String,
                   name: &str,
                   n: String,
                   rate: T,
                   pass: &BTreeMap<usize, T>,
                   sp: &BTreeMap<usize, T>| {
            let _ = write!(out, "{name:<24} {n:>5} {rate:>10.4}");
            for k in &self.ks {
                let _ = write!(out, " {:>9.4} {:>9.4}", pass[k], sp[k]);
            }
            out.push('\n');
        };
        for t in &self.tasks {
            row(
                &mut out,
                &t.task_id,
                t.n.to_string(),
                t.secure_rate,
                &t.pass_at_k,
                &t.secure_pass_at_k,
            );
        }
        row(
            &mut out,
            "mean",
            String::from("-"),
            self.secure_rate_micro,
            &self.pass_at_k,
            &self.secure_pass_at_k,
        );
        let _ = writeln!(
            out,
            "SecureRate micro {:.4}, macro {:.4}",
            self.secure_rate_micro, self.secure_rate_macro
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u64 {
        if k > n {
            return 0;
        }
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    /// Fraction of k-subsets of n samples containing at least one of the
    /// first `passed` samples, by enumerating bitmasks.
    fn enumerate(n: usize, passed: usize, k: usize) -> Ratio<u64> {
        let (mut hit, mut all) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == k {
                all += 1;
                if mask & ((1u32 << passed) - 1) != 0 {
                    hit += 1;
                }
            }
        }
        Ratio::new(hit, all)
    }

    #[test]
    fn spec_examples() {
        assert_eq!(secure_pass_at_k::<f64>(10, 0, 1).unwrap(), 0.0);
        assert_eq!(secure_pass_at_k::<f64>(10, 10, 1).unwrap(), 1.0);
        assert_eq!(
            secure_pass_at_k::<Ratio<u64>>(5, 2, 2).unwrap(),
            enumerate(5, 2, 2)
        );
        assert_eq!(enumerate(5, 2, 2), Ratio::new(7, 10));
        assert_eq!(
            pass_at_k::<Ratio<u64>>(4, 1, 2).unwrap(),
            enumerate(4, 1, 2)
        );
        assert_eq!(pass_at_k::<f64>(100, 100, 1).unwrap(), 1.0);
        for k in 1..=7 {
            assert_eq!(pass_at_k::<f64>(7, 0, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn contract_errors() {
        assert_eq!(
            pass_at_k::<f64>(3, 1, 4),
            Err(MetricError::KExceedsN { n: 3, k: 4 })
        );
        assert_eq!(pass_at_k::<f64>(3, 1, 0), Err(MetricError::ZeroK));
        assert_eq!(
            pass_at_k::<f64>(3, 4, 1),
            Err(MetricError::CountExceedsN { n: 3, passed: 4 })
        );
    }

    #[test]
    fn exact_against_enumeration_up_to_twelve() {
        for n in 1..=12 {
            for sp in 0..=n {
                for k in 1..=n {
                    let exact = enumerate(n, sp, k);
                    assert_eq!(secure_pass_at_k::<Ratio<u64>>(n, sp, k).unwrap(), exact);
                    let expected = 1.0
                        - binom((n - sp) as u64, k as u64) as f64
                            / binom(n as u64, k as u64) as f64;
                    let got = secure_pass_at_k::<f64>(n, sp, k).unwrap();
                    assert!((got - expected).abs() < 1e-12, "n={n} sp={sp} k={k}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_and_dominated(n in 1usize..60, a in 0usize..60, b in 0usize..60, k in 1usize..60) {
            let (sp, c) = (a.min(b).min(n), a.max(b).min(n));
            let k = k.min(n);
            let s = secure_pass_at_k::<f64>(n, sp, k).unwrap();
            let p = pass_at_k::<f64>(n, c, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(s <= p + 1e-12);
            if k < n {
                prop_assert!(s <= secure_pass_at_k::<f64>(n, sp, k + 1).unwrap() + 1e-12);
            }
            if sp < n {
                prop_assert!(s <= secure_pass_at_k::<f64>(n, sp + 1, k).unwrap() + 1e-12);
            }
        }
    }

    fn verdict(task: &str, sample: usize, functional: bool, security: bool) -> SampleVerdict {
        SampleVerdict {
            task_id: task.into(),
            sample_id: sample,
            functional_pass: functional,
            security_pass: security,
        }
    }

    #[test]
    fn aggregate_mean_and_exclusion() {
        let verdicts = vec![
            verdict("a", 0, true, false),
            verdict("a", 1, false, false),
            verdict("b", 0, true, true),
            verdict("b", 1, true, true),
            verdict("c", 0, true, true),
        ];
        let report = aggregate::<f64>(&verdicts, &[1, 2]).unwrap();
        assert_eq!(report.excluded.len(), 1);
        assert_eq!(report.excluded[0].task_id, "c");
        assert_eq!(report.tasks[0].secure_pass_at_k[&1], 0.0);
        assert_eq!(report.tasks[1].secure_pass_at_k[&1], 1.0);
        assert_eq!(report.secure_pass_at_k[&1], 0.5);
        assert_eq!(report.secure_rate_micro, 0.5);
        assert!(report.render_table().contains("excluded c"));
    }

    #[test]
    fn functional_but_insecure() {
        let verdicts: Vec<_> = (0..4).map(|i| verdict("t", i, true, false)).collect();
        let report = aggregate::<f64>(&verdicts, &[1]).unwrap();
        assert_eq!(report.secure_rate_micro, 0.0);
        assert_eq!(report.pass_at_k[&1], 1.0);
        assert_eq!(report.secure_pass_at_k[&1], 0.0);
    }
}
