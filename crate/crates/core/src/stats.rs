//! Train/test label-distribution analysis for the question construction.
//!
//! With `N` events per document of which `X` take part in a causal relation
//! and `Y = N - X` do not, a training sample has a non-"None" answer with
//! probability `X / N`. A test option set of size `|D|` drawn from an evenly
//! mixed document misses every related event with probability
//! `C(Y, |D|) / C(N, |D|)`, giving
//!
//! ```text
//! P_test = X/N - X/N * C(Y, |D|) / C(N, |D|)
//! ```
//!
//! The binomial ratio is evaluated as a product of ratios so large `N` never
//! overflows.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::mcq::{build_split, forward_candidates, BuilderConfig, McqError, Mode};
use crate::seeds::substream;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("domain violation: {0}")]
    Domain(String),
}

fn domain(msg: impl Into<String>) -> StatsError {
    StatsError::Domain(msg.into())
}

fn check_counts(n: f64, x: f64) -> Result<(), StatsError> {
    if !(n.is_finite() && x.is_finite()) {
        return Err(domain("N and X must be finite"));
    }
    if n <= 0.0 {
        return Err(domain(format!("N must be positive, got {n}")));
    }
    if x < 0.0 || x > n {
        return Err(domain(format!("X must lie in [0, N], got X = {x}, N = {n}")));
    }
    Ok(())
}

/// `X / N`.
pub fn p_train(n: f64, x: f64) -> Result<f64, StatsError> {
    check_counts(n, x)?;
    Ok(x / n)
}

/// `C(Y, D) / C(N, D)` as `prod_{k < D} (Y - k) / (N - k)`; zero when `Y < D`.
pub fn none_ratio(n: f64, y: f64, d: usize) -> Result<f64, StatsError> {
    check_counts(n, y)?;
    if d == 0 {
        return Err(domain("D must be at least 1"));
    }
    if y < d as f64 {
        return Ok(0.0);
    }
    Ok((0..d).map(|k| (y - k as f64) / (n - k as f64)).product())
}

pub fn p_test(n: f64, x: f64, d: usize) -> Result<f64, StatsError> {
    let p = p_train(n, x)?;
    Ok(p * (1.0 - none_ratio(n, n - x, d)?))
}

/// `(1/N) * sum_{i=1}^{floor(N/D)} D * i`, the approximate number of test
/// samples per observed event.
pub fn m_approx(n: f64, d: usize) -> Result<f64, StatsError> {
    if d == 0 || !n.is_finite() || n < d as f64 {
        return Err(domain(format!("need N >= D >= 1, got N = {n}, D = {d}")));
    }
    let terms = (n / d as f64).floor() as u64;
    let sum: f64 = (1..=terms).map(|i| (d as u64 * i) as f64).sum();
    Ok(sum / n)
}

/// Simulated `P_test`: each trial places `x` related events at random among
/// `n` and picks a random observed event; its option set is a chunk of `d`
/// events from an independent random ordering of the same placement. A trial
/// counts when the observed event is related and the chunk holds at least one
/// related event.
pub fn monte_carlo_p_test(n: usize, x: usize, d: usize, trials: u64, seed: u64) -> Result<f64, StatsError> {
    if trials == 0 {
        return Err(domain("trials must be at least 1"));
    }
    if n == 0 || x > n || d == 0 {
        return Err(domain(format!("need N > 0, 0 <= X <= N, D >= 1; got N = {n}, X = {x}, D = {d}")));
    }
    let mut rng = substream(seed, &["monte-carlo-p-test"]);
    // Events 0..x are the related ones. Observed event and chunk are both
    // uniform, so a fixed placement is as good as a shuffled one.
    let chunk = d.min(n);
    let mut hits = 0u64;
    for _ in 0..trials {
        let observed = rng.gen_range(0..n);
        if observed < x && index::sample(&mut rng, n, chunk).iter().any(|i| i < x) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "D")]
    pub d: usize,
    pub p_train: f64,
    pub p_none_ratio: f64,
    pub p_test: f64,
    /// Absent when `N < D`.
    #[serde(rename = "M")]
    pub m: Option<f64>,
    /// Per document.
    pub expected_train_samples: f64,
    /// Per document, `N * M`.
    pub expected_test_samples: Option<f64>,
}

pub fn analytic_report(n: f64, x: f64, d: usize) -> Result<StatsReport, StatsError> {
    let y = n - x;
    let m = m_approx(n, d).ok();
    Ok(StatsReport {
        n,
        x,
        y,
        d,
        p_train: p_train(n, x)?,
        p_none_ratio: none_ratio(n, y, d)?,
        p_test: p_test(n, x, d)?,
        m,
        expected_train_samples: n,
        expected_test_samples: m.map(|m| n * m),
    })
}

/// Empirical label proportions of a built corpus next to the analytic
/// prediction for its average `N` and `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeasurement {
    pub analytic: StatsReport,
    pub documents: usize,
    pub events: usize,
    pub events_with_relations: usize,
    pub train_samples: usize,
    pub train_non_none: usize,
    pub train_fraction: f64,
    /// `train_fraction - p_train`; negative when forward-only traversal
    /// leaves events whose partners all precede them with a "None" answer.
    pub train_gap: f64,
    pub test_samples: usize,
    pub test_non_none: usize,
    pub test_fraction: f64,
    pub test_gap: f64,
    /// `sum_i ceil(F_i / (|D| - 1))` over every event `i` with `F_i` forward
    /// candidates.
    pub chunked_test_samples: usize,
}

pub fn measure_corpus(docs: &[Document], cfg: &BuilderConfig) -> Result<CorpusMeasurement, McqError> {
    if docs.is_empty() {
        return Err(McqError::Config("cannot measure an empty corpus".into()));
    }
    let events: usize = docs.iter().map(|d| d.events().len()).sum();
    if events == 0 {
        return Err(McqError::Config("corpus has no events".into()));
    }
    let events_with_relations: usize =
        docs.iter().map(|d| d.events().iter().filter(|e| d.partners(e.mention_id.as_str()).is_some()).count()).sum();

    let train = build_split(docs, Mode::Train, cfg)?;
    let test = build_split(docs, Mode::Test, cfg)?;
    let train_non_none = train.iter().filter(|s| !s.gold_is_none()).count();
    let test_non_none = test.iter().filter(|s| !s.gold_is_none()).count();

    let mut chunked = 0;
    for doc in docs {
        for e in doc.events() {
            chunked += forward_candidates(doc, e.mention_id.as_str())?.len().div_ceil(cfg.num_options - 1);
        }
    }

    let n = events as f64 / docs.len() as f64;
    let x = events_with_relations as f64 / docs.len() as f64;
    let analytic = analytic_report(n, x, cfg.num_options).map_err(|e| McqError::Config(e.to_string()))?;
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let train_fraction = frac(train_non_none, train.len());
    let test_fraction = frac(test_non_none, test.len());
    Ok(CorpusMeasurement {
        train_gap: train_fraction - analytic.p_train,
        test_gap: test_fraction - analytic.p_test,
        analytic,
        documents: docs.len(),
        events,
        events_with_relations,
        train_samples: train.len(),
        train_non_none,
        train_fraction,
        test_samples: test.len(),
        test_non_none,
        test_fraction,
        chunked_test_samples: chunked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, LinkStructure, SynthConfig};

    /// Exact binomial coefficient by multiplicative recurrence in u128.
    fn binom(n: u64, k: u64) -> u128 {
        if k > n {
            return 0;
        }
        (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
    }

    #[test]
    fn p_train_values() {
        assert_eq!(p_train(10.0, 4.0).unwrap(), 0.4);
        assert_eq!(p_train(7.0, 0.0).unwrap(), 0.0);
        assert_eq!(p_train(7.0, 7.0).unwrap(), 1.0);
        assert!(p_train(0.0, 0.0).is_err());
        assert!(p_train(5.0, 6.0).is_err());
    }

    #[test]
    fn none_ratio_values() {
        assert_eq!((binom(6, 5), binom(10, 5)), (6, 252));
        let r = none_ratio(10.0, 6.0, 5).unwrap();
        assert!((r - 6.0 / 252.0).abs() < 1e-15);
        assert!((r - 0.023810).abs() < 1e-6);
        assert_eq!(none_ratio(10.0, 3.0, 5).unwrap(), 0.0);
        assert_eq!(none_ratio(9.0, 9.0, 4).unwrap(), 1.0);
        assert!(none_ratio(9.0, 3.0, 0).is_err());
    }

    #[test]
    fn none_ratio_matches_exact_binomials() {
        for n in 1..=40u64 {
            for y in 0..=n {
                for d in 1..=8u64.min(n) {
                    let exact = binom(y, d) as f64 / binom(n, d) as f64;
                    let got = none_ratio(n as f64, y as f64, d as usize).unwrap();
                    assert!((got - exact).abs() < 1e-12, "n={n} y={y} d={d}");
                }
            }
        }
    }

    #[test]
    fn p_test_values() {
        let p = p_test(10.0, 4.0, 5).unwrap();
        assert!((p - 0.4 * (1.0 - 6.0 / 252.0)).abs() < 1e-15);
        assert!((p - 0.390476).abs() < 1e-6);
        assert_eq!(p_test(10.0, 0.0, 5).unwrap(), 0.0);
        assert_eq!(p_test(10.0, 7.0, 5).unwrap(), 0.7);
    }

    #[test]
    fn p_test_never_exceeds_p_train() {
        for n in 1..=30 {
            for x in 0..=n {
                for d in 1..=8 {
                    let (pt, pr) = (p_test(n as f64, x as f64, d).unwrap(), p_train(n as f64, x as f64).unwrap());
                    assert!(pt <= pr);
                    let equal = x == 0 || (n - x) < d;
                    assert_eq!(pt == pr, equal, "n={n} x={x} d={d}");
                }
            }
        }
    }

    #[test]
    fn none_ratio_decreases_with_d() {
        for n in 2..=30 {
            for y in 1..n {
                let mut prev = f64::INFINITY;
                for d in 1..=y {
                    let r = none_ratio(n as f64, y as f64, d).unwrap();
                    assert!(r < prev, "n={n} y={y} d={d}");
                    prev = r;
                }
            }
        }
    }

    #[test]
    fn m_approx_values() {
        assert!((m_approx(10.0, 5).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(m_approx(5.0, 5).unwrap(), 1.0);
        assert!(m_approx(4.0, 5).is_err());
        for d in 1..=8 {
            for n in d..200 {
                let t = (n / d) as f64;
                let closed = d as f64 * t * (t + 1.0) / 2.0 / n as f64;
                assert!((m_approx(n as f64, d).unwrap() - closed).abs() < 1e-9, "n={n} d={d}");
            }
            // grows along multiples of D as (k + 1) / 2
            for k in 1..50 {
                assert!((m_approx((k * d) as f64, d).unwrap() - (k as f64 + 1.0) / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_close_to_formula() {
        let mc = monte_carlo_p_test(10, 4, 5, 100_000, 3).unwrap();
        assert!((mc - p_test(10.0, 4.0, 5).unwrap()).abs() < 0.02, "{mc}");
        assert_eq!(monte_carlo_p_test(10, 0, 5, 1000, 1).unwrap(), 0.0);
        assert_eq!(monte_carlo_p_test(10, 10, 5, 1000, 1).unwrap(), 1.0);
        assert!(monte_carlo_p_test(10, 4, 5, 0, 1).is_err());
        assert_eq!(monte_carlo_p_test(10, 4, 5, 5000, 9), monte_carlo_p_test(10, 4, 5, 5000, 9));
    }

    #[test]
    fn measured_train_fraction_near_formula() {
        let docs = generate(&SynthConfig {
            documents: 200,
            events_min: 20,
            events_max: 20,
            structure: LinkStructure::Clique { related: 8 },
            seed: 5,
            ..SynthConfig::default()
        });
        let m = measure_corpus(&docs, &BuilderConfig::default()).unwrap();
        assert_eq!(m.analytic.p_train, 0.4);
        // only the last related event of each document loses its forward partners
        assert_eq!(m.train_non_none, 200 * 7);
        assert!(m.train_gap.abs() <= 0.05 + 1e-12, "{}", m.train_gap);
        assert_eq!(m.test_samples, m.chunked_test_samples);
    }

    #[test]
    fn fully_related_corpus() {
        let docs = generate(&SynthConfig {
            documents: 10,
            events_min: 12,
            events_max: 12,
            structure: LinkStructure::Clique { related: 12 },
            seed: 2,
            ..SynthConfig::default()
        });
        let m = measure_corpus(&docs, &BuilderConfig::default()).unwrap();
        assert_eq!(m.analytic.p_train, 1.0);
        assert_eq!(m.test_fraction, 1.0);
        assert!((m.train_fraction - 11.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn report_keys() {
        let v = serde_json::to_value(analytic_report(10.0, 4.0, 5).unwrap()).unwrap();
        for k in ["N", "X", "Y", "D", "p_train", "p_none_ratio", "p_test", "M", "expected_train_samples", "expected_test_samples"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["Y"], 6.0);
    }
}
