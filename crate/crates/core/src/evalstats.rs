//! Evaluation statistics over per-run final-performance scores:
//! performance profiles, probability of improvement, and aggregate scores
//! (mean, median, interquartile mean, optimality gap) with percentile
//! bootstrap confidence intervals.
//!
//! Everything here is a pure function of its inputs; bootstrap resampling is
//! seeded, so confidence intervals are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of trailing curve points averaged into a run's final-performance
/// score.
pub const FINAL_SCORE_WINDOW: f64 = 0.05;

/// One configuration's scores: a final-performance scalar per run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub label: String,
    pub scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(label: impl Into<String>, scores: Vec<f64>) -> Self {
        assert!(!scores.is_empty(), "score set must not be empty");
        assert!(scores.iter().all(|s| s.is_finite()), "scores must be finite");
        ScoreSet {
            label: label.into(),
            scores,
        }
    }
}

/// Mean return over the trailing `fraction` of a curve's points (at least
/// one point).
pub fn final_performance(points: &[(u64, f64)], fraction: f64) -> f64 {
    assert!(!points.is_empty());
    assert!(fraction > 0.0 && fraction <= 1.0);
    let k = ((points.len() as f64 * fraction).ceil() as usize).clamp(1, points.len());
    let tail = &points[points.len() - k..];
    tail.iter().map(|(_, v)| v).sum::<f64>() / k as f64
}

/// Fraction of scores strictly greater than each threshold. Thresholds must
/// be ascending; the result is weakly decreasing and bounded in [0, 1].
pub fn performance_profile(set: &ScoreSet, thresholds: &[f64]) -> Vec<f64> {
    assert!(
        thresholds.windows(2).all(|w| w[0] <= w[1]),
        "thresholds must be sorted ascending"
    );
    let n = set.scores.len() as f64;
    thresholds
        .iter()
        .map(|tau| set.scores.iter().filter(|s| **s > *tau).count() as f64 / n)
        .collect()
}

/// Bootstrap settings; the seed is recorded alongside any output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 2000,
            seed: 1234,
            confidence: 0.95,
        }
    }
}

/// A point estimate with a percentile-bootstrap confidence interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateWithCi {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn percentile_ci(mut stats: Vec<f64>, confidence: f64) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    (
        quantile_sorted(&stats, alpha),
        quantile_sorted(&stats, 1.0 - alpha),
    )
}

fn resample<R: Rng>(scores: &[f64], rng: &mut R) -> Vec<f64> {
    (0..scores.len())
        .map(|_| scores[rng.gen_range(0..scores.len())])
        .collect()
}

fn poi_point(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (a.len() * b.len()) as f64
}

/// P(A > B) over all cross-set run pairs, ties counted half, with a
/// stratified bootstrap CI (each set resampled independently). The half-tie
/// rule makes `poi(a, b) + poi(b, a) == 1` exact.
pub fn probability_of_improvement(
    a: &ScoreSet,
    b: &ScoreSet,
    bootstrap: &BootstrapConfig,
) -> EstimateWithCi {
    let value = poi_point(&a.scores, &b.scores);
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed);
    let stats: Vec<f64> = (0..bootstrap.resamples)
        .map(|_| {
            let ra = resample(&a.scores, &mut rng);
            let rb = resample(&b.scores, &mut rng);
            poi_point(&ra, &rb)
        })
        .collect();
    let (ci_low, ci_high) = percentile_ci(stats, bootstrap.confidence);
    EstimateWithCi { value, ci_low, ci_high }
}

fn mean(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn median(scores: &[f64]) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Interquartile mean: the mean of the middle 50% of the sorted scores,
/// dropping the lowest and highest quarter by count with linear weighting at
/// fractional boundaries.
pub fn iqm(scores: &[f64]) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let lo = 0.25 * n;
    let hi = 0.75 * n;
    let mut acc = 0.0;
    let mut weight = 0.0;
    for (k, v) in s.iter().enumerate() {
        let a = k as f64;
        let b = a + 1.0;
        let w = (b.min(hi) - a.max(lo)).max(0.0);
        acc += w * v;
        weight += w;
    }
    acc / weight
}

/// Mean shortfall below a reference ceiling: `mean(max(ceiling - s, 0))`.
pub fn optimality_gap(scores: &[f64], ceiling: f64) -> f64 {
    scores.iter().map(|s| (ceiling - s).max(0.0)).sum::<f64>() / scores.len() as f64
}

/// All four aggregate statistics with bootstrap CIs.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateScores {
    pub label: String,
    pub mean: EstimateWithCi,
    pub median: EstimateWithCi,
    pub iqm: EstimateWithCi,
    /// Present only when a reference ceiling was supplied.
    pub optimality_gap: Option<EstimateWithCi>,
    /// Bootstrap seed used, recorded for provenance.
    pub bootstrap_seed: u64,
}

pub fn aggregate_scores(
    set: &ScoreSet,
    ceiling: Option<f64>,
    bootstrap: &BootstrapConfig,
) -> AggregateScores {
    let with_ci = |stat: &dyn Fn(&[f64]) -> f64, salt: u64| -> EstimateWithCi {
        let value = stat(&set.scores);
        let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed.wrapping_add(salt));
        let stats: Vec<f64> = (0..bootstrap.resamples)
            .map(|_| stat(&resample(&set.scores, &mut rng)))
            .collect();
        let (ci_low, ci_high) = percentile_ci(stats, bootstrap.confidence);
        EstimateWithCi { value, ci_low, ci_high }
    };
    AggregateScores {
        label: set.label.clone(),
        mean: with_ci(&mean, 1),
        median: with_ci(&median, 2),
        iqm: with_ci(&iqm, 3),
        optimality_gap: ceiling.map(|c| with_ci(&|s: &[f64]| optimality_gap(s, c), 4)),
        bootstrap_seed: bootstrap.seed,
    }
}
