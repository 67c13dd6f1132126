//! The two summary metrics and their bookkeeping.
//!
//! `max_return_metric` is the cross-seed mean return at the training step
//! where that mean peaks (a proxy for final performance);
//! `average_return_metric` is the grand mean over every logged point of
//! every seed (a proxy for convergence speed). Standard errors use the
//! sample (n-1) standard deviation over seeds.

use std::collections::BTreeMap;
use std::fmt;

/// A metric value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub standard_error: f64,
}

/// Maximum-return result: where the cross-seed mean peaked and its value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxReturn {
    pub step: u64,
    pub value: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricError {
    /// Standard errors need at least two seeds.
    SingleSeed,
    /// No curve points to aggregate.
    Empty,
    /// The evaluation grid starts before some curve's first point, so
    /// nearest-preceding interpolation is undefined there.
    GridBeforeData { grid_step: u64 },
    /// `rank_plans` found plans absent from the store.
    MissingPlans { missing: Vec<u64> },
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::SingleSeed => write!(f, "metric needs at least two seeds"),
            MetricError::Empty => write!(f, "no curve points"),
            MetricError::GridBeforeData { grid_step } => {
                write!(f, "grid step {grid_step} precedes the first logged point")
            }
            MetricError::MissingPlans { missing } => {
                write!(f, "store is missing plans with bitmasks {missing:?}")
            }
        }
    }
}

impl std::error::Error for MetricError {}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    debug_assert!(n >= 2);
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Value of a curve at `step` under nearest-preceding-point interpolation.
fn value_at(curve: &[(u64, f64)], step: u64) -> Result<f64, MetricError> {
    let mut best: Option<f64> = None;
    for (s, v) in curve {
        if *s <= step {
            best = Some(*v);
        } else {
            break;
        }
    }
    best.ok_or(MetricError::GridBeforeData { grid_step: step })
}

/// Default common grid: the union of all logged steps, restricted to steps
/// at which every curve already has a point.
pub fn default_eval_grid(curves: &[Vec<(u64, f64)>]) -> Vec<u64> {
    let mut first = 0u64;
    for c in curves {
        if let Some((s, _)) = c.first() {
            first = first.max(*s);
        }
    }
    let mut steps: Vec<u64> = curves
        .iter()
        .flat_map(|c| c.iter().map(|(s, _)| *s))
        .filter(|s| *s >= first)
        .collect();
    steps.sort_unstable();
    steps.dedup();
    steps
}

/// Cross-seed mean return at the step where that mean is highest.
///
/// Curves are resampled onto `grid` by nearest preceding point; ties in the
/// argmax break toward the earliest step.
pub fn max_return_metric(
    curves: &[Vec<(u64, f64)>],
    grid: &[u64],
) -> Result<MaxReturn, MetricError> {
    if curves.len() < 2 {
        return Err(MetricError::SingleSeed);
    }
    if grid.is_empty() || curves.iter().any(|c| c.is_empty()) {
        return Err(MetricError::Empty);
    }
    let mut best: Option<MaxReturn> = None;
    for &step in grid {
        let values: Vec<f64> = curves
            .iter()
            .map(|c| value_at(c, step))
            .collect::<Result<_, _>>()?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let better = match &best {
            None => true,
            Some(b) => mean > b.value,
        };
        if better {
            best = Some(MaxReturn {
                step,
                value: mean,
                standard_error: sample_std(&values) / (values.len() as f64).sqrt(),
            });
        }
    }
    best.ok_or(MetricError::Empty)
}

/// Grand mean over every logged point of every seed, with the standard
/// error computed across per-seed means.
pub fn average_return_metric(curves: &[Vec<(u64, f64)>]) -> Result<MetricValue, MetricError> {
    if curves.len() < 2 {
        return Err(MetricError::SingleSeed);
    }
    if curves.iter().any(|c| c.is_empty()) {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let mut seed_means = Vec::with_capacity(curves.len());
    for c in curves {
        let s: f64 = c.iter().map(|(_, v)| v).sum();
        total += s;
        count += c.len();
        seed_means.push(s / c.len() as f64);
    }
    Ok(MetricValue {
        value: total / count as f64,
        standard_error: sample_std(&seed_means) / (seed_means.len() as f64).sqrt(),
    })
}

/// Per-plan metric row, as written to `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSummary {
    pub plan_bitmask: u64,
    pub x: usize,
    pub max_return: MaxReturn,
    pub avg_return: MetricValue,
    pub n_seeds: usize,
}

/// Computes both metrics for every plan in a store's curve collection.
pub fn summarize_plans(
    curves_by_plan: &BTreeMap<u64, Vec<(u64, Vec<(u64, f64)>)>>,
) -> Result<Vec<MetricsSummary>, MetricError> {
    if curves_by_plan.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut rows = Vec::new();
    for (mask, seed_curves) in curves_by_plan {
        let curves: Vec<Vec<(u64, f64)>> =
            seed_curves.iter().map(|(_, c)| c.clone()).collect();
        let grid = default_eval_grid(&curves);
        rows.push(MetricsSummary {
            plan_bitmask: *mask,
            x: mask.count_ones() as usize,
            max_return: max_return_metric(&curves, &grid)?,
            avg_return: average_return_metric(&curves)?,
            n_seeds: curves.len(),
        });
    }
    Ok(rows)
}

/// Best and worst plans for a given `x`, ranked by average return. Requires
/// every `C(n, x)` plan to be present; ties break toward the smaller
/// bitmask.
pub fn rank_plans(
    rows: &[MetricsSummary],
    n_agents: usize,
    x: usize,
) -> Result<(MetricsSummary, MetricsSummary), MetricError> {
    let present: BTreeMap<u64, &MetricsSummary> = rows
        .iter()
        .filter(|r| r.x == x)
        .map(|r| (r.plan_bitmask, r))
        .collect();
    let missing: Vec<u64> = super::enumerate_masks(n_agents, Some(x))
        .into_iter()
        .filter(|m| !present.contains_key(m))
        .collect();
    if !missing.is_empty() {
        return Err(MetricError::MissingPlans { missing });
    }
    let mut ordered: Vec<&MetricsSummary> = present.values().copied().collect();
    // Ascending by average return; equal values keep ascending-bitmask order
    // because BTreeMap iteration is bitmask-sorted and the sort is stable.
    ordered.sort_by(|a, b| a.avg_return.value.total_cmp(&b.avg_return.value));
    let worst = (*ordered.first().unwrap()).clone();
    let best = (*ordered.last().unwrap()).clone();
    Ok((best, worst))
}

/// Aggregation across all plans with the same number of reincarnated agents:
/// the pooled mean over every point of every run, with the run count that
/// went into it (run-count bookkeeping matters because `C(n, x)` differs
/// per `x`).
#[derive(Clone, Debug, PartialEq)]
pub struct XAggregate {
    pub x: usize,
    pub n_runs: usize,
    pub avg_return: f64,
    pub standard_error: f64,
}

pub fn aggregate_by_x(
    curves_by_plan: &BTreeMap<u64, Vec<(u64, Vec<(u64, f64)>)>>,
) -> Vec<XAggregate> {
    let mut groups: BTreeMap<usize, Vec<&Vec<(u64, f64)>>> = BTreeMap::new();
    for (mask, seed_curves) in curves_by_plan {
        let x = mask.count_ones() as usize;
        for (_, curve) in seed_curves {
            groups.entry(x).or_default().push(curve);
        }
    }
    groups
        .into_iter()
        .map(|(x, runs)| {
            let mut total = 0.0;
            let mut count = 0usize;
            let mut run_means = Vec::with_capacity(runs.len());
            for c in &runs {
                let s: f64 = c.iter().map(|(_, v)| v).sum();
                total += s;
                count += c.len();
                run_means.push(s / c.len() as f64);
            }
            let se = if run_means.len() >= 2 {
                sample_std(&run_means) / (run_means.len() as f64).sqrt()
            } else {
                0.0
            };
            XAggregate {
                x,
                n_runs: runs.len(),
                avg_return: total / count as f64,
                standard_error: se,
            }
        })
        .collect()
}

/// Renders the `metrics.csv` table.
pub fn metrics_csv(rows: &[MetricsSummary]) -> String {
    let mut out = String::from(
        "plan_bitmask,x,max_return,max_return_se,avg_return,avg_return_se,n_seeds\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.plan_bitmask,
            r.x,
            r.max_return.value,
            r.max_return.standard_error,
            r.avg_return.value,
            r.avg_return.standard_error,
            r.n_seeds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_curves_have_zero_se() {
        let curves = vec![vec![(0, 5.0), (1, 5.0)], vec![(0, 5.0), (1, 5.0)]];
        let grid = default_eval_grid(&curves);
        let m = max_return_metric(&curves, &grid).unwrap();
        assert_eq!(m.value, 5.0);
        assert_eq!(m.standard_error, 0.0);
        // earliest step wins the tie
        assert_eq!(m.step, 0);
    }

    #[test]
    fn two_point_hand_example() {
        // Seed A: [1, 3], seed B: [1, 1] over steps [0, 1]: means [1, 2],
        // peak at step 1 with value 2 and SE = std(3,1)/sqrt(2) = 1.
        let curves = vec![vec![(0, 1.0), (1, 3.0)], vec![(0, 1.0), (1, 1.0)]];
        let m = max_return_metric(&curves, &[0, 1]).unwrap();
        assert_eq!(m.step, 1);
        assert_eq!(m.value, 2.0);
        assert!((m.standard_error - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_return_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let seeds = rng.gen_range(2..=4);
            let len = rng.gen_range(1..=12);
            let curves: Vec<Vec<(u64, f64)>> = (0..seeds)
                .map(|_| {
                    (0..len)
                        .map(|t| (10 * (t as u64 + 1), rng.gen_range(-5.0..5.0)))
                        .collect()
                })
                .collect();
            let grid = default_eval_grid(&curves);
            let m = max_return_metric(&curves, &grid).unwrap();

            // Oracle: every curve shares the same steps, so scan them all.
            let mut best_step = 0;
            let mut best_mean = f64::NEG_INFINITY;
            for t in 0..len {
                let mean: f64 =
                    curves.iter().map(|c| c[t].1).sum::<f64>() / seeds as f64;
                if mean > best_mean {
                    best_mean = mean;
                    best_step = c_step(&curves, t);
                }
            }
            assert_eq!(m.step, best_step);
            assert!((m.value - best_mean).abs() < 1e-12);
            assert!(m.value >= best_mean - 1e-12, "argmax dominance");
        }
    }

    fn c_step(curves: &[Vec<(u64, f64)>], t: usize) -> u64 {
        curves[0][t].0
    }

    #[test]
    fn nearest_preceding_interpolation() {
        // Second curve logs at different steps; values are carried forward.
        let curves = vec![
            vec![(10, 1.0), (20, 2.0), (30, 3.0)],
            vec![(15, 10.0), (35, 0.0)],
        ];
        let grid = default_eval_grid(&curves);
        assert_eq!(grid, vec![15, 20, 30, 35]);
        let m = max_return_metric(&curves, &grid).unwrap();
        // means: 15 -> (1+10)/2 = 5.5, 20 -> 6, 30 -> 6.5, 35 -> 1.5
        assert_eq!(m.step, 30);
        assert!((m.value - 6.5).abs() < 1e-12);
    }

    #[test]
    fn grid_before_data_is_an_error() {
        let curves = vec![vec![(10, 1.0)], vec![(10, 2.0)]];
        match max_return_metric(&curves, &[5]) {
            Err(MetricError::GridBeforeData { grid_step: 5 }) => {}
            other => panic!("expected GridBeforeData, got {other:?}"),
        }
    }

    #[test]
    fn single_seed_is_rejected() {
        let curves = vec![vec![(0, 1.0)]];
        assert_eq!(max_return_metric(&curves, &[0]), Err(MetricError::SingleSeed));
        assert_eq!(average_return_metric(&curves), Err(MetricError::SingleSeed));
    }

    #[test]
    fn average_return_hand_examples() {
        let sevens = vec![vec![(0, 7.0), (1, 7.0)], vec![(0, 7.0), (1, 7.0)]];
        let m = average_return_metric(&sevens).unwrap();
        assert_eq!(m.value, 7.0);
        assert_eq!(m.standard_error, 0.0);

        // Seed means 2 and 4: grand mean 3, SE = std(2,4)/sqrt(2) = 1.
        let curves = vec![vec![(0, 1.0), (1, 3.0)], vec![(0, 3.0), (1, 5.0)]];
        let m = average_return_metric(&curves).unwrap();
        assert_eq!(m.value, 3.0);
        assert!((m.standard_error - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_return_matches_naive_single_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let seeds = rng.gen_range(2..=5);
            let curves: Vec<Vec<(u64, f64)>> = (0..seeds)
                .map(|_| {
                    let len = rng.gen_range(1..=20);
                    (0..len).map(|t| (t as u64, rng.gen_range(-9.0..9.0))).collect()
                })
                .collect();
            let m = average_return_metric(&curves).unwrap();
            let mut sum = 0.0;
            let mut k = 0usize;
            for c in &curves {
                for (_, v) in c {
                    sum += v;
                    k += 1;
                }
            }
            assert!((m.value - sum / k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn average_return_is_seed_order_invariant() {
        let a = vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 5.0)], vec![(0, -1.0), (1, 0.5)]];
        let mut b = a.clone();
        b.reverse();
        let ma = average_return_metric(&a).unwrap();
        let mb = average_return_metric(&b).unwrap();
        assert!((ma.value - mb.value).abs() < 1e-15);
        assert!((ma.standard_error - mb.standard_error).abs() < 1e-15);
    }

    fn row(mask: u64, avg: f64) -> MetricsSummary {
        MetricsSummary {
            plan_bitmask: mask,
            x: mask.count_ones() as usize,
            max_return: MaxReturn { step: 0, value: avg, standard_error: 0.0 },
            avg_return: MetricValue { value: avg, standard_error: 0.0 },
            n_seeds: 2,
        }
    }

    #[test]
    fn rank_plans_best_and_worst() {
        let rows = vec![row(0b01, 3.0), row(0b10, 5.0)];
        let (best, worst) = rank_plans(&rows, 2, 1).unwrap();
        assert_eq!(best.plan_bitmask, 0b10);
        assert_eq!(worst.plan_bitmask, 0b01);
    }

    #[test]
    fn rank_plans_single_plan_is_both() {
        let rows = vec![row(0b11, 1.0)];
        let (best, worst) = rank_plans(&rows, 2, 2).unwrap();
        assert_eq!(best, worst);
    }

    #[test]
    fn rank_plans_reports_missing() {
        let rows = vec![row(0b001, 1.0)];
        match rank_plans(&rows, 3, 1) {
            Err(MetricError::MissingPlans { missing }) => {
                assert_eq!(missing, vec![0b010, 0b100]);
            }
            other => panic!("expected MissingPlans, got {other:?}"),
        }
    }

    #[test]
    fn rank_plans_ties_break_by_bitmask() {
        let rows = vec![row(0b10, 2.0), row(0b01, 2.0)];
        let (best, worst) = rank_plans(&rows, 2, 1).unwrap();
        assert_eq!(best.plan_bitmask, 0b10, "last in ascending stable order");
        assert_eq!(worst.plan_bitmask, 0b01);
    }

    #[test]
    fn aggregate_by_x_counts_runs() {
        let mut by_plan: BTreeMap<u64, Vec<(u64, Vec<(u64, f64)>)>> = BTreeMap::new();
        by_plan.insert(0b00, vec![(0, vec![(0, 1.0)]), (1, vec![(0, 2.0)])]);
        by_plan.insert(0b01, vec![(0, vec![(0, 3.0)])]);
        by_plan.insert(0b10, vec![(0, vec![(0, 5.0)])]);
        let agg = aggregate_by_x(&by_plan);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].x, 0);
        assert_eq!(agg[0].n_runs, 2);
        assert_eq!(agg[1].x, 1);
        assert_eq!(agg[1].n_runs, 2);
        assert_eq!(agg[1].avg_return, 4.0);
    }
}
