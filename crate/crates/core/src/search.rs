//! Outer search for the smallest query count that admits an exact algorithm.
//!
//! Cells are visited in ascending order: query count `t` outermost, then
//! workspace dimension `d_w`, then output partition. The first cell whose best
//! restart certifies (max per-input error below the target) fixes the estimate.
//! A plan that runs out without certifying says nothing about lower bounds.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boolfn::{BooleanFunction, FunctionSpec};
use crate::error::{Error, Result};
use crate::optimizer::{optimize_circuit, OptimizeOutcome, OptimizerSettings, EPSILON_TOL};
use crate::qcircuit::CircuitConfig;
use crate::record::SolutionRecord;

/// Largest `n` for which the default workspace range `1..=2^n` is allowed.
pub const MAX_DEFAULT_WORKSPACE_BITS: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Given,
    #[default]
    Balanced,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchPlan {
    /// First query count; defaults to the known lower bound when
    /// `start_at_lower_bound` is set, else 1.
    pub t_min: Option<usize>,
    pub t_max: usize,
    pub start_at_lower_bound: bool,
    /// Explicit workspace dimensions, tried in the given order.
    pub dw_list: Option<Vec<usize>>,
    /// Upper end of the default range `1..=dw_max`.
    pub dw_max: Option<usize>,
    /// Permit the default `dw_max = 2^n` above `n = 8`.
    pub allow_large_workspace: bool,
    pub partition_mode: PartitionMode,
    pub partitions: Option<Vec<Vec<usize>>>,
    pub max_partition_candidates: usize,
    /// Values above `1e-5` select the bounded-error regime.
    pub epsilon_target: f64,
}

impl Default for SearchPlan {
    fn default() -> Self {
        Self {
            t_min: None,
            t_max: 1,
            start_at_lower_bound: false,
            dw_list: None,
            dw_max: None,
            allow_large_workspace: false,
            partition_mode: PartitionMode::Balanced,
            partitions: None,
            max_partition_candidates: 200,
            epsilon_target: EPSILON_TOL,
        }
    }
}

impl SearchPlan {
    pub fn t_range(&self, spec: &FunctionSpec) -> Result<std::ops::RangeInclusive<usize>> {
        let lower = if self.start_at_lower_bound { known_lower_bound(spec) } else { None };
        let t_min = self.t_min.or(lower).unwrap_or(1);
        if t_min > self.t_max {
            return Err(Error::Parameter(format!("empty query range {t_min}..={}", self.t_max)));
        }
        Ok(t_min..=self.t_max)
    }

    pub fn workspace_dims(&self, n: usize) -> Result<Vec<usize>> {
        let dims = match (&self.dw_list, self.dw_max) {
            (Some(list), _) => list.clone(),
            (None, Some(max)) => (1..=max).collect(),
            (None, None) => {
                if n > MAX_DEFAULT_WORKSPACE_BITS && !self.allow_large_workspace {
                    return Err(Error::Parameter(format!(
                        "default workspace range 1..=2^{n} refused for n > {MAX_DEFAULT_WORKSPACE_BITS}; \
                         set dw_list, dw_max or allow_large_workspace"
                    )));
                }
                (1..=1usize << n).collect()
            }
        };
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Parameter(format!("workspace dimensions {dims:?} must be non-empty and positive")));
        }
        Ok(dims)
    }

    pub fn validate(&self, f: &BooleanFunction) -> Result<()> {
        self.t_range(f.spec())?;
        self.workspace_dims(f.n())?;
        if !(self.epsilon_target > 0.0 && self.epsilon_target < 1.0) {
            return Err(Error::Parameter(format!("epsilon_target {} must lie in (0, 1)", self.epsilon_target)));
        }
        if self.partition_mode == PartitionMode::Given && self.partitions.as_ref().is_none_or(|p| p.is_empty()) {
            return Err(Error::Parameter("partition_mode \"given\" needs a non-empty partitions list".into()));
        }
        if let Some(parts) = &self.partitions {
            if let Some(bad) = parts.iter().find(|p| p.len() != f.num_outputs() || p.contains(&0)) {
                return Err(Error::Parameter(format!(
                    "partition {bad:?} must have {} positive entries",
                    f.num_outputs()
                )));
            }
        }
        Ok(())
    }
}

/// Known lower bound on the exact query complexity for the built-in families:
/// `⌈n(1 − 1/m)⌉` for MOD and `max{n − k, l} − 1` for EXACT.
pub fn known_lower_bound(spec: &FunctionSpec) -> Option<usize> {
    match *spec {
        FunctionSpec::Mod { n, m } => Some(n - n / m),
        FunctionSpec::Exact { n, k, l } => Some((n - k).max(l) - 1),
        FunctionSpec::Table { .. } => None,
    }
}

/// Near-equal split of `d_a` into `parts`, remainder to the lowest indices.
pub fn balanced_partition(d_a: usize, parts: usize) -> Vec<usize> {
    let (q, r) = (d_a / parts, d_a % parts);
    (0..parts).map(|i| q + usize::from(i < r)).collect()
}

/// Candidate output partitions of the accessible space.
///
/// * `Given`: `given` verbatim.
/// * `Balanced`: the single near-equal split.
/// * `Sweep`: the balanced split, then every composition of `d_a` into
///   `num_outputs` positive parts ordered by decreasing smallest part (ties in
///   descending lexicographic order), up to `cap` candidates in total.
pub fn partition_candidates(
    d_a: usize,
    num_outputs: usize,
    mode: PartitionMode,
    given: Option<&[Vec<usize>]>,
    cap: usize,
) -> Result<Vec<Vec<usize>>> {
    if num_outputs == 0 || d_a < num_outputs {
        return Err(Error::Parameter(format!("cannot split d_A = {d_a} into {num_outputs} non-empty blocks")));
    }
    match mode {
        PartitionMode::Given => given
            .map(<[Vec<usize>]>::to_vec)
            .ok_or_else(|| Error::Parameter("no partitions given".into())),
        PartitionMode::Balanced => Ok(vec![balanced_partition(d_a, num_outputs)]),
        PartitionMode::Sweep => {
            let cap = cap.max(1);
            let balanced = balanced_partition(d_a, num_outputs);
            let mut out = vec![balanced.clone()];
            let mut current = Vec::with_capacity(num_outputs);
            for min_part in (1..=d_a / num_outputs).rev() {
                if out.len() >= cap {
                    break;
                }
                compositions_desc(d_a, num_outputs, min_part, false, &mut current, &mut |c| {
                    if c != balanced.as_slice() {
                        out.push(c.to_vec());
                    }
                    out.len() < cap
                });
            }
            Ok(out)
        }
    }
}

/// Visits compositions of `remaining` into `parts` entries, every entry
/// `>= min_part` and at least one equal to it, in descending lexicographic
/// order. Returns `false` once `visit` asks to stop.
fn compositions_desc(
    remaining: usize,
    parts: usize,
    min_part: usize,
    hit_min: bool,
    current: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    if parts == 1 {
        if remaining < min_part || !(hit_min || remaining == min_part) {
            return true;
        }
        current.push(remaining);
        let go_on = visit(current);
        current.pop();
        return go_on;
    }
    let rest_min = (parts - 1) * min_part;
    if remaining < rest_min + min_part {
        return true;
    }
    for first in (min_part..=remaining - rest_min).rev() {
        current.push(first);
        let go_on = compositions_desc(remaining - first, parts - 1, min_part, hit_min || first == min_part, current, visit);
        current.pop();
        if !go_on {
            return false;
        }
    }
    true
}

/// One row of the search summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: usize,
    pub d_w: usize,
    pub partition: String,
    pub mean_error: f64,
    pub max_error: f64,
    pub certified: bool,
    pub seconds: f64,
}

pub fn format_partition(p: &[usize]) -> String {
    let inner: Vec<String> = p.iter().map(usize::to_string).collect();
    format!("[{}]", inner.join(","))
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Query count of the first certified cell, if any.
    pub q_estimate: Option<usize>,
    /// Certified record, or the lowest-error record when nothing certified.
    pub record: SolutionRecord,
    pub rows: Vec<SummaryRow>,
}

impl SearchOutcome {
    /// `Err(NotFound)` when the plan was exhausted without certification.
    pub fn certified(&self) -> Result<usize> {
        self.q_estimate.ok_or(Error::NotFound)
    }
}

/// Sweeps the plan and returns the first certified cell.
pub fn search_qe(f: &BooleanFunction, plan: &SearchPlan, settings: &OptimizerSettings) -> Result<SearchOutcome> {
    plan.validate(f)?;
    settings.validate()?;
    let settings = OptimizerSettings { target_loss: plan.epsilon_target.min(settings.target_loss), ..settings.clone() };
    let dims = plan.workspace_dims(f.n())?;
    let mut rows = Vec::new();
    let mut best: Option<(CircuitConfig, OptimizeOutcome, f64)> = None;

    for t in plan.t_range(f.spec())? {
        for &d_w in &dims {
            let d_a = (f.n() + 1) * d_w;
            if d_a < f.num_outputs() {
                continue;
            }
            let candidates = partition_candidates(
                d_a,
                f.num_outputs(),
                plan.partition_mode,
                plan.partitions.as_deref(),
                plan.max_partition_candidates,
            )?;
            for partition in candidates {
                if partition.iter().sum::<usize>() > d_a {
                    continue;
                }
                let config = CircuitConfig::new(f.n(), t, d_w, partition)?;
                if settings.progress_every > 0 {
                    eprintln!("PROG cell t={t} d_w={d_w} partition={}", format_partition(&config.partition));
                }
                let start = Instant::now();
                let outcome = optimize_circuit(&config, f, &settings)?;
                let seconds = start.elapsed().as_secs_f64();
                let certified = outcome.best_report.max_error < plan.epsilon_target;
                rows.push(SummaryRow {
                    t,
                    d_w,
                    partition: format_partition(&config.partition),
                    mean_error: outcome.best_report.mean_error,
                    max_error: outcome.best_report.max_error,
                    certified,
                    seconds,
                });
                if certified {
                    let record = SolutionRecord::from_outcome(f, &config, &outcome, plan.epsilon_target, settings.seed, seconds)?;
                    return Ok(SearchOutcome { q_estimate: Some(t), record, rows });
                }
                let better = best
                    .as_ref()
                    .is_none_or(|(_, b, _)| outcome.best_report.max_error < b.best_report.max_error);
                if better {
                    best = Some((config, outcome, seconds));
                }
            }
        }
    }
    let (config, outcome, seconds) = best.ok_or_else(|| Error::Parameter("search plan contains no feasible cell".into()))?;
    let record = SolutionRecord::from_outcome(f, &config, &outcome, plan.epsilon_target, settings.seed, seconds)?;
    Ok(SearchOutcome { q_estimate: None, record, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolfn::{make_exact, make_mod};

    #[test]
    fn balanced_examples() {
        assert_eq!(balanced_partition(12, 5), [3, 3, 2, 2, 2]);
        assert_eq!(balanced_partition(3, 2), [2, 1]);
        let p = partition_candidates(12, 5, PartitionMode::Balanced, None, 200).unwrap();
        assert_eq!(p, [vec![3, 3, 2, 2, 2]]);
    }

    #[test]
    fn sweep_small() {
        let p = partition_candidates(4, 2, PartitionMode::Sweep, None, 200).unwrap();
        assert_eq!(p, [vec![2, 2], vec![3, 1], vec![1, 3]]);
    }

    #[test]
    fn sweep_enumerates_every_composition_once() {
        // C(11, 4) = 330 compositions of 12 into 5 positive parts.
        let p = partition_candidates(12, 5, PartitionMode::Sweep, None, 10_000).unwrap();
        assert_eq!(p.len(), 330);
        let mut sorted = p.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 330);
        assert!(p.iter().all(|c| c.iter().sum::<usize>() == 12 && c.len() == 5));
        let mins: Vec<usize> = p.iter().skip(1).map(|c| *c.iter().min().unwrap()).collect();
        assert!(mins.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sweep_respects_cap() {
        let p = partition_candidates(40, 2, PartitionMode::Sweep, None, 5).unwrap();
        assert_eq!(p, [vec![20, 20], vec![21, 19], vec![19, 21], vec![22, 18], vec![18, 22]]);
        let big = partition_candidates(36, 7, PartitionMode::Sweep, None, 200).unwrap();
        assert_eq!(big.len(), 200);
    }

    #[test]
    fn given_is_verbatim() {
        let given = vec![vec![2, 4, 1, 1, 4]];
        let p = partition_candidates(12, 5, PartitionMode::Given, Some(&given), 200).unwrap();
        assert_eq!(p, given);
        assert!(partition_candidates(4, 5, PartitionMode::Balanced, None, 200).is_err());
    }

    #[test]
    fn lower_bounds() {
        assert_eq!(known_lower_bound(&FunctionSpec::Mod { n: 5, m: 5 }), Some(4));
        assert_eq!(known_lower_bound(&FunctionSpec::Mod { n: 2, m: 2 }), Some(1));
        assert_eq!(known_lower_bound(&FunctionSpec::Mod { n: 3, m: 3 }), Some(2));
        assert_eq!(known_lower_bound(&FunctionSpec::Exact { n: 6, k: 2, l: 4 }), Some(3));
        assert_eq!(known_lower_bound(&FunctionSpec::Exact { n: 7, k: 4, l: 5 }), Some(4));
        assert_eq!(known_lower_bound(&FunctionSpec::Exact { n: 2, k: 0, l: 2 }), Some(1));
    }

    #[test]
    fn plan_validation() {
        let f = make_mod(3, 3).unwrap();
        let empty = SearchPlan { t_min: Some(3), t_max: 2, ..Default::default() };
        assert!(empty.validate(&f).is_err());
        let from_bound = SearchPlan { start_at_lower_bound: true, t_max: 3, ..Default::default() };
        assert_eq!(from_bound.t_range(f.spec()).unwrap(), 2..=3);
        let big = make_exact(9, 4, 5).unwrap();
        assert!(SearchPlan { t_max: 5, ..Default::default() }.validate(&big).is_err());
        assert!(SearchPlan { t_max: 5, dw_max: Some(2), ..Default::default() }.validate(&big).is_ok());
        let bad_given = SearchPlan { t_max: 2, partition_mode: PartitionMode::Given, ..Default::default() };
        assert!(bad_given.validate(&f).is_err());
        let wrong_len = SearchPlan { t_max: 2, partitions: Some(vec![vec![2, 2]]), ..Default::default() };
        assert!(wrong_len.validate(&f).is_err());
    }

    #[test]
    fn mod22_search() {
        let f = make_mod(2, 2).unwrap();
        let plan = SearchPlan { t_min: Some(1), t_max: 2, dw_max: Some(2), ..Default::default() };
        let out = search_qe(&f, &plan, &OptimizerSettings::default()).unwrap();
        assert_eq!(out.q_estimate, Some(1));
        assert_eq!(out.certified().unwrap(), 1);
        assert_eq!(out.rows.len(), 1);
        assert!(out.record.certified);
    }

    #[test]
    fn exhausted_plan_is_not_found() {
        // Parity of 3 bits needs 2 queries; t = 1 can never certify.
        let f = make_mod(3, 2).unwrap();
        let plan = SearchPlan { t_min: Some(1), t_max: 1, dw_list: Some(vec![1]), ..Default::default() };
        let settings = OptimizerSettings { restarts: 2, max_iterations: 300, ..Default::default() };
        let out = search_qe(&f, &plan, &settings).unwrap();
        assert_eq!(out.q_estimate, None);
        assert!(matches!(out.certified(), Err(Error::NotFound)));
        assert!(!out.record.certified);
        assert!(out.record.max_error > 1e-2);
    }
}
