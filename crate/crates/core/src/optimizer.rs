//! L-BFGS with a strong-Wolfe line search, and the multi-restart driver used
//! to train circuits.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boolfn::BooleanFunction;
use crate::error::{Error, Result};
use crate::lossgrad::{CircuitProblem, LossReport, ParameterVector, Reduction};
use crate::qcircuit::CircuitConfig;

/// Default exactness threshold on the per-input error.
pub const EPSILON_TOL: f64 = 1e-5;

/// Objective value and gradient at a point, plus the quantity compared against
/// the early-stop target (the value itself for plain objectives).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub target_metric: f64,
}

impl Evaluation {
    pub fn plain(value: f64, gradient: Vec<f64>) -> Self {
        Self { value, gradient, target_metric: value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergedReason {
    TargetReached,
    GradientSmall,
    /// Relative objective decrease stayed below tolerance over the stall window.
    Stalled,
    IterationCap,
    LineSearchFailure,
}

impl fmt::Display for ConvergedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConvergedReason::TargetReached => "target-reached",
            ConvergedReason::GradientSmall => "gradient-small",
            ConvergedReason::Stalled => "stalled",
            ConvergedReason::IterationCap => "iteration-cap",
            ConvergedReason::LineSearchFailure => "line-search-failure",
        };
        f.write_str(s)
    }
}

/// Settings for circuit optimization, including the restart loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub memory_pairs: usize,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Early-stop threshold on the maximum per-input error.
    pub target_loss: f64,
    /// Half-width of the uniform initialization interval.
    pub init_scale: f64,
    pub stall_window: usize,
    pub stall_tolerance: f64,
    pub reduction: Reduction,
    /// Restarts evaluated concurrently; 1 runs them in order.
    pub threads: usize,
    /// Emit a `PROG` line on stderr every this many iterations (0 = silent).
    pub progress_every: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            memory_pairs: 10,
            max_iterations: 5000,
            grad_tolerance: 1e-9,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            restarts: 5,
            seed: 0,
            target_loss: EPSILON_TOL,
            init_scale: 1.0,
            stall_window: 20,
            stall_tolerance: 1e-12,
            reduction: Reduction::Mean,
            threads: 1,
            progress_every: 0,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return bad(format!("need 0 < wolfe_c1 < wolfe_c2 < 1, got {} and {}", self.wolfe_c1, self.wolfe_c2));
        }
        if self.memory_pairs == 0 {
            return bad("memory_pairs must be at least 1".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if !(self.target_loss >= 0.0) || !(self.grad_tolerance >= 0.0) || !(self.init_scale >= 0.0) {
            return bad("target_loss, grad_tolerance and init_scale must be non-negative".into());
        }
        Ok(())
    }
}

/// Progress snapshot passed to observers after every accepted step.
#[derive(Debug, Clone, Copy)]
pub struct IterationInfo {
    pub iteration: usize,
    pub value: f64,
    pub target_metric: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub target_metric: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: ConvergedReason,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    alpha: f64,
    eval: Evaluation,
    slope: f64,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    direction: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evaluations: usize,
}

const MAX_BRACKET_STEPS: usize = 40;
const MAX_ZOOM_STEPS: usize = 40;

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    fn eval(&mut self, alpha: f64) -> Result<Point> {
        let trial: Vec<f64> = self.x.iter().zip(self.direction).map(|(x, p)| x + alpha * p).collect();
        let eval = checked(self.objective, &trial)?;
        self.evaluations += 1;
        let slope = dot(&eval.gradient, self.direction);
        Ok(Point { alpha, eval, slope })
    }

    fn armijo(&self, p: &Point) -> bool {
        p.eval.value <= self.f0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    /// Strong-Wolfe step by bracketing and zooming with cubic interpolation.
    fn search(&mut self, alpha_init: f64) -> Result<Option<Point>> {
        let mut prev = Point {
            alpha: 0.0,
            eval: Evaluation { value: self.f0, gradient: Vec::new(), target_metric: f64::NAN },
            slope: self.slope0,
        };
        let mut alpha = alpha_init;
        for i in 0..MAX_BRACKET_STEPS {
            let cur = self.eval(alpha)?;
            if !self.armijo(&cur) || (i > 0 && cur.eval.value >= prev.eval.value) {
                return self.zoom(prev, cur);
            }
            if self.curvature(&cur) {
                return Ok(Some(cur));
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            alpha = (2.0 * cur.alpha).min(1e10);
            prev = cur;
        }
        Ok(if self.armijo(&prev) && prev.alpha > 0.0 { Some(prev) } else { None })
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<Option<Point>> {
        for _ in 0..MAX_ZOOM_STEPS {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= 1e-16 * b.max(1.0) {
                break;
            }
            let alpha = cubic_minimizer(&lo, &hi)
                .filter(|&c| c > a + 0.1 * width && c < b - 0.1 * width)
                .unwrap_or(0.5 * (a + b));
            let cur = self.eval(alpha)?;
            if !self.armijo(&cur) || cur.eval.value >= lo.eval.value {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Ok(Some(cur));
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        // Interval collapsed: settle for sufficient decrease if `lo` is a real step.
        Ok(if lo.alpha > 0.0 && self.armijo(&lo) && lo.eval.value < self.f0 { Some(lo) } else { None })
    }
}

/// Minimizer of the cubic interpolating value and slope at both ends.
fn cubic_minimizer(p: &Point, q: &Point) -> Option<f64> {
    let (a, fa, ga) = (p.alpha, p.eval.value, p.slope);
    let (b, fb, gb) = (q.alpha, q.eval.value, q.slope);
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = gb - ga + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let c = b - (b - a) * (gb + d2 - d1) / denom;
    c.is_finite().then_some(c)
}

fn checked<F>(objective: &mut F, x: &[f64]) -> Result<Evaluation>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let eval = objective(x)?;
    if !eval.value.is_finite() || eval.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "objective returned non-finite value or gradient (value = {}, |x|∞ = {:e})",
            eval.value,
            inf_norm(x)
        )));
    }
    if eval.gradient.len() != x.len() {
        return Err(Error::Shape(format!("gradient has {} entries for {} variables", eval.gradient.len(), x.len())));
    }
    Ok(eval)
}

/// Minimizes `objective` from `x0` with L-BFGS.
pub fn lbfgs_minimize<F>(objective: F, x0: Vec<f64>, settings: &OptimizerSettings) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    lbfgs_minimize_observed(objective, x0, settings, &mut |_| {})
}

/// [`lbfgs_minimize`] with a callback after every accepted step.
pub fn lbfgs_minimize_observed<F>(
    mut objective: F,
    x0: Vec<f64>,
    settings: &OptimizerSettings,
    observer: &mut dyn FnMut(&IterationInfo),
) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    settings.validate()?;
    let mut x = x0;
    let mut current = checked(&mut objective, &x)?;
    let mut evaluations = 1;
    let mut history = vec![current.value];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let finish = |x: Vec<f64>, e: Evaluation, iterations, evaluations, reason, history| LbfgsResult {
        x,
        value: e.value,
        gradient: e.gradient,
        target_metric: e.target_metric,
        iterations,
        evaluations,
        reason,
        history,
    };

    let mut iteration = 0;
    loop {
        if current.target_metric < settings.target_loss {
            return Ok(finish(x, current, iteration, evaluations, ConvergedReason::TargetReached, history));
        }
        if inf_norm(&current.gradient) < settings.grad_tolerance {
            return Ok(finish(x, current, iteration, evaluations, ConvergedReason::GradientSmall, history));
        }
        let w = settings.stall_window;
        if w > 0 && history.len() > w {
            let old = history[history.len() - 1 - w];
            if old - current.value <= settings.stall_tolerance * old.abs() {
                return Ok(finish(x, current, iteration, evaluations, ConvergedReason::Stalled, history));
            }
        }
        if iteration >= settings.max_iterations {
            return Ok(finish(x, current, iteration, evaluations, ConvergedReason::IterationCap, history));
        }

        let mut direction = two_loop(&current.gradient, &s_hist, &y_hist, &rho_hist);
        let mut slope = dot(&direction, &current.gradient);
        let mut fresh = s_hist.is_empty();
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            direction = current.gradient.iter().map(|g| -g).collect();
            slope = dot(&direction, &current.gradient);
            fresh = true;
        }

        let mut step = None;
        for attempt in 0..2 {
            let alpha0 = if fresh { 1.0f64.min(1.0 / inf_norm(&current.gradient).max(1e-300)) } else { 1.0 };
            let mut ls = LineSearch {
                objective: &mut objective,
                x: &x,
                direction: &direction,
                f0: current.value,
                slope0: slope,
                c1: settings.wolfe_c1,
                c2: settings.wolfe_c2,
                evaluations: 0,
            };
            let found = ls.search(alpha0)?;
            evaluations += ls.evaluations;
            if found.is_some() || attempt == 1 || fresh {
                step = found;
                break;
            }
            // Retry once along steepest descent with fresh memory.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            direction = current.gradient.iter().map(|g| -g).collect();
            slope = dot(&direction, &current.gradient);
            fresh = true;
        }
        let Some(point) = step else {
            return Ok(finish(x, current, iteration, evaluations, ConvergedReason::LineSearchFailure, history));
        };

        let s: Vec<f64> = direction.iter().map(|p| point.alpha * p).collect();
        let y: Vec<f64> = point.eval.gradient.iter().zip(&current.gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) && sy > 0.0 {
            if s_hist.len() == settings.memory_pairs {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s.clone());
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        current = point.eval;
        iteration += 1;
        history.push(current.value);
        observer(&IterationInfo {
            iteration,
            value: current.value,
            target_metric: current.target_metric,
            grad_norm: inf_norm(&current.gradient),
        });
    }
}

/// Two-loop recursion: returns `−H·g` for the implicit inverse-Hessian `H`.
fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], rho: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let m = s_hist.len();
    let mut alpha = vec![0.0; m];
    for i in (0..m).rev() {
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..m {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Final state of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub seed: u64,
    pub mean_error: f64,
    pub max_error: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: ConvergedReason,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub best_params: ParameterVector,
    pub best_report: LossReport,
    pub iterations_used: usize,
    pub restart_index: usize,
    pub converged_reason: ConvergedReason,
    /// `best_report.max_error < target_loss`.
    pub certified: bool,
    pub restarts: Vec<RestartSummary>,
}

struct RestartRun {
    params: ParameterVector,
    report: LossReport,
    summary: RestartSummary,
}

fn run_restart(problem: &CircuitProblem, settings: &OptimizerSettings, index: usize) -> Result<RestartRun> {
    let config = problem.config();
    let seed = settings.seed.wrapping_add(index as u64);
    let x0 = ParameterVector::random(config, settings.init_scale, seed);
    let (dim, layers) = (x0.dim, x0.layers);
    let reduction = settings.reduction;
    let objective = |x: &[f64]| -> Result<Evaluation> {
        let p = ParameterVector::new(dim, layers, x.to_vec())?;
        let r = problem.loss_and_grad(&p)?;
        Ok(Evaluation { value: r.objective(reduction), target_metric: r.max_error, gradient: r.gradient.unwrap_or_default() })
    };
    let every = settings.progress_every;
    let mut observer = |info: &IterationInfo| {
        if every > 0 && info.iteration.is_multiple_of(every) {
            eprintln!(
                "PROG restart={index} iter={} objective={:.6e} max_error={:.6e} grad_norm={:.3e}",
                info.iteration, info.value, info.target_metric, info.grad_norm
            );
        }
    };
    let result = lbfgs_minimize_observed(objective, x0.values, settings, &mut observer)?;
    let params = ParameterVector::new(dim, layers, result.x)?;
    let report = problem.loss(&params)?;
    let summary = RestartSummary {
        index,
        seed,
        mean_error: report.mean_error,
        max_error: report.max_error,
        iterations: result.iterations,
        evaluations: result.evaluations,
        reason: result.reason,
    };
    if every > 0 {
        eprintln!(
            "PROG restart={index} done iter={} mean_error={:.6e} max_error={:.6e} reason={}",
            result.iterations, report.mean_error, report.max_error, result.reason
        );
    }
    Ok(RestartRun { params, report, summary })
}

/// Trains the circuit from `settings.restarts` seeded initializations
/// (`seed`, `seed + 1`, …), stopping at the first restart that certifies.
///
/// With `threads > 1` restarts run in batches of that size; the reported
/// winner is the lowest-index certified restart, so results match the
/// sequential order.
pub fn optimize_circuit(config: &CircuitConfig, f: &BooleanFunction, settings: &OptimizerSettings) -> Result<OptimizeOutcome> {
    settings.validate()?;
    let problem = CircuitProblem::new(config, f)?.with_reduction(settings.reduction);
    let pool = if settings.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(settings.threads)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut runs: Vec<RestartRun> = Vec::new();
    let mut start = 0;
    while start < settings.restarts {
        let end = (start + settings.threads).min(settings.restarts);
        let batch: Vec<RestartRun> = match &pool {
            Some(pool) => pool.install(|| {
                (start..end).into_par_iter().map(|k| run_restart(&problem, settings, k)).collect::<Result<_>>()
            })?,
            None => (start..end).map(|k| run_restart(&problem, settings, k)).collect::<Result<_>>()?,
        };
        let winner = batch.iter().position(|r| r.report.max_error < settings.target_loss);
        match winner {
            Some(w) => {
                runs.extend(batch.into_iter().take(w + 1));
                break;
            }
            None => runs.extend(batch),
        }
        start = end;
    }

    let certified_idx = runs.iter().position(|r| r.report.max_error < settings.target_loss);
    let best_idx = certified_idx.unwrap_or_else(|| {
        (0..runs.len())
            .min_by(|&a, &b| runs[a].report.mean_error.total_cmp(&runs[b].report.mean_error))
            .expect("at least one restart")
    });
    let summaries: Vec<RestartSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let best = runs.swap_remove(best_idx);
    Ok(OptimizeOutcome {
        certified: certified_idx.is_some(),
        iterations_used: best.summary.iterations,
        restart_index: best.summary.index,
        converged_reason: best.summary.reason,
        best_params: best.params,
        best_report: best.report,
        restarts: summaries,
    })
}
