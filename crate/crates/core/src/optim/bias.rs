//! Minimizing the binary-task loss over the output biases alone.
//!
//! With the scores `s_i = <w, g(x_i)>` held fixed, the loss separates into
//! one problem per task. Task `k` is strictly convex in `b_k` with
//! derivative `lambda_k (sum_i sigmoid(s_i + b_k) - n_k)`, where `n_k` counts
//! the examples whose rank exceeds `k`. Each root is found by bracketing,
//! then Newton steps safeguarded by bisection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{check_dim, CoralError, Result};
use crate::loss::TaskWeights;
use crate::math::sigmoid;
use crate::ordinal::{extend_label, ExtendedTarget, RankIndex, RankSpec};
use crate::par;

/// Bracket growth stops here; a root this far out means numerical trouble.
const BRACKET_LIMIT: f64 = 1e6;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasOptions {
    /// Required `|dL/db_k|` at the returned biases.
    pub tolerance: f64,
    /// Clamp tasks without a finite optimum to `±clamp` instead of failing.
    pub clamp: Option<f64>,
}

impl Default for BiasOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            clamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasSolution {
    pub biases: Vec<f64>,
    /// `dL/db_k` at the returned biases.
    pub derivatives: Vec<f64>,
    /// 1-based tasks that had no finite optimum and were clamped.
    pub clamped: Vec<usize>,
}

impl BiasSolution {
    /// Largest `b_{k+1} - b_k`, or 0 when already non-increasing.
    pub fn worst_violation(&self) -> f64 {
        self.biases
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

fn derivative(scores: &[f64], bias: f64, positives: f64, lambda: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut ds = 0.0;
    for &g in scores {
        let p = sigmoid(g + bias);
        s += p;
        ds += p * (1.0 - p);
    }
    (lambda * (s - positives), lambda * ds)
}

fn solve_task(scores: &[f64], positives: f64, lambda: f64, tol: f64) -> (f64, f64) {
    let f = |b: f64| derivative(scores, b, positives, lambda);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo).0 > 0.0 && lo > -BRACKET_LIMIT {
        lo *= 2.0;
    }
    while f(hi).0 < 0.0 && hi < BRACKET_LIMIT {
        hi *= 2.0;
    }
    let mut b = 0.5 * (lo + hi);
    let (mut value, mut slope) = f(b);
    for _ in 0..MAX_ITER {
        if value.abs() <= tol {
            break;
        }
        if value > 0.0 {
            hi = b;
        } else {
            lo = b;
        }
        let newton = b - value / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == b {
            break;
        }
        b = next;
        (value, slope) = f(b);
    }
    (b, value)
}

/// Minimizes the weighted binary cross-entropy over the `K-1` biases with
/// per-example scores held fixed.
pub fn optimize_biases_only(
    scores: &[f64],
    targets: &[ExtendedTarget],
    lambda: &TaskWeights,
    options: BiasOptions,
) -> Result<BiasSolution> {
    if scores.is_empty() {
        return Err(CoralError::Domain("no examples".into()));
    }
    check_dim("targets", scores.len(), targets.len())?;
    if !(options.tolerance.is_finite() && options.tolerance > 0.0) {
        return Err(CoralError::Domain(format!(
            "tolerance {} must be > 0",
            options.tolerance
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(CoralError::Domain(format!("score {i} is not finite")));
    }
    let tasks = lambda.len();
    let mut positives = vec![0usize; tasks];
    for t in targets {
        check_dim("extended target", tasks, t.len())?;
        for (c, &bit) in positives.iter_mut().zip(t.bits()) {
            *c += usize::from(bit);
        }
    }
    let n = scores.len();
    let unbounded: Vec<usize> = (0..tasks)
        .filter(|&k| positives[k] == 0 || positives[k] == n)
        .map(|k| k + 1)
        .collect();
    if !unbounded.is_empty() && options.clamp.is_none() {
        return Err(CoralError::UnboundedTasks { tasks: unbounded });
    }

    let mut biases = Vec::with_capacity(tasks);
    let mut derivatives = Vec::with_capacity(tasks);
    for (k, &count) in positives.iter().enumerate() {
        let l = lambda.as_slice()[k];
        let (b, d) = if count == 0 || count == n {
            let c = options.clamp.expect("checked above");
            let b = if count == 0 { -c } else { c };
            (b, derivative(scores, b, count as f64, l).0)
        } else {
            solve_task(scores, count as f64, l, options.tolerance)
        };
        biases.push(b);
        derivatives.push(d);
    }
    Ok(BiasSolution {
        biases,
        derivatives,
        clamped: unbounded,
    })
}

/// A fixed-score bias subproblem.
#[derive(Debug, Clone)]
pub struct BiasInstance {
    pub scores: Vec<f64>,
    pub ranks: Vec<RankIndex>,
    pub targets: Vec<ExtendedTarget>,
    pub lambda: TaskWeights,
}

/// Draws `K` in `ranks`, `N` in `sizes`, standard normal scores, uniform rank
/// labels with every rank present, and `lambda_k` uniform in `[0.1, 5]`.
pub fn random_bias_instance(
    seed: u64,
    ranks: std::ops::RangeInclusive<usize>,
    sizes: std::ops::RangeInclusive<usize>,
) -> Result<BiasInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(ranks);
    let n = rng.random_range(sizes).max(k);
    let spec = RankSpec::numbered(k)?;
    let scores = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ranks: Vec<RankIndex> = (0..n)
        .map(|i| spec.rank(if i < k { i + 1 } else { rng.random_range(1..=k) }))
        .collect::<Result<_>>()?;
    let targets = ranks
        .iter()
        .map(|&q| extend_label(q, &spec))
        .collect::<Result<_>>()?;
    let lambda = TaskWeights::new((1..k).map(|_| rng.random_range(0.1..=5.0)).collect())?;
    Ok(BiasInstance {
        scores,
        ranks,
        targets,
        lambda,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub trials: usize,
    pub ordered: usize,
    pub worst_violation: f64,
    /// Trial indices whose biases were not ordered within the slack.
    pub failures: Vec<usize>,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.ordered == self.trials
    }
}

/// Solves `trials` random instances (trial `t` uses seed `seed + t`) and
/// checks `b_k >= b_{k+1} - slack` on each.
pub fn verify_ordered_biases(trials: usize, seed: u64, slack: f64) -> Result<OrderingReport> {
    let results = par::map_indices(trials, |t| -> Result<f64> {
        let inst = random_bias_instance(seed.wrapping_add(t as u64), 3..=8, 50..=200)?;
        let sol = optimize_biases_only(&inst.scores, &inst.targets, &inst.lambda, BiasOptions::default())?;
        Ok(sol.worst_violation())
    });
    let mut report = OrderingReport {
        trials,
        ordered: 0,
        worst_violation: 0.0,
        failures: Vec::new(),
    };
    for (t, r) in results.into_iter().enumerate() {
        let v = r?;
        report.worst_violation = report.worst_violation.max(v);
        if v <= slack {
            report.ordered += 1;
        } else {
            report.failures.push(t);
        }
    }
    Ok(report)
}
