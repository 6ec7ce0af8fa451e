//! Losses and hand-derived gradients for the three heads.
//!
//! The binary-task loss is the `lambda`-weighted cross-entropy summed over
//! every example and task,
//!
//! ```text
//! L = - sum_i sum_k lambda_k [ y_ik log s(z_ik) + (1 - y_ik) log(1 - s(z_ik)) ]
//! ```
//!
//! and is shared by the CORAL and OR heads; only the logits differ. Its
//! derivative with respect to a logit is `lambda_k (s(z_ik) - y_ik)`. The CE
//! head uses softmax cross-entropy against the rank as a class label, with
//! derivative `softmax(z) - onehot(q)`.
//!
//! All losses are batch sums. Per-example work is split into fixed chunks
//! (see [`crate::par`]), so the reduction order does not depend on threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{check_dim, CoralError, Result};
use crate::math::{log_one_minus_sigmoid, log_sigmoid, log_sum_exp, sigmoid};
use crate::model::{Architecture, HeadKind, OrdinalModel};
use crate::ordinal::{ExtendedTarget, RankIndex};
use crate::par;

/// Positive per-task importance weights `lambda^(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TaskWeights(Vec<f64>);

impl TaskWeights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(CoralError::Domain("task weights must be nonempty".into()));
        }
        if let Some(v) = lambda.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(CoralError::Domain(format!("task weight {v} must be > 0")));
        }
        Ok(Self(lambda))
    }

    pub fn uniform(num_tasks: usize) -> Self {
        Self(vec![1.0; num_tasks])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for TaskWeights {
    type Error = CoralError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TaskWeights> for Vec<f64> {
    fn from(w: TaskWeights) -> Self {
        w.0
    }
}

/// Partial derivatives laid out congruently with
/// [`OrdinalModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle(pub Vec<f64>);

impl GradientBundle {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().for_each(|g| *g *= c);
    }
}

/// Loss of one example's binary-task logits.
fn binary_example_loss(z: &[f64], y: &[u8], lambda: &[f64]) -> f64 {
    z.iter()
        .zip(y)
        .zip(lambda)
        .map(|((&z, &y), &l)| {
            let term = if y == 1 {
                log_sigmoid(z)
            } else {
                log_one_minus_sigmoid(z)
            };
            -l * term
        })
        .sum()
}

/// Weighted binary cross-entropy over precomputed logits (the CORAL loss; the
/// OR head uses the same form with its own logits).
pub fn coral_loss(
    logits: &[Vec<f64>],
    targets: &[ExtendedTarget],
    lambda: &TaskWeights,
) -> Result<f64> {
    if logits.is_empty() {
        return Err(CoralError::Domain("empty batch".into()));
    }
    check_dim("targets", logits.len(), targets.len())?;
    let mut total = 0.0;
    for (z, y) in logits.iter().zip(targets) {
        check_dim("logits", lambda.len(), z.len())?;
        check_dim("extended target", lambda.len(), y.len())?;
        total += binary_example_loss(z, y.bits(), lambda.as_slice());
    }
    Ok(total)
}

/// Softmax cross-entropy of class logits against 1-based rank labels.
pub fn ce_loss_logits(logits: &[Vec<f64>], ranks: &[RankIndex]) -> Result<f64> {
    if logits.is_empty() {
        return Err(CoralError::Domain("empty batch".into()));
    }
    check_dim("ranks", logits.len(), ranks.len())?;
    let mut total = 0.0;
    for (z, q) in logits.iter().zip(ranks) {
        if q.get() > z.len() {
            return Err(CoralError::Domain(format!("rank {q} exceeds {} classes", z.len())));
        }
        total += log_sum_exp(z) - z[q.zero_based()];
    }
    Ok(total)
}

fn check_batch(model: &OrdinalModel, batch: &[Example<'_>], lambda: &TaskWeights) -> Result<()> {
    if batch.is_empty() {
        return Err(CoralError::Domain("empty batch".into()));
    }
    if model.head_kind().has_binary_tasks() {
        check_dim("task weights", model.arch().num_tasks(), lambda.len())?;
    }
    let k = model.arch().num_ranks;
    if let Some(e) = batch.iter().find(|e| e.rank.get() > k) {
        return Err(CoralError::Domain(format!("rank {} outside 1..={k}", e.rank)));
    }
    Ok(())
}

/// Loss of one example; writes `dL/dz` into `dz` when provided.
fn example_loss(
    head: HeadKind,
    logits: &[f64],
    rank: RankIndex,
    lambda: &[f64],
    dz: Option<&mut [f64]>,
) -> f64 {
    let q = rank.get();
    match head {
        HeadKind::Coral | HeadKind::Or => {
            let mut loss = 0.0;
            let mut dz = dz;
            for (k, (&z, &l)) in logits.iter().zip(lambda).enumerate() {
                // task k+1 is positive iff q > k+1
                let y = q > k + 1;
                loss -= l * if y { log_sigmoid(z) } else { log_one_minus_sigmoid(z) };
                if let Some(d) = dz.as_deref_mut() {
                    d[k] = l * (sigmoid(z) - f64::from(u8::from(y)));
                }
            }
            loss
        }
        HeadKind::Ce => {
            let lse = log_sum_exp(logits);
            if let Some(d) = dz {
                for (k, (&z, dk)) in logits.iter().zip(d.iter_mut()).enumerate() {
                    *dk = (z - lse).exp() - if k + 1 == q { 1.0 } else { 0.0 };
                }
            }
            lse - logits[q - 1]
        }
    }
}

/// Batch loss for any head. `lambda` is ignored by the CE head.
pub fn model_loss(model: &OrdinalModel, batch: &[Example<'_>], lambda: &TaskWeights) -> Result<f64> {
    check_batch(model, batch, lambda)?;
    let head = model.head_kind();
    let losses = par::map_indices(batch.len().div_ceil(par::CHUNK), |c| -> Result<f64> {
        let mut s = 0.0;
        for e in &batch[c * par::CHUNK..((c + 1) * par::CHUNK).min(batch.len())] {
            let z = model.logits(e.x)?;
            s += example_loss(head, &z, e.rank, lambda.as_slice(), None);
        }
        Ok(s)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total)
}

/// Accumulates one example's parameter gradient into `grad`; returns its loss.
fn accumulate_example(
    model: &OrdinalModel,
    e: &Example<'_>,
    lambda: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    let arch = model.arch();
    let layout = arch.layout();
    let params = model.params();
    let trace = model.trace(e.x)?;
    let mut dz = vec![0.0; trace.logits.len()];
    let loss = example_loss(arch.head, &trace.logits, e.rank, lambda, Some(&mut dz));

    let h = arch.penultimate_dim();
    let g = trace.outputs.last().expect("at least one layer");
    let head_w = &params[layout.head_weights.clone()];
    let mut delta = vec![0.0; h];
    {
        let (gw, gb) = {
            let (lo, hi) = grad.split_at_mut(layout.head_biases.start);
            (&mut lo[layout.head_weights.clone()], &mut hi[..layout.head_biases.len()])
        };
        for (b, d) in gb.iter_mut().zip(&dz) {
            *b += d;
        }
        match arch.head {
            HeadKind::Coral => {
                // every task shares the scalar score <w, g>
                let ds: f64 = dz.iter().sum();
                for j in 0..h {
                    gw[j] += ds * g[j];
                    delta[j] = ds * head_w[j];
                }
            }
            HeadKind::Or | HeadKind::Ce => {
                for (r, d) in dz.iter().enumerate() {
                    let row = r * h..(r + 1) * h;
                    for ((gwj, wj), (dj, gj)) in gw[row.clone()]
                        .iter_mut()
                        .zip(&head_w[row])
                        .zip(delta.iter_mut().zip(g))
                    {
                        *gwj += d * gj;
                        *dj += d * wj;
                    }
                }
            }
        }
    }

    for (l, range) in layout.layers.iter().enumerate().rev() {
        let input: &[f64] = if l == 0 { e.x } else { &trace.outputs[l - 1] };
        let w = &params[range.weights.clone()];
        {
            let gw = &mut grad[range.weights.clone()];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    for (gwi, xi) in gw[o * range.in_dim..(o + 1) * range.in_dim].iter_mut().zip(input) {
                        *gwi += d * xi;
                    }
                }
            }
        }
        for (gb, d) in grad[range.biases.clone()].iter_mut().zip(&delta) {
            *gb += d;
        }
        if l > 0 {
            let mut next = vec![0.0; range.in_dim];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    for (ni, wi) in next.iter_mut().zip(&w[o * range.in_dim..(o + 1) * range.in_dim]) {
                        *ni += d * wi;
                    }
                }
            }
            // rectified linear mask of the previous layer
            for (ni, a) in next.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *ni = 0.0;
                }
            }
            delta = next;
        }
    }
    Ok(loss)
}

/// Batch loss and its analytic gradient for any head.
pub fn loss_and_grad(
    model: &OrdinalModel,
    batch: &[Example<'_>],
    lambda: &TaskWeights,
) -> Result<(f64, GradientBundle)> {
    check_batch(model, batch, lambda)?;
    let n_params = model.params().len();
    let failure = std::sync::Mutex::new(None);
    let (loss, grad) = par::sum_chunks(batch.len(), par::CHUNK, n_params, |range, acc| {
        let mut s = 0.0;
        for e in &batch[range] {
            match accumulate_example(model, e, lambda.as_slice(), acc) {
                Ok(l) => s += l,
                Err(err) => {
                    failure.lock().expect("poisoned").get_or_insert(err);
                }
            }
        }
        s
    });
    if let Some(err) = failure.into_inner().expect("poisoned") {
        return Err(err);
    }
    Ok((loss, GradientBundle(grad)))
}

fn expect_head(model: &OrdinalModel, head: HeadKind) -> Result<()> {
    if model.head_kind() == head {
        Ok(())
    } else {
        Err(CoralError::Config(format!(
            "expected a {head} model, got {}",
            model.head_kind()
        )))
    }
}

pub fn coral_grad(
    model: &OrdinalModel,
    batch: &[Example<'_>],
    lambda: &TaskWeights,
) -> Result<(f64, GradientBundle)> {
    expect_head(model, HeadKind::Coral)?;
    loss_and_grad(model, batch, lambda)
}

pub fn or_loss(model: &OrdinalModel, batch: &[Example<'_>], lambda: &TaskWeights) -> Result<f64> {
    expect_head(model, HeadKind::Or)?;
    model_loss(model, batch, lambda)
}

pub fn or_grad(
    model: &OrdinalModel,
    batch: &[Example<'_>],
    lambda: &TaskWeights,
) -> Result<(f64, GradientBundle)> {
    expect_head(model, HeadKind::Or)?;
    loss_and_grad(model, batch, lambda)
}

pub fn ce_loss(model: &OrdinalModel, batch: &[Example<'_>]) -> Result<f64> {
    expect_head(model, HeadKind::Ce)?;
    model_loss(model, batch, &TaskWeights::uniform(1))
}

pub fn ce_grad(model: &OrdinalModel, batch: &[Example<'_>]) -> Result<(f64, GradientBundle)> {
    expect_head(model, HeadKind::Ce)?;
    loss_and_grad(model, batch, &TaskWeights::uniform(1))
}

/// Central differences `(L(p + h e_i) - L(p - h e_i)) / 2h` for every
/// coordinate of `params`.
pub fn finite_difference_grad<F>(loss_fn: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(CoralError::Domain(format!("step {step} must be > 0")));
    }
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = loss_fn(&probe)?;
        probe[i] = orig - step;
        let minus = loss_fn(&probe)?;
        probe[i] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(CoralError::NonFiniteProbe { index: i });
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Finite-difference gradient of [`model_loss`] over all model parameters.
pub fn finite_difference_model_grad(
    model: &OrdinalModel,
    batch: &[Example<'_>],
    lambda: &TaskWeights,
    step: f64,
) -> Result<GradientBundle> {
    let g = finite_difference_grad(
        |p| {
            let mut m = model.clone();
            m.set_params(p)?;
            model_loss(&m, batch, lambda)
        },
        model.params(),
        step,
    )?;
    Ok(GradientBundle(g))
}

/// `max_i |a_i - n_i| / max(1, |a_i|, |n_i|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

/// A seeded small model and batch for gradient checking: input dimension up
/// to 8, two hidden layers up to 16 wide, `K` up to 6, up to 32 examples and
/// task weights in `[0.25, 4]`.
#[derive(Debug, Clone)]
pub struct GradientCase {
    pub model: OrdinalModel,
    pub features: Vec<Vec<f64>>,
    pub ranks: Vec<RankIndex>,
    pub lambda: TaskWeights,
}

impl GradientCase {
    pub fn random(seed: u64, head: HeadKind) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=8);
        let hidden = vec![rng.random_range(1..=16), rng.random_range(1..=16)];
        let k = rng.random_range(2..=6);
        let n = rng.random_range(1..=32);
        let mut model = OrdinalModel::new(Architecture::new(d, hidden, head, k)?, seed)?;
        // jitter everything off zero so no unit sits on the rectifier kink
        for p in model.params_mut() {
            *p += rng.random_range(-0.2..0.2);
        }
        let features = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ranks = (0..n)
            .map(|_| RankIndex::new(rng.random_range(1..=k), k))
            .collect::<Result<_>>()?;
        let lambda = TaskWeights::new((1..k).map(|_| rng.random_range(0.25..4.0)).collect())?;
        Ok(Self {
            model,
            features,
            ranks,
            lambda,
        })
    }

    pub fn batch(&self) -> Vec<Example<'_>> {
        self.features
            .iter()
            .zip(&self.ranks)
            .map(|(x, &rank)| Example { x, rank })
            .collect()
    }

    /// Largest relative error between the analytic and central-difference
    /// gradients.
    pub fn max_relative_error(&self, step: f64) -> Result<f64> {
        let batch = self.batch();
        let (_, analytic) = loss_and_grad(&self.model, &batch, &self.lambda)?;
        let numeric = finite_difference_model_grad(&self.model, &batch, &self.lambda, step)?;
        Ok(max_relative_error(analytic.as_slice(), numeric.as_slice()))
    }
}
