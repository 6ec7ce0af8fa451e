//! MLP feature extractor with interchangeable ordinal output heads.
//!
//! All parameters of a model live in one flat `Vec<f64>`. The layout is the
//! declaration order used by serialization, gradients and the optimizer:
//!
//! 1. for each body layer: weights (row-major, `out x in`), then biases;
//! 2. head weights (row-major, one row per output unit), then head biases.
//!
//! Body layers use rectified linear activations, except the last one, whose
//! identity output is the penultimate representation `g`. The CORAL head has
//! a single weight row shared by every binary task plus `K-1` biases; the OR
//! head has one weight row per task; the CE head has `K` rows.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CoralError, Result};
use crate::math::{dot, sigmoid};
use crate::ordinal::{decode_rank, threshold_probs, BinaryDecisions, RankIndex};

/// Default hidden layer sizes.
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Shared weight vector, `K-1` independent biases.
    Coral,
    /// Independent weight vector and bias per binary task.
    Or,
    /// `K`-way softmax classifier.
    Ce,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Coral => "coral",
            HeadKind::Or => "or",
            HeadKind::Ce => "ce",
        }
    }

    /// Whether the head produces `K-1` binary task decisions.
    pub fn has_binary_tasks(self) -> bool {
        !matches!(self, HeadKind::Ce)
    }
}

impl std::str::FromStr for HeadKind {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coral" => Ok(HeadKind::Coral),
            "or" => Ok(HeadKind::Or),
            "ce" => Ok(HeadKind::Ce),
            other => Err(CoralError::Config(format!("unknown head kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Body layer widths; the last entry is the penultimate dimension.
    pub hidden: Vec<usize>,
    pub head: HeadKind,
    pub num_ranks: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerRange {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) weights: Range<usize>,
    pub(crate) biases: Range<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub(crate) layers: Vec<LayerRange>,
    pub(crate) head_rows: usize,
    pub(crate) head_weights: Range<usize>,
    pub(crate) head_biases: Range<usize>,
    pub(crate) total: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, head: HeadKind, num_ranks: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden,
            head,
            num_ranks,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(CoralError::Config("input dimension must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(CoralError::Config(format!(
                "hidden sizes must be a nonempty list of positive widths, got {:?}",
                self.hidden
            )));
        }
        if self.num_ranks < 2 {
            return Err(CoralError::Config(format!(
                "need at least 2 ranks, got {}",
                self.num_ranks
            )));
        }
        Ok(())
    }

    pub fn penultimate_dim(&self) -> usize {
        *self.hidden.last().expect("validated nonempty")
    }

    pub fn num_tasks(&self) -> usize {
        self.num_ranks - 1
    }

    /// Number of logits the head emits.
    pub fn num_outputs(&self) -> usize {
        match self.head {
            HeadKind::Ce => self.num_ranks,
            _ => self.num_tasks(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut offset = 0;
        let mut in_dim = self.input_dim;
        for &out_dim in &self.hidden {
            let weights = offset..offset + in_dim * out_dim;
            let biases = weights.end..weights.end + out_dim;
            offset = biases.end;
            layers.push(LayerRange {
                in_dim,
                out_dim,
                weights,
                biases,
            });
            in_dim = out_dim;
        }
        let head_rows = match self.head {
            HeadKind::Coral => 1,
            HeadKind::Or => self.num_tasks(),
            HeadKind::Ce => self.num_ranks,
        };
        let head_weights = offset..offset + head_rows * in_dim;
        let head_biases = head_weights.end..head_weights.end + self.num_outputs();
        Layout {
            layers,
            head_rows,
            total: head_biases.end,
            head_weights,
            head_biases,
        }
    }
}

/// One affine body layer.
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

/// The body parameters `W` (everything except the head).
#[derive(Debug, Clone)]
pub struct MlpParams<'a> {
    pub layers: Vec<Layer<'a>>,
}

#[derive(Debug, Clone, Copy)]
pub struct CoralHead<'a> {
    pub shared_weight: &'a [f64],
    pub biases: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct OrHead<'a> {
    /// Row-major `(K-1) x h`, one independent row per task.
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct CeHead<'a> {
    /// Row-major `K x h`.
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

fn affine(layer: &Layer<'_>, input: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        layer
            .weights
            .chunks_exact(layer.in_dim)
            .zip(layer.biases)
            .map(|(row, b)| dot(row, input) + b),
    );
}

/// Penultimate activations `g(x, W)`.
pub fn forward_features(params: &MlpParams<'_>, x: &[f64]) -> Result<Vec<f64>> {
    let first = params
        .layers
        .first()
        .ok_or_else(|| CoralError::Config("network has no layers".into()))?;
    check_dim("input features", first.in_dim, x.len())?;
    let mut input = x.to_vec();
    let mut out = Vec::new();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        check_dim("layer input", layer.in_dim, input.len())?;
        affine(layer, &input, &mut out);
        if l < last {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        std::mem::swap(&mut input, &mut out);
    }
    Ok(input)
}

/// `z_k = <w, g> + b_k`.
pub fn coral_logits(head: &CoralHead<'_>, g: &[f64]) -> Result<Vec<f64>> {
    check_dim("penultimate features", head.shared_weight.len(), g.len())?;
    let score = dot(head.shared_weight, g);
    Ok(head.biases.iter().map(|b| score + b).collect())
}

/// `P(y^(k) = 1) = sigmoid(<w, g> + b_k)`.
pub fn coral_probs(head: &CoralHead<'_>, g: &[f64]) -> Result<Vec<f64>> {
    Ok(coral_logits(head, g)?.into_iter().map(sigmoid).collect())
}

fn rows_logits(weights: &[f64], biases: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if g.is_empty() || weights.len() != biases.len() * g.len() {
        return Err(CoralError::Dimension {
            what: "head weights",
            expected: biases.len() * g.len(),
            actual: weights.len(),
        });
    }
    Ok(weights
        .chunks_exact(g.len())
        .zip(biases)
        .map(|(row, b)| dot(row, g) + b)
        .collect())
}

/// `z_k = <w_k, g> + b_k` with an independent `w_k` per task.
pub fn or_logits(head: &OrHead<'_>, g: &[f64]) -> Result<Vec<f64>> {
    rows_logits(head.weights, head.biases, g)
}

pub fn ce_logits(head: &CeHead<'_>, g: &[f64]) -> Result<Vec<f64>> {
    rows_logits(head.weights, head.biases, g)
}

/// Argmax over class logits; the first maximum wins ties.
pub fn ce_decode(logits: &[f64]) -> RankIndex {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    RankIndex::from_raw(best + 1)
}

/// A single prediction: the decoded rank and, for binary-task heads, the
/// per-task decisions it was decoded from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub rank: RankIndex,
    pub decisions: Option<BinaryDecisions>,
}

/// Forward activations kept for backpropagation.
pub(crate) struct Trace {
    /// Post-activation output of every body layer; the last is `g`.
    pub(crate) outputs: Vec<Vec<f64>>,
    pub(crate) logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalModel {
    arch: Architecture,
    params: Vec<f64>,
}

impl OrdinalModel {
    /// Seeded initialization: weights uniform in `±sqrt(6 / (fan_in + fan_out))`,
    /// all biases zero.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-limit..=limit);
            }
        };
        for layer in &layout.layers {
            fill(layer.weights.clone(), layer.in_dim, layer.out_dim);
        }
        fill(layout.head_weights.clone(), arch.penultimate_dim(), layout.head_rows);
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        check_dim("parameter vector", arch.num_params(), params.len())?;
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(CoralError::Domain(format!("parameter {i} is not finite")));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn head_kind(&self) -> HeadKind {
        self.arch.head
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn body(&self) -> MlpParams<'_> {
        let layout = self.arch.layout();
        MlpParams {
            layers: layout
                .layers
                .iter()
                .map(|l| Layer {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weights: &self.params[l.weights.clone()],
                    biases: &self.params[l.biases.clone()],
                })
                .collect(),
        }
    }

    fn head_slices(&self) -> (&[f64], &[f64]) {
        let layout = self.arch.layout();
        (
            &self.params[layout.head_weights],
            &self.params[layout.head_biases],
        )
    }

    pub fn coral_head(&self) -> Option<CoralHead<'_>> {
        (self.arch.head == HeadKind::Coral).then(|| {
            let (shared_weight, biases) = self.head_slices();
            CoralHead {
                shared_weight,
                biases,
            }
        })
    }

    pub fn or_head(&self) -> Option<OrHead<'_>> {
        (self.arch.head == HeadKind::Or).then(|| {
            let (weights, biases) = self.head_slices();
            OrHead { weights, biases }
        })
    }

    pub fn ce_head(&self) -> Option<CeHead<'_>> {
        (self.arch.head == HeadKind::Ce).then(|| {
            let (weights, biases) = self.head_slices();
            CeHead { weights, biases }
        })
    }

    /// Output-layer biases of the active head.
    pub fn head_biases(&self) -> &[f64] {
        self.head_slices().1
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward_features(&self.body(), x)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.logits)
    }

    /// Per-task probabilities; `None` for the CE head.
    pub fn task_probs(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        if !self.arch.head.has_binary_tasks() {
            return Ok(None);
        }
        Ok(Some(self.logits(x)?.into_iter().map(sigmoid).collect()))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let logits = self.logits(x)?;
        if self.arch.head.has_binary_tasks() {
            let probs: Vec<f64> = logits.into_iter().map(sigmoid).collect();
            let f = threshold_probs(&probs)?;
            Ok(Prediction {
                rank: decode_rank(&f),
                decisions: Some(f),
            })
        } else {
            Ok(Prediction {
                rank: ce_decode(&logits),
                decisions: None,
            })
        }
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Result<Trace> {
        let layout = self.arch.layout();
        check_dim("input features", self.arch.input_dim, x.len())?;
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(layout.layers.len());
        let last = layout.layers.len() - 1;
        for (l, range) in layout.layers.iter().enumerate() {
            let layer = Layer {
                in_dim: range.in_dim,
                out_dim: range.out_dim,
                weights: &self.params[range.weights.clone()],
                biases: &self.params[range.biases.clone()],
            };
            let input = if l == 0 { x } else { &outputs[l - 1] };
            let mut out = Vec::with_capacity(range.out_dim);
            affine(&layer, input, &mut out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            outputs.push(out);
        }
        let g = &outputs[last];
        let (w, b) = (
            &self.params[layout.head_weights.clone()],
            &self.params[layout.head_biases.clone()],
        );
        let logits = match self.arch.head {
            HeadKind::Coral => coral_logits(
                &CoralHead {
                    shared_weight: w,
                    biases: b,
                },
                g,
            )?,
            HeadKind::Or | HeadKind::Ce => rows_logits(w, b, g)?,
        };
        Ok(Trace { outputs, logits })
    }
}
