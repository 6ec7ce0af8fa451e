use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use crate::data::{Dataset, Example};
use crate::error::{check_dim, CoralError, Result};
use crate::loss::{loss_and_grad, model_loss, TaskWeights};
use crate::metrics::{mae, rmse};
use crate::model::OrdinalModel;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds the mini-batch shuffling.
    pub seed: u64,
    /// `None` means uniform weights.
    pub lambda: Option<TaskWeights>,
    /// Divide each batch gradient by the batch length before the update.
    pub normalize_by_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
            lambda: None,
            normalize_by_batch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CoralError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CoralError::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(CoralError::Config(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example loss on the training split after the epoch.
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub test_mae: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation MAE (earliest on ties).
    pub best: OrdinalModel,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    /// The parameters after the last epoch.
    pub last: OrdinalModel,
}

/// MAE and RMSE of `model` on `data`.
pub fn evaluate_mae_rmse(model: &OrdinalModel, data: &Dataset) -> Result<(f64, f64)> {
    let preds = par::map_indices(data.len(), |i| model.predict(data.row(i)).map(|p| p.rank))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((mae(data.labels(), &preds)?, rmse(data.labels(), &preds)?))
}

/// Mini-batch training with adaptive moment estimation; keeps the epoch
/// snapshot with the lowest validation MAE.
pub fn train(
    model: &OrdinalModel,
    train_set: &Dataset,
    validation: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_dim("training features", model.arch().input_dim, train_set.dim())?;
    check_dim("validation features", model.arch().input_dim, validation.dim())?;
    let tasks = model.arch().num_tasks();
    let lambda = match &config.lambda {
        Some(l) => {
            check_dim("task weights", tasks, l.len())?;
            l.clone()
        }
        None => TaskWeights::uniform(tasks),
    };

    let mut current = model.clone();
    let mut adam = Adam::new(config.adam(), current.params().len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let examples = train_set.examples();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut batch: Vec<Example<'_>> = Vec::with_capacity(config.batch_size);

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, OrdinalModel)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| examples[i]));
            let (loss, mut grad) = loss_and_grad(&current, &batch, &lambda)?;
            if !loss.is_finite() {
                return Err(CoralError::Divergence { epoch, batch: b });
            }
            if config.normalize_by_batch {
                grad.scale(1.0 / batch.len() as f64);
            }
            adam.step(current.params_mut(), grad.as_slice())?;
        }

        let train_loss = model_loss(&current, &examples, &lambda)? / examples.len() as f64;
        if !train_loss.is_finite() {
            return Err(CoralError::Divergence {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let (val_mae, val_rmse) = evaluate_mae_rmse(&current, validation)?;
        let test_mae = match test {
            Some(t) => Some(evaluate_mae_rmse(&current, t)?.0),
            None => None,
        };
        debug!("epoch {epoch}: loss {train_loss:.6} val_mae {val_mae:.4}");
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_mae,
            val_rmse,
            test_mae,
        });
        if best.as_ref().is_none_or(|(m, _, _)| val_mae < *m) {
            best = Some((val_mae, epoch, current.clone()));
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        log,
        last: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_detailed, SyntheticParams};
    use crate::model::{Architecture, HeadKind};

    fn small_data(seed: u64) -> (Dataset, Dataset) {
        let syn = generate_synthetic_detailed(&SyntheticParams {
            seed,
            n: 300,
            dim: 1,
            num_ranks: 3,
            noise_sd: 0.0,
        })
        .unwrap();
        let d = syn.dataset;
        let idx: Vec<usize> = (0..d.len()).collect();
        (
            d.select(&idx[..240], "train").unwrap(),
            d.select(&idx[240..], "val").unwrap(),
        )
    }

    /// Best achievable MAE of any two-threshold rule on the feature itself,
    /// found by grid search.
    fn threshold_oracle_mae(d: &Dataset) -> f64 {
        let grid: Vec<f64> = (0..=400).map(|i| -1.0 + i as f64 * 0.005).collect();
        let mut best = f64::INFINITY;
        for (a, &t1) in grid.iter().enumerate() {
            for &t2 in &grid[a..] {
                let err: usize = (0..d.len())
                    .map(|i| {
                        let x = d.row(i)[0];
                        let q = 1 + usize::from(x > t1) + usize::from(x > t2);
                        q.abs_diff(d.labels()[i].get())
                    })
                    .sum();
                best = best.min(err as f64 / d.len() as f64);
            }
        }
        best
    }

    #[test]
    fn separable_problem_is_learned() {
        let (tr, va) = small_data(1);
        assert!(threshold_oracle_mae(&tr) < 0.05);
        let arch = Architecture::new(1, vec![8, 4], HeadKind::Coral, 3).unwrap();
        let m = OrdinalModel::new(arch, 0).unwrap();
        let cfg = TrainConfig {
            batch_size: 32,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let out = train(&m, &tr, &va, None, &cfg).unwrap();
        let (train_mae, _) = evaluate_mae_rmse(&out.best, &tr).unwrap();
        assert!(train_mae < 0.2, "train MAE {train_mae}");
        let min = out.log.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
        assert_eq!(out.log[out.best_epoch - 1].val_mae, min);
        assert_eq!(evaluate_mae_rmse(&out.best, &va).unwrap().0, min);
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let (tr, va) = small_data(2);
        let arch = Architecture::new(1, vec![6, 3], HeadKind::Or, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let run = || {
            let m = OrdinalModel::new(arch.clone(), 4).unwrap();
            train(&m, &tr, &va, Some(&va), &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        let bits = |o: &TrainOutcome| -> Vec<u64> {
            o.log.iter().flat_map(|r| [r.train_loss.to_bits(), r.val_mae.to_bits()]).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.last.params(), b.last.params());
        let c = par::single_threaded(run);
        assert_eq!(bits(&a), bits(&c));
        assert_eq!(a.last.params(), c.last.params());
    }

    #[test]
    fn zero_learning_rate_is_a_null_update() {
        let (tr, va) = small_data(3);
        let arch = Architecture::new(1, vec![4, 2], HeadKind::Ce, 3).unwrap();
        let m = OrdinalModel::new(arch, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            learning_rate: 0.0,
            ..Default::default()
        };
        let out = train(&m, &tr, &va, None, &cfg).unwrap();
        assert_eq!(out.last.params(), m.params());
        assert!(out.log.windows(2).all(|w| w[0].train_loss == w[1].train_loss));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (tr, va) = small_data(4);
        let m = OrdinalModel::new(Architecture::new(1, vec![2], HeadKind::Coral, 3).unwrap(), 0).unwrap();
        for cfg in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
            TrainConfig { lambda: Some(TaskWeights::uniform(5)), ..Default::default() },
        ] {
            assert!(train(&m, &tr, &va, None, &cfg).is_err());
        }
    }

    #[test]
    fn divergence_reports_epoch_and_batch() {
        let (tr, va) = small_data(5);
        let m = OrdinalModel::new(Architecture::new(1, vec![2], HeadKind::Coral, 3).unwrap(), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 1e300,
            epsilon: 1e-300,
            ..Default::default()
        };
        match train(&m, &tr, &va, None, &cfg) {
            Err(CoralError::Divergence { epoch, .. }) => assert!(epoch >= 1),
            Err(CoralError::NonFiniteGradient { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
