//! Run settings resolved from flags, environment, a TOML file and defaults.
//!
//! Clap already folds the environment into the flag values, so resolution
//! here only has to layer the parsed arguments over the file over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use coral::data::{generate_synthetic, load_csv, CsvSchema, Dataset, SplitPlan, SyntheticParams};
use coral::loss::TaskWeights;
use coral::model::DEFAULT_HIDDEN;
use coral::optim::TrainConfig;
use coral::HeadKind;
use serde::{Deserialize, Serialize};

use crate::args::{DataArgs, TrainArgs};

/// Keys accepted in a `--config` file. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub header: Option<bool>,
    pub synthetic: Option<bool>,
    pub ranks: Option<usize>,
    pub n: Option<usize>,
    pub dim: Option<usize>,
    pub noise: Option<f64>,
    pub data_seed: Option<u64>,
    pub split: Option<[f64; 3]>,
    pub split_seed: Option<u64>,
    pub head: Option<HeadKind>,
    pub hidden: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub lambda: Option<String>,
    pub costs: Option<Vec<String>>,
    pub sum_loss: Option<bool>,
    pub standardize: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Source {
    Csv { path: PathBuf, ranks: usize, header: bool },
    Synthetic(SyntheticParams),
}

impl Source {
    pub fn load(&self) -> anyhow::Result<Dataset> {
        Ok(match self {
            Source::Csv { path, ranks, header } => load_csv(
                path,
                CsvSchema {
                    num_ranks: *ranks,
                    has_header: *header,
                },
            )?,
            Source::Synthetic(p) => generate_synthetic(p)?,
        })
    }

    pub fn num_ranks(&self) -> usize {
        match self {
            Source::Csv { ranks, .. } => *ranks,
            Source::Synthetic(p) => p.num_ranks,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSettings {
    pub source: Source,
    pub split: SplitPlan,
}

/// `ranks_hint` fills in K when neither flags nor file give it (a saved
/// model knows its own K).
pub fn resolve_data(args: &DataArgs, file: &FileConfig, ranks_hint: Option<usize>) -> anyhow::Result<DataSettings> {
    let ranks = args.ranks.or(file.ranks).or(ranks_hint);
    let dataset = args.dataset.clone().or_else(|| file.dataset.clone());
    let synthetic = args.synthetic || file.synthetic.unwrap_or(false);
    let source = match (dataset, synthetic) {
        (Some(_), true) => bail!("choose either a CSV dataset or --synthetic, not both"),
        (Some(path), false) => Source::Csv {
            path,
            ranks: ranks.context("--ranks is required with --dataset")?,
            header: args.header || file.header.unwrap_or(false),
        },
        (None, true) => {
            let d = SyntheticParams::default();
            Source::Synthetic(SyntheticParams {
                seed: args.data_seed.or(file.data_seed).unwrap_or(d.seed),
                n: args.n.or(file.n).unwrap_or(d.n),
                dim: args.dim.or(file.dim).unwrap_or(d.dim),
                num_ranks: ranks.unwrap_or(d.num_ranks),
                noise_sd: args.noise.or(file.noise).unwrap_or(d.noise_sd),
            })
        }
        (None, false) => bail!("no data: pass --dataset <csv> or --synthetic"),
    };
    let d = SplitPlan::default();
    let fractions = match (&args.split, file.split) {
        (Some(v), _) => [v[0], v[1], v[2]],
        (None, Some(v)) => v,
        (None, None) => [d.train, d.validation, d.test],
    };
    let split = SplitPlan::new(
        fractions[0],
        fractions[1],
        fractions[2],
        args.split_seed.or(file.split_seed).unwrap_or(d.seed),
    )?;
    Ok(DataSettings { source, split })
}

/// Everything that determines a training run. Serialized into every output
/// artifact; the output location is deliberately left out so that reruns
/// into different directories stay byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct RunSettings {
    pub data: DataSettings,
    pub standardize: bool,
    pub head: HeadKind,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub lambda_source: String,
    pub costs: Vec<String>,
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn resolve_train(args: &TrainArgs) -> anyhow::Result<RunSettings> {
    let file = FileConfig::load(args.data.config.as_deref())?;
    let data = resolve_data(&args.data, &file, None)?;
    let k = data.source.num_ranks();
    let lambda_source = args
        .lambda
        .clone()
        .or_else(|| file.lambda.clone())
        .unwrap_or_else(|| "uniform".into());
    let lambda = match lambda_source.as_str() {
        "uniform" => None,
        path => Some(load_lambda(Path::new(path), k)?),
    };
    let d = TrainConfig::default();
    let train = TrainConfig {
        epochs: args.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        learning_rate: args.lr.or(file.lr).unwrap_or(d.learning_rate),
        beta1: file.beta1.unwrap_or(d.beta1),
        beta2: file.beta2.unwrap_or(d.beta2),
        epsilon: file.epsilon.unwrap_or(d.epsilon),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        lambda,
        normalize_by_batch: !(args.sum_loss || file.sum_loss.unwrap_or(false)),
    };
    train.validate()?;
    let costs = if args.costs.is_empty() {
        file.costs.clone().unwrap_or_else(|| vec!["absolute".into()])
    } else {
        args.costs.clone()
    };
    Ok(RunSettings {
        data,
        standardize: !args.no_standardize && file.standardize.unwrap_or(true),
        head: args.head.or(file.head).unwrap_or(HeadKind::Coral),
        hidden: args
            .hidden
            .clone()
            .or_else(|| file.hidden.clone())
            .unwrap_or_else(|| DEFAULT_HIDDEN.to_vec()),
        train,
        lambda_source,
        costs,
        out: args
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("coral-run")),
    })
}

/// `K-1` positive numbers separated by whitespace or commas; `#` starts a
/// comment.
pub fn load_lambda(path: &Path, num_ranks: usize) -> anyhow::Result<TaskWeights> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading task weights {}", path.display()))?;
    let values = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("{}: bad number {t:?}", path.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if values.len() + 1 != num_ranks {
        bail!(
            "{}: expected {} task weights for {num_ranks} ranks, found {}",
            path.display(),
            num_ranks - 1,
            values.len()
        );
    }
    Ok(TaskWeights::new(values)?)
}
