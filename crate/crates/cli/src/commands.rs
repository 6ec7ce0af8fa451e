use anyhow::{bail, Context};
use coral::data::{normalize, split, Dataset};
use coral::format::ModelFile;
use coral::loss::GradientCase;
use coral::metrics::{audit_split, CostMatrix, EvalReport};
use coral::optim::{train, verify_ordered_biases};
use coral::{Architecture, OrdinalModel};
use log::info;
use serde::Serialize;
use serde_json::json;

use crate::args::{EvalArgs, GenDataArgs, GradcheckArgs, Part, Theorem1Args, TrainArgs};
use crate::config::{resolve_data, resolve_train, DataSettings, FileConfig, Source};
use crate::output::{write_one, Staged};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

fn load_costs(names: &[String], num_ranks: usize) -> anyhow::Result<Vec<(String, CostMatrix)>> {
    names
        .iter()
        .map(|n| {
            let c = CostMatrix::from_preset_or_path(n, num_ranks).with_context(|| format!("cost matrix {n:?}"))?;
            Ok((n.clone(), c))
        })
        .collect()
}

fn json_line(v: &impl Serialize) -> anyhow::Result<Vec<u8>> {
    let mut out = serde_json::to_vec(v)?;
    out.push(b'\n');
    Ok(out)
}

fn pretty(v: &impl Serialize) -> anyhow::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub fn train_cmd(args: &TrainArgs) -> anyhow::Result<Verdict> {
    let settings = resolve_train(args)?;
    let data = settings.data.source.load()?;
    let k = data.spec().num_ranks();
    let costs = load_costs(&settings.costs, k)?;
    let splits = split(&data, &settings.data.split)?;
    let (splits, standardizer) = if settings.standardize {
        let (s, st) = normalize(&splits)?;
        (s, Some(st))
    } else {
        (splits, None)
    };
    info!(
        "training {} head on {} ({} train / {} validation / {} test)",
        settings.head,
        data.provenance,
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    let arch = Architecture::new(data.dim(), settings.hidden.clone(), settings.head, k)?;
    let model = OrdinalModel::new(arch, settings.train.seed)?;
    let outcome = train(&model, &splits.train, &splits.validation, Some(&splits.test), &settings.train)?;
    let report = audit_split(&outcome.best, &splits.test, &costs)?;

    let config = serde_json::to_value(&settings)?;
    let mut log = json_line(&json!({ "config": config }))?;
    for rec in &outcome.log {
        log.extend(json_line(rec)?);
    }
    let model_file = ModelFile {
        model: outcome.best.clone(),
        ranks: data.spec().clone(),
        standardizer,
        meta: Some(serde_json::to_string(&config)?),
    };
    let mut model_bytes = Vec::new();
    model_file.write(&mut model_bytes)?;
    let summary = json!({
        "config": config,
        "best_epoch": outcome.best_epoch,
        "test": report,
    });

    let mut staged = Staged::default();
    staged.add(&settings.out.join("log.jsonl"), &log)?;
    staged.add(&settings.out.join("model.txt"), &model_bytes)?;
    staged.add(&settings.out.join("report.json"), &pretty(&summary)?)?;
    staged.commit()?;

    let best = &outcome.log[outcome.best_epoch - 1];
    println!(
        "best epoch {} of {}: val MAE {:.4}, test MAE {:.4}, test RMSE {:.4}",
        outcome.best_epoch,
        outcome.log.len(),
        best.val_mae,
        report.mae,
        report.rmse
    );
    if let Some(inc) = &report.inconsistency {
        println!(
            "test inconsistency means: all {:.4}, correct {}, incorrect {}",
            inc.mean_all,
            fmt_opt(inc.mean_correct),
            fmt_opt(inc.mean_incorrect)
        );
    }
    println!("wrote {}", settings.out.display());
    Ok(Verdict::Pass)
}

struct Evaluation {
    model_file: ModelFile,
    data: DataSettings,
    part: Dataset,
    costs: Vec<(String, CostMatrix)>,
}

fn part_name(p: Part) -> &'static str {
    match p {
        Part::All => "all",
        Part::Train => "train",
        Part::Validation => "validation",
        Part::Test => "test",
    }
}

fn prepare_eval(args: &EvalArgs, default_costs: &[&str]) -> anyhow::Result<Evaluation> {
    let model_file = ModelFile::load(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let k = model_file.ranks.num_ranks();
    let file = FileConfig::load(args.data.config.as_deref())?;
    let data = resolve_data(&args.data, &file, Some(k))?;
    if data.source.num_ranks() != k {
        bail!("data has {} ranks, model has {k}", data.source.num_ranks());
    }
    let full = data.source.load()?;
    if full.dim() != model_file.model.arch().input_dim {
        bail!(
            "data has {} features, model expects {}",
            full.dim(),
            model_file.model.arch().input_dim
        );
    }
    let part = match args.part {
        Part::All => full,
        p => {
            let s = split(&full, &data.split)?;
            match p {
                Part::Train => s.train,
                Part::Validation => s.validation,
                _ => s.test,
            }
        }
    };
    let part = match &model_file.standardizer {
        Some(st) => st.apply(&part)?,
        None => part,
    };
    let names: Vec<String> = if !args.costs.is_empty() {
        args.costs.clone()
    } else if let Some(c) = &file.costs {
        c.clone()
    } else {
        default_costs.iter().map(|s| s.to_string()).collect()
    };
    let costs = load_costs(&names, k)?;
    Ok(Evaluation {
        model_file,
        data,
        part,
        costs,
    })
}

fn report_json(args: &EvalArgs, ev: &Evaluation, report: &EvalReport) -> anyhow::Result<Vec<u8>> {
    pretty(&json!({
        "model": args.model,
        "head": ev.model_file.model.head_kind(),
        "data": ev.data,
        "part": part_name(args.part),
        "report": report,
    }))
}

pub fn eval_cmd(args: &EvalArgs) -> anyhow::Result<Verdict> {
    let ev = prepare_eval(args, &["absolute"])?;
    let costs = if ev.model_file.model.head_kind().has_binary_tasks() {
        &ev.costs[..]
    } else {
        &[]
    };
    let report = audit_split(&ev.model_file.model, &ev.part, costs)?;
    let bytes = report_json(args, &ev, &report)?;
    if let Some(out) = &args.out {
        write_one(out, &bytes)?;
    }
    print!("{}", String::from_utf8(bytes)?);
    Ok(Verdict::Pass)
}

pub fn audit_cmd(args: &EvalArgs) -> anyhow::Result<Verdict> {
    let ev = prepare_eval(args, &[])?;
    let model = &ev.model_file.model;
    let costs = if model.head_kind().has_binary_tasks() {
        &ev.costs[..]
    } else {
        &[]
    };
    let report = audit_split(model, &ev.part, costs)?;
    if let Some(out) = &args.out {
        write_one(out, &report_json(args, &ev, &report)?)?;
    }
    println!(
        "{} head, {} part, n = {}: MAE {:.4}, RMSE {:.4}",
        model.head_kind(),
        part_name(args.part),
        report.n,
        report.mae,
        report.rmse
    );
    match &report.inconsistency {
        None => println!("no binary tasks: inconsistency does not apply"),
        Some(inc) => {
            println!("{:<22}{:>10}{:>10}{:>10}", "", "all", "correct", "incorrect");
            println!(
                "{:<22}{:>10.4}{:>10}{:>10}",
                "mean inconsistencies",
                inc.mean_all,
                fmt_opt(inc.mean_correct),
                fmt_opt(inc.mean_incorrect)
            );
            println!(
                "{:<22}{:>10}{:>10}{:>10}",
                "predictions",
                report.n,
                inc.n_correct,
                inc.n_incorrect
            );
            println!("{:<22}{:>10.4}", "mean inverted pairs", inc.mean_inverted_pairs);
        }
    }
    Ok(Verdict::Pass)
}

pub fn bound_cmd(args: &EvalArgs) -> anyhow::Result<Verdict> {
    let ev = prepare_eval(args, &["absolute"])?;
    let model = &ev.model_file.model;
    if !model.head_kind().has_binary_tasks() {
        bail!("the bound needs binary task decisions; a {} model has none", model.head_kind());
    }
    let report = audit_split(model, &ev.part, &ev.costs)?;
    if let Some(out) = &args.out {
        write_one(out, &report_json(args, &ev, &report)?)?;
    }
    let mut ok = true;
    for b in &report.bounds {
        let pass = b.all_monotone && b.lhs <= b.rhs + 1e-12;
        ok &= pass;
        println!(
            "{} cost: lhs {:.12} rhs {:.12} monotone {} -> {}",
            b.cost,
            b.lhs,
            b.rhs,
            if b.all_monotone { "yes" } else { "no" },
            if pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(Verdict::from_bool(ok))
}

pub fn gradcheck_cmd(args: &GradcheckArgs) -> anyhow::Result<Verdict> {
    let mut worst = 0.0f64;
    for seed in args.seed..args.seed + args.cases.max(1) {
        let case = GradientCase::random(seed, args.head)?;
        let err = case.max_relative_error(args.step)?;
        let arch = case.model.arch();
        println!(
            "seed {seed}: {} head, d={} hidden={:?} K={} N={} params={} max relative error {err:.3e}",
            args.head,
            arch.input_dim,
            arch.hidden,
            arch.num_ranks,
            case.ranks.len(),
            arch.num_params(),
        );
        worst = worst.max(err);
    }
    let ok = worst <= args.tolerance;
    println!(
        "{}: max relative error {worst:.3e} (tolerance {:.0e})",
        if ok { "PASS" } else { "FAIL" },
        args.tolerance
    );
    Ok(Verdict::from_bool(ok))
}

pub fn theorem1_cmd(args: &Theorem1Args) -> anyhow::Result<Verdict> {
    let r = verify_ordered_biases(args.trials, args.seed, args.slack)?;
    println!(
        "{}/{} ordered, worst b_(k+1) - b_k = {:.3e}",
        r.ordered, r.trials, r.worst_violation
    );
    if !r.failures.is_empty() {
        println!("unordered trials: {:?}", r.failures);
    }
    println!("{}", if r.passed() { "PASS" } else { "FAIL" });
    Ok(Verdict::from_bool(r.passed()))
}

pub fn gen_data_cmd(args: &GenDataArgs) -> anyhow::Result<Verdict> {
    let file = FileConfig::load(args.data.config.as_deref())?;
    let settings = resolve_data(&args.data, &file, None)?;
    if !matches!(settings.source, Source::Synthetic(_)) {
        bail!("gen-data only generates synthetic data; pass --synthetic");
    }
    let data = settings.source.load()?;
    let mut bytes = Vec::new();
    data.write_csv(&mut bytes)?;
    write_one(&args.out, &bytes)?;
    println!(
        "wrote {} examples, {} features, rank counts {:?} to {}",
        data.len(),
        data.dim(),
        data.rank_counts(),
        args.out.display()
    );
    Ok(Verdict::Pass)
}
