use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};
use serde_json::{json, Value};

use muon_core::dist::{communication_ratio, predicted_ratio, DpWorld, OptimizerFamily, RankGradients, WireWidths};
use muon_core::moe::{gate_scaling_factor, GateConfig};
use muon_core::random::{gaussian_matrix, seeded_rng};
use muon_core::scaling::fit_power_law;
use muon_core::spectral::spectrum_report;
use muon_core::trainer::{ablation_weight_decay, compare_optimizers, MetricsLog, OptimizerChoice};
use muon_core::{
    muon_step, newton_schulz, svd, AdamWConfig, Matrix, MuonConfig, NsConfig, ParamState, ScalingVariant,
};

use crate::cli::{Backend, Command, GlobalArgs};
use crate::config::{OptimSettings, OptimizerArg, RunConfig, TrainSettings};
use crate::io::{self, OutDir};

/// Deviation above which `dist-check` reports a mismatch.
pub const DIST_TOLERANCE: f64 = 1e-9;

/// What a command prints on stdout.
pub enum Output {
    Json(Value),
    /// A bare number, printed on its own line.
    Scalar(f64),
}

pub struct Context {
    pub seed: Option<u64>,
    pub precision: Option<usize>,
    pub out: OutDir,
    pub config: RunConfig,
}

impl Context {
    pub fn new(global: &GlobalArgs) -> Result<Self> {
        let config = match &global.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let out_dir = global
            .out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            seed: global.seed.or(config.seed),
            precision: global.precision.or(config.precision),
            out: OutDir::new(out_dir),
            config,
        })
    }

    fn seed(&self, command: &str) -> Result<u64> {
        self.seed
            .with_context(|| format!("{command} is randomized and needs --seed"))
    }

    fn csv(&self, log: &MetricsLog) -> String {
        log.to_csv(self.precision)
    }
}

pub fn run(ctx: &Context, command: &Command) -> Result<Output> {
    match command {
        Command::Orthogonalize { input, output, backend, steps } => {
            orthogonalize(ctx, input, output.as_ref(), *backend, *steps)
        }
        Command::Train { optim, train } => train_cmd(ctx, optim, train),
        Command::AblateWd { decays, optim, train } => ablate_wd(ctx, decays, optim, train),
        Command::DistCheck { dp, shape, steps, optim } => dist_check(ctx, *dp, shape, *steps, optim),
        Command::Entropy { checkpoint, groups } => entropy(ctx, checkpoint, groups.as_ref()),
        Command::FitScaling { input } => fit_scaling(input),
        Command::GateFactor { experts, topk, iters } => gate_factor(ctx, *experts, *topk, *iters),
        Command::CompareOptimizers { optimizers, optim, train } => compare(ctx, optimizers, optim, train),
    }
}

fn orthogonalize(
    ctx: &Context,
    input: &Path,
    output: Option<&PathBuf>,
    backend: Backend,
    steps: Option<usize>,
) -> Result<Output> {
    let m = io::read_matrix(input)?;
    let ns = NsConfig::with_steps(steps.or(ctx.config.optimizer.ns_steps).unwrap_or(NsConfig::default().steps));
    let o = match backend {
        Backend::Ns => newton_schulz(&m, &ns)?,
        Backend::Svd => svd(&m)?.polar(),
    };
    let before = svd(&m)?.sigma;
    let after = svd(&o)?.sigma;
    let out_path = output.cloned().unwrap_or_else(|| ctx.out.path("orthogonalized.csv"));
    io::write_file(&out_path, &io::matrix_csv(&o, ctx.precision))?;
    let sidecar = out_path.with_extension("json");
    let mut diag = json!({
        "shape": [m.rows(), m.cols()],
        "backend": match backend { Backend::Ns => "ns", Backend::Svd => "svd" },
        "ns_steps": ns.steps,
        "sigma_before": before,
        "sigma_after": after,
    });
    io::round_json(&mut diag, ctx.precision);
    io::write_file(&sidecar, &io::to_json(&diag)?)?;
    let (lo, hi) = after
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    Ok(Output::Json(json!({
        "output": out_path,
        "sidecar": sidecar,
        "shape": [o.rows(), o.cols()],
        "sigma_after_min": lo,
        "sigma_after_max": hi,
    })))
}

fn muon_json(c: &MuonConfig) -> Value {
    let scaling = match c.scaling.variant {
        ScalingVariant::AdjustedLr => json!("adjusted-lr"),
        ScalingVariant::UpdateNorm => json!("update-norm"),
        ScalingVariant::BaselineSqrtH { hidden } => json!({ "baseline": hidden }),
    };
    json!({
        "lr": c.lr,
        "momentum": c.momentum,
        "weight_decay": c.weight_decay,
        "nesterov": c.nesterov,
        "ns": { "a": c.ns.a, "b": c.ns.b, "c": c.ns.c, "steps": c.ns.steps },
        "scaling_mode": scaling,
        "rms_target": c.scaling.rms_target,
    })
}

fn adamw_json(c: &AdamWConfig) -> Value {
    json!({
        "lr": c.lr,
        "betas": [c.beta1, c.beta2],
        "epsilon": c.epsilon,
        "weight_decay": c.weight_decay,
    })
}

fn choice_json(c: &OptimizerChoice) -> Value {
    match c {
        OptimizerChoice::Muon(m) => json!({ "muon": muon_json(m) }),
        OptimizerChoice::AdamW(a) => json!({ "adamw": adamw_json(a) }),
        OptimizerChoice::Hybrid(h) => json!({
            "hybrid": { "muon": muon_json(&h.muon), "adamw": adamw_json(&h.adamw), "decay_exclude": h.decay_exclude }
        }),
    }
}

fn log_summary(log: &MetricsLog) -> Value {
    let last = log.last();
    json!({
        "steps": log.len(),
        "first_train_loss": log.records().first().map(|r| r.train_loss),
        "final_train_loss": last.map(|r| r.train_loss),
        "final_val_loss": last.map(|r| r.val_loss),
    })
}

fn train_json(train: &TrainSettings, seed: u64) -> Result<Value> {
    let exp = train.experiment(seed);
    Ok(json!({
        "seed": seed,
        "hidden": exp.arch.dims[0],
        "dims": exp.arch.dims,
        "nonlinearity": format!("{:?}", exp.arch.nonlinearity),
        "task": format!("{:?}", exp.task.kind),
        "dataset_size": exp.task.dataset_size,
        "noise": exp.task.noise,
        "steps": exp.steps,
        "batch_size": exp.batch_size,
        "schedule": format!("{:?}", exp.schedule),
    }))
}

fn train_cmd(ctx: &Context, optim: &OptimSettings, train: &TrainSettings) -> Result<Output> {
    let seed = ctx.seed("train")?;
    let optim = ctx.config.optimizer_over(optim);
    let train = ctx.config.train_over(train);
    let kind = train.optimizer.unwrap_or(OptimizerArg::Muon);
    let choice = optim.choice(kind)?;
    let exp = train.experiment(seed);
    let mut runs = compare_optimizers(&exp, &[(kind.label().to_string(), choice.clone())])?;
    let (_, log) = runs.pop().context("trainer returned no run")?;
    let metrics = ctx.out.write("metrics.csv", &ctx.csv(&log))?;
    let run_config = json!({
        "optimizer": choice_json(&choice),
        "train": train_json(&train, seed)?,
    });
    let run_config_path = ctx.out.write_json("run_config.json", &run_config)?;
    let mut out = json!({
        "optimizer": kind.label(),
        "summary": log_summary(&log),
        "metrics": metrics,
        "run_config": run_config_path,
    });
    io::round_json(&mut out, ctx.precision);
    Ok(Output::Json(out))
}

fn ablate_wd(ctx: &Context, decays: &[f64], optim: &OptimSettings, train: &TrainSettings) -> Result<Output> {
    let seed = ctx.seed("ablate-wd")?;
    let &[d0, d1] = decays else {
        bail!("--decays needs exactly two values");
    };
    let optim = ctx.config.optimizer_over(optim);
    let train = ctx.config.train_over(train);
    let muon = optim.muon()?;
    let exp = train.experiment(seed);
    let rep = ablation_weight_decay(&exp, &muon, [d0, d1])?;
    let mut files = Vec::new();
    for (i, log) in rep.logs.iter().enumerate() {
        files.push(ctx.out.write(format!("metrics_wd{i}.csv"), &ctx.csv(log))?);
    }
    let mut report = json!({
        "seed": seed,
        "weight_decays": rep.weight_decays,
        "plateau_step": rep.plateau_step,
        "overtrain_ratio": rep.overtrain_ratio,
        "terminal_max_weight_rms": rep.terminal_max_weight_rms,
        "final_val_loss": rep.final_val_loss,
        "muon": muon_json(&muon),
        "train": train_json(&train, seed)?,
        "metrics": files,
    });
    io::round_json(&mut report, ctx.precision);
    ctx.out.write_json("ablation.json", &report)?;
    Ok(Output::Json(report))
}

fn parse_shape(shape: &str) -> Result<(usize, usize)> {
    let (r, c) = shape
        .split_once(['x', 'X'])
        .with_context(|| format!("shape {shape:?} is not ROWSxCOLS"))?;
    let dims = (r.trim().parse::<usize>(), c.trim().parse::<usize>());
    let (Ok(r), Ok(c)) = dims else {
        bail!("shape {shape:?} is not ROWSxCOLS");
    };
    ensure!(r > 0 && c > 0, "shape {shape:?} has a zero dimension");
    Ok((r, c))
}

fn dist_check(ctx: &Context, dp: usize, shape: &str, steps: usize, optim: &OptimSettings) -> Result<Output> {
    let seed = ctx.seed("dist-check")?;
    let (rows, cols) = parse_shape(shape)?;
    let optim = ctx.config.optimizer_over(optim);
    let muon = optim.muon()?;
    let adamw = optim.adamw()?;
    let widths = WireWidths::default();
    let mut rng = seeded_rng(seed);
    let w0 = gaussian_matrix(&mut rng, rows, cols).scale(0.05);
    let params = vec![("w".to_string(), w0.clone())];
    let mut mu_world = DpWorld::new(dp, &params, OptimizerFamily::Muon, widths)?;
    let mut ad_world = DpWorld::new(dp, &params, OptimizerFamily::AdamW, widths)?;
    let mut single = ParamState::for_muon("w", w0);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let grads: Vec<Matrix> = (0..dp).map(|_| gaussian_matrix(&mut rng, rows, cols)).collect();
        let mut total = grads[0].clone();
        for g in &grads[1..] {
            total = total.add(g)?;
        }
        let per_rank: Vec<RankGradients> = grads
            .into_iter()
            .map(|g| BTreeMap::from([("w".to_string(), g)]))
            .collect();
        mu_world.distributed_muon_step(&per_rank, &muon, muon.lr)?;
        ad_world.distributed_adamw_step(&per_rank, &adamw, adamw.lr)?;
        single = muon_step(&single, &total, &muon, muon.lr)?.0;
        worst = worst.max(mu_world.assembled_weight("w")?.max_abs_diff(&single.weight)?);
        for rank in 0..dp {
            worst = worst.max(mu_world.replica(rank, "w")?.max_abs_diff(&single.weight)?);
        }
    }
    let ratio = if steps == 0 { None } else { Some(communication_ratio(&mu_world, &ad_world)?) };
    let mut out = json!({
        "dp": dp,
        "shape": [rows, cols],
        "steps": steps,
        "seed": seed,
        "max_deviation": worst,
        "tolerance": DIST_TOLERANCE,
        "within_tolerance": worst <= DIST_TOLERANCE,
        "comm_ratio": ratio,
        "predicted_ratio": predicted_ratio(dp, widths),
        "muon_bytes": mu_world.ledger().bytes(dp),
        "adamw_bytes": ad_world.ledger().bytes(dp),
        "muon_state_elements": mu_world.optimizer_state_elements(),
        "adamw_state_elements": ad_world.optimizer_state_elements(),
    });
    io::round_json(&mut out, ctx.precision);
    Ok(Output::Json(out))
}

fn entropy(ctx: &Context, checkpoint: &Path, groups: Option<&PathBuf>) -> Result<Output> {
    let weights = io::read_checkpoint(checkpoint)?;
    let groups = match groups {
        Some(path) => io::read_groups(path)?,
        None => weights.keys().map(|k| (k.clone(), k.clone())).collect(),
    };
    let report = spectrum_report(&weights, &groups)?;
    let mut table = String::from("param,group,svd_entropy\n");
    let mut params = serde_json::Map::new();
    for p in &report.params {
        table.push_str(&format!("{},{},{}\n", p.name, p.group, io::format_num(p.svd_entropy, ctx.precision)));
        let mut spectrum = String::from("index,normalized_sigma\n");
        for (i, s) in p.normalized_sigma.iter().enumerate() {
            spectrum.push_str(&format!("{i},{}\n", io::format_num(*s, ctx.precision)));
        }
        ctx.out.write(PathBuf::from("spectra").join(format!("{}.csv", p.name)), &spectrum)?;
        params.insert(p.name.clone(), json!({ "group": p.group, "svd_entropy": p.svd_entropy }));
    }
    let table_path = ctx.out.write("entropy.csv", &table)?;
    let mut out = json!({
        "params": params,
        "groups": report.group_entropy,
        "entropy_csv": table_path,
        "spectra_dir": ctx.out.path("spectra"),
    });
    io::round_json(&mut out, ctx.precision);
    Ok(Output::Json(out))
}

fn fit_scaling(input: &Path) -> Result<Output> {
    let points = io::read_points(input)?;
    let fit = fit_power_law(&points)?;
    Ok(Output::Json(json!({
        "coefficient": fit.law.coefficient,
        "exponent": fit.law.exponent,
        "residual_rms": fit.residual_rms,
        "r_squared": fit.r_squared,
        "points": points.len(),
    })))
}

fn gate_factor(ctx: &Context, experts: usize, topk: usize, iters: usize) -> Result<Output> {
    let seed = ctx.seed("gate-factor")?;
    let factor = gate_scaling_factor(&GateConfig {
        num_experts: experts,
        topk,
        iter_times: iters,
        seed,
    })?;
    Ok(Output::Scalar(factor))
}

fn compare(
    ctx: &Context,
    optimizers: &[OptimizerArg],
    optim: &OptimSettings,
    train: &TrainSettings,
) -> Result<Output> {
    let seed = ctx.seed("compare-optimizers")?;
    ensure!(!optimizers.is_empty(), "--optimizers is empty");
    let optim = ctx.config.optimizer_over(optim);
    let train = ctx.config.train_over(train);
    let choices: Vec<(String, OptimizerChoice)> = optimizers
        .iter()
        .map(|k| Ok((k.label().to_string(), optim.choice(*k)?)))
        .collect::<Result<_>>()?;
    let exp = train.experiment(seed);
    let runs = compare_optimizers(&exp, &choices)?;
    let mut results = serde_json::Map::new();
    for ((label, log), (_, choice)) in runs.iter().zip(&choices) {
        let path = ctx.out.write(format!("metrics_{label}.csv"), &ctx.csv(log))?;
        results.insert(
            label.clone(),
            json!({ "summary": log_summary(log), "config": choice_json(choice), "metrics": path }),
        );
    }
    let mut out = json!({ "seed": seed, "train": train_json(&train, seed)?, "runs": results });
    io::round_json(&mut out, ctx.precision);
    ctx.out.write_json("comparison.json", &out)?;
    Ok(Output::Json(out))
}
