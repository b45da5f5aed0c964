use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{MethodChoice, RunConfig};
use super::output::{write_atomic, write_json, write_with};
use super::{EstimateArgs, Model, ModelArgs, SimulateArgs, SweepArgs, SweepParam, UsageError};
use crate::aggregate::{
    auto_method, clustered_mi, coupled_sets, estimate_mi, estimate_mi_linear, linear_from_diagonal,
    MiReport,
};
use crate::mif::{
    mif_diagonal, mif_matrix, significance_mask, GridMode, MifDocument, MifMatrix, MifMode,
    SignificanceMask,
};
use crate::models::{
    bandpass_taps, gen_cosine_square, gen_linear, gen_two_cosine_square, lowpass_taps,
    oracle_mi_gaussian, Alignment, CosineModelConfig, LinearModelConfig,
};
use crate::spectral::spectral_increments;
use crate::timeseries::{load_pair_csv, plan_windows, write_pair_csv, TimeSeries, WindowPlan};

/// Fully resolved simulation request, echoed into the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub model: Model,
    pub beta: Option<f64>,
    pub sigma_x: f64,
    pub sigma_w: f64,
    pub lambda: f64,
    pub lambda2: f64,
    pub window_len: usize,
    pub n: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(model: &ModelArgs, n: usize, seed: u64) -> Self {
        Self {
            model: model.model,
            beta: model.beta,
            sigma_x: model.sigma_x,
            sigma_w: model.sigma_w,
            lambda: model.lambda,
            lambda2: model.lambda2,
            window_len: model.window_len,
            n,
            seed,
        }
    }

    fn taps(&self) -> anyhow::Result<Vec<f64>> {
        Ok(match self.model {
            Model::Lowpass => {
                let beta = self
                    .beta
                    .ok_or_else(|| UsageError("the lowpass model requires --beta".into()))?;
                lowpass_taps(beta)?
            }
            Model::Bandpass => bandpass_taps(),
            Model::Cosine2 | Model::Twocosine2 => {
                return Err(crate::Error::Unsupported(format!(
                    "no closed-form MI for the {:?} model",
                    self.model
                ))
                .into())
            }
        })
    }

    fn linear_config(&self) -> anyhow::Result<LinearModelConfig> {
        Ok(LinearModelConfig {
            taps: self.taps()?,
            sigma_x: self.sigma_x,
            sigma_w: self.sigma_w,
            n_samples: self.n,
            seed: self.seed,
            // The long bandpass filter is centred on its input so that X and
            // Y windows line up; the two-tap filter is applied causally.
            alignment: match self.model {
                Model::Bandpass => Alignment::ZeroPhase,
                _ => Alignment::Causal,
            },
        })
    }

    fn cosine_config(&self) -> CosineModelConfig {
        CosineModelConfig {
            lambda1: self.lambda,
            lambda2: (self.model == Model::Twocosine2).then_some(self.lambda2),
            sigma_w: self.sigma_w,
            n_samples: self.n,
            window_len: self.window_len,
            seed: self.seed,
        }
    }

    /// Analytic MI rate for the Gaussian models.
    pub fn oracle(&self) -> anyhow::Result<f64> {
        Ok(oracle_mi_gaussian(&self.taps()?, self.sigma_x, self.sigma_w)?)
    }
}

pub fn simulate_model(spec: &SimulationSpec) -> anyhow::Result<(TimeSeries, TimeSeries)> {
    Ok(match spec.model {
        Model::Lowpass | Model::Bandpass => gen_linear(&spec.linear_config()?)?,
        Model::Cosine2 => gen_cosine_square(&spec.cosine_config())?,
        Model::Twocosine2 => gen_two_cosine_square(&spec.cosine_config())?,
    })
}

pub(super) fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let spec = SimulationSpec::new(&args.model, args.n, args.seed);
    let (x, y) = simulate_model(&spec)?;
    write_with(&args.out, |buf| write_pair_csv(buf, &x, &y))?;
    let sidecar = args.out.with_extension("json");
    write_json(&sidecar, &spec)?;
    println!("wrote {} samples to {}", spec.n, args.out.display());
    Ok(())
}

/// Everything the estimator produces for one pair of series.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub plan: WindowPlan,
    pub mif: MifMatrix,
    pub mask: SignificanceMask,
    pub report: MiReport,
}

fn untested_mask(grid: &[usize]) -> SignificanceMask {
    SignificanceMask {
        grid: grid.to_vec(),
        significant: vec![false; grid.len() * grid.len()],
        n_p: 0,
        alpha: 1.0,
        seed: 0,
    }
}

/// Runs the whole pipeline: windows, increments, MIF matrix, permutation
/// mask and the aggregation selected by `cfg.method`.
pub fn estimate_pair(x: &TimeSeries, y: &TimeSeries, cfg: &RunConfig) -> anyhow::Result<Estimate> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(crate::Error::contract("series lengths differ").into());
    }
    let plan = plan_windows(x.len(), cfg.n_f, cfg.n_s.0, cfg.gap)?;
    let inc_x = spectral_increments(x, &plan)?;
    let inc_y = spectral_increments(y, &plan)?;
    let grid = GridMode::from(cfg.grid).indices(cfg.n_f);
    let params = cfg.ksg();
    let mif = mif_matrix(&inc_x, &inc_y, &grid, &params, MifMode::Cross)?;
    let mask = if cfg.n_p > 0 {
        significance_mask(&inc_x, &inc_y, &mif, cfg.n_p, &params, cfg.seed)?
    } else {
        untested_mask(&grid)
    };
    let report = match cfg.method {
        MethodChoice::Auto => auto_method(&mask, &mif, &inc_x, &inc_y, &params, false)?,
        MethodChoice::Joint => {
            estimate_mi(&inc_x, &inc_y, &coupled_sets(&mask), &params)?.with_significance(&mask)
        }
        MethodChoice::Clustered => clustered_mi(&mask, &inc_x, &inc_y, &params)?,
        MethodChoice::Linear => estimate_mi_linear(&mif, &params, plan.n_s)?.with_significance(&mask),
    };
    Ok(Estimate {
        plan,
        mif,
        mask,
        report,
    })
}

/// Only the MI report; the linear shortcut skips the off-diagonal
/// estimates and the permutation tests it does not need.
pub fn estimate_report(x: &TimeSeries, y: &TimeSeries, cfg: &RunConfig) -> anyhow::Result<MiReport> {
    if cfg.method != MethodChoice::Linear {
        return Ok(estimate_pair(x, y, cfg)?.report);
    }
    cfg.validate()?;
    let plan = plan_windows(x.len(), cfg.n_f, cfg.n_s.0, cfg.gap)?;
    let inc_x = spectral_increments(x, &plan)?;
    let inc_y = spectral_increments(y, &plan)?;
    let params = cfg.ksg();
    let bins: Vec<usize> = (0..=cfg.n_f / 2).collect();
    let diag = mif_diagonal(&inc_x, &inc_y, &bins, &params)?;
    Ok(linear_from_diagonal(&diag, cfg.n_f, &params, plan.n_s)?)
}

#[derive(Serialize)]
struct WindowSummary {
    n_f: usize,
    n_s: usize,
    gap: usize,
    demean: bool,
    samples_used: usize,
}

impl WindowSummary {
    fn new(plan: &WindowPlan) -> Self {
        Self {
            n_f: plan.n_f,
            n_s: plan.n_s,
            gap: plan.gap,
            demean: plan.demean,
            samples_used: plan.span(),
        }
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a RunConfig,
    windows: WindowSummary,
    significant_pairs: Vec<(usize, usize)>,
    report: &'a MiReport,
}

#[derive(Serialize)]
struct MifFile<'a> {
    config: &'a RunConfig,
    mif: MifDocument,
}

pub(super) fn estimate(args: &EstimateArgs, with_report: bool) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let (x, y) = load_pair_csv(&cfg.input)?;
    let est = if with_report {
        estimate_pair(&x, &y, &cfg)?
    } else {
        // matrix-only: the aggregation is not needed
        let cfg = RunConfig {
            method: MethodChoice::Linear,
            ..cfg.clone()
        };
        estimate_pair(&x, &y, &cfg)?
    };
    let dir = &args.out_dir;
    write_with(&dir.join("mif.csv"), |b| est.mif.write_csv(b))?;
    write_with(&dir.join("mask.csv"), |b| est.mask.write_csv(b))?;
    let doc = MifDocument::new(&est.mif, &est.mask, est.plan.n_s, cfg.ksg());
    write_json(&dir.join("mif.json"), &MifFile { config: &cfg, mif: doc })?;
    if with_report {
        let file = ReportFile {
            config: &cfg,
            windows: WindowSummary::new(&est.plan),
            significant_pairs: est.mask.pairs(),
            report: &est.report,
        };
        write_json(&dir.join("report.json"), &file)?;
        println!("{}", est.report.summary());
    } else {
        println!(
            "{} of {} frequency pairs significant",
            est.mask.count(),
            est.mask.significant.len()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput {
    model: Model,
    beta: Option<f64>,
    sigma_x: f64,
    sigma_w: f64,
    mi_nats: f64,
    mi_bits: f64,
}

pub(super) fn oracle(args: &ModelArgs) -> anyhow::Result<()> {
    let spec = SimulationSpec::new(args, 0, 0);
    let mi_nats = spec.oracle()?;
    let out = OracleOutput {
        model: spec.model,
        beta: spec.beta,
        sigma_x: spec.sigma_x,
        sigma_w: spec.sigma_w,
        mi_nats,
        mi_bits: mi_nats / std::f64::consts::LN_2,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

#[derive(Serialize)]
struct SweepConfig<'a> {
    model: Model,
    param: SweepParam,
    values: &'a [f64],
    seeds: Vec<u64>,
    base: SimulationSpec,
    estimate: RunConfig,
}

struct SweepRow {
    value: f64,
    seed: u64,
    report: MiReport,
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

pub(super) fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    if args.param == SweepParam::Beta && args.model.model != Model::Lowpass {
        return Err(UsageError("--param beta applies to the lowpass model only".into()).into());
    }
    if args.seeds == 0 {
        return Err(UsageError("--seeds must be at least 1".into()).into());
    }
    let n = args
        .n_f
        .checked_mul(args.n_s)
        .ok_or_else(|| UsageError("n_f * n_s overflows".into()))?;
    let mut model = args.model.clone();
    if args.param == SweepParam::Beta {
        // placeholder so the base spec validates; every point overrides it
        model.beta.get_or_insert(args.values.first().copied().unwrap_or(0.0));
    }
    if matches!(model.model, Model::Cosine2 | Model::Twocosine2) {
        model.window_len = args.n_f;
    }
    let base = SimulationSpec::new(&model, n, args.seed);
    let estimate_cfg = RunConfig {
        n_f: args.n_f,
        n_s: super::WindowsArg(crate::timeseries::WindowCount::Fixed(args.n_s)),
        k: args.k,
        n_p: args.n_p,
        seed: args.seed,
        grid: args.grid,
        method: args.method,
        ..RunConfig::new("")
    };
    estimate_cfg.validate()?;
    let seeds: Vec<u64> = (0..args.seeds).map(|r| args.seed.wrapping_add(r)).collect();

    let point_spec = |value: f64, seed: u64| {
        let mut spec = base.clone();
        spec.seed = seed;
        match args.param {
            SweepParam::Beta => spec.beta = Some(value),
            SweepParam::SigmaW => spec.sigma_w = value,
        }
        spec
    };
    let tasks: Vec<(f64, u64)> = args
        .values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Vec<SweepRow> = tasks
        .par_iter()
        .map(|&(value, seed)| -> anyhow::Result<SweepRow> {
            let (x, y) = simulate_model(&point_spec(value, seed))?;
            let cfg = RunConfig {
                seed,
                ..estimate_cfg.clone()
            };
            let report = estimate_report(&x, &y, &cfg)
                .with_context(|| format!("{:?} = {value}, seed {seed}", args.param))?;
            log::info!("{:?} = {value}, seed {seed}: {}", args.param, report.summary());
            Ok(SweepRow { value, seed, report })
        })
        .collect::<anyhow::Result<_>>()?;

    let param_name = match args.param {
        SweepParam::Beta => "beta",
        SweepParam::SigmaW => "sigma_w",
    };
    let mut per_run = Vec::new();
    writeln!(per_run, "param,value,seed,mi_nats,method")?;
    for r in &rows {
        writeln!(per_run, "{param_name},{},{},{},{}", r.value, r.seed, r.report.mi_nats, r.report.method)?;
    }
    write_atomic(&args.out, &per_run)?;

    let mut curve = Vec::new();
    writeln!(curve, "value,mean_mi_nats,std_mi_nats,n_seeds,oracle_mi_nats")?;
    for &value in &args.values {
        let mi: Vec<f64> = rows
            .iter()
            .filter(|r| r.value == value)
            .map(|r| r.report.mi_nats)
            .collect();
        let count = mi.len() as f64;
        let mean = mi.iter().sum::<f64>() / count;
        let var = mi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
        let oracle = match point_spec(value, 0).oracle() {
            Ok(o) => o.to_string(),
            Err(_) => String::new(),
        };
        writeln!(curve, "{value},{mean},{},{},{oracle}", var.sqrt(), mi.len())?;
    }
    let curve_path = sibling(&args.out, "_mean", "csv");
    write_atomic(&curve_path, &curve)?;
    write_json(
        &sibling(&args.out, "", "json"),
        &SweepConfig {
            model: args.model.model,
            param: args.param,
            values: &args.values,
            seeds,
            base,
            estimate: estimate_cfg,
        },
    )?;
    println!("wrote {} runs to {} and the mean curve to {}", rows.len(), args.out.display(), curve_path.display());
    Ok(())
}
