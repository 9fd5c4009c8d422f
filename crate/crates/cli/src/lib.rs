//! Subcommands of the `arkernel` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use arkernel::classify::{select_and_evaluate, SelectionGrid};
use arkernel::gram::gram_matrix;
use arkernel::io::{load_dataset, save_dataset};
use arkernel::kernelized::{median_sigma_sq_floored, phi_kappa_dense, phi_kappa_lowrank, KernelizedMode};
use arkernel::toy::{generate_toy_dataset, generate_toy_split, ToyModelSpec};
use arkernel::{
    ApproxConfig, Ar, ArParams, BaseKernel, Bov, Ga, KernelMeta, KernelizedAr, KernelizedParams,
    LabeledDataset, PairEvaluator, TimeSeries,
};

/// Invalid input detected before any computation; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "arkernel", version, about = "Autoregressive kernels for time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic two-class VAR dataset.
    GenToy(GenToyArgs),
    /// Compute a dissimilarity or kernel matrix over a dataset.
    Gram(GramArgs),
    /// Select C and t by cross-validation, then report test error.
    Classify(ClassifyArgs),
    /// Sweep the low-rank tolerance and compare against dense evaluation.
    ApproxStudy(ApproxStudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Ar,
    Ark,
    Bov,
    Ga,
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelName::Ar => "ar",
            KernelName::Ark => "ark",
            KernelName::Bov => "bov",
            KernelName::Ga => "ga",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseName {
    Gaussian,
    Linear,
}

/// A positive scale given explicitly or derived from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Auto,
    Value(f64),
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Scale::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Scale::Value(v)),
            _ => Err(format!("expected `auto` or a positive number, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelName::Ar)]
    pub kernel: KernelName,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Base kernel for ark, bov and ga.
    #[arg(long, value_enum, default_value_t = BaseName::Gaussian)]
    pub base: BaseName,
    /// Gaussian base scale σ²; `auto` uses the median observation distance.
    #[arg(long = "sigma-sq", default_value = "auto")]
    pub sigma_sq: Scale,
    /// Series sampled for the automatic σ².
    #[arg(long = "sigma-sample", default_value_t = 50)]
    pub sigma_sample: usize,
    /// Low-rank tolerance for ark.
    #[arg(long, default_value_t = 1e-4)]
    pub tau: f64,
    /// Evaluate ark with dense Gram matrices instead of the low-rank approximation.
    #[arg(long)]
    pub dense: bool,
    #[arg(long = "max-rank")]
    pub max_rank: Option<usize>,
    /// Subtract each series' mean observation before evaluation.
    #[arg(long)]
    pub center: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

impl KernelArgs {
    fn validate(&self) -> Result<()> {
        ArParams::new(self.p, self.alpha).map_err(|e| usage(e.to_string()))?;
        if !(self.tau > 0.0) {
            return Err(usage(format!("--tau must be positive, got {}", self.tau)));
        }
        if self.sigma_sample == 0 {
            return Err(usage("--sigma-sample must be positive"));
        }
        if self.kernel == KernelName::Ga && self.base == BaseName::Linear {
            return Err(usage("--kernel ga needs a positive base kernel; use --base gaussian"));
        }
        Ok(())
    }

    fn base_kernel(&self, reference: &LabeledDataset) -> Result<BaseKernel> {
        Ok(match self.base {
            BaseName::Linear => BaseKernel::Linear,
            BaseName::Gaussian => {
                let sigma_sq = match self.sigma_sq {
                    Scale::Value(v) => v,
                    Scale::Auto => median_sigma_sq_floored(reference, self.sigma_sample, self.seed)?,
                };
                log::info!("gaussian base sigma^2 = {sigma_sq:e}");
                BaseKernel::Gaussian { sigma_sq }
            }
        })
    }

    /// Builds the dissimilarity evaluator. Data-driven scales come from `reference`.
    /// `bandwidth` is the kernel bandwidth the ark tolerance refers to.
    pub fn evaluator(
        &self,
        reference: &LabeledDataset,
        bandwidth: Option<f64>,
    ) -> Result<Box<dyn PairEvaluator>> {
        self.validate()?;
        let ar = ArParams::new(self.p, self.alpha)?;
        Ok(match self.kernel {
            KernelName::Ar => Box::new(Ar { params: ar }),
            KernelName::Bov => Box::new(Bov { base: self.base_kernel(reference)? }),
            KernelName::Ga => Box::new(Ga { base: self.base_kernel(reference)? }),
            KernelName::Ark => {
                let base = self.base_kernel(reference)?;
                let params = KernelizedParams { p: self.p, alpha: self.alpha, kappa1: base, kappa2: base };
                let mode = if self.dense {
                    KernelizedMode::Dense
                } else {
                    let t = match bandwidth {
                        Some(t) => t,
                        None => pilot_bandwidth(reference.series(), params)?,
                    };
                    KernelizedMode::LowRank(ApproxConfig { tau: self.tau, bandwidth: t, max_rank: self.max_rank })
                };
                Box::new(KernelizedAr { params, mode })
            }
        })
    }

    fn prepare(&self, ds: LabeledDataset) -> LabeledDataset {
        if self.center {
            ds.centered()
        } else {
            ds
        }
    }
}

/// Smallest candidate bandwidth `0.5·median Φ_κ` over a dense pilot of at most
/// ten series; the low-rank tolerance is then valid for every larger candidate.
fn pilot_bandwidth(series: &[TimeSeries], params: KernelizedParams) -> Result<f64> {
    let pilot = &series[..series.len().min(10)];
    if pilot.len() < 2 {
        return Ok(1.0);
    }
    let ev = KernelizedAr { params, mode: KernelizedMode::Dense };
    let phi = gram_matrix(pilot, &ev, 0)?;
    let t = 0.5 * phi.median_bandwidth()?;
    log::info!("pilot bandwidth for the low-rank tolerance: {t:e}");
    Ok(if t > 0.0 { t } else { 1.0 })
}

fn load(dir: &Path, what: &str) -> Result<LabeledDataset> {
    if !dir.is_dir() {
        return Err(usage(format!("{what} directory {} does not exist", dir.display())));
    }
    load_dataset(dir).with_context(|| format!("loading {what} dataset from {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Args)]
pub struct GenToyArgs {
    #[arg(long, default_value_t = 1000)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    #[arg(long = "noise-variance", default_value_t = 0.1)]
    pub noise_variance: f64,
    #[arg(long = "spectral-target", default_value_t = 1.0)]
    pub spectral_target: f64,
    #[arg(long = "init-range", default_value_t = 5.0)]
    pub init_range: f64,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long = "train-per-class", default_value_t = 10)]
    pub train_per_class: usize,
    #[arg(long = "test-per-class", default_value_t = 100)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; `train/`, `test/` and `spec.tsv` are written inside.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_gen_toy(args: &GenToyArgs) -> Result<()> {
    let spec = ToyModelSpec {
        d: args.d,
        n: args.n,
        density: args.density,
        noise_variance: args.noise_variance,
        spectral_target: args.spectral_target,
        init_range: args.init_range,
        seed: args.seed,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if args.classes < 2 || args.train_per_class == 0 {
        return Err(usage("need at least 2 classes and 1 training series per class"));
    }
    if args.test_per_class > 0 {
        let (train, test) =
            generate_toy_split(&spec, args.train_per_class, args.test_per_class, args.classes)?;
        save_dataset(&train, args.out.join("train"))?;
        save_dataset(&test, args.out.join("test"))?;
    } else {
        let train = generate_toy_dataset(&spec, args.train_per_class, args.classes)?;
        save_dataset(&train, args.out.join("train"))?;
    }
    let rows = [
        ("d", spec.d.to_string()),
        ("n", spec.n.to_string()),
        ("density", spec.density.to_string()),
        ("noise_variance", spec.noise_variance.to_string()),
        ("spectral_target", spec.spectral_target.to_string()),
        ("init_range", spec.init_range.to_string()),
        ("classes", args.classes.to_string()),
        ("train_per_class", args.train_per_class.to_string()),
        ("test_per_class", args.test_per_class.to_string()),
        ("seed", spec.seed.to_string()),
    ];
    let mut text = String::from("parameter\tvalue\n");
    for (k, v) in rows {
        text.push_str(&format!("{k}\t{v}\n"));
    }
    write(&args.out.join("spec.tsv"), &text)
}

#[derive(Debug, Clone, Args)]
pub struct GramArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Write `exp(-Φ/t)` instead of `Φ`; `auto` uses the median of `Φ`.
    #[arg(long)]
    pub bandwidth: Option<Scale>,
    /// Bandwidths at which to append the extreme eigenvalues of `exp(-Φ/t)`.
    #[arg(long = "psd-check", value_delimiter = ',')]
    pub psd_check: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_gram(args: &GramArgs) -> Result<()> {
    args.kernel.validate()?;
    if let Some(t) = args.psd_check.iter().find(|t| !(**t > 0.0)) {
        return Err(usage(format!("--psd-check bandwidths must be positive, got {t}")));
    }
    let ds = args.kernel.prepare(load(&args.data, "data")?);
    let explicit = match args.bandwidth {
        Some(Scale::Value(t)) => Some(t),
        _ => None,
    };
    let ev = args.kernel.evaluator(&ds, explicit)?;
    let phi = gram_matrix(ds.series(), &ev, args.kernel.workers)?;
    let mut text = match args.bandwidth {
        None => phi.to_text(),
        Some(Scale::Value(t)) => phi.exp_transform(t)?.to_text(),
        Some(Scale::Auto) => {
            let t = if ds.len() > 1 { phi.median_bandwidth()? } else { 1.0 };
            phi.exp_transform(t)?.to_text()
        }
    };
    for &t in &args.psd_check {
        let (min, max) = phi.psd_check(t)?;
        text.push_str(&format!("# psd t={t:e} min_eig={min:.16e} max_eig={max:.16e}\n"));
    }
    write(&args.out, &text)
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Bandwidth the ark tolerance refers to; `auto` uses a dense pilot estimate.
    #[arg(long, default_value = "auto")]
    pub bandwidth: Scale,
    #[arg(long = "c-values", value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0])]
    pub c_values: Vec<f64>,
    #[arg(long = "multipliers", value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub multipliers: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Report TSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-cell cross-validation table; defaults to `<out>.cv.tsv`.
    #[arg(long = "cv-out")]
    pub cv_out: Option<PathBuf>,
}

pub fn cmd_classify(args: &ClassifyArgs) -> Result<()> {
    args.kernel.validate()?;
    let grid = SelectionGrid {
        c_values: args.c_values.clone(),
        bandwidth_multipliers: args.multipliers.clone(),
        folds: args.folds,
        seed: args.kernel.seed,
        ..SelectionGrid::default()
    };
    grid.validate().map_err(|e| usage(e.to_string()))?;
    if let Some(c) = args.c_values.iter().find(|c| !(**c > 0.0)) {
        return Err(usage(format!("--c-values must be positive, got {c}")));
    }
    if !args.train.is_dir() || !args.test.is_dir() {
        let missing = if args.train.is_dir() { &args.test } else { &args.train };
        return Err(usage(format!("dataset directory {} does not exist", missing.display())));
    }
    let train = args.kernel.prepare(load(&args.train, "training")?);
    let test = args.kernel.prepare(load(&args.test, "test")?);
    let explicit = match args.bandwidth {
        Scale::Value(t) => Some(t),
        Scale::Auto => None,
    };
    let start = Instant::now();
    let ev = args.kernel.evaluator(&train, explicit)?;
    let mut report = select_and_evaluate(&train, &test, &ev, &grid, args.kernel.workers)?;
    report.wall_time_seconds = start.elapsed().as_secs_f64();

    let text = format!("{}\n{}\n", arkernel::classify::SelectionReport::HEADER, report.tsv_row());
    let cv_path = args
        .cv_out
        .clone()
        .or_else(|| args.out.as_ref().map(|o| o.with_extension("cv.tsv")));
    match &args.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = cv_path {
        write(&path, &report.cv_table())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ApproxStudyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long = "sigma-sq", default_value = "auto")]
    pub sigma_sq: Scale,
    /// Kernel bandwidth the tolerances refer to; `auto` is the median dense `Φ_κ`.
    #[arg(long, default_value = "auto")]
    pub bandwidth: Scale,
    #[arg(
        long = "tau",
        value_delimiter = ',',
        default_values_t = [1e0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
    )]
    pub taus: Vec<f64>,
    /// At most this many series enter the matrix.
    #[arg(long = "max-series", default_value_t = 50)]
    pub max_series: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Low-rank evaluator that accumulates timing and rank statistics.
struct Instrumented {
    params: KernelizedParams,
    cfg: Option<ApproxConfig>,
    nanos: AtomicU64,
    evals: AtomicUsize,
    rank1: AtomicUsize,
    rank2: AtomicUsize,
    capped: AtomicUsize,
}

impl Instrumented {
    fn new(params: KernelizedParams, cfg: Option<ApproxConfig>) -> Self {
        Self {
            params,
            cfg,
            nanos: AtomicU64::new(0),
            evals: AtomicUsize::new(0),
            rank1: AtomicUsize::new(0),
            rank2: AtomicUsize::new(0),
            capped: AtomicUsize::new(0),
        }
    }

    fn seconds_per_eval(&self) -> f64 {
        self.nanos.load(Ordering::Relaxed) as f64 * 1e-9 / self.evals.load(Ordering::Relaxed).max(1) as f64
    }

    fn mean_rank(&self, which: &AtomicUsize) -> f64 {
        which.load(Ordering::Relaxed) as f64 / self.evals.load(Ordering::Relaxed).max(1) as f64
    }
}

impl PairEvaluator for Instrumented {
    fn eval(&self, a: &TimeSeries, b: &TimeSeries) -> arkernel::Result<f64> {
        let start = Instant::now();
        let value = match &self.cfg {
            None => phi_kappa_dense(a, b, self.params)?,
            Some(cfg) => {
                let (v, diag) = phi_kappa_lowrank(a, b, self.params, cfg)?;
                self.rank1.fetch_add(diag.ranks.0, Ordering::Relaxed);
                self.rank2.fetch_add(diag.ranks.1, Ordering::Relaxed);
                self.capped.fetch_add(diag.rank_cap_reached as usize, Ordering::Relaxed);
                v
            }
        };
        self.nanos.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.evals.fetch_add(1, Ordering::Relaxed);
        Ok(value)
    }

    fn meta(&self) -> KernelMeta {
        KernelMeta { kernel: "ark".into(), p: self.params.p, alpha: self.params.alpha, bandwidth: None }
    }
}

pub const APPROX_HEADER: &str = "tau\tseconds_per_eval\tdense_seconds_per_eval\tmax_abs_gap\tfrobenius_gap\trelative_frobenius_gap\tmean_rank1\tmean_rank2\trank_cap_hits";

pub fn cmd_approx_study(args: &ApproxStudyArgs) -> Result<()> {
    ArParams::new(args.p, args.alpha).map_err(|e| usage(e.to_string()))?;
    if args.taus.is_empty() || args.taus.iter().any(|t| !(*t > 0.0)) {
        return Err(usage("--tau needs a non-empty list of positive values"));
    }
    if args.max_series == 0 {
        return Err(usage("--max-series must be positive"));
    }
    let ds = load(&args.data, "data")?;
    let keep: Vec<usize> = (0..ds.len().min(args.max_series)).collect();
    let ds = ds.subset(&keep)?;
    let sigma_sq = match args.sigma_sq {
        Scale::Value(v) => v,
        Scale::Auto => median_sigma_sq_floored(&ds, ds.len(), args.seed)?,
    };
    let params = KernelizedParams::gaussian(args.p, args.alpha, sigma_sq);

    let dense_ev = Instrumented::new(params, None);
    let dense = gram_matrix(ds.series(), &dense_ev, args.workers)?;
    let bandwidth = match args.bandwidth {
        Scale::Value(t) => t,
        Scale::Auto if ds.len() > 1 => dense.median_bandwidth()?,
        Scale::Auto => 1.0,
    };
    let dense_norm = dense.values.norm();

    let mut text = String::from(APPROX_HEADER);
    text.push('\n');
    for &tau in &args.taus {
        let cfg = ApproxConfig::new(tau, bandwidth)?;
        let ev = Instrumented::new(params, Some(cfg));
        let approx = gram_matrix(ds.series(), &ev, args.workers)?;
        let gap = &dense.values - &approx.values;
        let max_abs = gap.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let frob = gap.norm();
        text.push_str(&format!(
            "{tau:e}\t{:.6e}\t{:.6e}\t{max_abs:.6e}\t{frob:.6e}\t{:.6e}\t{:.4}\t{:.4}\t{}\n",
            ev.seconds_per_eval(),
            dense_ev.seconds_per_eval(),
            if dense_norm > 0.0 { frob / dense_norm } else { 0.0 },
            ev.mean_rank(&ev.rank1),
            ev.mean_rank(&ev.rank2),
            ev.capped.load(Ordering::Relaxed),
        ));
    }
    write(&args.out, &text)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenToy(a) => cmd_gen_toy(a),
        Command::Gram(a) => cmd_gram(a),
        Command::Classify(a) => cmd_classify(a),
        Command::ApproxStudy(a) => cmd_approx_study(a),
    }
}
