use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sobfno_core::burgers::SolverConfig;
use sobfno_core::datagen::SamplerConfig;
use sobfno_core::fno::{param_count, Activation, FnoConfig};
use sobfno_core::scaling::ScalingReport;
use sobfno_core::spectral::FdStencil;
use sobfno_core::train::{AdamConfig, TrainConfig};

use crate::config_file;
use crate::figures::{self, Figures};
use crate::pipeline::{self, GenData, Sweep, TrainRun, Usage};

/// Environment variable naming the root for default output locations.
pub const OUT_ROOT_ENV: &str = "SOBFNO_OUT_ROOT";

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("sobfno-out"), PathBuf::from)
}

fn default_data() -> PathBuf {
    out_root().join("data").join("dataset.sfd")
}

#[derive(Debug, Parser)]
#[command(name = "sobfno", version, about = "Learn the viscous Burgers solution operator with an H1-trained FNO")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample initial conditions and solve Burgers for each.
    GenData(GenDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Train a family of models and fit error against parameter count.
    Sweep(SweepArgs),
    /// Write figure data from runs and sweeps.
    ExportFigures(ExportArgs),
    /// Re-run a manifest's command and check its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 256)]
    pub n_train: usize,
    #[arg(long, default_value_t = 64)]
    pub n_test: usize,
    /// Grid points.
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.01)]
    pub nu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Keep aliased modes in the nonlinear term.
    #[arg(long)]
    pub no_dealias: bool,
    /// H1-ball radius.
    #[arg(long, default_value_t = 0.3)]
    pub radius: f64,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    #[arg(long, default_value_t = 2.0)]
    pub decay: f64,
    /// Add a random mean to every initial condition.
    #[arg(long)]
    pub nonzero_mean: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file [default: $SOBFNO_OUT_ROOT/data/dataset.sfd].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Gelu,
    Relu,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StencilArg {
    Central,
    Forward,
}

/// Model and optimizer flags shared by `train` and `sweep`.
#[derive(Debug, Args)]
pub struct TrainOpts {
    /// Dataset file [default: $SOBFNO_OUT_ROOT/data/dataset.sfd].
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 128)]
    pub fc_hidden: usize,
    /// 2 feeds `(u0, x)`, 1 feeds `u0` only.
    #[arg(long, default_value_t = 2)]
    pub in_channels: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Gelu)]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Write a checkpoint every this many epochs (0: only best and final).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Difference stencil of the H1 loss.
    #[arg(long, value_enum, default_value_t = StencilArg::Central)]
    pub stencil: StencilArg,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl TrainOpts {
    fn model(&self, modes: usize, width: usize) -> FnoConfig {
        FnoConfig {
            layers: self.layers,
            fc_hidden: self.fc_hidden,
            in_channels: self.in_channels,
            activation: match self.activation {
                ActivationArg::Gelu => Activation::Gelu,
                ActivationArg::Relu => Activation::Relu,
            },
            ..FnoConfig::new(modes, width)
        }
    }

    fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            seed,
            checkpoint_every: self.checkpoint_every,
            stencil: match self.stencil {
                StencilArg::Central => FdStencil::Central,
                StencilArg::Forward => FdStencil::Forward,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 8)]
    pub modes: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Seeds parameter initialization and batch shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[command(flatten)]
    pub common: Common,
}

/// `MODESxWIDTH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSize(pub usize, pub usize);

impl std::str::FromStr for ModelSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (m, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected MODESxWIDTH, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
        Ok(ModelSize(parse(m)?, parse(w)?))
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated `MODESxWIDTH` list.
    #[arg(long, value_delimiter = ',', default_value = "8x32,12x48,16x64,24x96")]
    pub configs: Vec<ModelSize>,
    /// Comma-separated seeds; with several, records hold per-config medians.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Sobolev order of the benchmark rate s/d.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Spatial dimension of the benchmark rate s/d.
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    /// Skip training and fit the table given by --records.
    #[arg(long, requires = "records")]
    pub fit_only: bool,
    /// CSV with `params,best_test_loss[,final_test_loss]` columns.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub sweep_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Test sample shown in the qualitative panel.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Run directory of a long-horizon run; repeatable.
    #[arg(long)]
    pub long_run: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only compare existing outputs against the recorded checksums.
    #[arg(long)]
    pub check_only: bool,
}

fn print_report(label: &str, r: &ScalingReport) {
    println!(
        "{label} fit: C = {:.4e}, alpha = {:.4}, r^2 = {:.4} over {} points; benchmark s/d = {}{}",
        r.fit.c,
        r.fit.alpha,
        r.fit.r_squared,
        r.fit.points.len(),
        r.benchmark_exponent,
        if r.u_shape { "; U-shape detected" } else { "" }
    );
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let opts = GenData {
        sampler: SamplerConfig {
            radius: a.radius,
            k_max: a.k_max,
            decay: a.decay,
            zero_mean: !a.nonzero_mean,
            seed: a.seed,
        },
        solver: SolverConfig {
            nu: a.nu,
            t_final: a.t_final,
            dt: a.dt,
            dealias: !a.no_dealias,
            n: a.grid,
        },
        n_train: a.n_train,
        n_test: a.n_test,
        out: a.out.unwrap_or_else(default_data),
    };
    let manifest = pipeline::gen_data(&opts)?;
    println!("wrote {} ({} pairs)", opts.out.display(), opts.n_train + opts.n_test);
    println!("manifest {}", manifest.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let fno = a.opts.model(a.modes, a.width);
    let run = TrainRun {
        data: a.opts.data.clone().unwrap_or_else(default_data),
        fno,
        train: a.opts.train(a.seed),
        out_dir: a.opts.out_dir.clone().unwrap_or_else(|| {
            out_root().join("runs").join(pipeline::run_dir_name(&fno, a.seed))
        }),
        quiet: a.common.quiet,
    };
    fno.validate().map_err(|e| pipeline::usage(format!("invalid model: {e}")))?;
    let data = pipeline::load_dataset(&run.data)?;
    let out = pipeline::train_run(&run, &data)?;
    let c = &out.outcome.curve;
    println!(
        "modes={} width={} params={}: best test H1 loss {:.4e} at epoch {}, relative error {:.4e}",
        fno.modes,
        fno.width,
        param_count(&fno),
        c.best_test_loss,
        c.best_epoch,
        out.best_eval.relative_error
    );
    println!("outputs in {}", run.out_dir.display());
    if let Some(ab) = &c.aborted {
        anyhow::bail!("training aborted in epoch {}: {}", ab.epoch, ab.reason);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let out_dir = a.opts.out_dir.clone().unwrap_or_else(|| out_root().join("sweep"));
    if a.fit_only {
        let records = a.records.as_deref().expect("clap enforces --records");
        let (best, last) = pipeline::fit_only(records, &out_dir, a.s, a.d)?;
        print_report("best-epoch", &best);
        if let Some(r) = &last {
            print_report("final-epoch", r);
        }
        return Ok(());
    }
    let configs = a.configs.iter().map(|m| a.opts.model(m.0, m.1)).collect();
    let opts = Sweep {
        data: a.opts.data.clone().unwrap_or_else(default_data),
        configs,
        seeds: a.seeds.clone(),
        train: a.opts.train(0),
        out_dir,
        s: a.s,
        d: a.d,
        quiet: a.common.quiet,
    };
    let out = pipeline::sweep(&opts)?;
    println!("{:>6} {:>6} {:>9} {:>12} {:>12} {:>10}", "modes", "width", "params", "best", "final", "rel_err");
    for r in &out.records {
        println!(
            "{:>6} {:>6} {:>9} {:>12.4e} {:>12.4e} {:>10.3e}{}",
            r.config.modes,
            r.config.width,
            r.params,
            r.best_test_loss,
            r.final_test_loss,
            r.relative_error,
            if r.usable() { "" } else { "  aborted" }
        );
    }
    let mut failed = false;
    for (label, rep) in [("best-epoch", &out.best), ("final-epoch", &out.last)] {
        match rep {
            Ok(r) => print_report(label, r),
            Err(e) => {
                eprintln!("{label} fit rejected: {e}");
                failed = true;
            }
        }
    }
    println!("outputs in {}", opts.out_dir.display());
    anyhow::ensure!(!failed, "scaling reports were not written");
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let opts = Figures {
        sweep_dir: a.sweep_dir,
        run_dir: a.run_dir,
        data: a.data,
        sample: a.sample,
        long_runs: a.long_run,
        out_dir: a.out_dir.unwrap_or_else(|| out_root().join("figures")),
        s: a.s,
        d: a.d,
    };
    for p in figures::export(&opts)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let bad = pipeline::replay(&a.manifest, a.check_only)?;
    if bad.is_empty() {
        println!("all outputs match {}", a.manifest.display());
        Ok(())
    } else {
        for p in &bad {
            eprintln!("mismatch: {}", p.display());
        }
        anyhow::bail!("{} output(s) differ from the manifest", bad.len())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::ExportFigures(a) => export(a),
        Command::Replay(a) => replay(a),
    }
}

/// Entry point: merges any config file, parses, runs, maps errors to exit
/// codes (2 for usage problems, 1 otherwise).
pub fn main_with(argv: Vec<OsString>) -> ExitCode {
    let argv = match config_file::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
