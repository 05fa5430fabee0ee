//! The commands as library functions: each writes its outputs, verifies
//! them and records a manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::json;
use sobfno_core::burgers::SolverConfig;
use sobfno_core::datagen::{build_dataset, Dataset, SamplerConfig};
use sobfno_core::fno::{init_params, param_count, Activation, FnoConfig, FnoParams};
use sobfno_core::spectral::FdStencil;
use sobfno_core::scaling::{
    report_from_points, run_sweep_with, scaling_report, RunSummary, ScalingReport, SweepRecord, Which,
};
use sobfno_core::train::{evaluate, train_from, EpochRecord, Evaluation, TrainConfig, TrainObserver, TrainOutcome};

use crate::manifest::RunManifest;
use crate::tables::{self, RecordRow};
use crate::{checkpoint, dataset};

/// Bad user input, reported as a usage error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn manifest_path_for(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

#[derive(Debug, Clone)]
pub struct GenData {
    pub sampler: SamplerConfig,
    pub solver: SolverConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub out: PathBuf,
}

/// Writes the dataset and `<out>.manifest.json`; returns the manifest path.
pub fn gen_data(opts: &GenData) -> Result<PathBuf> {
    if opts.n_train == 0 || opts.n_test == 0 {
        return Err(usage("--n-train and --n-test must both be at least 1"));
    }
    let grid = opts.solver.validate().map_err(|e| usage(format!("invalid solver settings: {e}")))?;
    opts.sampler.validate(grid).map_err(|e| usage(format!("invalid sampler settings: {e}")))?;
    let started = Instant::now();
    let mut manifest = RunManifest::new(
        "gen-data",
        opts.to_args(),
        json!({"sampler": opts.sampler, "solver": opts.solver, "n_train": opts.n_train, "n_test": opts.n_test}),
        vec![opts.sampler.seed],
    )?;
    let data = build_dataset(&opts.sampler, &opts.solver, opts.n_train, opts.n_test)?;
    let max_h1 = data.train.iter().chain(&data.test).map(|s| s.u0_h1).fold(0.0, f64::max);
    anyhow::ensure!(
        max_h1 <= opts.sampler.radius * (1.0 + 1e-12),
        "sampled initial condition has H1 norm {max_h1} above the radius {}",
        opts.sampler.radius
    );
    dataset::save(&opts.out, &data).with_context(|| format!("writing {}", opts.out.display()))?;
    let back = dataset::load(&opts.out).with_context(|| format!("verifying {}", opts.out.display()))?;
    anyhow::ensure!(back == data, "dataset {} did not read back identically", opts.out.display());
    manifest.add_output(&opts.out)?;
    manifest.results = json!({"pairs": opts.n_train + opts.n_test, "max_u0_h1": max_h1, "seconds": started.elapsed().as_secs_f64()});
    let mpath = manifest_path_for(&opts.out);
    manifest.finish(&mpath)?;
    Ok(mpath)
}

struct CliObserver {
    start: Instant,
    quiet: bool,
    label: String,
    dir: PathBuf,
    written: Vec<PathBuf>,
    error: Option<anyhow::Error>,
}

impl TrainObserver for CliObserver {
    fn elapsed_seconds(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, r: &EpochRecord, params: &FnoParams, is_best: bool, checkpoint_due: bool) {
        if !self.quiet {
            eprintln!(
                "{} epoch {:>4}  train {:.3e}  test {:.3e}  rel {:.3e}  {:>7.1}s{}{}",
                self.label,
                r.epoch,
                r.train_loss,
                r.test_loss,
                r.test_relative_error,
                r.wall_clock,
                if is_best { "  best" } else { "" },
                if r.unstable { "  UNSTABLE" } else { "" },
            );
        }
        if checkpoint_due && self.error.is_none() {
            let path = self.dir.join(format!("epoch_{:04}.ckpt", r.epoch));
            match checkpoint::save(&path, params, r.epoch, "periodic") {
                Ok(()) => self.written.push(path),
                Err(e) => self.error = Some(anyhow::Error::new(e).context(format!("writing {}", path.display()))),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub data: PathBuf,
    pub fno: FnoConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Gelu => "gelu",
        Activation::Relu => "relu",
    }
}

fn stencil_name(s: FdStencil) -> &'static str {
    match s {
        FdStencil::Central => "central",
        FdStencil::Forward => "forward",
    }
}

fn flag(out: &mut Vec<String>, name: &str, value: impl std::fmt::Display) {
    out.push(format!("--{name}={value}"));
}

/// Flags shared by `train` and `sweep`, minus modes, width and seed.
fn shared_args(out: &mut Vec<String>, data: &Path, fno: &FnoConfig, t: &TrainConfig, dir: &Path, quiet: bool) {
    flag(out, "data", data.display());
    flag(out, "layers", fno.layers);
    flag(out, "fc-hidden", fno.fc_hidden);
    flag(out, "in-channels", fno.in_channels);
    flag(out, "activation", activation_name(fno.activation));
    flag(out, "epochs", t.epochs);
    flag(out, "lr", t.adam.lr);
    flag(out, "batch-size", t.batch_size);
    flag(out, "beta1", t.adam.beta1);
    flag(out, "beta2", t.adam.beta2);
    flag(out, "adam-eps", t.adam.eps);
    flag(out, "checkpoint-every", t.checkpoint_every);
    flag(out, "stencil", stencil_name(t.stencil));
    flag(out, "out-dir", dir.display());
    if quiet {
        out.push("--quiet".into());
    }
}

impl TrainRun {
    /// Canonical `train` arguments reproducing this run.
    pub fn to_args(&self) -> Vec<String> {
        let mut out = vec!["train".to_owned()];
        flag(&mut out, "modes", self.fno.modes);
        flag(&mut out, "width", self.fno.width);
        flag(&mut out, "seed", self.train.seed);
        shared_args(&mut out, &self.data, &self.fno, &self.train, &self.out_dir, self.quiet);
        out
    }
}

impl GenData {
    pub fn to_args(&self) -> Vec<String> {
        let (s, v) = (&self.sampler, &self.solver);
        let mut out = vec!["gen-data".to_owned()];
        flag(&mut out, "n-train", self.n_train);
        flag(&mut out, "n-test", self.n_test);
        flag(&mut out, "grid", v.n);
        flag(&mut out, "nu", v.nu);
        flag(&mut out, "t-final", v.t_final);
        flag(&mut out, "dt", v.dt);
        if !v.dealias {
            out.push("--no-dealias".into());
        }
        flag(&mut out, "radius", s.radius);
        flag(&mut out, "k-max", s.k_max);
        flag(&mut out, "decay", s.decay);
        if !s.zero_mean {
            out.push("--nonzero-mean".into());
        }
        flag(&mut out, "seed", s.seed);
        flag(&mut out, "out", self.out.display());
        out
    }
}

impl Sweep {
    pub fn to_args(&self) -> Vec<String> {
        let mut out = vec!["sweep".to_owned()];
        let configs: Vec<String> = self.configs.iter().map(|c| format!("{}x{}", c.modes, c.width)).collect();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        flag(&mut out, "configs", configs.join(","));
        flag(&mut out, "seeds", seeds.join(","));
        flag(&mut out, "s", self.s);
        flag(&mut out, "d", self.d);
        let base = self.configs.first().copied().unwrap_or_else(|| FnoConfig::new(1, 1));
        shared_args(&mut out, &self.data, &base, &self.train, &self.out_dir, self.quiet);
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub outcome: TrainOutcome,
    pub best_eval: Evaluation,
    pub final_eval: Evaluation,
    pub manifest: PathBuf,
}

pub fn check_model(fno: &FnoConfig, data: &Dataset, train: &TrainConfig) -> Result<()> {
    fno.validate().map_err(|e| usage(format!("invalid model: {e}")))?;
    fno.check_grid(data.grid()).map_err(|e| usage(format!("invalid model for this dataset: {e}")))?;
    train.validate(data.train.len()).map_err(|e| usage(format!("invalid training settings: {e}")))?;
    Ok(())
}

fn verify_checkpoint(path: &Path, params: &FnoParams) -> Result<()> {
    let (back, _) = checkpoint::load(path).with_context(|| format!("verifying {}", path.display()))?;
    anyhow::ensure!(back.as_slice() == params.as_slice(), "checkpoint {} did not read back identically", path.display());
    Ok(())
}

/// Trains one model on an already loaded dataset and writes `curve.csv`,
/// `init.ckpt`, `best.ckpt`, `final.ckpt`, periodic checkpoints and
/// `manifest.json` into `out_dir`.
pub fn train_run(run: &TrainRun, data: &Dataset) -> Result<RunOutputs> {
    check_model(&run.fno, data, &run.train)?;
    let dir = &run.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = RunManifest::new(
        "train",
        run.to_args(),
        json!({
            "sampler": data.sampler,
            "solver": data.solver,
            "n_train": data.train.len(),
            "n_test": data.test.len(),
            "fno": run.fno,
            "params": param_count(&run.fno),
            "train": run.train,
        }),
        vec![data.sampler.seed, run.train.seed],
    )?;
    manifest.add_input(&run.data)?;

    let init = init_params(&run.fno, run.train.seed)?;
    let init_path = dir.join("init.ckpt");
    checkpoint::save(&init_path, &init, 0, "init")?;
    let mut obs = CliObserver {
        start: Instant::now(),
        quiet: run.quiet,
        label: format!("[m={} w={} seed={}]", run.fno.modes, run.fno.width, run.train.seed),
        dir: dir.clone(),
        written: vec![init_path],
        error: None,
    };
    let outcome = train_from(data, init, &run.train, &mut obs)?;
    if let Some(e) = obs.error.take() {
        return Err(e);
    }
    if let Some(a) = &outcome.curve.aborted {
        eprintln!("{} aborted in epoch {}: {}", obs.label, a.epoch, a.reason);
    }

    let curve_path = dir.join("curve.csv");
    tables::write_curve(&curve_path, &outcome.curve)?;
    let last_epoch = outcome.curve.final_record().map_or(0, |r| r.epoch);
    let final_path = dir.join("final.ckpt");
    let best_path = dir.join("best.ckpt");
    checkpoint::save(&final_path, &outcome.final_params, last_epoch, "final")?;
    checkpoint::save(&best_path, &outcome.best_params, outcome.curve.best_epoch, "best")?;
    verify_checkpoint(&final_path, &outcome.final_params)?;
    verify_checkpoint(&best_path, &outcome.best_params)?;
    let rows: Vec<tables::CurveRow> = tables::read_rows(&curve_path)?;
    anyhow::ensure!(rows == tables::curve_rows(&outcome.curve), "curve {} did not read back identically", curve_path.display());

    let best_eval = evaluate(&outcome.best_params, &data.test)?;
    let final_eval = evaluate(&outcome.final_params, &data.test)?;
    for p in obs.written.iter().chain([&curve_path, &final_path, &best_path]) {
        manifest.add_output(p)?;
    }
    let c = &outcome.curve;
    manifest.results = json!({
        "epochs_completed": c.records.len(),
        "best_epoch": c.best_epoch,
        "best_test_loss": c.best_test_loss,
        "final_test_loss": c.final_record().map(|r| r.test_loss),
        "best_relative_error": best_eval.relative_error,
        "final_relative_error": final_eval.relative_error,
        "unstable_epochs": c.unstable_epochs().collect::<Vec<_>>(),
        "aborted": c.aborted.as_ref().map(|a| json!({"epoch": a.epoch, "reason": a.reason})),
        "wall_clock_seconds": c.records.iter().map(|r| r.wall_clock).collect::<Vec<_>>(),
    });
    let mpath = dir.join("manifest.json");
    manifest.finish(&mpath)?;
    Ok(RunOutputs {
        outcome,
        best_eval,
        final_eval,
        manifest: mpath,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

pub fn run_dir_name(cfg: &FnoConfig, seed: u64) -> String {
    format!("m{}_w{}_s{}", cfg.modes, cfg.width, seed)
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub data: PathBuf,
    pub configs: Vec<FnoConfig>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub s: f64,
    pub d: u32,
    pub quiet: bool,
}

#[derive(Debug)]
pub struct SweepOutputs {
    pub records: Vec<SweepRecord>,
    pub best: Result<ScalingReport>,
    pub last: Result<ScalingReport>,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunIndexRow {
    pub modes: usize,
    pub width: usize,
    pub seed: u64,
    pub dir: String,
}

/// Trains every configuration under every seed, then fits best- and
/// final-epoch power laws. Reports that cannot be fitted are returned as
/// errors in the outputs rather than aborting the sweep.
pub fn sweep(opts: &Sweep) -> Result<SweepOutputs> {
    if opts.configs.is_empty() {
        return Err(usage("--configs is empty"));
    }
    if opts.seeds.is_empty() {
        return Err(usage("--seeds is empty"));
    }
    let data = load_dataset(&opts.data)?;
    for cfg in &opts.configs {
        check_model(cfg, &data, &opts.train)?;
    }
    let mut manifest = RunManifest::new(
        "sweep",
        opts.to_args(),
        json!({
            "sampler": data.sampler,
            "solver": data.solver,
            "configs": opts.configs,
            "train": opts.train,
            "s": opts.s,
            "d": opts.d,
        }),
        opts.seeds.clone(),
    )?;
    manifest.add_input(&opts.data)?;
    let mut index = Vec::new();
    let records = run_sweep_with(&opts.configs, &opts.train, &opts.seeds, |cfg, tc| -> Result<RunSummary> {
        let name = run_dir_name(cfg, tc.seed);
        let run = TrainRun {
            data: opts.data.clone(),
            fno: *cfg,
            train: *tc,
            out_dir: opts.out_dir.join("runs").join(&name),
            quiet: opts.quiet,
        };
        let out = train_run(&run, &data)?;
        index.push(RunIndexRow {
            modes: cfg.modes,
            width: cfg.width,
            seed: tc.seed,
            dir: format!("runs/{name}"),
        });
        Ok(RunSummary {
            seed: tc.seed,
            outcome: out.outcome,
            best_relative_error: out.best_eval.relative_error,
            manifest: Some(out.manifest.display().to_string()),
        })
    })?;
    let index_path = opts.out_dir.join("runs.csv");
    tables::write_rows(&index_path, &index)?;
    let records_path = opts.out_dir.join("records.csv");
    tables::write_rows(&records_path, records.iter().map(RecordRow::from))?;
    manifest.add_output(&index_path)?;
    manifest.add_output(&records_path)?;

    for r in records.iter().filter(|r| !r.usable()) {
        eprintln!("warning: every run of modes={} width={} aborted; excluded from fits", r.config.modes, r.config.width);
    }
    let mut fit = |which: Which, name: &str| -> Result<ScalingReport> {
        let report = scaling_report(&records, which, opts.s, opts.d)?;
        let path = opts.out_dir.join(name);
        write_json(&path, &report)?;
        manifest.add_output(&path)?;
        Ok(report)
    };
    let best = fit(Which::Best, "report_best.json");
    let last = fit(Which::Final, "report_final.json");
    manifest.results = json!({
        "records": records.iter().map(|r| json!({
            "modes": r.config.modes, "width": r.config.width, "params": r.params,
            "best_test_loss": r.best_test_loss, "final_test_loss": r.final_test_loss,
            "relative_error": r.relative_error, "best_epoch": r.best_epoch,
        })).collect::<Vec<_>>(),
        "best_fit": best.as_ref().ok().map(|r| json!({"alpha": r.fit.alpha, "c": r.fit.c, "r_squared": r.fit.r_squared})),
        "final_fit": last.as_ref().ok().map(|r| json!({"alpha": r.fit.alpha, "c": r.fit.c, "r_squared": r.fit.r_squared, "u_shape": r.u_shape})),
    });
    let mpath = opts.out_dir.join("manifest.json");
    manifest.finish(&mpath)?;
    Ok(SweepOutputs {
        records,
        best,
        last,
        manifest: mpath,
    })
}

/// Fits a hand-supplied or previously written record table.
pub fn fit_only(records: &Path, out_dir: &Path, s: f64, d: u32) -> Result<(ScalingReport, Option<ScalingReport>)> {
    let rows: Vec<RecordRow> = tables::read_rows(records).with_context(|| format!("reading {}", records.display()))?;
    let usable: Vec<&RecordRow> = rows.iter().filter(|r| r.aborted != Some(true)).collect();
    let best_points: Vec<(f64, f64)> = usable.iter().map(|r| (r.params as f64, r.best_test_loss)).collect();
    let best = report_from_points(&best_points, Which::Best, s, d)?;
    write_json(&out_dir.join("report_best.json"), &best)?;
    let final_points: Option<Vec<(f64, f64)>> =
        usable.iter().map(|r| r.final_test_loss.map(|f| (r.params as f64, f))).collect();
    let last = match final_points {
        Some(p) => {
            let rep = report_from_points(&p, Which::Final, s, d)?;
            write_json(&out_dir.join("report_final.json"), &rep)?;
            Some(rep)
        }
        None => None,
    };
    Ok((best, last))
}

/// Reads a sweep directory's record table.
pub fn reload_records(sweep_dir: &Path) -> Result<Vec<RecordRow>> {
    let path = sweep_dir.join("records.csv");
    tables::read_rows(&path).with_context(|| format!("sweep table {} is required", path.display()))
}

/// Re-runs the manifest's command in its original directory, then checks
/// every recorded output against its digest.
pub fn replay(manifest_path: &Path, check_only: bool) -> Result<Vec<PathBuf>> {
    let m = RunManifest::load(manifest_path).with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    if !check_only {
        let changed = m.mismatched_inputs();
        anyhow::ensure!(changed.is_empty(), "inputs changed since the run: {changed:?}");
        anyhow::ensure!(!m.args.is_empty(), "manifest records no arguments to replay");
        let exe = std::env::current_exe()?;
        let status = std::process::Command::new(exe)
            .args(&m.args)
            .current_dir(&m.cwd)
            .status()
            .context("launching replay")?;
        anyhow::ensure!(status.success(), "replayed command failed with {status}");
    }
    Ok(m.mismatched_outputs())
}
