//! Column data for the figures. Plotting is left to external tools.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use serde_json::json;
use sobfno_core::scaling::{benchmark_exponent, fit_power_law, report_from_points, Which};
use sobfno_core::train::qualitative;

use crate::manifest::RunManifest;
use crate::pipeline::{load_dataset, reload_records, usage, RunIndexRow};
use crate::tables::{self, CurveRow};
use crate::checkpoint;

pub const QUALITATIVE: &str = "fig1_qualitative.csv";
pub const LEARNING_CURVES: &str = "fig2_learning_curves.csv";
pub const ERROR_VS_PARAMS: &str = "fig3_error_vs_params.csv";
pub const LOG_LOG: &str = "fig4_loglog.csv";
pub const LONG_RUN: &str = "fig3_long_run.csv";

#[derive(Debug, Clone)]
pub struct Figures {
    pub sweep_dir: Option<PathBuf>,
    /// Run used for the qualitative panel; defaults to the sweep's first run.
    pub run_dir: Option<PathBuf>,
    /// Dataset for the qualitative panel; defaults to the run's input.
    pub data: Option<PathBuf>,
    pub sample: usize,
    pub long_runs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub s: f64,
    pub d: u32,
}

impl Figures {
    pub fn to_args(&self) -> Vec<String> {
        let mut out = vec!["export-figures".to_owned()];
        if let Some(p) = &self.sweep_dir {
            out.push(format!("--sweep-dir={}", p.display()));
        }
        if let Some(p) = &self.run_dir {
            out.push(format!("--run-dir={}", p.display()));
        }
        if let Some(p) = &self.data {
            out.push(format!("--data={}", p.display()));
        }
        out.push(format!("--sample={}", self.sample));
        for p in &self.long_runs {
            out.push(format!("--long-run={}", p.display()));
        }
        out.push(format!("--out-dir={}", self.out_dir.display()));
        out.push(format!("--s={}", self.s));
        out.push(format!("--d={}", self.d));
        out
    }
}

#[derive(Serialize)]
struct QualRow {
    x: f64,
    u0: f64,
    u_true: f64,
    u_pred: f64,
    du_true: f64,
    du_pred: f64,
}

#[derive(Serialize)]
struct CurveOverlayRow {
    modes: usize,
    width: usize,
    seed: u64,
    epoch: usize,
    train_loss: f64,
    test_loss: f64,
    rel_err: f64,
    flag: String,
}

#[derive(Serialize)]
struct ErrorRow {
    modes: Option<usize>,
    width: Option<usize>,
    params: usize,
    best_test_loss: f64,
    final_test_loss: Option<f64>,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct LogLogRow {
    /// `best`, `final`, `fit_best`, `fit_final` or `benchmark`.
    series: &'static str,
    params: f64,
    value: f64,
}

#[derive(Serialize)]
struct LongRunRow {
    run: String,
    epochs: usize,
    epoch: usize,
    train_loss: f64,
    test_loss: f64,
    flag: String,
}

fn read_curve(dir: &Path) -> Result<Vec<CurveRow>> {
    let path = dir.join("curve.csv");
    tables::read_rows(&path).with_context(|| format!("learning curve {} is required", path.display()))
}

fn sweep_runs(sweep_dir: &Path) -> Result<Vec<RunIndexRow>> {
    let path = sweep_dir.join("runs.csv");
    tables::read_rows(&path).with_context(|| format!("sweep run index {} is required", path.display()))
}

/// Writes the qualitative panel for one run.
pub fn export_qualitative(run_dir: &Path, data: Option<&Path>, sample: usize, out: &Path) -> Result<f64> {
    let ckpt = run_dir.join("best.ckpt");
    let (params, _) = checkpoint::load(&ckpt).with_context(|| format!("checkpoint {} is required", ckpt.display()))?;
    let data_path = match data {
        Some(p) => p.to_path_buf(),
        None => {
            let mpath = run_dir.join("manifest.json");
            let m = RunManifest::load(&mpath).with_context(|| format!("run manifest {} is required (or pass --data)", mpath.display()))?;
            let input = m.inputs.first().ok_or_else(|| anyhow!("run manifest {} names no dataset", mpath.display()))?;
            if input.path.is_absolute() { input.path.clone() } else { m.cwd.join(&input.path) }
        }
    };
    let data = load_dataset(&data_path)?;
    let s = data
        .test
        .get(sample)
        .ok_or_else(|| usage(format!("--sample {sample} is out of range: the test split has {} samples", data.test.len())))?;
    let q = qualitative(&params, s)?;
    let rows = (0..q.x.len()).map(|i| QualRow {
        x: q.x[i],
        u0: q.u0[i],
        u_true: q.u_true[i],
        u_pred: q.u_pred[i],
        du_true: q.du_true[i],
        du_pred: q.du_pred[i],
    });
    tables::write_rows(out, rows)?;
    let max_dt = q.du_true.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_gap = q.du_true.iter().zip(&q.du_pred).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(max_gap / max_dt)
}

/// Writes every figure the given inputs allow and returns the files written.
pub fn export(opts: &Figures) -> Result<Vec<PathBuf>> {
    if opts.sweep_dir.is_none() && opts.run_dir.is_none() && opts.long_runs.is_empty() {
        return Err(usage("nothing to export: pass --sweep-dir, --run-dir or --long-run"));
    }
    benchmark_exponent(opts.s, opts.d).map_err(|e| usage(e.to_string()))?;
    let mut manifest = RunManifest::new("export-figures", opts.to_args(), json!({"s": opts.s, "d": opts.d, "sample": opts.sample}), vec![])?;
    let mut written = Vec::new();
    let out = |name: &str| opts.out_dir.join(name);
    let runs = match &opts.sweep_dir {
        Some(dir) => sweep_runs(dir)?,
        None => Vec::new(),
    };

    let qual_run = match (&opts.run_dir, &opts.sweep_dir, runs.first()) {
        (Some(r), _, _) => Some(r.clone()),
        (None, Some(sd), Some(first)) => Some(sd.join(&first.dir)),
        _ => None,
    };
    let mut derivative_gap = None;
    if let Some(run) = &qual_run {
        derivative_gap = Some(export_qualitative(run, opts.data.as_deref(), opts.sample, &out(QUALITATIVE))?);
        written.push(out(QUALITATIVE));
    }

    let mut overlay = Vec::new();
    if let Some(sd) = &opts.sweep_dir {
        for r in &runs {
            for c in read_curve(&sd.join(&r.dir))? {
                overlay.push(CurveOverlayRow {
                    modes: r.modes,
                    width: r.width,
                    seed: r.seed,
                    epoch: c.epoch,
                    train_loss: c.train_loss,
                    test_loss: c.test_loss,
                    rel_err: c.rel_err,
                    flag: c.flag,
                });
            }
        }
    } else if let Some(run) = &opts.run_dir {
        let (_, meta) = checkpoint::load(&run.join("best.ckpt"))?;
        let seed = RunManifest::load(&run.join("manifest.json")).ok().and_then(|m| m.seeds.last().copied()).unwrap_or(0);
        for c in read_curve(run)? {
            overlay.push(CurveOverlayRow {
                modes: meta.config.modes,
                width: meta.config.width,
                seed,
                epoch: c.epoch,
                train_loss: c.train_loss,
                test_loss: c.test_loss,
                rel_err: c.rel_err,
                flag: c.flag,
            });
        }
    }
    if !overlay.is_empty() {
        tables::write_rows(&out(LEARNING_CURVES), overlay)?;
        written.push(out(LEARNING_CURVES));
    }

    let mut fits = json!(null);
    if let Some(sd) = &opts.sweep_dir {
        let records = reload_records(sd)?;
        let usable: Vec<_> = records.iter().filter(|r| r.aborted != Some(true)).collect();
        tables::write_rows(
            &out(ERROR_VS_PARAMS),
            usable.iter().map(|r| ErrorRow {
                modes: r.modes,
                width: r.width,
                params: r.params,
                best_test_loss: r.best_test_loss,
                final_test_loss: r.final_test_loss,
                relative_error: r.relative_error,
            }),
        )?;
        written.push(out(ERROR_VS_PARAMS));

        let best: Vec<(f64, f64)> = usable.iter().map(|r| (r.params as f64, r.best_test_loss)).collect();
        let last: Vec<(f64, f64)> =
            usable.iter().filter_map(|r| r.final_test_loss.map(|f| (r.params as f64, f))).collect();
        let mut rows = Vec::new();
        rows.extend(best.iter().map(|&(n, v)| LogLogRow { series: "best", params: n, value: v }));
        rows.extend(last.iter().map(|&(n, v)| LogLogRow { series: "final", params: n, value: v }));
        for (series, pts) in [("fit_best", &best), ("fit_final", &last)] {
            if let Ok(fit) = fit_power_law(pts) {
                rows.extend(pts.iter().map(|&(n, _)| LogLogRow { series, params: n, value: fit.predict(n) }));
            }
        }
        match report_from_points(&best, Which::Best, opts.s, opts.d) {
            Ok(rep) => {
                rows.extend(rep.benchmark_line.iter().map(|&(n, v)| LogLogRow { series: "benchmark", params: n, value: v }));
                fits = json!({"alpha": rep.fit.alpha, "c": rep.fit.c, "benchmark_exponent": rep.benchmark_exponent});
            }
            Err(e) => eprintln!("warning: no best-epoch fit for the log-log figure: {e}"),
        }
        tables::write_rows(&out(LOG_LOG), rows)?;
        written.push(out(LOG_LOG));
    }

    if !opts.long_runs.is_empty() {
        let mut rows = Vec::new();
        for dir in &opts.long_runs {
            let curve = read_curve(dir)?;
            let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
            let epochs = curve.len();
            rows.extend(curve.into_iter().map(|c| LongRunRow {
                run: name.clone(),
                epochs,
                epoch: c.epoch,
                train_loss: c.train_loss,
                test_loss: c.test_loss,
                flag: c.flag,
            }));
        }
        tables::write_rows(&out(LONG_RUN), rows)?;
        written.push(out(LONG_RUN));
    }

    for p in &written {
        manifest.add_output(p)?;
    }
    manifest.results = json!({"max_derivative_gap_relative": derivative_gap, "fit": fits});
    manifest.finish(&out("figures.manifest.json"))?;
    Ok(written)
}
