//! Batch front end: scenario files in, CSV logs, JSON summaries and SVG plots out.

pub mod config;
pub mod log;
pub mod plot;
pub mod run;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Mode, ScenarioConfig};
pub use log::{read_steps, summarize, write_steps, LogRow, Summary, SummaryInputs};
pub use run::{simulate, EstimationReport, RunOutput};

use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_estimation(dir: &Path, report: &EstimationReport) -> Result<()> {
    let path = dir.join("estimation.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(["box", "batch_size", "n_samples", "m_star", "true_mass"]).map_err(err)?;
    for b in &report.boxes {
        for r in &b.batches {
            w.write_record([
                b.box_id.to_string(),
                r.batch_size.to_string(),
                r.n_samples.to_string(),
                r.m_star.map(|m| m.to_string()).unwrap_or_default(),
                b.true_mass.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("estimation_samples.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(["box", "sample", "m_sample"]).map_err(err)?;
    for b in &report.boxes {
        for (i, m) in b.main.iter().flat_map(|m| m.per_sample.iter()).enumerate() {
            w.write_record([b.box_id.to_string(), i.to_string(), m.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Runs one scenario and writes `steps.csv`, `summary.json`, the estimation logs and optional plots.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, plots: bool) -> Result<Summary> {
    let output = simulate(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let steps = out.join("steps.csv");
    let mut w = create(&steps)?;
    write_steps(&mut w, &output.rows)?;
    w.flush().map_err(|e| Error::io(&steps, e))?;
    write_estimation(out, &output.estimation)?;
    write_json(&out.join("summary.json"), &output.summary)?;
    if plots {
        let traj = out.join("trajectory.svg");
        fs::write(&traj, plot::trajectory_svg(cfg, &output.rows)).map_err(|e| Error::io(&traj, e))?;
        let bars = out.join("barriers.svg");
        fs::write(&bars, plot::barriers_svg(&output.rows)).map_err(|e| Error::io(&bars, e))?;
    }
    Ok(output.summary)
}

/// Recomputes the summary of one run directory from its `steps.csv` and compares.
pub fn verify_run(dir: &Path) -> Result<Summary> {
    let sum_path = dir.join("summary.json");
    let text = fs::read_to_string(&sum_path).map_err(|e| Error::io(&sum_path, e))?;
    let stored: Summary =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", sum_path.display())))?;
    let steps = dir.join("steps.csv");
    let rows = read_steps(File::open(&steps).map_err(|e| Error::io(&steps, e))?)?;
    let recomputed = summarize(&stored.inputs, &rows)?;
    if recomputed != stored {
        let a = serde_json::to_value(&stored).expect("summary serializes");
        let b = serde_json::to_value(&recomputed).expect("summary serializes");
        let fields: Vec<String> = match (a, b) {
            (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
                a.iter().filter(|(k, v)| b.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect()
            }
            _ => vec![],
        };
        return Err(Error::Verification(format!(
            "{}: summary differs from steps.csv in {}",
            dir.display(),
            fields.join(", ")
        )));
    }
    Ok(recomputed)
}

/// Verifies a run directory, or every run listed in a sweep directory.
pub fn verify(dir: &Path) -> Result<usize> {
    let sweep = dir.join("sweep.json");
    if sweep.exists() {
        let text = fs::read_to_string(&sweep).map_err(|e| Error::io(&sweep, e))?;
        let report: SweepReport =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", sweep.display())))?;
        let mut n = 0;
        for entry in report.runs.iter().filter(|r| r.summary.is_some()) {
            verify_run(&dir.join(&entry.dir))?;
            n += 1;
        }
        Ok(n)
    } else {
        verify_run(dir).map(|_| 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub config: String,
    pub seed: u64,
    /// Output subdirectory relative to the sweep directory.
    pub dir: String,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<SweepEntry>,
    pub completed: usize,
    pub failed: usize,
    pub goal_reached_rate: f64,
    /// Fraction of runs with mass estimates whose heaviest estimate is the heaviest box.
    pub ordering_success_rate: Option<f64>,
}

/// One sweep job: a config file, optionally re-seeded.
#[derive(Debug, Clone)]
pub struct SweepJob {
    pub source: PathBuf,
    pub config: ScenarioConfig,
    pub dir: String,
}

/// Expands config paths into jobs; `seeds = Some(n)` runs each config with seeds `0..n`.
pub fn sweep_jobs(paths: &[PathBuf], seeds: Option<u64>) -> Result<Vec<SweepJob>> {
    if paths.is_empty() {
        return Err(Error::param("sweep needs at least one config"));
    }
    let mut jobs = Vec::new();
    for p in paths {
        let cfg = ScenarioConfig::load(p)?;
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        match seeds {
            None => jobs.push(SweepJob {
                source: p.clone(),
                dir: stem,
                config: cfg,
            }),
            Some(n) => {
                for seed in 0..n {
                    let mut c = cfg.clone();
                    c.scenario.seed = seed;
                    jobs.push(SweepJob {
                        source: p.clone(),
                        dir: format!("{stem}_seed{seed}"),
                        config: c,
                    });
                }
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for j in &jobs {
        if !seen.insert(j.dir.clone()) {
            return Err(Error::param(format!("two sweep configs map to output `{}`", j.dir)));
        }
    }
    Ok(jobs)
}

/// Runs jobs on `jobs_parallel` threads, each into its own subdirectory, and writes `sweep.json`.
pub fn run_sweep(jobs: &[SweepJob], out: &Path, jobs_parallel: usize) -> Result<SweepReport> {
    if jobs.is_empty() {
        return Err(Error::param("sweep needs at least one config"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs_parallel.max(1))
        .build()
        .map_err(|e| Error::param(e.to_string()))?;
    let runs: Vec<SweepEntry> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let result = run_scenario(&job.config, &out.join(&job.dir), false);
                SweepEntry {
                    config: job.source.display().to_string(),
                    seed: job.config.scenario.seed,
                    dir: job.dir.clone(),
                    error: result.as_ref().err().map(|e| e.to_string()),
                    summary: result.ok(),
                }
            })
            .collect()
    });
    let done: Vec<&Summary> = runs.iter().filter_map(|r| r.summary.as_ref()).collect();
    let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let ordered: Vec<bool> = done.iter().filter_map(|s| s.ordering_correct).collect();
    let report = SweepReport {
        completed: done.len(),
        failed: runs.len() - done.len(),
        goal_reached_rate: rate(done.iter().filter(|s| s.goal_reached).count(), done.len()),
        ordering_success_rate: (!ordered.is_empty()).then(|| rate(ordered.iter().filter(|&&o| o).count(), ordered.len())),
        runs,
    };
    write_json(&out.join("sweep.json"), &report)?;
    Ok(report)
}

/// Config files matching a glob pattern, sorted.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| Error::Config(format!("bad glob `{pattern}`: {e}")))?;
    let mut out: Vec<PathBuf> = paths.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
    out.sort();
    Ok(out)
}
