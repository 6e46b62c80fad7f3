use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NonconvergencePolicy};
use super::grid::{build_grid, explicit_grid, GridPoint};
use crate::design::{derive_rng, place_signals, SeedPath};
use crate::error::{Error, Result};
use crate::fit::{fit_mle, FitOptions, FitStatus};
use crate::glm::{sample_response, LinearPredictor};
use crate::uniformity::{test_uniformity, PValueSample};

pub const VERSION: &str = concat!("glm-breakdown ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_HEADER: &str =
    "alpha0,p,outer_rep,ks_stat,ks_pvalue,ad_stat,ad_pvalue,n_converged,n_diverged,n_maxiter,mean_beta1,sd_beta1";

/// Path tag for the per-grid-point β₀ stream used with `fixed_beta0`.
const FIXED_BETA_TAG: u64 = u64::MAX;

/// Above this many fits the manifest flags the run as large.
const LARGE_RUN_FITS: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterResultRow {
    pub alpha0: f64,
    pub p: usize,
    pub outer_rep: usize,
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    pub ad_stat: f64,
    pub ad_pvalue: f64,
    pub n_converged: usize,
    pub n_diverged: usize,
    pub n_maxiter: usize,
    pub mean_beta1: f64,
    pub sd_beta1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceCounts {
    pub converged: usize,
    /// Diverged fits, plus fits whose information matrix became singular.
    pub diverged: usize,
    pub max_iter: usize,
}

impl ConvergenceCounts {
    pub fn total(&self) -> usize {
        self.converged + self.diverged + self.max_iter
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerBatch {
    /// Wald p-values of the tested coordinate over converged fits.
    pub pvalues: Vec<f64>,
    pub counts: ConvergenceCounts,
    pub mean_beta1: f64,
    pub sd_beta1: f64,
    /// Fewer than half of the fits converged.
    pub degenerate: bool,
}

impl InnerBatch {
    pub fn sample(&self) -> Option<PValueSample> {
        PValueSample::new(self.pvalues.clone()).ok()
    }
}

pub fn experiment_grid(config: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    let grid = match &config.alpha_grid {
        Some(alphas) => explicit_grid(config.n, alphas)?,
        None => build_grid(config.n, config.delta)?,
    };
    let needed = config.s + 1;
    for g in &grid {
        if g.p < needed.max(config.tested_coordinate) {
            return Err(Error::Config(format!(
                "grid point alpha0 = {} has p = {} too small for s = {} and tested coordinate {}",
                g.alpha0, g.p, config.s, config.tested_coordinate
            )));
        }
        let cols = g.p + usize::from(config.include_intercept);
        if cols > config.n {
            return Err(Error::Config(format!(
                "grid point alpha0 = {} needs {cols} columns with only n = {}",
                g.alpha0, config.n
            )));
        }
    }
    Ok(grid)
}

/// Sparse β₀ with the null coordinate moved onto the tested one.
fn draw_beta0<R: rand::Rng + ?Sized>(
    config: &ExperimentConfig,
    p: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut beta = place_signals(p, config.s, config.signal_magnitude, rng)?;
    beta.swap(0, config.tested_coordinate - 1);
    Ok(beta)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// All `r_inner` replications for one `(grid point, outer replication)` pair.
/// Replication `r` draws its design, β₀ and response from the stream
/// `[grid index, outer_idx, r]`.
pub fn run_inner_batch(
    grid: &GridPoint,
    outer_idx: usize,
    config: &ExperimentConfig,
) -> Result<InnerBatch> {
    let family = config.family()?;
    let spec = config.design_spec(grid.p)?;
    let opts = FitOptions {
        include_intercept: config.include_intercept,
        ..FitOptions::default()
    };
    let fixed_beta = if config.fixed_beta0 && config.s > 0 {
        let path = SeedPath::new(config.master_seed, vec![grid.index as u64, FIXED_BETA_TAG]);
        Some(draw_beta0(config, grid.p, &mut derive_rng(&path))?)
    } else {
        None
    };
    let tested = config.tested_coordinate - 1 + usize::from(config.include_intercept);

    let mut counts = ConvergenceCounts::default();
    let mut pvalues = Vec::with_capacity(config.r_inner);
    let mut estimates = Vec::with_capacity(config.r_inner);
    for r in 0..config.r_inner {
        let path = SeedPath::new(
            config.master_seed,
            vec![grid.index as u64, outer_idx as u64, r as u64],
        );
        let mut rng = derive_rng(&path);
        let x = spec.sample(&mut rng)?;
        let theta = if config.s == 0 {
            LinearPredictor::zeros(config.n)
        } else {
            let beta = match &fixed_beta {
                Some(b) => b.clone(),
                None => draw_beta0(config, grid.p, &mut rng)?,
            };
            LinearPredictor::from_design(&x, &beta)?
        };
        let y = sample_response(&family, &theta, &mut rng)?;
        let fit = fit_mle(&family, &x, &y, &opts)?;
        match fit.status {
            FitStatus::Converged => {
                counts.converged += 1;
                pvalues.push(fit.p_values.as_ref().expect("converged fit has p-values")[tested]);
                estimates.push(fit.beta_hat[tested]);
            }
            status => {
                if config.nonconvergence_policy == NonconvergencePolicy::Error {
                    return Err(Error::NotConverged(status));
                }
                if status == FitStatus::MaxIterations {
                    counts.max_iter += 1;
                } else {
                    counts.diverged += 1;
                }
            }
        }
    }
    let (mean_beta1, sd_beta1) = mean_sd(&estimates);
    Ok(InnerBatch {
        degenerate: 2 * counts.converged < config.r_inner,
        pvalues,
        counts,
        mean_beta1,
        sd_beta1,
    })
}

/// One outer replication: inner batch followed by both uniformity tests.
/// Batches too small to test carry NaN statistics.
pub fn run_outer_rep(
    grid: &GridPoint,
    outer_idx: usize,
    config: &ExperimentConfig,
) -> Result<OuterResultRow> {
    let batch = run_inner_batch(grid, outer_idx, config)?;
    let tested = batch.sample().and_then(|s| test_uniformity(&s).ok());
    let (ks_stat, ks_pvalue, ad_stat, ad_pvalue) = match tested {
        Some(u) => (u.ks_stat, u.ks_pvalue, u.ad_stat, u.ad_pvalue),
        None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(OuterResultRow {
        alpha0: grid.alpha0,
        p: grid.p,
        outer_rep: outer_idx,
        ks_stat,
        ks_pvalue,
        ad_stat,
        ad_pvalue,
        n_converged: batch.counts.converged,
        n_diverged: batch.counts.diverged,
        n_maxiter: batch.counts.max_iter,
        mean_beta1: batch.mean_beta1,
        sd_beta1: batch.sd_beta1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub grid: Vec<GridPoint>,
    pub total_fits: u64,
    /// Rough single-core estimate from an `n p²` cost per Newton iteration.
    pub estimated_cpu_seconds: f64,
    pub large_run: bool,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, grid: &[GridPoint]) -> Self {
        let per_point = (config.r_inner * config.r_outer) as u64;
        let total_fits = per_point * grid.len() as u64;
        // single-core timings: Gram products scale with n p², sampling with n p
        let estimated_cpu_seconds = grid
            .iter()
            .map(|g| {
                let (n, p) = (config.n as f64, g.p as f64);
                per_point as f64 * (2.2e-10 * n * p * p + 3e-8 * n * p)
            })
            .sum();
        Self {
            version: VERSION.to_string(),
            master_seed: config.master_seed,
            config: config.result_identity(),
            grid: grid.to_vec(),
            total_fits,
            estimated_cpu_seconds,
            large_run: total_fits > LARGE_RUN_FITS,
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn grid_file(dir: &Path, grid: &GridPoint) -> PathBuf {
    dir.join(format!("grid_{:02}.csv", grid.index))
}

/// Reads completed rows, ignoring a torn final line left by an interrupted write.
pub fn read_rows(path: &Path) -> Result<Vec<OuterResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut text = fs::read_to_string(path)?;
    text.truncate(text.rfind('\n').map_or(0, |i| i + 1));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Cuts a torn final line so that appended rows start on a fresh line.
fn repair_torn_tail(path: &Path) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        file.set_len(complete as u64)?;
    }
    Ok(())
}

fn write_rows_sorted(path: &Path, rows: &mut Vec<OuterResultRow>) -> Result<()> {
    rows.sort_by_key(|r| r.outer_rep);
    rows.dedup_by_key(|r| r.outer_rep);
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in rows.iter() {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Progress callback: grid point, finished row, tasks completed so far.
pub type ProgressFn = dyn Fn(&GridPoint, &OuterResultRow, usize) + Sync;

/// Result rows grouped by grid point.
pub type GridRows = Vec<(GridPoint, Vec<OuterResultRow>)>;

/// Controls for [`run_experiment_with`].
#[derive(Default)]
pub struct RunControl<'a> {
    /// Stop after this many tasks complete, leaving the run resumable.
    pub task_limit: Option<usize>,
    /// Called after every completed row.
    pub progress: Option<&'a ProgressFn>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub completed: usize,
    pub skipped: usize,
    pub remaining: usize,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    run_experiment_with(config, &RunControl::default())
}

/// Runs every `(grid point, outer replication)` task not already present in
/// `config.output_dir`, appending rows to one CSV per grid point. Completed
/// files are rewritten sorted by `outer_rep`.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    control: &RunControl<'_>,
) -> Result<RunOutcome> {
    config.validate()?;
    let grid = experiment_grid(config)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;

    let manifest = Manifest::new(config, &grid);
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let existing = Manifest::read(dir)?;
        if existing.config != manifest.config || existing.grid != manifest.grid {
            return Err(Error::ManifestMismatch {
                dir: dir.clone(),
                reason: "configuration differs from the one that produced these results".into(),
            });
        }
    } else {
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    }

    let mut tasks = Vec::new();
    let mut writers = BTreeMap::new();
    let mut done_counts = BTreeMap::new();
    let mut skipped = 0;
    for g in &grid {
        let path = grid_file(dir, g);
        repair_torn_tail(&path)?;
        let done: BTreeSet<usize> = read_rows(&path)?.into_iter().map(|r| r.outer_rep).collect();
        skipped += done.len();
        done_counts.insert(g.index, AtomicUsize::new(done.len()));
        tasks.extend(
            (0..config.r_outer)
                .filter(|o| !done.contains(o))
                .map(|o| (*g, o)),
        );
        let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if fresh {
            writeln!(file, "{CSV_HEADER}")?;
        }
        writers.insert(g.index, Mutex::new(file));
    }

    let limit = control.task_limit.unwrap_or(usize::MAX).min(tasks.len());
    let remaining = tasks.len() - limit;
    tasks.truncate(limit);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        tasks.par_iter().try_for_each(|(g, outer)| -> Result<()> {
            let row = run_outer_rep(g, *outer, config)?;
            let mut line = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            line.serialize(&row)?;
            let bytes = line.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            {
                let mut file = writers[&g.index].lock().expect("writer lock");
                file.write_all(&bytes)?;
                file.flush()?;
            }
            let done = done_counts[&g.index].fetch_add(1, Ordering::SeqCst) + 1;
            if let Some(progress) = control.progress {
                progress(g, &row, done);
            }
            Ok(())
        })
    })?;
    drop(writers);

    for g in &grid {
        let path = grid_file(dir, g);
        let mut rows = read_rows(&path)?;
        write_rows_sorted(&path, &mut rows)?;
    }

    Ok(RunOutcome {
        completed: limit,
        skipped,
        remaining,
    })
}

/// Every row in the result directory, ordered by grid index then `outer_rep`.
pub fn load_results(dir: &Path) -> Result<(Manifest, GridRows)> {
    let manifest = Manifest::read(dir).map_err(|e| match e {
        Error::Io(_) => Error::EmptyResults(dir.to_path_buf()),
        other => other,
    })?;
    let mut out = Vec::new();
    for g in &manifest.grid {
        let mut rows = read_rows(&grid_file(dir, g))?;
        rows.sort_by_key(|r| r.outer_rep);
        out.push((*g, rows));
    }
    Ok((manifest, out))
}
