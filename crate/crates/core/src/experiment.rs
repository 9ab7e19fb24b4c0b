//! Parameter sweeps over N, SINR threshold and SI level, with CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{db_to_linear, SimConfig};
use crate::engine::{run_simulation_timed, EngineError, EpochMetrics, RunSummary, Scheme};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("sweep spec: {0}")]
    Spec(String),
    #[error("{scheme} n={n_obus} seed={master_seed}: {source}")]
    Run {
        scheme: Scheme,
        n_obus: usize,
        master_seed: u64,
        source: EngineError,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("empty summary group {0}")]
    EmptyGroup(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub schemes: Vec<Scheme>,
    pub obus: Vec<usize>,
    pub sinr_threshold_db: Vec<f64>,
    /// Values of `-log10 β`.
    pub si_exp: Vec<f64>,
    pub replications: usize,
    /// Replication `r` runs with master seed `base_seed + r`.
    pub base_seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Measure game wall-clock time. Off keeps CSVs byte-reproducible.
    pub timing: bool,
    /// Also write per-epoch CSVs.
    pub epoch_csv: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            obus: vec![6, 8, 10, 12, 14],
            sinr_threshold_db: vec![20.0],
            si_exp: vec![8.0],
            replications: 200,
            base_seed: 1,
            out_dir: PathBuf::from("results"),
            jobs: 0,
            timing: false,
            epoch_csv: true,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let empty = |name: &str| Err(ExperimentError::Spec(format!("{name} list is empty")));
        if self.schemes.is_empty() {
            return empty("scheme");
        }
        if self.obus.is_empty() {
            return empty("obus");
        }
        if self.sinr_threshold_db.is_empty() {
            return empty("thmin-db");
        }
        if self.si_exp.is_empty() {
            return empty("si-exp");
        }
        if self.replications == 0 {
            return Err(ExperimentError::Spec("replications must be >= 1".into()));
        }
        Ok(())
    }

    /// Every `(scheme, point)` in output order.
    pub fn groups(&self) -> Vec<(Scheme, SweepPoint)> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &n_obus in &self.obus {
                for &th_min_db in &self.sinr_threshold_db {
                    for &si_exp in &self.si_exp {
                        out.push((
                            scheme,
                            SweepPoint {
                                n_obus,
                                th_min_db,
                                si_exp,
                            },
                        ));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n_obus: usize,
    pub th_min_db: f64,
    pub si_exp: f64,
}

impl SweepPoint {
    pub fn apply(&self, base: &SimConfig) -> SimConfig {
        SimConfig {
            n_obus: self.n_obus,
            sinr_threshold: db_to_linear(self.th_min_db),
            si_cancellation: 10f64.powf(-self.si_exp),
            ..base.clone()
        }
    }

    fn file_stem(&self, scheme: Scheme) -> String {
        format!("{scheme}_n{}_th{}_si{}", self.n_obus, self.th_min_db, self.si_exp)
    }
}

#[derive(Debug, Serialize)]
struct RunRow {
    scheme: &'static str,
    master_seed: u64,
    n_obus: usize,
    th_min_db: f64,
    si_exp: f64,
    final_mean_possessed: f64,
    mean_fairness: Option<f64>,
    total_switches: usize,
    total_game_wallclock_us: f64,
    total_deliveries: usize,
}

impl RunRow {
    fn new(s: &RunSummary, point: &SweepPoint) -> Self {
        Self {
            scheme: s.scheme.as_str(),
            master_seed: s.master_seed,
            n_obus: s.n_obus,
            th_min_db: point.th_min_db,
            si_exp: point.si_exp,
            final_mean_possessed: s.final_mean_possessed,
            mean_fairness: s.mean_fairness,
            total_switches: s.total_switches,
            total_game_wallclock_us: s.total_game_wallclock_us,
            total_deliveries: s.total_deliveries,
        }
    }
}

#[derive(Debug, Serialize)]
struct EpochRow {
    scheme: &'static str,
    master_seed: u64,
    n_obus: usize,
    th_min_db: f64,
    si_exp: f64,
    epoch_index: usize,
    start_slot: usize,
    mean_possessed: f64,
    fairness: Option<f64>,
    switches: usize,
    game_wallclock_s: f64,
    active_coalition_size: usize,
    broadcasters: usize,
    deliveries_this_epoch: usize,
}

impl EpochRow {
    fn new(e: &EpochMetrics, seed: u64, n_obus: usize, point: &SweepPoint) -> Self {
        Self {
            scheme: e.scheme.as_str(),
            master_seed: seed,
            n_obus,
            th_min_db: point.th_min_db,
            si_exp: point.si_exp,
            epoch_index: e.epoch_index,
            start_slot: e.start_slot,
            mean_possessed: e.mean_possessed,
            fairness: e.fairness,
            switches: e.switches,
            game_wallclock_s: e.game_wallclock_s,
            active_coalition_size: e.active_coalition_size,
            broadcasters: e.broadcasters,
            deliveries_this_epoch: e.deliveries_this_epoch,
        }
    }
}

/// Mean and standard error of one metric over a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

/// Sample mean and `s / sqrt(n)`; the error is 0 for a single sample.
pub fn mean_stderr(xs: &[f64]) -> Option<Stat> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let stderr = if xs.len() < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Some(Stat { mean, stderr })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub scheme: Scheme,
    pub point: SweepPoint,
    pub runs: usize,
    pub final_mean_possessed: Stat,
    /// Over runs that had at least one broadcasting epoch.
    pub mean_fairness: Option<Stat>,
    pub total_switches: Stat,
    pub total_game_wallclock_us: Stat,
}

impl GroupSummary {
    /// Possessed contents summed over all OBUs.
    pub fn total_possessed(&self) -> Stat {
        let n = self.point.n_obus as f64;
        Stat {
            mean: self.final_mean_possessed.mean * n,
            stderr: self.final_mean_possessed.stderr * n,
        }
    }
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    scheme: &'static str,
    n_obus: usize,
    th_min_db: f64,
    si_exp: f64,
    runs: usize,
    mean_possessed: f64,
    mean_possessed_stderr: f64,
    total_possessed: f64,
    total_possessed_stderr: f64,
    fairness: Option<f64>,
    fairness_stderr: Option<f64>,
    switches: f64,
    switches_stderr: f64,
    game_wallclock_us: f64,
    game_wallclock_us_stderr: f64,
}

impl From<&GroupSummary> for SummaryRow {
    fn from(g: &GroupSummary) -> Self {
        Self {
            scheme: g.scheme.as_str(),
            n_obus: g.point.n_obus,
            th_min_db: g.point.th_min_db,
            si_exp: g.point.si_exp,
            runs: g.runs,
            mean_possessed: g.final_mean_possessed.mean,
            mean_possessed_stderr: g.final_mean_possessed.stderr,
            total_possessed: g.total_possessed().mean,
            total_possessed_stderr: g.total_possessed().stderr,
            fairness: g.mean_fairness.map(|s| s.mean),
            fairness_stderr: g.mean_fairness.map(|s| s.stderr),
            switches: g.total_switches.mean,
            switches_stderr: g.total_switches.stderr,
            game_wallclock_us: g.total_game_wallclock_us.mean,
            game_wallclock_us_stderr: g.total_game_wallclock_us.stderr,
        }
    }
}

/// Per-group statistics over run summaries.
pub fn summarize(scheme: Scheme, point: SweepPoint, runs: &[RunSummary]) -> Result<GroupSummary, ExperimentError> {
    let col = |f: fn(&RunSummary) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let fair: Vec<f64> = runs.iter().filter_map(|r| r.mean_fairness).collect();
    let empty = || ExperimentError::EmptyGroup(point.file_stem(scheme));
    Ok(GroupSummary {
        scheme,
        point,
        runs: runs.len(),
        final_mean_possessed: mean_stderr(&col(|r| r.final_mean_possessed)).ok_or_else(empty)?,
        mean_fairness: mean_stderr(&fair),
        total_switches: mean_stderr(&col(|r| r.total_switches as f64)).ok_or_else(empty)?,
        total_game_wallclock_us: mean_stderr(&col(|r| r.total_game_wallclock_us)).ok_or_else(empty)?,
    })
}

/// Everything a sweep produced, in deterministic order.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub groups: Vec<GroupSummary>,
    pub runs: Vec<(Scheme, SweepPoint, Vec<RunSummary>)>,
    pub files: Vec<PathBuf>,
}

impl SweepResult {
    pub fn group(&self, scheme: Scheme, n_obus: usize, th_min_db: f64, si_exp: f64) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| {
            g.scheme == scheme && g.point.n_obus == n_obus && g.point.th_min_db == th_min_db && g.point.si_exp == si_exp
        })
    }
}

type Job = (usize, Scheme, SweepPoint, u64);

/// Runs every replication of every group and writes
/// `runs_<group>.csv`, optionally `epochs_<group>.csv`, and `summary.csv`.
/// On any error the files written so far are removed.
pub fn run_sweep(spec: &SweepSpec, base: &SimConfig) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let groups = spec.groups();
    for (_, point) in &groups {
        point.apply(base).validate().map_err(|e| {
            ExperimentError::Spec(format!(
                "n={} th={} si={}: {e}",
                point.n_obus, point.th_min_db, point.si_exp
            ))
        })?;
    }
    fs::create_dir_all(&spec.out_dir).map_err(|source| ExperimentError::Io {
        path: spec.out_dir.clone(),
        source,
    })?;

    let jobs: Vec<Job> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, &(scheme, point))| {
            (0..spec.replications as u64).map(move |r| (g, scheme, point, spec.base_seed + r))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let outputs = pool.install(|| {
        jobs.par_iter()
            .map(|&(_, scheme, point, seed)| {
                let cfg = SimConfig {
                    master_seed: seed,
                    ..point.apply(base)
                };
                run_simulation_timed(&cfg, scheme, 0, spec.timing).map_err(|source| ExperimentError::Run {
                    scheme,
                    n_obus: point.n_obus,
                    master_seed: seed,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut per_group: BTreeMap<usize, Vec<crate::engine::RunOutput>> = BTreeMap::new();
    for (job, out) in jobs.iter().zip(outputs) {
        per_group.entry(job.0).or_default().push(out);
    }

    let mut files = Vec::new();
    let written = write_outputs(spec, &groups, &per_group, &mut files);
    match written {
        Ok((summaries, runs)) => Ok(SweepResult {
            groups: summaries,
            runs,
            files,
        }),
        Err(e) => {
            for f in &files {
                let _ = fs::remove_file(f);
            }
            Err(e)
        }
    }
}

type Written = (Vec<GroupSummary>, Vec<(Scheme, SweepPoint, Vec<RunSummary>)>);

fn write_outputs(
    spec: &SweepSpec,
    groups: &[(Scheme, SweepPoint)],
    per_group: &BTreeMap<usize, Vec<crate::engine::RunOutput>>,
    files: &mut Vec<PathBuf>,
) -> Result<Written, ExperimentError> {
    let mut summaries = Vec::with_capacity(groups.len());
    let mut all_runs = Vec::with_capacity(groups.len());
    for (g, &(scheme, point)) in groups.iter().enumerate() {
        let outs = per_group.get(&g).map(Vec::as_slice).unwrap_or(&[]);
        let stem = point.file_stem(scheme);

        let path = spec.out_dir.join(format!("runs_{stem}.csv"));
        files.push(path.clone());
        write_csv(&path, outs.iter().map(|o| RunRow::new(&o.summary, &point)))?;

        if spec.epoch_csv {
            let path = spec.out_dir.join(format!("epochs_{stem}.csv"));
            files.push(path.clone());
            write_csv(
                &path,
                outs.iter().flat_map(|o| {
                    o.epochs
                        .iter()
                        .map(move |e| EpochRow::new(e, o.summary.master_seed, o.summary.n_obus, &point))
                }),
            )?;
        }

        let runs: Vec<RunSummary> = outs.iter().map(|o| o.summary.clone()).collect();
        summaries.push(summarize(scheme, point, &runs)?);
        all_runs.push((scheme, point, runs));
    }
    let path = spec.out_dir.join("summary.csv");
    files.push(path.clone());
    write_csv(&path, summaries.iter().map(SummaryRow::from))?;
    Ok((summaries, all_runs))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<(), ExperimentError> {
    let csv_err = |source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut any = false;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
        any = true;
    }
    if !any {
        return Err(ExperimentError::EmptyGroup(path.display().to_string()));
    }
    w.flush().map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}
