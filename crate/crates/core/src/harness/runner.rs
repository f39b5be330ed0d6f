//! Seeded execution of a sweep. Every (cell, seed) pair is an independent
//! task: its channels come from a counter-based substream of the master
//! seed, so results do not depend on the number of workers.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::config::{Cell, SweepSpec, SystemConfig};
use crate::channel::{draw_channel_set, fingerprint, substream, RANDOM_SCHEDULE_LANE};
use crate::error::{Error, Result};
use crate::evaluation::{Evaluator, ScenarioResult, SchemeKind};

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; 0 picks one per core.
    pub workers: usize,
    /// Record wall-clock times. Disable for byte-identical output.
    pub record_timing: bool,
    /// Print a progress line to stderr every this many tasks (0 = never).
    pub progress_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 0,
            record_timing: true,
            progress_every: 0,
        }
    }
}

/// One (cell, seed, scheme) outcome.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scenario_id: String,
    pub cell: usize,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub k: usize,
    pub k_prime: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub l_rx: usize,
    /// NaN when the scheme failed on this seed.
    pub min_unicast_sinr: f64,
    pub unicast_se: f64,
    pub min_multicast_sinr: f64,
    pub feasible: bool,
    pub ccp_iterations: usize,
    pub converged: bool,
    pub runtime_ms: f64,
    pub channel_fingerprint: u64,
    /// Why the scheme produced no beamformers, if it did not.
    pub error: Option<String>,
    /// Whether the failure describes the scenario rather than a fault.
    pub scenario_failure: bool,
}

impl ResultRow {
    pub fn metric_name(&self) -> &'static str {
        self.scheme.metric().map_or("", |m| m.name())
    }
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    pub cells: Vec<Cell>,
    pub schemes: Vec<SchemeKind>,
    /// Ordered by cell, then seed, then scheme as listed in the sweep.
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Rows that failed for reasons other than the scenario itself.
    pub fn faults(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.error.is_some() && !r.scenario_failure)
    }
}

fn row_for(
    cell: &Cell,
    seed: u64,
    scheme: SchemeKind,
    fp: u64,
    timing: bool,
    out: Result<ScenarioResult>,
) -> ResultRow {
    let cfg = &cell.config;
    let mut row = ResultRow {
        scenario_id: cell.scenario_id.clone(),
        cell: cell.index,
        seed,
        scheme,
        k: cfg.k,
        k_prime: cfg.k_prime,
        n_tx: cfg.n_tx,
        n_rx: cfg.n_rx,
        l_rx: cfg.l_rx,
        min_unicast_sinr: f64::NAN,
        unicast_se: f64::NAN,
        min_multicast_sinr: f64::NAN,
        feasible: false,
        ccp_iterations: 0,
        converged: false,
        runtime_ms: 0.0,
        channel_fingerprint: fp,
        error: None,
        scenario_failure: false,
    };
    match out {
        Ok(r) => {
            row.min_unicast_sinr = r.min_unicast_sinr;
            row.unicast_se = r.unicast_se;
            row.min_multicast_sinr = r.min_multicast_sinr();
            row.feasible = r.feasible;
            row.ccp_iterations = r.iterations;
            row.converged = r.converged;
            row.runtime_ms = if timing { r.runtime_ms } else { 0.0 };
        }
        Err(e) => {
            row.scenario_failure = e.is_scenario_failure();
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Runs every scheme of the sweep on one seed of one cell. All schemes see
/// the same channels and share solved subsets.
pub fn run_seed(
    cell: &Cell,
    seed: u64,
    schemes: &[SchemeKind],
    timing: bool,
) -> Result<Vec<ResultRow>> {
    let cfg: &SystemConfig = &cell.config;
    let channels = draw_channel_set(
        cfg.master_seed,
        seed,
        cfg.k,
        &cfg.geometry()?,
        cfg.paths,
        &cfg.angle_ranges(),
    )?;
    let fp = fingerprint(&channels);
    let mut ev = match Evaluator::new(&channels, cfg) {
        Ok(ev) => ev,
        Err(e) if e.is_scenario_failure() => {
            let msg = e.to_string();
            return Ok(schemes
                .iter()
                .map(|&s| {
                    let err = Error::SingularConfiguration(msg.clone());
                    row_for(cell, seed, s, fp, timing, Err(err))
                })
                .collect());
        }
        Err(e) => return Err(e),
    };
    Ok(schemes
        .iter()
        .map(|&scheme| {
            let mut rng = substream(cfg.master_seed, seed, RANDOM_SCHEDULE_LANE);
            let out = ev.run(scheme, &mut rng);
            row_for(cell, seed, scheme, fp, timing, out)
        })
        .collect())
}

/// Runs the sweep. Scenario failures and solver faults on a seed are
/// recorded in the table; only configuration errors abort.
pub fn run_experiment(
    cfg: &SystemConfig,
    sweep: &SweepSpec,
    opts: &RunOptions,
) -> Result<ResultTable> {
    cfg.validate()?;
    let cells = sweep.cells(cfg)?;
    let tasks: Vec<(usize, u64)> = cells
        .iter()
        .flat_map(|c| (0..c.config.n_seeds as u64).map(move |s| (c.index, s)))
        .collect();
    let done = AtomicUsize::new(0);
    let total = tasks.len();
    let work = || {
        tasks
            .par_iter()
            .map(|&(ci, seed)| {
                let out = run_seed(&cells[ci], seed, &sweep.schemes, opts.record_timing);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if opts.progress_every > 0 && (n % opts.progress_every == 0 || n == total) {
                    eprintln!("[{n}/{total}] {} seed {seed}", cells[ci].scenario_id);
                }
                out
            })
            .collect::<Result<Vec<Vec<ResultRow>>>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(work)?.into_iter().flatten().collect();
    Ok(ResultTable {
        cells,
        schemes: sweep.schemes.clone(),
        rows,
    })
}
