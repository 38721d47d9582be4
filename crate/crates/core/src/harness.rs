//! Reproducible Monte Carlo experiments.
//!
//! Every replication draws from its own substream (see [`crate::rng`]) keyed
//! by the master seed, a descriptor of the cell and the replication index.
//! Replications run on the ambient rayon pool and are collected in index
//! order, so results are bit-identical for any worker count.
//!
//! Within one evaluation cell the same simulated statistics are compared
//! against both the theoretical and the calibrated cutoff. Calibration and
//! evaluation always use disjoint streams.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{FiniteNLaw, NullSampler};
use crate::edf::edf_statistics_in_place;
use crate::error::{config, Error, Result};
use crate::rng::{CellKey, StreamFamily};
use crate::stein::{CutoffSource, Standardization, StatisticKernel, SteinTestConfig};

/// Smallest replication count accepted for calibration.
pub const MIN_CALIB_REPS: usize = 1000;
/// Paper-scale replication counts.
pub const PAPER_CALIB_REPS: usize = 50_000;
pub const PAPER_EVAL_REPS: usize = 20_000;
/// Desk-scale replication counts.
pub const DESK_CALIB_REPS: usize = 5_000;
pub const DESK_EVAL_REPS: usize = 2_000;

/// Guards the ceiling in the empirical-quantile rank against representation
/// error in `(1 - level)(R + 1)`.
const RANK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Data from `p_N`.
    H0,
    /// Standard Gaussian data.
    H1,
}

impl Hypothesis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        }
    }
}

impl std::str::FromStr for Hypothesis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h0" | "H0" => Ok(Hypothesis::H0),
            "h1" | "H1" => Ok(Hypothesis::H1),
            other => Err(config(format!("unknown hypothesis '{other}' (expected h0|h1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffKind {
    Theoretical,
    Calibrated,
}

impl CutoffKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CutoffKind::Theoretical => "theoretical",
            CutoffKind::Calibrated => "calibrated",
        }
    }
}

impl From<CutoffSource> for CutoffKind {
    fn from(src: CutoffSource) -> Self {
        match src {
            CutoffSource::TheoreticalChi2 => CutoffKind::Theoretical,
            CutoffSource::Calibrated(_) => CutoffKind::Calibrated,
        }
    }
}

/// One calibrated threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    #[serde(rename = "N")]
    pub n_particles: f64,
    pub n: usize,
    pub m: usize,
    pub modes: Vec<usize>,
    pub level: f64,
    pub cutoff: f64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    pub fn get(&self, n_particles: f64, n: usize, m: usize, level: f64) -> Option<&CalibrationEntry> {
        self.entries
            .iter()
            .find(|e| e.n_particles == n_particles && e.n == n && e.m == m && e.level == level)
    }
}

/// Rejection count for one (N, n, m, cutoff source, hypothesis) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    #[serde(rename = "N")]
    pub n_particles: f64,
    pub n: usize,
    pub m: usize,
    pub modes: Vec<usize>,
    pub cutoff_source: CutoffKind,
    pub hypothesis: Hypothesis,
    pub cutoff: f64,
    pub rejections: u64,
    pub rejection_rate: f64,
    pub reps: usize,
    pub seed: u64,
}

impl PowerRow {
    #[allow(clippy::too_many_arguments)]
    fn new(
        cfg: &SteinTestConfig,
        n: usize,
        kind: CutoffKind,
        hypothesis: Hypothesis,
        cutoff: f64,
        rejections: u64,
        reps: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_particles: cfg.n_particles(),
            n,
            m: cfg.max_order(),
            modes: cfg.modes().to_vec(),
            cutoff_source: kind,
            hypothesis,
            cutoff,
            rejections,
            rejection_rate: rejections as f64 / reps as f64,
            reps,
            seed,
        }
    }
}

/// Draws `buf.len()` values under `hypothesis`.
fn draw_into<R: Rng + ?Sized>(hypothesis: Hypothesis, sampler: &NullSampler, rng: &mut R, buf: &mut [f64]) {
    match hypothesis {
        Hypothesis::H0 => buf.iter_mut().for_each(|x| *x = sampler.sample(rng)),
        Hypothesis::H1 => buf.iter_mut().for_each(|x| *x = StandardNormal.sample(rng)),
    }
}

fn check_n(n: usize, standardization: Standardization) -> Result<()> {
    let min = match standardization {
        Standardization::None => 1,
        Standardization::LocationScale => 2,
    };
    if n < min {
        return Err(config(format!("sample size must be at least {min}, got {n}")));
    }
    Ok(())
}

fn stein_cell(role: &str, cfg: &SteinTestConfig, n: usize, hypothesis: Hypothesis) -> CellKey {
    CellKey::new("stein")
        .with_str(role)
        .with_str(hypothesis.as_str())
        .with_f64(cfg.n_particles())
        .with_u64(n as u64)
        .with_u64(cfg.max_order() as u64)
        .with_list(cfg.modes())
        .with_str(cfg.standardization().as_str())
}

/// `T` for each of `reps` samples, in replication order.
pub fn simulate_statistics(
    cfg: &SteinTestConfig,
    n: usize,
    hypothesis: Hypothesis,
    reps: usize,
    family: &StreamFamily,
) -> Result<Vec<f64>> {
    check_n(n, cfg.standardization())?;
    let kernel = StatisticKernel::new(cfg)?;
    let sampler = cfg.law().null_sampler();
    (0..reps as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, r| {
                let mut rng = family.stream(r);
                draw_into(hypothesis, &sampler, &mut rng, buf);
                kernel.prepare_and_evaluate(buf)
            },
        )
        .collect()
}

/// Empirical `(1 - level)` quantile: the order statistic at rank
/// `⌈(1 - level)(R + 1)⌉`, clamped to `1..=R`.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(config("no values to take a quantile of"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(config(format!("level must lie in (0, 1), got {level}")));
    }
    let r = values.len();
    let rank = (((1.0 - level) * (r as f64 + 1.0)) - RANK_SLACK).ceil() as usize;
    let rank = rank.clamp(1, r);
    let mut sorted = values.to_vec();
    let (_, v, _) = sorted.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

fn check_calib_reps(reps: usize) -> Result<()> {
    if reps < MIN_CALIB_REPS {
        return Err(config(format!(
            "calibration needs at least {MIN_CALIB_REPS} replications, got {reps}"
        )));
    }
    Ok(())
}

/// Monte Carlo critical value of `T` under the null for samples of size `n`.
pub fn calibrate(cfg: &SteinTestConfig, n: usize, reps: usize, seed: u64) -> Result<f64> {
    check_calib_reps(reps)?;
    let family = StreamFamily::new(seed, &stein_cell("calibrate", cfg, n, Hypothesis::H0));
    let stats = simulate_statistics(cfg, n, Hypothesis::H0, reps, &family)?;
    empirical_quantile(&stats, cfg.level())
}

/// As [`calibrate`], packaged as a table entry.
pub fn calibration_entry(cfg: &SteinTestConfig, n: usize, reps: usize, seed: u64) -> Result<CalibrationEntry> {
    Ok(CalibrationEntry {
        n_particles: cfg.n_particles(),
        n,
        m: cfg.max_order(),
        modes: cfg.modes().to_vec(),
        level: cfg.level(),
        cutoff: calibrate(cfg, n, reps, seed)?,
        reps,
        seed,
    })
}

fn count_above(stats: &[f64], cutoff: f64) -> u64 {
    stats.iter().filter(|&&t| t > cutoff).count() as u64
}

fn check_eval_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(config("evaluation needs at least one replication"));
    }
    Ok(())
}

/// Fraction of `reps` samples under `hypothesis` whose statistic exceeds the
/// cutoff implied by `cfg`.
pub fn estimate_rejection(
    cfg: &SteinTestConfig,
    n: usize,
    hypothesis: Hypothesis,
    reps: usize,
    seed: u64,
) -> Result<PowerRow> {
    check_eval_reps(reps)?;
    let cutoff = cfg.cutoff()?;
    let family = StreamFamily::new(seed, &stein_cell("evaluate", cfg, n, hypothesis));
    let stats = simulate_statistics(cfg, n, hypothesis, reps, &family)?;
    Ok(PowerRow::new(
        cfg,
        n,
        cfg.cutoff_source().into(),
        hypothesis,
        cutoff,
        count_above(&stats, cutoff),
        reps,
        seed,
    ))
}

/// The (N, n, m) grid of the size/power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_particles: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub orders: Vec<usize>,
    pub level: f64,
    pub calib_reps: usize,
    pub eval_reps: usize,
    pub master_seed: u64,
    /// Modes are always the even set `{4, …, m}`.
    pub standardization: Standardization,
}

impl Default for GridSpec {
    /// Full grid at paper-scale replication counts.
    fn default() -> Self {
        Self {
            n_particles: (5..=20).map(f64::from).collect(),
            sample_sizes: (10..=200).step_by(10).chain((250..=500).step_by(50)).collect(),
            orders: vec![4, 6, 8, 10],
            level: 0.05,
            calib_reps: PAPER_CALIB_REPS,
            eval_reps: PAPER_EVAL_REPS,
            master_seed: 0,
            standardization: Standardization::None,
        }
    }
}

impl GridSpec {
    /// Full grid at desk-scale replication counts.
    pub fn desk_scale() -> Self {
        Self {
            calib_reps: DESK_CALIB_REPS,
            eval_reps: DESK_EVAL_REPS,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles.is_empty() || self.sample_sizes.is_empty() || self.orders.is_empty() {
            return Err(config("grid axes must be nonempty"));
        }
        for &nn in &self.n_particles {
            FiniteNLaw::new(nn)?;
        }
        for &n in &self.sample_sizes {
            check_n(n, self.standardization)?;
        }
        for &m in &self.orders {
            SteinTestConfig::even_modes(m)?;
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        check_calib_reps(self.calib_reps)?;
        check_eval_reps(self.eval_reps)
    }

    fn config_for(&self, n_particles: f64, m: usize) -> Result<SteinTestConfig> {
        Ok(SteinTestConfig::new(n_particles)?
            .with_max_order(m)?
            .with_level(self.level)?
            .with_standardization(self.standardization))
    }

    /// Number of (N, n, m) cells.
    pub fn cell_count(&self) -> usize {
        self.n_particles.len() * self.sample_sizes.len() * self.orders.len()
    }
}

/// Rows and cutoffs from [`run_grid`]; `complete` is false when the run was
/// stopped early, in which case every row present is still valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<PowerRow>,
    pub calibration: CalibrationTable,
    pub complete: bool,
}

/// Early-stop conditions checked between cells.
#[derive(Debug, Default, Clone, Copy)]
pub struct GridControl<'a> {
    pub deadline: Option<Instant>,
    pub cancel: Option<&'a AtomicBool>,
}

impl GridControl<'_> {
    fn should_stop(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d) || self.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

/// Calibration entry and the four rows (theoretical/calibrated × H0/H1) of one
/// (N, n, m) cell.
pub fn run_cell(spec: &GridSpec, n_particles: f64, n: usize, m: usize) -> Result<(CalibrationEntry, Vec<PowerRow>)> {
    let base = spec.config_for(n_particles, m)?;
    let entry = calibration_entry(&base, n, spec.calib_reps, spec.master_seed)?;
    let theoretical = base.theoretical_cutoff()?;
    let mut rows = Vec::with_capacity(4);
    for hypothesis in [Hypothesis::H0, Hypothesis::H1] {
        let family = StreamFamily::new(spec.master_seed, &stein_cell("evaluate", &base, n, hypothesis));
        let stats = simulate_statistics(&base, n, hypothesis, spec.eval_reps, &family)?;
        for (kind, cutoff) in [
            (CutoffKind::Theoretical, theoretical),
            (CutoffKind::Calibrated, entry.cutoff),
        ] {
            rows.push(PowerRow::new(
                &base,
                n,
                kind,
                hypothesis,
                cutoff,
                count_above(&stats, cutoff),
                spec.eval_reps,
                spec.master_seed,
            ));
        }
    }
    Ok((entry, rows))
}

/// Runs the whole grid, N outermost and m innermost.
pub fn run_grid(spec: &GridSpec) -> Result<GridReport> {
    run_grid_with(spec, GridControl::default(), |_, _| Ok(()))
}

/// [`run_grid`] with early stopping and a sink that receives each finished
/// cell as soon as it is available.
pub fn run_grid_with<F>(spec: &GridSpec, control: GridControl<'_>, mut sink: F) -> Result<GridReport>
where
    F: FnMut(&CalibrationEntry, &[PowerRow]) -> Result<()>,
{
    spec.validate()?;
    let mut report = GridReport {
        rows: Vec::with_capacity(4 * spec.cell_count()),
        calibration: CalibrationTable::default(),
        complete: true,
    };
    for &nn in &spec.n_particles {
        for &n in &spec.sample_sizes {
            for &m in &spec.orders {
                if control.should_stop() {
                    report.complete = false;
                    return Ok(report);
                }
                let (entry, rows) = run_cell(spec, nn, n, m)?;
                sink(&entry, &rows)?;
                report.calibration.entries.push(entry);
                report.rows.extend(rows);
            }
        }
    }
    Ok(report)
}

/// `1 - exp(-n D_KL)` over `N × n`; rows follow `N`, columns follow `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanovTable {
    pub n_particles: Vec<f64>,
    pub sample_sizes: Vec<u64>,
    pub values: Vec<Vec<f64>>,
}

impl SanovTable {
    pub fn get(&self, n_particles: f64, n: u64) -> Option<f64> {
        let i = self.n_particles.iter().position(|&v| v == n_particles)?;
        let j = self.sample_sizes.iter().position(|&v| v == n)?;
        Some(self.values[i][j])
    }
}

pub fn sanov_table(n_particles: &[f64], sample_sizes: &[u64]) -> Result<SanovTable> {
    let values = n_particles
        .iter()
        .map(|&nn| {
            let law = FiniteNLaw::new(nn)?;
            Ok(sample_sizes.iter().map(|&n| law.sanov_power_proxy(n)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(SanovTable {
        n_particles: n_particles.to_vec(),
        sample_sizes: sample_sizes.to_vec(),
        values,
    })
}

/// Smallest `n` with `1 - exp(-n D_KL) ≥ target`, for each `N`.
pub fn power_boundary(n_particles: &[f64], target: f64) -> Result<Vec<(f64, u64)>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(config(format!("target power must lie in (0, 1), got {target}")));
    }
    n_particles
        .iter()
        .map(|&nn| {
            let law = FiniteNLaw::new(nn)?;
            let guess = (-(-target).ln_1p() / law.kl_to_gaussian()).ceil();
            if !guess.is_finite() || guess > u64::MAX as f64 / 2.0 {
                return Err(config(format!("power boundary for N={nn} is out of range")));
            }
            let mut n = (guess as u64).max(1);
            // Settle rounding in the closed form against the proxy itself.
            while n > 1 && law.sanov_power_proxy(n - 1) >= target {
                n -= 1;
            }
            while law.sanov_power_proxy(n) < target {
                n += 1;
            }
            Ok((nn, n))
        })
        .collect()
}

/// Stein-versus-EDF power comparison, all tests calibrated on the same null
/// samples with the same preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub n_particles: f64,
    pub sample_sizes: Vec<usize>,
    pub max_order: usize,
    pub level: f64,
    pub calib_reps: usize,
    pub eval_reps: usize,
    pub master_seed: u64,
    pub standardization: Standardization,
}

impl CompareSpec {
    /// Sample sizes of the large-system comparison with desk-scale replications.
    pub fn new(n_particles: f64) -> Self {
        Self {
            n_particles,
            sample_sizes: vec![1000, 2000, 5000],
            max_order: 4,
            level: 0.05,
            calib_reps: DESK_CALIB_REPS,
            eval_reps: DESK_EVAL_REPS,
            master_seed: 0,
            standardization: Standardization::None,
        }
    }

    fn validate(&self) -> Result<SteinTestConfig> {
        let cfg = SteinTestConfig::new(self.n_particles)?
            .with_max_order(self.max_order)?
            .with_level(self.level)?
            .with_standardization(self.standardization);
        if self.sample_sizes.is_empty() {
            return Err(config("sample sizes must be nonempty"));
        }
        for &n in &self.sample_sizes {
            check_n(n, self.standardization)?;
        }
        check_calib_reps(self.calib_reps)?;
        check_eval_reps(self.eval_reps)?;
        Ok(cfg)
    }
}

/// Names of the compared tests, in output order.
pub const COMPARE_TESTS: [&str; 4] = ["stein", "ks", "cvm", "ad"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub test: String,
    pub n: usize,
    pub calibrated_power: f64,
    pub null_rate: f64,
    pub cutoff: f64,
}

/// `[T, D_n, W², A²]` for each replication.
fn simulate_all(
    kernel: &StatisticKernel,
    law: &FiniteNLaw,
    n: usize,
    hypothesis: Hypothesis,
    reps: usize,
    family: &StreamFamily,
) -> Result<Vec<[f64; 4]>> {
    let sampler = law.null_sampler();
    (0..reps as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, r| {
                let mut rng = family.stream(r);
                draw_into(hypothesis, &sampler, &mut rng, buf);
                kernel.prepare(buf)?;
                let t = kernel.statistic(buf);
                let e = edf_statistics_in_place(buf, law);
                Ok([t, e.ks, e.cvm, e.ad])
            },
        )
        .collect()
}

fn compare_cell(role: &str, spec: &CompareSpec, n: usize, hypothesis: Hypothesis) -> CellKey {
    CellKey::new("compare")
        .with_str(role)
        .with_str(hypothesis.as_str())
        .with_f64(spec.n_particles)
        .with_u64(n as u64)
        .with_u64(spec.max_order as u64)
        .with_str(spec.standardization.as_str())
}

/// Four rows (stein, ks, cvm, ad) per sample size.
pub fn compare_edf(spec: &CompareSpec) -> Result<Vec<CompareRow>> {
    let cfg = spec.validate()?;
    let kernel = StatisticKernel::new(&cfg)?;
    let law = cfg.law();
    let mut rows = Vec::with_capacity(4 * spec.sample_sizes.len());
    for &n in &spec.sample_sizes {
        let seed = spec.master_seed;
        let calib = simulate_all(
            &kernel,
            &law,
            n,
            Hypothesis::H0,
            spec.calib_reps,
            &StreamFamily::new(seed, &compare_cell("calibrate", spec, n, Hypothesis::H0)),
        )?;
        let null = simulate_all(
            &kernel,
            &law,
            n,
            Hypothesis::H0,
            spec.eval_reps,
            &StreamFamily::new(seed, &compare_cell("evaluate", spec, n, Hypothesis::H0)),
        )?;
        let alt = simulate_all(
            &kernel,
            &law,
            n,
            Hypothesis::H1,
            spec.eval_reps,
            &StreamFamily::new(seed, &compare_cell("evaluate", spec, n, Hypothesis::H1)),
        )?;
        for (j, name) in COMPARE_TESTS.iter().enumerate() {
            let column: Vec<f64> = calib.iter().map(|s| s[j]).collect();
            let cutoff = empirical_quantile(&column, spec.level)?;
            let rate = |sims: &[[f64; 4]]| sims.iter().filter(|s| s[j] > cutoff).count() as f64 / sims.len() as f64;
            rows.push(CompareRow {
                test: (*name).to_string(),
                n,
                calibrated_power: rate(&alt),
                null_rate: rate(&null),
                cutoff,
            });
        }
    }
    Ok(rows)
}

/// Runs `f` on a dedicated pool with `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(config("worker count must be positive")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| config(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
