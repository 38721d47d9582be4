//! The targeted Stein/Jacobi goodness-of-fit test.
//!
//! Pipeline for one sample: optional location–scale standardisation in
//! x-units, rescaling `y = x/√N`, empirical coefficients
//! `μ̂_k = n^{-1/2} Σ_i ψ_k(y_i)` for each mode `k ∈ K`, statistic
//! `T = Σ_{k∈K} μ̂_k²`, and rejection when `T` exceeds the cutoff. Under the
//! null `T` is asymptotically χ² with `|K|` degrees of freedom.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist::{FiniteNLaw, Sample};
use crate::error::{config, domain, Error, Result};
use crate::jacobi::JacobiBasis;
use crate::specfun::{chi2_quantile, chi2_sf};

/// Default truncation order.
pub const DEFAULT_MAX_ORDER: usize = 4;
/// Default nominal size.
pub const DEFAULT_LEVEL: f64 = 0.05;
/// Smallest admissible truncation order.
pub const MIN_MAX_ORDER: usize = 4;

/// How nuisance location and scale are handled before the rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standardization {
    /// Use the sample in its given units; the null is fully specified.
    None,
    /// Centre and scale to zero mean and unit mean-of-squares (divisor `n`).
    #[default]
    LocationScale,
}

impl Standardization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Standardization::None => "none",
            Standardization::LocationScale => "location-scale",
        }
    }
}

impl std::str::FromStr for Standardization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Standardization::None),
            "location-scale" => Ok(Standardization::LocationScale),
            other => Err(config(format!(
                "unknown standardization '{other}' (expected none|location-scale)"
            ))),
        }
    }
}

/// Where the rejection threshold comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffSource {
    /// `(1 - level)` quantile of χ²_d.
    TheoreticalChi2,
    /// A threshold calibrated elsewhere (typically by Monte Carlo under the null).
    Calibrated(f64),
}

/// Test configuration: particle number, truncation, mode set, level and cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinTestConfig {
    n_particles: f64,
    max_order: usize,
    modes: Vec<usize>,
    level: f64,
    cutoff_source: CutoffSource,
    standardization: Standardization,
}

impl SteinTestConfig {
    /// Defaults: `m = 4`, `K = {4}`, level 0.05, χ² cutoff, location–scale
    /// standardisation.
    pub fn new(n_particles: f64) -> Result<Self> {
        FiniteNLaw::new(n_particles)?;
        Ok(Self {
            n_particles,
            max_order: DEFAULT_MAX_ORDER,
            modes: Self::even_modes(DEFAULT_MAX_ORDER)?,
            level: DEFAULT_LEVEL,
            cutoff_source: CutoffSource::TheoreticalChi2,
            standardization: Standardization::default(),
        })
    }

    /// The even-mode set `{4, 6, …, m}`.
    pub fn even_modes(max_order: usize) -> Result<Vec<usize>> {
        if max_order < MIN_MAX_ORDER {
            return Err(config(format!(
                "truncation order must be at least {MIN_MAX_ORDER}, got {max_order}"
            )));
        }
        Ok((4..=max_order).step_by(2).collect())
    }

    /// Sets `m` and resets the modes to the even set `{4, …, m}`.
    pub fn with_max_order(mut self, max_order: usize) -> Result<Self> {
        self.modes = Self::even_modes(max_order)?;
        self.max_order = max_order;
        Ok(self)
    }

    /// Sets an explicit mode set; it is stored in ascending order.
    pub fn with_modes(mut self, modes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut modes: Vec<usize> = modes.into_iter().collect();
        modes.sort_unstable();
        if modes.is_empty() {
            return Err(config("mode set must be nonempty"));
        }
        if modes[0] == 0 {
            return Err(config("modes start at 1"));
        }
        if modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(config("modes must be distinct"));
        }
        if let Some(&top) = modes.last() {
            if top > self.max_order {
                return Err(config(format!(
                    "mode {top} exceeds truncation order {}",
                    self.max_order
                )));
            }
        }
        self.modes = modes;
        Ok(self)
    }

    pub fn with_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(config(format!("level must lie in (0, 1), got {level}")));
        }
        self.level = level;
        Ok(self)
    }

    pub fn with_cutoff(mut self, cutoff_source: CutoffSource) -> Result<Self> {
        if let CutoffSource::Calibrated(c) = cutoff_source {
            if !(c.is_finite() && c > 0.0) {
                return Err(config(format!("calibrated cutoff must be positive, got {c}")));
            }
        }
        self.cutoff_source = cutoff_source;
        Ok(self)
    }

    pub fn with_standardization(mut self, standardization: Standardization) -> Self {
        self.standardization = standardization;
        self
    }

    pub fn n_particles(&self) -> f64 {
        self.n_particles
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn cutoff_source(&self) -> CutoffSource {
        self.cutoff_source
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    /// Degrees of freedom `d = |K|`.
    pub fn dof(&self) -> usize {
        self.modes.len()
    }

    pub fn law(&self) -> FiniteNLaw {
        FiniteNLaw::new(self.n_particles).expect("validated at construction")
    }

    /// Basis sized for this configuration.
    pub fn basis(&self) -> Result<JacobiBasis> {
        JacobiBasis::for_law(&self.law(), self.max_order)
    }

    /// `χ²_d` quantile at `1 - level`.
    pub fn theoretical_cutoff(&self) -> Result<f64> {
        chi2_quantile(self.dof(), 1.0 - self.level)
    }

    /// The threshold implied by `cutoff_source`.
    pub fn cutoff(&self) -> Result<f64> {
        match self.cutoff_source {
            CutoffSource::TheoreticalChi2 => self.theoretical_cutoff(),
            CutoffSource::Calibrated(c) => Ok(c),
        }
    }
}

/// Outcome of one test. Serialises with the field names
/// `statistic, dof, cutoff, p_value, reject, coefficients`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: usize,
    pub cutoff: f64,
    /// χ²_d survival probability at the statistic, reported even when the
    /// decision uses a calibrated cutoff.
    pub p_value: f64,
    pub reject: bool,
    /// `μ̂_k` keyed by mode.
    pub coefficients: BTreeMap<usize, f64>,
}

/// Zero mean, unit mean-of-squares (divisor `n`), as an affine map of the input.
pub fn standardize(sample: &Sample) -> Result<Sample> {
    let mut values = sample.values().to_vec();
    standardize_in_place(&mut values)?;
    Sample::new(values)
}

pub(crate) fn standardize_in_place(xs: &mut [f64]) -> Result<()> {
    let n = xs.len();
    if n < 2 {
        return Err(domain("standardization needs at least two observations"));
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let spread = xs.iter().fold(0.0f64, |m, &x| m.max((x - mean).abs()));
    let mean_sq = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / nf;
    // Spread at rounding level of the values counts as constant.
    let floor = 4.0 * f64::EPSILON * mean.abs().max(spread);
    if mean_sq.is_nan() || mean_sq <= 0.0 || spread <= floor {
        return Err(Error::DegenerateSample("sample has zero variance".into()));
    }
    let scale = mean_sq.sqrt().recip();
    for x in xs.iter_mut() {
        *x = (*x - mean) * scale;
    }
    Ok(())
}

/// Precomputed evaluator of `μ̂` and `T` for one configuration; shared by
/// [`run_test`] and the Monte Carlo harness.
#[derive(Debug, Clone)]
pub struct StatisticKernel {
    basis: JacobiBasis,
    modes: Vec<usize>,
    top: usize,
    inv_root_n_particles: f64,
    standardization: Standardization,
}

impl StatisticKernel {
    pub fn new(config: &SteinTestConfig) -> Result<Self> {
        Self::with_basis(config, config.basis()?)
    }

    /// Uses a caller-supplied basis, which must match `α = (N-3)/2` and cover
    /// every mode.
    pub fn with_basis(config: &SteinTestConfig, basis: JacobiBasis) -> Result<Self> {
        let alpha = (config.n_particles - 3.0) / 2.0;
        if (basis.alpha() - alpha).abs() > 1e-12 * alpha.max(1.0) {
            return Err(config_mismatch(format!(
                "basis alpha {} does not match (N-3)/2 = {alpha}",
                basis.alpha()
            )));
        }
        let top = *config.modes.last().expect("modes nonempty");
        if top > basis.max_order() {
            return Err(config_mismatch(format!(
                "basis order {} below highest mode {top}",
                basis.max_order()
            )));
        }
        Ok(Self {
            basis,
            modes: config.modes.clone(),
            top,
            inv_root_n_particles: config.n_particles.sqrt().recip(),
            standardization: config.standardization,
        })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Applies the configured standardisation in place.
    pub fn prepare(&self, xs: &mut [f64]) -> Result<()> {
        match self.standardization {
            Standardization::None => Ok(()),
            Standardization::LocationScale => standardize_in_place(xs),
        }
    }

    /// `μ̂_k` for each configured mode, on already prepared values.
    pub fn coefficients(&self, xs: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.top];
        let mut buf = vec![0.0; self.top];
        for &x in xs {
            self.basis.psi_all_into(x * self.inv_root_n_particles, &mut buf);
            for (s, b) in sums.iter_mut().zip(&buf) {
                *s += b;
            }
        }
        let norm = (xs.len() as f64).sqrt().recip();
        self.modes.iter().map(|&k| sums[k - 1] * norm).collect()
    }

    /// `T` on already prepared values.
    pub fn statistic(&self, xs: &[f64]) -> f64 {
        self.coefficients(xs).iter().map(|c| c * c).sum()
    }

    /// Prepare in place, then evaluate `T`.
    pub fn prepare_and_evaluate(&self, xs: &mut [f64]) -> Result<f64> {
        self.prepare(xs)?;
        Ok(self.statistic(xs))
    }
}

fn config_mismatch(msg: String) -> Error {
    config(msg)
}

/// Empirical coefficients `μ̂_k = n^{-1/2} Σ ψ_k(x_i/√N)` for `k ∈ K`.
///
/// The sample is used as given; run [`standardize`] first when location and
/// scale are nuisance parameters.
pub fn coefficients(sample: &Sample, config: &SteinTestConfig, basis: &JacobiBasis) -> Result<BTreeMap<usize, f64>> {
    let kernel = StatisticKernel::with_basis(config, basis.clone())?;
    let values = kernel.coefficients(sample.values());
    Ok(config.modes.iter().copied().zip(values).collect())
}

/// `T_{n,K} = Σ_{k∈K} μ̂_k²` on the sample as given.
pub fn statistic(sample: &Sample, config: &SteinTestConfig, basis: &JacobiBasis) -> Result<f64> {
    let kernel = StatisticKernel::with_basis(config, basis.clone())?;
    Ok(kernel.statistic(sample.values()))
}

/// Full test on a raw sample: standardisation (per configuration), statistic,
/// cutoff, p-value and decision.
pub fn run_test(sample: &Sample, config: &SteinTestConfig, basis: &JacobiBasis) -> Result<TestReport> {
    let kernel = StatisticKernel::with_basis(config, basis.clone())?;
    let mut xs = sample.values().to_vec();
    kernel.prepare(&mut xs)?;
    let coefs = kernel.coefficients(&xs);
    let statistic: f64 = coefs.iter().map(|c| c * c).sum();
    let cutoff = config.cutoff()?;
    let dof = config.dof();
    Ok(TestReport {
        statistic,
        dof,
        cutoff,
        p_value: chi2_sf(dof, statistic),
        reject: statistic > cutoff,
        coefficients: config.modes.iter().copied().zip(coefs).collect(),
    })
}
