//! The finite-N velocity law `p_N`.
//!
//! With the normalisation `Σ v² = N` a single velocity component has density
//! `C_N (1 - x²/N)^α` on `(-√N, √N)`, where `α = (N-3)/2` and
//! `C_N = Γ(N/2) / (√(Nπ) Γ((N-1)/2))`. Rescaling `y = x/√N` turns it into the
//! symmetric Beta-type weight `(1 - y²)^α`, so `(1 + y)/2 ~ Beta(a, a)` with
//! `a = (N-1)/2`.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{domain, Result};
use crate::rng;
use crate::specfun::{inc_beta, ln_gamma, psi, std_normal_quantile};

/// The target law, parameterised by the effective particle number `N > 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteNLaw {
    n_particles: f64,
    alpha: f64,
    support_bound: f64,
    log_norm: f64,
}

impl FiniteNLaw {
    /// Builds the law for any real `N > 3`.
    pub fn new(n_particles: f64) -> Result<Self> {
        if !(n_particles.is_finite() && n_particles > 3.0) {
            return Err(domain(format!("particle number N must exceed 3, got {n_particles}")));
        }
        let log_norm =
            ln_gamma(n_particles / 2.0) - 0.5 * (n_particles * PI).ln() - ln_gamma((n_particles - 1.0) / 2.0);
        Ok(Self {
            n_particles,
            alpha: (n_particles - 3.0) / 2.0,
            support_bound: n_particles.sqrt(),
            log_norm,
        })
    }

    /// `N`.
    pub fn n_particles(&self) -> f64 {
        self.n_particles
    }

    /// Jacobi exponent `α = (N-3)/2`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `√N`; the density vanishes at `±√N`.
    pub fn support_bound(&self) -> f64 {
        self.support_bound
    }

    /// `ln C_N`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Shape `a = (N-1)/2` of the symmetric Beta law of `(1 + x/√N)/2`.
    pub fn beta_shape(&self) -> f64 {
        (self.n_particles - 1.0) / 2.0
    }

    /// `ln(1 - x²/N)`, or `-∞` outside the open support.
    #[inline]
    fn log_shape(&self, x: f64) -> f64 {
        let u = x / self.support_bound;
        if u.abs() >= 1.0 {
            f64::NEG_INFINITY
        } else {
            (-u).ln_1p() + u.ln_1p()
        }
    }

    /// `ln p_N(x)`; `-∞` for `|x| ≥ √N`.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        check_finite(x)?;
        let s = self.log_shape(x);
        Ok(if s == f64::NEG_INFINITY {
            s
        } else {
            self.log_norm + self.alpha * s
        })
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    /// `F(x) = I_z(a, a)` with `z = (1 + x/√N)/2`, clamped to 0 and 1 outside
    /// the support.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.cdf_unchecked(x))
    }

    #[inline]
    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        let u = x / self.support_bound;
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let a = self.beta_shape();
        inc_beta(a, a, 0.5 * (1.0 + u), 0.5 * (1.0 - u))
    }

    /// Inverse CDF on `(0, 1)`. Odd about `p = ½`: `quantile(p) = -quantile(1-p)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("quantile probability must lie in (0, 1), got {p}")));
        }
        if p == 0.5 {
            return Ok(0.0);
        }
        let tail = p.min(1.0 - p);
        let x = self.lower_tail_quantile(tail);
        Ok(if p < 0.5 { x } else { -x })
    }

    /// Solves `F(x) = q` for `q < ½` by safeguarded Newton on `[-√N, 0]`.
    fn lower_tail_quantile(&self, q: f64) -> f64 {
        let mut lo = -self.support_bound;
        let mut hi = 0.0;
        let mut x = std_normal_quantile(q).clamp(0.999 * lo, 0.0);
        for _ in 0..200 {
            let g = self.cdf_unchecked(x) - q;
            if g == 0.0 {
                return x;
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let pdf = (self.log_norm + self.alpha * self.log_shape(x)).exp();
            let mut next = x - g / pdf;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let scale = next.abs().max(1e-300);
            if (next - x).abs() <= 2.0 * f64::EPSILON * scale || hi - lo <= 2.0 * f64::EPSILON * lo.abs() {
                return next;
            }
            x = next;
        }
        x
    }

    /// Distribution object drawing `X = √N (2B - 1)`, `B ~ Beta(a, a)`, with
    /// `B` built from two Gamma(a, 1) variates.
    pub fn null_sampler(&self) -> NullSampler {
        NullSampler {
            gamma: Gamma::new(self.beta_shape(), 1.0).expect("shape (N-1)/2 exceeds 1 for N > 3"),
            bound: self.support_bound,
        }
    }

    /// `n` i.i.d. draws from `p_N`, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        check_size(n)?;
        let sampler = self.null_sampler();
        let mut rng = rng::seeded(seed);
        Ok(Sample((0..n).map(|_| sampler.sample(&mut rng)).collect()))
    }

    /// `n` i.i.d. standard normal draws in the same (unrescaled) units, so the
    /// shared `y = x/√N` map applies to both hypotheses. No clamping.
    pub fn sample_gaussian_alternative(&self, n: usize, seed: u64) -> Result<Sample> {
        check_size(n)?;
        let mut rng = rng::seeded(seed);
        Ok(Sample((0..n).map(|_| StandardNormal.sample(&mut rng)).collect()))
    }

    /// `n ln C_N + α Σ ln(1 - x_i²/N)`; `-∞` if any point is off the support.
    pub fn log_likelihood(&self, sample: &Sample) -> f64 {
        let mut acc = 0.0;
        for &x in sample.values() {
            let s = self.log_shape(x);
            if s == f64::NEG_INFINITY {
                return s;
            }
            acc += s;
        }
        sample.len() as f64 * self.log_norm + self.alpha * acc
    }

    /// `E_{p_N}[ln(1 - X²/N)] = ψ((N-1)/2) - ψ(N/2)`.
    fn expected_log_shape(&self) -> f64 {
        psi((self.n_particles - 1.0) / 2.0) - psi(self.n_particles / 2.0)
    }

    /// Closed-form `D_KL(p_N ‖ N(0,1)) = ln C_N + ½(1 + ln 2π) + α [ψ((N-1)/2) - ψ(N/2)]`.
    pub fn kl_to_gaussian(&self) -> f64 {
        self.log_norm + 0.5 * (1.0 + (2.0 * PI).ln()) + self.alpha * self.expected_log_shape()
    }

    /// `Λ^typ = exp(-n D_KL)`.
    pub fn typical_likelihood_ratio(&self, n: u64) -> f64 {
        (-(n as f64) * self.kl_to_gaussian()).exp()
    }

    /// `ln Λ^typ` through the explicit bracket
    /// `[√(N/2e) Γ((N-1)/2)/Γ(N/2) exp{-α(ψ((N-1)/2) - ψ(N/2))}]^n`,
    /// which never touches `C_N` or the KL expression.
    pub fn log_typical_likelihood_ratio_bracket(&self, n: u64) -> f64 {
        let nn = self.n_particles;
        let per_point = 0.5 * (nn / (2.0 * E)).ln() + ln_gamma((nn - 1.0) / 2.0)
            - ln_gamma(nn / 2.0)
            - self.alpha * self.expected_log_shape();
        n as f64 * per_point
    }

    /// Large-deviation power benchmark `1 - exp(-n D_KL)`.
    pub fn sanov_power_proxy(&self, n: u64) -> f64 {
        -(-(n as f64) * self.kl_to_gaussian()).exp_m1()
    }
}

/// Sampler for `p_N`; see [`FiniteNLaw::null_sampler`].
#[derive(Debug, Clone, Copy)]
pub struct NullSampler {
    gamma: Gamma<f64>,
    bound: f64,
}

impl Distribution<f64> for NullSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let g1 = self.gamma.sample(rng);
            let g2 = self.gamma.sample(rng);
            let total = g1 + g2;
            if total > 0.0 {
                // √N (2B - 1) with B = g1 / (g1 + g2)
                let x = self.bound * (g1 - g2) / total;
                if x.abs() < self.bound {
                    return x;
                }
            }
        }
    }
}

/// A nonempty sample of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_size(values.len())?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("sample values must be finite, found {bad}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Sample {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = crate::Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("argument must be finite, got {x}")))
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        Err(domain("sample size must be at least 1"))
    } else {
        Ok(())
    }
}
