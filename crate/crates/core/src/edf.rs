//! Classical EDF statistics (Kolmogorov–Smirnov, Cramér–von Mises,
//! Anderson–Darling) against the finite-N CDF.
//!
//! The sample is taken as given: the harness standardises it with the same
//! pipeline as the Stein test before calling in, and critical values come
//! from Monte Carlo calibration rather than asymptotic tables.

use serde::{Deserialize, Serialize};

use crate::dist::{FiniteNLaw, Sample};

/// Clamp applied to CDF values before the logarithms in `A²`.
pub const AD_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdfStatistics {
    /// `D_n`.
    pub ks: f64,
    /// `W²`.
    pub cvm: f64,
    /// `A²`.
    pub ad: f64,
}

/// All three statistics from one sorted pass.
pub fn edf_statistics(sample: &Sample, law: &FiniteNLaw) -> EdfStatistics {
    let mut xs = sample.values().to_vec();
    edf_statistics_in_place(&mut xs, law)
}

/// As [`edf_statistics`], sorting `xs` in place and overwriting it with the
/// CDF values.
pub fn edf_statistics_in_place(xs: &mut [f64], law: &FiniteNLaw) -> EdfStatistics {
    assert!(!xs.is_empty(), "EDF statistics need at least one observation");
    xs.sort_unstable_by(f64::total_cmp);
    for x in xs.iter_mut() {
        *x = law.cdf_unchecked(*x);
    }
    from_sorted_uniforms(xs)
}

/// Statistics from CDF values `u_1 ≤ … ≤ u_n`.
pub fn from_sorted_uniforms(u: &[f64]) -> EdfStatistics {
    let n = u.len();
    let nf = n as f64;
    let mut ks = 0.0f64;
    let mut cvm = 1.0 / (12.0 * nf);
    let mut ad = 0.0;
    for (idx, &ui) in u.iter().enumerate() {
        let i = (idx + 1) as f64;
        ks = ks.max(i / nf - ui).max(ui - (i - 1.0) / nf);
        let d = ui - (2.0 * i - 1.0) / (2.0 * nf);
        cvm += d * d;
        let lo = ui.clamp(AD_CLAMP, 1.0 - AD_CLAMP);
        let hi = u[n - 1 - idx].clamp(AD_CLAMP, 1.0 - AD_CLAMP);
        ad += (2.0 * i - 1.0) * (lo.ln() + (-hi).ln_1p());
    }
    EdfStatistics {
        ks,
        cvm,
        ad: -nf - ad / nf,
    }
}
