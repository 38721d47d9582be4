//! Symmetric Jacobi polynomials `P_k^{(α,α)}`, the rescaled Stein operator
//! and the orthonormal Stein basis.
//!
//! On `[-1, 1]` with weight `w_α(y) ∝ (1 - y²)^α` the Stein operator
//! `(Ã g)(y) = (1 - y²) g'(y) - 2(α+1) y g(y)` sends the shifted polynomial
//! `g_k = P_{k-1}^{(α+1,α+1)}` to `-2k P_k^{(α,α)}`. Normalising by
//! `σ_k² = E_w[(Ã g_k)²]` gives the basis `ψ_k = -(2k/σ_k) P_k^{(α,α)}`,
//! orthonormal under `w_α`.
//!
//! Derivatives always go through `d/dy P_k^{(α,α)} = ((k+2α+1)/2) P_{k-1}^{(α+1,α+1)}`.

use std::f64::consts::{LN_2, PI};

use crate::dd::Dd;
use crate::dist::FiniteNLaw;
use crate::error::{config, domain, Result};
use crate::specfun::ln_gamma;

fn check_jacobi_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > -1.0 {
        Ok(())
    } else {
        Err(domain(format!("Jacobi parameter must exceed -1, got {alpha}")))
    }
}

fn check_basis_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("Stein basis parameter must be positive, got {alpha}")))
    }
}

/// Recurrence multipliers for `P_{k+1} = c1 y P_k - c2 P_{k-1}`.
#[inline]
fn recurrence(alpha: f64, k: f64) -> (f64, f64) {
    let denom = (k + 1.0) * (k + 2.0 * alpha + 1.0);
    let c1 = (2.0 * k + 2.0 * alpha + 1.0) * (k + alpha + 1.0) / denom;
    let c2 = (k + alpha) * (k + alpha + 1.0) / denom;
    (c1, c2)
}

/// `[P_0, …, P_{k_max}]` in double-double, from the undivided recurrence
/// `(k+1)(k+2α+1) P_{k+1} = (2k+2α+1)(k+α+1) y P_k - (k+α)(k+α+1) P_{k-1}`.
fn jacobi_dd(alpha: f64, k_max: usize, y: f64) -> Vec<Dd> {
    let a = Dd::from(alpha);
    let yd = Dd::from(y);
    let one = Dd::ONE;
    let two = Dd::from(2.0);
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(one);
    if k_max >= 1 {
        out.push((a + one) * yd);
    }
    for k in 1..k_max {
        let kd = Dd::from(k as f64);
        let ka = kd + a;
        let lead = (two * ka + one) * (ka + one);
        let lag = ka * (ka + one);
        let denom = (kd + one) * (kd + two * a + one);
        let next = (lead * yd * out[k] - lag * out[k - 1]) / denom;
        out.push(next);
    }
    out
}

/// Single value `P_k^{(α,α)}(y)`, correctly rounded in practice; no validation.
pub(crate) fn jacobi_value(alpha: f64, k: usize, y: f64) -> f64 {
    jacobi_dd(alpha, k, y)[k].to_f64()
}

/// `[P_0(y), …, P_{k_max}(y)]` for parameter `(α, α)`.
///
/// Any finite `y` is accepted; the polynomials are entire.
pub fn jacobi_eval_all(alpha: f64, k_max: usize, y: f64) -> Result<Vec<f64>> {
    check_jacobi_alpha(alpha)?;
    if !y.is_finite() {
        return Err(domain(format!("evaluation point must be finite, got {y}")));
    }
    Ok(jacobi_dd(alpha, k_max, y).into_iter().map(Dd::to_f64).collect())
}

/// `d/dy P_k^{(α,α)}(y)` by the derivative identity; zero for `k = 0`.
pub fn jacobi_deriv(alpha: f64, k: usize, y: f64) -> Result<f64> {
    check_jacobi_alpha(alpha)?;
    if k == 0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    Ok(0.5 * (kf + 2.0 * alpha + 1.0) * jacobi_value(alpha + 1.0, k - 1, y))
}

/// Second derivative, applying the derivative identity twice.
pub fn jacobi_second_deriv(alpha: f64, k: usize, y: f64) -> Result<f64> {
    check_jacobi_alpha(alpha)?;
    if k < 2 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let factor = 0.25 * (kf + 2.0 * alpha + 1.0) * (kf + 2.0 * alpha + 2.0);
    Ok(factor * jacobi_value(alpha + 2.0, k - 2, y))
}

/// `ln σ_k²`, entirely in log space.
fn ln_sigma_sq(alpha: f64, k: usize) -> f64 {
    let kf = k as f64;
    let ln_weight_norm = ln_gamma(alpha + 1.5) - 0.5 * PI.ln() - ln_gamma(alpha + 1.0);
    let ln_norm_sq = (2.0 * alpha + 1.0) * LN_2 - (2.0 * kf + 2.0 * alpha + 1.0).ln()
        + 2.0 * ln_gamma(kf + alpha + 1.0)
        - ln_gamma(kf + 1.0)
        - ln_gamma(kf + 2.0 * alpha + 1.0);
    (4.0 * kf * kf).ln() + ln_weight_norm + ln_norm_sq
}

/// Closed-form normaliser `σ_k` of the k-th Stein component.
pub fn sigma_k(alpha: f64, k: usize) -> Result<f64> {
    check_basis_alpha(alpha)?;
    if k == 0 {
        return Err(domain("sigma_k is defined for k >= 1"));
    }
    Ok((0.5 * ln_sigma_sq(alpha, k)).exp())
}

/// `(Ã g_k)(y) = (1 - y²) g_k'(y) - 2(α+1) y g_k(y)` with
/// `g_k = P_{k-1}^{(α+1,α+1)}`.
pub fn stein_apply_rescaled(alpha: f64, k: usize, y: f64) -> Result<f64> {
    check_basis_alpha(alpha)?;
    if k == 0 {
        return Err(domain("the shifted test functions start at k = 1"));
    }
    if !y.is_finite() {
        return Err(domain(format!("evaluation point must be finite, got {y}")));
    }
    // Evaluated in double-double so the result matches `-2k P_k` to rounding.
    let shifted = Dd::from(alpha) + Dd::ONE;
    let g = jacobi_dd(alpha + 1.0, k - 1, y)[k - 1];
    let dg = if k == 1 {
        Dd::from(0.0)
    } else {
        let factor = (Dd::from((k - 1) as f64) + Dd::from(2.0) * shifted + Dd::ONE) * Dd::from(0.5);
        factor * jacobi_dd(alpha + 2.0, k - 2, y)[k - 2]
    };
    let yd = Dd::from(y);
    let one_minus_sq = (Dd::ONE - yd) * (Dd::ONE + yd);
    Ok((one_minus_sq * dg - Dd::from(2.0) * shifted * yd * g).to_f64())
}

/// Finite-N Stein operator `(A_N f)(x) = (1 - x²/N) f'(x) - ((N-1)/N) x f(x)`
/// for caller-supplied `f(x)` and `f'(x)`.
pub fn stein_apply_unrescaled(law: &FiniteNLaw, f_value: f64, f_deriv: f64, x: f64) -> Result<f64> {
    let n = law.n_particles();
    if x.is_nan() || x.abs() > law.support_bound() {
        return Err(domain(format!(
            "|x| must not exceed √N = {}, got {x}",
            law.support_bound()
        )));
    }
    Ok((1.0 - x * x / n) * f_deriv - (n - 1.0) / n * x * f_value)
}

/// Orthonormal Stein basis `ψ_1..ψ_m` for one `α`, with precomputed
/// normalisers and recurrence coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiBasis {
    alpha: f64,
    max_order: usize,
    sigmas: Vec<f64>,
    /// `-2k / σ_k`, index `k - 1`.
    scales: Vec<f64>,
    /// `(c1, c2)` taking `P_k` to `P_{k+1}`, index `k`.
    rec: Vec<(f64, f64)>,
}

impl JacobiBasis {
    pub fn new(alpha: f64, max_order: usize) -> Result<Self> {
        check_basis_alpha(alpha)?;
        if max_order == 0 {
            return Err(config("basis order must be at least 1"));
        }
        let sigmas: Vec<f64> = (1..=max_order).map(|k| (0.5 * ln_sigma_sq(alpha, k)).exp()).collect();
        if let Some(bad) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(config(format!("non-finite normaliser {bad} for alpha={alpha}")));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config(format!("normalisers not increasing for alpha={alpha}")));
        }
        let scales = sigmas
            .iter()
            .enumerate()
            .map(|(i, s)| -2.0 * (i + 1) as f64 / s)
            .collect();
        let rec = (0..max_order).map(|k| recurrence(alpha, k as f64)).collect();
        Ok(Self {
            alpha,
            max_order,
            sigmas,
            scales,
            rec,
        })
    }

    /// Basis for `α = (N-3)/2`.
    pub fn for_law(law: &FiniteNLaw, max_order: usize) -> Result<Self> {
        Self::new(law.alpha(), max_order)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `σ_1..σ_m`.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn sigma(&self, k: usize) -> Result<f64> {
        self.check_order(k)?;
        Ok(self.sigmas[k - 1])
    }

    fn check_order(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.max_order {
            Err(domain(format!("mode {k} outside 1..={}", self.max_order)))
        } else {
            Ok(())
        }
    }

    /// `ψ_k(y) = -(2k/σ_k) P_k^{(α,α)}(y)`.
    pub fn psi_k(&self, k: usize, y: f64) -> Result<f64> {
        self.check_order(k)?;
        Ok(self.scales[k - 1] * jacobi_value(self.alpha, k, y))
    }

    /// Writes `ψ_1(y)..ψ_m(y)` into `out[0..m]`, where `m = out.len()` must not
    /// exceed the basis order.
    #[inline]
    #[allow(clippy::needless_range_loop)]
    pub fn psi_all_into(&self, y: f64, out: &mut [f64]) {
        let m = out.len();
        debug_assert!(m <= self.max_order);
        if m == 0 {
            return;
        }
        let mut prev = 1.0;
        let mut cur = (self.alpha + 1.0) * y;
        out[0] = self.scales[0] * cur;
        for k in 1..m {
            let (c1, c2) = self.rec[k];
            let next = c1 * y * cur - c2 * prev;
            prev = cur;
            cur = next;
            out[k] = self.scales[k] * cur;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `P_k^{(α,α)}(1) = C(k+α, k)`.
    fn endpoint(alpha: f64, k: usize) -> f64 {
        (ln_gamma(k as f64 + alpha + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma(alpha + 1.0)).exp()
    }

    #[test]
    fn eval_all_small_cases() {
        assert_eq!(jacobi_eval_all(2.0, 0, 0.3).unwrap(), vec![1.0]);
        let p = jacobi_eval_all(1.0, 1, 0.5).unwrap();
        assert_eq!(p[1], 1.0);
        let p = jacobi_eval_all(1.0, 2, 1.0).unwrap();
        assert!((p[2] - 3.0).abs() < 1e-15);
        for y in [-0.8, 0.1, 0.6] {
            let p = jacobi_eval_all(1.0, 2, y).unwrap();
            assert!((p[2] - (15.0 * y * y - 3.0) / 4.0).abs() < 1e-14);
        }
        assert!(jacobi_eval_all(-1.0, 3, 0.0).is_err());
        assert!(jacobi_eval_all(0.5, 3, f64::NAN).is_err());
    }

    #[test]
    fn endpoint_identity_and_parity() {
        for alpha in [-0.5, 0.0, 1.0, 3.5, 8.5] {
            let at_one = jacobi_eval_all(alpha, 12, 1.0).unwrap();
            for (k, v) in at_one.iter().enumerate() {
                let want = endpoint(alpha, k);
                assert!((v - want).abs() <= 1e-12 * want, "alpha={alpha} k={k}");
            }
            for y in [0.2, 0.7, 1.3] {
                let pos = jacobi_eval_all(alpha, 12, y).unwrap();
                let neg = jacobi_eval_all(alpha, 12, -y).unwrap();
                for k in 0..=12 {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    assert_eq!(neg[k], sign * pos[k]);
                }
            }
        }
    }

    #[test]
    fn derivative_identity_matches_finite_difference() {
        assert_eq!(jacobi_deriv(1.0, 0, 0.4).unwrap(), 0.0);
        for y in [-0.9, 0.0, 0.5, 1.0] {
            assert!((jacobi_deriv(2.5, 1, y).unwrap() - 3.5).abs() < 1e-15);
        }
        let h = 1e-5;
        for alpha in [1.0, 3.5] {
            for k in 1..=8 {
                for y in [-0.7, 0.5, 0.95] {
                    let fd = (jacobi_value(alpha, k, y + h) - jacobi_value(alpha, k, y - h)) / (2.0 * h);
                    let d = jacobi_deriv(alpha, k, y).unwrap();
                    assert!((fd - d).abs() <= 1e-7 * d.abs().max(1.0), "alpha={alpha} k={k} y={y}");
                }
            }
        }
        // Even-k derivatives are odd in y.
        for k in [2, 4, 6] {
            let a = jacobi_deriv(1.0, k, 0.3).unwrap();
            let b = jacobi_deriv(1.0, k, -0.3).unwrap();
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn sigma_matches_table_for_alpha_one() {
        let table = [
            1.7889, 3.2071, 4.3818, 5.3936, 6.2897, 7.0993, 7.8416, 8.5298, 9.1736, 9.7802,
        ];
        for (i, want) in table.iter().enumerate() {
            let got = sigma_k(1.0, i + 1).unwrap();
            assert!((got - want).abs() < 5e-5, "k={}: {got}", i + 1);
        }
        assert!((sigma_k(1.0, 1).unwrap() - 3.2f64.sqrt()).abs() < 1e-14);
        assert!(sigma_k(1.0, 0).is_err());
        assert!(sigma_k(0.0, 1).is_err());
    }

    #[test]
    fn sigma_finite_for_large_parameters() {
        for alpha in [50.0, 250.0, 500.0] {
            let basis = JacobiBasis::new(alpha, 200).unwrap();
            assert!(basis.sigmas().iter().all(|s| s.is_finite() && *s > 0.0));
        }
    }

    #[test]
    fn stein_action_examples() {
        assert_eq!(stein_apply_rescaled(2.0, 1, 0.0).unwrap(), 0.0);
        assert!((stein_apply_rescaled(1.0, 2, 1.0).unwrap() + 12.0).abs() < 1e-13);
        assert!(stein_apply_rescaled(1.0, 0, 0.5).is_err());
        assert!(stein_apply_rescaled(0.0, 1, 0.5).is_err());
    }

    #[test]
    fn unrescaled_operator_examples() {
        let law = FiniteNLaw::new(5.0).unwrap();
        for x in [-2.0, -0.5, 0.0, 1.7] {
            let got = stein_apply_unrescaled(&law, 1.0, 0.0, x).unwrap();
            assert!((got + 0.8 * x).abs() < 1e-15);
        }
        assert_eq!(stein_apply_unrescaled(&law, 0.0, 1.0, 0.0).unwrap(), 1.0);
        assert!(stein_apply_unrescaled(&law, 1.0, 1.0, 2.5).is_err());
        assert!(stein_apply_unrescaled(&law, 1.0, 1.0, 5f64.sqrt()).is_ok());
    }

    #[test]
    fn basis_psi_and_bulk_eval_agree() {
        let basis = JacobiBasis::new(3.5, 10).unwrap();
        assert_eq!(basis.psi_k(1, 0.0).unwrap(), 0.0);
        assert!(basis.psi_k(0, 0.1).is_err());
        assert!(basis.psi_k(11, 0.1).is_err());
        let mut out = [0.0; 10];
        for y in [-1.2, -0.4, 0.0, 0.33, 0.99] {
            basis.psi_all_into(y, &mut out);
            for k in 1..=10 {
                let single = basis.psi_k(k, y).unwrap();
                assert!((out[k - 1] - single).abs() <= 1e-13 * single.abs().max(1.0));
                let via_operator = stein_apply_rescaled(3.5, k, y).unwrap() / basis.sigma(k).unwrap();
                assert!((via_operator - single).abs() <= 1e-11 * single.abs().max(1.0));
            }
        }
        assert!(JacobiBasis::new(1.0, 0).is_err());
        assert!(JacobiBasis::new(-0.5, 4).is_err());
    }
}
