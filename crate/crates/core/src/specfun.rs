//! Scalar special functions.
//!
//! Everything downstream that involves Gamma ratios works with differences of
//! [`log_gamma`] rather than ratios of Γ, since the normalisers of the finite-N
//! law and of the Jacobi basis overflow in direct arithmetic for N in the
//! hundreds.

use std::f64::consts::LN_2;

use crate::error::{domain, Result};

/// ln √(2π)
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Stirling series coefficients B_{2k} / (2k (2k - 1)), k = 1..8.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Below this argument log-gamma is shifted upward before the Stirling series.
const STIRLING_MIN: f64 = 15.0;

/// Below this argument digamma is shifted upward before the asymptotic series.
const DIGAMMA_ASYMPTOTIC_MIN: f64 = 10.0;

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma argument", x)?;
    Ok(ln_gamma(x))
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x >= STIRLING_MIN {
        return stirling(x);
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < STIRLING_MIN {
        prod *= z;
        z += 1.0;
    }
    stirling(z) - prod.ln()
}

fn stirling(z: f64) -> f64 {
    let inv = z.recip();
    let inv2 = inv * inv;
    let mut series = 0.0;
    for c in STIRLING.iter().rev() {
        series = series * inv2 + c;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series * inv
}

/// `ln B(a, b)` via log-gamma differences.
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma argument", x)?;
    Ok(psi(x))
}

pub(crate) fn psi(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < DIGAMMA_ASYMPTOTIC_MIN {
        acc -= x.recip();
        x += 1.0;
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    check_positive("incomplete beta shape a", a)?;
    check_positive("incomplete beta shape b", b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("incomplete beta argument must lie in [0, 1], got {x}")));
    }
    Ok(inc_beta(a, b, x, 1.0 - x))
}

/// `I_x(a, b)` where the caller supplies the complement `y = 1 - x`, which may
/// carry more precision than `1.0 - x` would.
pub(crate) fn inc_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    if a == b {
        symmetric_inc_beta(a, x, y)
    } else {
        inc_beta_cf(a, b, x, y)
    }
}

/// `I_x(a, a) = ½ I_{4x(1-x)}(a, ½)` for `x ≤ ½`, reflected for `x > ½`.
///
/// Keeps `I_½(a, a) = ½` exact and avoids the slow continued fraction near the
/// centre of a symmetric law.
fn symmetric_inc_beta(a: f64, x: f64, y: f64) -> f64 {
    let w = 4.0 * x * y;
    let d = y - x;
    let half = 0.5 * inc_beta_cf(a, 0.5, w, d * d);
    if x <= y {
        half
    } else {
        1.0 - half
    }
}

fn inc_beta_cf(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, y) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let clamp = |v: f64| if v.abs() < CF_TINY { CF_TINY } else { v };

    let mut c = 1.0;
    let mut d = clamp(1.0 - qab * x / qap).recip();
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = clamp(1.0 + aa * d).recip();
        c = clamp(1.0 + aa / c);
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = clamp(1.0 + aa * d).recip();
        c = clamp(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized lower incomplete gamma function `P(s, x)`.
pub fn reg_inc_gamma_lower(s: f64, x: f64) -> Result<f64> {
    check_inc_gamma(s, x)?;
    Ok(inc_gamma(s, x).0)
}

/// Regularized upper incomplete gamma function `Q(s, x) = 1 - P(s, x)`,
/// computed without cancellation in the upper tail.
pub fn reg_inc_gamma_upper(s: f64, x: f64) -> Result<f64> {
    check_inc_gamma(s, x)?;
    Ok(inc_gamma(s, x).1)
}

fn check_inc_gamma(s: f64, x: f64) -> Result<()> {
    check_positive("incomplete gamma shape", s)?;
    if x.is_nan() || x < 0.0 {
        return Err(domain(format!(
            "incomplete gamma argument must be nonnegative, got {x}"
        )));
    }
    Ok(())
}

/// Returns `(P(s, x), Q(s, x))`.
pub(crate) fn inc_gamma(s: f64, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let ln_front = -x + s * x.ln() - ln_gamma(s);
    if x < s + 1.0 {
        let mut ap = s;
        let mut del = s.recip();
        let mut sum = del;
        for _ in 0..CF_MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        let p = sum * ln_front.exp();
        (p, 1.0 - p)
    } else {
        let clamp = |v: f64| if v.abs() < CF_TINY { CF_TINY } else { v };
        let mut b = x + 1.0 - s;
        let mut c = CF_TINY.recip();
        let mut d = b.recip();
        let mut h = d;
        for i in 1..=CF_MAX_ITER {
            let i = i as f64;
            let an = -i * (i - s);
            b += 2.0;
            d = clamp(an * d + b).recip();
            c = clamp(b + an / c);
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < CF_EPS {
                break;
            }
        }
        let q = ln_front.exp() * h;
        (1.0 - q, q)
    }
}

/// χ²_d cumulative distribution function.
pub fn chi2_cdf(dof: usize, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    inc_gamma(dof as f64 / 2.0, q / 2.0).0
}

/// χ²_d survival function `P(χ²_d > q)`.
pub fn chi2_sf(dof: usize, q: f64) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    inc_gamma(dof as f64 / 2.0, q / 2.0).1
}

fn chi2_ln_pdf(half_dof: f64, q: f64) -> f64 {
    (half_dof - 1.0) * q.ln() - 0.5 * q - half_dof * LN_2 - ln_gamma(half_dof)
}

/// Quantile of the χ²_d law: the `q` with `P(d/2, q/2) = p`.
///
/// Bracketed Newton iteration with a bisection fallback, started from the
/// Wilson–Hilferty approximation. The residual is measured on whichever tail
/// is smaller so upper quantiles keep full relative precision.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(domain("chi-squared degrees of freedom must be at least 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!(
            "chi-squared quantile probability must lie in (0, 1), got {p}"
        )));
    }
    let d = dof as f64;
    let k = d / 2.0;
    let upper = p > 0.5;
    // Signed residual, increasing in q.
    let residual = |q: f64| {
        let (lo, hi) = inc_gamma(k, q / 2.0);
        if upper {
            (1.0 - p) - hi
        } else {
            lo - p
        }
    };

    let z = std_normal_quantile(p);
    let c = 2.0 / (9.0 * d);
    let wh = d * (1.0 - c + z * c.sqrt()).powi(3);
    let mut q = if wh > 0.0 { wh } else { d * p.powf(1.0 / k).max(1e-300) };

    let mut lo = 0.0;
    let mut hi = q.max(1.0);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    if !(q > lo && q < hi) {
        q = 0.5 * (lo + hi);
    }

    for _ in 0..500 {
        let g = residual(q);
        if g == 0.0 {
            return Ok(q);
        }
        if g < 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        let step = g / chi2_ln_pdf(k, q).exp();
        let mut next = q - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - q).abs() <= 4.0 * f64::EPSILON * next || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        q = next;
    }
    Ok(q)
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9). Used for starting values only.
pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -std_normal_quantile(1.0 - p)
    }
}
