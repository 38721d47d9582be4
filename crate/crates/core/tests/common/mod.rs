//! Test-only oracles: composite Gauss–Legendre quadrature and an explicit
//! Jacobi sum, both independent of the library code paths.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite 20-point Gauss–Legendre over `panels` equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(mid + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

const PANELS: usize = 400;

/// `∫ (1 - x²/N)^α g(x) dx` over `(-√N, upper)` through `x = √N sin θ`,
/// without the normalising constant.
fn weighted(n_particles: f64, g: impl Fn(f64) -> f64, upper: f64) -> f64 {
    let alpha = (n_particles - 3.0) / 2.0;
    let r = n_particles.sqrt();
    let top = (upper / r).clamp(-1.0, 1.0).asin();
    integrate(
        |t| r * t.cos().powf(2.0 * alpha + 1.0) * g(r * t.sin()),
        -FRAC_PI_2,
        top,
        PANELS,
    )
}

/// Normalising constant of `p_N`, by quadrature.
pub fn norm_const(n_particles: f64) -> f64 {
    1.0 / weighted(n_particles, |_| 1.0, n_particles.sqrt())
}

/// `E[g(X)]` under `p_N`, by quadrature.
pub fn expect(n_particles: f64, g: impl Fn(f64) -> f64) -> f64 {
    norm_const(n_particles) * weighted(n_particles, g, n_particles.sqrt())
}

/// `P(X ≤ x)` under `p_N`, by quadrature.
pub fn cdf(n_particles: f64, x: f64) -> f64 {
    norm_const(n_particles) * weighted(n_particles, |_| 1.0, x)
}

/// `∫ p_N ln(p_N / φ)`, by quadrature.
pub fn kl(n_particles: f64) -> f64 {
    let c = norm_const(n_particles);
    let alpha = (n_particles - 3.0) / 2.0;
    let r = n_particles.sqrt();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let g = |t: f64| {
        let cos = t.cos();
        if cos <= 0.0 {
            return 0.0;
        }
        let x = r * t.sin();
        let weight = r * cos.powf(2.0 * alpha + 1.0);
        c * weight * (c.ln() + 2.0 * alpha * cos.ln() + 0.5 * x * x + half_log_2pi)
    };
    integrate(g, -FRAC_PI_2, FRAC_PI_2, PANELS)
}

/// Generalised binomial coefficient `C(z, j)`.
fn binom(z: f64, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (z - i as f64) / (j - i) as f64)
}

/// `P_k^{(α,α)}(y)` from the explicit finite sum.
pub fn jacobi_explicit(alpha: f64, k: usize, y: f64) -> f64 {
    let (a, b) = ((y - 1.0) / 2.0, (y + 1.0) / 2.0);
    (0..=k)
        .map(|s| {
            binom(k as f64 + alpha, k - s) * binom(k as f64 + alpha, s) * a.powi(s as i32) * b.powi((k - s) as i32)
        })
        .sum()
}

/// Minimal double-double for the reference side of exactness checks.
#[derive(Debug, Clone, Copy)]
pub struct D2(pub f64, pub f64);

impl D2 {
    pub fn new(x: f64) -> Self {
        D2(x, 0.0)
    }

    fn norm(s: f64, e: f64) -> Self {
        let hi = s + e;
        D2(hi, e - (hi - s))
    }

    pub fn add(self, o: D2) -> D2 {
        let s = self.0 + o.0;
        let v = s - self.0;
        let e = (self.0 - (s - v)) + (o.0 - v);
        D2::norm(s, e + self.1 + o.1)
    }

    pub fn mul(self, o: D2) -> D2 {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + self.0 * o.1 + self.1 * o.0;
        D2::norm(p, e)
    }

    pub fn div(self, o: D2) -> D2 {
        let q1 = self.0 / o.0;
        let r = self.add(o.mul(D2::new(-q1)));
        let q2 = r.0 / o.0;
        let r = r.add(o.mul(D2::new(-q2)));
        let q3 = r.0 / o.0;
        D2::norm(q1, q2).add(D2::new(q3))
    }

    pub fn value(self) -> f64 {
        self.0 + self.1
    }
}

/// `P_k^{(α,α)}(y)` from the explicit sum, in double-double.
pub fn jacobi_explicit_d2(alpha: f64, k: usize, y: f64) -> D2 {
    let binom = |j: usize| {
        (0..j).fold(D2::new(1.0), |acc, i| {
            acc.mul(D2::new(k as f64).add(D2::new(alpha)).add(D2::new(-(i as f64))))
                .div(D2::new((j - i) as f64))
        })
    };
    let a = D2::new(y).add(D2::new(-1.0)).mul(D2::new(0.5));
    let b = D2::new(y).add(D2::new(1.0)).mul(D2::new(0.5));
    let pow = |x: D2, e: usize| (0..e).fold(D2::new(1.0), |acc, _| acc.mul(x));
    (0..=k).fold(D2::new(0.0), |acc, s| {
        acc.add(binom(k - s).mul(binom(s)).mul(pow(a, s)).mul(pow(b, k - s)))
    })
}
