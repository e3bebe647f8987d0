//! Special functions behind the hypothesis tests: log-gamma, the regularized
//! incomplete gamma pair, normal and chi-square tails, and Gauss–Legendre
//! nodes for the synthetic-data oracle.

use crate::error::{Error, Result};

const MAX_ITER: usize = 5000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn check_domain(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !(x >= 0.0) || !a.is_finite() || x.is_nan() {
        return Err(Error::InvalidConfig(format!(
            "incomplete gamma requires a > 0, x >= 0 (a = {a}, x = {x})"
        )));
    }
    Ok(())
}

fn log_prefactor(a: f64, x: f64) -> f64 {
    -x + a * x.ln() - ln_gamma(a)
}

/// P(a, x) by its power series. Converges for every x but needs O(x) terms.
pub fn gamma_p_series(a: f64, x: f64) -> Result<f64> {
    check_domain(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok((log_prefactor(a, x) + sum.ln()).exp().min(1.0));
        }
    }
    Err(Error::InvalidConfig(format!(
        "incomplete gamma series did not converge (a = {a}, x = {x})"
    )))
}

/// Q(a, x) by the Legendre continued fraction (modified Lentz).
/// Converges for x > 0; slowly when x is much smaller than a.
pub fn gamma_q_continued_fraction(a: f64, x: f64) -> Result<f64> {
    check_domain(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    if d.abs() > 1.0 / TINY || !d.is_finite() {
        d = 1.0 / TINY;
    }
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok((log_prefactor(a, x) + h.ln()).exp().min(1.0));
        }
    }
    Err(Error::InvalidConfig(format!(
        "incomplete gamma continued fraction did not converge (a = {a}, x = {x})"
    )))
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check_domain(a, x)?;
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        Ok(1.0 - gamma_q_continued_fraction(a, x)?)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x).
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check_domain(a, x)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_p_series(a, x)?)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

/// Upper tail of the chi-square distribution, P(X > x).
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof / 2.0, x / 2.0).expect("chi-square tail on valid domain")
}

/// P(Z > z) for a standard normal Z, via erfc(t) = Q(1/2, t²).
pub fn normal_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let q = gamma_q(0.5, 0.5 * z * z).expect("normal tail on valid domain");
    if z >= 0.0 {
        0.5 * q
    } else {
        1.0 - 0.5 * q
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

/// Two-sided normal p-value 2(1 − Φ(|z|)).
pub fn normal_two_sided(z: f64) -> f64 {
    gamma_q(0.5, 0.5 * z * z).expect("normal tail on valid domain")
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
