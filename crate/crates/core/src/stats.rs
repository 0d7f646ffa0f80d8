// SPDX-License-Identifier: MIT OR Apache-2.0

//! Welch's unequal-variance t-test with a self-contained Student t CDF
//! (regularized incomplete beta via Lentz's continued fraction).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    /// `None` when both samples have zero variance.
    pub t: Option<f64>,
    pub dof: Option<f64>,
    /// Two-sided p-value.
    pub p: Option<f64>,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Welch's t-test of `a` against `b` (t is positive when `a` has the larger mean).
pub fn welch(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "Welch's t-test needs at least two samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mean_a, var_a) = mean_var(a);
    let (mean_b, var_b) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (var_a / na, var_b / nb);
    let mut out = WelchResult {
        t: None,
        dof: None,
        p: None,
        mean_a,
        mean_b,
        n_a: a.len(),
        n_b: b.len(),
    };
    let se2 = qa + qb;
    if se2 <= 0.0 {
        return Ok(out);
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let dof = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    out.t = Some(t);
    out.dof = Some(dof);
    out.p = Some(two_sided_p(t, dof));
    Ok(out)
}

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
pub fn two_sided_p(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(x, dof / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Student's t cumulative distribution function.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * two_sided_p(t, dof);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
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

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn identical_samples_give_zero_t() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = welch(&a, &a).unwrap();
        assert_eq!(r.t, Some(0.0));
        assert_eq!(r.p, Some(1.0));
    }

    #[test]
    fn zero_variance_is_undefined() {
        let r = welch(&[2.0, 2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(r.t.is_none() && r.p.is_none());
        assert!(welch(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(5.0), 24f64.ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-13);
    }

    #[test]
    fn t_cdf_matches_statrs() {
        for &dof in &[1.0, 2.5, 4.41, 10.0, 37.2, 721.86] {
            let reference = StudentsT::new(0.0, 1.0, dof).unwrap();
            for &t in &[-6.0, -2.2, -0.41, 0.0, 0.3, 1.7, 3.9] {
                assert_abs_diff_eq!(student_t_cdf(t, dof), reference.cdf(t), epsilon = 1e-10);
            }
        }
    }
}
