use serde::{Deserialize, Serialize};

use super::ProbeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub p_value: f64,
    pub df_between: u64,
    pub df_within: u64,
    pub group_means: Vec<f64>,
}

/// One-way ANOVA. The p-value is the upper tail of F(df_between, df_within).
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult, ProbeError> {
    if groups.len() < 2 {
        return Err(ProbeError::DegenerateInput(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(ProbeError::DegenerateInput(format!(
            "group {i} has {} values, need at least 2",
            g.len()
        )));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ProbeError::DegenerateInput("non-finite value".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let group_means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ss_between: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = (k - 1) as u64;
    let df_within = (n - k) as u64;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;

    let (f_stat, p_value) = if ms_within == 0.0 {
        if ms_between == 0.0 {
            return Err(ProbeError::DegenerateInput("all values identical".into()));
        }
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        (f, f_upper_tail(f, df_between as f64, df_within as f64))
    };
    Ok(AnovaResult {
        f_stat,
        p_value,
        df_between,
        df_within,
        group_means,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// P(F > f) for F ~ F(d1, d2).
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + G + 0.5;
    let series = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// I_x(a, b) via the continued fraction (modified Lentz), using the symmetry
/// I_x(a,b) = 1 − I_{1−x}(b,a) where that converges faster.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 10_000;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!((r.df_between, r.df_within), (1, 4));
    }

    #[test]
    fn separated_groups_drive_p_to_zero() {
        let r =
            anova_oneway(&[vec![0.0, 1e-9, -1e-9], vec![10.0, 10.0 + 1e-9, 10.0 - 1e-9]]).unwrap();
        assert!(r.p_value < 1e-12, "{}", r.p_value);
        let r = anova_oneway(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!((r.f_stat, r.p_value), (f64::INFINITY, 0.0));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(anova_oneway(&[vec![3.0, 3.0], vec![3.0, 3.0]]).is_err());
    }

    #[test]
    fn gamma_and_beta_identities() {
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        // I_x(1, 1) = x; I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(2.5, 1.0, 0.4) - 0.4f64.powf(2.5)).abs() < 1e-14);
        // F(2, d2) tail has the closed form (1 + 2f/d2)^(-d2/2)
        let (f, d2) = (3.7, 11.0);
        assert!((f_upper_tail(f, 2.0, d2) - (1.0 + 2.0 * f / d2).powf(-d2 / 2.0)).abs() < 1e-13);
    }
}
