use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{mean, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalityTest {
    #[default]
    ShapiroWilk,
    AndersonDarling,
}

impl std::str::FromStr for NormalityTest {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shapiro_wilk" => Ok(NormalityTest::ShapiroWilk),
            "anderson_darling" => Ok(NormalityTest::AndersonDarling),
            _ => Err(format!("unknown normality test `{s}`")),
        }
    }
}

pub fn normality(sample: &[f64], method: NormalityTest) -> Result<(f64, f64), StatsError> {
    match method {
        NormalityTest::ShapiroWilk => shapiro_wilk(sample),
        NormalityTest::AndersonDarling => anderson_darling(sample),
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Shapiro-Wilk W and p by Royston's approximation (3 ≤ n ≤ 5000).
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64), StatsError> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];

    let n = sample.len();
    if n < 3 {
        return Err(StatsError::SampleTooSmall { n, min: 3 });
    }
    if n > 5000 {
        return Err(StatsError::Precondition(format!("Shapiro-Wilk supports n ≤ 5000, got {n}")));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] <= 0.0 {
        return Err(StatsError::DegenerateInput("all values identical".into()));
    }
    let an = n as f64;
    let half = n / 2;
    let std_normal = Normal::standard();

    // Coefficients for the lower half, as positive weights on x(n+1-i) − x(i).
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = 0.5f64.sqrt();
    } else {
        let m: Vec<f64> = (1..=half)
            .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            a[1] = a2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            (2, fac)
        } else {
            (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mu = mean(&x);
    let ssq: f64 = x.iter().map(|v| (v - mu).powi(2)).sum();
    let num: f64 = a.iter().enumerate().map(|(i, ai)| ai * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ssq).min(1.0);

    if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - 0.75f64.sqrt().asin());
        return Ok((w, p.clamp(0.0, 1.0)));
    }
    let w1 = (1.0 - w).max(f64::MIN_POSITIVE);
    let mut y = w1.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return Ok((w, 1e-99));
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let xx = an.ln();
        (poly(&C5, xx), poly(&C6, xx).exp())
    };
    Ok((w, std_normal.sf((y - m) / s).clamp(0.0, 1.0)))
}

/// Anderson-Darling A² for normality with mean and variance estimated.
/// The p-value uses the D'Agostino-Stephens formulas on the small-sample
/// adjusted A*² = A²(1 + 0.75/n + 2.25/n²).
pub fn anderson_darling(sample: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = sample.len();
    if n < 3 {
        return Err(StatsError::SampleTooSmall { n, min: 3 });
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let mu = mean(&x);
    let sd = (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(StatsError::DegenerateInput("all values identical".into()));
    }
    let std_normal = Normal::standard();
    let an = n as f64;
    let s: f64 = (0..n)
        .map(|i| {
            let lo = std_normal.cdf((x[i] - mu) / sd).ln();
            let hi = std_normal.sf((x[n - 1 - i] - mu) / sd).ln();
            (2.0 * i as f64 + 1.0) * (lo + hi)
        })
        .sum();
    let a2 = -an - s / an;
    let a = a2 * (1.0 + 0.75 / an + 2.25 / (an * an));
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    Ok((a2, p.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    const X20: [f64; 20] = [
        0.3, -1.2, 0.8, 1.9, -0.4, 0.05, 2.6, -2.1, 0.9, 1.1, -0.7, 0.2, 0.6, -1.5, 1.4, 0.0, -0.3, 3.9, -0.9, 0.45,
    ];

    // Reference values from scipy.stats.shapiro.
    #[test]
    fn shapiro_reference_values() {
        let cases: [(&[f64], f64, f64); 5] = [
            (&[2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 4.1, 3.9, 3.0], 0.9713906031045022, 0.9034305013349915),
            (&[1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689),
            (&[1.0, 1.5, 2.5, 2.7, 9.0], 0.7482529221287848, 0.028672574320813063),
            (&X20, 0.9724740466190935, 0.8060313200990061),
            (&[1.0, 1.5, 2.5, 2.7, 9.0, 3.0, 2.2, 1.1], 0.6878376527883778, 0.0016397276910271347),
        ];
        for (x, w, p) in cases {
            let (gw, gp) = shapiro_wilk(x).unwrap();
            assert!((gw - w).abs() < 1e-4, "W {gw} vs {w}");
            assert!((gp - p).abs() < 1e-4, "p {gp} vs {p}");
        }
    }

    // Reference values from statsmodels normal_ad.
    #[test]
    fn anderson_reference_values() {
        let (a, p) = anderson_darling(&X20).unwrap();
        assert!((a - 0.21857386444505522).abs() < 1e-10);
        assert!((p - 0.8129409844369622).abs() < 1e-10);
        let (a, p) = anderson_darling(&[1.0, 1.5, 2.5, 2.7, 9.0, 3.0, 2.2, 1.1]).unwrap();
        assert!((a - 1.0920993301544648).abs() < 1e-10);
        assert!((p - 0.003291119956566).abs() < 1e-10);
    }

    #[test]
    fn too_small_and_constant() {
        for m in [NormalityTest::ShapiroWilk, NormalityTest::AndersonDarling] {
            assert_eq!(normality(&[1.0, 2.0], m), Err(StatsError::SampleTooSmall { n: 2, min: 3 }));
            assert!(matches!(normality(&[3.0; 6], m), Err(StatsError::DegenerateInput(_))));
        }
    }

    /// Nominal 1% rejection over 1000 seeded samples. The bound is the
    /// binomial mean plus three standard deviations (10 + 3·3.15).
    #[test]
    fn gaussian_samples_rarely_rejected() {
        for m in [NormalityTest::ShapiroWilk, NormalityTest::AndersonDarling] {
            let mut rejected = 0;
            for s in 0..1000 {
                let mut rng = crate::seed::rng(s);
                let x: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
                if normality(&x, m).unwrap().1 <= 0.01 {
                    rejected += 1;
                }
            }
            assert!(rejected <= 20, "{m:?}: {rejected}");
        }
    }

    #[test]
    fn gross_outlier_detected() {
        let mut rng = crate::seed::rng(1);
        let mut x: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        x[17] = 100.0;
        for m in [NormalityTest::ShapiroWilk, NormalityTest::AndersonDarling] {
            assert!(normality(&x, m).unwrap().1 < 0.001);
        }
    }

    #[test]
    fn p_monotone_in_w() {
        let mut pairs: Vec<(f64, f64)> = (0..200)
            .map(|s| {
                let mut rng = crate::seed::rng(s);
                let x: Vec<f64> = (0..25).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| v.powi(3)).collect();
                shapiro_wilk(&x).unwrap()
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
    }
}
