//! Group-difference tests for census screening and the linear correlation
//! used when linking enrollment to EDI scales.

mod anova;
mod homogeneity;
mod normality;
mod screen;

pub use anova::{anova_oneway, kruskal_wallis, ranks, Anova};
pub use homogeneity::{bartlett, brown_forsythe, homogeneity, HomogeneityTest};
pub use normality::{anderson_darling, normality, shapiro_wilk, NormalityTest};
pub use screen::{
    benjamini_hochberg, screen, suggest_variables, write_screening_csv, Correction, ScreeningConfig, TestUsed,
    VariableTestResult,
};

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::domain::NeighborhoodId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("all values are tied")]
    AllValuesTied,
    #[error("sample of {n} is too small (need at least {min})")]
    SampleTooSmall { n: usize, min: usize },
    #[error("{0}")]
    Precondition(String),
    #[error("input is constant")]
    ConstantInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("neighborhood `{0}` has a cluster label but no census profile")]
    LabelWithoutProfile(NeighborhoodId),
    #[error("no screening run is available")]
    NoRunAvailable,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (n − 1 denominator).
pub(crate) fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub(crate) fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Pearson correlation with the two-sided t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::SampleTooSmall { n, min: 3 });
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    if r.abs() == 1.0 {
        return Ok((r, 0.0));
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    Ok((r, (2.0 * dist.sf(t.abs())).min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const PX: [f64; 20] = [
        3.0, 7.0, 1.0, 9.0, 4.0, 6.0, 2.0, 8.0, 5.0, 10.0, 11.0, 15.0, 13.0, 12.0, 14.0, 20.0, 17.0, 16.0, 19.0, 18.0,
    ];
    const PY: [f64; 20] = [
        2.5, 6.1, 1.9, 7.7, 4.2, 4.9, 3.3, 9.0, 4.4, 8.8, 10.1, 13.2, 12.9, 10.0, 15.5, 17.1, 14.2, 16.8, 15.0, 19.9,
    ];

    #[test]
    fn pearson_reference_values() {
        // scipy.stats.pearsonr
        let (r, p) = pearson(&PX, &PY).unwrap();
        assert!((r - 0.9638661292873456).abs() < 1e-12);
        assert!((p - 8.7468339970459e-12).abs() < 1e-10);
    }

    #[test]
    fn pearson_edges() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(pearson(&x, &y).unwrap(), (1.0, 0.0));
        assert_eq!(pearson(&x, &[2.0; 4]), Err(StatsError::ConstantInput));
        assert!(matches!(pearson(&x, &y[..3]), Err(StatsError::LengthMismatch(4, 3))));
    }

    #[test]
    fn helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 1.0);
    }
}
