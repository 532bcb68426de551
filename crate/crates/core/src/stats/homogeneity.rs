use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{anova_oneway, median, variance, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomogeneityTest {
    #[default]
    BrownForsythe,
    Bartlett,
}

impl std::str::FromStr for HomogeneityTest {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brown_forsythe" => Ok(HomogeneityTest::BrownForsythe),
            "bartlett" => Ok(HomogeneityTest::Bartlett),
            _ => Err(format!("unknown homogeneity test `{s}`")),
        }
    }
}

fn check(groups: &[Vec<f64>]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::Precondition(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(StatsError::SampleTooSmall { n: g.len(), min: 2 });
    }
    Ok(())
}

pub fn homogeneity(groups: &[Vec<f64>], method: HomogeneityTest) -> Result<(f64, f64), StatsError> {
    match method {
        HomogeneityTest::BrownForsythe => brown_forsythe(groups),
        HomogeneityTest::Bartlett => bartlett(groups),
    }
}

/// Median-centred Levene test: one-way ANOVA on |x − median(group)|.
pub fn brown_forsythe(groups: &[Vec<f64>]) -> Result<(f64, f64), StatsError> {
    check(groups)?;
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = median(g);
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    let a = anova_oneway(&z)?;
    Ok((a.f, a.p))
}

/// Bartlett's χ² test for equal variances.
pub fn bartlett(groups: &[Vec<f64>]) -> Result<(f64, f64), StatsError> {
    check(groups)?;
    let k = groups.len() as f64;
    let vars: Vec<f64> = groups.iter().map(|g| variance(g)).collect();
    if vars.iter().any(|v| *v == 0.0) {
        return Err(StatsError::DegenerateInput("a group has zero variance".into()));
    }
    let dfs: Vec<f64> = groups.iter().map(|g| g.len() as f64 - 1.0).collect();
    let n_k: f64 = dfs.iter().sum();
    let pooled = dfs.iter().zip(&vars).map(|(d, v)| d * v).sum::<f64>() / n_k;
    let num = n_k * pooled.ln() - dfs.iter().zip(&vars).map(|(d, v)| d * v.ln()).sum::<f64>();
    let den = 1.0 + (dfs.iter().map(|d| 1.0 / d).sum::<f64>() - 1.0 / n_k) / (3.0 * (k - 1.0));
    let t = (num / den).max(0.0);
    let dist = ChiSquared::new(k - 1.0).expect("df > 0");
    Ok((t, dist.sf(t).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn groups() -> Vec<Vec<f64>> {
        vec![
            vec![2.0, 3.1, 4.5, 1.2, 3.3],
            vec![5.5, 1.0, 9.1, 2.2, 7.7, 0.4],
            vec![3.0, 3.2, 2.9, 3.1],
        ]
    }

    // scipy.stats.levene(center="median") and scipy.stats.bartlett
    #[test]
    fn reference_values() {
        let (f, p) = brown_forsythe(&groups()).unwrap();
        assert!((f - 12.377115626882839).abs() < 1e-10);
        assert!((p - 0.0012112768444546137).abs() < 1e-10);
        let (t, p) = bartlett(&groups()).unwrap();
        assert!((t - 17.1170739234515).abs() < 1e-10);
        assert!((p - 0.00019189984517991492).abs() < 1e-10);
    }

    #[test]
    fn identical_multisets() {
        let g = vec![vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0]];
        for m in [HomogeneityTest::BrownForsythe, HomogeneityTest::Bartlett] {
            let (s, p) = homogeneity(&g, m).unwrap();
            assert!(s.abs() < 1e-12);
            assert!(p >= 0.99);
        }
    }

    #[test]
    fn unequal_variances_detected() {
        let mut rng = crate::seed::rng(12);
        let a: Vec<f64> = (0..50).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let b: Vec<f64> = (0..50).map(|_| Normal::new(0.0, 10.0).unwrap().sample(&mut rng)).collect();
        for m in [HomogeneityTest::BrownForsythe, HomogeneityTest::Bartlett] {
            assert!(homogeneity(&[a.clone(), b.clone()], m).unwrap().1 < 0.001);
        }
    }

    #[test]
    fn constant_groups_are_degenerate() {
        let g = vec![vec![1.0, 1.0], vec![1.0, 1.0, 1.0]];
        for m in [HomogeneityTest::BrownForsythe, HomogeneityTest::Bartlett] {
            assert!(matches!(homogeneity(&g, m), Err(StatsError::DegenerateInput(_))));
        }
        assert!(brown_forsythe(&[vec![1.0], vec![2.0, 3.0]]).is_err());
    }
}
