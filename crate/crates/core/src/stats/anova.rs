use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use super::{mean, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: f64,
    pub df_within: f64,
}

/// Classical one-way ANOVA, F = MSB / MSW.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::Precondition(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(StatsError::SampleTooSmall { n: g.len(), min: 2 });
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let k = groups.len() as f64;
    let n = all.len() as f64;
    let ssb: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        })
        .sum();
    let (df_between, df_within) = (k - 1.0, n - k);
    if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(StatsError::DegenerateInput("zero within- and between-group variance".into()));
        }
        return Ok(Anova {
            f: f64::INFINITY,
            p: 0.0,
            df_between,
            df_within,
        });
    }
    let f = (ssb / df_between) / (ssw / df_within);
    let dist = FisherSnedecor::new(df_between, df_within).expect("positive df");
    Ok(Anova {
        f,
        p: dist.sf(f).clamp(0.0, 1.0),
        df_between,
        df_within,
    })
}

/// Average ranks (1-based) of the values, ties sharing their mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

/// Kruskal-Wallis H with tie correction; p from χ²(groups − 1).
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<(f64, f64), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::Precondition(format!("need at least 2 groups, got {}", groups.len())));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::Precondition("a group is empty".into()));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    if all.len() < 3 {
        return Err(StatsError::SampleTooSmall { n: all.len(), min: 3 });
    }
    let r = ranks(&all);
    let mut h = 0.0;
    let mut at = 0;
    for g in groups {
        let sum: f64 = r[at..at + g.len()].iter().sum();
        h += sum * sum / g.len() as f64;
        at += g.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let c = 1.0 - ties / (n * n * n - n);
    if c <= 0.0 {
        return Err(StatsError::AllValuesTied);
    }
    let h = (h / c).max(0.0);
    let dist = ChiSquared::new(groups.len() as f64 - 1.0).expect("df > 0");
    Ok((h, dist.sf(h).clamp(0.0, 1.0)))
}
