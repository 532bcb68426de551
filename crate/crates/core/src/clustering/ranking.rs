use serde::{Deserialize, Serialize};

use super::{ClusterError, ClusterSolution};
use crate::domain::{Dataset, Scale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankStatistic {
    #[default]
    Mean,
    Median,
}

impl std::str::FromStr for RankStatistic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(RankStatistic::Mean),
            "median" => Ok(RankStatistic::Median),
            _ => Err(format!("unknown statistic `{s}`")),
        }
    }
}

fn statistic(mut v: Vec<f64>, stat: RankStatistic) -> f64 {
    if v.is_empty() {
        return f64::INFINITY;
    }
    match stat {
        RankStatistic::Mean => v.iter().sum::<f64>() / v.len() as f64,
        RankStatistic::Median => {
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 1 {
                v[m]
            } else {
                (v[m - 1] + v[m]) / 2.0
            }
        }
    }
}

/// `map[old] = new`: clusters sorted ascending by statistic, ties kept in
/// original label order.
pub fn relabel_map(stats: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[a].total_cmp(&stats[b]));
    let mut map = vec![0; stats.len()];
    for (new, &old) in order.iter().enumerate() {
        map[old] = new;
    }
    map
}

/// Relabels so cluster 0 has the lowest statistic of `values` (one per point).
pub fn rank_by_values(
    solution: &ClusterSolution,
    values: &[f64],
    stat: RankStatistic,
) -> Result<(ClusterSolution, Vec<usize>), ClusterError> {
    if values.len() != solution.labels.len() {
        return Err(ClusterError::LengthMismatch {
            labels: solution.labels.len(),
            points: values.len(),
        });
    }
    let mut per: Vec<Vec<f64>> = vec![Vec::new(); solution.k];
    for (&l, &v) in solution.labels.iter().zip(values) {
        per[l].push(v);
    }
    let stats: Vec<f64> = per.into_iter().map(|v| statistic(v, stat)).collect();
    let map = relabel_map(&stats);
    let mut out = solution.clone();
    out.labels = solution.labels.iter().map(|&l| map[l]).collect();
    for (old, &new) in map.iter().enumerate() {
        out.centroids.row_mut(new).assign(&solution.centroids.row(old));
    }
    Ok((out, map))
}

/// Ranks a keyed solution by an EDI scale looked up per (neighborhood, wave).
pub fn rank_labels(
    solution: &ClusterSolution,
    dataset: &Dataset,
    scale: Scale,
    stat: RankStatistic,
) -> Result<(ClusterSolution, Vec<usize>), ClusterError> {
    let values = solution
        .keys
        .iter()
        .map(|k| {
            dataset
                .record(&k.neighborhood, k.wave)
                .map(|r| r.value(scale))
                .ok_or_else(|| ClusterError::MissingScaleValue(format!("{}@{}", k.neighborhood, k.wave)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    rank_by_values(solution, &values, stat)
}
