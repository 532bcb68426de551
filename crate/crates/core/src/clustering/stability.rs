use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ClusterError, ClusterSolution};
use crate::domain::{NeighborhoodId, Wave};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub waves: Vec<Wave>,
    /// S-labels ordered by wave.
    pub trajectories: BTreeMap<NeighborhoodId, Vec<usize>>,
    pub transitions: BTreeMap<NeighborhoodId, usize>,
    /// Per-neighborhood A-label after the majority vote.
    pub a_labels: BTreeMap<NeighborhoodId, usize>,
    /// Mean transitions of the members of each A-cluster.
    pub a_cluster_instability: BTreeMap<usize, f64>,
}

fn wave_of(sol: &ClusterSolution) -> Result<Wave, ClusterError> {
    let waves: BTreeSet<Wave> = sol.keys.iter().map(|k| k.wave).collect();
    match waves.len() {
        1 => Ok(*waves.iter().next().expect("one wave")),
        _ => Err(ClusterError::KeyMismatch(format!(
            "a single-wave solution spans {} waves",
            waves.len()
        ))),
    }
}

/// Number of adjacent unequal pairs.
pub fn count_transitions(traj: &[usize]) -> usize {
    traj.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Per-wave S-label trajectories and their transition counts, grouped by
/// each neighborhood's A-label. A neighborhood's A-label is the most
/// frequent label among its pooled points; ties go to the label it carries in
/// the latest wave among the tied ones.
pub fn stability(s_solutions: &[ClusterSolution], a_solution: &ClusterSolution) -> Result<StabilityReport, ClusterError> {
    let mut per_wave: Vec<(Wave, &ClusterSolution)> =
        s_solutions.iter().map(|s| wave_of(s).map(|w| (w, s))).collect::<Result<_, _>>()?;
    per_wave.sort_by_key(|(w, _)| *w);
    let Some((_, first)) = per_wave.first() else {
        return Err(ClusterError::KeyMismatch("no single-wave solutions".into()));
    };
    let ids: BTreeSet<&NeighborhoodId> = first.keys.iter().map(|k| &k.neighborhood).collect();
    for (w, s) in &per_wave {
        let other: BTreeSet<&NeighborhoodId> = s.keys.iter().map(|k| &k.neighborhood).collect();
        if other != ids {
            return Err(ClusterError::KeyMismatch(format!("wave {w} has a different neighborhood set")));
        }
    }

    let mut trajectories: BTreeMap<NeighborhoodId, Vec<usize>> = BTreeMap::new();
    for (_, s) in &per_wave {
        for (k, &l) in s.keys.iter().zip(&s.labels) {
            trajectories.entry(k.neighborhood.clone()).or_default().push(l);
        }
    }
    let transitions: BTreeMap<NeighborhoodId, usize> = trajectories
        .iter()
        .map(|(id, t)| (id.clone(), count_transitions(t)))
        .collect();

    let mut pooled: BTreeMap<&NeighborhoodId, Vec<(Wave, usize)>> = BTreeMap::new();
    for (k, &l) in a_solution.keys.iter().zip(&a_solution.labels) {
        pooled.entry(&k.neighborhood).or_default().push((k.wave, l));
    }
    let mut a_labels = BTreeMap::new();
    for id in &ids {
        let Some(points) = pooled.get(id) else {
            return Err(ClusterError::KeyMismatch(format!("`{id}` is missing from the all-wave solution")));
        };
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, l) in points {
            *counts.entry(*l).or_default() += 1;
        }
        let top = *counts.values().max().expect("non-empty");
        let tied: BTreeSet<usize> = counts.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l).collect();
        let mut by_wave = points.clone();
        by_wave.sort_by(|a, b| b.0.cmp(&a.0));
        let label = by_wave.iter().map(|(_, l)| *l).find(|l| tied.contains(l)).expect("tied label present");
        a_labels.insert((*id).clone(), label);
    }

    let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (id, &a) in &a_labels {
        let e = sums.entry(a).or_default();
        e.0 += transitions[id] as f64;
        e.1 += 1.0;
    }
    let a_cluster_instability = sums.into_iter().map(|(a, (s, n))| (a, s / n)).collect();

    Ok(StabilityReport {
        waves: per_wave.iter().map(|(w, _)| *w).collect(),
        trajectories,
        transitions,
        a_labels,
        a_cluster_instability,
    })
}

/// `neighborhood,w2,w3,w4,w5,w6,transitions,a_label`; a wave without a
/// solution is left blank.
pub fn write_stability_csv<W: Write>(report: &StabilityReport, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["neighborhood", "w2", "w3", "w4", "w5", "w6", "transitions", "a_label"])?;
    for (id, traj) in &report.trajectories {
        let mut row = vec![id.0.clone()];
        for wave in Wave::all() {
            let cell = report
                .waves
                .iter()
                .position(|w| *w == wave)
                .map(|i| traj[i].to_string())
                .unwrap_or_default();
            row.push(cell);
        }
        row.push(report.transitions[id].to_string());
        row.push(report.a_labels[id].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::PointKey;
    use ndarray::Array2;

    fn sol(keys: Vec<PointKey>, labels: Vec<usize>, k: usize) -> ClusterSolution {
        ClusterSolution {
            centroids: Array2::zeros((k, 2)),
            labels,
            wcss: 0.0,
            k,
            restarts_used: 1,
            seed: 0,
            wcss_trace: vec![],
            keys,
            mode: None,
            method: None,
        }
    }

    fn key(n: &str, w: i64) -> PointKey {
        PointKey {
            neighborhood: NeighborhoodId::new(n),
            wave: Wave::new(w).unwrap(),
        }
    }

    /// Neighborhoods a, b in A-cluster 1 change S-label every wave;
    /// c, d in A-cluster 0 never change.
    fn fixture() -> (Vec<ClusterSolution>, ClusterSolution) {
        let traj = [("a", [0, 1, 0, 1, 0]), ("b", [2, 1, 2, 0, 1]), ("c", [0; 5]), ("d", [2; 5])];
        let s = (0..5)
            .map(|wi| {
                let keys = traj.iter().map(|(n, _)| key(n, wi as i64 + 2)).collect();
                let labels = traj.iter().map(|(_, t)| t[wi]).collect();
                sol(keys, labels, 3)
            })
            .collect();
        let mut keys = Vec::new();
        let mut labels = Vec::new();
        for (n, a) in [("a", 1), ("b", 1), ("c", 0), ("d", 0)] {
            for w in 2..=6 {
                keys.push(key(n, w));
                labels.push(a);
            }
        }
        (s, sol(keys, labels, 2))
    }

    #[test]
    fn transitions_and_instability() {
        assert_eq!(count_transitions(&[0, 0, 0, 0, 0]), 0);
        assert_eq!(count_transitions(&[0, 1, 2, 1, 0]), 4);
        let (s, a) = fixture();
        let r = stability(&s, &a).unwrap();
        assert_eq!(r.a_cluster_instability[&1], 4.0);
        assert_eq!(r.a_cluster_instability[&0], 0.0);
        assert!(r.transitions.values().all(|&t| t <= 4));
        let mut buf = Vec::new();
        write_stability_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("neighborhood,w2,w3,w4,w5,w6,transitions,a_label\na,0,1,0,1,0,4,1\n"));
    }

    #[test]
    fn majority_vote_tie_goes_to_latest_wave() {
        let (s, mut a) = fixture();
        // Neighborhood a: labels 3,3,2,2,5 -> tie between 3 and 2; latest tied is 2 (wave 5).
        for (i, l) in [3, 3, 2, 2, 5].into_iter().enumerate() {
            a.labels[i] = l;
        }
        a.k = 6;
        let r = stability(&s, &a).unwrap();
        assert_eq!(r.a_labels[&NeighborhoodId::new("a")], 2);
    }

    #[test]
    fn key_mismatch() {
        let (mut s, a) = fixture();
        s[2].keys[0] = key("zz", 4);
        assert!(matches!(stability(&s, &a), Err(ClusterError::KeyMismatch(_))));
    }
}
