use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::embedding::squared_distances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
    #[default]
    Ward,
}

impl FromStr for Linkage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            _ => Err(format!("unknown linkage `{s}`")),
        }
    }
}

/// Cluster ids below n are points; merge `i` creates id `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
}

/// Lance-Williams agglomeration on Euclidean distances. Ties between equal
/// distances go to the lexicographically smallest (a, b) id pair.
pub fn agglomerative(x: ArrayView2<f64>, linkage: Linkage) -> Result<Dendrogram, ClusterError> {
    let n = x.nrows();
    if n < 2 {
        return Err(ClusterError::TooFewPoints { n, min: 2 });
    }
    let total = 2 * n - 1;
    let base = squared_distances(x).mapv(f64::sqrt);
    let mut d = vec![vec![f64::INFINITY; total]; total];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = base[[i, j]];
        }
    }
    let mut size = vec![0usize; total];
    size[..n].fill(1);
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let v = d[a][b];
                if v < best.0 || (v == best.0 && (a, b) < (best.1, best.2)) {
                    best = (v, a, b);
                }
            }
        }
        let (h, a, b) = best;
        let new = n + step;
        size[new] = size[a] + size[b];
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &k in &active {
            if k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let (dka, dkb) = (d[k][a], d[k][b]);
            let v = match linkage {
                Linkage::Single => dka.min(dkb),
                Linkage::Complete => dka.max(dkb),
                Linkage::Average => (na * dka + nb * dkb) / (na + nb),
                Linkage::Ward => (((na + nk) * dka * dka + (nb + nk) * dkb * dkb - nk * h * h) / (na + nb + nk))
                    .max(0.0)
                    .sqrt(),
            };
            d[k][new] = v;
            d[new][k] = v;
        }
        active.retain(|&c| c != a && c != b);
        active.push(new);
        merges.push(Merge {
            a,
            b,
            height: h,
            size: size[new],
        });
    }
    Ok(Dendrogram { n, merges, linkage })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Flat labels from the first n−k merges, numbered by first appearance.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = dendrogram.n;
    if k == 0 || k > n {
        return Err(ClusterError::KExceedsN { k, n });
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    for (i, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let new = n + i;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = new;
        parent[rb] = new;
    }
    let mut seen = std::collections::BTreeMap::new();
    Ok((0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = seen.len();
            *seen.entry(root).or_insert(next)
        })
        .collect())
}
