//! Simplified UMAP: exact k-NN graph, fuzzy union, seeded uniform
//! initialisation and the umap-learn SGD schedule with negative sampling.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{squared_distances, EmbeddingConfig, EmbeddingError, Projection};
use crate::seed;

const NEGATIVE_SAMPLES: usize = 5;
const CLIP: f64 = 4.0;
const SIGMA_TOL: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const CHECKPOINT: usize = 50;

/// Symmetric fuzzy membership matrix w + wᵀ − w∘wᵀ over the exact k-NN graph.
pub fn fuzzy_graph(x: ArrayView2<f64>, n_neighbors: usize) -> Array2<f64> {
    let n = x.nrows();
    let k = n_neighbors.min(n - 1);
    let d = squared_distances(x).mapv(f64::sqrt);
    let mean_all = d.sum() / (n * n) as f64;
    let mut w = Array2::<f64>::zeros((n, n));
    let target = (k as f64).log2();
    for i in 0..n {
        let mut nbrs: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (d[[i, j]], j)).collect();
        nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        nbrs.truncate(k);
        let rho = nbrs.iter().map(|p| p.0).find(|v| *v > 0.0).unwrap_or(0.0);
        let mut sigma = smooth_sigma(&nbrs, rho, target);
        let mean_i = nbrs.iter().map(|p| p.0).sum::<f64>() / k as f64;
        let floor = MIN_K_DIST_SCALE * if rho > 0.0 { mean_i } else { mean_all };
        if sigma < floor {
            sigma = floor;
        }
        for &(dist, j) in &nbrs {
            let v = if dist - rho <= 0.0 || sigma == 0.0 {
                1.0
            } else {
                (-(dist - rho) / sigma).exp()
            };
            w[[i, j]] = v;
        }
    }
    let wt = w.t().to_owned();
    &w + &wt - &w * &wt
}

fn smooth_sigma(nbrs: &[(f64, usize)], rho: f64, target: f64) -> f64 {
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..64 {
        let psum: f64 = nbrs
            .iter()
            .map(|(d, _)| {
                let e = d - rho;
                if e > 0.0 {
                    (-e / mid).exp()
                } else {
                    1.0
                }
            })
            .sum();
        if (psum - target).abs() < SIGMA_TOL {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_finite() { (lo + hi) / 2.0 } else { mid * 2.0 };
        }
    }
    mid
}

/// Fits 1/(1 + a·x^(2b)) to the offset-exponential target curve by
/// Levenberg-Marquardt least squares over 300 points in [0, 3·spread].
pub fn fit_curve(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let cost = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut c = cost(a, b);
    for _ in 0..1000 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (f, da, db) = if x == 0.0 {
                (1.0, 0.0, 0.0)
            } else {
                let p = x.powf(2.0 * b);
                let f = 1.0 / (1.0 + a * p);
                (f, -p * f * f, -a * p * 2.0 * x.ln() * f * f)
            };
            let r = f - y;
            let jrow = [da, db];
            for u in 0..2 {
                jtr[u] += jrow[u] * r;
                for v in 0..2 {
                    jtj[u][v] += jrow[u] * jrow[v];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let m = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let da = -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
            let db = -(m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det;
            let nc = cost(a + da, b + db);
            if nc.is_finite() && nc < c {
                let step = (da * da + db * db).sqrt();
                a += da;
                b += db;
                let rel = (c - nc) / c.max(f64::MIN_POSITIVE);
                c = nc;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if step < 1e-14 || rel < 1e-16 {
                    return (a, b);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

pub fn umap(x: ArrayView2<f64>, config: &EmbeddingConfig) -> Result<Projection, EmbeddingError> {
    let n = x.nrows();
    if n < 3 {
        return Err(EmbeddingError::TooFewPoints { n, min: 3 });
    }
    if config.n_neighbors < 2 {
        return Err(EmbeddingError::InvalidConfig("n_neighbors must be at least 2".into()));
    }
    if !(config.min_dist > 0.0) {
        return Err(EmbeddingError::InvalidConfig("min_dist must be positive".into()));
    }
    let epochs = config.epochs.max(1);
    let graph = fuzzy_graph(x, config.n_neighbors);
    let (a, b) = fit_curve(1.0, config.min_dist);

    let wmax = graph.iter().cloned().fold(0.0, f64::max);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = graph[[i, j]];
            if i != j && w > 0.0 && w >= wmax / epochs as f64 {
                edges.push((i, j, w));
            }
        }
    }
    let eps: Vec<f64> = edges.iter().map(|e| wmax / e.2).collect();
    let eps_neg: Vec<f64> = eps.iter().map(|e| e / NEGATIVE_SAMPLES as f64).collect();
    let mut next = eps.clone();
    let mut next_neg = eps_neg.clone();

    let mut rng = seed::rng(config.seed);
    let mut y = Array2::from_shape_fn((n, 2), |_| rng.random_range(-10.0..10.0));
    let mut trace = Vec::new();

    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next[e] > (epoch + 1) as f64 {
                continue;
            }
            let d2 = dist2(&y, i, j);
            if d2 > 0.0 {
                let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0);
                for c in 0..2 {
                    let g = clip(coeff * (y[[i, c]] - y[[j, c]]));
                    y[[i, c]] += g * alpha;
                    y[[j, c]] -= g * alpha;
                }
            }
            next[e] += eps[e];
            let n_neg = ((epoch + 1) as f64 - next_neg[e]) / eps_neg[e];
            let n_neg = n_neg.max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let d2 = dist2(&y, i, k);
                let coeff = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for c in 0..2 {
                    let g = if coeff > 0.0 { clip(coeff * (y[[i, c]] - y[[k, c]])) } else { CLIP };
                    y[[i, c]] += g * alpha;
                }
            }
            next_neg[e] += n_neg as f64 * eps_neg[e];
        }
        if (epoch + 1) % CHECKPOINT == 0 || epoch + 1 == epochs {
            trace.push((epoch + 1, cross_entropy(&graph, &y, a, b)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteGradient { iteration: epoch });
        }
    }
    let mut resolved = config.clone();
    resolved.n_neighbors = config.n_neighbors.min(n - 1);
    Ok(Projection {
        points: y,
        objective_trace: trace,
        config: resolved,
    })
}

fn dist2(y: &Array2<f64>, i: usize, j: usize) -> f64 {
    let dx = y[[i, 0]] - y[[j, 0]];
    let dy = y[[i, 1]] - y[[j, 1]];
    dx * dx + dy * dy
}

fn clip(v: f64) -> f64 {
    v.clamp(-CLIP, CLIP)
}

fn cross_entropy(graph: &Array2<f64>, y: &Array2<f64>, a: f64, b: f64) -> f64 {
    let n = y.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = graph[[i, j]];
            let q = (1.0 / (1.0 + a * dist2(y, i, j).powf(b))).clamp(1e-12, 1.0 - 1e-12);
            if w > 0.0 {
                s -= w * q.ln();
            }
            if w < 1.0 {
                s -= (1.0 - w) * (1.0 - q).ln();
            }
        }
    }
    s
}
