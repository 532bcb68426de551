//! Exact t-SNE (van der Maaten & Hinton, 2008) with the usual optimiser
//! schedule: early exaggeration, momentum switch and per-parameter gains.

use ndarray::{Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{
    default_learning_rate, default_perplexity, pca::principal_axes, squared_distances, EmbeddingConfig,
    EmbeddingError, Init, Projection,
};
use crate::seed;

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const ENTROPY_TOL: f64 = 1e-5;
const CHECKPOINT: usize = 50;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

/// Row-conditional Gaussian affinities p(j|i) whose Shannon entropy (nats)
/// matches ln(perplexity). Returns the matrix and the achieved entropies.
pub fn conditional_affinities(d2: &Array2<f64>, perplexity: f64) -> (Array2<f64>, Vec<f64>) {
    let n = d2.nrows();
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| bisect_row(d2.row(i).as_slice().expect("contiguous"), i, target))
        .collect();
    let mut p = Array2::zeros((n, n));
    let mut entropies = Vec::with_capacity(n);
    for (i, (row, h)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            p[[i, j]] = v;
        }
        entropies.push(h);
    }
    (p, entropies)
}

fn row_at(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    // Shift by the smallest off-diagonal distance so exp never underflows to
    // an all-zero row.
    let dmin = d
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, v) in d.iter().enumerate() {
        out[j] = if j == i { 0.0 } else { (-(v - dmin) * beta).exp() };
        sum += out[j];
    }
    let mut h = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        if j == i {
            continue;
        }
        *o /= sum;
        if *o > 0.0 {
            h -= *o * o.ln();
        }
    }
    h
}

fn bisect_row(d: &[f64], i: usize, target: f64) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; d.len()];
    let mut beta = 1.0;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut h = row_at(d, i, beta, &mut out);
    for _ in 0..500 {
        if (h - target).abs() <= ENTROPY_TOL {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = row_at(d, i, beta, &mut out);
    }
    (out, h)
}

pub fn tsne(x: ArrayView2<f64>, config: &EmbeddingConfig) -> Result<Projection, EmbeddingError> {
    let n = x.nrows();
    if n < 4 {
        return Err(EmbeddingError::TooFewPoints { n, min: 4 });
    }
    let max = (n - 1) as f64 / 3.0;
    let perplexity = config.perplexity.unwrap_or_else(|| default_perplexity(n));
    if !(perplexity >= 1.0) || perplexity > max {
        return Err(EmbeddingError::PerplexityTooLarge { perplexity, max });
    }
    let lr = config.learning_rate.unwrap_or_else(|| default_learning_rate(n));
    if !(lr > 0.0) {
        return Err(EmbeddingError::InvalidConfig(format!("learning rate {lr}")));
    }

    let d2 = squared_distances(x);
    let (cond, _) = conditional_affinities(&d2, perplexity);
    let mut p = &cond + &cond.t();
    p.mapv_inplace(|v| (v / (2.0 * n as f64)).max(P_FLOOR));
    for i in 0..n {
        p[[i, i]] = 0.0;
    }

    let mut y = initial_layout(x, config.seed, config.init);
    let mut velocity = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut trace = Vec::new();

    for iter in 0..config.iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < EXAGGERATION_ITERS { 0.5 } else { 0.8 };
        let (grad, num, z) = gradient(&p, &y, exaggeration);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(EmbeddingError::NonFiniteGradient { iteration: iter });
        }
        for ((g, v), gain) in grad.iter().zip(velocity.iter_mut()).zip(gains.iter_mut()) {
            *gain = if *v * g < 0.0 { *gain + 0.2 } else { *gain * 0.8 };
            if *gain < MIN_GAIN {
                *gain = MIN_GAIN;
            }
            *v = momentum * *v - lr * *gain * g;
        }
        y += &velocity;
        let mean = y.mean_axis(Axis(0)).expect("n > 0");
        y -= &mean;
        if (iter + 1) % CHECKPOINT == 0 || iter + 1 == config.iterations {
            trace.push((iter + 1, kl(&p, &num, z)));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFiniteGradient {
            iteration: config.iterations,
        });
    }
    let mut resolved = config.clone();
    resolved.perplexity = Some(perplexity);
    resolved.learning_rate = Some(lr);
    Ok(Projection {
        points: y,
        objective_trace: trace,
        config: resolved,
    })
}

fn initial_layout(x: ArrayView2<f64>, seed: u64, init: Init) -> Array2<f64> {
    let n = x.nrows();
    match init {
        Init::Random => {
            let mut rng = seed::rng(seed);
            let normal = Normal::new(0.0, 1e-4).expect("valid sd");
            Array2::from_shape_fn((n, 2), |_| normal.sample(&mut rng))
        }
        Init::Pca => {
            let (_, coords) = principal_axes(x, 2);
            let sd = {
                let c = coords.column(0);
                let m = c.sum() / n as f64;
                (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
            };
            if sd > 0.0 {
                coords.mapv(|v| v / sd * 1e-4)
            } else {
                coords
            }
        }
    }
}

/// Gradient of KL(P‖Q), the Student-t kernel matrix and its normaliser.
/// Rows are processed in parallel, each reduced left to right.
fn gradient(p: &Array2<f64>, y: &Array2<f64>, exaggeration: f64) -> (Array2<f64>, Array2<f64>, f64) {
    let n = y.nrows();
    let num_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let dx = y[[i, 0]] - y[[j, 0]];
                        let dy = y[[i, 1]] - y[[j, 1]];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    let mut num = Array2::zeros((n, n));
    let mut z = 0.0;
    for (i, row) in num_rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            num[[i, j]] = *v;
            z += *v;
        }
    }
    let grad_rows: Vec<[f64; 2]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0, 0.0];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[[i, j]] / z).max(P_FLOOR);
                let m = (exaggeration * p[[i, j]] - q) * num[[i, j]];
                g[0] += m * (y[[i, 0]] - y[[j, 0]]);
                g[1] += m * (y[[i, 1]] - y[[j, 1]]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        })
        .collect();
    let mut grad = Array2::zeros((n, 2));
    for (i, g) in grad_rows.iter().enumerate() {
        grad[[i, 0]] = g[0];
        grad[[i, 1]] = g[1];
    }
    (grad, num, z)
}

fn kl(p: &Array2<f64>, num: &Array2<f64>, z: f64) -> f64 {
    let n = p.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[[i, j]];
                let q = (num[[i, j]] / z).max(P_FLOOR);
                s += pij * (pij / q).ln();
            }
        }
    }
    s
}
