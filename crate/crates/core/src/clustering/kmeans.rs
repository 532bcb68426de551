use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use super::{ClusterError, ClusterSolution};
use crate::seed;

pub const DEFAULT_RESTARTS: usize = 50;
const MAX_ITER: usize = 300;
const TOL: f64 = 1e-9;

/// One restart's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub wcss: f64,
    pub trace: Vec<f64>,
}

fn sq(x: ArrayView2<f64>, i: usize, c: &Array2<f64>, j: usize) -> f64 {
    x.row(i).iter().zip(c.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn plus_plus(x: ArrayView2<f64>, k: usize, rng: &mut seed::Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut c = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    c.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq(x, i, &c, 0)).collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        c.row_mut(j).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq(x, i, &c, j));
        }
    }
    c
}

fn assign(x: ArrayView2<f64>, c: &Array2<f64>, labels: &mut [usize]) {
    for (i, l) in labels.iter_mut().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for j in 0..c.nrows() {
            let d = sq(x, i, c, j);
            if d < best.0 {
                best = (d, j);
            }
        }
        *l = best.1;
    }
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(x: ArrayView2<f64>, c: &mut Array2<f64>, labels: &mut [usize]) {
    let k = c.nrows();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (sq(x, i, c, labels[i]), i))
            .fold((-1.0, 0), |acc, v| if v.0 > acc.0 { v } else { acc });
        labels[far.1] = empty;
        c.row_mut(empty).assign(&x.row(far.1));
    }
}

fn means(x: ArrayView2<f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut c = Array2::zeros((k, x.ncols()));
    let mut counts = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1.0;
        for (cv, xv) in c.row_mut(l).iter_mut().zip(x.row(i)) {
            *cv += xv;
        }
    }
    for (mut row, n) in c.rows_mut().into_iter().zip(counts) {
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    c
}

fn wcss(x: ArrayView2<f64>, labels: &[usize], c: &Array2<f64>) -> f64 {
    labels.iter().enumerate().map(|(i, &l)| sq(x, i, c, l)).sum()
}

fn lloyd(x: ArrayView2<f64>, k: usize, seed: u64) -> KMeansRun {
    let mut rng = seed::rng(seed);
    let mut c = plus_plus(x, k, &mut rng);
    let mut labels = vec![0; x.nrows()];
    let mut trace = Vec::new();
    for _ in 0..MAX_ITER {
        assign(x, &c, &mut labels);
        repair_empty(x, &mut c, &mut labels);
        let next = means(x, &labels, k);
        trace.push(wcss(x, &labels, &next));
        let shift = c
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        c = next;
        if shift < TOL {
            break;
        }
    }
    let w = wcss(x, &labels, &c);
    KMeansRun {
        labels,
        centroids: c,
        wcss: w,
        trace,
    }
}

/// Best of `restarts` k-means++ / Lloyd runs by WCSS. Restart `r` is seeded
/// with `seed + r`; ties go to the lowest restart index.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64, restarts: usize) -> Result<ClusterSolution, ClusterError> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::KExceedsN { k, n });
    }
    let restarts = restarts.max(1);
    let runs: Vec<KMeansRun> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, k, seed.wrapping_add(r as u64)))
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.wcss < runs[best].wcss {
            best = r;
        }
    }
    let run = runs.into_iter().nth(best).expect("at least one restart");
    Ok(ClusterSolution {
        labels: run.labels,
        centroids: run.centroids,
        wcss: run.wcss,
        k,
        restarts_used: restarts,
        seed,
        wcss_trace: run.trace,
        keys: Vec::new(),
        mode: None,
        method: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    /// Minimum WCSS over every partition of the points into exactly `k`
    /// non-empty blocks (restricted growth strings).
    pub(crate) fn exhaustive_min_wcss(x: ArrayView2<f64>, k: usize) -> f64 {
        let n = x.nrows();
        let mut best = f64::INFINITY;
        let mut a = vec![0usize; n];
        fn rec(i: usize, maxl: usize, a: &mut Vec<usize>, k: usize, x: ArrayView2<f64>, best: &mut f64) {
            let n = a.len();
            if i == n {
                if maxl + 1 == k {
                    let c = super::means(x, a, k);
                    *best = best.min(super::wcss(x, a, &c));
                }
                return;
            }
            if maxl + 1 + (n - i) < k {
                return;
            }
            for l in 0..=(maxl + 1).min(k - 1) {
                a[i] = l;
                rec(i + 1, maxl.max(l), a, k, x, best);
            }
        }
        a[0] = 0;
        rec(1, 0, &mut a, k, x, &mut best);
        best
    }

    #[test]
    fn k_one_is_the_mean() {
        let x = array![[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]];
        let s = kmeans(x.view(), 1, 0, 5).unwrap();
        assert_eq!(s.labels, vec![0, 0, 0]);
        assert!((s.centroids[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((s.centroids[[0, 1]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_instance() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let s = kmeans(x.view(), 2, 3, 10).unwrap();
        assert_eq!(s.labels[0], s.labels[1]);
        assert_eq!(s.labels[2], s.labels[3]);
        assert_ne!(s.labels[0], s.labels[2]);
        assert!((s.wcss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_k() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        assert_eq!(kmeans(x.view(), 0, 0, 1).unwrap_err(), ClusterError::KExceedsN { k: 0, n: 2 });
        assert!(kmeans(x.view(), 3, 0, 1).is_err());
    }

    #[test]
    fn duplicate_points_need_repair() {
        let x = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [5.0, 5.0]];
        let s = kmeans(x.view(), 3, 1, 4).unwrap();
        assert_eq!(s.sizes().iter().filter(|&&c| c == 0).count(), 0);
        assert!(s.wcss.abs() < 1e-12);
    }

    #[test]
    fn matches_enumeration_on_small_instances() {
        let mut rng = seed::rng(2024);
        for _ in 0..10 {
            let x = Array2::from_shape_fn((9, 2), |_| rng.random_range(-5.0..5.0));
            let s = kmeans(x.view(), 3, 7, DEFAULT_RESTARTS).unwrap();
            assert!((s.wcss - exhaustive_min_wcss(x.view(), 3)).abs() < 1e-9);
        }
    }

    #[test]
    fn worker_count_independent() {
        let mut rng = seed::rng(5);
        let x = Array2::from_shape_fn((60, 2), |_| rng.random_range(-5.0..5.0));
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| kmeans(x.view(), 4, 11, 20)).unwrap();
        let b = many.install(|| kmeans(x.view(), 4, 11, 20)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn wcss_trace_non_increasing(seed in 0u64..1000, k in 1usize..6) {
            let mut rng = seed::rng(seed);
            let x = Array2::from_shape_fn((30, 2), |_| rng.random_range(-5.0..5.0));
            let s = kmeans(x.view(), k, seed, 3).unwrap();
            for w in s.wcss_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            let direct: f64 = (0..30).map(|i| sq(x.view(), i, &s.centroids, s.labels[i])).sum();
            prop_assert!((direct - s.wcss).abs() < 1e-9);
            prop_assert!(s.labels.iter().all(|&l| l < k));
        }

        #[test]
        fn rotation_keeps_best_wcss(seed in 0u64..500, angle in 0.0f64..std::f64::consts::TAU) {
            let mut rng = seed::rng(seed);
            let x = Array2::from_shape_fn((20, 2), |_| rng.random_range(-5.0..5.0));
            let (s, c) = angle.sin_cos();
            let r = Array2::from_shape_fn((20, 2), |(i, j)| {
                if j == 0 { c * x[[i, 0]] - s * x[[i, 1]] } else { s * x[[i, 0]] + c * x[[i, 1]] }
            });
            let a = kmeans(x.view(), 3, 1, DEFAULT_RESTARTS).unwrap();
            let b = kmeans(r.view(), 3, 1, DEFAULT_RESTARTS).unwrap();
            prop_assert!((a.wcss - b.wcss).abs() < 1e-6);
        }
    }
}
