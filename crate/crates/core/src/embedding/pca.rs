use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{EmbeddingConfig, EmbeddingError, Projection};

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Eigenvalues are
/// returned in descending order with matching eigenvector columns.
fn symmetric_eigen(mut a: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let d = a.nrows();
    let mut v = Array2::<f64>::eye(d);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let vals = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vecs = Array2::zeros((d, d));
    for (c, &i) in order.iter().enumerate() {
        vecs.column_mut(c).assign(&v.column(i));
    }
    (vals, vecs)
}

/// Eigenvalues of the sample covariance (descending) and the first
/// `components` principal coordinates. Each axis is signed so its
/// largest-magnitude loading is positive.
pub fn principal_axes(x: ArrayView2<f64>, components: usize) -> (Array1<f64>, Array2<f64>) {
    let n = x.nrows();
    let d = x.ncols();
    let mean = x.mean_axis(Axis(0)).expect("n > 0");
    let centered = &x - &mean;
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.t().dot(&centered) / denom;
    let (vals, mut vecs) = symmetric_eigen(cov);
    for mut col in vecs.columns_mut() {
        let lead = col
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() + 1e-12 { v } else { acc });
        if lead < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let mut coords = Array2::zeros((n, components));
    let take = components.min(d);
    let proj = centered.dot(&vecs.slice(ndarray::s![.., ..take]));
    coords.slice_mut(ndarray::s![.., ..take]).assign(&proj);
    // Axes with no variance carry only round-off.
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    for c in 0..take {
        if vals[c] <= 1e-12 * top.max(f64::MIN_POSITIVE) || top == 0.0 {
            coords.column_mut(c).fill(0.0);
        }
    }
    (vals, coords)
}

pub fn pca(x: ArrayView2<f64>, config: &EmbeddingConfig) -> Result<Projection, EmbeddingError> {
    let n = x.nrows();
    if n < 2 {
        return Err(EmbeddingError::TooFewPoints { n, min: 2 });
    }
    let (_, coords) = principal_axes(x, 2);
    Ok(Projection {
        points: coords,
        objective_trace: Vec::new(),
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Method;
    use rand::Rng;

    fn cfg() -> EmbeddingConfig {
        EmbeddingConfig::new(Method::Pca, 0)
    }

    #[test]
    fn axis_aligned_data_recovered() {
        let x = ndarray::array![[-3.0, 0.5], [-1.0, -0.5], [1.0, -0.5], [3.0, 0.5]];
        let p = pca(x.view(), &cfg()).unwrap();
        for i in 0..4 {
            assert!((p.points[[i, 0]].abs() - x[[i, 0]].abs()).abs() < 1e-12);
            assert!((p.points[[i, 1]].abs() - x[[i, 1]].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_has_zero_second_axis() {
        let x = Array2::from_shape_fn((6, 5), |(i, j)| i as f64 * (j as f64 + 1.0));
        let p = pca(x.view(), &cfg()).unwrap();
        assert!(p.points.column(1).iter().all(|v| *v == 0.0));
        assert!(p.points.column(0).iter().any(|v| v.abs() > 1.0));
    }

    #[test]
    fn constant_input_gives_zeros() {
        let x = Array2::from_elem((5, 3), 2.5);
        let p = pca(x.view(), &cfg()).unwrap();
        assert!(p.points.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reconstruction_error_matches_trailing_eigenvalues() {
        let mut rng = crate::seed::rng(77);
        for _ in 0..5 {
            let x = Array2::from_shape_fn((10, 5), |_| rng.random_range(-3.0..3.0));
            let (_, coords) = principal_axes(x.view(), 2);
            let mean = x.mean_axis(Axis(0)).unwrap();
            let centered = &x - &mean;
            // Oracle eigen-decomposition from an independent dense solver.
            let m = nalgebra::DMatrix::from_fn(10, 5, |i, j| centered[[i, j]]);
            let cov = m.transpose() * &m / 9.0;
            let eig = nalgebra::SymmetricEigen::new(cov);
            let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            let trailing: f64 = vals[2..].iter().sum();
            // Residual = total variation minus what the 2-D scores retain.
            let total: f64 = centered.iter().map(|v| v * v).sum();
            let kept: f64 = coords.iter().map(|v| v * v).sum();
            let err = (total - kept) / 9.0;
            assert!((err - trailing).abs() < 1e-9, "{err} vs {trailing}");
        }
    }
}
