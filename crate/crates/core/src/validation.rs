//! Hopkins clustering-tendency statistic with a complete-spatial-randomness
//! test. H near 0.5 is random, above 0.5 clustered, below 0.5 regular.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("{n} points is too few (need at least 4)")]
    TooFewPoints { n: usize },
    #[error("all points are identical")]
    DegenerateCloud,
    #[error("invalid Hopkins configuration: {0}")]
    InvalidConfig(String),
    #[error("label count {labels} does not match point count {points}")]
    LengthMismatch { labels: usize, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exponent {
    /// Distances raised to the data dimension.
    #[default]
    D,
    One,
}

impl std::str::FromStr for Exponent {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "d" => Ok(Exponent::D),
            "one" | "1" => Ok(Exponent::One),
            _ => Err(format!("unknown exponent `{s}` (expected d or one)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopkinsConfig {
    pub sample_fraction: f64,
    pub min_sample: usize,
    pub repeats: usize,
    pub seed: u64,
    pub exponent: Exponent,
}

impl Default for HopkinsConfig {
    fn default() -> Self {
        HopkinsConfig {
            sample_fraction: 0.3,
            min_sample: 3,
            repeats: 100,
            seed: 0,
            exponent: Exponent::D,
        }
    }
}

impl HopkinsConfig {
    pub fn with_seed(seed: u64) -> Self {
        HopkinsConfig {
            seed,
            ..Default::default()
        }
    }

    /// m = max(min_sample, round(sample_fraction · n)), capped at n.
    pub fn sample_size(&self, n: usize) -> usize {
        self.min_sample.max((self.sample_fraction * n as f64).round() as usize).min(n)
    }

    fn check(&self) -> Result<(), ValidationError> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(ValidationError::InvalidConfig("sample_fraction must be in (0, 1]".into()));
        }
        if self.repeats == 0 || self.min_sample == 0 {
            return Err(ValidationError::InvalidConfig("repeats and min_sample must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopkinsResult {
    pub m: usize,
    pub repeats: Vec<f64>,
    pub h_av: f64,
    pub p_value: f64,
    pub exponent: Exponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterHopkins {
    pub size: usize,
    pub result: Option<HopkinsResult>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopkinsReport {
    pub per_cluster: BTreeMap<usize, ClusterHopkins>,
    pub overall: Option<HopkinsResult>,
    pub config: HopkinsConfig,
}

impl HopkinsReport {
    /// Mean H_av over the clusters that were not skipped.
    pub fn mean_cluster_h(&self) -> Option<f64> {
        let hs: Vec<f64> = self.per_cluster.values().filter_map(|c| c.result.as_ref().map(|r| r.h_av)).collect();
        (!hs.is_empty()).then(|| hs.iter().sum::<f64>() / hs.len() as f64)
    }
}

/// Columns whose range is non-zero.
fn live_dims(points: ArrayView2<f64>) -> Vec<(usize, f64, f64)> {
    (0..points.ncols())
        .filter_map(|j| {
            let col = points.column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi > lo).then_some((j, lo, hi))
        })
        .collect()
}

/// One Hopkins draw: m sampled data points against m uniform points in the
/// bounding box. Constant dimensions are dropped before sampling.
pub fn hopkins_once(points: ArrayView2<f64>, config: &HopkinsConfig, repeat_seed: u64) -> Result<f64, ValidationError> {
    config.check()?;
    let n = points.nrows();
    if n < 4 {
        return Err(ValidationError::TooFewPoints { n });
    }
    let dims = live_dims(points);
    if dims.is_empty() {
        return Err(ValidationError::DegenerateCloud);
    }
    let e = match config.exponent {
        Exponent::D => dims.len() as i32,
        Exponent::One => 1,
    };
    let m = config.sample_size(n);
    let mut rng = seed::rng(repeat_seed);
    let sample = rand::seq::index::sample(&mut rng, n, m);
    let uniform: Vec<Vec<f64>> = (0..m)
        .map(|_| dims.iter().map(|&(_, lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect())
        .collect();

    let dist = |p: &[f64], i: usize| -> f64 {
        dims.iter()
            .zip(p)
            .map(|(&(j, _, _), v)| (points[[i, j]] - v).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let u: Vec<f64> = uniform
        .iter()
        .map(|p| (0..n).map(|i| dist(p, i)).fold(f64::INFINITY, f64::min))
        .collect();
    let w: Vec<f64> = sample
        .iter()
        .map(|s| {
            let p: Vec<f64> = dims.iter().map(|&(j, _, _)| points[[s, j]]).collect();
            (0..n).filter(|&i| i != s).map(|i| dist(&p, i)).fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(hopkins_statistic(&u, &w, e))
}

/// H = Σuᵉ / (Σuᵉ + Σwᵉ) from uniform-to-data distances `u` and
/// data-to-data distances `w`.
pub fn hopkins_statistic(u: &[f64], w: &[f64], e: i32) -> f64 {
    let su: f64 = u.iter().map(|v| v.powi(e)).sum();
    let sw: f64 = w.iter().map(|v| v.powi(e)).sum();
    if su + sw == 0.0 {
        return 0.5;
    }
    su / (su + sw)
}

/// Two-sided p-value of a mean of `repeats` Hopkins draws against the
/// Beta(m, m) null, by normal approximation.
pub fn null_p_value(h_av: f64, m: usize, repeats: usize) -> f64 {
    let var = 1.0 / (4.0 * (2.0 * m as f64 + 1.0)) / repeats as f64;
    let z = (h_av - 0.5).abs() / var.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}

/// Mean of `repeats` draws seeded `seed + r`.
pub fn hopkins_average(points: ArrayView2<f64>, config: &HopkinsConfig) -> Result<HopkinsResult, ValidationError> {
    config.check()?;
    let repeats: Vec<f64> = (0..config.repeats)
        .into_par_iter()
        .map(|r| hopkins_once(points, config, config.seed.wrapping_add(r as u64)))
        .collect::<Result<_, _>>()?;
    let h_av = repeats.iter().sum::<f64>() / repeats.len() as f64;
    let m = config.sample_size(points.nrows());
    Ok(HopkinsResult {
        m,
        p_value: null_p_value(h_av, m, repeats.len()),
        h_av,
        repeats,
        exponent: config.exponent,
    })
}

/// Hopkins per cluster label plus the pooled cloud. Clusters under four
/// points, or with all points identical, are reported as skipped.
pub fn hopkins_per_cluster(
    points: ArrayView2<f64>,
    labels: &[usize],
    config: &HopkinsConfig,
) -> Result<HopkinsReport, ValidationError> {
    config.check()?;
    if labels.len() != points.nrows() {
        return Err(ValidationError::LengthMismatch {
            labels: labels.len(),
            points: points.nrows(),
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let mut per_cluster = BTreeMap::new();
    for (label, idx) in members {
        let sub = points.select(ndarray::Axis(0), &idx);
        let entry = match hopkins_average(sub.view(), config) {
            Ok(r) => ClusterHopkins {
                size: idx.len(),
                result: Some(r),
                skipped: None,
            },
            Err(e @ (ValidationError::TooFewPoints { .. } | ValidationError::DegenerateCloud)) => ClusterHopkins {
                size: idx.len(),
                result: None,
                skipped: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        per_cluster.insert(label, entry);
    }
    let overall = hopkins_average(points, config).ok();
    Ok(HopkinsReport {
        per_cluster,
        overall,
        config: config.clone(),
    })
}

/// `scope,label,m,repeats,H_av,p_value,skipped`
pub fn write_hopkins_csv<W: Write>(report: &HopkinsReport, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["scope", "label", "m", "repeats", "H_av", "p_value", "skipped"])?;
    let row = |scope: &str, label: String, r: Option<&HopkinsResult>, skipped: Option<&str>| -> Vec<String> {
        vec![
            scope.to_string(),
            label,
            r.map(|r| r.m.to_string()).unwrap_or_default(),
            r.map(|r| r.repeats.len().to_string()).unwrap_or_default(),
            r.map(|r| r.h_av.to_string()).unwrap_or_default(),
            r.map(|r| r.p_value.to_string()).unwrap_or_default(),
            skipped.unwrap_or("").to_string(),
        ]
    };
    for (label, c) in &report.per_cluster {
        w.write_record(row("cluster", label.to_string(), c.result.as_ref(), c.skipped.as_deref()))?;
    }
    let skipped = report.overall.is_none().then_some("not computable");
    w.write_record(row("overall", String::new(), report.overall.as_ref(), skipped))?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gaussian_blobs, grid, uniform_cube};
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn equal_distances_give_half() {
        let d = [0.3, 1.2, 2.0];
        assert_eq!(hopkins_statistic(&d, &d, 5), 0.5);
        assert_eq!(hopkins_statistic(&d, &d, 1), 0.5);
    }

    #[test]
    fn sample_size_rule() {
        let c = HopkinsConfig::default();
        assert_eq!(c.sample_size(8), 3);
        assert_eq!(c.sample_size(24), 7);
        assert_eq!(c.sample_size(1000), 300);
    }

    #[test]
    fn errors() {
        let c = HopkinsConfig::default();
        let three = array![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]];
        assert_eq!(hopkins_once(three.view(), &c, 0), Err(ValidationError::TooFewPoints { n: 3 }));
        let same = Array2::from_elem((6, 2), 1.0);
        assert_eq!(hopkins_once(same.view(), &c, 0), Err(ValidationError::DegenerateCloud));
    }

    #[test]
    fn tight_blobs_are_clustered_and_grids_regular() {
        let (x, _) = gaussian_blobs(&[100, 100], 2, 10.0, 0.01, 3);
        let c = HopkinsConfig::with_seed(1);
        assert!(hopkins_once(x.view(), &c, 5).unwrap() > 0.8);
        let g = grid(10);
        let r = hopkins_average(g.view(), &c).unwrap();
        assert!(r.h_av < 0.45, "grid H = {}", r.h_av);
    }

    #[test]
    fn csr_mean_within_three_standard_errors() {
        let x = uniform_cube(200, 2, 9);
        let c = HopkinsConfig {
            repeats: 2000,
            ..HopkinsConfig::with_seed(4)
        };
        let r = hopkins_average(x.view(), &c).unwrap();
        let sd = r.repeats.iter().map(|h| (h - r.h_av).powi(2)).sum::<f64>() / (r.repeats.len() - 1) as f64;
        let se = (sd / r.repeats.len() as f64).sqrt();
        assert!((r.h_av - 0.5).abs() < 3.0 * se + 0.02, "{} ± {se}", r.h_av);
    }

    #[test]
    fn per_cluster_skips_small_clusters() {
        let (x, mut labels) = gaussian_blobs(&[10, 10, 3], 2, 10.0, 1.0, 2);
        labels.iter_mut().for_each(|l| *l *= 2);
        let c = HopkinsConfig {
            repeats: 10,
            ..HopkinsConfig::with_seed(1)
        };
        let r = hopkins_per_cluster(x.view(), &labels, &c).unwrap();
        assert!(r.per_cluster[&4].skipped.is_some());
        assert!(r.per_cluster[&0].result.is_some());
        assert_eq!(r, hopkins_per_cluster(x.view(), &labels, &c).unwrap());
        let mut buf = Vec::new();
        write_hopkins_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(3).unwrap().starts_with("cluster,4,,,,,"));
    }

    #[test]
    fn exponent_is_irrelevant_in_one_dimension() {
        let x = uniform_cube(30, 1, 3);
        let d = HopkinsConfig::with_seed(2);
        let one = HopkinsConfig {
            exponent: Exponent::One,
            ..d.clone()
        };
        assert_eq!(hopkins_once(x.view(), &d, 7).unwrap(), hopkins_once(x.view(), &one, 7).unwrap());
    }

    #[test]
    fn constant_dimension_is_dropped() {
        let x = uniform_cube(30, 2, 3);
        let mut padded = Array2::from_elem((30, 3), 4.0);
        padded.slice_mut(ndarray::s![.., ..2]).assign(&x);
        let c = HopkinsConfig::with_seed(2);
        assert_eq!(hopkins_once(x.view(), &c, 1).unwrap(), hopkins_once(padded.view(), &c, 1).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn invariant_under_scaling_and_translation(seed in 0u64..1000, pow in -4i32..5, t in -50.0f64..50.0) {
            let x = uniform_cube(40, 3, seed);
            let c = HopkinsConfig::with_seed(seed);
            let h = hopkins_once(x.view(), &c, 3).unwrap();
            let scaled = x.mapv(|v| v * 2f64.powi(pow));
            prop_assert_eq!(h, hopkins_once(scaled.view(), &c, 3).unwrap());
            let moved = x.mapv(|v| v + t);
            prop_assert!((h - hopkins_once(moved.view(), &c, 3).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }
}
