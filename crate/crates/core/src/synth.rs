//! Seeded synthetic fixtures standing in for the private source data:
//! 3-blob EDI panels, point clouds for tendency tests, DA maps, census
//! profiles and registration histories.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{
    CensusCategory, CensusProfile, CensusVariable, DaRow, DaTable, Dataset, EdiRecord, Gender, Neighborhood,
    NeighborhoodId, RegistrationRecord, Season, VariableKind, Wave,
};
use crate::geo::{GeometrySet, Polygon};
use crate::seed;

pub fn neighborhood_id(i: usize) -> NeighborhoodId {
    NeighborhoodId(format!("n{:02}", i + 1))
}

/// One EDI row with explicit scale values.
pub fn edi_record(id: &str, name: &str, wave: i64, scales: [f64; 5], one_or_more: f64, two_or_more: f64) -> EdiRecord {
    EdiRecord {
        neighborhood: Neighborhood {
            id: NeighborhoodId::new(id),
            name: name.to_string(),
        },
        wave: Wave::new(wave).expect("fixture wave in range"),
        n_children: 200,
        physical: scales[0],
        social: scales[1],
        emotional: scales[2],
        language_cognitive: scales[3],
        communication: scales[4],
        one_or_more,
        two_or_more,
    }
}

/// Neighborhoods drawn around `blobs` vulnerability levels. Neighborhood `i`
/// belongs to blob `i % blobs`, and blob 0 is the least vulnerable.
#[derive(Debug, Clone)]
pub struct EdiFixture {
    pub neighborhoods: usize,
    pub blobs: usize,
    /// Distance between consecutive blob levels, in percentage points.
    pub separation: f64,
    /// Per-neighborhood scatter around the blob centre.
    pub spread: f64,
    /// Per-wave scatter around the neighborhood's own level.
    pub wave_noise: f64,
}

impl Default for EdiFixture {
    fn default() -> Self {
        EdiFixture {
            neighborhoods: 24,
            blobs: 3,
            separation: 5.0,
            spread: 1.0,
            wave_noise: 0.4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdiSynth {
    pub dataset: Dataset,
    pub truth: BTreeMap<NeighborhoodId, usize>,
}

const BASE_LEVEL: [f64; 5] = [8.0, 9.0, 10.0, 7.0, 9.5];

impl EdiFixture {
    pub fn generate(&self, seed: u64) -> EdiSynth {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut truth = BTreeMap::new();
        let mut edi = Vec::new();
        for i in 0..self.neighborhoods {
            let id = neighborhood_id(i);
            let blob = i % self.blobs;
            truth.insert(id.clone(), blob);
            let own: Vec<f64> = BASE_LEVEL
                .iter()
                .map(|b| b + blob as f64 * self.separation + self.spread * normal.sample(&mut rng))
                .collect();
            let n_base = rng.random_range(150..400u32);
            for w in Wave::all() {
                let mut s = [0.0; 5];
                for (j, v) in s.iter_mut().enumerate() {
                    *v = (own[j] + self.wave_noise * normal.sample(&mut rng)).clamp(0.0, 100.0);
                }
                let mean = s.iter().sum::<f64>() / 5.0;
                let one = (1.8 * mean + 0.5 * normal.sample(&mut rng)).clamp(0.0, 100.0);
                let two = (0.5 * one + 0.3 * normal.sample(&mut rng)).clamp(0.0, one);
                edi.push(EdiRecord {
                    neighborhood: Neighborhood {
                        id: id.clone(),
                        name: format!("Neighborhood {:02}", i + 1),
                    },
                    wave: w,
                    n_children: n_base + rng.random_range(0..40u32),
                    physical: s[0],
                    social: s[1],
                    emotional: s[2],
                    language_cognitive: s[3],
                    communication: s[4],
                    one_or_more: one,
                    two_or_more: two,
                });
            }
        }
        EdiSynth {
            dataset: Dataset::from_edi(edi).expect("generated dataset is valid"),
            truth,
        }
    }
}

/// Isotropic Gaussian blobs. Blob `c` is centred at
/// `separation · (1 + c / dim)` along axis `c mod dim`.
pub fn gaussian_blobs(sizes: &[usize], dim: usize, separation: f64, sd: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, sd).expect("finite sd");
    let n: usize = sizes.iter().sum();
    let mut x = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (c, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            for j in 0..dim {
                let centre = if j == c % dim {
                    separation * (1.0 + (c / dim) as f64)
                } else {
                    0.0
                };
                x[[row, j]] = centre + normal.sample(&mut rng);
            }
            labels.push(c);
            row += 1;
        }
    }
    (x, labels)
}

pub fn uniform_cube(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed);
    Array2::from_shape_fn((n, dim), |_| rng.random::<f64>())
}

/// `side × side` unit-spaced lattice.
pub fn grid(side: usize) -> Array2<f64> {
    Array2::from_shape_fn((side * side, 2), |(i, j)| if j == 0 { (i % side) as f64 } else { (i / side) as f64 })
}

/// Two jittered `side × side` lattices, the second shifted right by
/// `side - 1 + gap` lattice units. Each part alone is more regular than
/// random; the empty strip between them adds clustered structure when they
/// are pooled.
pub fn lattice_pair(side: usize, gap: f64, jitter: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, jitter).expect("finite jitter");
    let mut part = |dx: f64| {
        Array2::from_shape_fn((side * side, 2), |(i, j)| {
            let base = if j == 0 { (i % side) as f64 + dx } else { (i / side) as f64 };
            base + normal.sample(&mut rng)
        })
    };
    let a = part(0.0);
    let b = part(side as f64 - 1.0 + gap);
    (a, b)
}

/// A small catalog of `n` generic percent variables spread over the census
/// categories.
pub fn generic_catalog(n: usize) -> Vec<CensusVariable> {
    (0..n)
        .map(|i| CensusVariable {
            var_id: format!("v{:02}", i + 1),
            label: format!("Variable {}", i + 1),
            category: CensusCategory::ALL[i % CensusCategory::ALL.len()],
            kind: VariableKind::Percent,
            numerator: None,
            denominator: None,
        })
        .collect()
}

/// Labels neighborhood `i` with cluster `i % k`.
pub fn round_robin_labels(neighborhoods: usize, k: usize) -> BTreeMap<NeighborhoodId, usize> {
    (0..neighborhoods).map(|i| (neighborhood_id(i), i % k)).collect()
}

/// Census profiles where every variable is N(50, 10) except those in
/// `effects`, whose mean is shifted by `effect_sd · 10 · label`.
pub fn census_profiles(
    catalog: &[CensusVariable],
    labels: &BTreeMap<NeighborhoodId, usize>,
    effects: &[&str],
    effect_sd: f64,
    seed: u64,
) -> Vec<CensusProfile> {
    let mut rng = seed::rng(seed);
    let normal = Normal::new(50.0, 10.0).expect("finite");
    labels
        .iter()
        .map(|(id, &label)| {
            let mut p = CensusProfile {
                neighborhood: id.clone(),
                ..Default::default()
            };
            for var in catalog {
                let mut v = normal.sample(&mut rng);
                if effects.contains(&var.var_id.as_str()) {
                    v += effect_sd * 10.0 * label as f64;
                }
                p.values.insert(var.var_id.clone(), Some(v));
            }
            p
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MapFixture {
    pub das: GeometrySet,
    pub neighborhoods: GeometrySet,
    pub table: DaTable,
}

/// A 6×4 grid of 10×10 neighborhoods (one with a 2×2 hole) and `n_da`
/// rectangular DAs scattered over a slightly larger extent, so some
/// centroids fall outside every neighborhood.
pub fn synthetic_map(n_da: usize, seed: u64) -> MapFixture {
    let mut rng = seed::rng(seed);
    let mut neighborhoods = GeometrySet::default();
    for i in 0..24 {
        let (cx, cy) = ((i % 6) as f64 * 10.0, (i / 6) as f64 * 10.0);
        let poly = if i == 7 {
            let hole = vec![[cx + 4.0, cy + 4.0], [cx + 4.0, cy + 6.0], [cx + 6.0, cy + 6.0], [cx + 6.0, cy + 4.0], [cx + 4.0, cy + 4.0]];
            Polygon::new(Polygon::rect(cx, cy, cx + 10.0, cy + 10.0).exterior, vec![hole]).expect("valid hole")
        } else {
            Polygon::rect(cx, cy, cx + 10.0, cy + 10.0)
        };
        neighborhoods.insert(neighborhood_id(i).0, vec![poly]).expect("unique id");
    }
    let mut das = GeometrySet::default();
    let var_ids = vec![
        "population".to_string(),
        "households".to_string(),
        "total_income_of_households_in_2015_median".to_string(),
    ];
    let mut rows = Vec::new();
    for d in 0..n_da {
        // Odd offsets keep centroids off the integer grid lines.
        let x0 = rng.random_range(-6.0..64.0) + 0.013;
        let y0 = rng.random_range(-6.0..44.0) + 0.017;
        let w = rng.random_range(0.5..2.5);
        let h = rng.random_range(0.5..2.5);
        let id = format!("da{:04}", d + 1);
        das.insert(id.clone(), vec![Polygon::rect(x0, y0, x0 + w, y0 + h)]).expect("unique id");
        let pop = rng.random_range(200..1500u32) as f64;
        rows.push(DaRow {
            da_id: id,
            values: vec![
                Some(pop),
                Some((pop / rng.random_range(2.2..3.4)).round()),
                Some(rng.random_range(45_000..110_000u32) as f64),
            ],
        });
    }
    MapFixture {
        das,
        neighborhoods,
        table: DaTable { var_ids, rows },
    }
}

/// Courses by program group, as (title, subtitle).
pub const COURSES: &[(&str, &str)] = &[
    ("Parent and Tot Play", "Drop-in"),
    ("Caregiver Circle Time", "Parent participation"),
    ("Summer Day Camp", "Full day"),
    ("Spring Break Camp", "Adventure week"),
    ("Swim Lessons Level 1", "Preschool"),
    ("Swim Lessons Level 4", "Children"),
    ("Aquatic Leadership", "Junior"),
    ("Ballet Basics", "Intro"),
    ("Music Makers", "Rhythm and song"),
    ("Youth Theatre", "Stage skills"),
    ("Painting Studio", "Acrylics"),
    ("Kids Cooking Club", "Healthy snacks"),
    ("Pottery Wheel", "Beginner"),
    ("Learn to Skate", "Level 2"),
    ("Soccer Skills", "Mini kickers"),
    ("Gymnastics", "Recreational"),
    ("Karate Kids", "White belt"),
    ("Nature Explorers", "Park program"),
    ("Outdoor Adventure", "Trail days"),
    ("Lego Builders", "General interest"),
    ("Computer Coding", "Scratch"),
    ("Leadership Club", "Personal development"),
    ("Games Night", "Social recreation"),
    ("Homework Help", "Drop-in"),
];

fn season_of(date: NaiveDate) -> Season {
    match date.month() {
        1..=3 => Season::Winter,
        4..=6 => Season::Spring,
        7..=8 => Season::Summer,
        _ => Season::Fall,
    }
}

fn add_years(date: NaiveDate, years: i32, extra_days: i64) -> NaiveDate {
    let base = date
        .with_year(date.year() + years)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(date.year() + years, 2, 28).expect("valid date"));
    base + Duration::days(extra_days)
}

/// Registration histories whose last completed registration most often
/// falls at ages 7 to 9. A minority of rows violate each retrieval filter.
#[derive(Debug, Clone)]
pub struct RegistrationFixture {
    pub records: usize,
}

impl Default for RegistrationFixture {
    fn default() -> Self {
        RegistrationFixture { records: 500 }
    }
}

impl RegistrationFixture {
    pub fn generate(&self, seed: u64) -> Vec<RegistrationRecord> {
        let mut rng = seed::rng(seed);
        let exit_weights: [(i32, u32); 9] = [(4, 2), (5, 4), (6, 6), (7, 14), (8, 18), (9, 14), (10, 6), (11, 4), (12, 3)];
        let mut out: Vec<RegistrationRecord> = Vec::with_capacity(self.records);
        let mut client = 0;
        while out.len() < self.records {
            client += 1;
            let client_id = format!("c{client:04}");
            let old = rng.random_bool(0.04);
            let birth = if old {
                NaiveDate::from_ymd_opt(1999, 1, 1).expect("date") + Duration::days(rng.random_range(0..700))
            } else {
                NaiveDate::from_ymd_opt(2001, 1, 1).expect("date") + Duration::days(rng.random_range(0..2900))
            };
            let gender = match rng.random_range(0..20) {
                0..=8 => Gender::Male,
                9..=17 => Gender::Female,
                _ => Gender::Unspecified,
            };
            let neighborhood = if rng.random_bool(0.05) {
                None
            } else {
                Some(neighborhood_id(rng.random_range(0..24)))
            };
            let account_created = if rng.random_bool(0.03) {
                NaiveDate::from_ymd_opt(1998, 6, 1).expect("date")
            } else {
                birth + Duration::days(rng.random_range(30..900))
            };
            let entry_age = rng.random_range(2..=6);
            let exit_age = exit_weights
                .choose_weighted(&mut rng, |e| e.1)
                .map(|e| e.0)
                .expect("weights")
                .max(entry_age);
            let n_regs = if exit_age == entry_age { 1 } else { rng.random_range(2..=5) };
            let mut ages: Vec<i32> = (0..n_regs)
                .map(|k| match k {
                    0 => entry_age,
                    k if k == n_regs - 1 => exit_age,
                    _ => rng.random_range(entry_age..=exit_age),
                })
                .collect();
            ages.sort_unstable();
            for age in ages {
                if out.len() >= self.records {
                    break;
                }
                let date = add_years(birth, age, rng.random_range(1..330));
                let (title, subtitle) = COURSES[rng.random_range(0..COURSES.len())];
                out.push(RegistrationRecord {
                    client_id: client_id.clone(),
                    birth_date: birth,
                    gender,
                    neighborhood: neighborhood.clone(),
                    account_created,
                    registration_id: format!("r{:05}", out.len() + 1),
                    course_id: format!("k{:03}", rng.random_range(0..400)),
                    course_title: title.to_string(),
                    course_subtitle: subtitle.to_string(),
                    season: season_of(date),
                    registration_date: date,
                    completed: rng.random_bool(0.93),
                    max_registrants: if rng.random_bool(0.03) { 1 } else { rng.random_range(6..30) },
                    subsidized: rng.random_bool(0.1),
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edi_fixture_shape() {
        let s = EdiFixture::default().generate(5);
        assert_eq!(s.dataset.neighborhoods.len(), 24);
        assert_eq!(s.dataset.edi.len(), 120);
        assert!(s.dataset.edi.iter().all(|r| r.check().is_ok()));
        assert_eq!(s.truth.values().filter(|&&b| b == 2).count(), 8);
    }

    #[test]
    fn registration_fixture_size_and_determinism() {
        let a = RegistrationFixture::default().generate(1);
        assert_eq!(a.len(), 500);
        assert_eq!(a, RegistrationFixture::default().generate(1));
        assert!(a.iter().all(|r| r.registration_date >= r.birth_date));
    }
}
