//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vulnscape::clustering::kmeans;
use vulnscape::domain::{load_registrations, write_catalog, write_edi, Wave};
use vulnscape::embedding::{project, EmbeddingConfig, Method, WaveMode};
use vulnscape::geo::{assign_da, Location};
use vulnscape::pipeline::{
    run_bottomup, run_bottomup_dir, run_topdown_dir, run_wave, BottomUpConfig, HopkinsSpace, Inputs, RunOptions,
    TopDownConfig, MANIFEST_FILE,
};
use vulnscape::retention::{distributions, Cell, Facet, GroupingRules};
use vulnscape::stats::{anova_oneway, kruskal_wallis, screen, ScreeningConfig};
use vulnscape::synth::{
    census_profiles, gaussian_blobs, generic_catalog, grid, lattice_pair, round_robin_labels, synthetic_map,
    uniform_cube, EdiFixture,
};
use vulnscape::validation::{hopkins_average, Exponent, HopkinsConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn hopkins_null_calibration() -> Outcome {
    let start = Instant::now();
    let config = HopkinsConfig::default();
    let csr = hopkins_average(uniform_cube(1000, 5, 0).view(), &config).unwrap();
    let (blobs, _) = gaussian_blobs(&[100, 100], 5, 10.0, 1.0, 0);
    let two = hopkins_average(blobs.view(), &config).unwrap();
    let lattice = hopkins_average(grid(10).view(), &config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (0.45..=0.55).contains(&csr.h_av)
        && csr.p_value > 0.05
        && two.h_av > 0.7
        && two.p_value < 0.01
        && lattice.h_av < 0.45
        && secs < 10.0;

    // Not part of the verdict: how often p > 0.05 holds over other uniform draws.
    let sweep = (1..20)
        .filter(|&s| hopkins_average(uniform_cube(1000, 5, s).view(), &HopkinsConfig::with_seed(s)).unwrap().p_value > 0.05)
        .count();
    outcome(
        pass,
        format!(
            "uniform H={:.4} p={:.4}; two blobs H={:.4} p={:.2e}; grid H={:.4}; {secs:.2}s \
             (uniform p>0.05 on {sweep}/19 further draws)",
            csr.h_av, csr.p_value, two.h_av, two.p_value, lattice.h_av
        ),
    )
}

fn paper_band() -> Outcome {
    let mut passing = 0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in 0..20 {
        let ds = EdiFixture::default().generate(s).dataset;
        let config = TopDownConfig {
            seed: s,
            hopkins_space: HopkinsSpace::Raw,
            hopkins: HopkinsConfig {
                exponent: Exponent::One,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut ok = true;
        for w in Wave::all() {
            let run = run_wave(&ds, WaveMode::SingleWave(w), &config).unwrap();
            let h = run.hopkins.mean_cluster_h().unwrap();
            lo = lo.min(h);
            hi = hi.max(h);
            ok &= (0.40..=0.62).contains(&h);
        }
        passing += usize::from(ok);
    }
    outcome(
        passing >= 18,
        format!("{passing}/20 seeds with every wave in [0.40, 0.62] (raw scales, exponent 1); observed {lo:.3}..{hi:.3}"),
    )
}

fn merge_phenomenon() -> Outcome {
    let mut ok = 0;
    for s in 0..50 {
        let (a, b) = lattice_pair(4, 2.0, 0.1, s);
        let merged = concatenate(Axis(0), &[a.view(), b.view()]).unwrap();
        let config = HopkinsConfig::with_seed(s);
        let h = |x: &Array2<f64>| (hopkins_average(x.view(), &config).unwrap().h_av - 0.5).abs();
        if h(&merged) < h(&a).min(h(&b)) {
            ok += 1;
        }
    }
    outcome(ok >= 40, format!("merged closer to 0.5 than both parts in {ok}/50 seeds"))
}

fn wcss(points: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let n = idx.len() as f64;
        let mean: Vec<f64> = (0..points.ncols()).map(|j| idx.iter().map(|&i| points[[i, j]]).sum::<f64>() / n).collect();
        total += idx
            .iter()
            .map(|&i| (0..points.ncols()).map(|j| (points[[i, j]] - mean[j]).powi(2)).sum::<f64>())
            .sum::<f64>();
    }
    total
}

fn exhaustive_min_wcss(points: &Array2<f64>, k: usize) -> f64 {
    let n = points.nrows();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        if (0..k).all(|g| labels.contains(&g)) {
            best = best.min(wcss(points, &labels, k));
        }
    }
    best
}

fn kmeans_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut matches = 0;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let pts = Array2::from_shape_fn((9, 2), |_| rng.random::<f64>() * 10.0);
        let sol = kmeans(pts.view(), 3, i, 50).unwrap();
        let diff = (sol.wcss - exhaustive_min_wcss(&pts, 3)).abs();
        worst = worst.max(diff);
        matches += usize::from(diff <= 1e-9);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        matches >= 99 && secs < 5.0,
        format!("{matches}/100 instances at the exhaustive minimum (max gap {worst:.1e}); {secs:.2}s"),
    )
}

/// Pooled-variance two-sample t.
fn student_t(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp2 = (ss(a) + ss(b)) / (na + nb - 2.0);
    (mean(a) - mean(b)) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
}

fn anova_exactness() -> Outcome {
    let hand = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]).unwrap();
    let hand_ok = (hand.f - 3.0).abs() < 1e-9 && (hand.p - 0.125).abs() < 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (na, nb) = (rng.random_range(3..12), rng.random_range(3..12));
        let shift = rng.random_range(-2.0..2.0);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(0.0..5.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0.0..5.0) + shift).collect();
        let f = anova_oneway(&[a.clone(), b.clone()]).unwrap().f;
        worst = worst.max((f - student_t(&a, &b).powi(2)).abs());
    }
    let (h, _) = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
    let pass = hand_ok && worst < 1e-9 && (h - 7.2).abs() < 1e-9;
    outcome(
        pass,
        format!("hand F={} p={}; max |F - t^2| = {worst:.1e} over 50; Kruskal-Wallis H={h}", hand.f, hand.p),
    )
}

fn screening_null() -> Outcome {
    let catalog = generic_catalog(10);
    let labels = round_robin_labels(24, 3);
    let config = ScreeningConfig::default();
    let mut hits: BTreeMap<String, usize> = catalog.iter().map(|v| (v.var_id.clone(), 0)).collect();
    let trials = 1000;
    for s in 0..trials {
        let profiles = census_profiles(&catalog, &labels, &[], 0.0, s);
        for r in screen(&profiles, &labels, &catalog, &config).unwrap() {
            *hits.get_mut(&r.var_id).unwrap() += usize::from(r.significant);
        }
    }
    let rates: Vec<f64> = hits.values().map(|&h| h as f64 / trials as f64).collect();
    let pooled = rates.iter().sum::<f64>() / rates.len() as f64;
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        rates.iter().all(|r| (0.03..=0.07).contains(r)),
        format!("per-variable false-positive rate {lo:.3}..{hi:.3} (pooled {pooled:.4}) over {trials} null data sets"),
    )
}

fn one_nn_agreement(y: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = y.nrows();
    let hits = (0..n)
        .filter(|&i| {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let d = |j: usize| (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            labels[nearest] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}

fn embedding_sanity() -> Outcome {
    let mut nn_min = [f64::INFINITY; 2];
    let mut kl_ok = 0;
    let mut identical = true;
    for s in 0..10 {
        let (x, labels) = gaussian_blobs(&[8, 8, 8], 5, 8.0, 1.0, s);
        for (m, method) in [Method::Tsne, Method::Umap].into_iter().enumerate() {
            let config = EmbeddingConfig::new(method, s);
            let p = project(x.view(), &config).unwrap();
            let again = project(x.view(), &config).unwrap();
            identical &= p.points.iter().zip(again.points.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
            nn_min[m] = nn_min[m].min(one_nn_agreement(&p.points, &labels));
            if method == Method::Tsne {
                let after_exaggeration = p.objective_trace.iter().find(|t| t.0 == 250).unwrap().1;
                kl_ok += usize::from(p.objective_trace.last().unwrap().1 < after_exaggeration);
            }
        }
    }
    outcome(
        nn_min.iter().all(|&a| a >= 0.95) && kl_ok == 10 && identical,
        format!(
            "min 1-NN agreement t-SNE {:.3}, UMAP {:.3}; final KL below post-exaggeration KL in {kl_ok}/10; reruns identical: {identical}",
            nn_min[0], nn_min[1]
        ),
    )
}

/// Even-odd ray casting towards +x over every ring.
fn ray_crossing(rings: &[&[[f64; 2]]], p: [f64; 2]) -> bool {
    let mut inside = false;
    for ring in rings {
        for e in ring.windows(2) {
            let ([x1, y1], [x2, y2]) = (e[0], e[1]);
            if (y1 > p[1]) != (y2 > p[1]) && p[0] < x1 + (p[1] - y1) * (x2 - x1) / (y2 - y1) {
                inside = !inside;
            }
        }
    }
    inside
}

fn geo_conservation() -> Outcome {
    let map = synthetic_map(200, 0);
    let assignments = assign_da(&map.das, &map.neighborhoods).unwrap();
    let assigned = assignments.values().filter(|a| a.is_some()).count();
    let unassigned = assignments.values().filter(|a| a.is_none()).count();
    let counts_ok = assigned + unassigned == 200 && assignments.len() == map.das.len();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut probes, mut mismatches) = (0, 0);
    for parts in map.neighborhoods.entries.values() {
        for poly in parts {
            let xs = poly.exterior.iter().map(|p| p[0]);
            let ys = poly.exterior.iter().map(|p| p[1]);
            let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min) - 1.0, xs.fold(f64::NEG_INFINITY, f64::max) + 1.0);
            let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min) - 1.0, ys.fold(f64::NEG_INFINITY, f64::max) + 1.0);
            let mut rings: Vec<&[[f64; 2]]> = vec![&poly.exterior];
            rings.extend(poly.holes.iter().map(Vec::as_slice));
            for _ in 0..1000 {
                let p = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
                let expected = ray_crossing(&rings, p);
                let got = poly.locate(p);
                probes += 1;
                mismatches += usize::from((got == Location::Inside) != expected || got == Location::Boundary);
            }
        }
    }
    outcome(
        counts_ok && mismatches == 0,
        format!("{assigned} assigned + {unassigned} unassigned of 200 DAs; {mismatches} mismatches in {probes} probes"),
    )
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
    out.sort();
}

fn retention_golden() -> Outcome {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let fixture = golden.join("registrations_500.csv");
    let tmp = tempfile::tempdir().unwrap();
    let inputs = Inputs {
        registrations: Some(fixture.clone()),
        ..Default::default()
    };
    let manifest = run_bottomup_dir(&inputs, &BottomUpConfig::default(), tmp.path(), &RunOptions::default()).unwrap();
    let mut expected = Vec::new();
    collect_files(&golden.join("retention"), &golden.join("retention"), &mut expected);
    let written: Vec<String> = manifest.artifacts.iter().map(|a| a.path.clone()).collect();
    let differing: Vec<&String> = written
        .iter()
        .filter(|p| std::fs::read(tmp.path().join(p)).ok() != std::fs::read(golden.join("retention").join(p)).ok())
        .collect();

    let records = load_registrations(&fixture).unwrap();
    let run = run_bottomup(&records, &BottomUpConfig::default(), &GroupingRules::default(), None).unwrap();
    let exit_age = distributions(&run.journeys, Facet::ExitAge).unwrap();
    let mode = exit_age.mode().map(|r| r.key.clone());
    let modal_ok = matches!(mode.as_deref(), Some([Cell::Int(7..=9)]));
    outcome(
        records.len() == 500 && written == expected && differing.is_empty() && modal_ok,
        format!(
            "{} tables compared, {} differ; modal exit age {:?}",
            written.len(),
            differing.len(),
            mode.unwrap_or_default()
        ),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let fx = EdiFixture::default().generate(0);
    write_edi(&fx.dataset.edi, std::fs::File::create(dir.join("edi.csv")).unwrap()).unwrap();
    let catalog = generic_catalog(10);
    write_catalog(&catalog, std::fs::File::create(dir.join("catalog.csv")).unwrap()).unwrap();
    let profiles = census_profiles(&catalog, &fx.truth, &["v01"], 1.5, 0);
    let mut census = String::from("da_id");
    for v in &catalog {
        census += &format!(",{}", v.var_id);
    }
    census.push('\n');
    for p in &profiles {
        census += &p.neighborhood.0;
        for v in &catalog {
            census += &format!(",{}", p.get(&v.var_id).unwrap());
        }
        census.push('\n');
    }
    std::fs::write(dir.join("census.csv"), census).unwrap();
    let inputs = Inputs {
        edi: Some(dir.join("edi.csv")),
        census: Some(dir.join("census.csv")),
        catalog: Some(dir.join("catalog.csv")),
        ..Default::default()
    };
    let config = TopDownConfig {
        seed: 17,
        ..Default::default()
    };
    let run_with = |workers: usize| {
        let out = dir.join(format!("run{workers}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        pool.install(|| run_topdown_dir(&inputs, &config, &out, &RunOptions::default())).unwrap();
        out
    };
    let (one, eight) = (run_with(1), run_with(8));
    let mut files = Vec::new();
    collect_files(&one, &one, &mut files);
    let mut other = Vec::new();
    collect_files(&eight, &eight, &mut other);
    let differing = files
        .iter()
        .filter(|f| std::fs::read(one.join(f)).unwrap() != std::fs::read(eight.join(f)).ok().unwrap_or_default())
        .count();
    outcome(
        files == other && differing == 0 && files.contains(&MANIFEST_FILE.to_string()),
        format!("{} files in each run directory, {differing} differ between 1 and 8 workers", files.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Hopkins null calibration", hopkins_null_calibration),
        ("Paper band", paper_band),
        ("Merge phenomenon", merge_phenomenon),
        ("k-means oracle equivalence", kmeans_oracle),
        ("ANOVA exactness", anova_exactness),
        ("Screening calibration", screening_null),
        ("t-SNE/UMAP sanity", embedding_sanity),
        ("Geo conservation", geo_conservation),
        ("Retention golden run", retention_golden),
        ("End-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} [{:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
