//! End-to-end runs. `run_topdown` embeds, clusters, ranks and validates every
//! wave plus the pooled waves, then screens census variables; `run_bottomup`
//! filters registrations into journeys and their distribution tables. The
//! `*_dir` variants load inputs from disk and write a run directory with a
//! [`RunManifest`].

mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use manifest::{replay, Artifact, ErrorRecord, InputDigest, RunManifest, RunWriter, MANIFEST_FILE};

use crate::clustering::{
    cluster_embedding, default_k, rank_labels, stability, write_solution_csv, write_stability_csv, ClusterSolution,
    RankStatistic, StabilityReport, DEFAULT_RESTARTS,
};
use crate::domain::{
    default_catalog, load_catalog, load_edi, load_registrations, read_census_table, CensusProfile, Dataset, DaTable,
    NeighborhoodId, RegistrationRecord, Scale, Wave,
};
use crate::embedding::{build_matrix, embed, write_embedding_csv, write_trace_csv, Embedding, EmbeddingConfig, WaveMode};
use crate::error::{Error, Result};
use crate::geo::{profiles_from_geometry, GeometrySet};
use crate::retention::{
    apply_filters, build_journeys, distributions, enrollment_rates, populations_from_edi, write_enrollment_csv,
    write_facet_csv, write_journeys_csv, write_rejections_csv, ClientJourney, EnrollmentRate, Facet, FacetTable,
    FilterOutcome, FilterPolicy, GroupingRules, DEFAULT_GROUP,
};
use crate::seed::stage_seed;
use crate::stats::{pearson, screen, suggest_variables, write_screening_csv, ScreeningConfig, VariableTestResult};
use crate::validation::{hopkins_per_cluster, write_hopkins_csv, HopkinsConfig, HopkinsReport};

/// Point cloud the Hopkins statistic is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopkinsSpace {
    /// The 2-D layout that was clustered.
    #[default]
    Embedding,
    /// The standardized 5-scale vectors behind it.
    Raw,
}

impl std::str::FromStr for HopkinsSpace {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "embedding" => Ok(HopkinsSpace::Embedding),
            "raw" => Ok(HopkinsSpace::Raw),
            _ => Err(format!("unknown hopkins space `{s}` (expected embedding or raw)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopDownConfig {
    pub seed: u64,
    /// Its `seed` is replaced by a per-stage seed.
    pub embedding: EmbeddingConfig,
    /// `None` uses the per-mode default.
    pub single_wave_k: Option<usize>,
    pub all_wave_k: Option<usize>,
    pub restarts: usize,
    pub rank_scale: Scale,
    pub rank_statistic: RankStatistic,
    pub hopkins: HopkinsConfig,
    pub hopkins_space: HopkinsSpace,
    pub screening: ScreeningConfig,
    /// Wave whose clusters define the screening groups; `None` is the latest.
    pub screening_wave: Option<Wave>,
    pub suggest_top_n: usize,
}

impl Default for TopDownConfig {
    fn default() -> Self {
        TopDownConfig {
            seed: 0,
            embedding: EmbeddingConfig::default(),
            single_wave_k: None,
            all_wave_k: None,
            restarts: DEFAULT_RESTARTS,
            rank_scale: Scale::OneOrMore,
            rank_statistic: RankStatistic::Mean,
            hopkins: HopkinsConfig::default(),
            hopkins_space: HopkinsSpace::Embedding,
            screening: ScreeningConfig::default(),
            screening_wave: None,
            suggest_top_n: 10,
        }
    }
}

fn mode_name(mode: WaveMode) -> String {
    match mode {
        WaveMode::SingleWave(w) => format!("wave{w}"),
        WaveMode::AllWave => "all".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveRun {
    pub mode: WaveMode,
    pub embedding: Embedding,
    /// Labels ranked so 0 is the least vulnerable cluster.
    pub solution: ClusterSolution,
    pub hopkins: HopkinsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopDownRun {
    pub waves: Vec<WaveRun>,
    pub all_wave: WaveRun,
    pub stability: StabilityReport,
    pub screening: Option<Vec<VariableTestResult>>,
    pub suggestions: Option<Vec<String>>,
    pub stage_seeds: BTreeMap<String, u64>,
}

/// Stage names and seeds used by one wave mode.
fn wave_stages(root: u64, mode: WaveMode) -> [(String, u64); 3] {
    let m = mode_name(mode);
    ["embed", "cluster", "hopkins"].map(|s| {
        let name = format!("{s}/{m}");
        let seed = stage_seed(root, &name);
        (name, seed)
    })
}

/// Embedding stage of [`run_wave`], seeded as in a full run.
pub fn embed_wave(dataset: &Dataset, mode: WaveMode, config: &TopDownConfig) -> Result<Embedding> {
    let [(_, seed), _, _] = wave_stages(config.seed, mode);
    let emb_config = EmbeddingConfig {
        seed,
        ..config.embedding.clone()
    };
    Ok(embed(dataset, mode, &emb_config)?)
}

/// k for a wave mode after applying the per-mode default.
pub fn wave_k(mode: WaveMode, config: &TopDownConfig) -> usize {
    match mode {
        WaveMode::SingleWave(_) => config.single_wave_k,
        WaveMode::AllWave => config.all_wave_k,
    }
    .unwrap_or_else(|| default_k(mode, config.embedding.method))
}

/// Ranked k-means stage of [`run_wave`].
pub fn cluster_wave(dataset: &Dataset, embedding: &Embedding, config: &TopDownConfig) -> Result<ClusterSolution> {
    let mode = embedding.mode;
    let [_, (_, seed), _] = wave_stages(config.seed, mode);
    let raw = cluster_embedding(embedding, wave_k(mode, config), seed, config.restarts)?;
    let (solution, _) = rank_labels(&raw, dataset, config.rank_scale, config.rank_statistic)?;
    Ok(solution)
}

/// Per-cluster Hopkins stage of [`run_wave`].
pub fn validate_wave(
    dataset: &Dataset,
    embedding: &Embedding,
    solution: &ClusterSolution,
    config: &TopDownConfig,
) -> Result<HopkinsReport> {
    let mode = embedding.mode;
    let [_, _, (_, seed)] = wave_stages(config.seed, mode);
    let points: Array2<f64> = match config.hopkins_space {
        HopkinsSpace::Embedding => embedding.points.clone(),
        HopkinsSpace::Raw => build_matrix(dataset, mode, true)?.data,
    };
    let hopkins_config = HopkinsConfig {
        seed,
        ..config.hopkins.clone()
    };
    Ok(hopkins_per_cluster(points.view(), &solution.labels, &hopkins_config)?)
}

/// Embedding, ranked k-means and per-cluster Hopkins for one wave mode.
pub fn run_wave(dataset: &Dataset, mode: WaveMode, config: &TopDownConfig) -> Result<WaveRun> {
    let embedding = embed_wave(dataset, mode, config)?;
    let solution = cluster_wave(dataset, &embedding, config)?;
    let hopkins = validate_wave(dataset, &embedding, &solution, config)?;
    Ok(WaveRun {
        mode,
        embedding,
        solution,
        hopkins,
    })
}

/// Neighborhood → ranked label for a single-wave run.
pub fn neighborhood_labels(run: &WaveRun) -> BTreeMap<NeighborhoodId, usize> {
    run.solution
        .keys
        .iter()
        .zip(&run.solution.labels)
        .map(|(k, &l)| (k.neighborhood.clone(), l))
        .collect()
}

pub fn run_topdown(dataset: &Dataset, config: &TopDownConfig) -> Result<TopDownRun> {
    let waves = dataset.waves();
    if waves.is_empty() {
        return Err(Error::Invalid("dataset has no EDI waves".into()));
    }
    let mut stage_seeds = BTreeMap::new();
    let modes: Vec<WaveMode> = waves
        .iter()
        .map(|&w| WaveMode::SingleWave(w))
        .chain(std::iter::once(WaveMode::AllWave))
        .collect();
    for &m in &modes {
        stage_seeds.extend(wave_stages(config.seed, m));
    }
    let mut runs: Vec<WaveRun> = modes
        .par_iter()
        .map(|&m| run_wave(dataset, m, config))
        .collect::<Result<_>>()?;
    let all_wave = runs.pop().expect("all-wave run");

    let singles: Vec<ClusterSolution> = runs.iter().map(|r| r.solution.clone()).collect();
    let stability = stability(&singles, &all_wave.solution)?;

    let (screening, suggestions) = if dataset.census.is_empty() {
        (None, None)
    } else {
        let wave = config.screening_wave.unwrap_or(*waves.last().expect("non-empty"));
        let run = runs
            .iter()
            .find(|r| r.mode == WaveMode::SingleWave(wave))
            .ok_or_else(|| Error::Invalid(format!("screening wave {wave} is not in the dataset")))?;
        let results = screen(&dataset.census, &neighborhood_labels(run), &dataset.catalog, &config.screening)?;
        let suggested = suggest_variables(&results, config.suggest_top_n)?;
        (Some(results), Some(suggested))
    };

    Ok(TopDownRun {
        waves: runs,
        all_wave,
        stability,
        screening,
        suggestions,
        stage_seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BottomUpConfig {
    pub policy: FilterPolicy,
    /// Group whose enrollment rate is linked to the EDI scales.
    pub enrollment_group: String,
}

impl Default for BottomUpConfig {
    fn default() -> Self {
        BottomUpConfig {
            policy: FilterPolicy::default(),
            enrollment_group: DEFAULT_GROUP.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub scale: Scale,
    pub wave: Wave,
    pub n: usize,
    pub r: f64,
    pub p_value: f64,
}

/// Pearson correlation of enrollment rates against every EDI scale in `wave`.
pub fn link_rates(rates: &[EnrollmentRate], dataset: &Dataset, wave: Wave) -> Result<Vec<LinkRow>> {
    Scale::ALL
        .iter()
        .map(|&scale| {
            let (x, y): (Vec<f64>, Vec<f64>) = rates
                .iter()
                .filter_map(|r| dataset.record(&r.neighborhood, wave).map(|e| (r.rate, e.value(scale))))
                .unzip();
            let (r, p_value) = pearson(&x, &y)?;
            Ok(LinkRow {
                scale,
                wave,
                n: x.len(),
                r,
                p_value,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottomUpRun {
    pub filtered: FilterOutcome,
    pub journeys: Vec<ClientJourney>,
    pub tables: Vec<FacetTable>,
    pub enrollment: Option<Vec<EnrollmentRate>>,
}

/// Filters, journeys, every facet table and, given an EDI dataset, the
/// enrollment rate of the configured group per neighborhood.
pub fn run_bottomup(
    records: &[RegistrationRecord],
    config: &BottomUpConfig,
    rules: &GroupingRules,
    edi: Option<&Dataset>,
) -> Result<BottomUpRun> {
    let filtered = apply_filters(records, &config.policy);
    let journeys = build_journeys(&filtered.kept, rules);
    let tables = Facet::ALL
        .iter()
        .map(|&f| distributions(&journeys, f))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let enrollment = edi
        .map(|ds| {
            let ids: Vec<NeighborhoodId> = ds.neighborhoods.iter().map(|n| n.id.clone()).collect();
            enrollment_rates(&journeys, &config.enrollment_group, &ids, &populations_from_edi(ds))
        })
        .transpose()?;
    Ok(BottomUpRun {
        filtered,
        journeys,
        tables,
        enrollment,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Adds per-stage wall-clock timings to the manifest.
    pub record_timings: bool,
}

/// Files a run reads. Census rows are DA rows when both geometry files are
/// given, and neighborhood rows (id in `da_id`) otherwise.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    pub edi: Option<PathBuf>,
    pub census: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub da_geometry: Option<PathBuf>,
    pub neighborhood_geometry: Option<PathBuf>,
    pub registrations: Option<PathBuf>,
    pub rules: Option<PathBuf>,
}

impl Inputs {
    pub(crate) fn named(&self) -> Vec<(&'static str, &Path)> {
        [
            ("edi", &self.edi),
            ("census", &self.census),
            ("catalog", &self.catalog),
            ("da_geometry", &self.da_geometry),
            ("neighborhood_geometry", &self.neighborhood_geometry),
            ("registrations", &self.registrations),
            ("rules", &self.rules),
        ]
        .into_iter()
        .filter_map(|(n, p)| p.as_deref().map(|p| (n, p)))
        .collect()
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// One profile per table row, keyed by the row id.
pub fn profiles_from_table(table: &DaTable) -> Vec<CensusProfile> {
    table
        .rows
        .iter()
        .map(|row| CensusProfile {
            neighborhood: NeighborhoodId::new(row.da_id.clone()),
            values: table.var_ids.iter().cloned().zip(row.values.iter().copied()).collect(),
            ..Default::default()
        })
        .collect()
}

/// EDI plus optional census, aggregated to neighborhoods.
pub fn load_dataset(inputs: &Inputs) -> Result<Dataset> {
    let edi_path = inputs.edi.as_ref().ok_or_else(|| Error::Invalid("an EDI file is required".into()))?;
    let dataset = Dataset::from_edi(load_edi(edi_path)?)?;
    let Some(census_path) = &inputs.census else {
        return Ok(dataset);
    };
    let catalog = match &inputs.catalog {
        Some(p) => load_catalog(p)?,
        None => default_catalog(),
    };
    let table = read_census_table(&read(census_path)?, &catalog)?;
    let profiles = match (&inputs.da_geometry, &inputs.neighborhood_geometry) {
        (Some(da), Some(nb)) => {
            let da = GeometrySet::from_geojson(&String::from_utf8_lossy(&read(da)?))?;
            let nb = GeometrySet::from_geojson(&String::from_utf8_lossy(&read(nb)?))?;
            profiles_from_geometry(&da, &nb, &table, &catalog)?.profiles
        }
        (None, None) => profiles_from_table(&table),
        _ => return Err(Error::Invalid("DA and neighborhood geometry must be given together".into())),
    };
    Ok(dataset.with_census(catalog, profiles)?)
}

pub fn load_rules(inputs: &Inputs) -> Result<GroupingRules> {
    match &inputs.rules {
        Some(p) => Ok(GroupingRules::from_csv(&read(p)?)?),
        None => Ok(GroupingRules::default()),
    }
}

fn write_wave(w: &mut RunWriter, run: &WaveRun) -> Result<()> {
    let dir = mode_name(run.mode);
    w.csv(&format!("{dir}/embedding.csv"), |o| write_embedding_csv(&run.embedding, o))?;
    w.csv(&format!("{dir}/trace.csv"), |o| write_trace_csv(&run.embedding.objective_trace, o))?;
    w.csv(&format!("{dir}/clusters.csv"), |o| write_solution_csv(&run.embedding, &run.solution, o))?;
    w.csv(&format!("{dir}/hopkins.csv"), |o| write_hopkins_csv(&run.hopkins, o))?;
    Ok(())
}

/// Writes every table of a top-down run into the writer's directory.
pub fn write_topdown(w: &mut RunWriter, run: &TopDownRun) -> Result<()> {
    for r in run.waves.iter().chain(std::iter::once(&run.all_wave)) {
        write_wave(w, r)?;
    }
    w.csv("stability.csv", |o| write_stability_csv(&run.stability, o))?;
    if let Some(results) = &run.screening {
        w.csv("screening.csv", |o| write_screening_csv(results, o))?;
    }
    if let Some(s) = &run.suggestions {
        w.csv("suggestions.csv", |o| {
            let mut c = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(o);
            c.write_record(["rank", "var_id"])?;
            for (i, v) in s.iter().enumerate() {
                c.write_record([(i + 1).to_string(), v.clone()])?;
            }
            c.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

/// Loads inputs, runs the top-down pipeline and writes `out` with its
/// manifest.
pub fn run_topdown_dir(inputs: &Inputs, config: &TopDownConfig, out: &Path, options: &RunOptions) -> Result<RunManifest> {
    let mut w = RunWriter::create(out, "topdown", Some(config.seed), serde_json::to_value(config)?, inputs, options)?;
    let result = w
        .timed("load", || load_dataset(inputs))
        .and_then(|ds| w.timed("topdown", || run_topdown(&ds, config)));
    match result {
        Ok(run) => {
            w.stage_seeds(run.stage_seeds.clone());
            write_topdown(&mut w, &run)?;
            w.finish(None)
        }
        Err(e) => {
            w.finish(Some(&e))?;
            Err(e)
        }
    }
}

/// Loads registrations (and EDI if given), runs the bottom-up pipeline and
/// writes `out`. When a stage fails the manifest still lists what was
/// written and records the error.
pub fn run_bottomup_dir(inputs: &Inputs, config: &BottomUpConfig, out: &Path, options: &RunOptions) -> Result<RunManifest> {
    let mut w = RunWriter::create(out, "bottomup", None, serde_json::to_value(config)?, inputs, options)?;
    match bottomup_stages(&mut w, inputs, config) {
        Ok(()) => w.finish(None),
        Err(e) => {
            w.finish(Some(&e))?;
            Err(e)
        }
    }
}

fn bottomup_stages(w: &mut RunWriter, inputs: &Inputs, config: &BottomUpConfig) -> Result<()> {
    let path = inputs
        .registrations
        .as_ref()
        .ok_or_else(|| Error::Invalid("a registrations file is required".into()))?;
    let records = load_registrations(path)?;
    let rules = load_rules(inputs)?;
    let dataset = inputs.edi.as_ref().map(|_| load_dataset(inputs)).transpose()?;

    let filtered = apply_filters(&records, &config.policy);
    w.csv("rejected.csv", |o| write_rejections_csv(&filtered.rejected, o))?;
    let journeys = w.timed("journeys", || Ok(build_journeys(&filtered.kept, &rules)))?;
    w.csv("journeys.csv", |o| write_journeys_csv(&journeys, o))?;
    for f in Facet::ALL {
        let t = distributions(&journeys, f)?;
        w.csv(&format!("facets/{f}.csv"), |o| write_facet_csv(&t, o))?;
    }
    if let Some(ds) = &dataset {
        let ids: Vec<NeighborhoodId> = ds.neighborhoods.iter().map(|n| n.id.clone()).collect();
        let rates = enrollment_rates(&journeys, &config.enrollment_group, &ids, &populations_from_edi(ds))?;
        w.csv("enrollment.csv", |o| write_enrollment_csv(&rates, o))?;
        let wave = ds.latest_wave().expect("dataset with records");
        let links = link_rates(&rates, ds, wave)?;
        w.csv("link.csv", |o| write_link_csv(&links, o))?;
    }
    Ok(())
}

/// `scale,wave,n,r,p_value`
pub fn write_link_csv<W: std::io::Write>(rows: &[LinkRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["scale", "wave", "n", "r", "p_value"])?;
    for r in rows {
        w.write_record([
            r.scale.to_string(),
            r.wave.to_string(),
            r.n.to_string(),
            r.r.to_string(),
            r.p_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
