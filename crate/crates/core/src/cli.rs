//! Command-line front end. Tables go to `--out` or stdout; diagnostics go to
//! stderr. Exit codes: 0 success, 1 usage or validation error, 2 runtime
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::clustering::{stability, write_solution_csv, write_stability_csv, RankStatistic, DEFAULT_RESTARTS};
use crate::domain::{
    default_catalog, load_catalog, load_registrations, read_census_table, write_catalog, write_census_table,
    write_edi, write_registrations, CensusProfile, DaRow, DaTable, Dataset, Scale, Wave,
};
use crate::embedding::{write_embedding_csv, write_trace_csv, EmbeddingConfig, Init, Method, WaveMode};
use crate::error::{Error, Result};
use crate::geo::{aggregate, assign_da, GeometrySet, DEFAULT_WEIGHT_VAR};
use crate::pipeline::{
    cluster_wave, embed_wave, link_rates, load_dataset, load_rules, replay, run_bottomup,
    run_bottomup_dir, run_topdown_dir, validate_wave, write_link_csv, BottomUpConfig, HopkinsSpace, Inputs,
    RunOptions, TopDownConfig,
};
use crate::retention::{distributions, write_enrollment_csv, write_facet_csv, Facet, FilterPolicy, DEFAULT_GROUP};
use crate::service::{serve, AppState};
use crate::stats::{
    screen, suggest_variables, write_screening_csv, Correction, HomogeneityTest, NormalityTest, ScreeningConfig,
};
use crate::synth::{census_profiles, generic_catalog, synthetic_map, EdiFixture, RegistrationFixture};
use crate::validation::{Exponent, HopkinsConfig};

#[derive(Debug, Parser)]
#[command(name = "vulnscape", version, about = "Neighborhood vulnerability and program-retention analytics")]
pub struct Cli {
    /// Directory holding inputs that are not named explicitly
    #[arg(long, global = true, env = "VULNSCAPE_DATA_DIR", default_value = ".")]
    data_dir: PathBuf,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate EDI, census and geometry; print a summary
    Ingest(IngestCmd),
    /// Project one wave (or all waves) into the plane
    Embed(EmbedCmd),
    /// Embed, run k-means and rank clusters by vulnerability
    Cluster(ClusterCmd),
    /// Per-cluster Hopkins statistics
    Validate(ValidateCmd),
    /// Test census variables for differences between clusters
    Screen(ScreenCmd),
    /// Cluster-membership trajectories across waves
    Stability(StabilityCmd),
    /// Filter registrations into journeys and distribution tables
    Retention(RetentionCmd),
    /// Correlate program enrollment rates with EDI scales
    Link(LinkCmd),
    /// Serve the JSON API for the dashboard
    Serve(ServeCmd),
    /// Full top-down run into a directory with a manifest
    Run(RunCmd),
    /// Re-run a manifest and check every artifact digest
    Replay(ReplayCmd),
    /// Write a synthetic input set
    Synth(SynthCmd),
}

#[derive(Debug, Args)]
struct EdiArgs {
    /// EDI file [default: <data-dir>/edi.csv]
    #[arg(long)]
    edi: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CensusArgs {
    /// Census table [default: <data-dir>/census.csv]
    #[arg(long)]
    census: Option<PathBuf>,
    /// Variable catalog [default: <data-dir>/catalog.csv if present, else the built-in catalog]
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// DA polygons; census rows are then DA rows [default: <data-dir>/da.geojson if present]
    #[arg(long)]
    da_geometry: Option<PathBuf>,
    /// Neighborhood polygons [default: <data-dir>/neighborhoods.geojson if present]
    #[arg(long)]
    neighborhood_geometry: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RegistrationArgs {
    /// Registration file [default: <data-dir>/registrations.csv]
    #[arg(long)]
    registrations: Option<PathBuf>,
    /// Program grouping rules [default: <data-dir>/program_groups.csv if present, else built-in]
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Drop accounts created before this date
    #[arg(long, default_value = "2000-01-01")]
    min_account_created: NaiveDate,
    /// Drop clients born before this date
    #[arg(long, default_value = "2000-01-01")]
    min_birth_date: NaiveDate,
    /// Keep registrations that were not completed
    #[arg(long)]
    include_incomplete: bool,
    /// Keep offerings whose capacity exceeds this
    #[arg(long, default_value_t = 1)]
    max_registrants_above: u32,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    /// Root seed; every stage derives its own seed from it
    #[arg(long)]
    seed: u64,
    /// tsne, umap or pca
    #[arg(long, default_value_t = Method::Tsne)]
    method: Method,
    /// Wave to analyse [default: latest wave]
    #[arg(long, conflicts_with = "all_waves")]
    wave: Option<u8>,
    /// Pool every wave instead of one
    #[arg(long)]
    all_waves: bool,
    /// t-SNE perplexity [default: min(30, (n-1)/3)]
    #[arg(long)]
    perplexity: Option<f64>,
    /// t-SNE iterations
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// t-SNE learning rate [default: max(50, n/12)]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// UMAP neighborhood size
    #[arg(long, default_value_t = 15)]
    n_neighbors: usize,
    /// UMAP minimum distance
    #[arg(long, default_value_t = 0.1)]
    min_dist: f64,
    /// UMAP epochs
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    /// random or pca
    #[arg(long, default_value = "random")]
    init: Init,
    /// Skip z-scoring the scale columns
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Number of clusters [default: 3 per wave; 6 pooled, 4 pooled with umap]
    #[arg(long)]
    k: Option<usize>,
    /// k-means restarts
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    /// Scale used to order clusters by vulnerability
    #[arg(long, default_value_t = Scale::OneOrMore)]
    rank_scale: Scale,
    /// mean or median
    #[arg(long, default_value = "mean")]
    rank_statistic: RankStatistic,
}

#[derive(Debug, Args)]
struct HopkinsArgs {
    /// embedding (the clustered layout) or raw (standardized scales)
    #[arg(long, default_value = "embedding")]
    space: HopkinsSpace,
    /// Share of each cluster sampled per repeat
    #[arg(long, default_value_t = 0.3)]
    sample_fraction: f64,
    /// Smallest sample per repeat
    #[arg(long, default_value_t = 3)]
    min_sample: usize,
    /// Repeats averaged per cluster
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    /// d (distances raised to the dimension) or one
    #[arg(long, default_value = "d")]
    exponent: Exponent,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// none or benjamini_hochberg
    #[arg(long, default_value = "none")]
    correction: Correction,
    /// shapiro_wilk or anderson_darling
    #[arg(long, default_value = "shapiro_wilk")]
    normality_test: NormalityTest,
    /// brown_forsythe or bartlett
    #[arg(long, default_value = "brown_forsythe")]
    homogeneity_test: HomogeneityTest,
    /// Variables suggested for display
    #[arg(long, default_value_t = 10)]
    top_n: usize,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    census: CensusArgs,
    /// Write the neighborhood-level census table here [default: not written]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbedCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    out: OutArg,
    /// Also write the objective trace here [default: not written]
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ValidateCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    hopkins: HopkinsArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ScreenCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    census: CensusArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    screen: ScreenArgs,
    #[command(flatten)]
    out: OutArg,
    /// Write the suggested variables here [default: list them on stderr]
    #[arg(long)]
    suggestions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StabilityCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Clusters in the pooled solution [default: 6, 4 with umap]
    #[arg(long)]
    all_wave_k: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct RetentionCmd {
    #[command(flatten)]
    regs: RegistrationArgs,
    /// Print one distribution table to stdout [default: none; needs --out-dir then]
    #[arg(long, required_unless_present = "out_dir")]
    facet: Option<Facet>,
    /// Restrict --facet to journeys ending in this group [default: all journeys]
    #[arg(long, requires = "facet")]
    exit_group: Option<String>,
    /// Write every table and a manifest into this directory [default: not written]
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Record stage timings in the manifest
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct LinkCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    regs: RegistrationArgs,
    /// Program group whose enrollment rate is linked
    #[arg(long, default_value = DEFAULT_GROUP)]
    group: String,
    /// EDI wave to correlate against [default: latest wave]
    #[arg(long)]
    wave: Option<u8>,
    #[command(flatten)]
    out: OutArg,
    /// Also write per-neighborhood enrollment rates here [default: not written]
    #[arg(long)]
    enrollment: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeCmd {
    /// Address to listen on
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[derive(Debug, Args)]
struct RunCmd {
    #[command(flatten)]
    edi: EdiArgs,
    #[command(flatten)]
    census: CensusArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Clusters in the pooled solution [default: 6, 4 with umap]
    #[arg(long)]
    all_wave_k: Option<usize>,
    #[command(flatten)]
    hopkins: HopkinsArgs,
    #[command(flatten)]
    screen: ScreenArgs,
    /// Run directory
    #[arg(long)]
    out_dir: PathBuf,
    /// Record stage timings in the manifest
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct ReplayCmd {
    /// Manifest of the run to reproduce
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the reproduced run
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SynthCmd {
    /// Fixture seed
    #[arg(long)]
    seed: u64,
    /// Destination directory
    #[arg(long)]
    out_dir: PathBuf,
    /// Registration rows
    #[arg(long, default_value_t = 500)]
    records: usize,
    /// Dissemination areas; 0 writes a neighborhood-level census instead
    #[arg(long, default_value_t = 0)]
    das: usize,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error[runtime]: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let dir = cli.data_dir.as_path();
    match &cli.command {
        Command::Ingest(c) => ingest(dir, c),
        Command::Embed(c) => {
            let ds = load_edi_only(dir, &c.edi)?;
            let config = topdown_config(&c.embed, None, None, None, None);
            let emb = embed_wave(&ds, wave_mode(&ds, &c.embed)?, &config)?;
            for w in &emb.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(p) = &c.trace {
                write_file(p, &csv_bytes(|o| write_trace_csv(&emb.objective_trace, o))?)?;
            }
            emit(&c.out.out, &csv_bytes(|o| write_embedding_csv(&emb, o))?)
        }
        Command::Cluster(c) => {
            let ds = load_edi_only(dir, &c.edi)?;
            let config = topdown_config(&c.embed, Some(&c.cluster), None, None, None);
            let emb = embed_wave(&ds, wave_mode(&ds, &c.embed)?, &config)?;
            let sol = cluster_wave(&ds, &emb, &config)?;
            emit(&c.out.out, &csv_bytes(|o| write_solution_csv(&emb, &sol, o))?)
        }
        Command::Validate(c) => {
            let ds = load_edi_only(dir, &c.edi)?;
            let config = topdown_config(&c.embed, Some(&c.cluster), None, Some(&c.hopkins), None);
            let emb = embed_wave(&ds, wave_mode(&ds, &c.embed)?, &config)?;
            let sol = cluster_wave(&ds, &emb, &config)?;
            let report = validate_wave(&ds, &emb, &sol, &config)?;
            if let Some(h) = report.mean_cluster_h() {
                eprintln!("mean cluster H = {h:.4}");
            }
            emit(&c.out.out, &csv_bytes(|o| crate::validation::write_hopkins_csv(&report, o))?)
        }
        Command::Screen(c) => screen_cmd(dir, c),
        Command::Stability(c) => {
            let ds = load_edi_only(dir, &c.edi)?;
            let config = topdown_config(&c.embed, Some(&c.cluster), c.all_wave_k, None, None);
            let singles = ds
                .waves()
                .into_iter()
                .map(|w| single_solution(&ds, WaveMode::SingleWave(w), &config))
                .collect::<Result<Vec<_>>>()?;
            let all = single_solution(&ds, WaveMode::AllWave, &config)?;
            let report = stability(&singles, &all)?;
            emit(&c.out.out, &csv_bytes(|o| write_stability_csv(&report, o))?)
        }
        Command::Retention(c) => retention(dir, c),
        Command::Link(c) => link(dir, c),
        Command::Serve(c) => {
            let state = AppState::from_data_dir(dir)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("runtime", e))?;
            eprintln!("listening on http://{}", c.addr);
            rt.block_on(serve(c.addr, state))
        }
        Command::Run(c) => {
            let inputs = Inputs {
                edi: Some(edi_path(dir, &c.edi)),
                ..census_inputs(dir, &c.census)
            };
            let config = topdown_config(&c.embed, Some(&c.cluster), c.all_wave_k, Some(&c.hopkins), Some(&c.screen));
            if c.embed.wave.is_some() || c.embed.all_waves {
                eprintln!("warning: --wave and --all-waves are ignored; a run covers every wave");
            }
            let m = run_topdown_dir(&inputs, &config, &c.out_dir, &RunOptions { record_timings: c.timings })?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(())
        }
        Command::Replay(c) => {
            let m = replay(&c.manifest, &c.out_dir)?;
            eprintln!("replay matches: {} artifacts", m.artifacts.len());
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(())
        }
        Command::Synth(c) => synth(c),
    }
}

fn single_solution(ds: &Dataset, mode: WaveMode, config: &TopDownConfig) -> Result<crate::clustering::ClusterSolution> {
    let emb = embed_wave(ds, mode, config)?;
    cluster_wave(ds, &emb, config)
}

fn topdown_config(
    e: &EmbedArgs,
    c: Option<&ClusterArgs>,
    all_wave_k: Option<usize>,
    h: Option<&HopkinsArgs>,
    s: Option<&ScreenArgs>,
) -> TopDownConfig {
    let d = TopDownConfig::default();
    let embedding = EmbeddingConfig {
        method: e.method,
        seed: e.seed,
        perplexity: e.perplexity,
        iterations: e.iterations,
        learning_rate: e.learning_rate,
        n_neighbors: e.n_neighbors,
        min_dist: e.min_dist,
        epochs: e.epochs,
        standardize: !e.no_standardize,
        init: e.init,
    };
    // A single-mode --k applies to whichever mode is being clustered.
    let k = c.and_then(|c| c.k);
    let (single_wave_k, all_k) = if e.all_waves { (None, k) } else { (k, all_wave_k) };
    TopDownConfig {
        seed: e.seed,
        embedding,
        single_wave_k,
        all_wave_k: all_k,
        restarts: c.map_or(d.restarts, |c| c.restarts),
        rank_scale: c.map_or(d.rank_scale, |c| c.rank_scale),
        rank_statistic: c.map_or(d.rank_statistic, |c| c.rank_statistic),
        hopkins: h.map_or(d.hopkins.clone(), |h| HopkinsConfig {
            sample_fraction: h.sample_fraction,
            min_sample: h.min_sample,
            repeats: h.repeats,
            exponent: h.exponent,
            ..Default::default()
        }),
        hopkins_space: h.map_or(d.hopkins_space, |h| h.space),
        screening: s.map_or(d.screening.clone(), screening_config),
        suggest_top_n: s.map_or(d.suggest_top_n, |s| s.top_n),
        ..d
    }
}

fn screening_config(s: &ScreenArgs) -> ScreeningConfig {
    ScreeningConfig {
        alpha: s.alpha,
        correction: s.correction,
        normality_test: s.normality_test,
        homogeneity_test: s.homogeneity_test,
    }
}

fn wave_mode(ds: &Dataset, e: &EmbedArgs) -> Result<WaveMode> {
    if e.all_waves {
        return Ok(WaveMode::AllWave);
    }
    Ok(WaveMode::SingleWave(wave_or_latest(ds, e.wave)?))
}

fn wave_or_latest(ds: &Dataset, wave: Option<u8>) -> Result<Wave> {
    match wave {
        Some(w) => Ok(Wave::new(i64::from(w))?),
        None => ds.latest_wave().ok_or_else(|| Error::Invalid("the EDI file has no rows".into())),
    }
}

fn edi_path(dir: &Path, a: &EdiArgs) -> PathBuf {
    a.edi.clone().unwrap_or_else(|| dir.join("edi.csv"))
}

fn existing(dir: &Path, name: &str) -> Option<PathBuf> {
    let p = dir.join(name);
    p.exists().then_some(p)
}

fn census_inputs(dir: &Path, a: &CensusArgs) -> Inputs {
    let census = a.census.clone().or_else(|| existing(dir, "census.csv"));
    let explicit = a.da_geometry.is_some() || a.neighborhood_geometry.is_some();
    let (da, nb) = if explicit {
        (a.da_geometry.clone(), a.neighborhood_geometry.clone())
    } else {
        match (existing(dir, "da.geojson"), existing(dir, "neighborhoods.geojson")) {
            (Some(d), Some(n)) if census.is_some() => (Some(d), Some(n)),
            _ => (None, None),
        }
    };
    Inputs {
        census,
        catalog: a.catalog.clone().or_else(|| existing(dir, "catalog.csv")),
        da_geometry: da,
        neighborhood_geometry: nb,
        ..Default::default()
    }
}

fn registration_inputs(dir: &Path, a: &RegistrationArgs) -> Inputs {
    Inputs {
        registrations: Some(a.registrations.clone().unwrap_or_else(|| dir.join("registrations.csv"))),
        rules: a.rules.clone().or_else(|| existing(dir, "program_groups.csv")),
        ..Default::default()
    }
}

fn policy(a: &RegistrationArgs) -> FilterPolicy {
    FilterPolicy {
        min_account_created: a.min_account_created,
        min_birth_date: a.min_birth_date,
        require_completed: !a.include_incomplete,
        min_max_registrants_exclusive: a.max_registrants_above,
    }
}

fn load_edi_only(dir: &Path, a: &EdiArgs) -> Result<Dataset> {
    load_dataset(&Inputs {
        edi: Some(edi_path(dir, a)),
        ..Default::default()
    })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| Error::io("stdout", e))
        }
    }
}

fn ingest(dir: &Path, c: &IngestCmd) -> Result<()> {
    let edi = edi_path(dir, &c.edi);
    let inputs = Inputs {
        edi: Some(edi.clone()),
        ..census_inputs(dir, &c.census)
    };
    let mut summary = json!({ "edi": edi });
    let ds = load_dataset(&Inputs {
        census: None,
        ..inputs.clone()
    })?;
    summary["neighborhoods"] = json!(ds.neighborhoods.len());
    summary["waves"] = json!(ds.waves());
    summary["edi_rows"] = json!(ds.edi.len());

    let Some(census_path) = &inputs.census else {
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    };
    let catalog = match &inputs.catalog {
        Some(p) => load_catalog(p)?,
        None => default_catalog(),
    };
    let bytes = std::fs::read(census_path).map_err(|e| Error::io(census_path, e))?;
    let table = read_census_table(&bytes, &catalog)?;
    summary["census_rows"] = json!(table.rows.len());
    summary["census_variables"] = json!(table.var_ids.len());
    let profiles = match (&inputs.da_geometry, &inputs.neighborhood_geometry) {
        (Some(da), Some(nb)) => {
            let read = |p: &Path| -> Result<GeometrySet> {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(GeometrySet::from_geojson(&text)?)
            };
            let assignments = assign_da(&read(da)?, &read(nb)?)?;
            let assigned = assignments.values().filter(|v| v.is_some()).count();
            summary["das"] = json!(assignments.len());
            summary["assigned"] = json!(assigned);
            summary["unassigned"] = json!(assignments.len() - assigned);
            let agg = aggregate(&assignments, &table, &catalog, DEFAULT_WEIGHT_VAR)?;
            agg.profiles
        }
        (None, None) => crate::pipeline::profiles_from_table(&table),
        _ => return Err(Error::Invalid("--da-geometry and --neighborhood-geometry must be given together".into())),
    };
    let ds = ds.with_census(catalog, profiles.clone())?;
    summary["profiles"] = json!(ds.census.len());
    if let Some(out) = &c.out {
        let mut buf = Vec::new();
        write_census_table(&profile_table(&table.var_ids, &profiles), &mut buf)?;
        write_file(out, &buf)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// Neighborhood profiles as a census table keyed by neighborhood id.
fn profile_table(var_ids: &[String], profiles: &[CensusProfile]) -> DaTable {
    DaTable {
        var_ids: var_ids.to_vec(),
        rows: profiles
            .iter()
            .map(|p| DaRow {
                da_id: p.neighborhood.0.clone(),
                values: var_ids.iter().map(|v| p.get(v)).collect(),
            })
            .collect(),
    }
}

fn screen_cmd(dir: &Path, c: &ScreenCmd) -> Result<()> {
    let inputs = Inputs {
        edi: Some(edi_path(dir, &c.edi)),
        ..census_inputs(dir, &c.census)
    };
    if inputs.census.is_none() {
        return Err(Error::Invalid(format!(
            "no census table: pass --census or place census.csv in {}",
            dir.display()
        )));
    }
    let ds = load_dataset(&inputs)?;
    let config = topdown_config(&c.embed, Some(&c.cluster), None, None, Some(&c.screen));
    config.screening.check()?;
    if c.embed.all_waves {
        return Err(Error::Invalid("screening needs a single wave".into()));
    }
    let wave = wave_or_latest(&ds, c.embed.wave)?;
    let sol = single_solution(&ds, WaveMode::SingleWave(wave), &config)?;
    let labels = sol.keys.iter().map(|k| k.neighborhood.clone()).zip(sol.labels.iter().copied()).collect();
    let results = screen(&ds.census, &labels, &ds.catalog, &config.screening)?;
    let suggested = suggest_variables(&results, config.suggest_top_n)?;
    match &c.suggestions {
        Some(p) => write_file(p, format!("{}\n", suggested.join("\n")).as_bytes())?,
        None => eprintln!("suggested: {}", suggested.join(", ")),
    }
    emit(&c.out.out, &csv_bytes(|o| write_screening_csv(&results, o))?)
}

fn retention(dir: &Path, c: &RetentionCmd) -> Result<()> {
    let inputs = registration_inputs(dir, &c.regs);
    let config = BottomUpConfig {
        policy: policy(&c.regs),
        ..Default::default()
    };
    if let Some(out) = &c.out_dir {
        let m = run_bottomup_dir(&inputs, &config, out, &RunOptions { record_timings: c.timings })?;
        eprintln!("wrote {} artifacts to {}", m.artifacts.len(), out.display());
    }
    if let Some(facet) = c.facet {
        let records = load_registrations(inputs.registrations.as_ref().expect("set above"))?;
        let run = run_bottomup(&records, &config, &load_rules(&inputs)?, None)?;
        eprintln!("kept {} of {} registrations", run.filtered.kept.len(), records.len());
        let mut journeys = run.journeys;
        if let Some(g) = &c.exit_group {
            journeys.retain(|j| &j.exit_group == g);
        }
        let table = distributions(&journeys, facet)?;
        emit(&None, &csv_bytes(|o| write_facet_csv(&table, o))?)?;
    }
    Ok(())
}

fn link(dir: &Path, c: &LinkCmd) -> Result<()> {
    let inputs = Inputs {
        edi: Some(edi_path(dir, &c.edi)),
        ..registration_inputs(dir, &c.regs)
    };
    let ds = load_dataset(&inputs)?;
    let wave = wave_or_latest(&ds, c.wave)?;
    let records = load_registrations(inputs.registrations.as_ref().expect("set above"))?;
    let config = BottomUpConfig {
        policy: policy(&c.regs),
        enrollment_group: c.group.clone(),
    };
    let rules = load_rules(&inputs)?;
    if !rules.groups().iter().any(|g| g == &c.group) {
        return Err(Error::Invalid(format!("unknown program group `{}`", c.group)));
    }
    let run = run_bottomup(&records, &config, &rules, Some(&ds))?;
    let rates = run.enrollment.expect("EDI given");
    if let Some(p) = &c.enrollment {
        write_file(p, &csv_bytes(|o| write_enrollment_csv(&rates, o))?)?;
    }
    let rows = link_rates(&rates, &ds, wave)?;
    emit(&c.out.out, &csv_bytes(|o| write_link_csv(&rows, o))?)
}

fn synth(c: &SynthCmd) -> Result<()> {
    let dir = &c.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fx = EdiFixture::default().generate(c.seed);
    let mut buf = Vec::new();
    write_edi(&fx.dataset.edi, &mut buf)?;
    write_file(&dir.join("edi.csv"), &buf)?;

    let map = synthetic_map(c.das.max(1), c.seed);
    let geo = |set: &GeometrySet| serde_json::to_vec_pretty(&set.to_geojson());
    write_file(&dir.join("neighborhoods.geojson"), &geo(&map.neighborhoods)?)?;
    let mut census = Vec::new();
    let mut catalog = Vec::new();
    if c.das > 0 {
        write_file(&dir.join("da.geojson"), &geo(&map.das)?)?;
        write_census_table(&map.table, &mut census)?;
        let used: Vec<_> = default_catalog()
            .into_iter()
            .filter(|v| map.table.var_ids.contains(&v.var_id))
            .collect();
        write_catalog(&used, &mut catalog)?;
    } else {
        let vars = generic_catalog(10);
        let profiles = census_profiles(&vars, &fx.truth, &["v01", "v02"], 1.5, c.seed);
        let ids: Vec<String> = vars.iter().map(|v| v.var_id.clone()).collect();
        write_census_table(&profile_table(&ids, &profiles), &mut census)?;
        write_catalog(&vars, &mut catalog)?;
    }
    write_file(&dir.join("census.csv"), &census)?;
    write_file(&dir.join("catalog.csv"), &catalog)?;

    let records = RegistrationFixture { records: c.records }.generate(c.seed);
    let mut regs = Vec::new();
    write_registrations(&records, &mut regs)?;
    write_file(&dir.join("registrations.csv"), &regs)?;
    eprintln!("wrote synthetic inputs to {}", dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("vulnscape").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flag_defaults_match_library_defaults() {
        let cli = parse(&["validate", "--seed", "3"]);
        let Command::Validate(c) = cli.command else { panic!() };
        let config = topdown_config(&c.embed, Some(&c.cluster), None, Some(&c.hopkins), None);
        let expected = TopDownConfig {
            seed: 3,
            embedding: EmbeddingConfig {
                seed: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(config, expected);

        let cli = parse(&["screen", "--seed", "3"]);
        let Command::Screen(c) = cli.command else { panic!() };
        assert_eq!(screening_config(&c.screen), ScreeningConfig::default());
        assert_eq!(c.screen.top_n, TopDownConfig::default().suggest_top_n);

        let cli = parse(&["retention", "--facet", "exit_age"]);
        let Command::Retention(c) = cli.command else { panic!() };
        assert_eq!(policy(&c.regs), FilterPolicy::default());
    }

    #[test]
    fn k_follows_the_chosen_mode() {
        let cli = parse(&["cluster", "--seed", "1", "--all-waves", "--k", "5"]);
        let Command::Cluster(c) = cli.command else { panic!() };
        let config = topdown_config(&c.embed, Some(&c.cluster), None, None, None);
        assert_eq!((config.single_wave_k, config.all_wave_k), (None, Some(5)));
    }

    #[test]
    fn stochastic_commands_require_seed() {
        for cmd in ["embed", "cluster", "validate", "screen", "stability", "run", "synth"] {
            let err = Cli::try_parse_from(["vulnscape", cmd]).unwrap_err();
            assert_eq!(err.kind(), clap::error::ErrorKind::MissingRequiredArgument, "{cmd}");
            assert!(err.to_string().contains("--seed"), "{cmd}");
        }
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
