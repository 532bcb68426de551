//! JSON HTTP service for the dashboard. Every analysis parameter is a request
//! field with the library default; sessions are keyed by the `x-session-id`
//! header and hold uploads and cached results in memory only.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clustering::{default_k, stability, ClusterError, RankStatistic, DEFAULT_RESTARTS};
use crate::domain::{read_registrations, Dataset, RegistrationRecord, Scale, Wave};
use crate::embedding::{EmbeddingConfig, Init, Method, WaveMode};
use crate::error::{Error, ErrorClass, Result};
use crate::pipeline::{
    cluster_wave, embed_wave, load_dataset, neighborhood_labels, run_wave, HopkinsSpace, Inputs, TopDownConfig,
};
use crate::retention::{apply_filters, build_journeys, distributions, Facet, FilterPolicy, GroupingRules, RejectReason};
use crate::stats::{screen, suggest_variables, Correction, HomogeneityTest, NormalityTest, ScreeningConfig, VariableTestResult};
use crate::validation::{Exponent, HopkinsConfig};

pub const SESSION_HEADER: &str = "x-session-id";
const DEFAULT_SESSION: &str = "default";

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = match self.class() {
            ErrorClass::Invalid => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Runtime => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Default)]
struct Session {
    registrations: Option<Vec<RegistrationRecord>>,
    policy: FilterPolicy,
    last_screen: Option<Vec<VariableTestResult>>,
    /// Full request text → response; the key is compared in full.
    cache: HashMap<String, Value>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done { result: Value },
    Failed { code: String, message: String },
}

pub struct AppState {
    dataset: Arc<Dataset>,
    geojson: Option<Value>,
    rules: GroupingRules,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(dataset: Dataset, geojson: Option<Value>) -> Self {
        AppState {
            dataset: Arc::new(dataset),
            geojson,
            rules: GroupingRules::default(),
            sessions: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        }
    }

    /// Loads `edi.csv` and, when present, `census.csv`, `catalog.csv`,
    /// `da.geojson` and `neighborhoods.geojson` from a data directory.
    pub fn from_data_dir(dir: &Path) -> Result<Self> {
        let opt = |name: &str| -> Option<PathBuf> {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        let census = opt("census.csv");
        let geometry = census.as_ref().and(opt("da.geojson").zip(opt("neighborhoods.geojson")));
        let inputs = Inputs {
            edi: Some(dir.join("edi.csv")),
            catalog: opt("catalog.csv"),
            da_geometry: geometry.as_ref().map(|g| g.0.clone()),
            neighborhood_geometry: geometry.map(|g| g.1),
            census,
            ..Default::default()
        };
        let dataset = load_dataset(&inputs)?;
        let geojson = match opt("neighborhoods.geojson") {
            Some(p) => {
                let text = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
                Some(serde_json::from_slice(&text)?)
            }
            None => None,
        };
        Ok(AppState::new(dataset, geojson))
    }

    fn session(&self, headers: &HeaderMap) -> Arc<Mutex<Session>> {
        let id = headers
            .get(SESSION_HEADER)
            .and_then(|v| v.to_str().ok())
            .filter(|s| !s.is_empty())
            .unwrap_or(DEFAULT_SESSION)
            .to_string();
        self.sessions.lock().expect("sessions lock").entry(id).or_default().clone()
    }
}

type Shared = Arc<AppState>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/edi", get(edi))
        .route("/api/embed", post(embed_handler))
        .route("/api/cluster", post(cluster))
        .route("/api/stability", get(stability_handler))
        .route("/api/validate", post(validate))
        .route("/api/census/screen", post(census_screen))
        .route("/api/census/suggest", get(census_suggest))
        .route("/api/class/upload", post(class_upload))
        .route("/api/class/summary", get(class_summary))
        .route("/api/geo/neighborhoods", get(geo_neighborhoods))
        .route("/api/jobs", post(submit_job))
        .route("/api/jobs/{id}", get(job_status))
        .with_state(Arc::new(state))
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, state: AppState) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    axum::serve(listener, router(state)).await.map_err(|e| Error::io(addr.to_string(), e))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::io("worker", std::io::Error::other(e.to_string())))?
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(serde_json::from_str("{}")?);
    }
    Ok(serde_json::from_slice(body)?)
}

fn param<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    q.get(name)
        .map(|v| v.parse::<T>().map_err(|e| Error::Invalid(format!("query `{name}`: {e}"))))
        .transpose()
}

fn wave_or_latest(ds: &Dataset, wave: Option<u8>) -> Result<Wave> {
    match wave {
        Some(w) => Ok(Wave::new(i64::from(w))?),
        None => ds.latest_wave().ok_or_else(|| Error::Precondition("dataset has no EDI waves".into())),
    }
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn edi(State(s): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Result<Json<Value>> {
    let scale: Scale = param::<Scale>(&q, "scale")?.unwrap_or(Scale::OneOrMore);
    let wave = wave_or_latest(&s.dataset, param::<u8>(&q, "wave")?)?;
    let rows: Vec<Value> = s
        .dataset
        .edi
        .iter()
        .filter(|r| r.wave == wave)
        .map(|r| {
            json!({
                "neighborhood": r.neighborhood.id,
                "name": r.neighborhood.name,
                "value": r.value(scale),
                "n_children": r.n_children,
            })
        })
        .collect();
    Ok(Json(json!({ "wave": wave, "scale": scale, "rows": rows })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeParam {
    #[default]
    SingleWave,
    AllWave,
}

/// Shared analysis parameters; absent fields take the library defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct AnalysisRequest {
    mode: ModeParam,
    method: Method,
    wave: Option<u8>,
    k: Option<usize>,
    seed: u64,
    restarts: usize,
    perplexity: Option<f64>,
    iterations: Option<usize>,
    init: Init,
    rank_scale: Scale,
    rank_statistic: RankStatistic,
}

impl Default for AnalysisRequest {
    fn default() -> Self {
        AnalysisRequest {
            mode: ModeParam::SingleWave,
            method: Method::Tsne,
            wave: None,
            k: None,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            perplexity: None,
            iterations: None,
            init: Init::Random,
            rank_scale: Scale::OneOrMore,
            rank_statistic: RankStatistic::Mean,
        }
    }
}

impl AnalysisRequest {
    fn wave_mode(&self, ds: &Dataset) -> Result<WaveMode> {
        Ok(match self.mode {
            ModeParam::SingleWave => WaveMode::SingleWave(wave_or_latest(ds, self.wave)?),
            ModeParam::AllWave => WaveMode::AllWave,
        })
    }

    fn embedding_config(&self) -> EmbeddingConfig {
        let d = EmbeddingConfig::default();
        EmbeddingConfig {
            method: self.method,
            seed: self.seed,
            perplexity: self.perplexity,
            iterations: self.iterations.unwrap_or(d.iterations),
            init: self.init,
            ..d
        }
    }

    fn topdown(&self) -> TopDownConfig {
        TopDownConfig {
            seed: self.seed,
            embedding: self.embedding_config(),
            single_wave_k: self.k.filter(|_| self.mode == ModeParam::SingleWave),
            all_wave_k: self.k.filter(|_| self.mode == ModeParam::AllWave),
            restarts: self.restarts,
            rank_scale: self.rank_scale,
            rank_statistic: self.rank_statistic,
            ..Default::default()
        }
    }

    fn check_k(&self, mode: WaveMode, ds: &Dataset) -> Result<usize> {
        let n = match mode {
            WaveMode::SingleWave(w) => ds.edi.iter().filter(|r| r.wave == w).count(),
            WaveMode::AllWave => ds.edi.len(),
        };
        let k = self.k.unwrap_or_else(|| default_k(mode, self.method));
        if k == 0 || k > n {
            return Err(ClusterError::KExceedsN { k, n }.into());
        }
        Ok(k)
    }
}

/// Runs `f` once per distinct (endpoint, body) in a session.
async fn cached(
    s: &Shared,
    headers: &HeaderMap,
    key: String,
    f: impl FnOnce(Shared) -> Result<Value> + Send + 'static,
) -> Result<Json<Value>> {
    let session = s.session(headers);
    if let Some(v) = session.lock().expect("session lock").cache.get(&key) {
        return Ok(Json(v.clone()));
    }
    let shared = s.clone();
    let v = blocking(move || f(shared)).await?;
    session.lock().expect("session lock").cache.insert(key, v.clone());
    Ok(Json(v))
}

fn keyed<T: Serialize>(endpoint: &str, req: &T) -> Result<String> {
    Ok(format!("{endpoint} {}", serde_json::to_string(req)?))
}

async fn embed_handler(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>> {
    let req: AnalysisRequest = parse_body(&body)?;
    let key = keyed("embed", &req)?;
    cached(&s, &headers, key, move |s| {
        let mode = req.wave_mode(&s.dataset)?;
        let emb = embed_wave(&s.dataset, mode, &req.topdown())?;
        let points: Vec<Value> = emb
            .keys
            .iter()
            .zip(emb.points.rows())
            .map(|(k, p)| json!({ "neighborhood": k.neighborhood, "wave": k.wave, "x": p[0], "y": p[1] }))
            .collect();
        Ok(json!({
            "mode": mode,
            "points": points,
            "objective_trace": emb.objective_trace,
            "config": emb.config,
            "warnings": emb.warnings,
        }))
    })
    .await
}

/// min, q1, median, q3, max with linear interpolation between order statistics.
fn five_numbers(mut v: Vec<f64>) -> [f64; 5] {
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    [v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]]
}

async fn cluster(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>> {
    let req: AnalysisRequest = parse_body(&body)?;
    let mode = req.wave_mode(&s.dataset)?;
    req.check_k(mode, &s.dataset)?;
    let key = keyed("cluster", &req)?;
    cached(&s, &headers, key, move |s| {
        let ds = &s.dataset;
        let config = req.topdown();
        let emb = embed_wave(ds, mode, &config)?;
        let sol = cluster_wave(ds, &emb, &config)?;
        let mut per: BTreeMap<usize, BTreeMap<Scale, Vec<f64>>> = BTreeMap::new();
        let points: Vec<Value> = emb
            .keys
            .iter()
            .zip(emb.points.rows())
            .zip(&sol.labels)
            .map(|((key, p), &label)| {
                if let Some(rec) = ds.record(&key.neighborhood, key.wave) {
                    for sc in Scale::ALL {
                        per.entry(label).or_default().entry(sc).or_default().push(rec.value(sc));
                    }
                }
                json!({ "neighborhood": key.neighborhood, "wave": key.wave, "x": p[0], "y": p[1], "label": label })
            })
            .collect();
        let summaries: Vec<Value> = per
            .into_iter()
            .map(|(label, scales)| {
                let boxes: BTreeMap<Scale, [f64; 5]> = scales.into_iter().map(|(sc, v)| (sc, five_numbers(v))).collect();
                json!({ "label": label, "size": sol.sizes()[label], "scales": boxes })
            })
            .collect();
        Ok(json!({
            "mode": mode,
            "method": req.method,
            "k": sol.k,
            "seed": req.seed,
            "wcss": sol.wcss,
            "points": points,
            "clusters": summaries,
        }))
    })
    .await
}

fn stability_value(s: &AppState, req: &AnalysisRequest) -> Result<Value> {
    let config = req.topdown();
    let waves = s.dataset.waves();
    let mut singles = Vec::new();
    for w in &waves {
        singles.push(run_wave(&s.dataset, WaveMode::SingleWave(*w), &config)?.solution);
    }
    let all = run_wave(&s.dataset, WaveMode::AllWave, &config)?.solution;
    let report = stability(&singles, &all)?;
    Ok(serde_json::to_value(report)?)
}

async fn stability_handler(
    State(s): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Value>> {
    let mut req = AnalysisRequest {
        seed: param(&q, "seed")?.unwrap_or(0),
        method: param(&q, "method")?.unwrap_or(Method::Tsne),
        ..Default::default()
    };
    req.k = param(&q, "k")?;
    let key = keyed("stability", &req)?;
    cached(&s, &headers, key, move |s| stability_value(&s, &req)).await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct ValidateRequest {
    #[serde(flatten)]
    analysis: AnalysisRequest,
    space: HopkinsSpace,
    sample_fraction: f64,
    repeats: usize,
    exponent: Exponent,
}

impl Default for ValidateRequest {
    fn default() -> Self {
        let h = HopkinsConfig::default();
        ValidateRequest {
            analysis: AnalysisRequest::default(),
            space: HopkinsSpace::Embedding,
            sample_fraction: h.sample_fraction,
            repeats: h.repeats,
            exponent: h.exponent,
        }
    }
}

async fn validate(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>> {
    let req: ValidateRequest = parse_body(&body)?;
    let mode = req.analysis.wave_mode(&s.dataset)?;
    req.analysis.check_k(mode, &s.dataset)?;
    let key = keyed("validate", &req)?;
    cached(&s, &headers, key, move |s| {
        let config = TopDownConfig {
            hopkins: HopkinsConfig {
                sample_fraction: req.sample_fraction,
                repeats: req.repeats,
                exponent: req.exponent,
                ..Default::default()
            },
            hopkins_space: req.space,
            ..req.analysis.topdown()
        };
        let run = run_wave(&s.dataset, mode, &config)?;
        Ok(json!({
            "mode": mode,
            "space": req.space,
            "per_cluster": run.hopkins.per_cluster,
            "overall": run.hopkins.overall,
            "mean_cluster_h": run.hopkins.mean_cluster_h(),
            "config": run.hopkins.config,
        }))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct ScreenRequest {
    #[serde(flatten)]
    analysis: AnalysisRequest,
    alpha: f64,
    correction: Correction,
    normality_test: NormalityTest,
    homogeneity_test: HomogeneityTest,
}

impl Default for ScreenRequest {
    fn default() -> Self {
        let c = ScreeningConfig::default();
        ScreenRequest {
            analysis: AnalysisRequest::default(),
            alpha: c.alpha,
            correction: c.correction,
            normality_test: c.normality_test,
            homogeneity_test: c.homogeneity_test,
        }
    }
}

async fn census_screen(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>> {
    let req: ScreenRequest = parse_body(&body)?;
    if s.dataset.census.is_empty() {
        return Err(Error::Precondition("no census data is loaded".into()));
    }
    let config = ScreeningConfig {
        alpha: req.alpha,
        correction: req.correction,
        normality_test: req.normality_test,
        homogeneity_test: req.homogeneity_test,
    };
    config.check()?;
    let wave = wave_or_latest(&s.dataset, req.analysis.wave)?;
    req.analysis.check_k(WaveMode::SingleWave(wave), &s.dataset)?;
    let key = keyed("screen", &req)?;
    let Json(v) = cached(&s, &headers, key, move |s| {
        let run = run_wave(&s.dataset, WaveMode::SingleWave(wave), &req.analysis.topdown())?;
        let results = screen(&s.dataset.census, &neighborhood_labels(&run), &s.dataset.catalog, &config)?;
        Ok(json!({ "wave": wave, "config": config, "labels": neighborhood_labels(&run), "results": results }))
    })
    .await?;
    let results: Vec<VariableTestResult> = serde_json::from_value(v["results"].clone())?;
    s.session(&headers).lock().expect("session lock").last_screen = Some(results);
    Ok(Json(v))
}

async fn census_suggest(
    State(s): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Value>> {
    let top_n = param(&q, "top_n")?.unwrap_or(10);
    let session = s.session(&headers);
    let guard = session.lock().expect("session lock");
    let results = guard.last_screen.as_deref().unwrap_or(&[]);
    let picked = suggest_variables(results, top_n)?;
    Ok(Json(json!({ "top_n": top_n, "variables": picked })))
}

async fn class_upload(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>> {
    let records = read_registrations(&body)?;
    let policy = FilterPolicy::default();
    let outcome = apply_filters(&records, &policy);
    let mut by_reason: BTreeMap<RejectReason, usize> = BTreeMap::new();
    for r in &outcome.rejected {
        *by_reason.entry(r.reason).or_default() += 1;
    }
    let rejections: Vec<Value> = outcome
        .rejected
        .iter()
        .map(|r| json!({ "registration_id": r.record.registration_id, "client_id": r.record.client_id, "reason": r.reason, "detail": r.detail }))
        .collect();
    let session = s.session(&headers);
    let mut guard = session.lock().expect("session lock");
    guard.registrations = Some(records);
    guard.policy = policy;
    guard.cache.retain(|k, _| !k.starts_with("summary "));
    Ok(Json(json!({
        "records": outcome.kept.len() + outcome.rejected.len(),
        "kept": outcome.kept.len(),
        "rejected": outcome.rejected.len(),
        "rejected_by_reason": by_reason,
        "rejections": rejections,
    })))
}

async fn class_summary(
    State(s): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Value>> {
    let facet: Facet = q
        .get("facet")
        .ok_or_else(|| Error::Invalid("query `facet` is required".into()))?
        .parse()?;
    let exit_group = q.get("exit_group").cloned();
    let session = s.session(&headers);
    let (records, policy) = {
        let g = session.lock().expect("session lock");
        let records = g
            .registrations
            .clone()
            .ok_or_else(|| Error::Precondition("no registration file has been uploaded in this session".into()))?;
        (records, g.policy.clone())
    };
    let rules = s.rules.clone();
    let table = blocking(move || {
        let kept = apply_filters(&records, &policy).kept;
        let mut journeys = build_journeys(&kept, &rules);
        if let Some(g) = &exit_group {
            journeys.retain(|j| &j.exit_group == g);
        }
        Ok(distributions(&journeys, facet)?)
    })
    .await?;
    Ok(Json(serde_json::to_value(table)?))
}

async fn geo_neighborhoods(State(s): State<Shared>) -> Result<Json<Value>> {
    s.geojson
        .clone()
        .map(Json)
        .ok_or_else(|| Error::NotFound("neighborhood geometry".into()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum JobRequest {
    Stability(#[serde(default)] AnalysisRequest),
    Validate(#[serde(default)] ValidateRequest),
}

async fn submit_job(State(s): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<Value>)> {
    let req: JobRequest = serde_json::from_slice(&body)?;
    let id = format!("job-{}", s.next_job.fetch_add(1, Ordering::Relaxed));
    s.jobs.lock().expect("jobs lock").insert(id.clone(), JobStatus::Running);
    let shared = s.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let result = match &req {
            JobRequest::Stability(r) => stability_value(&shared, r),
            JobRequest::Validate(r) => r.analysis.wave_mode(&shared.dataset).and_then(|mode| {
                let config = TopDownConfig {
                    hopkins: HopkinsConfig {
                        sample_fraction: r.sample_fraction,
                        repeats: r.repeats,
                        exponent: r.exponent,
                        ..Default::default()
                    },
                    hopkins_space: r.space,
                    ..r.analysis.topdown()
                };
                let run = run_wave(&shared.dataset, mode, &config)?;
                Ok(serde_json::to_value(run.hopkins)?)
            }),
        };
        let status = match result {
            Ok(v) => JobStatus::Done { result: v },
            Err(e) => JobStatus::Failed {
                code: e.code().to_string(),
                message: e.to_string(),
            },
        };
        shared.jobs.lock().expect("jobs lock").insert(job_id, status);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id, "status": "running" }))))
}

async fn job_status(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>> {
    let jobs = s.jobs.lock().expect("jobs lock");
    let status = jobs.get(&id).ok_or_else(|| Error::NotFound(format!("job `{id}`")))?;
    let mut v = serde_json::to_value(status)?;
    v["job_id"] = json!(id);
    Ok(Json(v))
}
