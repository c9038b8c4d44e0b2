//! HTTP/JSON front end for the lagrisk pipeline.
//!
//! Datasets are registered once and never modified; reads take a shared
//! lock, registrations and finished training jobs take the exclusive one.
//! Training runs on a single worker thread, so no request waits on it
//! except job polling.

pub mod error;
pub mod jobs;
pub mod registry;
pub mod schema;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex, RwLock, Weak};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lagrisk_core::analytics::{lag_sweep_named, DEFAULT_MAX_DELAY, DEFAULT_MIN_OVERLAP};
use lagrisk_core::ingest::{GapFill, RegionBundle, RegionMask, DEFAULT_WINDOW_DAYS};
use lagrisk_core::lstm::{train_with_progress, LstmModel};
use lagrisk_core::risk::{
    evaluate_scenario, export_risk_map, ExportFormat, RiskMap, RiskThresholds, Scenario, ScenarioSpec,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ApiError, ApiResult};
use crate::jobs::{JobStatus, JobTable, TrainJob, TrainRequest};
use crate::registry::{inlined, validate_name, Dataset, DatasetKind, GridRef, Registration, Registry};

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Registrations and reports are mirrored here and replayed on start.
    pub data_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
    pub thresholds: RiskThresholds,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: None,
            max_upload_bytes: 64 * 1024 * 1024,
            thresholds: RiskThresholds::default(),
        }
    }
}

struct Shared {
    config: ServiceConfig,
    registry: RwLock<Registry>,
    jobs: Mutex<JobTable>,
    queue: Mutex<mpsc::Sender<TrainJob>>,
    /// Sequence number for persisted registrations.
    persisted: Mutex<u64>,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// Builds the state, starts the training worker and replays any
    /// registrations found in the data directory.
    pub fn new(config: ServiceConfig) -> Result<Self, String> {
        config.thresholds.validate().map_err(|e| e.to_string())?;
        let (tx, rx) = mpsc::channel::<TrainJob>();
        let shared = Arc::new(Shared {
            config,
            registry: RwLock::new(Registry::default()),
            jobs: Mutex::new(JobTable::default()),
            queue: Mutex::new(tx),
            persisted: Mutex::new(0),
        });
        let weak = Arc::downgrade(&shared);
        std::thread::Builder::new()
            .name("lagrisk-train".into())
            .spawn(move || worker(weak, rx))
            .map_err(|e| format!("cannot start training worker: {e}"))?;
        let state = AppState { shared };
        state.replay()?;
        Ok(state)
    }

    pub fn thresholds(&self) -> RiskThresholds {
        self.shared.config.thresholds
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Registry> {
        self.shared.registry.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Registry> {
        self.shared.registry.write().unwrap_or_else(|e| e.into_inner())
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, JobTable> {
        self.shared.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Parses and inserts one registration, mirroring it to disk.
    pub fn register(&self, reg: &Registration) -> ApiResult<DatasetKind> {
        validate_name(&reg.name)?;
        if self.read().contains(&reg.name) {
            return Err(ApiError::conflict(
                "duplicate_name",
                format!("a dataset named `{}` already exists", reg.name),
            ));
        }
        let dataset = self.read().load(reg, self.thresholds())?;
        let kind = dataset.kind();
        let record = match self.shared.config.data_dir {
            Some(_) => Some(inlined(reg)?),
            None => None,
        };
        self.write().insert(&reg.name, dataset)?;
        if let Some(record) = record {
            self.persist_registration(&record);
        }
        Ok(kind)
    }

    fn persist_registration(&self, reg: &Registration) {
        let Some(dir) = &self.shared.config.data_dir else {
            return;
        };
        let mut seq = self.shared.persisted.lock().unwrap_or_else(|e| e.into_inner());
        *seq += 1;
        let dir = dir.join("datasets");
        let path = dir.join(format!("{:06}-{}.json", *seq, reg.name));
        let text = serde_json::to_string_pretty(reg).expect("registration serializes");
        if let Err(e) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&path, text)) {
            eprintln!("warning: could not persist {}: {e}", path.display());
        }
    }

    fn persist_report(&self, file: &str, text: &str) {
        let Some(dir) = &self.shared.config.data_dir else {
            return;
        };
        let dir = dir.join("reports");
        if let Err(e) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join(file), text)) {
            eprintln!("warning: could not persist report {file}: {e}");
        }
    }

    fn replay(&self) -> Result<(), String> {
        let Some(dir) = &self.shared.config.data_dir else {
            return Ok(());
        };
        let dir = dir.join("datasets");
        let Ok(read) = std::fs::read_dir(&dir) else {
            return Ok(());
        };
        let mut files: Vec<PathBuf> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let registry_err = |p: &PathBuf, msg: String| format!("{}: {msg}", p.display());
        for path in &files {
            let text = std::fs::read_to_string(path).map_err(|e| registry_err(path, e.to_string()))?;
            let reg: Registration = serde_json::from_str(&text).map_err(|e| registry_err(path, e.to_string()))?;
            let dataset = self
                .read()
                .load(&reg, self.thresholds())
                .map_err(|e| registry_err(path, e.body.message))?;
            self.write()
                .insert(&reg.name, dataset)
                .map_err(|e| registry_err(path, e.body.message))?;
        }
        *self.shared.persisted.lock().unwrap_or_else(|e| e.into_inner()) = files.len() as u64;
        Ok(())
    }
}

fn worker(shared: Weak<Shared>, rx: mpsc::Receiver<TrainJob>) {
    while let Ok(job) = rx.recv() {
        let Some(shared) = shared.upgrade() else {
            break;
        };
        run_job(&AppState { shared }, job);
    }
}

fn run_job(state: &AppState, job: TrainJob) {
    state.jobs().advance(&job.job_id, JobStatus::Running, None);
    let outcome = (|| -> Result<String, String> {
        let init = LstmModel::init(job.n_in, job.hidden, job.n_out, job.config.seed).map_err(|e| e.to_string())?;
        let (model, _) = train_with_progress(&init, &job.samples, &job.config, |epoch, loss| {
            state.jobs().progress(&job.job_id, epoch + 1, loss);
            ControlFlow::Continue(())
        })
        .map_err(|e| e.to_string())?;
        let reg = Registration {
            name: job.name.clone(),
            kind: DatasetKind::Model,
            path: None,
            content: Some(serde_json::from_str(&model.to_json()).expect("model json")),
            features: job.features.as_ref().map(|(h, _)| h.clone()),
            grid: job.grid_ref.clone(),
        };
        let entry = state
            .read()
            .model_entry(
                model,
                reg.features.as_deref(),
                Some(&GridRef::Inline(job.grid.clone())),
                state.thresholds(),
            )
            .map_err(|e| e.body.message)?;
        state
            .write()
            .insert(&job.name, Dataset::Model(Arc::new(entry)))
            .map_err(|e| e.body.message)?;
        state.persist_registration(&reg);
        Ok(job.name.clone())
    })();
    match outcome {
        Ok(name) => state.jobs().advance(&job.job_id, JobStatus::Done, Some(name)),
        Err(msg) => state.jobs().advance(&job.job_id, JobStatus::Failed, Some(msg)),
    }
}

type RawBody = Result<Bytes, BytesRejection>;

fn parse_body<T: DeserializeOwned>(body: RawBody) -> ApiResult<T> {
    let body = body.map_err(|r| {
        let status = r.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "bad_request"
        };
        ApiError::new(status, code, r.body_text())
    })?;
    serde_json::from_slice(&body).map_err(|e| ApiError::engine(e.into()))
}

fn json_text(status: StatusCode, text: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

pub fn router(state: AppState) -> Router {
    let limit = state.shared.config.max_upload_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(post_dataset).get(list_datasets))
        .route("/correlation", get(correlation))
        .route("/train", post(post_train))
        .route("/jobs/{id}", get(get_job))
        .route("/scenarios", post(post_scenario))
        .route("/riskmaps/{model}/{t}", get(get_riskmap))
        .route("/thresholds", get(get_thresholds))
        .route("/models", get(list_models))
        .route("/schemas/scenario", get(scenario_schema))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "api_version": API_VERSION }))
}

async fn post_dataset(State(state): State<AppState>, body: RawBody) -> ApiResult<Response> {
    let reg: Registration = parse_body(body)?;
    let kind = state.register(&reg)?;
    Ok((StatusCode::CREATED, Json(json!({ "name": reg.name, "kind": kind }))).into_response())
}

async fn list_datasets(State(state): State<AppState>) -> Json<serde_json::Value> {
    let reg = state.read();
    let items: Vec<_> = reg
        .list()
        .map(|(name, d)| json!({ "name": name, "kind": d.kind() }))
        .collect();
    Json(json!({ "datasets": items }))
}

fn query_usize(q: &HashMap<String, String>, key: &str, default: usize) -> ApiResult<usize> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::bad_request(format!("`{key}` must be a non-negative integer, got `{v}`"))),
    }
}

async fn correlation(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let required = |k: &str| {
        q.get(k)
            .cloned()
            .ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{k}`")))
    };
    let pollutant = required("pollutant")?;
    let cases = required("cases")?;
    let max_delay = query_usize(&q, "max_delay", DEFAULT_MAX_DELAY)?;
    let min_overlap = query_usize(&q, "min_overlap", DEFAULT_MIN_OVERLAP)?;
    let window = query_usize(&q, "window_days", DEFAULT_WINDOW_DAYS)?;
    let (rasters, series, mask) = {
        let reg = state.read();
        let rasters = reg.raster(&pollutant)?;
        let series = reg.cases(&cases)?;
        let mask = match q.get("region") {
            Some(h) => reg.mask(h)?,
            None => {
                let (r, c) = rasters.shape();
                Arc::new(RegionMask::all("all", r, c).map_err(ApiError::engine)?)
            }
        };
        (rasters, series, mask)
    };
    let bundle =
        RegionBundle::build(&rasters, &series, &mask, window, None, GapFill::None).map_err(ApiError::engine)?;
    let report = lag_sweep_named(&bundle.pair, max_delay, min_overlap, mask.name()).map_err(ApiError::unprocessable)?;
    let text = report.to_json();
    state.persist_report(
        &format!(
            "{pollutant}__{cases}__{}__w{window}_d{max_delay}_o{min_overlap}.json",
            mask.name()
        ),
        &text,
    );
    Ok(json_text(StatusCode::OK, text))
}

async fn post_train(State(state): State<AppState>, body: RawBody) -> ApiResult<Response> {
    let req: TrainRequest = parse_body(body)?;
    req.config.validate().map_err(ApiError::engine)?;
    if req.hidden == 0 {
        return Err(ApiError::bad_request("`hidden` must be at least 1"));
    }
    let (samples, features, grid, n_in, n_out) = {
        let reg = state.read();
        let samples = reg.samples(&req.samples)?;
        let (x0, y0) = &samples[0];
        let (n_in, n_out) = (x0.n_sources(), y0.p());
        for (i, (x, y)) in samples.iter().enumerate() {
            if x.n_sources() != n_in || y.p() != n_out || y.q() != x.n_steps() {
                return Err(ApiError::bad_request(format!(
                    "sample {i} has {} sources and a {}x{} target; sample 0 has {n_in} sources and {n_out} outputs over {} steps",
                    x.n_sources(),
                    y.p(),
                    y.q(),
                    x.n_steps()
                )));
            }
        }
        let features = match &req.features {
            Some(h) => {
                let f = reg.features(h)?;
                if f.n_sources() != n_in {
                    return Err(ApiError::bad_request(format!(
                        "baseline `{h}` has {} sources, samples have {n_in}",
                        f.n_sources()
                    )));
                }
                Some((h.clone(), f))
            }
            None => None,
        };
        let grid = reg.resolve_grid(req.grid.as_ref(), n_out)?;
        (samples.clone(), features, grid, n_in, n_out)
    };
    if let Some(name) = &req.name {
        validate_name(name)?;
        if state.read().contains(name) {
            return Err(ApiError::conflict(
                "duplicate_name",
                format!("a dataset named `{name}` already exists"),
            ));
        }
    }
    let job_id = state.jobs().submit(req.config.epochs)?;
    let job = TrainJob {
        name: req.name.clone().unwrap_or_else(|| format!("model-{job_id}")),
        job_id: job_id.clone(),
        samples,
        n_in,
        n_out,
        hidden: req.hidden,
        config: req.config.clone(),
        features,
        grid,
        grid_ref: req.grid.clone(),
    };
    let sent = state.shared.queue.lock().unwrap_or_else(|e| e.into_inner()).send(job);
    if sent.is_err() {
        state.jobs().cancel_unqueued(&job_id);
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "worker_unavailable",
            "training worker stopped",
        ));
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "job_id": job_id, "status": JobStatus::Queued })),
    )
        .into_response())
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = state
        .jobs()
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(record).into_response())
}

/// Body of `POST /scenarios`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub model: String,
    /// Features to perturb; defaults to the model's attached baseline.
    #[serde(default)]
    pub baseline: Option<String>,
    pub scenario: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResponse {
    pub format_version: u32,
    pub model: String,
    pub baseline: String,
    pub description: String,
    pub steps: usize,
    pub mean_risk: Vec<f64>,
    pub baseline_mean_risk: Vec<f64>,
    pub maps: Vec<RiskMap>,
}

async fn post_scenario(State(state): State<AppState>, body: RawBody) -> ApiResult<Response> {
    let req: ScenarioRequest = parse_body(body)?;
    let (entry, baseline_name, baseline) = {
        let reg = state.read();
        let entry = reg.model(&req.model)?;
        let (name, features) = match (&req.baseline, &entry.baseline) {
            (Some(h), _) => (h.clone(), reg.features(h)?),
            (None, Some((h, f))) => (h.clone(), f.clone()),
            (None, None) => {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "no_baseline",
                    format!("model `{}` has no baseline features; pass `baseline`", req.model),
                ))
            }
        };
        (entry, name, features)
    };
    let spec: ScenarioSpec = serde_json::from_value(req.scenario)
        .map_err(|e| ApiError::unprocessable(lagrisk_core::Error::format("scenario", e)))?;
    let thresholds = state.thresholds();
    let neutral = Scenario {
        baseline: (*baseline).clone(),
        spec: ScenarioSpec::default(),
    };
    let base = evaluate_scenario(&entry.model, &neutral, &entry.grid, thresholds).map_err(ApiError::unprocessable)?;
    let description = spec.description.clone();
    let scenario = Scenario {
        baseline: (*baseline).clone(),
        spec,
    };
    let outcome =
        evaluate_scenario(&entry.model, &scenario, &entry.grid, thresholds).map_err(ApiError::unprocessable)?;
    let resp = ScenarioResponse {
        format_version: API_VERSION,
        model: req.model,
        baseline: baseline_name,
        description,
        steps: outcome.maps.len(),
        mean_risk: outcome.mean_risk,
        baseline_mean_risk: base.mean_risk,
        maps: outcome.maps,
    };
    Ok(Json(resp).into_response())
}

async fn get_riskmap(
    State(state): State<AppState>,
    Path((model, t)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let format: ExportFormat = q
        .get("format")
        .map(|f| f.parse())
        .transpose()
        .map_err(ApiError::engine)?
        .unwrap_or(ExportFormat::Json);
    let t: usize = t
        .parse()
        .map_err(|_| ApiError::bad_request(format!("timestep must be a non-negative integer, got `{t}`")))?;
    let entry = state.read().model(&model)?;
    let Some(outcome) = &entry.baseline_outcome else {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "no_predictions",
            format!("model `{model}` has no baseline features attached"),
        ));
    };
    let map = outcome.maps.get(t).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "out_of_range",
            format!("timestep {t} outside 0..{}", outcome.maps.len()),
        )
    })?;
    let bytes = export_risk_map(map, format);
    let content_type = match format {
        ExportFormat::Json => "application/json",
        ExportFormat::Pgm => "image/x-portable-graymap",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

async fn get_thresholds(State(state): State<AppState>) -> Json<serde_json::Value> {
    let t = state.thresholds();
    Json(json!({
        "format_version": API_VERSION,
        "low_upper": t.low_upper,
        "medium_upper": t.medium_upper,
        "levels": ["low", "medium", "high"],
    }))
}

async fn list_models(State(state): State<AppState>) -> Json<serde_json::Value> {
    let reg = state.read();
    let models: Vec<_> = reg
        .list()
        .filter_map(|(name, d)| match d {
            Dataset::Model(m) => Some(json!({
                "name": name,
                "n_in": m.model.n_in(),
                "n_hidden": m.model.n_hidden(),
                "n_out": m.model.n_out(),
                "source_labels": m.baseline.as_ref().map(|(_, f)| f.labels().to_vec()),
                "baseline": m.baseline.as_ref().map(|(h, _)| h.clone()),
                "steps": m.baseline_outcome.as_ref().map_or(0, |o| o.maps.len()),
                "grid": m.grid,
            })),
            _ => None,
        })
        .collect();
    Json(json!({ "models": models }))
}

async fn scenario_schema() -> Response {
    json_text(StatusCode::OK, schema::SCENARIO_SCHEMA.to_string())
}
