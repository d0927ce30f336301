//! Read-only HTTP API over a fitted model artifact and its effect bundle.
//!
//! Every endpoint answers from state loaded once at startup. Guardrail
//! refusals from the simulator are ordinary `200` responses carrying a
//! status; only malformed requests and unknown names are client errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use wlingam::motif::Motif;
use wlingam::panel::{Role, ValueType};
use wlingam::provenance::{self, Provenance};
use wlingam::simulator::{self, EffectBundle, SimError, SimQuery};
use wlingam::LongitudinalModel;

pub const API_VERSION: &str = "v1";

pub const MODEL_FILE: &str = "model.json";
pub const BUNDLE_FILE: &str = "bundle.json";
pub const MOTIF_FILE: &str = "motif.json";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: wlingam::Error },
    #[error("bundle was built from model {bundle} but {MODEL_FILE} hashes to {model}")]
    ModelMismatch { bundle: String, model: String },
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub model_sha256: String,
    pub bundle_sha256: String,
    pub motif_sha256: Option<String>,
    pub model_provenance: Provenance,
    pub library_version: String,
}

/// Everything the endpoints read. Immutable once built.
#[derive(Debug)]
pub struct Artifacts {
    pub model: LongitudinalModel,
    pub bundle: EffectBundle,
    pub motif: Option<Motif>,
    pub manifest: Manifest,
}

fn read(dir: &Path, name: &str) -> Result<Option<(PathBuf, String)>, LoadError> {
    let path = dir.join(name);
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok(Some((path, text))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && name == MOTIF_FILE => Ok(None),
        Err(source) => Err(LoadError::Read { path, source }),
    }
}

/// Loads `model.json`, `bundle.json` and, if present, `motif.json`.
pub fn load_artifacts(dir: impl AsRef<Path>) -> Result<Artifacts, LoadError> {
    let dir = dir.as_ref();
    let parse = |path: &PathBuf, source: wlingam::Error| LoadError::Parse {
        path: path.clone(),
        source,
    };
    let (model_path, model_text) = read(dir, MODEL_FILE)?.expect("required file");
    let model = LongitudinalModel::from_json(&model_text).map_err(|e| parse(&model_path, e))?;
    let (bundle_path, bundle_text) = read(dir, BUNDLE_FILE)?.expect("required file");
    let bundle = EffectBundle::from_json(&bundle_text).map_err(|e| parse(&bundle_path, e))?;
    let model_hash = provenance::hash_json(&model).map_err(|e| parse(&model_path, e))?;
    if bundle.provenance.model_hash != model_hash {
        return Err(LoadError::ModelMismatch {
            bundle: bundle.provenance.model_hash.clone(),
            model: model_hash,
        });
    }
    let motif = match read(dir, MOTIF_FILE)? {
        Some((path, text)) => Some((
            serde_json::from_str::<Motif>(&text).map_err(|e| parse(&path, e.into()))?,
            provenance::sha256_hex(text.as_bytes()),
        )),
        None => None,
    };
    let manifest = Manifest {
        model_sha256: provenance::sha256_hex(model_text.as_bytes()),
        bundle_sha256: provenance::sha256_hex(bundle_text.as_bytes()),
        motif_sha256: motif.as_ref().map(|(_, h)| h.clone()),
        model_provenance: model.provenance.clone(),
        library_version: provenance::LIBRARY_VERSION.to_string(),
    };
    Ok(Artifacts {
        model,
        bundle,
        motif: motif.map(|(m, _)| m),
        manifest,
    })
}

/// Shared handle; empty until artifacts are installed.
#[derive(Clone, Default)]
pub struct AppState(Arc<OnceLock<Artifacts>>);

impl AppState {
    pub fn loaded(artifacts: Artifacts) -> Self {
        let state = Self::default();
        state.install(artifacts);
        state
    }

    /// Returns false if artifacts were already installed.
    pub fn install(&self, artifacts: Artifacts) -> bool {
        self.0.set(artifacts).is_ok()
    }

    fn get(&self) -> Result<&Artifacts, ApiError> {
        self.0
            .get()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "artifacts are still loading"))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    version: &'static str,
    error: &'a str,
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json(
            self.status,
            &ErrorBody {
                version: API_VERSION,
                error: &self.message,
            },
        )
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownVariable(_) => ApiError::unprocessable(e.to_string()),
            SimError::Malformed(_) => ApiError::bad_request(e.to_string()),
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct MetaVariable<'a> {
    name: &'a str,
    role: Role,
    value_type: ValueType,
    bounds: Option<[f64; 2]>,
    sd: Option<f64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Meta<'a> {
    version: &'static str,
    variables: Vec<MetaVariable<'a>>,
    time_labels: &'a [i32],
    anchor: usize,
    anchor_label: i32,
    lags: &'a [usize],
    sources: &'a [String],
    targets: &'a [String],
    ci_level: f64,
    messages: &'a BTreeMap<String, String>,
    manifest: &'a Manifest,
}

async fn meta(State(state): State<AppState>) -> Result<Response, ApiError> {
    let a = state.get()?;
    let schema = &a.model.schema;
    let variables = schema
        .variables
        .iter()
        .map(|v| {
            let p = a.bundle.variable(&v.name);
            MetaVariable {
                name: &v.name,
                role: v.role,
                value_type: v.value_type,
                bounds: p.map(|p| p.bounds),
                sd: p.map(|p| p.sd),
            }
        })
        .collect();
    Ok(json(
        StatusCode::OK,
        &Meta {
            version: API_VERSION,
            variables,
            time_labels: &schema.time_labels,
            anchor: a.bundle.anchor,
            anchor_label: schema.time_labels.get(a.bundle.anchor).copied().unwrap_or_default(),
            lags: &a.bundle.lags,
            sources: &a.bundle.sources,
            targets: &a.bundle.targets,
            ci_level: a.bundle.ci_level,
            messages: &a.bundle.messages,
            manifest: &a.manifest,
        },
    ))
}

fn parse_query(body: &Bytes) -> Result<SimQuery, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid query body: {e}")))
}

async fn forward(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let a = state.get()?;
    let answer = simulator::forward_query(&a.bundle, &parse_query(&body)?)?;
    Ok(json(StatusCode::OK, &answer))
}

async fn goal(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let a = state.get()?;
    let answer = simulator::goal_seek(&a.bundle, &parse_query(&body)?)?;
    Ok(json(StatusCode::OK, &answer))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EffectRow {
    lag: usize,
    point: f64,
    ci_low: f64,
    ci_high: f64,
    includes_zero: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EffectsResponse<'a> {
    version: &'static str,
    source: &'a str,
    target: &'a str,
    anchor: usize,
    rows: Vec<EffectRow>,
}

async fn effects(
    State(state): State<AppState>,
    Query(params): Query<BTreeMap<String, String>>,
) -> Result<Response, ApiError> {
    let a = state.get()?;
    let b = &a.bundle;
    let param = |k: &str| {
        params
            .get(k)
            .ok_or_else(|| ApiError::bad_request(format!("query parameter `{k}` is required")))
    };
    let (source, target) = (param("source")?, param("target")?);
    for name in [source, target] {
        if b.variable(name).is_none() {
            return Err(ApiError::unprocessable(format!("unknown variable `{name}`")));
        }
    }
    let s = b
        .source_index(source)
        .ok_or_else(|| ApiError::unprocessable(format!("`{source}` is not a source in the bundle")))?;
    let t = b
        .target_index(target)
        .ok_or_else(|| ApiError::unprocessable(format!("`{target}` is not a target in the bundle")))?;
    let lags: Vec<usize> = match params.get("lags").map(|l| l.trim()).filter(|l| !l.is_empty()) {
        None => b.lags.clone(),
        Some(list) => list
            .split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| ApiError::bad_request(format!("lag `{x}` is not a non-negative integer")))
            })
            .collect::<Result<_, _>>()?,
    };
    let rows = lags
        .iter()
        .map(|&lag| {
            let l = b
                .lag_index(lag)
                .ok_or_else(|| ApiError::unprocessable(format!("lag {lag} is not available; have {:?}", b.lags)))?;
            let c = b.cell(l, s, t);
            Ok(EffectRow {
                lag,
                point: c.point,
                ci_low: c.ci_low,
                ci_high: c.ci_high,
                includes_zero: c.uncertain,
            })
        })
        .collect::<Result<_, ApiError>>()?;
    Ok(json(
        StatusCode::OK,
        &EffectsResponse {
            version: API_VERSION,
            source,
            target,
            anchor: b.anchor,
            rows,
        },
    ))
}

#[derive(Serialize)]
struct MotifResponse<'a> {
    version: &'static str,
    #[serde(flatten)]
    motif: &'a Motif,
}

async fn motif(State(state): State<AppState>) -> Result<Response, ApiError> {
    let a = state.get()?;
    let motif = a
        .motif
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no motif artifact was loaded"))?;
    Ok(json(
        StatusCode::OK,
        &MotifResponse {
            version: API_VERSION,
            motif,
        },
    ))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such endpoint")
}

/// Allowed browser origins; empty means any origin.
#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub cors_origins: Vec<String>,
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let origins: Vec<HeaderValue> = config
        .cors_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let cors = if origins.is_empty() {
        cors.allow_origin(Any)
    } else {
        cors.allow_origin(AllowOrigin::list(origins))
    };
    Router::new()
        .route("/model/meta", get(meta))
        .route("/simulate/forward", post(forward))
        .route("/simulate/goal", post(goal))
        .route("/effects", get(effects))
        .route("/motif", get(motif))
        .fallback(not_found)
        .with_state(state)
        .layer(cors)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState, config: &ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(state, config)).await
}
