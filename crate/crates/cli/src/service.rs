//! JSON-over-HTTP scenario service backed by an immutable model bundle.

use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use suitability_core::dataset::{Dataset, SiteRecord, FEATURE_NAMES};
use suitability_core::pipeline::{ModelBundle, ScenarioRequest};

type Shared = Arc<ModelBundle>;

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl ToString) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.to_string(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

#[derive(Debug, Default, Deserialize)]
struct ScenarioQuery {
    #[serde(default)]
    all_classes: bool,
}

async fn scenario(
    State(bundle): State<Shared>,
    Query(query): Query<ScenarioQuery>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let request: ScenarioRequest = parse_body(&body)?;
    let response =
        tokio::task::spawn_blocking(move || bundle.scenario(&request, query.all_classes))
            .await
            .map_err(ApiError::internal)?
            .map_err(ApiError::bad_request)?;
    Ok(Json(
        serde_json::to_value(response).map_err(ApiError::internal)?,
    ))
}

#[derive(Serialize)]
struct ImportanceEntry<'a> {
    name: &'a str,
    mean_abs_shap: f64,
    weight: f64,
}

async fn importance(State(bundle): State<Shared>) -> Json<Value> {
    let table = &bundle.importance;
    let features: Vec<ImportanceEntry> = table
        .ranking()
        .into_iter()
        .map(|j| ImportanceEntry {
            name: FEATURE_NAMES[j],
            mean_abs_shap: table.mean_abs_shap[j],
            weight: bundle.weights.weights[j],
        })
        .collect();
    Json(json!({ "features": features, "weight_mode": bundle.weights.mode }))
}

async fn meta(State(bundle): State<Shared>) -> Json<Value> {
    let features: Vec<Value> = bundle
        .schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            json!({
                "name": f.name,
                "unit": f.unit,
                "direction": f.direction,
                "kind": f.kind,
                "min": bundle.scaler.min[j],
                "max": bundle.scaler.max[j],
            })
        })
        .collect();
    let m = &bundle.metadata;
    Json(json!({
        "version": bundle.version,
        "config": m.config,
        "dataset_fingerprint": m.dataset_fingerprint,
        "records": m.records,
        "cities": m.cities,
        "first_date": m.first_date,
        "last_date": m.last_date,
        "thresholds": bundle.thresholds,
        "weight_mode": bundle.weights.mode,
        "proxy_labels": bundle.proxy.class_labels,
        "features": features,
    }))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RankBody {
    Records(Vec<SiteRecord>),
    Wrapped { records: Vec<SiteRecord> },
}

async fn rank(State(bundle): State<Shared>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let records = match parse_body(&body)? {
        RankBody::Records(r) | RankBody::Wrapped { records: r } => r,
    };
    let dataset = Dataset::new(records).map_err(ApiError::bad_request)?;
    let ranking = tokio::task::spawn_blocking(move || bundle.rank_dataset(&dataset))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::bad_request)?;
    Ok(Json(json!({ "ranking": ranking })))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(bundle: ModelBundle) -> Router {
    Router::new()
        .route("/v1/scenario", post(scenario))
        .route("/v1/importance", get(importance))
        .route("/v1/model/meta", get(meta))
        .route("/v1/rank", post(rank))
        .route("/v1/health", get(health))
        .layer(CorsLayer::permissive())
        .with_state(Arc::new(bundle))
}

pub async fn serve(bundle: ModelBundle, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(bundle))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
