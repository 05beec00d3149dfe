//! HTTP API over a running [`DetectionService`]. Schemas are documented in
//! `docs/api.md`.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dualpath_core::codec::Transaction;
use dualpath_core::pipeline::{Decision, DetectionService, ReviewItem, ReviewState, ReviewVerdict};
use dualpath_core::Error as CoreError;
use serde::{Deserialize, Serialize};

/// Header carrying the reviewer id when the body omits it.
pub const REVIEWER_HEADER: &str = "x-reviewer-id";

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError(CoreError);

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        ApiError(e)
    }
}

fn error_response(status: StatusCode, kind: &str, message: String) -> Response {
    (
        status,
        Json(ErrorBody {
            error: kind.into(),
            message,
        }),
    )
        .into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            CoreError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            CoreError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            CoreError::Backpressure(_) => (StatusCode::SERVICE_UNAVAILABLE, "backpressure"),
            CoreError::Contract(_) | CoreError::Encoding { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        error_response(status, kind, self.0.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type AppState = Arc<DetectionService>;

pub fn router(service: Arc<DetectionService>) -> Router {
    Router::new()
        .route("/transactions", post(score_one))
        .route("/transactions/batch", post(score_batch))
        .route("/reviews", get(list_reviews))
        .route("/reviews/{id}/resolve", post(resolve))
        .route("/explanations/{txid}", get(explanation))
        .route("/metrics", get(metrics))
        .route("/health", get(health))
        .with_state(service)
}

async fn score_one(State(s): State<AppState>, Json(t): Json<Transaction>) -> ApiResult<Decision> {
    Ok(Json(s.process_transaction(&t)?))
}

/// One entry per submitted transaction, in order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchEntry {
    Decision(Box<Decision>),
    Error(ErrorBody),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchResponse {
    pub results: Vec<BatchEntry>,
}

async fn score_batch(State(s): State<AppState>, Json(txs): Json<Vec<Transaction>>) -> Response {
    let results = tokio::task::spawn_blocking(move || s.process_batch(&txs)).await;
    let Ok(results) = results else {
        return error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "batch worker panicked".into(),
        );
    };
    let results = results
        .into_iter()
        .map(|r| match r {
            Ok(d) => BatchEntry::Decision(Box::new(d)),
            Err(e) => BatchEntry::Error(ErrorBody {
                error: match e {
                    CoreError::Backpressure(_) => "backpressure".into(),
                    _ => "invalid".into(),
                },
                message: e.to_string(),
            }),
        })
        .collect();
    Json(BatchResponse { results }).into_response()
}

#[derive(Debug, Deserialize)]
struct ReviewQuery {
    state: Option<String>,
}

fn parse_state(s: &str) -> Result<Option<ReviewState>, ApiError> {
    match s {
        "all" => Ok(None),
        "open" => Ok(Some(ReviewState::Open)),
        "confirmed_fraud" | "confirmed-fraud" => Ok(Some(ReviewState::ConfirmedFraud)),
        "false_positive" | "false-positive" => Ok(Some(ReviewState::FalsePositive)),
        other => Err(ApiError(CoreError::Contract(format!("unknown review state `{other}`")))),
    }
}

async fn list_reviews(State(s): State<AppState>, Query(q): Query<ReviewQuery>) -> ApiResult<Vec<ReviewItem>> {
    let state = parse_state(q.state.as_deref().unwrap_or("open"))?;
    Ok(Json(s.reviews(state)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResolveRequest {
    pub verdict: String,
    pub reviewer: Option<String>,
}

async fn resolve(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    headers: HeaderMap,
    Json(req): Json<ResolveRequest>,
) -> ApiResult<Decision> {
    let verdict: ReviewVerdict = req.verdict.parse()?;
    let reviewer = req
        .reviewer
        .or_else(|| {
            headers
                .get(REVIEWER_HEADER)
                .and_then(|v| v.to_str().ok())
                .map(String::from)
        })
        .ok_or_else(|| {
            CoreError::Contract(format!(
                "reviewer missing: set `reviewer` or the {REVIEWER_HEADER} header"
            ))
        })?;
    Ok(Json(s.resolve_review(id, verdict, &reviewer)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PendingBody {
    pub status: String,
    pub transaction_id: u64,
}

async fn explanation(State(s): State<AppState>, Path(txid): Path<u64>) -> Response {
    match s.explanation(txid) {
        Ok(Some(e)) => Json(e).into_response(),
        Ok(None) => (
            StatusCode::ACCEPTED,
            Json(PendingBody {
                status: "pending".into(),
                transaction_id: txid,
            }),
        )
            .into_response(),
        Err(CoreError::NotFound(_)) => error_response(
            StatusCode::NOT_FOUND,
            "not_explained",
            format!("transaction {txid} not explained: below threshold or never scored"),
        ),
        Err(e) => ApiError(e).into_response(),
    }
}

async fn metrics(State(s): State<AppState>) -> Response {
    Json(s.metrics()).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub vae_version: u64,
    pub gan_version: Option<u64>,
    pub tau: f64,
    pub quantile: f64,
    pub generation: u64,
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    let snap = s.snapshot();
    Json(Health {
        status: "ok".into(),
        vae_version: snap.vae.version(),
        gan_version: snap.gan_version(),
        tau: snap.threshold.tau,
        quantile: snap.threshold.quantile,
        generation: snap.generation,
    })
}
