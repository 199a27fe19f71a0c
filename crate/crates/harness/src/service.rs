//! HTTP service: a table registry plus ask and suggest endpoints over one
//! immutable model. Payloads carry `"version": 1` and follow the schemas in
//! `schemas/v1/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use tablequery_core::abstraction::{Candidate, TableIndex};
use tablequery_core::derivation::Node;
use tablequery_core::error::Error;
use tablequery_core::pipeline::{answer, Resources};
use tablequery_core::scoring::{Model, NodeScorer};
use tablequery_core::table::Table;
use tablequery_core::token::{AbstractedUtterance, TokenKind};
use tower_http::services::ServeDir;

use crate::corpus::index_table;

pub const API_VERSION: u32 = 1;
pub const DEFAULT_UPLOAD_LIMIT: usize = 2 * 1024 * 1024;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Tables loaded at start; uploads are written here too.
    pub table_dir: Option<PathBuf>,
    /// Static files served under `/ui`.
    pub ui_dir: Option<PathBuf>,
    pub upload_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { table_dir: None, ui_dir: None, upload_limit: DEFAULT_UPLOAD_LIMIT }
    }
}

struct Entry {
    name: String,
    index: Arc<TableIndex>,
}

pub struct AppState {
    res: Resources,
    model: Model,
    tables: RwLock<BTreeMap<String, Arc<Entry>>>,
    next_id: AtomicU64,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(res: Resources, model: Model, config: ServiceConfig) -> anyhow::Result<Arc<AppState>> {
        let state = AppState { res, model, tables: RwLock::new(BTreeMap::new()), next_id: AtomicU64::new(1), config };
        if let Some(dir) = &state.config.table_dir {
            std::fs::create_dir_all(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            paths.sort();
            for p in paths {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
                let table = Table::read_csv_path(&p).with_context(|| format!("table {}", p.display()))?;
                state.install(id, table.name.clone(), table);
            }
        }
        Ok(Arc::new(state))
    }

    fn install(&self, id: String, name: String, table: Table) {
        let entry = Arc::new(Entry { name, index: index_table(table) });
        self.tables.write().expect("registry lock").insert(id, entry);
    }

    /// Register a table under a fresh id.
    pub fn register(&self, name: &str, table: Table) -> String {
        let id = loop {
            let id = format!("t{}", self.next_id.fetch_add(1, Ordering::Relaxed));
            if !self.tables.read().expect("registry lock").contains_key(&id) {
                break id;
            }
        };
        self.install(id.clone(), name.to_string(), table);
        id
    }

    fn get(&self, id: &str) -> Option<Arc<Entry>> {
        self.tables.read().expect("registry lock").get(id).cloned()
    }
}

/// An error response: `{"version", "error": {"code", "message"}}`, plus the
/// abstraction output when a question could not be parsed.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    utterances: Option<JsonValue>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError { status, code, message: message.into(), utterances: None }
    }

    fn not_found(id: &str) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no table with id `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({
            "version": API_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        if let Some(u) = self.utterances {
            body["utterances"] = u;
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<JsonValue>, ApiError>;

fn columns_json(t: &Table) -> JsonValue {
    t.columns.iter().map(|c| json!({ "name": c.name, "type": c.ty })).collect()
}

fn table_json(id: &str, e: &Entry) -> JsonValue {
    json!({
        "id": id,
        "name": e.name,
        "columns": columns_json(&e.index.table),
        "rows": e.index.table.rows.len(),
    })
}

fn utterance_json(c: &Candidate, question: &str) -> JsonValue {
    let tokens: Vec<JsonValue> = c
        .utterance
        .tokens
        .iter()
        .map(|t| {
            let kind = match &t.kind {
                TokenKind::Common(_) => "word".to_string(),
                TokenKind::Unknown => "unknown".to_string(),
                TokenKind::Symbol(s) => s.kind.to_string(),
            };
            json!({
                "text": question.chars().skip(t.source.0).take(t.source.1 - t.source.0).collect::<String>(),
                "key": t.key(),
                "kind": kind,
                "start": t.source.0,
                "end": t.source.1,
            })
        })
        .collect();
    let annotations: Vec<JsonValue> = c
        .annotations
        .iter()
        .map(|a| {
            json!({
                "start": a.start,
                "end": a.end,
                "symbol": a.symbol.kind.to_string(),
                "match": a.kind.as_str(),
                "score": a.score,
            })
        })
        .collect();
    json!({ "tokens": tokens, "annotations": annotations, "score": c.score })
}

fn node_json(n: &Node, u: &AbstractedUtterance, table: &Table, scorer: &dyn NodeScorer) -> JsonValue {
    let first = &u.tokens[n.span.start];
    let last = &u.tokens[n.span.end - 1];
    let score = n.rule.map(|r| scorer.score_span(u, n.span, &[r])[0]);
    json!({
        "rule": n.rule.map(|r| r.name()),
        "kind": n.symbol.kind.to_string(),
        "symbol": n.symbol.describe(table),
        "span": [n.span.start, n.span.end],
        "chars": [first.source.0, last.source.1],
        "score": score,
        "children": n.children.iter().map(|c| node_json(c, u, table, scorer)).collect::<Vec<_>>(),
    })
}

#[derive(Deserialize)]
struct UploadQuery {
    name: Option<String>,
}

async fn upload(
    State(st): State<Arc<AppState>>,
    Query(q): Query<UploadQuery>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let body = body.map_err(|e| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "too-large",
                format!("upload exceeds the limit of {} bytes", st.config.upload_limit),
            )
        } else {
            ApiError::new(e.status(), "bad-request", e.body_text())
        }
    })?;
    if body.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad-table", "empty upload"));
    }
    let name = q.name.unwrap_or_else(|| "table".to_string());
    let table = Table::read_csv(name.clone(), body.as_ref())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-table", e.to_string()))?;
    let id = st.register(&name, table);
    let entry = st.get(&id).expect("just registered");
    if let Some(dir) = &st.config.table_dir {
        let path = dir.join(format!("{id}.csv"));
        let file = std::fs::File::create(&path).and_then(|f| {
            entry.index.table.write_csv(f).map_err(|e| std::io::Error::other(e.to_string()))
        });
        if let Err(e) = file {
            tracing::warn!("could not persist {}: {e}", path.display());
        }
    }
    let mut out = table_json(&id, &entry);
    out["version"] = json!(API_VERSION);
    Ok(Json(out))
}

async fn list(State(st): State<Arc<AppState>>) -> Json<JsonValue> {
    let tables: Vec<JsonValue> =
        st.tables.read().expect("registry lock").iter().map(|(id, e)| table_json(id, e)).collect();
    Json(json!({ "version": API_VERSION, "tables": tables }))
}

#[derive(Deserialize, Serialize)]
pub struct AskRequest {
    pub question: String,
}

/// Answer a question against a registered table; shared by the HTTP handler
/// and the tests.
pub fn ask_json(st: &AppState, id: &str, question: &str) -> ApiResult {
    let entry = st.get(id).ok_or_else(|| ApiError::not_found(id))?;
    let question = question.trim();
    if question.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad-question", "question is empty"));
    }
    let index = &entry.index;
    match answer(question, index, &st.res, &st.model) {
        Ok(a) => {
            let u = &a.utterances[a.best.utterance].utterance;
            Ok(Json(json!({
                "version": API_VERSION,
                "table": id,
                "question": question,
                "utterances": a.utterances.iter().map(|c| utterance_json(c, question)).collect::<Vec<_>>(),
                "chosen": a.best.utterance,
                "score": a.best.score,
                "derivation": node_json(&a.best.derivation.root, u, &index.table, &st.model),
                "sql": a.sql.to_sql(&entry.name),
                "columns": a.result.columns,
                "rows": a.result.rows,
            })))
        }
        Err(e) => {
            let (status, code) = match e {
                Error::NothingToParse | Error::NoValidTree | Error::Interpretation(_) => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "no-parse")
                }
                Error::Execution(_) => (StatusCode::UNPROCESSABLE_ENTITY, "execution"),
                _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            };
            let utterances = st.res.abstract_question(question, index);
            let mut err = ApiError::new(status, code, e.to_string());
            err.utterances = Some(utterances.iter().map(|c| utterance_json(c, question)).collect());
            Err(err)
        }
    }
}

async fn ask(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AskRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-request", e.body_text()))?;
    tokio::task::spawn_blocking(move || ask_json(&st, &id, &req.question))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Deserialize)]
struct SuggestQuery {
    #[serde(default)]
    prefix: String,
    limit: Option<usize>,
}

async fn suggest(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SuggestQuery>,
) -> ApiResult {
    let entry = st.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let s = entry.index.suggest(&q.prefix, &st.res.vocab, q.limit.unwrap_or(10).min(100));
    Ok(Json(json!({ "version": API_VERSION, "table": id, "prefix": q.prefix, "suggestions": s })))
}

async fn health(State(st): State<Arc<AppState>>) -> Json<JsonValue> {
    Json(json!({
        "version": API_VERSION,
        "status": "ok",
        "model": st.model.kind(),
        "tables": st.tables.read().expect("registry lock").len(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.upload_limit;
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/tables", post(upload).get(list))
        .route("/tables/{id}/ask", post(ask))
        .route("/tables/{id}/suggest", get(suggest));
    if let Some(dir) = &state.config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.layer(DefaultBodyLimit::max(limit)).with_state(state)
}

/// The static console shipped with the crate.
pub fn default_ui_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("ui")
}

pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
