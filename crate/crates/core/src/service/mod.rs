//! The flight-booking system under test.
//!
//! Requests pass through a fixed middleware chain before reaching a route
//! handler:
//!
//! 1. request-ID generation (every route, issue C)
//! 2. path normalization (only routes under `/flights`, issue B)
//! 3. HTTP basic auth (only `/bookings`, issue A)
//!
//! Every response, including errors, carries the generated ID in the
//! `x-request-id` header.

pub mod catalog;
pub mod dataset;
pub mod handlers;
pub mod http_server;
pub mod model;

use std::collections::HashMap;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use base64::Engine as _;
use http::{HeaderValue, Method};
use serde::{Deserialize, Serialize};

use crate::faults::{
    degraded_clean_path, degraded_request_id, degraded_validate_credentials, Credentials, IssueConfig, IssueKind,
    LexicalCleaner, OsRandom, PathCleaner, RandomSource, Sha512Hasher, StdSha512,
};
use crate::store::KvStore;
use catalog::{ApiError, Catalog};
use dataset::{DatasetConfig, DatasetError};
use handlers::{error_response, HttpResponse};

pub use catalog::ApiError as ServiceError;

pub const REQUEST_ID_HEADER: &str = "x-request-id";
pub const PORT_ENV: &str = "PERFLAB_PORT";
pub const DATASET_SEED_ENV: &str = "DATASET_SEED";

pub type HttpRequest = http::Request<Vec<u8>>;

/// Primitives the middleware uses; swapped for instrumented versions in tests.
#[derive(Clone)]
pub struct Primitives {
    pub hasher: Arc<dyn Sha512Hasher>,
    pub cleaner: Arc<dyn PathCleaner>,
    pub rng: Arc<dyn RandomSource>,
}

impl Default for Primitives {
    fn default() -> Self {
        Self {
            hasher: Arc::new(StdSha512),
            cleaner: Arc::new(LexicalCleaner),
            rng: Arc::new(OsRandom),
        }
    }
}

/// Runtime configuration of one service process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceConfig {
    pub port: u16,
    pub issue: IssueConfig,
    pub dataset: DatasetConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            issue: IssueConfig::NONE,
            dataset: DatasetConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Overlays `PERFLAB_PORT`, `ISSUE_KIND`, `ISSUE_SEVERITY` and
    /// `DATASET_SEED` onto `self`.
    pub fn overlay_env(mut self) -> anyhow::Result<Self> {
        if let Ok(p) = std::env::var(PORT_ENV) {
            self.port = p.trim().parse()?;
        }
        let env_issue = IssueConfig::from_env()?;
        if std::env::var(crate::faults::ISSUE_KIND_ENV).is_ok() {
            self.issue.kind = env_issue.kind;
        }
        if std::env::var(crate::faults::ISSUE_SEVERITY_ENV).is_ok() {
            self.issue.severity = env_issue.severity;
        }
        if let Ok(s) = std::env::var(DATASET_SEED_ENV) {
            self.dataset.rng_seed = s.trim().parse()?;
        }
        Ok(self)
    }
}

pub struct BookingService {
    catalog: Catalog,
    users: HashMap<String, String>,
    issue: IssueConfig,
    prims: Primitives,
    request_counter: AtomicU64,
}

impl BookingService {
    pub fn new(store: KvStore, issue: IssueConfig) -> Result<Self, ApiError> {
        Self::with_primitives(store, issue, Primitives::default())
    }

    pub fn with_primitives(store: KvStore, issue: IssueConfig, prims: Primitives) -> Result<Self, ApiError> {
        let catalog = Catalog::new(store);
        let users = catalog
            .users()?
            .into_iter()
            .map(|u| (u.username, u.password))
            .collect();
        Ok(Self {
            catalog,
            users,
            issue,
            prims,
            request_counter: AtomicU64::new(0),
        })
    }

    pub fn from_dataset(dataset: &DatasetConfig, issue: IssueConfig) -> Result<Self, DatasetError> {
        let store = dataset::seed_store(dataset)?;
        Ok(Self::new(store, issue).expect("freshly seeded users decode"))
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn issue(&self) -> IssueConfig {
        self.issue
    }

    /// Full request processing: middleware chain, routing and handler.
    pub fn dispatch(&self, req: &HttpRequest) -> HttpResponse {
        let request_id = match degraded_request_id(
            self.issue.severity_for(IssueKind::RequestId),
            self.prims.rng.as_ref(),
            &self.request_counter,
        ) {
            Ok(id) => id,
            Err(e) => return error_response(&ApiError::internal(e.to_string())),
        };
        let mut resp = self.route(req);
        if let Ok(v) = HeaderValue::from_str(&request_id) {
            resp.headers_mut().insert(REQUEST_ID_HEADER, v);
        }
        resp
    }

    fn route(&self, req: &HttpRequest) -> HttpResponse {
        let path = req.uri().path();
        let query = req.uri().query();
        if path == "/flights" || path.starts_with("/flights/") {
            let cleaned = degraded_clean_path(
                path,
                self.issue.severity_for(IssueKind::CleanPath),
                self.prims.cleaner.as_ref(),
            );
            return self.route_flights(req.method(), &cleaned, query);
        }
        match path {
            "/destinations" => match *req.method() {
                Method::GET => handlers::destinations(&self.catalog),
                _ => error_response(&ApiError::method_not_allowed()),
            },
            "/bookings" => {
                if *req.method() != Method::GET && *req.method() != Method::POST {
                    return error_response(&ApiError::method_not_allowed());
                }
                let user = match self.authenticate(req) {
                    Some(u) => u,
                    None => return error_response(&ApiError::unauthorized()),
                };
                if *req.method() == Method::GET {
                    handlers::bookings(&self.catalog, &user)
                } else {
                    handlers::create_booking(&self.catalog, &user, req.body())
                }
            }
            _ => error_response(&ApiError::not_found(format!("no route for {path}"))),
        }
    }

    fn route_flights(&self, method: &Method, path: &str, query: Option<&str>) -> HttpResponse {
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        let handler: Box<dyn Fn() -> HttpResponse + '_> = match segments.as_slice() {
            ["flights"] => {
                let from = query_param(query, "from");
                Box::new(move || handlers::flights(&self.catalog, from.as_deref()))
            }
            ["flights", id] => Box::new(move || handlers::flight(&self.catalog, id)),
            ["flights", id, "seats"] => Box::new(move || handlers::seats(&self.catalog, id)),
            _ => return error_response(&ApiError::not_found(format!("no route for {path}"))),
        };
        if *method != Method::GET {
            return error_response(&ApiError::method_not_allowed());
        }
        handler()
    }

    /// Basic-auth middleware. Returns the authenticated username.
    fn authenticate(&self, req: &HttpRequest) -> Option<String> {
        let provided = parse_basic_auth(req.headers().get(http::header::AUTHORIZATION)?)?;
        let stored = self.users.get(&provided.user)?;
        let expected = Credentials::new(provided.user.clone(), stored.clone());
        degraded_validate_credentials(
            &provided,
            &expected,
            self.issue.severity_for(IssueKind::BasicAuth),
            self.prims.hasher.as_ref(),
        )
        .then_some(provided.user)
    }
}

pub fn parse_basic_auth(value: &HeaderValue) -> Option<Credentials> {
    let encoded = value.to_str().ok()?.strip_prefix("Basic ")?;
    let decoded = base64::engine::general_purpose::STANDARD.decode(encoded.trim()).ok()?;
    let text = String::from_utf8(decoded).ok()?;
    let (user, pass) = text.split_once(':')?;
    Some(Credentials::new(user, pass))
}

pub fn basic_auth_value(creds: &Credentials) -> String {
    let raw = format!("{}:{}", creds.user, creds.pass);
    format!("Basic {}", base64::engine::general_purpose::STANDARD.encode(raw))
}

fn query_param(query: Option<&str>, name: &str) -> Option<String> {
    query?
        .split('&')
        .filter_map(|pair| pair.split_once('=').or(Some((pair, ""))))
        .find(|(k, _)| *k == name)
        .map(|(_, v)| v.to_string())
}
