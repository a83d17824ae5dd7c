//! Severity-parameterized performance issues.
//!
//! Each issue replaces one middleware primitive with a version that does
//! extra CPU work proportional to the severity `s` while producing the same
//! functional result. At `s = 0` every degraded primitive is exactly the
//! baseline primitive, so `(kind, 0)` against `None` is a true A/A pair.
//!
//! | issue | primitive          | extra work at severity `s`                   |
//! |-------|--------------------|----------------------------------------------|
//! | A     | credential check   | `s` SHA-512 rounds per password, both sides  |
//! | B     | path normalization | `s` redundant lexical clean passes           |
//! | C     | request-ID         | SHA-1 over `512 * s` bytes of OS randomness  |

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha1::{Digest as _, Sha1};
use sha2::Sha512;
use subtle::ConstantTimeEq;
use thiserror::Error;

/// Bytes of randomness hashed per unit of request-ID severity.
pub const REQUEST_ID_BYTES_PER_SEVERITY: usize = 512;

pub const ISSUE_KIND_ENV: &str = "ISSUE_KIND";
pub const ISSUE_SEVERITY_ENV: &str = "ISSUE_SEVERITY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    None,
    BasicAuth,
    CleanPath,
    RequestId,
}

impl IssueKind {
    pub const INJECTED: [IssueKind; 3] = [IssueKind::BasicAuth, IssueKind::CleanPath, IssueKind::RequestId];

    pub fn as_str(self) -> &'static str {
        match self {
            IssueKind::None => "none",
            IssueKind::BasicAuth => "basic-auth",
            IssueKind::CleanPath => "clean-path",
            IssueKind::RequestId => "request-id",
        }
    }

    /// Single-letter label used in capability tables.
    pub fn letter(self) -> Option<char> {
        match self {
            IssueKind::None => None,
            IssueKind::BasicAuth => Some('A'),
            IssueKind::CleanPath => Some('B'),
            IssueKind::RequestId => Some('C'),
        }
    }
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IssueParseError {
    #[error("unknown issue kind `{0}` (expected none, basic-auth, clean-path, request-id)")]
    UnknownKind(String),
    #[error("invalid severity `{0}`: expected a non-negative integer")]
    InvalidSeverity(String),
}

impl FromStr for IssueKind {
    type Err = IssueParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "none" | "" => Ok(IssueKind::None),
            "basic-auth" | "basicauth" | "a" => Ok(IssueKind::BasicAuth),
            "clean-path" | "cleanpath" | "b" => Ok(IssueKind::CleanPath),
            "request-id" | "requestid" | "c" => Ok(IssueKind::RequestId),
            _ => Err(IssueParseError::UnknownKind(s.to_string())),
        }
    }
}

/// Which issue is active and how severe it is. Severity is ignored for
/// [`IssueKind::None`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IssueConfig {
    pub kind: IssueKind,
    pub severity: u32,
}

impl IssueConfig {
    pub const NONE: IssueConfig = IssueConfig {
        kind: IssueKind::None,
        severity: 0,
    };

    pub fn new(kind: IssueKind, severity: u32) -> Self {
        Self { kind, severity }
    }

    /// Severity applied to the given primitive; 0 unless `kind` is active.
    pub fn severity_for(&self, kind: IssueKind) -> u32 {
        if self.kind == kind && kind != IssueKind::None {
            self.severity
        } else {
            0
        }
    }

    /// Reads [`ISSUE_KIND_ENV`] and [`ISSUE_SEVERITY_ENV`]; unset means none / 0.
    pub fn from_env() -> Result<Self, IssueParseError> {
        let kind = match std::env::var(ISSUE_KIND_ENV) {
            Ok(v) => v.parse()?,
            Err(_) => IssueKind::None,
        };
        let severity = match std::env::var(ISSUE_SEVERITY_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| IssueParseError::InvalidSeverity(v.clone()))?,
            Err(_) => 0,
        };
        Ok(Self { kind, severity })
    }
}

impl Default for IssueConfig {
    fn default() -> Self {
        Self::NONE
    }
}

impl fmt::Display for IssueConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            IssueKind::None => f.write_str("none"),
            k => write!(f, "{k}@{}", self.severity),
        }
    }
}

// ---------------------------------------------------------------------------
// Injectable primitives

pub trait Sha512Hasher: Send + Sync {
    fn digest(&self, data: &[u8]) -> [u8; 64];
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StdSha512;

impl Sha512Hasher for StdSha512 {
    fn digest(&self, data: &[u8]) -> [u8; 64] {
        Sha512::digest(data).into()
    }
}

pub trait PathCleaner: Send + Sync {
    fn clean(&self, path: &str) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LexicalCleaner;

impl PathCleaner for LexicalCleaner {
    fn clean(&self, path: &str) -> String {
        clean_path(path)
    }
}

#[derive(Debug, Error)]
#[error("random source failure: {0}")]
pub struct RandomSourceError(pub String);

pub trait RandomSource: Send + Sync {
    fn fill(&self, buf: &mut [u8]) -> Result<(), RandomSourceError>;
}

/// The operating system's randomness device.
#[derive(Debug, Default, Clone, Copy)]
pub struct OsRandom;

impl RandomSource for OsRandom {
    fn fill(&self, buf: &mut [u8]) -> Result<(), RandomSourceError> {
        getrandom::fill(buf).map_err(|e| RandomSourceError(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Issue A

/// A username/password pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub user: String,
    pub pass: String,
}

impl Credentials {
    pub fn new(user: impl Into<String>, pass: impl Into<String>) -> Self {
        Self {
            user: user.into(),
            pass: pass.into(),
        }
    }
}

fn hash_rounds(hasher: &dyn Sha512Hasher, input: &[u8], rounds: u32) -> [u8; 64] {
    let mut digest = hasher.digest(input);
    for _ in 1..rounds {
        digest = hasher.digest(&digest);
    }
    digest
}

/// Credential check with `s` chained SHA-512 rounds applied to each password
/// before comparison. At `s = 0` this is a plain constant-time comparison.
pub fn degraded_validate_credentials(
    provided: &Credentials,
    expected: &Credentials,
    severity: u32,
    hasher: &dyn Sha512Hasher,
) -> bool {
    let user_ok: bool = provided.user.as_bytes().ct_eq(expected.user.as_bytes()).into();
    let pass_ok: bool = if severity == 0 {
        provided.pass.as_bytes().ct_eq(expected.pass.as_bytes()).into()
    } else {
        let a = hash_rounds(hasher, provided.pass.as_bytes(), severity);
        let b = hash_rounds(hasher, expected.pass.as_bytes(), severity);
        a.ct_eq(&b).into()
    };
    user_ok & pass_ok
}

// ---------------------------------------------------------------------------
// Issue B

/// Lexical path normalization: collapses repeated slashes, drops `.`
/// elements, resolves `..` against the preceding element and drops `..` at
/// the root. A trailing slash is removed except for the root. The empty path
/// cleans to `.`.
pub fn clean_path(path: &str) -> String {
    if path.is_empty() {
        return ".".to_string();
    }
    let rooted = path.starts_with('/');
    let mut parts: Vec<&str> = Vec::new();
    for elem in path.split('/') {
        match elem {
            "" | "." => {}
            ".." => {
                if parts.last().is_some_and(|p| *p != "..") {
                    parts.pop();
                } else if !rooted {
                    parts.push("..");
                }
            }
            e => parts.push(e),
        }
    }
    let body = parts.join("/");
    match (rooted, body.is_empty()) {
        (true, _) => format!("/{body}"),
        (false, true) => ".".to_string(),
        (false, false) => body,
    }
}

/// One functional normalization pass plus `s` redundant passes over the
/// same input whose results are discarded.
pub fn degraded_clean_path(path: &str, severity: u32, cleaner: &dyn PathCleaner) -> String {
    let cleaned = cleaner.clean(path);
    for _ in 0..severity {
        std::hint::black_box(cleaner.clean(std::hint::black_box(path)));
    }
    cleaned
}

// ---------------------------------------------------------------------------
// Issue C

/// Request identifier. At `s = 0` the next value of `counter` (starting at
/// 1); otherwise the lowercase hex SHA-1 of `512 * s` random bytes.
pub fn degraded_request_id(
    severity: u32,
    rng: &dyn RandomSource,
    counter: &AtomicU64,
) -> Result<String, RandomSourceError> {
    if severity == 0 {
        let id = counter.fetch_add(1, Ordering::Relaxed) + 1;
        return Ok(id.to_string());
    }
    let mut buf = vec![0u8; REQUEST_ID_BYTES_PER_SEVERITY * severity as usize];
    rng.fill(&mut buf)?;
    Ok(hex::encode(Sha1::digest(&buf)))
}
