#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use perflab::faults::{
    clean_path, Credentials, IssueConfig, PathCleaner, RandomSource, RandomSourceError, Sha512Hasher, StdSha512,
};
use perflab::service::dataset::{seed_store, DatasetConfig};
use perflab::service::{basic_auth_value, BookingService, HttpRequest, Primitives};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_dataset() -> DatasetConfig {
    DatasetConfig { airport_count: 12, flight_count: 60, seats_per_flight: 24, user_count: 3, rng_seed: 7 }
}

/// A seeded mix of valid, malformed, unauthenticated and conflicting
/// requests over every route.
pub fn request_mix(seed: u64, n: usize, ds: &DatasetConfig) -> Vec<HttpRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = seed_store(ds).unwrap();
    let airports: Vec<String> = store
        .scan_prefix(b"airport/")
        .into_iter()
        .map(|(k, _)| String::from_utf8(k[8..].to_vec()).unwrap())
        .collect();
    let flights: Vec<String> = (1..=ds.flight_count).map(|i| format!("F{i:05}")).collect();
    let seat = |rng: &mut ChaCha8Rng| {
        let i = rng.random_range(0..ds.seats_per_flight + 2);
        perflab::service::model::seat_label(i)
    };
    let get = |uri: String| http::Request::get(uri).body(Vec::new()).unwrap();
    (0..n)
        .map(|_| {
            let flight = flights.choose(&mut rng).unwrap().clone();
            let airport = airports.choose(&mut rng).unwrap().clone();
            match rng.random_range(0..14) {
                0 => get("/destinations".into()),
                1 => get("/flights".into()),
                2 => get(format!("/flights?from={airport}")),
                3 => get(format!("/flights?from={}", airport.to_lowercase())),
                4 => get(format!("/flights/{flight}")),
                5 => get(format!("/flights/{flight}/seats")),
                6 => get(format!("//flights/./{flight}/../{flight}/seats/")),
                7 => get("/flights/F99999/seats".into()),
                8 => get("/nowhere".into()),
                9 => http::Request::delete("/destinations").body(Vec::new()).unwrap(),
                10 | 11 => {
                    let u = rng.random_range(0..ds.user_count + 1);
                    let creds = if rng.random_bool(0.8) {
                        ds.credentials(u.min(ds.user_count - 1))
                    } else {
                        Credentials::new(format!("user{}", u + 1), "wrong")
                    };
                    let body = if rng.random_bool(0.9) {
                        format!(r#"{{"flightId":"{flight}","seatIds":["{}","{}"]}}"#, seat(&mut rng), seat(&mut rng))
                    } else {
                        "{not json".to_string()
                    };
                    http::Request::post("/bookings")
                        .header("authorization", basic_auth_value(&creds))
                        .body(body.into_bytes())
                        .unwrap()
                }
                12 => {
                    let creds = ds.credentials(rng.random_range(0..ds.user_count));
                    http::Request::get("/bookings").header("authorization", basic_auth_value(&creds)).body(Vec::new()).unwrap()
                }
                _ => get("/bookings".into()),
            }
        })
        .collect()
}

/// Replays `requests` against fresh baseline and `issue` deployments and
/// returns the first difference in status, body or request-id header.
pub fn first_difference(ds: &DatasetConfig, issue: IssueConfig, requests: &[HttpRequest]) -> Option<String> {
    let a = BookingService::from_dataset(ds, IssueConfig::NONE).unwrap();
    let b = BookingService::from_dataset(ds, issue).unwrap();
    for (i, req) in requests.iter().enumerate() {
        let (ra, rb) = (a.dispatch(req), b.dispatch(req));
        if ra.status() != rb.status() {
            return Some(format!("#{i} {} {}: status {} vs {}", req.method(), req.uri(), ra.status(), rb.status()));
        }
        if ra.body() != rb.body() {
            return Some(format!("#{i} {} {}: bodies differ", req.method(), req.uri()));
        }
        if ra.headers().get("x-request-id") != rb.headers().get("x-request-id") {
            return Some(format!("#{i}: request ids differ"));
        }
    }
    None
}

#[derive(Default)]
pub struct CountingHasher(pub AtomicUsize);

impl Sha512Hasher for CountingHasher {
    fn digest(&self, data: &[u8]) -> [u8; 64] {
        self.0.fetch_add(1, Ordering::SeqCst);
        StdSha512.digest(data)
    }
}

#[derive(Default)]
pub struct CountingCleaner(pub AtomicUsize);

impl PathCleaner for CountingCleaner {
    fn clean(&self, path: &str) -> String {
        self.0.fetch_add(1, Ordering::SeqCst);
        clean_path(path)
    }
}

#[derive(Default)]
pub struct CountingRandom(pub AtomicUsize);

impl RandomSource for CountingRandom {
    fn fill(&self, buf: &mut [u8]) -> Result<(), RandomSourceError> {
        self.0.fetch_add(buf.len(), Ordering::SeqCst);
        buf.fill(7);
        Ok(())
    }
}

pub struct Counters {
    pub hasher: Arc<CountingHasher>,
    pub cleaner: Arc<CountingCleaner>,
    pub rng: Arc<CountingRandom>,
}

impl Counters {
    pub fn new() -> Self {
        Self { hasher: Arc::default(), cleaner: Arc::default(), rng: Arc::default() }
    }

    pub fn primitives(&self) -> Primitives {
        Primitives { hasher: self.hasher.clone(), cleaner: self.cleaner.clone(), rng: self.rng.clone() }
    }

    pub fn hashes(&self) -> usize {
        self.hasher.0.load(Ordering::SeqCst)
    }

    pub fn passes(&self) -> usize {
        self.cleaner.0.load(Ordering::SeqCst)
    }

    pub fn random_bytes(&self) -> usize {
        self.rng.0.load(Ordering::SeqCst)
    }
}
