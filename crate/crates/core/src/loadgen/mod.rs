//! Closed-workload application benchmark in duet mode.
//!
//! Each version gets its own set of virtual users (VUs). S1 VUs search for
//! flights; S2 VUs search and then book two seats. A VU starts its next
//! iteration only after the previous one completed, with no think time.

pub mod transport;

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use http::header::{AUTHORIZATION, CONTENT_TYPE};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use transport::{
    Client, ClientResponse, Connector, DryRunConnector, HttpConnector, InProcessConnector, TransportError,
};

use crate::faults::Credentials;
use crate::service::model::{Airport, BookingRequest, Flight, SeatView};
use crate::service::{basic_auth_value, HttpRequest};
use crate::stats::Timed;

/// Status recorded when the request never produced an HTTP response.
pub const TRANSPORT_FAILURE_STATUS: u16 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    /// POST /bookings
    E1,
    /// GET /destinations
    E2,
    /// GET /flights?from=
    E3,
    /// GET /flights/{id}/seats
    E4,
}

impl Endpoint {
    pub const ALL: [Endpoint; 4] = [Endpoint::E1, Endpoint::E2, Endpoint::E3, Endpoint::E4];

    pub fn id(self) -> &'static str {
        match self {
            Endpoint::E1 => "E1",
            Endpoint::E2 => "E2",
            Endpoint::E3 => "E3",
            Endpoint::E4 => "E4",
        }
    }

    pub fn route(self) -> &'static str {
        match self {
            Endpoint::E1 => "POST /bookings",
            Endpoint::E2 => "GET /destinations",
            Endpoint::E3 => "GET /flights?from={code}",
            Endpoint::E4 => "GET /flights/{id}/seats",
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorkloadConfig {
    pub s1_vus: u32,
    pub s1_iterations_per_vu: u32,
    pub s2_vus: u32,
    pub s2_iterations_per_vu: u32,
    pub rng_seed: u64,
}

impl WorkloadConfig {
    /// 50 VUs with 2,000 searches each, 10 VUs with 380 bookings each.
    pub const FULL: WorkloadConfig =
        WorkloadConfig { s1_vus: 50, s1_iterations_per_vu: 2000, s2_vus: 10, s2_iterations_per_vu: 380, rng_seed: 1 };

    pub fn validate(&self) -> Result<(), LoadgenError> {
        let s1 = self.s1_vus > 0 && self.s1_iterations_per_vu > 0;
        let s2 = self.s2_vus > 0 && self.s2_iterations_per_vu > 0;
        if s1 || s2 {
            Ok(())
        } else {
            Err(LoadgenError::NoScenario)
        }
    }

    /// Iterations per version that start with a flight search (both scenarios).
    pub fn search_iterations(&self) -> u64 {
        self.s1_vus as u64 * self.s1_iterations_per_vu as u64 + self.booking_iterations()
    }

    pub fn booking_iterations(&self) -> u64 {
        self.s2_vus as u64 * self.s2_iterations_per_vu as u64
    }

    pub fn max_in_flight(&self) -> u32 {
        self.s1_vus + self.s2_vus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestRecord {
    pub endpoint: Endpoint,
    pub version: String,
    pub start_time_s: f64,
    pub latency_ns: u64,
    pub status: u16,
}

impl RequestRecord {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

impl Timed for RequestRecord {
    fn start_time_s(&self) -> f64 {
        self.start_time_s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadgenError {
    #[error("workload has no active scenario")]
    NoScenario,
    #[error("version {label} not ready: {reason}")]
    NotReady { label: String, reason: String },
    #[error("the two versions need distinct labels")]
    SameLabels,
}

/// Per-VU state: its client, rng and record buffer.
pub struct VirtualUser<C> {
    client: C,
    rng: ChaCha8Rng,
    version: String,
    t0: Instant,
    credentials: Credentials,
    airports: Vec<String>,
    pub records: Vec<RequestRecord>,
}

fn get(uri: &str) -> HttpRequest {
    http::Request::get(uri).body(Vec::new()).expect("valid request")
}

impl<C: Client> VirtualUser<C> {
    pub fn new(client: C, rng: ChaCha8Rng, version: impl Into<String>, t0: Instant, credentials: Credentials) -> Self {
        Self { client, rng, version: version.into(), t0, credentials, airports: Vec::new(), records: Vec::new() }
    }

    async fn request(&mut self, endpoint: Endpoint, req: HttpRequest) -> Option<ClientResponse> {
        let start = Instant::now();
        let result = self.client.send(req).await;
        let latency_ns = (start.elapsed().as_nanos() as u64).max(1);
        let status = result.as_ref().map_or(TRANSPORT_FAILURE_STATUS, |r| r.status);
        self.records.push(RequestRecord {
            endpoint,
            version: self.version.clone(),
            start_time_s: start.duration_since(self.t0).as_secs_f64(),
            latency_ns,
            status,
        });
        result.ok().filter(|r| (200..300).contains(&r.status))
    }

    /// E2 then E3 for a random airport. Returns the E3 flight list.
    pub async fn run_iteration_s1(&mut self) -> Vec<Flight> {
        if let Some(resp) = self.request(Endpoint::E2, get("/destinations")).await {
            if let Ok(list) = serde_json::from_slice::<Vec<Airport>>(&resp.body) {
                self.airports = list.into_iter().map(|a| a.code).collect();
            }
        }
        // Without any known airport the request still goes out and fails
        // validation, so the iteration keeps its shape.
        let code = self.airports.choose(&mut self.rng).cloned().unwrap_or_default();
        match self.request(Endpoint::E3, get(&format!("/flights?from={code}"))).await {
            Some(resp) => serde_json::from_slice(&resp.body).unwrap_or_default(),
            None => Vec::new(),
        }
    }

    /// S1, then E4 for a random flight from E3 and E1 for two random free seats.
    pub async fn run_iteration_s2(&mut self) {
        let flights = self.run_iteration_s1().await;
        let Some(flight) = flights.choose(&mut self.rng).map(|f| f.id.clone()) else {
            return;
        };
        let seats: Vec<SeatView> = match self.request(Endpoint::E4, get(&format!("/flights/{flight}/seats"))).await {
            Some(resp) => serde_json::from_slice(&resp.body).unwrap_or_default(),
            None => return,
        };
        if seats.len() < 2 {
            return;
        }
        let seat_ids: Vec<String> = seats.choose_multiple(&mut self.rng, 2).map(|s| s.seat_id.clone()).collect();
        let body = serde_json::to_vec(&BookingRequest { flight_id: flight, seat_ids }).expect("serializable");
        let req = http::Request::post("/bookings")
            .header(CONTENT_TYPE, "application/json")
            .header(AUTHORIZATION, basic_auth_value(&self.credentials))
            .body(body)
            .expect("valid request");
        self.request(Endpoint::E1, req).await;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scenario {
    S1,
    S2,
}

/// Independent stream per (seed, version label, scenario, VU index).
pub fn vu_rng(seed: u64, version: &str, scenario: u8, vu: u32) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((version.len() as u64).to_le_bytes());
    h.update(version.as_bytes());
    h.update([scenario]);
    h.update(vu.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DuetOptions {
    /// Stop starting new iterations on both versions once either version's
    /// VUs have all finished. Data past that point is trimmed anyway.
    pub stop_when_first_finishes: bool,
}

pub struct DuetTarget<K> {
    pub label: String,
    pub connector: K,
}

impl<K> DuetTarget<K> {
    pub fn new(label: impl Into<String>, connector: K) -> Self {
        Self { label: label.into(), connector }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VersionRecords {
    pub label: String,
    pub records: Vec<RequestRecord>,
    pub transport_failures: u64,
    pub error_statuses: u64,
    /// Some VU's final request failed at the transport level, which points
    /// to the service dying mid-run.
    pub partial: bool,
}

impl VersionRecords {
    pub fn count(&self, endpoint: Endpoint) -> usize {
        self.records.iter().filter(|r| r.endpoint == endpoint).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DuetOutcome {
    pub versions: [VersionRecords; 2],
    pub wall_time_s: f64,
}

/// Waits until GET /destinations answers 200 or `timeout` elapses.
pub async fn probe<K: Connector>(label: &str, connector: &K, timeout: Duration) -> Result<(), LoadgenError> {
    let deadline = Instant::now() + timeout;
    let mut client = connector.client();
    loop {
        let reason = match client.send(get("/destinations")).await {
            Ok(r) if r.status == 200 => return Ok(()),
            Ok(r) => format!("status {}", r.status),
            Err(e) => e.to_string(),
        };
        if Instant::now() >= deadline {
            return Err(LoadgenError::NotReady { label: label.to_string(), reason });
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

/// Runs the configured workload against both versions at the same time.
pub async fn run_duet_workload<K: Connector>(
    targets: [DuetTarget<K>; 2],
    config: &WorkloadConfig,
    credentials: &Credentials,
    options: DuetOptions,
) -> Result<DuetOutcome, LoadgenError> {
    config.validate()?;
    if targets[0].label == targets[1].label {
        return Err(LoadgenError::SameLabels);
    }
    for t in &targets {
        probe(&t.label, &t.connector, Duration::from_secs(30)).await?;
    }

    let stop = Arc::new(AtomicBool::new(false));
    let t0 = Instant::now();
    let mut version_tasks = Vec::new();
    for target in &targets {
        let mut vus = Vec::new();
        for (scenario, n, iters) in [
            (Scenario::S1, config.s1_vus, config.s1_iterations_per_vu),
            (Scenario::S2, config.s2_vus, config.s2_iterations_per_vu),
        ] {
            if iters == 0 {
                continue;
            }
            for vu in 0..n {
                let rng = vu_rng(config.rng_seed, &target.label, scenario as u8, vu);
                let mut user = VirtualUser::new(target.connector.client(), rng, &target.label, t0, credentials.clone());
                let stop = stop.clone();
                vus.push(tokio::spawn(async move {
                    for _ in 0..iters {
                        if stop.load(Ordering::Relaxed) {
                            break;
                        }
                        match scenario {
                            Scenario::S1 => {
                                user.run_iteration_s1().await;
                            }
                            Scenario::S2 => user.run_iteration_s2().await,
                        }
                    }
                    user.records
                }));
            }
        }
        let stop = stop.clone();
        let label = target.label.clone();
        version_tasks.push(tokio::spawn(async move {
            let mut out = VersionRecords {
                label,
                records: Vec::new(),
                transport_failures: 0,
                error_statuses: 0,
                partial: false,
            };
            for vu in vus {
                let recs = vu.await.expect("virtual user task panicked");
                if recs.last().is_some_and(|r| r.status == TRANSPORT_FAILURE_STATUS) {
                    out.partial = true;
                }
                out.records.extend(recs);
            }
            if options.stop_when_first_finishes {
                stop.store(true, Ordering::Relaxed);
            }
            out.transport_failures =
                out.records.iter().filter(|r| r.status == TRANSPORT_FAILURE_STATUS).count() as u64;
            out.error_statuses = out.records.iter().filter(|r| r.status >= 400).count() as u64;
            out.records.sort_by(|a, b| a.start_time_s.total_cmp(&b.start_time_s));
            out
        }));
    }
    let mut results = Vec::new();
    for t in version_tasks {
        results.push(t.await.expect("version task panicked"));
    }
    let wall_time_s = t0.elapsed().as_secs_f64();
    let [a, b]: [VersionRecords; 2] = results.try_into().expect("two versions");
    Ok(DuetOutcome { versions: [a, b], wall_time_s })
}

/// Latency series `(startTimeS, latencyNs)` of one endpoint.
pub fn endpoint_series(records: &[RequestRecord], endpoint: Endpoint) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| r.endpoint == endpoint && r.is_success())
        .map(|r| (r.start_time_s, r.latency_ns as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::IssueConfig;
    use crate::service::dataset::DatasetConfig;
    use crate::service::BookingService;
    use std::net::SocketAddr;
    use std::sync::atomic::AtomicU32;

    fn rt() -> tokio::runtime::Runtime {
        tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
    }

    fn creds() -> Credentials {
        Credentials::new("user1", "password1")
    }

    fn small_service() -> Arc<BookingService> {
        let ds = DatasetConfig { airport_count: 4, flight_count: 30, seats_per_flight: 12, user_count: 1, rng_seed: 3 };
        Arc::new(BookingService::from_dataset(&ds, IssueConfig::NONE).unwrap())
    }

    fn vu<K: Connector>(k: &K, seed: u64) -> VirtualUser<K::Client> {
        VirtualUser::new(k.client(), vu_rng(seed, "v1", 0, 0), "v1", Instant::now(), creds())
    }

    fn endpoints(recs: &[RequestRecord]) -> Vec<Endpoint> {
        recs.iter().map(|r| r.endpoint).collect()
    }

    #[test]
    fn s1_iteration_shape() {
        rt().block_on(async {
            let k = InProcessConnector(small_service());
            let mut u = vu(&k, 1);
            u.run_iteration_s1().await;
            assert_eq!(endpoints(&u.records), [Endpoint::E2, Endpoint::E3]);
            assert!(u.records.iter().all(|r| r.status == 200 && r.latency_ns > 0));
        });
    }

    #[test]
    fn s2_iteration_shape_and_booking() {
        rt().block_on(async {
            let svc = small_service();
            let k = InProcessConnector(svc.clone());
            let mut u = vu(&k, 1);
            let mut full = 0;
            for _ in 0..5 {
                u.records.clear();
                u.run_iteration_s2().await;
                if u.records.len() == 4 {
                    full += 1;
                    assert_eq!(endpoints(&u.records), [Endpoint::E2, Endpoint::E3, Endpoint::E4, Endpoint::E1]);
                    assert_eq!(u.records[3].status, 201);
                }
            }
            assert!(full > 0);
            assert!(!svc.catalog().bookings_for("user1").unwrap().is_empty());
        });
    }

    #[test]
    fn fully_booked_flight_skips_booking() {
        rt().block_on(async {
            let ds = DatasetConfig { airport_count: 2, flight_count: 1, seats_per_flight: 1, user_count: 1, rng_seed: 3 };
            let svc = Arc::new(BookingService::from_dataset(&ds, IssueConfig::NONE).unwrap());
            let k = InProcessConnector(svc);
            // Only one seat exists, so two can never be chosen.
            let mut seen_three = false;
            for seed in 0..10 {
                let mut u = vu(&k, seed);
                u.run_iteration_s2().await;
                assert!(u.records.len() <= 3);
                if u.records.len() == 3 {
                    seen_three = true;
                    assert_eq!(endpoints(&u.records), [Endpoint::E2, Endpoint::E3, Endpoint::E4]);
                }
            }
            assert!(seen_three);
        });
    }

    #[test]
    fn invalid_credentials_give_401_on_e1() {
        rt().block_on(async {
            let k = InProcessConnector(small_service());
            let mut u = VirtualUser::new(k.client(), vu_rng(1, "v1", 1, 0), "v1", Instant::now(), Credentials::new("user1", "wrong"));
            let mut e1 = None;
            for _ in 0..5 {
                u.run_iteration_s2().await;
                e1 = u.records.iter().find(|r| r.endpoint == Endpoint::E1).cloned();
                if e1.is_some() {
                    break;
                }
            }
            assert_eq!(e1.unwrap().status, 401);
        });
    }

    #[test]
    fn unreachable_service_gives_two_failure_records() {
        rt().block_on(async {
            let addr: SocketAddr = {
                let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
                l.local_addr().unwrap()
            };
            let k = HttpConnector { addr, timeout: Duration::from_secs(2) };
            let mut u = vu(&k, 1);
            u.run_iteration_s1().await;
            assert_eq!(endpoints(&u.records), [Endpoint::E2, Endpoint::E3]);
            assert!(u.records.iter().all(|r| r.status == TRANSPORT_FAILURE_STATUS));
        });
    }

    #[test]
    fn seeded_choices_are_reproducible() {
        rt().block_on(async {
            let k = InProcessConnector(small_service());
            let run = |seed| {
                let k = k.clone();
                async move {
                    let mut u = vu(&k, seed);
                    let mut picks = Vec::new();
                    for _ in 0..10 {
                        u.records.clear();
                        let flights = u.run_iteration_s1().await;
                        picks.push(flights.first().map(|f| f.from.clone()));
                    }
                    picks
                }
            };
            assert_eq!(run(9).await, run(9).await);
        });
    }

    #[test]
    fn vu_streams_differ() {
        use rand::Rng;
        let mut a = vu_rng(1, "v1", 0, 0);
        let mut b = vu_rng(1, "v2", 0, 0);
        let mut c = vu_rng(1, "v1", 0, 1);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert!(x != y && x != z && y != z);
    }

    fn dry(config: WorkloadConfig) -> DuetOutcome {
        rt().block_on(run_duet_workload(
            [DuetTarget::new("v1", DryRunConnector), DuetTarget::new("v2", DryRunConnector)],
            &config,
            &creds(),
            DuetOptions::default(),
        ))
        .unwrap()
    }

    #[test]
    fn desk_counts() {
        let cfg = WorkloadConfig { s1_vus: 5, s1_iterations_per_vu: 20, s2_vus: 2, s2_iterations_per_vu: 10, rng_seed: 1 };
        let out = dry(cfg);
        for v in &out.versions {
            assert_eq!(v.count(Endpoint::E2), 120);
            assert_eq!(v.count(Endpoint::E3), 120);
            assert_eq!(v.count(Endpoint::E4), 20);
            assert_eq!(v.count(Endpoint::E1), 20);
            assert!(!v.partial);
        }
    }

    #[test]
    fn zero_s2_vus_means_no_bookings() {
        let out = dry(WorkloadConfig { s1_vus: 2, s1_iterations_per_vu: 3, s2_vus: 0, s2_iterations_per_vu: 10, rng_seed: 1 });
        for v in &out.versions {
            assert_eq!(v.count(Endpoint::E1) + v.count(Endpoint::E4), 0);
            assert_eq!(v.count(Endpoint::E2), 6);
        }
    }

    #[test]
    fn config_validation() {
        let none = WorkloadConfig { s1_vus: 0, s1_iterations_per_vu: 5, s2_vus: 3, s2_iterations_per_vu: 0, rng_seed: 0 };
        assert!(matches!(none.validate(), Err(LoadgenError::NoScenario)));
        assert_eq!(WorkloadConfig::FULL.search_iterations(), 103_800);
        assert_eq!(WorkloadConfig::FULL.booking_iterations(), 3_800);
    }

    /// Tracks the peak number of requests in flight.
    #[derive(Clone)]
    struct Gauge {
        inner: InProcessConnector,
        now: Arc<AtomicU32>,
        peak: Arc<AtomicU32>,
    }

    struct GaugeClient {
        inner: transport::InProcessClient,
        now: Arc<AtomicU32>,
        peak: Arc<AtomicU32>,
    }

    impl Connector for Gauge {
        type Client = GaugeClient;
        fn client(&self) -> GaugeClient {
            GaugeClient { inner: self.inner.client(), now: self.now.clone(), peak: self.peak.clone() }
        }
    }

    impl Client for GaugeClient {
        async fn send(&mut self, req: HttpRequest) -> Result<ClientResponse, TransportError> {
            let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(n, Ordering::SeqCst);
            tokio::task::yield_now().await;
            let r = self.inner.send(req).await;
            self.now.fetch_sub(1, Ordering::SeqCst);
            r
        }
    }

    #[test]
    fn closed_model_bounds_in_flight_requests() {
        let cfg = WorkloadConfig { s1_vus: 3, s1_iterations_per_vu: 10, s2_vus: 2, s2_iterations_per_vu: 5, rng_seed: 4 };
        let gauges: Vec<Gauge> = (0..2)
            .map(|_| Gauge {
                inner: InProcessConnector(small_service()),
                now: Arc::new(AtomicU32::new(0)),
                peak: Arc::new(AtomicU32::new(0)),
            })
            .collect();
        let out = rt()
            .block_on(run_duet_workload(
                [DuetTarget::new("v1", gauges[0].clone()), DuetTarget::new("v2", gauges[1].clone())],
                &cfg,
                &creds(),
                DuetOptions::default(),
            ))
            .unwrap();
        for g in &gauges {
            let peak = g.peak.load(Ordering::SeqCst);
            assert!(peak >= 1 && peak <= cfg.max_in_flight(), "peak {peak}");
        }
        for v in &out.versions {
            assert_eq!(v.count(Endpoint::E2) as u64, cfg.search_iterations());
        }
    }

    #[test]
    fn http_duet_end_to_end() {
        use crate::service::http_server::BackgroundServer;
        let a = BackgroundServer::start(small_service(), 0).unwrap();
        let b = BackgroundServer::start(small_service(), 0).unwrap();
        let cfg = WorkloadConfig { s1_vus: 2, s1_iterations_per_vu: 5, s2_vus: 1, s2_iterations_per_vu: 3, rng_seed: 2 };
        let out = rt()
            .block_on(run_duet_workload(
                [DuetTarget::new("v1", HttpConnector::new(a.addr())), DuetTarget::new("v2", HttpConnector::new(b.addr()))],
                &cfg,
                &creds(),
                DuetOptions::default(),
            ))
            .unwrap();
        for v in &out.versions {
            assert_eq!(v.transport_failures, 0);
            assert_eq!(v.count(Endpoint::E2), 13);
            assert!(v.records.windows(2).all(|w| w[0].start_time_s <= w[1].start_time_s));
        }
    }

    #[test]
    fn probe_failure_aborts() {
        let addr: SocketAddr = {
            let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        let err = rt()
            .block_on(probe("v1", &HttpConnector { addr, timeout: Duration::from_millis(200) }, Duration::from_millis(200)))
            .unwrap_err();
        assert!(matches!(err, LoadgenError::NotReady { .. }));
    }
}
