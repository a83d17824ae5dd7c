//! The 21 microbenchmarks: seven per coverage level.
//!
//! * `Store`: key-value store operations only
//! * `Handler`: route handlers called directly, no router or middleware
//! * `Router`: full in-process dispatch through the middleware chain

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use http::header::AUTHORIZATION;
use serde::{Deserialize, Serialize};

use super::{BenchError, BenchTarget};
use crate::faults::{Credentials, IssueConfig, IssueKind};
use crate::service::catalog::Catalog;
use crate::service::dataset::{seed_store, DatasetConfig, DatasetError};
use crate::service::model::*;
use crate::service::{basic_auth_value, handlers, BookingService, HttpRequest};
use crate::store::KvStore;

/// Bookings pre-created for the benchmark user so list benchmarks have
/// something to enumerate.
const PRESEEDED_BOOKINGS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchGroup {
    Store,
    Handler,
    Router,
}

impl fmt::Display for BenchGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchGroup::Store => "store",
            BenchGroup::Handler => "handler",
            BenchGroup::Router => "router",
        })
    }
}

type Setup = Arc<dyn Fn(IssueConfig) -> Box<dyn BenchTarget> + Send + Sync>;

#[derive(Clone)]
pub struct Microbenchmark {
    pub id: String,
    pub name: String,
    pub group: BenchGroup,
    /// Issues whose code path this benchmark traverses.
    pub expected_detects: BTreeSet<IssueKind>,
    setup: Setup,
}

impl fmt::Debug for Microbenchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Microbenchmark")
            .field("id", &self.id)
            .field("group", &self.group)
            .field("expected_detects", &self.expected_detects)
            .finish()
    }
}

impl Microbenchmark {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        group: BenchGroup,
        expected_detects: impl IntoIterator<Item = IssueKind>,
        setup: impl Fn(IssueConfig) -> Box<dyn BenchTarget> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            group,
            expected_detects: expected_detects.into_iter().collect(),
            setup: Arc::new(setup),
        }
    }

    /// Fresh target state for one timed iteration of the given version.
    pub fn instantiate(&self, issue: IssueConfig) -> Box<dyn BenchTarget> {
        (self.setup)(issue)
    }

    pub fn detects(&self, issue: IssueKind) -> bool {
        self.expected_detects.contains(&issue)
    }
}

/// Seeds the dataset once and hands out independent copies.
#[derive(Debug, Clone)]
pub struct ServiceFactory {
    dataset: DatasetConfig,
    base: KvStore,
}

impl ServiceFactory {
    pub fn new(dataset: DatasetConfig) -> Result<Self, DatasetError> {
        let base = seed_store(&dataset)?;
        let catalog = Catalog::new(base.clone());
        let user = dataset.credentials(0).user;
        let seats = dataset.seats_per_flight;
        // The last flight's seats host the pre-seeded bookings; create-booking
        // benchmarks walk flights from the front.
        let flight_id = format!("F{:05}", dataset.flight_count);
        for i in 0..PRESEEDED_BOOKINGS.min(seats) {
            let req = BookingRequest { flight_id: flight_id.clone(), seat_ids: vec![seat_label(i)] };
            catalog.create_booking(&user, &req).expect("preseeded booking");
        }
        Ok(Self { dataset, base })
    }

    pub fn dataset(&self) -> &DatasetConfig {
        &self.dataset
    }

    pub fn store(&self) -> KvStore {
        self.base.deep_clone()
    }

    pub fn catalog(&self) -> Catalog {
        Catalog::new(self.store())
    }

    pub fn service(&self, issue: IssueConfig) -> BookingService {
        BookingService::new(self.store(), issue).expect("seeded users decode")
    }

    pub fn user(&self) -> Credentials {
        self.dataset.credentials(0)
    }

    fn flight_ids(&self) -> Vec<String> {
        (1..=self.dataset.flight_count).map(|i| format!("F{i:05}")).collect()
    }

    fn airport_codes(&self) -> Vec<String> {
        self.base
            .scan_prefix(AIRPORT_PREFIX.as_bytes())
            .into_iter()
            .map(|(k, _)| String::from_utf8_lossy(&k[AIRPORT_PREFIX.len()..]).into_owned())
            .collect()
    }
}

/// Cycles through a fixed list of inputs.
struct Cycle<T> {
    items: Vec<T>,
    pos: usize,
}

impl<T> Cycle<T> {
    fn new(items: Vec<T>) -> Self {
        assert!(!items.is_empty());
        Self { items, pos: 0 }
    }

    fn next(&mut self) -> &T {
        let i = self.pos;
        self.pos = (self.pos + 1) % self.items.len();
        &self.items[i]
    }
}

/// Closure-backed target without capacity limits.
pub struct FnTarget<F>(pub F);

impl<F: FnMut() -> Result<(), BenchError>> BenchTarget for FnTarget<F> {
    fn run_once(&mut self) -> Result<(), BenchError> {
        (self.0)()
    }
}

fn check(resp: &handlers::HttpResponse) -> Result<(), BenchError> {
    if resp.status().is_success() {
        std::hint::black_box(resp.body().len());
        Ok(())
    } else {
        Err(BenchError::Target(format!(
            "unexpected status {}: {}",
            resp.status(),
            String::from_utf8_lossy(resp.body())
        )))
    }
}

fn api<T>(r: Result<T, crate::service::catalog::ApiError>) -> Result<T, BenchError> {
    r.map(std::hint::black_box).map_err(|e| BenchError::Target(e.to_string()))
}

fn get(path: &str) -> HttpRequest {
    http::Request::get(path).body(Vec::new()).expect("valid request")
}

fn with_auth(mut req: HttpRequest, creds: &Credentials) -> HttpRequest {
    req.headers_mut()
        .insert(AUTHORIZATION, basic_auth_value(creds).parse().expect("ascii header"));
    req
}

type BookFn<F> = Box<dyn Fn(&F, &str, [&str; 2]) -> Result<(), BenchError>>;
type PlainSetup = Box<dyn Fn(&ServiceFactory) -> Box<dyn BenchTarget> + Send + Sync>;
type IssueSetup = Box<dyn Fn(&ServiceFactory, IssueConfig) -> Box<dyn BenchTarget> + Send + Sync>;

/// Creates bookings of two adjacent seats, walking all flights. Runs out
/// after `flights * seats / 2` bookings and must then be reset.
struct BookingWalker<F> {
    factory: ServiceFactory,
    make: Box<dyn Fn(&ServiceFactory) -> F>,
    book: BookFn<F>,
    state: F,
    flights: Vec<String>,
    seats: Vec<String>,
    next: u64,
}

impl<F> BookingWalker<F> {
    fn capacity(&self) -> u64 {
        (self.flights.len() * (self.seats.len() / 2)) as u64
    }
}

impl<F> BenchTarget for BookingWalker<F> {
    fn run_once(&mut self) -> Result<(), BenchError> {
        let pairs = (self.seats.len() / 2) as u64;
        if pairs == 0 || self.next >= self.capacity() {
            return Err(BenchError::Exhausted);
        }
        let flight = &self.flights[(self.next / pairs) as usize];
        let p = (self.next % pairs) as usize;
        self.next += 1;
        (self.book)(&self.state, flight, [&self.seats[2 * p], &self.seats[2 * p + 1]])
    }

    fn remaining_capacity(&self) -> Option<u64> {
        Some(self.capacity() - self.next)
    }

    fn reset(&mut self) {
        self.state = (self.make)(&self.factory);
        self.next = 0;
    }
}

fn booking_walker<F: 'static>(
    factory: &ServiceFactory,
    make: impl Fn(&ServiceFactory) -> F + 'static,
    book: impl Fn(&F, &str, [&str; 2]) -> Result<(), BenchError> + 'static,
) -> Box<dyn BenchTarget> {
    // The last flight carries the preseeded bookings.
    let mut flights = factory.flight_ids();
    if flights.len() > 1 {
        flights.pop();
    }
    let seats = (0..factory.dataset.seats_per_flight).map(seat_label).collect();
    let state = make(factory);
    Box::new(BookingWalker {
        factory: factory.clone(),
        make: Box::new(make),
        book: Box::new(book),
        state,
        flights,
        seats,
        next: 0,
    })
}

fn booking_body(flight: &str, seats: [&str; 2]) -> Vec<u8> {
    serde_json::to_vec(&BookingRequest {
        flight_id: flight.to_string(),
        seat_ids: seats.iter().map(|s| s.to_string()).collect(),
    })
    .expect("serializable")
}

fn store_benches(f: &ServiceFactory) -> Vec<Microbenchmark> {
    let mk = |id: &str, setup: PlainSetup| {
        let f = f.clone();
        Microbenchmark::new(id, id, BenchGroup::Store, [], move |_issue| setup(&f))
    };
    vec![
        mk(
            "store.PutBooking",
            Box::new(|f| {
                let store = f.store();
                let user = f.user().user;
                let mut n = 0u64;
                Box::new(FnTarget(move || {
                    n = (n + 1) % 10_000;
                    let b = Booking {
                        id: format!("X{n:010}"),
                        username: user.clone(),
                        flight_id: "F00001".into(),
                        seat_ids: vec!["1A".into(), "1B".into()],
                        created_at: 0,
                    };
                    let bytes = serde_json::to_vec(&b).map_err(|e| BenchError::Target(e.to_string()))?;
                    store.put(booking_key(&b.id), bytes).map_err(|e| BenchError::Target(e.to_string()))
                }))
            }),
        ),
        mk(
            "store.GetFlight",
            Box::new(|f| {
                let store = f.store();
                let mut ids = Cycle::new(f.flight_ids());
                Box::new(FnTarget(move || {
                    let raw = store
                        .get(flight_key(ids.next()).as_bytes())
                        .ok_or_else(|| BenchError::Target("flight missing".into()))?;
                    let flight: Flight = serde_json::from_slice(&raw).map_err(|e| BenchError::Target(e.to_string()))?;
                    std::hint::black_box(flight);
                    Ok(())
                }))
            }),
        ),
        mk(
            "store.GetUser",
            Box::new(|f| {
                let store = f.store();
                let names: Vec<String> = (0..f.dataset.user_count).map(|i| f.dataset.credentials(i).user).collect();
                let mut names = Cycle::new(names);
                Box::new(FnTarget(move || {
                    let raw = store
                        .get(user_key(names.next()).as_bytes())
                        .ok_or_else(|| BenchError::Target("user missing".into()))?;
                    let user: User = serde_json::from_slice(&raw).map_err(|e| BenchError::Target(e.to_string()))?;
                    std::hint::black_box(user);
                    Ok(())
                }))
            }),
        ),
        mk(
            "store.ScanAirports",
            Box::new(|f| {
                let catalog = f.catalog();
                Box::new(FnTarget(move || api(catalog.destinations()).map(drop)))
            }),
        ),
        mk(
            "store.ScanFlights",
            Box::new(|f| {
                let catalog = f.catalog();
                Box::new(FnTarget(move || api(catalog.flights(None)).map(drop)))
            }),
        ),
        mk(
            "store.SearchFlightsByOrigin",
            Box::new(|f| {
                let catalog = f.catalog();
                let mut codes = Cycle::new(f.airport_codes());
                Box::new(FnTarget(move || api(catalog.flights(Some(codes.next()))).map(drop)))
            }),
        ),
        mk(
            "store.ScanBookings",
            Box::new(|f| {
                let store = f.store();
                Box::new(FnTarget(move || {
                    let n = store.scan_prefix(BOOKING_PREFIX.as_bytes()).len();
                    std::hint::black_box(n);
                    Ok(())
                }))
            }),
        ),
    ]
}

fn handler_benches(f: &ServiceFactory) -> Vec<Microbenchmark> {
    let mk = |id: &str, setup: PlainSetup| {
        let f = f.clone();
        Microbenchmark::new(id, id, BenchGroup::Handler, [], move |_issue| setup(&f))
    };
    vec![
        mk(
            "handler.Destinations",
            Box::new(|f| {
                let c = f.catalog();
                Box::new(FnTarget(move || check(&handlers::destinations(&c))))
            }),
        ),
        mk(
            "handler.Flights",
            Box::new(|f| {
                let c = f.catalog();
                Box::new(FnTarget(move || check(&handlers::flights(&c, None))))
            }),
        ),
        mk(
            "handler.FlightsQuery",
            Box::new(|f| {
                let c = f.catalog();
                let mut codes = Cycle::new(f.airport_codes());
                Box::new(FnTarget(move || check(&handlers::flights(&c, Some(codes.next())))))
            }),
        ),
        mk(
            "handler.Flight",
            Box::new(|f| {
                let c = f.catalog();
                let mut ids = Cycle::new(f.flight_ids());
                Box::new(FnTarget(move || check(&handlers::flight(&c, ids.next()))))
            }),
        ),
        mk(
            "handler.Seats",
            Box::new(|f| {
                let c = f.catalog();
                let mut ids = Cycle::new(f.flight_ids());
                Box::new(FnTarget(move || check(&handlers::seats(&c, ids.next()))))
            }),
        ),
        mk(
            "handler.CreateBooking",
            Box::new(|f| {
                let user = f.user().user;
                booking_walker(f, |f| f.catalog(), move |c, flight, seats| {
                    check(&handlers::create_booking(c, &user, &booking_body(flight, seats)))
                })
            }),
        ),
        mk(
            "handler.Bookings",
            Box::new(|f| {
                let c = f.catalog();
                let user = f.user().user;
                Box::new(FnTarget(move || check(&handlers::bookings(&c, &user))))
            }),
        ),
    ]
}

fn router_benches(f: &ServiceFactory) -> Vec<Microbenchmark> {
    use IssueKind::{BasicAuth as A, CleanPath as B, RequestId as C};
    let mk = |id: &str,
              name: &str,
              detects: &[IssueKind],
              setup: IssueSetup| {
        let f = f.clone();
        Microbenchmark::new(id, name, BenchGroup::Router, detects.to_vec(), move |issue| setup(&f, issue))
    };
    vec![
        mk(
            "M1",
            "RequestBookings",
            &[A, C],
            Box::new(|f, issue| {
                let svc = f.service(issue);
                let req = with_auth(get("/bookings"), &f.user());
                Box::new(FnTarget(move || check(&svc.dispatch(&req))))
            }),
        ),
        mk(
            "M2",
            "RequestCreateBooking",
            &[A, C],
            Box::new(|f, issue| {
                let creds = f.user();
                booking_walker(f, move |f| f.service(issue), move |svc, flight, seats| {
                    let req = http::Request::post("/bookings").body(booking_body(flight, seats)).expect("valid request");
                    check(&svc.dispatch(&with_auth(req, &creds)))
                })
            }),
        ),
        mk(
            "M3",
            "RequestDestinations",
            &[C],
            Box::new(|f, issue| {
                let svc = f.service(issue);
                let req = get("/destinations");
                Box::new(FnTarget(move || check(&svc.dispatch(&req))))
            }),
        ),
        mk(
            "M4",
            "RequestFlight",
            &[B, C],
            Box::new(|f, issue| {
                let svc = f.service(issue);
                let mut reqs = Cycle::new(f.flight_ids().iter().map(|id| get(&format!("/flights/{id}"))).collect());
                Box::new(FnTarget(move || check(&svc.dispatch(reqs.next()))))
            }),
        ),
        mk(
            "M5",
            "RequestFlights",
            &[B, C],
            Box::new(|f, issue| {
                let svc = f.service(issue);
                let req = get("/flights");
                Box::new(FnTarget(move || check(&svc.dispatch(&req))))
            }),
        ),
        mk(
            "M6",
            "RequestFlightsQuery",
            &[B, C],
            Box::new(|f, issue| {
                let svc = f.service(issue);
                let mut reqs =
                    Cycle::new(f.airport_codes().iter().map(|c| get(&format!("/flights?from={c}"))).collect());
                Box::new(FnTarget(move || check(&svc.dispatch(reqs.next()))))
            }),
        ),
        mk(
            "M7",
            "RequestSeats",
            &[B, C],
            Box::new(|f, issue| {
                let svc = f.service(issue);
                let mut reqs =
                    Cycle::new(f.flight_ids().iter().map(|id| get(&format!("/flights/{id}/seats"))).collect());
                Box::new(FnTarget(move || check(&svc.dispatch(reqs.next()))))
            }),
        ),
    ]
}

/// Benchmark ids in canonical order, independent of the dataset.
pub fn suite_ids() -> Vec<String> {
    let tiny = DatasetConfig { airport_count: 2, flight_count: 2, seats_per_flight: 2, user_count: 1, rng_seed: 0 };
    let factory = ServiceFactory::new(tiny).expect("tiny dataset is valid");
    register_suite(&factory).into_iter().map(|b| b.id).collect()
}

/// The full suite in canonical order: store, handler, router (M1..M7).
pub fn register_suite(factory: &ServiceFactory) -> Vec<Microbenchmark> {
    let mut suite = store_benches(factory);
    suite.extend(handler_benches(factory));
    suite.extend(router_benches(factory));
    suite
}
