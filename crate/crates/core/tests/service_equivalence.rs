mod common;

use perflab::faults::{IssueConfig, IssueKind};
use perflab::service::dataset::seed_store;
use perflab::service::{basic_auth_value, BookingService};

use common::*;

#[test]
fn severity_zero_matches_baseline_for_every_issue() {
    let ds = small_dataset();
    let reqs = request_mix(42, 1000, &ds);
    for kind in IssueKind::INJECTED {
        assert_eq!(first_difference(&ds, IssueConfig::new(kind, 0), &reqs), None, "{kind}");
    }
}

#[test]
fn request_mix_covers_all_outcomes() {
    let ds = small_dataset();
    let svc = BookingService::from_dataset(&ds, IssueConfig::NONE).unwrap();
    let mut statuses: Vec<u16> = request_mix(42, 1000, &ds).iter().map(|r| svc.dispatch(r).status().as_u16()).collect();
    statuses.sort();
    statuses.dedup();
    for s in [200, 201, 400, 401, 404, 405, 409] {
        assert!(statuses.contains(&s), "status {s} never produced");
    }
}

#[test]
fn positive_severity_changes_only_request_ids_not_payloads() {
    let ds = small_dataset();
    let reqs = request_mix(3, 300, &ds);
    for kind in [IssueKind::BasicAuth, IssueKind::CleanPath] {
        assert_eq!(first_difference(&ds, IssueConfig::new(kind, 3), &reqs), None, "{kind}");
    }
    let diff = first_difference(&ds, IssueConfig::new(IssueKind::RequestId, 1), &reqs).unwrap();
    assert!(diff.contains("request ids differ"), "{diff}");
}

fn service_with(counters: &Counters, issue: IssueConfig) -> BookingService {
    BookingService::with_primitives(seed_store(&small_dataset()).unwrap(), issue, counters.primitives()).unwrap()
}

#[test]
fn work_counts_through_the_middleware() {
    let ds = small_dataset();
    let creds = ds.credentials(0);
    let bookings = || {
        http::Request::get("/bookings").header("authorization", basic_auth_value(&creds)).body(Vec::new()).unwrap()
    };
    for s in [0u32, 1, 7, 2048] {
        let c = Counters::new();
        let svc = service_with(&c, IssueConfig::new(IssueKind::BasicAuth, s));
        assert_eq!(svc.dispatch(&bookings()).status(), 200);
        assert_eq!(c.hashes(), 2 * s as usize, "s={s}");

        let c = Counters::new();
        let svc = service_with(&c, IssueConfig::new(IssueKind::CleanPath, s));
        svc.dispatch(&http::Request::get("/flights/F00001/seats").body(Vec::new()).unwrap());
        assert_eq!(c.passes(), 1 + s as usize, "s={s}");
        svc.dispatch(&http::Request::get("/destinations").body(Vec::new()).unwrap());
        assert_eq!(c.passes(), 1 + s as usize, "clean path only runs under /flights");

        let c = Counters::new();
        let svc = service_with(&c, IssueConfig::new(IssueKind::RequestId, s));
        let resp = svc.dispatch(&http::Request::get("/destinations").body(Vec::new()).unwrap());
        assert_eq!(c.random_bytes(), 512 * s as usize, "s={s}");
        let id = resp.headers()["x-request-id"].to_str().unwrap().to_string();
        if s == 0 {
            assert_eq!(id, "1");
        } else {
            assert_eq!(id.len(), 40);
        }
    }
}
