//! Business logic over the key-value store. No HTTP concerns here apart
//! from the status class carried by [`ApiError`].

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::model::*;
use crate::store::{CasOutcome, KvStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self { status: 400, code: "bad_request", message: message.into() }
    }
    pub fn unauthorized() -> Self {
        Self { status: 401, code: "unauthorized", message: "valid credentials required".into() }
    }
    pub fn not_found(message: impl Into<String>) -> Self {
        Self { status: 404, code: "not_found", message: message.into() }
    }
    pub fn method_not_allowed() -> Self {
        Self { status: 405, code: "method_not_allowed", message: "method not allowed".into() }
    }
    pub fn conflict(message: impl Into<String>) -> Self {
        Self { status: 409, code: "conflict", message: message.into() }
    }
    pub fn internal(message: impl Into<String>) -> Self {
        Self { status: 500, code: "internal", message: message.into() }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code.to_string(), message: self.message.clone() }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::internal(format!("corrupt record: {e}")))
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("record serialization cannot fail")
}

/// Typed view over the store. Cheap to clone; clones share data and the
/// booking-id sequence.
#[derive(Debug, Clone)]
pub struct Catalog {
    store: KvStore,
    booking_seq: std::sync::Arc<AtomicU64>,
}

impl Catalog {
    pub fn new(store: KvStore) -> Self {
        Self { store, booking_seq: Default::default() }
    }

    pub fn store(&self) -> &KvStore {
        &self.store
    }

    pub fn destinations(&self) -> Result<Vec<Airport>, ApiError> {
        self.store
            .scan_prefix(AIRPORT_PREFIX.as_bytes())
            .iter()
            .map(|(_, v)| decode(v))
            .collect()
    }

    /// All flights, or those departing from `from` when given.
    pub fn flights(&self, from: Option<&str>) -> Result<Vec<Flight>, ApiError> {
        let mut out = Vec::new();
        for (_, v) in self.store.scan_prefix(FLIGHT_PREFIX.as_bytes()) {
            let f: Flight = decode(&v)?;
            if from.is_none_or(|code| f.from == code) {
                out.push(f);
            }
        }
        Ok(out)
    }

    pub fn flight(&self, id: &str) -> Result<Flight, ApiError> {
        let raw = self
            .store
            .get(flight_key(id).as_bytes())
            .ok_or_else(|| ApiError::not_found(format!("flight {id} not found")))?;
        decode(&raw)
    }

    pub fn seat_map(&self, flight_id: &str) -> Result<SeatMap, ApiError> {
        let raw = self
            .store
            .get(seats_key(flight_id).as_bytes())
            .ok_or_else(|| ApiError::not_found(format!("flight {flight_id} not found")))?;
        decode(&raw)
    }

    pub fn available_seats(&self, flight_id: &str) -> Result<Vec<SeatView>, ApiError> {
        Ok(self
            .seat_map(flight_id)?
            .available()
            .map(|s| SeatView { seat_id: s.id.clone() })
            .collect())
    }

    pub fn user(&self, username: &str) -> Result<Option<User>, ApiError> {
        self.store
            .get(user_key(username).as_bytes())
            .map(|raw| decode(&raw))
            .transpose()
    }

    pub fn users(&self) -> Result<Vec<User>, ApiError> {
        self.store
            .scan_prefix(USER_PREFIX.as_bytes())
            .iter()
            .map(|(_, v)| decode(v))
            .collect()
    }

    /// Books all requested seats or none. Concurrent bookings on the same
    /// flight are serialized by a compare-and-swap on the flight's seat map.
    pub fn create_booking(&self, username: &str, req: &BookingRequest) -> Result<Booking, ApiError> {
        if req.seat_ids.is_empty() {
            return Err(ApiError::bad_request("seatIds must be non-empty"));
        }
        let mut seen = HashSet::new();
        if !req.seat_ids.iter().all(|s| seen.insert(s.as_str())) {
            return Err(ApiError::bad_request("seatIds contains duplicates"));
        }
        if self.user(username)?.is_none() {
            return Err(ApiError::unauthorized());
        }
        let key = seats_key(&req.flight_id);
        loop {
            let raw = self
                .store
                .get(key.as_bytes())
                .ok_or_else(|| ApiError::not_found(format!("flight {} not found", req.flight_id)))?;
            let mut map: SeatMap = decode(&raw)?;
            for wanted in &req.seat_ids {
                let seat = map
                    .seats
                    .iter_mut()
                    .find(|s| &s.id == wanted)
                    .ok_or_else(|| ApiError::not_found(format!("seat {wanted} not found")))?;
                if seat.status == SeatStatus::Booked {
                    return Err(ApiError::conflict(format!("seat {wanted} already booked")));
                }
                seat.status = SeatStatus::Booked;
            }
            match self
                .store
                .compare_and_swap(key.as_bytes(), Some(&raw), encode(&map))
                .map_err(|e| ApiError::internal(e.to_string()))?
            {
                CasOutcome::Swapped => break,
                CasOutcome::Conflict(_) => continue,
            }
        }
        let seq = self.booking_seq.fetch_add(1, Ordering::SeqCst) + 1;
        let booking = Booking {
            id: format!("B{seq:010}"),
            username: username.to_string(),
            flight_id: req.flight_id.clone(),
            seat_ids: req.seat_ids.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or_default(),
        };
        self.store
            .put(booking_key(&booking.id), encode(&booking))
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(booking)
    }

    pub fn bookings_for(&self, username: &str) -> Result<Vec<Booking>, ApiError> {
        let mut out = Vec::new();
        for (_, v) in self.store.scan_prefix(BOOKING_PREFIX.as_bytes()) {
            let b: Booking = decode(&v)?;
            if b.username == username {
                out.push(b);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::dataset::{seed_store, DatasetConfig};

    fn catalog() -> (Catalog, DatasetConfig) {
        let cfg = DatasetConfig { airport_count: 10, flight_count: 40, seats_per_flight: 12, user_count: 2, rng_seed: 7 };
        (Catalog::new(seed_store(&cfg).unwrap()), cfg)
    }

    fn req(flight: &str, seats: &[&str]) -> BookingRequest {
        BookingRequest { flight_id: flight.into(), seat_ids: seats.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn flights_filter_matches_enumeration() {
        let (c, _) = catalog();
        let all = c.flights(None).unwrap();
        assert_eq!(all.len(), 40);
        for a in c.destinations().unwrap() {
            let expected = all.iter().filter(|f| f.from == a.code).count();
            assert_eq!(c.flights(Some(&a.code)).unwrap().len(), expected);
        }
    }

    #[test]
    fn airport_without_departures_lists_nothing() {
        let cfg = DatasetConfig { airport_count: 50, flight_count: 3, seats_per_flight: 1, user_count: 1, rng_seed: 3 };
        let c = Catalog::new(seed_store(&cfg).unwrap());
        let origins: HashSet<String> = c.flights(None).unwrap().into_iter().map(|f| f.from).collect();
        let idle = c.destinations().unwrap().into_iter().find(|a| !origins.contains(&a.code)).unwrap();
        assert!(c.flights(Some(&idle.code)).unwrap().is_empty());
    }

    #[test]
    fn booking_removes_seats_and_conflicts() {
        let (c, cfg) = catalog();
        let user = cfg.credentials(0).user;
        assert_eq!(c.available_seats("F00001").unwrap().len(), 12);
        let b = c.create_booking(&user, &req("F00001", &["1A", "1B"])).unwrap();
        assert_eq!(b.seat_ids, vec!["1A", "1B"]);
        assert_eq!(c.available_seats("F00001").unwrap().len(), 10);
        let err = c.create_booking(&user, &req("F00001", &["1C", "1A"])).unwrap_err();
        assert_eq!(err.status, 409);
        // atomic: 1C stayed available
        assert_eq!(c.available_seats("F00001").unwrap().len(), 10);
        assert_eq!(c.bookings_for(&user).unwrap().len(), 1);
    }

    #[test]
    fn booking_errors() {
        let (c, cfg) = catalog();
        let user = cfg.credentials(0).user;
        assert_eq!(c.create_booking(&user, &req("NOPE", &["1A"])).unwrap_err().status, 404);
        assert_eq!(c.create_booking(&user, &req("F00001", &["99Z"])).unwrap_err().status, 404);
        assert_eq!(c.create_booking(&user, &req("F00001", &[])).unwrap_err().status, 400);
        assert_eq!(c.create_booking(&user, &req("F00001", &["1A", "1A"])).unwrap_err().status, 400);
        assert_eq!(c.create_booking("ghost", &req("F00001", &["1A"])).unwrap_err().status, 401);
        assert_eq!(c.available_seats("F00001").unwrap().len(), 12);
    }

    #[test]
    fn concurrent_bookings_conserve_seats() {
        let (c, cfg) = catalog();
        let user = cfg.credentials(1).user;
        let seats: Vec<String> = (0..12).map(crate::service::model::seat_label).collect();
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let c = c.clone();
                let user = user.clone();
                let seats = seats.clone();
                std::thread::spawn(move || {
                    let mut ok = 0;
                    for i in 0..6 {
                        let a = &seats[(t + i) % 12];
                        let b = &seats[(t + i + 1) % 12];
                        if c.create_booking(&user, &req("F00002", &[a, b])).is_ok() {
                            ok += 1;
                        }
                    }
                    ok
                })
            })
            .collect();
        let successes: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
        let map = c.seat_map("F00002").unwrap();
        let booked = map.seats.iter().filter(|s| s.status == SeatStatus::Booked).count();
        assert_eq!(booked, successes * 2);
        assert_eq!(booked + map.available().count(), 12);
        assert_eq!(c.bookings_for(&user).unwrap().len(), successes);
    }
}
