//! Deterministic synthetic dataset for the booking service.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::*;
use crate::faults::Credentials;
use crate::store::KvStore;

const MAX_AIRPORTS: usize = 26 * 26 * 26;
const DEPARTURE_BASE: i64 = 1_767_225_600; // 2026-01-01T00:00:00Z
const DEPARTURE_SPREAD_S: i64 = 90 * 24 * 3600;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("{0} must be at least {1}")]
    TooSmall(&'static str, usize),
    #[error("airport count {0} exceeds the {MAX_AIRPORTS} available three-letter codes")]
    TooManyAirports(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetConfig {
    pub airport_count: usize,
    pub flight_count: usize,
    pub seats_per_flight: usize,
    pub user_count: usize,
    pub rng_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            airport_count: 100,
            flight_count: 1000,
            seats_per_flight: 180,
            user_count: 10,
            rng_seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.airport_count < 2 {
            return Err(DatasetError::TooSmall("airportCount", 2));
        }
        if self.airport_count > MAX_AIRPORTS {
            return Err(DatasetError::TooManyAirports(self.airport_count));
        }
        for (name, v) in [
            ("flightCount", self.flight_count),
            ("seatsPerFlight", self.seats_per_flight),
            ("userCount", self.user_count),
        ] {
            if v < 1 {
                return Err(DatasetError::TooSmall(name, 1));
            }
        }
        Ok(())
    }

    /// Credentials of the `i`-th seeded user (`0 <= i < user_count`).
    pub fn credentials(&self, i: usize) -> Credentials {
        Credentials::new(format!("user{}", i + 1), format!("password{}", i + 1))
    }
}

fn random_code(rng: &mut ChaCha8Rng) -> String {
    (0..3).map(|_| rng.random_range(b'A'..=b'Z') as char).collect()
}

/// Builds a fresh store holding airports, flights with all seats available,
/// and users. Identical configs produce byte-identical stores.
pub fn seed_store(config: &DatasetConfig) -> Result<KvStore, DatasetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let store = KvStore::new();

    let mut codes = BTreeSet::new();
    while codes.len() < config.airport_count {
        codes.insert(random_code(&mut rng));
    }
    let codes: Vec<String> = codes.into_iter().collect();
    for code in &codes {
        let airport = Airport {
            code: code.clone(),
            name: format!("{code} International"),
        };
        put_json(&store, airport_key(code), &airport);
    }

    let seats: Vec<Seat> = (0..config.seats_per_flight)
        .map(|i| Seat {
            id: seat_label(i),
            status: SeatStatus::Available,
        })
        .collect();
    for i in 0..config.flight_count {
        let from = rng.random_range(0..codes.len());
        let mut to = rng.random_range(0..codes.len() - 1);
        if to >= from {
            to += 1;
        }
        let flight = Flight {
            id: format!("F{:05}", i + 1),
            from: codes[from].clone(),
            to: codes[to].clone(),
            departure: DEPARTURE_BASE + rng.random_range(0..DEPARTURE_SPREAD_S),
        };
        put_json(
            &store,
            seats_key(&flight.id),
            &SeatMap {
                flight_id: flight.id.clone(),
                seats: seats.clone(),
            },
        );
        put_json(&store, flight_key(&flight.id), &flight);
    }

    for i in 0..config.user_count {
        let c = config.credentials(i);
        put_json(
            &store,
            user_key(&c.user),
            &User {
                username: c.user,
                password: c.pass,
            },
        );
    }
    Ok(store)
}

fn put_json<T: Serialize>(store: &KvStore, key: String, value: &T) {
    let bytes = serde_json::to_vec(value).expect("record serialization cannot fail");
    store.put(key, bytes).expect("dataset keys are non-empty");
}
