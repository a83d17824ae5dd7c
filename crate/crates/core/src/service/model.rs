use serde::{Deserialize, Serialize};

pub const AIRPORT_PREFIX: &str = "airport/";
pub const FLIGHT_PREFIX: &str = "flight/";
pub const SEATS_PREFIX: &str = "seats/";
pub const USER_PREFIX: &str = "user/";
pub const BOOKING_PREFIX: &str = "booking/";

pub fn airport_key(code: &str) -> String {
    format!("{AIRPORT_PREFIX}{code}")
}

pub fn flight_key(id: &str) -> String {
    format!("{FLIGHT_PREFIX}{id}")
}

pub fn seats_key(flight_id: &str) -> String {
    format!("{SEATS_PREFIX}{flight_id}")
}

pub fn user_key(name: &str) -> String {
    format!("{USER_PREFIX}{name}")
}

pub fn booking_key(id: &str) -> String {
    format!("{BOOKING_PREFIX}{id}")
}

/// `[A-Z]{3}`
pub fn is_airport_code(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Airport {
    pub code: String,
    pub name: String,
}

/// Flight record without its seat map; the seat map lives under its own key
/// so bookings can swap it atomically without touching the summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flight {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Unix seconds.
    pub departure: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeatStatus {
    Available,
    Booked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seat {
    pub id: String,
    pub status: SeatStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeatMap {
    pub flight_id: String,
    pub seats: Vec<Seat>,
}

impl SeatMap {
    pub fn available(&self) -> impl Iterator<Item = &Seat> {
        self.seats.iter().filter(|s| s.status == SeatStatus::Available)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Booking {
    pub id: String,
    pub username: String,
    pub flight_id: String,
    pub seat_ids: Vec<String>,
    /// Unix seconds.
    pub created_at: i64,
}

/// Seat label for the `index`-th seat of a flight: six seats per row,
/// rows numbered from 1, letters `A`..`F`.
pub fn seat_label(index: usize) -> String {
    let row = index / 6 + 1;
    let letter = (b'A' + (index % 6) as u8) as char;
    format!("{row}{letter}")
}

// Wire payloads.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeatView {
    #[serde(rename = "seatId")]
    pub seat_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BookingRequest {
    pub flight_id: String,
    pub seat_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BookingView {
    pub booking_id: String,
    pub flight_id: String,
    pub seat_ids: Vec<String>,
}

impl From<&Booking> for BookingView {
    fn from(b: &Booking) -> Self {
        Self {
            booking_id: b.id.clone(),
            flight_id: b.flight_id.clone(),
            seat_ids: b.seat_ids.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
