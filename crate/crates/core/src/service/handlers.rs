//! Route handlers: request parameters in, JSON response out. These run
//! behind the middleware chain in [`super::BookingService::dispatch`] but can
//! also be called directly, which is what the handler microbenchmarks do.

use http::header::CONTENT_TYPE;
use http::StatusCode;
use serde::Serialize;

use super::catalog::{ApiError, Catalog};
use super::model::{is_airport_code, BookingRequest, BookingView};

pub type HttpResponse = http::Response<Vec<u8>>;

pub fn json_response<T: Serialize>(status: u16, payload: &T) -> HttpResponse {
    let body = serde_json::to_vec(payload).expect("payload serialization cannot fail");
    http::Response::builder()
        .status(StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR))
        .header(CONTENT_TYPE, "application/json")
        .body(body)
        .expect("static response parts are valid")
}

pub fn error_response(err: &ApiError) -> HttpResponse {
    let mut resp = json_response(err.status, &err.body());
    if err.status == 401 {
        resp.headers_mut().insert(
            http::header::WWW_AUTHENTICATE,
            http::HeaderValue::from_static("Basic realm=\"bookings\""),
        );
    }
    resp
}

fn respond<T: Serialize>(status: u16, result: Result<T, ApiError>) -> HttpResponse {
    match result {
        Ok(v) => json_response(status, &v),
        Err(e) => error_response(&e),
    }
}

pub fn destinations(catalog: &Catalog) -> HttpResponse {
    respond(200, catalog.destinations())
}

pub fn flights(catalog: &Catalog, from: Option<&str>) -> HttpResponse {
    if let Some(code) = from {
        if !is_airport_code(code) {
            return error_response(&ApiError::bad_request(format!("malformed airport code `{code}`")));
        }
    }
    respond(200, catalog.flights(from))
}

pub fn flight(catalog: &Catalog, id: &str) -> HttpResponse {
    respond(200, catalog.flight(id))
}

pub fn seats(catalog: &Catalog, flight_id: &str) -> HttpResponse {
    respond(200, catalog.available_seats(flight_id))
}

pub fn create_booking(catalog: &Catalog, username: &str, body: &[u8]) -> HttpResponse {
    let req: BookingRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => return error_response(&ApiError::bad_request(format!("invalid booking body: {e}"))),
    };
    respond(201, catalog.create_booking(username, &req).map(|b| BookingView::from(&b)))
}

pub fn bookings(catalog: &Catalog, username: &str) -> HttpResponse {
    respond(
        200,
        catalog
            .bookings_for(username)
            .map(|bs| bs.iter().map(BookingView::from).collect::<Vec<_>>()),
    )
}
