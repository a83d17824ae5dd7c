//! Ways a virtual user can reach a service version.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http_body_util::{BodyExt, Full};
use hyper::client::conn::http1::SendRequest;
use hyper_util::rt::TokioIo;
use tokio::net::TcpStream;

use crate::service::{BookingService, HttpRequest};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transport: {0}")]
pub struct TransportError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// One virtual user's connection to a service.
pub trait Client: Send + 'static {
    fn send(&mut self, req: HttpRequest) -> impl Future<Output = Result<ClientResponse, TransportError>> + Send;
}

/// Creates per-VU clients for one service version.
pub trait Connector: Send + Sync + 'static {
    type Client: Client;
    fn client(&self) -> Self::Client;
}

// ---------------------------------------------------------------------------

/// HTTP/1.1 over a single persistent TCP connection, re-established lazily
/// after a failure. No retries.
#[derive(Debug, Clone, Copy)]
pub struct HttpConnector {
    pub addr: SocketAddr,
    pub timeout: Duration,
}

impl HttpConnector {
    pub fn new(addr: SocketAddr) -> Self {
        Self { addr, timeout: Duration::from_secs(10) }
    }
}

impl Connector for HttpConnector {
    type Client = HttpClient;
    fn client(&self) -> HttpClient {
        HttpClient { addr: self.addr, timeout: self.timeout, sender: None }
    }
}

pub struct HttpClient {
    addr: SocketAddr,
    timeout: Duration,
    sender: Option<SendRequest<Full<Bytes>>>,
}

impl HttpClient {
    async fn connect(&mut self) -> Result<&mut SendRequest<Full<Bytes>>, TransportError> {
        if self.sender.as_ref().is_none_or(|s| s.is_closed()) {
            let stream = TcpStream::connect(self.addr).await.map_err(|e| TransportError(e.to_string()))?;
            let _ = stream.set_nodelay(true);
            let (sender, conn) = hyper::client::conn::http1::handshake(TokioIo::new(stream))
                .await
                .map_err(|e| TransportError(e.to_string()))?;
            tokio::spawn(async move {
                let _ = conn.await;
            });
            self.sender = Some(sender);
        }
        Ok(self.sender.as_mut().expect("just connected"))
    }

    async fn roundtrip(&mut self, req: HttpRequest) -> Result<ClientResponse, TransportError> {
        let host = self.addr.to_string();
        let sender = self.connect().await?;
        sender.ready().await.map_err(|e| TransportError(e.to_string()))?;
        let (mut parts, body) = req.into_parts();
        parts.headers.insert(http::header::HOST, host.parse().expect("socket address is a valid host"));
        let req = hyper::Request::from_parts(parts, Full::new(Bytes::from(body)));
        let resp = sender.send_request(req).await.map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.into_body().collect().await.map_err(|e| TransportError(e.to_string()))?;
        Ok(ClientResponse { status, body: body.to_bytes().to_vec() })
    }
}

impl Client for HttpClient {
    async fn send(&mut self, req: HttpRequest) -> Result<ClientResponse, TransportError> {
        let r = match tokio::time::timeout(self.timeout, self.roundtrip(req)).await {
            Ok(r) => r,
            Err(_) => Err(TransportError("timed out".into())),
        };
        if r.is_err() {
            self.sender = None;
        }
        r
    }
}

// ---------------------------------------------------------------------------

/// Calls [`BookingService::dispatch`] directly.
#[derive(Clone)]
pub struct InProcessConnector(pub Arc<BookingService>);

pub struct InProcessClient(Arc<BookingService>);

impl Connector for InProcessConnector {
    type Client = InProcessClient;
    fn client(&self) -> InProcessClient {
        InProcessClient(self.0.clone())
    }
}

impl Client for InProcessClient {
    async fn send(&mut self, req: HttpRequest) -> Result<ClientResponse, TransportError> {
        let resp = self.0.dispatch(&req);
        tokio::task::yield_now().await;
        Ok(ClientResponse { status: resp.status().as_u16(), body: resp.into_body() })
    }
}

// ---------------------------------------------------------------------------

/// Canned responses shaped like the real API, for counting workloads
/// without a service. Every flight always has free seats.
#[derive(Debug, Clone, Copy, Default)]
pub struct DryRunConnector;

pub struct DryRunClient;

impl Connector for DryRunConnector {
    type Client = DryRunClient;
    fn client(&self) -> DryRunClient {
        DryRunClient
    }
}

const DRY_AIRPORTS: &str = r#"[{"code":"AAA","name":"Airport AAA"},{"code":"BBB","name":"Airport BBB"},{"code":"CCC","name":"Airport CCC"}]"#;
const DRY_FLIGHTS: &str = r#"[{"id":"F00001","from":"AAA","to":"BBB","departure":0},{"id":"F00002","from":"AAA","to":"CCC","departure":0}]"#;
const DRY_SEATS: &str = r#"[{"seatId":"1A"},{"seatId":"1B"},{"seatId":"1C"},{"seatId":"1D"}]"#;
const DRY_BOOKING: &str = r#"{"bookingId":"B0000000001","flightId":"F00001","seatIds":["1A","1B"]}"#;

impl Client for DryRunClient {
    async fn send(&mut self, req: HttpRequest) -> Result<ClientResponse, TransportError> {
        let path = req.uri().path();
        let (status, body) = match (req.method().as_str(), path) {
            ("GET", "/destinations") => (200, DRY_AIRPORTS),
            ("GET", "/flights") => (200, DRY_FLIGHTS),
            ("GET", p) if p.starts_with("/flights/") && p.ends_with("/seats") => (200, DRY_SEATS),
            ("POST", "/bookings") => (201, DRY_BOOKING),
            _ => (404, r#"{"code":"not_found","message":"dry run"}"#),
        };
        tokio::task::yield_now().await;
        Ok(ClientResponse { status, body: body.as_bytes().to_vec() })
    }
}
