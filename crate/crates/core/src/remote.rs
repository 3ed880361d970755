//! Blocking JSON-over-HTTP client shared by the remote expansion provider and
//! the remote reader backend.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Counting gate bounding the number of concurrent requests.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightGuard<'a>(&'a InFlightLimit);

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InFlightGuard(self)
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct JsonClient {
    endpoint: String,
    timeout: Duration,
    agent: ureq::Agent,
    limit: InFlightLimit,
}

impl JsonClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        JsonClient {
            endpoint: endpoint.into(),
            timeout,
            agent,
            limit: InFlightLimit::new(max_in_flight),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// POSTs `body` and decodes the JSON response. Every failure (connect,
    /// timeout, non-2xx status, undecodable body) is reported as a string.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let _guard = self.limit.acquire();
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| format!("{}: {e}", self.endpoint))?;
        resp.body_mut()
            .read_json::<Resp>()
            .map_err(|e| format!("{}: malformed response: {e}", self.endpoint))
    }

    /// Connectivity probe: true if a TCP connection can be opened to the
    /// endpoint's host within the timeout.
    pub fn probe(&self) -> bool {
        let Ok(url) = self.endpoint.parse::<ureq::http::Uri>() else {
            return false;
        };
        let Some(host) = url.host() else {
            return false;
        };
        let port = url.port_u16().unwrap_or(if url.scheme_str() == Some("https") { 443 } else { 80 });
        use std::net::ToSocketAddrs;
        let Ok(mut addrs) = (host, port).to_socket_addrs() else {
            return false;
        };
        addrs.any(|a| std::net::TcpStream::connect_timeout(&a, self.timeout).is_ok())
    }
}
