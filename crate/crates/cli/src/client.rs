//! Blocking HTTP client for the gateway. Downloads are streamed in 64 KB
//! chunks with time-to-first-byte captured on the way, and can be pulled
//! through a client-side rate cap.

use std::io::{Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use objectlens_core::crypto::encode_b64;
use reqwest::blocking::{Client, Response};
use reqwest::header::{HeaderMap, HeaderName, HeaderValue};

use crate::ratelimit::{TokenBucket, CHUNK_BYTES};
use crate::CliError;

pub const AUTH_HEADER: &str = "x-auth-token";
pub const REENC_HEADER: &str = "x-reenc-token";
pub const TRAPDOOR_HEADER: &str = "x-search-trapdoor";

pub struct Gateway {
    base: String,
    token: String,
    http: Client,
}

/// Transfer measurements for one GET.
pub struct GetStats {
    pub ttfb: Duration,
    pub total: Duration,
    pub bytes: u64,
    pub transformed: bool,
    pub policy_id: Option<String>,
}

impl Gateway {
    pub fn new(base: impl Into<String>, token: impl Into<String>) -> Result<Self, CliError> {
        let mut base = base.into();
        while base.ends_with('/') {
            base.pop();
        }
        let http = Client::builder()
            .timeout(Duration::from_secs(600))
            .build()?;
        Ok(Gateway { base, token: token.into(), http })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base, path.trim_start_matches('/'))
    }

    fn auth(&self, req: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        req.header(AUTH_HEADER, &self.token)
    }

    /// Turns a non-2xx response into an error carrying status and body.
    fn check(resp: Response) -> Result<Response, CliError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let detail = resp
            .text()
            .unwrap_or_default()
            .trim()
            .to_string();
        Err(CliError::Http { status: status.as_u16(), detail })
    }

    pub fn health(&self) -> Result<(), CliError> {
        Self::check(self.http.get(self.url("healthz")).send()?)?;
        Ok(())
    }

    // Objects

    pub fn put_object_bytes(&self, opath: &str, body: Vec<u8>) -> Result<u64, CliError> {
        let len = body.len() as u64;
        let req = self.auth(self.http.put(self.url(&format!("v1/{opath}")))).body(body);
        Self::check(req.send()?)?;
        Ok(len)
    }

    pub fn put_object_file(&self, opath: &str, file: &Path) -> Result<u64, CliError> {
        let f = std::fs::File::open(file)?;
        let len = f.metadata()?.len();
        let req = self
            .auth(self.http.put(self.url(&format!("v1/{opath}"))))
            .body(reqwest::blocking::Body::sized(f, len));
        Self::check(req.send()?)?;
        Ok(len)
    }

    /// Streams `v1/<opath>` into `sink`. Extra request headers are sent
    /// as-is; artifact helpers below encode them. With a rate cap the
    /// body is pulled through a token bucket in 64 KB chunks.
    pub fn get_object(
        &self,
        opath: &str,
        headers: &[(String, String)],
        sink: &mut dyn Write,
        mut cap: Option<TokenBucket>,
    ) -> Result<GetStats, CliError> {
        let mut map = HeaderMap::new();
        for (k, v) in headers {
            let name = HeaderName::from_bytes(k.as_bytes())
                .map_err(|e| CliError::invalid(format!("bad header name {k}: {e}")))?;
            let value = HeaderValue::from_str(v)
                .map_err(|e| CliError::invalid(format!("bad header value for {k}: {e}")))?;
            map.insert(name, value);
        }

        let start = Instant::now();
        let resp = self
            .auth(self.http.get(self.url(&format!("v1/{opath}"))))
            .headers(map)
            .send()?;
        let mut resp = Self::check(resp)?;

        let transformed = header_text(&resp, "x-view-transformed").as_deref() == Some("true");
        let policy_id = header_text(&resp, "x-policy-id");

        let mut buf = vec![0u8; CHUNK_BYTES];
        let mut bytes = 0u64;
        let mut ttfb = None;
        loop {
            let n = resp.read(&mut buf)?;
            if n == 0 {
                break;
            }
            if ttfb.is_none() {
                ttfb = Some(start.elapsed());
            }
            if let Some(bucket) = cap.as_mut() {
                bucket.consume(n);
            }
            sink.write_all(&buf[..n])?;
            bytes += n as u64;
        }
        sink.flush()?;
        let total = start.elapsed();
        Ok(GetStats {
            ttfb: ttfb.unwrap_or(total),
            total,
            bytes,
            transformed,
            policy_id,
        })
    }

    // Policies

    pub fn put_policy(&self, text: &str) -> Result<serde_json::Value, CliError> {
        let req = self
            .auth(self.http.put(self.url("v1/policies")))
            .header("content-type", "application/json")
            .body(text.to_string());
        Ok(Self::check(req.send()?)?.json()?)
    }

    pub fn get_policy(&self, id: &str) -> Result<String, CliError> {
        let resp = Self::check(self.auth(self.http.get(self.url(&format!("v1/policies/{id}")))).send()?)?;
        Ok(resp.text()?)
    }

    pub fn delete_policy(&self, id: &str) -> Result<(), CliError> {
        Self::check(self.auth(self.http.delete(self.url(&format!("v1/policies/{id}")))).send()?)?;
        Ok(())
    }

    pub fn list_policies(&self) -> Result<Vec<String>, CliError> {
        let resp = Self::check(self.auth(self.http.get(self.url("v1/policies"))).send()?)?;
        Ok(resp.json()?)
    }

    // Metadata

    pub fn put_meta(&self, key: &str, value: Vec<u8>) -> Result<(), CliError> {
        Self::check(self.auth(self.http.put(self.url(&format!("v1/meta/{key}")))).body(value).send()?)?;
        Ok(())
    }

    pub fn get_meta(&self, key: &str) -> Result<Vec<u8>, CliError> {
        let resp = Self::check(self.auth(self.http.get(self.url(&format!("v1/meta/{key}")))).send()?)?;
        Ok(resp.bytes()?.to_vec())
    }

    pub fn delete_meta(&self, key: &str) -> Result<(), CliError> {
        Self::check(self.auth(self.http.delete(self.url(&format!("v1/meta/{key}")))).send()?)?;
        Ok(())
    }
}

fn header_text(resp: &Response, name: &str) -> Option<String> {
    resp.headers()
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

/// Header pair carrying a re-encryption token.
pub fn reenc_header(token_bytes: &[u8]) -> (String, String) {
    (REENC_HEADER.to_string(), encode_b64(token_bytes))
}

/// Header pair carrying a search trapdoor.
pub fn trapdoor_header(trapdoor_bytes: &[u8]) -> (String, String) {
    (TRAPDOOR_HEADER.to_string(), encode_b64(trapdoor_bytes))
}
