//! Minimal HTTP/1.1 POST client that reports failures in the error taxonomy.
//!
//! General-purpose clients retry, transparently decompress, or fold distinct
//! wire defects into one error. Measuring availability needs every failure
//! surfaced as exactly one [`TransportErrorKind`], so requests are written and
//! responses parsed by hand.

use std::io::{self, Read};
use std::time::{Duration, Instant};

use flate2::read::GzDecoder;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::time::timeout_at;

use crate::model::{RawResponse, TransportErrorKind as K};

const MAX_HEADERS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
    pub path: String,
}

impl Endpoint {
    /// Parses `http://host:port/path`. The scheme is optional; the port defaults to 80.
    pub fn parse(url: &str) -> Result<Endpoint, String> {
        let rest = url.strip_prefix("http://").unwrap_or(url);
        if rest.contains("://") {
            return Err(format!("unsupported scheme in {url:?}"));
        }
        let (authority, path) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, "/"),
        };
        let (host, port) = match authority.rsplit_once(':') {
            Some((h, p)) => (h, p.parse().map_err(|_| format!("bad port in {url:?}"))?),
            None => (authority, 80),
        };
        if host.is_empty() {
            return Err(format!("missing host in {url:?}"));
        }
        Ok(Endpoint {
            host: host.to_string(),
            port,
            path: path.to_string(),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}:{}{}", self.host, self.port, self.path)
    }
}

/// The outcome of one POST.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpOutcome {
    pub response: RawResponse,
    pub status: Option<u16>,
    pub headers: Vec<(String, String)>,
    pub elapsed: Duration,
}

impl HttpOutcome {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn io_kind(e: &io::Error, while_reading_body: bool) -> K {
    match e.kind() {
        io::ErrorKind::ConnectionRefused => K::ConnectionRefused,
        io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => K::ConnectionResetByPeer,
        io::ErrorKind::UnexpectedEof => K::UnexpectedEof,
        io::ErrorKind::TimedOut if while_reading_body => K::TimeoutReadingBody,
        io::ErrorKind::TimedOut => K::TimeoutAwaitingHeaders,
        _ => K::Eof,
    }
}

struct Head {
    status: u16,
    headers: Vec<(String, String)>,
    consumed: usize,
}

fn parse_head(buf: &[u8]) -> Result<Option<Head>, K> {
    let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
    let mut resp = httparse::Response::new(&mut headers);
    match resp.parse(buf) {
        Ok(httparse::Status::Complete(consumed)) => Ok(Some(Head {
            status: resp.code.unwrap_or(0),
            headers: resp
                .headers
                .iter()
                .map(|h| {
                    (
                        h.name.to_ascii_lowercase(),
                        String::from_utf8_lossy(h.value).trim().to_string(),
                    )
                })
                .collect(),
            consumed,
        })),
        Ok(httparse::Status::Partial) => Ok(None),
        Err(_) => Err(K::MalformedHttpResponse),
    }
}

enum Framing {
    Length(usize),
    Chunked,
    UntilClose,
}

struct Conn {
    stream: TcpStream,
    buf: Vec<u8>,
    deadline: tokio::time::Instant,
}

impl Conn {
    /// Reads more bytes into the buffer. `Ok(false)` on a clean close.
    async fn fill(&mut self, in_body: bool) -> Result<bool, K> {
        let mut chunk = [0u8; 8192];
        match timeout_at(self.deadline, self.stream.read(&mut chunk)).await {
            Err(_) if in_body => Err(K::TimeoutReadingBody),
            Err(_) => Err(K::TimeoutAwaitingHeaders),
            Ok(Err(e)) => Err(io_kind(&e, in_body)),
            Ok(Ok(0)) => Ok(false),
            Ok(Ok(n)) => {
                self.buf.extend_from_slice(&chunk[..n]);
                Ok(true)
            }
        }
    }

    async fn need(&mut self, len: usize) -> Result<(), K> {
        while self.buf.len() < len {
            if !self.fill(true).await? {
                return Err(K::UnexpectedEof);
            }
        }
        Ok(())
    }

    async fn line(&mut self, from: usize) -> Result<usize, K> {
        loop {
            if let Some(i) = self.buf[from..].windows(2).position(|w| w == b"\r\n") {
                return Ok(from + i);
            }
            if !self.fill(true).await? {
                return Err(K::UnexpectedEof);
            }
        }
    }

    async fn read_chunked(&mut self, mut at: usize) -> Result<Vec<u8>, K> {
        let mut body = Vec::new();
        loop {
            let end = self.line(at).await?;
            let size_field =
                std::str::from_utf8(&self.buf[at..end]).map_err(|_| K::InvalidChunkLength)?;
            let size_field = size_field.split(';').next().unwrap_or("").trim();
            let size = usize::from_str_radix(size_field, 16).map_err(|_| K::InvalidChunkLength)?;
            at = end + 2;
            if size == 0 {
                return Ok(body);
            }
            self.need(at + size + 2).await?;
            body.extend_from_slice(&self.buf[at..at + size]);
            if &self.buf[at + size..at + size + 2] != b"\r\n" {
                return Err(K::InvalidChunkLength);
            }
            at += size + 2;
        }
    }
}

fn gunzip(body: &[u8]) -> Result<Vec<u8>, K> {
    let mut out = Vec::new();
    GzDecoder::new(body).read_to_end(&mut out).map_err(|e| {
        if e.to_string().contains("checksum") {
            K::InvalidChecksum
        } else {
            K::MalformedHttpResponse
        }
    })?;
    Ok(out)
}

/// Sends `body` as a JSON POST and waits at most `timeout` for the whole response.
pub async fn post_json(endpoint: &Endpoint, body: &[u8], timeout: Duration) -> HttpOutcome {
    let started = Instant::now();
    let deadline = tokio::time::Instant::now() + timeout;
    let mut status = None;
    let mut headers = Vec::new();
    let response = match exchange(endpoint, body, deadline, &mut status, &mut headers).await {
        Ok(body) => RawResponse::Body(body),
        Err(kind) => RawResponse::Transport(kind),
    };
    let elapsed = started.elapsed().min(timeout);
    HttpOutcome {
        response,
        status,
        headers,
        elapsed,
    }
}

async fn exchange(
    endpoint: &Endpoint,
    body: &[u8],
    deadline: tokio::time::Instant,
    status: &mut Option<u16>,
    headers_out: &mut Vec<(String, String)>,
) -> Result<Vec<u8>, K> {
    let addr = (endpoint.host.as_str(), endpoint.port);
    let stream = match timeout_at(deadline, TcpStream::connect(addr)).await {
        Err(_) => return Err(K::TimeoutAwaitingHeaders),
        Ok(Err(e)) => return Err(io_kind(&e, false)),
        Ok(Ok(s)) => s,
    };
    let _ = stream.set_nodelay(true);
    let mut conn = Conn {
        stream,
        buf: Vec::new(),
        deadline,
    };
    let mut request = format!(
        "POST {} HTTP/1.1\r\nHost: {}:{}\r\nContent-Type: application/json\r\nAccept-Encoding: gzip\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        endpoint.path,
        endpoint.host,
        endpoint.port,
        body.len()
    )
    .into_bytes();
    request.extend_from_slice(body);
    match timeout_at(deadline, conn.stream.write_all(&request)).await {
        Err(_) => return Err(K::TimeoutAwaitingHeaders),
        Ok(Err(e)) => return Err(io_kind(&e, false)),
        Ok(Ok(())) => {}
    }

    let head = loop {
        if let Some(head) = parse_head(&conn.buf)? {
            break head;
        }
        if !conn.fill(false).await? {
            return Err(if conn.buf.is_empty() {
                K::Eof
            } else {
                K::UnexpectedEof
            });
        }
    };
    *status = Some(head.status);
    *headers_out = head.headers.clone();
    let header = |name: &str| {
        head.headers
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    };
    let closing = header("connection").is_some_and(|v| v.eq_ignore_ascii_case("close"));
    if head.status == 408 && closing {
        return Err(K::ServerClosedIdleConnection);
    }

    let framing = if header("transfer-encoding").is_some_and(|v| v.eq_ignore_ascii_case("chunked"))
    {
        Framing::Chunked
    } else if let Some(len) = header("content-length") {
        Framing::Length(len.parse().map_err(|_| K::MalformedHttpResponse)?)
    } else {
        Framing::UntilClose
    };
    let at = head.consumed;
    let raw = match framing {
        Framing::Length(len) => {
            conn.need(at + len).await?;
            conn.buf[at..at + len].to_vec()
        }
        Framing::Chunked => conn.read_chunked(at).await?,
        Framing::UntilClose => {
            while conn.fill(true).await? {}
            conn.buf[at..].to_vec()
        }
    };
    match header("content-encoding") {
        Some(enc) if enc.eq_ignore_ascii_case("gzip") => gunzip(&raw),
        _ => Ok(raw),
    }
}
