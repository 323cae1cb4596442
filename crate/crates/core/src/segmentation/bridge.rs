//! Client for an external segmentation server.
//!
//! Frames are a 4-byte big-endian length followed by a UTF-8 JSON body.
//! One request is in flight at a time; any transport failure drops the
//! connection and reports [`SegmentationError::ProviderUnavailable`], and
//! the next call reconnects.

use std::io::{self, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    Mask, PromptPoint, SegmentationError, SegmentationProvider, StereoMask, SyntheticFrame, SyntheticTarget, View,
};

pub const MAX_FRAME_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrompt {
    pub view: View,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSynthetic {
    pub width: u32,
    pub height: u32,
    pub targets: Vec<SyntheticTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub frame_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<WireSynthetic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_png_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_png_b64: Option<String>,
    pub prompts: Vec<WirePrompt>,
}

impl WireRequest {
    pub fn synthetic(frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Self {
        Self {
            frame_id: frame.frame_id,
            synthetic: Some(WireSynthetic { width: frame.width, height: frame.height, targets: frame.targets.clone() }),
            left_png_b64: None,
            right_png_b64: None,
            prompts: prompts.iter().map(|p| WirePrompt { view: p.view, u: p.pixel.u, v: p.pixel.v }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTarget {
    pub left_mask_rle: Vec<u32>,
    pub right_mask_rle: Vec<u32>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub frame_id: u64,
    #[serde(default)]
    pub targets: Vec<WireTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WireResponse {
    pub fn into_masks(self, width: u32, height: u32) -> Result<Vec<StereoMask>, SegmentationError> {
        self.targets
            .into_iter()
            .map(|t| {
                if !(0.0..=1.0).contains(&t.confidence) {
                    return Err(SegmentationError::Protocol(format!("confidence {} outside [0, 1]", t.confidence)));
                }
                Ok(StereoMask {
                    left: Mask::from_rle(width, height, &t.left_mask_rle, t.confidence)?,
                    right: Mask::from_rle(width, height, &t.right_mask_rle, t.confidence)?,
                    confidence: t.confidence,
                })
            })
            .collect()
    }
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&n| n as usize <= MAX_FRAME_BYTES)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeEndpoint {
    Tcp(String),
    /// Shell command speaking the protocol on stdin/stdout.
    Stdio(String),
}

impl std::str::FromStr for BridgeEndpoint {
    type Err = SegmentationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(cmd) = s.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err(SegmentationError::ProviderUnavailable("empty stdio command".into()));
            }
            return Ok(Self::Stdio(cmd.to_string()));
        }
        if s.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) {
            Ok(Self::Tcp(s.to_string()))
        } else {
            Err(SegmentationError::ProviderUnavailable(format!("bad bridge address {s:?}")))
        }
    }
}

enum Connection {
    Tcp(TcpStream),
    Stdio { child: Child, stdin: ChildStdin, rx: mpsc::Receiver<io::Result<Vec<u8>>> },
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Connection::Stdio { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub struct BridgeClient {
    endpoint: BridgeEndpoint,
    timeout: Duration,
    conn: Option<Connection>,
}

impl BridgeClient {
    pub fn new(endpoint: BridgeEndpoint, timeout: Duration) -> Self {
        Self { endpoint, timeout, conn: None }
    }

    pub fn endpoint(&self) -> &BridgeEndpoint {
        &self.endpoint
    }

    fn connect(&self) -> io::Result<Connection> {
        match &self.endpoint {
            BridgeEndpoint::Tcp(addr) => {
                let mut last = io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing");
                for sa in addr.to_socket_addrs()? {
                    match TcpStream::connect_timeout(&sa, self.timeout) {
                        Ok(s) => {
                            s.set_read_timeout(Some(self.timeout))?;
                            s.set_write_timeout(Some(self.timeout))?;
                            s.set_nodelay(true)?;
                            return Ok(Connection::Tcp(s));
                        }
                        Err(e) => last = e,
                    }
                }
                Err(last)
            }
            BridgeEndpoint::Stdio(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let (tx, rx) = mpsc::channel();
                std::thread::spawn(move || {
                    let mut r = BufReader::new(stdout);
                    loop {
                        let frame = read_frame(&mut r);
                        let stop = frame.is_err();
                        if tx.send(frame).is_err() || stop {
                            break;
                        }
                    }
                });
                Ok(Connection::Stdio { child, stdin, rx })
            }
        }
    }

    fn round_trip(&mut self, payload: &[u8]) -> io::Result<Vec<u8>> {
        if self.conn.is_none() {
            self.conn = Some(self.connect()?);
        }
        let timeout = self.timeout;
        match self.conn.as_mut().expect("connected above") {
            Connection::Tcp(s) => {
                write_frame(s, payload)?;
                read_frame(s)
            }
            Connection::Stdio { stdin, rx, .. } => {
                write_frame(stdin, payload)?;
                match rx.recv_timeout(timeout) {
                    Ok(frame) => frame,
                    Err(mpsc::RecvTimeoutError::Timeout) => {
                        Err(io::Error::new(io::ErrorKind::TimedOut, "bridge response timed out"))
                    }
                    Err(mpsc::RecvTimeoutError::Disconnected) => {
                        Err(io::Error::new(io::ErrorKind::BrokenPipe, "bridge process exited"))
                    }
                }
            }
        }
    }

    /// Sends one request and waits for the matching response.
    pub fn call(&mut self, request: &WireRequest) -> Result<WireResponse, SegmentationError> {
        let payload = serde_json::to_vec(request).map_err(|e| SegmentationError::Protocol(e.to_string()))?;
        let body = self.round_trip(&payload).map_err(|e| {
            self.conn = None;
            SegmentationError::ProviderUnavailable(e.to_string())
        })?;
        let resp: WireResponse = serde_json::from_slice(&body).map_err(|e| {
            self.conn = None;
            SegmentationError::Protocol(format!("malformed response: {e}"))
        })?;
        if resp.frame_id != request.frame_id {
            self.conn = None;
            return Err(SegmentationError::Protocol(format!(
                "response for frame {} while waiting for {}",
                resp.frame_id, request.frame_id
            )));
        }
        if let Some(msg) = resp.error {
            return Err(SegmentationError::Protocol(msg));
        }
        Ok(resp)
    }
}

impl SegmentationProvider for BridgeClient {
    fn segment(&mut self, frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Result<Vec<StereoMask>, SegmentationError> {
        let resp = self.call(&WireRequest::synthetic(frame, prompts))?;
        resp.into_masks(frame.width, frame.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_roundtrip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"a\":1}").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 7]);
        let back = read_frame(&mut buf.as_slice()).unwrap();
        assert_eq!(back, b"{\"a\":1}");
    }

    #[test]
    fn oversized_frame_rejected() {
        let header = ((MAX_FRAME_BYTES as u32) + 1).to_be_bytes();
        let err = read_frame(&mut header.as_slice()).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!("127.0.0.1:9000".parse::<BridgeEndpoint>().unwrap(), BridgeEndpoint::Tcp("127.0.0.1:9000".into()));
        assert_eq!("stdio:python3 srv.py".parse::<BridgeEndpoint>().unwrap(), BridgeEndpoint::Stdio("python3 srv.py".into()));
        assert!("nonsense".parse::<BridgeEndpoint>().is_err());
        assert!("stdio:".parse::<BridgeEndpoint>().is_err());
    }

    #[test]
    fn request_wire_shape() {
        let frame = SyntheticFrame { frame_id: 7, width: 4, height: 2, targets: vec![] };
        let p = PromptPoint { view: View::Right, pixel: crate::geometry::PixelPoint::new(1.5, 0.5), source_sensor_id: 2 };
        let v = serde_json::to_value(WireRequest::synthetic(&frame, &[p])).unwrap();
        assert_eq!(v["frame_id"], 7);
        assert_eq!(v["prompts"][0]["view"], "R");
        assert_eq!(v["synthetic"]["width"], 4);
        assert!(v.get("left_png_b64").is_none());
    }

    #[test]
    fn unreachable_is_unavailable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let mut c = BridgeClient::new(BridgeEndpoint::Tcp(addr), Duration::from_millis(200));
        let frame = SyntheticFrame { frame_id: 0, width: 4, height: 4, targets: vec![] };
        assert!(matches!(c.segment(&frame, &[]), Err(SegmentationError::ProviderUnavailable(_))));
    }
}
