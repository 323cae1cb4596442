//! Wire-protocol client against an in-process mock server.

use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use aquafuse::geometry::PixelPoint;
use aquafuse::pipeline::Mode;
use aquafuse::segmentation::{
    read_frame, write_frame, BridgeClient, BridgeEndpoint, Mask, OracleSegmenter, PromptPoint, SegmentationError,
    SegmentationProvider, StereoMask, SyntheticFrame, View, WireRequest, WireResponse, WireTarget,
};
use aquafuse::simulator::{oracle_for, run_with, shipped_scene, RunOptions};

const SEED: u64 = 5;

fn wire_targets(masks: &[StereoMask]) -> Vec<WireTarget> {
    masks
        .iter()
        .map(|m| WireTarget { left_mask_rle: m.left.to_rle(), right_mask_rle: m.right.to_rle(), confidence: m.confidence })
        .collect()
}

fn decode(req: &WireRequest) -> (SyntheticFrame, Vec<PromptPoint>) {
    let s = req.synthetic.as_ref().expect("synthetic payload");
    let frame = SyntheticFrame { frame_id: req.frame_id, width: s.width, height: s.height, targets: s.targets.clone() };
    let prompts = req
        .prompts
        .iter()
        .map(|p| PromptPoint { view: p.view, pixel: PixelPoint::new(p.u, p.v), source_sensor_id: 0 })
        .collect();
    (frame, prompts)
}

/// Serves every connection on a background thread with `handler`.
fn serve<F>(handler: F) -> String
where
    F: Fn(WireRequest) -> Option<WireResponse> + Send + Sync + Clone + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let handler = handler.clone();
            std::thread::spawn(move || handle(stream, handler));
        }
    });
    addr
}

fn handle<F: Fn(WireRequest) -> Option<WireResponse>>(stream: TcpStream, handler: F) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = BufWriter::new(stream);
    while let Ok(body) = read_frame(&mut reader) {
        let req: WireRequest = serde_json::from_slice(&body).unwrap();
        // `None` drops the connection without answering.
        let Some(resp) = handler(req) else { return };
        if write_frame(&mut writer, &serde_json::to_vec(&resp).unwrap()).is_err() {
            return;
        }
    }
}

/// The oracle with its masks passed through the run-length encoding, i.e.
/// exactly what a faithful server would send back.
struct RleOracle(OracleSegmenter);

impl SegmentationProvider for RleOracle {
    fn segment(&mut self, frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Result<Vec<StereoMask>, SegmentationError> {
        let masks = self.0.segment(frame, prompts)?;
        Ok(masks
            .into_iter()
            .map(|m| StereoMask {
                left: Mask::from_rle(frame.width, frame.height, &m.left.to_rle(), m.confidence).unwrap(),
                right: Mask::from_rle(frame.width, frame.height, &m.right.to_rle(), m.confidence).unwrap(),
                confidence: m.confidence,
            })
            .collect())
    }
}

fn client(addr: &str) -> BridgeClient {
    BridgeClient::new(BridgeEndpoint::Tcp(addr.to_string()), Duration::from_secs(10))
}

#[test]
fn bridge_run_matches_local_oracle() {
    let scene = shipped_scene("scene2").unwrap();
    let server_scene = scene.clone();
    let addr = serve(move |req| {
        let (frame, prompts) = decode(&req);
        let masks = oracle_for(&server_scene, SEED).segment(&frame, &prompts).unwrap();
        Some(WireResponse { frame_id: req.frame_id, targets: wire_targets(&masks), error: None })
    });
    let options = RunOptions { mode: Mode::Ekf, seed: SEED, compute_iou: false };
    let remote = run_with(&scene, &options, &mut client(&addr)).unwrap();
    let local = run_with(&scene, &options, &mut RleOracle(oracle_for(&scene, SEED))).unwrap();
    assert_eq!(remote.provider_errors, 0);
    assert!(!remote.rows.is_empty());
    assert_eq!(remote, local);
}

#[test]
fn server_errors_are_counted_and_skipped() {
    let scene = shipped_scene("scene1").unwrap();
    let server_scene = scene.clone();
    let addr = serve(move |req| {
        if req.frame_id % 4 == 0 {
            return Some(WireResponse { frame_id: req.frame_id, targets: vec![], error: Some("model busy".into()) });
        }
        let (frame, prompts) = decode(&req);
        let masks = oracle_for(&server_scene, SEED).segment(&frame, &prompts).unwrap();
        Some(WireResponse { frame_id: req.frame_id, targets: wire_targets(&masks), error: None })
    });
    let options = RunOptions { mode: Mode::Ranging, seed: SEED, compute_iou: false };
    let trace = run_with(&scene, &options, &mut client(&addr)).unwrap();
    assert_eq!(trace.ticks, scene.ticks());
    assert_eq!(trace.provider_errors, trace.ticks.div_ceil(4));
    // Ticks without masks still carry the track forward, flagged.
    let on_error: Vec<_> = trace.rows.iter().filter(|r| r.tick % 4 == 0 && r.tick > 0).collect();
    assert!(!on_error.is_empty());
    assert!(on_error.iter().all(|r| r.flags.extrapolated_segmentation));
}

fn empty_frame(frame_id: u64) -> SyntheticFrame {
    SyntheticFrame { frame_id, width: 64, height: 48, targets: vec![] }
}

#[test]
fn mismatched_frame_id_is_a_protocol_error() {
    let addr = serve(|req| Some(WireResponse { frame_id: req.frame_id + 1, targets: vec![], error: None }));
    let err = client(&addr).segment(&empty_frame(3), &[]).unwrap_err();
    assert!(matches!(err, SegmentationError::Protocol(_)), "{err:?}");
}

#[test]
fn invalid_confidence_is_rejected() {
    let addr = serve(|req| {
        let blank = Mask::empty(64, 48).to_rle();
        let target = WireTarget { left_mask_rle: blank.clone(), right_mask_rle: blank, confidence: 1.5 };
        Some(WireResponse { frame_id: req.frame_id, targets: vec![target], error: None })
    });
    let err = client(&addr).segment(&empty_frame(1), &[]).unwrap_err();
    assert!(matches!(err, SegmentationError::Protocol(_)), "{err:?}");
}

#[test]
fn dropped_connection_reconnects_on_next_call() {
    let addr = serve(|req| (req.frame_id != 0).then(|| WireResponse { frame_id: req.frame_id, targets: vec![], error: None }));
    let mut c = client(&addr);
    let err = c.segment(&empty_frame(0), &[]).unwrap_err();
    assert!(matches!(err, SegmentationError::ProviderUnavailable(_)), "{err:?}");
    assert!(c.segment(&empty_frame(1), &[]).unwrap().is_empty());
}

#[test]
fn stdio_transport_round_trips() {
    // `cat` echoes the request; it parses as a response with no targets.
    let mut c = BridgeClient::new("stdio:cat".parse().unwrap(), Duration::from_secs(10));
    let prompt = PromptPoint { view: View::Left, pixel: PixelPoint::new(3.0, 4.0), source_sensor_id: 1 };
    assert!(c.segment(&empty_frame(9), &[prompt]).unwrap().is_empty());
}
