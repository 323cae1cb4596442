//! Segments one frame through an external server speaking the wire
//! protocol.
//!
//! Pass an endpoint such as `127.0.0.1:9000` or `stdio:python3 server.py`.
//! Without one, a throwaway in-process server answering with the oracle is
//! started so the example runs on its own.

use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::time::Duration;

use aquafuse::geometry::PixelPoint;
use aquafuse::segmentation::{
    min_bounding_box, read_frame, write_frame, BridgeClient, PromptPoint, SegmentationProvider, SyntheticFrame,
    WireRequest, WireResponse, WireTarget,
};
use aquafuse::simulator::{oracle_for, shipped_scene, World};

fn local_server(scene: aquafuse::simulator::SceneConfig) -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    std::thread::spawn(move || {
        let Ok((stream, _)) = listener.accept() else { return };
        let mut reader = BufReader::new(stream.try_clone().expect("clone socket"));
        let mut writer = BufWriter::new(stream);
        let mut oracle = oracle_for(&scene, scene.seed);
        while let Ok(body) = read_frame(&mut reader) {
            let req: WireRequest = serde_json::from_slice(&body).expect("valid request");
            let syn = req.synthetic.expect("synthetic frame");
            let frame = SyntheticFrame { frame_id: req.frame_id, width: syn.width, height: syn.height, targets: syn.targets };
            let prompts: Vec<PromptPoint> = req
                .prompts
                .iter()
                .map(|p| PromptPoint { view: p.view, pixel: PixelPoint::new(p.u, p.v), source_sensor_id: 0 })
                .collect();
            let targets = oracle
                .segment(&frame, &prompts)
                .expect("oracle never fails")
                .into_iter()
                .map(|m| WireTarget { left_mask_rle: m.left.to_rle(), right_mask_rle: m.right.to_rle(), confidence: m.confidence })
                .collect();
            let resp = WireResponse { frame_id: req.frame_id, targets, error: None };
            if write_frame(&mut writer, &serde_json::to_vec(&resp).expect("serializable")).is_err() {
                break;
            }
        }
    });
    Ok(addr)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = shipped_scene("scene2").ok_or("unknown scene")?;
    let endpoint = match std::env::args().nth(1) {
        Some(e) => e,
        None => local_server(scene.clone())?,
    };
    println!("bridge endpoint {endpoint}");
    let mut client = BridgeClient::new(endpoint.parse()?, Duration::from_secs(10));

    let world = World::new(scene)?;
    let bundle = world.synthesize(0)?;
    let frame = bundle.frame.as_ref().ok_or("no frame on tick 0")?;
    for (i, m) in client.segment(frame, &[])?.iter().enumerate() {
        let (l, r) = (min_bounding_box(&m.left)?, min_bounding_box(&m.right)?);
        println!(
            "target {i}: confidence {:.3}, left box centre ({:.1}, {:.1}), disparity {:.2} px",
            m.confidence,
            l.centre().u,
            l.centre().v,
            l.centre().u - r.centre().u
        );
    }
    Ok(())
}
