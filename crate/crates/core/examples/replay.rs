//! Records simulator bundles as NDJSON, replays them through a fresh
//! pipeline and checks the trace is unchanged.

use std::io::{BufRead, BufReader, Write};

use aquafuse::metrics::trace_csv;
use aquafuse::pipeline::Mode;
use aquafuse::simulator::{oracle_for, replay, run, shipped_scene, FrameBundle, RunOptions, SimError, World};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = shipped_scene("scene4").ok_or("unknown scene")?;
    let options = RunOptions { mode: Mode::Ekf, seed: 9, compute_iou: false };
    let mut seeded = scene.clone();
    seeded.seed = options.seed;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("bundles.ndjson");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    for bundle in World::new(seeded)?.bundles() {
        serde_json::to_writer(&mut file, &bundle?)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    drop(file);
    println!("recorded {} bytes to {}", std::fs::metadata(&path)?.len(), path.display());

    let lines = BufReader::new(std::fs::File::open(&path)?).lines();
    let bundles = lines.map(|l| {
        let l = l.map_err(|e| SimError::Io(e.to_string()))?;
        serde_json::from_str::<FrameBundle>(&l).map_err(|e| SimError::Parse(e.to_string()))
    });
    let replayed = replay(&scene, &options, bundles, &mut oracle_for(&scene, options.seed))?;
    let direct = run(&scene, &options)?;
    println!("replayed {} ticks, {} rows", replayed.ticks, replayed.rows.len());
    println!("identical to a direct run: {}", trace_csv(&replayed)? == trace_csv(&direct)?);
    Ok(())
}
