//! Sweeps illuminance over the static grid and tabulates segmentation
//! failure, IoU and depth error.

use aquafuse::metrics::{summarize, sweep_report};
use aquafuse::pipeline::Mode;
use aquafuse::simulator::{run, shipped_scene, RunOptions};
use rayon::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = shipped_scene("static_grid").ok_or("unknown scene")?;
    let jobs: Vec<(f64, u64)> = [2.0, 4.0, 6.0, 8.0, 12.0, 25.0]
        .into_iter()
        .flat_map(|lux| (0..2).map(move |seed| (lux, seed)))
        .collect();
    let summaries = jobs
        .par_iter()
        .map(|&(lux, seed)| {
            let mut scene = base.clone();
            scene.lux = lux;
            let trace = run(&scene, &RunOptions { mode: Mode::Ranging, seed, compute_iou: true })?;
            Ok(summarize(&trace)?)
        })
        .collect::<Result<Vec<_>, Box<dyn std::error::Error + Send + Sync>>>()
        .map_err(|e| e.to_string())?;
    print!("{}", sweep_report(&summaries)?.to_csv()?);
    Ok(())
}
