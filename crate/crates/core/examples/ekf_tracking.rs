//! Tracks approaching targets with the constant-velocity filter and reports
//! prior and posterior state errors.

use aquafuse::metrics::{summarize, STATE_COMPONENTS};
use aquafuse::pipeline::Mode;
use aquafuse::simulator::{run, shipped_scene, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = shipped_scene("scene5").ok_or("unknown scene")?;
    let trace = run(&scene, &RunOptions { mode: Mode::Ekf, seed: 1, compute_iou: false })?;
    let s = summarize(&trace)?;
    println!("{:>3} {:>12} {:>12} {:>9}", "", "prior MAE", "post MAE", "change");
    for (k, name) in STATE_COMPONENTS.iter().enumerate() {
        println!(
            "{name:>3} {:>12.3e} {:>12.3e} {:>8.2}%",
            s.state_errors.prior[k].mean.unwrap_or(f64::NAN),
            s.state_errors.posterior[k].mean.unwrap_or(f64::NAN),
            s.state_errors.reduction_pct[k].unwrap_or(f64::NAN)
        );
    }

    let first = trace.rows.iter().find(|r| r.posterior.is_some()).map(|r| r.track_id);
    for r in trace.rows.iter().filter(|r| Some(r.track_id) == first && r.tick % 10 == 0) {
        let (Some(p), Some(t)) = (r.posterior, r.truth) else { continue };
        println!("t={:4.1} pz {:.4} (truth {:.4})  vz {:+.4} (truth {:+.4})", r.t, p[2], t[2], p[5], t[5]);
    }
    Ok(())
}
