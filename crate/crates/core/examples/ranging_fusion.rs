//! Runs the ranging pipeline on a scene and compares the camera, acoustic
//! and fused depth errors.

use aquafuse::fusion::{compute_alpha, fuse_range, DEFAULT_ACOUSTIC_ERROR_PCT};
use aquafuse::metrics::summarize;
use aquafuse::pipeline::Mode;
use aquafuse::segmentation::ShapeClass;
use aquafuse::simulator::{run, shipped_scene, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = shipped_scene("scene6").ok_or("unknown scene")?;
    let e_b = scene.illumination().row(ShapeClass::Regular).depth_error_pct;
    let alpha = compute_alpha(e_b, DEFAULT_ACOUSTIC_ERROR_PCT)?;
    println!("{} lux: camera error {e_b:.2}%, acoustic {DEFAULT_ACOUSTIC_ERROR_PCT}%, alpha {alpha:.4}", scene.lux);
    println!("fusing 0.52 m (camera) with 0.50 m (acoustic): {:.4} m", fuse_range(0.52, 0.50, alpha)?);

    let trace = run(&scene, &RunOptions { mode: Mode::Ranging, seed: 3, compute_iou: false })?;
    let s = summarize(&trace)?;
    let fmt = |st: aquafuse::metrics::Stat| format!("{:.3}% (n={})", st.mean.unwrap_or(f64::NAN), st.count);
    println!("camera   {}", fmt(s.camera_error_pct));
    println!("acoustic {}", fmt(s.acoustic_error_pct));
    println!("fused    {}", fmt(s.fused_error_pct));

    for r in trace.rows.iter().filter(|r| r.tick % 25 == 0) {
        println!(
            "t={:5.1} track {} truth {:.4}  zb {:.4}  zr {:.4}  zf {:.4}  {}",
            r.t,
            r.track_id,
            r.truth_pz().unwrap_or(f64::NAN),
            r.zb.unwrap_or(f64::NAN),
            r.zr.unwrap_or(f64::NAN),
            r.zf.unwrap_or(f64::NAN),
            r.flags.label()
        );
    }
    Ok(())
}
