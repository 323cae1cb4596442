//! Rectifies the shipped stereo rig and ranges a point from its disparity.

use aquafuse::geometry::{depth_to_disparity, disparity_to_depth, rectify, StereoCalibration};
use nalgebra::Vector3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let calib = StereoCalibration::shipped();
    let rect = rectify(&calib)?;
    let (f, b) = (rect.focal(), rect.baseline);
    println!("rectified focal {f:.2} px, baseline {:.2} mm", b * 1e3);

    for z in [0.3, 0.5, 1.0, 2.0] {
        let p = Vector3::new(0.05, -0.02, z);
        let (l, r) = rect.project_rectified(&p)?;
        let d = l.u - r.u;
        println!(
            "Z={z:.2} m  left ({:7.2}, {:7.2})  right ({:7.2}, {:7.2})  d={d:7.3} px  Z'={:.6} m",
            l.u,
            l.v,
            r.u,
            r.v,
            disparity_to_depth(d, f, b)?
        );
    }

    // One pixel of disparity error matters more the farther the target is.
    for z in [0.3, 1.0, 3.0] {
        let d = depth_to_disparity(z, f, b)?;
        let dz = disparity_to_depth(d - 1.0, f, b)? - z;
        println!("at {z:.1} m a 1 px disparity error moves depth by {:.1} mm", dz * 1e3);
    }
    Ok(())
}
