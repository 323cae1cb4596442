//! Pings a target with the default ultrasonic array and gates the echoes.

use aquafuse::acoustic::{simulate_ping, tof_to_distance, PingNoise, RangeGate, DEFAULT_SPEED_OF_SOUND};
use aquafuse::rng::{stream, CHANNEL_ACOUSTIC};
use aquafuse::simulator::shipped_scene;
use nalgebra::Vector3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = shipped_scene("scene1").ok_or("unknown scene")?;
    let sensors = scene.sensors()?;
    let gate = RangeGate::new(0.05, 1.0)?;
    let noise = PingNoise::default();

    println!("a 0.54 ms round trip is {:.3} m", tof_to_distance(0.54e-3, DEFAULT_SPEED_OF_SOUND)?);

    // A target straight ahead of sensor 0 at three depths; the last one is
    // outside the gate.
    let s0 = &sensors[0];
    for z in [0.3, 0.7, 1.4] {
        let echo = Vector3::new(s0.mount_offset.x, s0.mount_offset.y, z);
        for sensor in sensors.iter().take(3) {
            let mut rng = stream(7, 0, CHANNEL_ACOUSTIC + sensor.id as u64);
            let m = simulate_ping(sensor, &[echo], &noise, &gate, 0.0, &mut rng);
            let d = m.distance.map_or("-".to_string(), |d| format!("{d:.4}"));
            println!("target at {z:.1} m, sensor {}: {:?} {d}", sensor.id, m.status);
        }
    }
    Ok(())
}
