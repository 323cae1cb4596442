//! Prompts the synthetic segmenter with acoustic ranges and scores the masks
//! at several illuminance levels.

use aquafuse::segmentation::{iou, min_bounding_box, range_to_prompt_pair, Mask, SegmentationProvider};
use aquafuse::simulator::{oracle_for, shipped_scene, World};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for lux in [2.0, 6.0, 25.0] {
        let mut scene = shipped_scene("scene3").ok_or("unknown scene")?;
        scene.lux = lux;
        let world = World::new(scene.clone())?;
        let mut oracle = oracle_for(&scene, 11);
        let (mut segmented, mut failed, mut iou_sum) = (0, 0, 0.0);
        for tick in 0..world.ticks() {
            let bundle = world.synthesize(tick)?;
            let Some(frame) = &bundle.frame else { continue };
            let mut prompts = Vec::new();
            for m in &bundle.ranges {
                let (Some(s), Some(sensor)) = (m.valid_distance(), world.sensors.iter().find(|x| x.id == m.sensor_id))
                else {
                    continue;
                };
                if let Ok(pair) = range_to_prompt_pair(sensor, s, &world.rect.intrinsics, world.rect.baseline, world.rect.image_size) {
                    prompts.extend(pair);
                }
            }
            for mask in oracle.segment(frame, &prompts)? {
                let centre = min_bounding_box(&mask.left)?.centre();
                let Some(truth) = frame.targets.iter().find(|t| t.left.contains_point(centre)) else {
                    failed += 1;
                    continue;
                };
                segmented += 1;
                if mask.confidence < 0.5 {
                    failed += 1;
                } else {
                    let exact = Mask::from_shape(frame.width, frame.height, truth.left.clone(), 1.0);
                    iou_sum += iou(&mask.left, &exact)?;
                }
            }
        }
        let ok = segmented - failed.min(segmented);
        println!(
            "{lux:>5.1} lux: {segmented} masks, {failed} failed, mean IoU of the rest {:.3}",
            iou_sum / ok.max(1) as f64
        );
    }
    Ok(())
}
