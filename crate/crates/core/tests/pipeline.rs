//! Tick-level pipeline behaviour on simulated bundles.

use aquafuse::acoustic::SensorStatus;
use aquafuse::pipeline::{Mode, Pipeline, PipelineError, TickResult};
use aquafuse::segmentation::{PromptPoint, SegmentationError, SegmentationProvider, StereoMask, SyntheticFrame};
use aquafuse::simulator::{oracle_for, shipped_scene, FrameBundle, SceneConfig, World};

fn setup(scene: SceneConfig, mode: Mode) -> (World, Pipeline) {
    let world = World::new(scene).unwrap();
    let mut config = world.scene.pipeline_config().unwrap();
    config.mode = mode;
    let pipeline = Pipeline::new(config, world.rect.clone(), world.sensors.clone()).unwrap();
    (world, pipeline)
}

fn bundles(world: &World) -> Vec<FrameBundle> {
    world.bundles().collect::<Result<_, _>>().unwrap()
}

fn run_bundles<P: SegmentationProvider>(pipeline: &mut Pipeline, bundles: &[FrameBundle], provider: &mut P) -> Vec<TickResult> {
    bundles.iter().map(|b| pipeline.process_tick(b, provider).unwrap()).collect()
}

fn far(b: &mut FrameBundle, sensor: Option<u32>) {
    for m in &mut b.ranges {
        if sensor.is_none_or(|id| id == m.sensor_id) {
            m.distance = Some(100.0);
            m.status = SensorStatus::TooFar;
        }
    }
}

#[test]
fn one_result_per_bundle() {
    let (world, mut pipeline) = setup(shipped_scene("scene2").unwrap(), Mode::Ekf);
    let bundles = bundles(&world);
    let mut oracle = oracle_for(&world.scene, world.scene.seed);
    let results = run_bundles(&mut pipeline, &bundles, &mut oracle);
    assert_eq!(results.len() as u64, world.ticks());
    for (r, b) in results.iter().zip(&bundles) {
        assert_eq!(r.tick, b.tick);
        assert_eq!(r.t, b.timestamp);
    }
    assert_eq!(pipeline.track_count(), 2);
    let last = results.last().unwrap();
    assert!(last.estimates.iter().all(|e| e.confirmed && e.posterior.is_some()));
}

#[test]
fn stale_timestamp_is_rejected() {
    let (world, mut pipeline) = setup(shipped_scene("scene1").unwrap(), Mode::Ranging);
    let bundles = bundles(&world);
    let mut oracle = oracle_for(&world.scene, 0);
    pipeline.process_tick(&bundles[1], &mut oracle).unwrap();
    for stale in [&bundles[0], &bundles[1]] {
        let err = pipeline.process_tick(stale, &mut oracle).unwrap_err();
        assert!(matches!(err, PipelineError::StaleTimestamp { .. }), "{err:?}");
    }
    pipeline.process_tick(&bundles[2], &mut oracle).unwrap();
}

#[test]
fn gating_one_sensor_leaves_other_targets_alone() {
    let scene = shipped_scene("scene2").unwrap();
    let (world, mut base) = setup(scene.clone(), Mode::Ranging);
    let clean = bundles(&world);
    let baseline = run_bundles(&mut base, &clean, &mut oracle_for(&scene, scene.seed));

    let est = &baseline.last().unwrap().estimates;
    assert_eq!(est.len(), 2);
    let (victim, other) = (&est[0], &est[1]);
    let gated_sensor = victim.sensor_id.unwrap();
    assert_ne!(other.sensor_id, Some(gated_sensor));

    let mut gated_bundles = clean.clone();
    for b in gated_bundles.iter_mut().skip(20) {
        far(b, Some(gated_sensor));
    }
    let (_, mut gated) = setup(scene.clone(), Mode::Ranging);
    let results = run_bundles(&mut gated, &gated_bundles, &mut oracle_for(&scene, scene.seed));

    let find = |r: &TickResult, id| r.estimates.iter().find(|e| e.track_id == id).cloned();
    for (a, b) in baseline.iter().zip(&results).skip(20) {
        assert_eq!(find(a, other.track_id).unwrap(), find(b, other.track_id).unwrap(), "tick {}", a.tick);
        if let Some(v) = find(b, victim.track_id) {
            assert!(v.flags.extrapolated_range && !v.observed, "tick {}", b.tick);
        }
    }
    // Its target is no longer prompted, so the track is eventually retired.
    assert!(find(results.last().unwrap(), victim.track_id).is_none());
}

#[test]
fn all_ranges_out_of_gate_extrapolates_range() {
    let scene = shipped_scene("scene1").unwrap();
    let (world, mut pipeline) = setup(scene.clone(), Mode::Ranging);
    let mut bundles = bundles(&world);
    for b in bundles.iter_mut().skip(30) {
        far(b, None);
    }
    let results = run_bundles(&mut pipeline, &bundles, &mut oracle_for(&scene, scene.seed));
    for r in &results[30..] {
        assert!(r.prompts.is_empty());
        assert_eq!(r.estimates.len(), 1, "tick {}", r.tick);
        let e = &r.estimates[0];
        assert!(e.flags.extrapolated_range, "tick {}", r.tick);
        assert!(e.zr.is_some_and(|z| z > 0.0));
    }
    // The camera keeps measuring.
    assert!(results[30..].iter().any(|r| !r.estimates[0].flags.extrapolated_segmentation));
}

/// Drops the reported confidence on a window of frames.
struct Dimmed<P> {
    inner: P,
    frames: std::ops::Range<u64>,
    confidence: f64,
}

impl<P: SegmentationProvider> SegmentationProvider for Dimmed<P> {
    fn segment(&mut self, frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Result<Vec<StereoMask>, SegmentationError> {
        let mut masks = self.inner.segment(frame, prompts)?;
        if self.frames.contains(&frame.frame_id) {
            for m in &mut masks {
                m.confidence = self.confidence;
            }
        }
        Ok(masks)
    }
}

#[test]
fn low_confidence_masks_extrapolate_stereo_depth() {
    let mut scene = shipped_scene("scene1").unwrap();
    scene.noise.degradation = false;
    let (world, mut pipeline) = setup(scene.clone(), Mode::Ranging);
    let bundles = bundles(&world);
    let mut provider = Dimmed { inner: oracle_for(&scene, scene.seed), frames: 40..45, confidence: 0.3 };
    let results = run_bundles(&mut pipeline, &bundles, &mut provider);
    for r in &results {
        let e = &r.estimates[0];
        let dimmed = (40..45).contains(&r.tick);
        assert_eq!(e.flags.low_confidence, dimmed, "tick {}", r.tick);
        assert_eq!(r.masks[0].low_confidence, dimmed);
        if dimmed {
            assert!(e.flags.extrapolated_segmentation && !e.flags.extrapolated_range);
            let truth = bundles[r.tick as usize].truth[0].position[2];
            let zb = e.zb.unwrap();
            assert!(((zb - truth) / truth).abs() < 0.02, "tick {} zb {zb} truth {truth}", r.tick);
        } else if r.tick > 0 {
            assert!(e.flags.ok(), "tick {}: {}", r.tick, e.flags.label());
        }
    }
}

#[test]
fn ticks_without_images_do_not_count_as_misses() {
    let mut scene = shipped_scene("scene1").unwrap();
    scene.camera_hz = 2.0;
    scene.pipeline.retire_after = Some(2);
    let (world, mut pipeline) = setup(scene.clone(), Mode::Ranging);
    let bundles = bundles(&world);
    assert!(bundles.iter().filter(|b| b.frame.is_none()).count() > 50);
    let results = run_bundles(&mut pipeline, &bundles, &mut oracle_for(&scene, scene.seed));
    let ids: std::collections::BTreeSet<u32> =
        results.iter().flat_map(|r| r.estimates.iter().map(|e| e.track_id)).collect();
    assert_eq!(ids.len(), 1);
    for (r, b) in results.iter().zip(&bundles) {
        assert_eq!(r.estimates.len(), 1, "tick {}", r.tick);
        if b.frame.is_none() {
            let e = &r.estimates[0];
            assert!(!e.observed && e.flags.extrapolated_segmentation);
            assert!(!e.flags.extrapolated_range);
        }
    }
}

#[test]
fn failing_provider_keeps_tracks_alive() {
    struct Flaky<P>(P);
    impl<P: SegmentationProvider> SegmentationProvider for Flaky<P> {
        fn segment(&mut self, frame: &SyntheticFrame, prompts: &[PromptPoint]) -> Result<Vec<StereoMask>, SegmentationError> {
            if frame.frame_id >= 10 {
                return Err(SegmentationError::ProviderUnavailable("offline".into()));
            }
            self.0.segment(frame, prompts)
        }
    }
    let scene = shipped_scene("scene1").unwrap();
    let (world, mut pipeline) = setup(scene.clone(), Mode::Ranging);
    let results = run_bundles(&mut pipeline, &bundles(&world), &mut Flaky(oracle_for(&scene, scene.seed)));
    for r in &results[10..] {
        assert!(r.provider_error.is_some());
        assert_eq!(r.estimates.len(), 1);
        assert!(r.estimates[0].flags.extrapolated_segmentation);
        assert!(!r.estimates[0].flags.extrapolated_range);
    }
}

#[test]
fn modalities_degrade_independently() {
    let mut scene = shipped_scene("scene1").unwrap();
    scene.noise.degradation = false;
    let (world, mut pipeline) = setup(scene.clone(), Mode::Ranging);
    let mut bundles = bundles(&world);
    for b in &mut bundles[42..48] {
        far(b, None);
    }
    let mut provider = Dimmed { inner: oracle_for(&scene, scene.seed), frames: 40..45, confidence: 0.3 };
    let results = run_bundles(&mut pipeline, &bundles, &mut provider);
    for r in &results[38..50] {
        let f = r.estimates[0].flags;
        let (dim, gated) = ((40..45).contains(&r.tick), (42..48).contains(&r.tick));
        assert_eq!(f.low_confidence, dim, "tick {}", r.tick);
        assert_eq!(f.extrapolated_segmentation, dim, "tick {}", r.tick);
        assert_eq!(f.extrapolated_range, gated, "tick {}", r.tick);
    }
}
