use proptest::prelude::*;
use relight_core::metrics::temporal_metrics;
use relight_core::pipeline::{fine_relight, AnalyticRelighter, RelightParams};
use relight_core::scenario::{gen_scenario, ScenarioSpec};
use relight_core::temporal::*;
use relight_core::{Error, FlowField, ImageBuffer, Warning};

fn texture(w: usize, h: usize, shift_x: f32, shift_y: f32) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y, c| {
        let u = x as f32 - shift_x;
        let v = y as f32 - shift_y;
        0.45 + 0.2 * (u * 0.37 + c as f32).sin() * (v * 0.29).cos() + 0.1 * (u * 0.13 - v * 0.17).sin()
    })
    .unwrap()
}

fn interior_median(flow: &FlowField, axis: usize, margin: usize) -> f32 {
    let mut v: Vec<f32> = (margin..flow.height() - margin)
        .flat_map(|y| (margin..flow.width() - margin).map(move |x| (x, y)))
        .map(|(x, y)| flow.get(x, y)[axis])
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn flow_recovers_three_pixel_shift() {
    let a = texture(96, 80, 0.0, 0.0);
    let b = texture(96, 80, 3.0, 0.0);
    let est = estimate_flow(&a, &b, FlowParams::default()).unwrap().value;
    let dx = interior_median(&est.flow, 0, 16);
    let dy = interior_median(&est.flow, 1, 16);
    assert!((2.5..=3.5).contains(&dx), "dx {dx}");
    assert!(dy.abs() < 0.5, "dy {dy}");
}

#[test]
fn flow_recovers_diagonal_subpixel_shift() {
    let a = texture(96, 96, 0.0, 0.0);
    let b = texture(96, 96, -1.5, 2.25);
    let est = estimate_flow(&a, &b, FlowParams::default()).unwrap().value;
    let (dx, dy) = (interior_median(&est.flow, 0, 16), interior_median(&est.flow, 1, 16));
    assert!((dx + 1.5).abs() < 0.25 && (dy - 2.25).abs() < 0.25, "({dx}, {dy})");
}

#[test]
fn identical_frames_give_exact_zero_flow() {
    let a = texture(64, 64, 0.0, 0.0);
    let est = estimate_flow(&a, &a, FlowParams::default()).unwrap().value;
    assert!(est.flow.data().iter().all(|d| *d == [0.0, 0.0]));
}

#[test]
fn flat_frames_warn() {
    let a = ImageBuffer::filled(32, 32, 1, 0.3).unwrap();
    let est = estimate_flow(&a, &a, FlowParams::default()).unwrap();
    assert!(est.warnings.iter().any(|w| matches!(w, Warning::LowConfidenceFlow { .. })));
    assert_eq!(est.value.low_confidence_fraction, 1.0);
}

#[test]
fn flow_is_deterministic() {
    let a = texture(64, 48, 0.0, 0.0);
    let b = texture(64, 48, 1.3, -0.7);
    let x = estimate_flow(&a, &b, FlowParams::default()).unwrap().value.flow;
    let y = estimate_flow(&a, &b, FlowParams::default()).unwrap().value.flow;
    assert_eq!(x, y);
}

#[test]
fn align_previous_undoes_translation() {
    let prev = texture(48, 48, 0.0, 0.0);
    let curr = texture(48, 48, 2.0, 1.0);
    let aligned = align_previous(&prev, &FlowField::uniform(48, 48, [2.0, 1.0])).unwrap();
    for y in 1..48 {
        for x in 2..48 {
            for c in 0..3 {
                assert!((aligned.image.get(x, y, c) - curr.get(x, y, c)).abs() < 1e-5);
            }
            assert_eq!(aligned.valid.get(x, y), 1.0);
        }
    }
    assert_eq!(aligned.valid.get(0, 10), 0.0);
}

#[test]
fn fully_out_of_bounds_blend_keeps_current() {
    let a = texture(16, 16, 0.0, 0.0);
    let far = FlowField::uniform(16, 16, [100.0, 0.0]);
    let w = warp(&texture(16, 16, 5.0, 0.0), &far).unwrap();
    assert!(w.valid.data().iter().all(|&v| v == 0.0));
    assert_eq!(temporal_blend(&a, &w.image, &w.valid, 0.5).unwrap(), a);
}

#[test]
fn blend_weight_examples() {
    let one = ImageBuffer::filled(4, 4, 1, 1.0).unwrap();
    let zero = ImageBuffer::filled(4, 4, 1, 0.0).unwrap();
    assert!(spatial_blend(&one, &zero, 0.85).unwrap().data().iter().all(|&v| (v - 0.85).abs() < 1e-7));
    let a = ImageBuffer::filled(4, 4, 1, 0.6).unwrap();
    let b = ImageBuffer::filled(4, 4, 1, 0.4).unwrap();
    let full = relight_core::Mask::full(4, 4);
    assert!(temporal_blend(&a, &b, &full, 0.5).unwrap().data().iter().all(|&v| (v - 0.5).abs() < 1e-7));
    assert!(spatial_blend(&a, &b, 1.5).is_err());
}

fn scenario_job(scenario: u8, frames: usize, size: usize, seed: u64) -> (VideoJob, Vec<ImageBuffer>, Vec<FlowField>) {
    let seq = gen_scenario(&ScenarioSpec::preset(scenario, frames, size, size, seed).unwrap()).unwrap();
    let images = seq.images();
    let job = VideoJob::new(
        images.clone(),
        seq.observed_normals(),
        seq.masks(),
        LightingTimeline::PerFrame(seq.lighting()),
    );
    (job, images, seq.flows())
}

#[test]
fn disabled_blending_equals_independent_frames() {
    let (mut job, images, _) = scenario_job(3, 5, 64, 4);
    job.weights = BlendWeights::DISABLED;
    let out = relight_video(&job, &AnalyticRelighter).unwrap();
    for t in 0..5 {
        let LightingTimeline::PerFrame(l) = &job.lighting else { unreachable!() };
        let direct = fine_relight(&images[t], &RelightParams::new(l[t].clone()), &job.normals[t], &job.masks[t], &AnalyticRelighter)
            .unwrap()
            .value;
        assert_eq!(out.frames[t], direct, "frame {t}");
    }
}

#[test]
fn static_input_reaches_fixed_point() {
    let (job, _, _) = scenario_job(2, 1, 64, 5);
    let mut job = job;
    job.frames = vec![job.frames[0].clone(); 5];
    job.normals = vec![job.normals[0].clone(); 5];
    job.masks = vec![job.masks[0].clone(); 5];
    let LightingTimeline::PerFrame(l) = &job.lighting else { unreachable!() };
    job.lighting = LightingTimeline::Static(l[0].clone());
    let out = relight_video(&job, &AnalyticRelighter).unwrap();
    for t in 2..5 {
        let diff = out.frames[t]
            .data()
            .iter()
            .zip(out.frames[1].data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(diff < 1e-4, "frame {t}: {diff}");
    }
}

#[test]
fn blending_reduces_flicker() {
    let (mut job, images, gt_flows) = scenario_job(1, 30, 128, 6);
    let mut tl1 = Vec::new();
    for w in [BlendWeights::DISABLED, BlendWeights { spatial_w: 0.85, temporal_w: 1.0 }, BlendWeights::default()] {
        job.weights = w;
        let out = relight_video(&job, &AnalyticRelighter).unwrap();
        tl1.push(temporal_metrics(&out.frames, &images, Some(&gt_flows), None).unwrap().mean.tl1.unwrap());
    }
    assert!(tl1[0] > tl1[1] && tl1[1] > tl1[2], "{tl1:?}");
}

#[test]
fn precomputed_flow_count_is_checked() {
    let (mut job, _, flows) = scenario_job(1, 4, 64, 1);
    job.flow = FlowSource::Precomputed(flows[..2].to_vec());
    match relight_video(&job, &AnalyticRelighter) {
        Err(Error::FrameCount { asset, expected, actual }) => {
            assert_eq!((asset.as_str(), expected, actual), ("flows", 3, 2));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn outputs_are_deterministic() {
    let (job, _, _) = scenario_job(3, 4, 64, 2);
    let a = relight_video(&job, &AnalyticRelighter).unwrap();
    let b = relight_video(&job, &AnalyticRelighter).unwrap();
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.shading, b.shading);
}

proptest! {
    #[test]
    fn zero_flow_warp_is_bit_exact(w in 1usize..12, h in 1usize..12, seed in any::<u32>()) {
        let img = ImageBuffer::from_fn(w, h, 3, |x, y, c| (((x as u32).wrapping_mul(2654435761) ^ (y as u32).wrapping_mul(40503) ^ c as u32 ^ seed) % 1000) as f32 / 999.0).unwrap();
        let out = warp(&img, &FlowField::zeros(w, h)).unwrap();
        prop_assert_eq!(out.image, img);
        prop_assert!(out.valid.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn integer_warp_is_a_shift(dx in -3i32..=3, dy in -3i32..=3) {
        let img = texture(20, 16, 0.0, 0.0);
        let out = warp(&img, &FlowField::uniform(20, 16, [dx as f32, dy as f32])).unwrap();
        for y in 0..16i32 {
            for x in 0..20i32 {
                let (sx, sy) = (x + dx, y + dy);
                let inside = (0..20).contains(&sx) && (0..16).contains(&sy);
                prop_assert_eq!(out.valid.get(x as usize, y as usize) == 1.0, inside);
                if inside {
                    prop_assert_eq!(out.image.pixel(x as usize, y as usize), img.pixel(sx as usize, sy as usize));
                }
            }
        }
    }

    #[test]
    fn blends_fix_equal_fields(v in 0.0f32..2.0, ws in 0.0f32..=1.0, wt in 0.0f32..=1.0) {
        let a = ImageBuffer::filled(5, 5, 1, v).unwrap();
        prop_assert_eq!(&spatial_blend(&a, &a, ws).unwrap(), &a);
        prop_assert_eq!(&temporal_blend(&a, &a, &relight_core::Mask::full(5, 5), wt).unwrap(), &a);
    }
}

