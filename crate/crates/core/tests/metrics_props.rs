use proptest::prelude::*;
use relight_core::metrics::*;
use relight_core::temporal::align_previous;
use relight_core::{FlowField, ImageBuffer, Mask};

fn image_pair() -> impl Strategy<Value = (ImageBuffer, ImageBuffer, Mask)> {
    (11usize..20, 11usize..20).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec(0.0f32..1.0, w * h * 3),
            prop::collection::vec(0.0f32..1.0, w * h * 3),
            prop::collection::vec(prop_oneof![Just(0.0f32), Just(1.0f32), 0.0f32..1.0], w * h),
        )
            .prop_map(move |(a, b, m)| {
                let mut m = m;
                m[(h / 2) * w + w / 2] = 1.0;
                (
                    ImageBuffer::new(w, h, 3, a).unwrap(),
                    ImageBuffer::new(w, h, 3, b).unwrap(),
                    Mask::new(w, h, m).unwrap(),
                )
            })
    })
}

proptest! {
    #[test]
    fn metrics_are_symmetric((a, b, m) in image_pair()) {
        prop_assert_eq!(psnr(&a, &b, None).unwrap(), psnr(&b, &a, None).unwrap());
        prop_assert_eq!(l1(&a, &b, Some(&m)).unwrap(), l1(&b, &a, Some(&m)).unwrap());
        prop_assert!((ssim(&a, &b, None).unwrap() - ssim(&b, &a, None).unwrap()).abs() < 1e-9);
        prop_assert!((ssim(&a, &b, Some(&m)).unwrap() - ssim(&b, &a, Some(&m)).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn metrics_ignore_excluded_pixels((a, b, m) in image_pair(), fill in 0.0f32..1.0) {
        let scrub = |img: &ImageBuffer| {
            ImageBuffer::from_fn(img.width(), img.height(), 3, |x, y, c| if m.get(x, y) == 0.0 { fill } else { img.get(x, y, c) }).unwrap()
        };
        let (a2, b2) = (scrub(&a), scrub(&b));
        prop_assert_eq!(l1(&a, &b, Some(&m)).unwrap(), l1(&a2, &b2, Some(&m)).unwrap());
        prop_assert_eq!(psnr(&a, &b, Some(&m)).unwrap(), psnr(&a2, &b2, Some(&m)).unwrap());
        prop_assert!((ssim(&a, &b, Some(&m)).unwrap() - ssim(&a2, &b2, Some(&m)).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ranges_hold((a, b, _m) in image_pair()) {
        let p = psnr(&a, &b, None).unwrap();
        prop_assert!((0.0..=PSNR_CAP).contains(&p));
        let s = ssim(&a, &b, None).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}

#[test]
fn ssim_of_constants_matches_closed_form() {
    let a = ImageBuffer::filled(32, 32, 3, 0.5).unwrap();
    let b = ImageBuffer::filled(32, 32, 3, 0.6).unwrap();
    let c1: f64 = 1e-4;
    let closed: f64 = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    assert!((closed - 0.984).abs() < 1e-3);
    assert!((ssim(&a, &b, None).unwrap() - closed).abs() < 1e-6);
}

#[test]
fn repeated_frame_gives_sentinels_exactly() {
    let f = ImageBuffer::from_fn(24, 24, 3, |x, y, c| ((x * 5 + y * 3 + c) % 13) as f32 / 12.0).unwrap();
    let frames = vec![f; 5];
    let flows = vec![FlowField::zeros(24, 24); 4];
    let r = temporal_metrics(&frames, &frames, Some(&flows), None).unwrap();
    for fm in &r.frames[1..] {
        assert_eq!(fm.tl1, Some(0.0));
        assert_eq!(fm.tpsnr, Some(PSNR_CAP));
        assert_eq!(fm.tssim, Some(1.0));
    }
}

#[test]
fn tracking_beats_flicker() {
    let frame = |t: usize, gain: f32| {
        ImageBuffer::from_fn(48, 48, 1, |x, y, _| {
            let u = x as f32 - 2.0 * t as f32;
            gain * (0.5 + 0.3 * (u * 0.4).sin() * (y as f32 * 0.3).cos())
        })
        .unwrap()
    };
    let src: Vec<_> = (0..6).map(|t| frame(t, 1.0)).collect();
    let flicker: Vec<_> = (0..6).map(|t| frame(t, if t % 2 == 0 { 0.9 } else { 1.1 })).collect();
    let flows = vec![FlowField::uniform(48, 48, [2.0, 0.0]); 5];
    let tracked = temporal_metrics(&src, &src, Some(&flows), None).unwrap();
    let untracked = temporal_metrics(&flicker, &src, Some(&flows), None).unwrap();
    assert!(tracked.mean.tpsnr.unwrap() > untracked.mean.tpsnr.unwrap());
    // Estimated flow should track too.
    let estimated = temporal_metrics(&src, &src, None, None).unwrap();
    assert!(estimated.mean.tpsnr.unwrap() > 35.0, "{:?}", estimated.mean.tpsnr);
}

#[test]
fn temporal_restricts_to_valid_alignment() {
    let frames: Vec<_> = (0..3)
        .map(|t| ImageBuffer::from_fn(16, 16, 1, |x, _, _| (x as f32 + t as f32) / 20.0).unwrap())
        .collect();
    let flows = vec![FlowField::uniform(16, 16, [-1.0, 0.0]); 2];
    let r = temporal_metrics(&frames, &frames, Some(&flows), None).unwrap();
    // Content moves left by one: the last column is disoccluded and excluded.
    let aligned = align_previous(&frames[0], &flows[0]).unwrap();
    assert_eq!(aligned.valid.get(15, 3), 0.0);
    assert_eq!(r.frames[1].temporal_samples, Some(15 * 16));
    assert!(r.mean.tl1.unwrap() < 1e-7);
}

#[test]
fn mismatched_counts_are_errors() {
    let f = ImageBuffer::filled(16, 16, 1, 0.5).unwrap();
    assert!(matches!(
        temporal_metrics(&[f.clone(), f.clone()], &[f.clone()], None, None),
        Err(relight_core::Error::FrameCount { .. })
    ));
    assert!(temporal_metrics(&[f.clone()], &[f.clone()], None, None).is_err());
    assert!(matches!(
        fidelity_metrics(&[f.clone(), f.clone()], &[f], None),
        Err(relight_core::Error::FrameCount { .. })
    ));
}

#[test]
fn aggregates_are_means_of_frames() {
    let a: Vec<_> = (0..4).map(|t| ImageBuffer::filled(16, 16, 1, 0.1 * t as f32).unwrap()).collect();
    let b = vec![ImageBuffer::filled(16, 16, 1, 0.0).unwrap(); 4];
    let r = fidelity_metrics(&a, &b, None).unwrap();
    let manual: f64 = r.frames.iter().map(|f| f.l1.unwrap()).sum::<f64>() / 4.0;
    assert!((r.mean.l1.unwrap() - manual).abs() < 1e-12);
    let csv = r.to_csv();
    assert!(csv.starts_with("frame,l1,psnr,ssim,tl1,tpsnr,tssim\n"));
    assert_eq!(csv.lines().count(), 6);
}
