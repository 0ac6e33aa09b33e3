mod common;

use std::fs;
use std::path::Path;

use common::*;
use frepgan::data::*;
use frepgan::spectral::{mean_radial_profile, spectral_gap, top_quartile_band, RadialMode};
use frepgan::{Error, ImageTensor};
use image::{GrayImage, Luma, Rgb, RgbImage};
use proptest::prelude::*;

fn gray_png(path: &Path, value: u8) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    GrayImage::from_pixel(4, 4, Luma([value])).save(path).unwrap();
}

#[test]
fn loads_three_real_two_fake_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    gray_png(&root.join("real/b.png"), 20);
    gray_png(&root.join("real/a.png"), 10);
    let rgb = RgbImage::from_pixel(4, 4, Rgb([30, 30, 30]));
    rgb.save_with_format(root.join("real/c.ppm"), image::ImageFormat::Pnm).unwrap();
    gray_png(&root.join("fake/z.png"), 50);
    gray_png(&root.join("fake/y.png"), 40);
    fs::write(root.join("fake/notes.txt"), "not an image").unwrap();

    let samples = load_dataset(root, None, 1).unwrap();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    assert_eq!(labels, [0, 0, 0, 1, 1]);
    let firsts: Vec<f64> = samples.iter().map(|s| s.image.data()[0]).collect();
    let want: Vec<f64> = [10u8, 20, 30, 40, 50].iter().map(|&v| byte_to_unit(v)).collect();
    assert_eq!(firsts, want);
    assert_eq!(samples, load_dataset(root, None, 1).unwrap());

    // Grayscale is replicated when three channels are requested.
    let rgb = load_dataset(root, Some(8), 3).unwrap();
    assert!(rgb.iter().all(|s| s.image.channels() == 3 && s.image.height() == 8));
    assert_eq!(rgb[0].image.get(3, 3, 2), byte_to_unit(10));
}

#[test]
fn pixel_map_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    gray_png(&root.join("real/0.png"), 255);
    gray_png(&root.join("fake/0.png"), 0);
    let samples = load_dataset(root, None, 1).unwrap();
    assert!(samples[0].image.data().iter().all(|&v| v == 1.0));
    assert!(samples[1].image.data().iter().all(|&v| v == -1.0));
    for v in 0..=255u8 {
        assert_eq!(byte_to_unit(v), v as f64 / 127.5 - 1.0);
        assert_eq!(unit_to_byte(byte_to_unit(v)), v);
    }
}

#[test]
fn empty_or_missing_class_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    gray_png(&root.join("real/0.png"), 1);
    assert!(matches!(load_dataset(root, None, 1), Err(Error::Layout(_))));
    fs::create_dir_all(root.join("fake")).unwrap();
    assert!(matches!(load_dataset(root, None, 1), Err(Error::InvalidDataset(_))));
}

#[test]
fn undecodable_files_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    gray_png(&root.join("real/0.png"), 1);
    gray_png(&root.join("fake/0.png"), 2);
    fs::write(root.join("fake/1.png"), b"garbage").unwrap();
    assert_eq!(load_dataset(root, None, 1).unwrap().len(), 2);
    fs::remove_file(root.join("fake/0.png")).unwrap();
    assert!(matches!(load_dataset(root, None, 1), Err(Error::InvalidDataset(_))));
}

#[test]
fn write_then_load_roundtrips_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let samples = synthesize_toy_dataset(&SyntheticArtifactSpec::none(), &SyntheticArtifactSpec::grid(4, 0.2), 3, 16, 1)
        .unwrap();
    write_dataset(dir.path(), &samples).unwrap();
    let loaded = load_dataset(dir.path(), None, 1).unwrap();
    assert_eq!(loaded.len(), 6);
    for (a, b) in samples.iter().zip(&loaded) {
        assert_eq!(a.label, b.label);
        // One 8-bit quantisation step is 2/255.
        assert!(a.image.max_abs_diff(&b.image) <= 1.0 / 255.0 + 1e-12);
    }
}

fn profiles(data: &[LabeledImage]) -> (frepgan::spectral::RadialProfile, frepgan::spectral::RadialProfile) {
    let class = |l| data.iter().filter(|s| s.label == l).map(|s| s.image.clone()).collect::<Vec<_>>();
    (
        mean_radial_profile(&class(0), RadialMode::Mean).unwrap(),
        mean_radial_profile(&class(1), RadialMode::Mean).unwrap(),
    )
}

#[test]
fn null_artifact_matches_real_distribution() {
    let data =
        synthesize_toy_dataset(&SyntheticArtifactSpec::none(), &SyntheticArtifactSpec::checkerboard(2, 0.0), 200, 32, 3)
            .unwrap();
    let (real, fake) = profiles(&data);
    for r in 0..real.power.len() {
        assert!(rel_err(real.power[r], fake.power[r]) < 0.05, "bin {r}");
    }
}

#[test]
fn checkerboard_dominates_nyquist_bin() {
    let data =
        synthesize_toy_dataset(&SyntheticArtifactSpec::none(), &SyntheticArtifactSpec::checkerboard(2, 0.25), 20, 32, 4)
            .unwrap();
    let mean_bins = |label: u8| {
        let imgs: Vec<_> = data.iter().filter(|s| s.label == label).collect();
        let mut acc = vec![0.0; 17];
        for s in &imgs {
            for (a, v) in acc.iter_mut().zip(brute_radial_mean(&s.image)) {
                *a += v / imgs.len() as f64;
            }
        }
        acc
    };
    let (real, fake) = (mean_bins(0), mean_bins(1));
    assert!(fake[16] >= 10.0 * real[16], "{} vs {}", fake[16], real[16]);
}

#[test]
fn synthesis_is_deterministic_and_labelled() {
    let make = |seed| {
        synthesize_toy_dataset(&SyntheticArtifactSpec::none(), &SyntheticArtifactSpec::ring((10.0, 14.0), 0.25), 5, 32, seed)
            .unwrap()
    };
    let a = make(7);
    assert_eq!(a, make(7));
    assert_ne!(a, make(8));
    assert_eq!(class_counts(&a), ClassCounts { real: 5, fake: 5 });
    assert!(a.iter().all(|s| s.image.in_pixel_range()));
    assert_eq!(a[9].source_tag, "ring");
    assert!(matches!(
        synthesize_toy_dataset(&SyntheticArtifactSpec::grid(2, 0.1), &SyntheticArtifactSpec::none(), 1, 8, 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        synthesize_toy_dataset(&SyntheticArtifactSpec::none(), &SyntheticArtifactSpec::checkerboard(1, 0.1), 1, 8, 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn gap_grows_with_amplitude() {
    let mut gaps = Vec::new();
    for a in [0.05, 0.1, 0.2] {
        for spec in [SyntheticArtifactSpec::checkerboard(2, a), SyntheticArtifactSpec::ring(SyntheticArtifactSpec::default_ring_band(32), a)] {
            let data = synthesize_toy_dataset(&SyntheticArtifactSpec::none(), &spec, 40, 32, 5).unwrap();
            let (real, fake) = profiles(&data);
            gaps.push(spectral_gap(&real, &fake, top_quartile_band(real.max_radius())).unwrap());
        }
    }
    // Index pairs: (checkerboard, ring) per amplitude.
    assert!(gaps[0] < gaps[2] && gaps[2] < gaps[4], "{gaps:?}");
    assert!(gaps[1] < gaps[3] && gaps[3] < gaps[5], "{gaps:?}");
}

#[test]
fn identity_manipulations_are_bit_exact() {
    let img = random_image(9, 7, 3, 1);
    for kind in ManipulationKind::ALL {
        assert_eq!(manipulate(&img, &ManipulationSpec::identity(kind)).unwrap(), img, "{}", kind.name());
    }
    let gray = random_image(9, 7, 1, 2);
    for kind in [ManipulationKind::Hue, ManipulationKind::Saturation] {
        assert_eq!(manipulate(&gray, &ManipulationSpec::default_for(kind)).unwrap(), gray);
    }
}

#[test]
fn brightness_on_constant() {
    let img = ImageTensor::zeros(4, 4, 3).unwrap();
    let out = manipulate(&img, &ManipulationSpec::new(ManipulationKind::Brightness, 0.2).unwrap()).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.2));
}

#[test]
fn quarter_turns_match_permutation_oracle() {
    // Pattern [[a, b], [c, d]]; a counter-clockwise quarter turn gives
    // [[b, d], [a, c]].
    let (a, b, c, d) = (0.1, 0.2, 0.3, 0.4);
    let img = ImageTensor::new(2, 2, 1, vec![a, b, c, d]).unwrap();
    let turn = |deg| manipulate(&img, &ManipulationSpec::new(ManipulationKind::Rotation, deg).unwrap()).unwrap();
    assert_eq!(turn(90.0).data(), &[b, d, a, c]);
    assert_eq!(turn(180.0).data(), &[d, c, b, a]);
    assert_eq!(turn(270.0).data(), &[c, a, d, b]);

    let rect = random_image(3, 5, 3, 3);
    let once = manipulate(&rect, &ManipulationSpec::new(ManipulationKind::Rotation, 90.0).unwrap()).unwrap();
    assert_eq!((once.height(), once.width()), (5, 3));
    for y in 0..5 {
        for x in 0..3 {
            for k in 0..3 {
                assert_eq!(once.get(y, x, k), rect.get(x, 4 - y, k));
            }
        }
    }
}

#[test]
fn out_of_range_magnitudes_rejected() {
    for (kind, bad) in [
        (ManipulationKind::Hue, 0.6),
        (ManipulationKind::Brightness, -0.7),
        (ManipulationKind::Saturation, 2.5),
        (ManipulationKind::Gamma, 0.1),
        (ManipulationKind::Contrast, -0.1),
        (ManipulationKind::Blur, 4.5),
        (ManipulationKind::Rotation, f64::NAN),
    ] {
        assert!(matches!(ManipulationSpec::new(kind, bad), Err(Error::Config(_))), "{}", kind.name());
    }
}

#[test]
fn blur_preserves_constants_and_smooths() {
    let flat = ImageTensor::filled(8, 8, 1, 0.3).unwrap();
    let spec = ManipulationSpec::new(ManipulationKind::Blur, 1.5).unwrap();
    assert!(manipulate(&flat, &spec).unwrap().max_abs_diff(&flat) < 1e-12);
    let noise = random_image(16, 16, 1, 4);
    let blurred = manipulate(&noise, &spec).unwrap();
    assert!(blurred.sum_squares() < noise.sum_squares());
}

#[test]
fn hsv_conversion_roundtrips() {
    let mut r = rng(5);
    for _ in 0..200 {
        use rand::Rng;
        let (a, b, c): (f64, f64, f64) = (r.random(), r.random(), r.random());
        let (h, s, v) = rgb_to_hsv(a, b, c);
        let (x, y, z) = hsv_to_rgb(h, s, v);
        assert!((a - x).abs() < 1e-12 && (b - y).abs() < 1e-12 && (c - z).abs() < 1e-12);
    }
}

#[test]
fn resize_identity_constant_and_errors() {
    let img = random_image(16, 16, 3, 6);
    assert_eq!(resize(&img, 16).unwrap(), img);
    let flat = ImageTensor::filled(16, 16, 3, -0.4).unwrap();
    for t in [8, 11, 24, 37] {
        assert!(resize(&flat, t).unwrap().data().iter().all(|&v| v == -0.4));
    }
    assert!(matches!(resize(&img, 7), Err(Error::Config(_))));
}

#[test]
fn bilinear_downsize_matches_hand_oracle() {
    // v(y, x) = (4y + x) / 20. Half-pixel centres of the 2x2 output sit at
    // source coordinate 0.5 and 2.5 on each axis, so each output is the
    // equal-weight mean of a 2x2 source block:
    // (0+1+4+5)/80, (2+3+6+7)/80, (8+9+12+13)/80, (10+11+14+15)/80.
    let img = ImageTensor::from_fn(4, 4, 1, |y, x, _| (4 * y + x) as f64 / 20.0).unwrap();
    let out = resize_to(&img, 2, 2).unwrap();
    let hand = [10.0 / 80.0, 18.0 / 80.0, 42.0 / 80.0, 50.0 / 80.0];
    for (got, want) in out.data().iter().zip(hand) {
        assert!((got - want).abs() < 1e-12);
    }
    // 4 -> 3 on one axis: centres at 1/6, 3/2, 17/6 with 4-tap weights.
    let row = ImageTensor::new(1, 4, 1, vec![0.0, 0.4, 0.8, 0.2]).unwrap();
    let out = resize_to(&row, 1, 3).unwrap();
    let hand = [0.0 + (1.0 / 6.0) * 0.4, 0.4 + 0.5 * 0.4, 0.8 + (5.0 / 6.0) * (0.2 - 0.8)];
    for (got, want) in out.data().iter().zip(hand) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

fn spec_strategy() -> impl Strategy<Value = ManipulationSpec> {
    (0usize..7, 0.0f64..=1.0).prop_map(|(k, t)| {
        let kind = ManipulationKind::ALL[k];
        let (lo, hi) = kind.legal_range();
        ManipulationSpec::new(kind, lo + t * (hi - lo)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn manipulations_stay_in_range(spec in spec_strategy(), seed in 0u64..1000, rgb in prop::bool::ANY) {
        let img = random_image(10, 12, if rgb { 3 } else { 1 }, seed);
        let out = manipulate(&img, &spec).unwrap();
        prop_assert!(out.in_pixel_range());
        prop_assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn resize_stays_in_range(seed in 0u64..1000, target in 8usize..40) {
        let out = resize(&random_image(16, 16, 3, seed), target).unwrap();
        prop_assert_eq!((out.height(), out.width()), (target, target));
        prop_assert!(out.in_pixel_range());
    }
}
