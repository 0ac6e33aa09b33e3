// Expected values are the six-decimal literals, not library constants.
#![allow(clippy::approx_constant)]

mod common;

use common::*;
use frepgan::reduce::canonical_sum;
use frepgan::spectral::*;
use frepgan::{Error, ImageTensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;

#[test]
fn constant_image_has_only_dc() {
    let img = ImageTensor::filled(4, 4, 1, 1.0).unwrap();
    let f = forward_fft(&img).unwrap();
    assert!((f.coefficient(0, 0, 0).0 - 4.0).abs() < 1e-12);
    for u in 0..4 {
        for v in 0..4 {
            if (u, v) != (0, 0) {
                let (re, im) = f.coefficient(0, u, v);
                assert!(re.abs() < 1e-12 && im.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn impulse_has_flat_spectrum() {
    let img = ImageTensor::from_fn(4, 4, 1, |y, x, _| if y == 0 && x == 0 { 1.0 } else { 0.0 }).unwrap();
    let f = forward_fft(&img).unwrap();
    for u in 0..4 {
        for v in 0..4 {
            let (re, im) = f.coefficient(0, u, v);
            assert!(((re * re + im * im).sqrt() - 0.25).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_matches_brute_force_dft() {
    for (h, w, c, seed) in [(8, 8, 3, 1), (4, 6, 1, 2), (16, 16, 1, 3), (5, 7, 3, 4)] {
        let img = random_image(h, w, c, seed);
        let f = forward_fft(&img).unwrap();
        for k in 0..c {
            let oracle = brute_dft(img.plane(k), h, w);
            for u in 0..h {
                for v in 0..w {
                    let (re, im) = f.coefficient(k, u, v);
                    let (ore, oim) = oracle[u * w + v];
                    assert!((re - ore).abs() < 1e-9 && (im - oim).abs() < 1e-9, "{h}x{w} ({u},{v})");
                }
            }
        }
        let oracle_energy: f64 = (0..c)
            .flat_map(|k| brute_dft(img.plane(k), h, w))
            .map(|(a, b)| a * a + b * b)
            .sum();
        assert!(rel_err(f.energy(), oracle_energy) < 1e-6);
    }
}

#[test]
fn zero_map_inverts_to_zero() {
    let f = FrequencyMap::zeros(6, 6, 2).unwrap();
    let img = inverse_fft(&f).unwrap();
    assert!(img.data().iter().all(|&v| v == 0.0));
}

#[test]
fn odd_channel_count_rejected() {
    assert!(matches!(FrequencyMap::new(4, 4, 3, vec![0.0; 48]), Err(Error::Shape(_))));
}

#[test]
fn non_finite_image_rejected() {
    assert!(matches!(ImageTensor::new(2, 2, 1, vec![0.0, f64::NAN, 0.0, 0.0]), Err(Error::InvalidInput(_))));
}

#[test]
fn conjugate_pair_inverts_to_cosine() {
    let (h, w) = (8, 8);
    let mut f = FrequencyMap::zeros(h, w, 2).unwrap();
    f.set_coefficient(0, 0, 2, (1.5, 0.5));
    f.set_coefficient(0, 0, w - 2, (1.5, -0.5));
    let img = inverse_fft(&f).unwrap();
    let mut coeffs = vec![(0.0, 0.0); h * w];
    coeffs[2] = (1.5, 0.5);
    coeffs[w - 2] = (1.5, -0.5);
    let oracle = brute_idft(&coeffs, h, w);
    for i in 0..h * w {
        assert!((img.data()[i] - oracle[i].0).abs() < 1e-6);
        assert!(oracle[i].1.abs() < 1e-12);
    }
    // Constant along the height, periodic with 2 cycles along the width.
    for y in 0..h {
        for x in 0..w {
            assert!((img.get(y, x, 0) - img.get(0, x, 0)).abs() < 1e-12);
            assert!((img.get(y, x, 0) - img.get(y, (x + 4) % w, 0)).abs() < 1e-12);
        }
    }
}

#[test]
fn cosine_lands_in_bin_two() {
    let n = 16;
    let img = ImageTensor::from_fn(n, n, 1, |_, x, _| (2.0 * std::f64::consts::PI * 2.0 * x as f64 / n as f64).cos())
        .unwrap();
    let p = radial_power_spectrum(&img);
    let oracle = brute_radial_mean(&img);
    let (argmax, _) = p.power.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    assert_eq!(argmax, 2);
    for r in 0..p.power.len() {
        assert!((p.power[r] - oracle[r]).abs() < 1e-6, "bin {r}");
    }
}

#[test]
fn constant_image_profile_is_dc_only() {
    let p = radial_power_spectrum(&ImageTensor::filled(8, 8, 3, 0.4).unwrap());
    assert!(p.power[0] > 0.0);
    assert!(p.power[1..].iter().all(|&v| v.abs() < 1e-20));
}

#[test]
fn radial_profiles_match_brute_force() {
    for (h, w, c, seed) in [(8, 8, 1, 10), (16, 16, 3, 11), (12, 10, 1, 12), (16, 8, 3, 13)] {
        let img = random_image(h, w, c, seed);
        let p = radial_power_spectrum(&img);
        let oracle = brute_radial_mean(&img);
        for r in 0..oracle.len() {
            assert!((p.power[r] - oracle[r]).abs() < 1e-6, "{h}x{w} bin {r}");
        }
    }
}

#[test]
fn white_noise_profile_is_flat() {
    let mut r = rng(99);
    let images: Vec<ImageTensor> = (0..100)
        .map(|_| {
            let data = (0..32 * 32).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut r)).collect();
            ImageTensor::new(32, 32, 1, data).unwrap()
        })
        .collect();
    let p = mean_radial_profile(&images, RadialMode::Mean).unwrap();
    for r in 1..=p.max_radius() {
        assert!((p.power[r] - 1.0).abs() < 0.1, "bin {r}: {}", p.power[r]);
    }
}

#[test]
fn mean_spectrum_matches_brute_force_and_is_idempotent() {
    let img = random_image(8, 8, 3, 20);
    let single = mean_spectrum_2d(std::slice::from_ref(&img)).unwrap();
    let oracle = brute_centered_log_magnitude(&img);
    for i in 0..64 {
        assert!((single.values[i] - oracle[i]).abs() < 1e-6);
    }
    assert_eq!(single.values, log_magnitude_centered(&img));
    let twice = mean_spectrum_2d(&[img.clone(), img]).unwrap();
    assert_eq!(twice, single);
}

#[test]
fn mean_spectrum_errors() {
    assert!(matches!(mean_spectrum_2d(&[]), Err(Error::EmptyInput(_))));
    let a = ImageTensor::zeros(8, 8, 1).unwrap();
    let b = ImageTensor::zeros(8, 4, 1).unwrap();
    assert!(matches!(mean_spectrum_2d(&[a, b]), Err(Error::Shape(_))));
}

#[test]
fn checkerboard_corners_dominate_mean_spectrum() {
    use frepgan::data::{synthesize_toy_dataset, SyntheticArtifactSpec};
    let data = synthesize_toy_dataset(
        &SyntheticArtifactSpec::none(),
        &SyntheticArtifactSpec::checkerboard(2, 0.25),
        200,
        32,
        5,
    )
    .unwrap();
    let reals: Vec<_> = data.iter().filter(|s| s.label == 0).map(|s| s.image.clone()).collect();
    let fakes: Vec<_> = data.iter().filter(|s| s.label == 1).map(|s| s.image.clone()).collect();
    let (r, f) = (mean_spectrum_2d(&reals).unwrap(), mean_spectrum_2d(&fakes).unwrap());
    // The Nyquist frequency (16, 16) wraps to cell (0, 0) of the centred grid.
    assert!(f.get(0, 0) >= 5.0 * r.get(0, 0), "{} vs {}", f.get(0, 0), r.get(0, 0));
    // Corner band: the cells adjacent to the Nyquist cell stay comparable.
    let band_fake: f64 = [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&(y, x)| f.get(y, x)).sum();
    let band_real: f64 = [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&(y, x)| r.get(y, x)).sum();
    assert!(band_fake > band_real);
}

#[test]
fn gap_examples() {
    let a = RadialProfile { power: vec![1.0, 0.5, 0.25, 0.125], counts: vec![1, 8, 12, 16], mode: RadialMode::Mean };
    assert_eq!(spectral_gap(&a, &a, 0..=3).unwrap(), 0.0);
    let b = RadialProfile { power: a.power.iter().map(|p| p * 2f64.exp()).collect(), ..a.clone() };
    // The 1e-12 guard shifts the result slightly away from exactly 2.
    assert!((spectral_gap(&a, &b, 1..=3).unwrap() - 2.0).abs() < 1e-9);
    assert!((spectral_gap(&b, &a, 1..=3).unwrap() - 2.0).abs() < 1e-9);
    // Hand computation: |ln 1 − ln 2| = 0.693147, |ln 0.5 − ln 0.5| = 0,
    // |ln 0.25 − ln 0.0625| = ln 4 = 1.386294, |ln 0.125 − ln 1| = ln 8 = 2.079442.
    let c = RadialProfile { power: vec![2.0, 0.5, 0.0625, 1.0], ..a.clone() };
    let expected = (0.693147 + 0.0 + 1.386294 + 2.079442) / 4.0;
    assert!((spectral_gap(&a, &c, 0..=3).unwrap() - expected).abs() < 1e-6);
    assert!(matches!(spectral_gap(&a, &c, 2..=4), Err(Error::Range(_))));
}

#[test]
fn toy_profiles_gap_matches_hand_oracle() {
    // Four-bin profiles as produced by an 8x8 toy real/fake pair.
    let real = RadialProfile { power: vec![3.0, 0.2, 0.01, 0.001, 0.0005], counts: vec![1, 8, 12, 24, 19], mode: RadialMode::Mean };
    let fake = RadialProfile { power: vec![3.0, 0.2, 0.01, 0.002, 0.05], ..real.clone() };
    let band = top_quartile_band(4);
    assert_eq!(band, 3..=4);
    let hand = ((0.002f64 + 1e-12).ln() - (0.001f64 + 1e-12).ln()).abs() / 2.0
        + ((0.05f64 + 1e-12).ln() - (0.0005f64 + 1e-12).ln()).abs() / 2.0;
    assert!((spectral_gap(&real, &fake, band).unwrap() - hand).abs() < 1e-12);
    assert!(hand > 0.0);
}

#[test]
fn integrate_mode_conserves_energy() {
    let img = random_image(16, 12, 3, 30);
    let freq = forward_fft(&img).unwrap();
    let per_channel = freq.energy() / 3.0;
    let mean = radial_power_spectrum_with(&img, RadialMode::Mean);
    let total = radial_power_spectrum_with(&img, RadialMode::Integrate);
    assert!(rel_err(mean.total_energy(), per_channel) < 1e-5);
    assert!(rel_err(total.total_energy(), per_channel) < 1e-5);
}

#[test]
fn csv_and_grid_exports() {
    let img = random_image(8, 8, 1, 31);
    let p = radial_power_spectrum(&img);
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("radius,power"));
    assert_eq!(lines.count(), 5);

    let s = mean_spectrum_2d(std::slice::from_ref(&img)).unwrap();
    let mut buf = Vec::new();
    s.write_grid(&mut buf).unwrap();
    let grids = read_grids(buf.as_slice()).unwrap();
    assert_eq!(grids.len(), 1);
    assert_eq!((grids[0].0, grids[0].1), (8, 8));
    assert_eq!(grids[0].2, s.values);
}

fn image_strategy() -> impl Strategy<Value = ImageTensor> {
    (1usize..=12, 1usize..=12, prop::bool::ANY).prop_flat_map(|(h, w, rgb)| {
        let c = if rgb { 3 } else { 1 };
        prop::collection::vec(-1.0f64..=1.0, h * w * c).prop_map(move |d| ImageTensor::new(h, w, c, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roundtrip_parseval_hermitian(img in image_strategy()) {
        let f = forward_fft(&img).unwrap();
        let back = inverse_fft(&f).unwrap();
        prop_assert!(back.max_abs_diff(&img) < 1e-5);
        let energy = img.sum_squares();
        prop_assert!((f.energy() - energy).abs() <= 1e-6 * energy.max(1e-300));
        let (h, w) = (img.height(), img.width());
        for k in 0..img.channels() {
            for u in 0..h {
                for v in 0..w {
                    let (a, b) = f.coefficient(k, u, v);
                    let (c, d) = f.coefficient(k, (h - u) % h, (w - v) % w);
                    prop_assert!((a - c).abs() < 1e-5 && (b + d).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn linearity(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let x = random_image(6, 10, 3, seed);
        let y = random_image(6, 10, 3, seed + 7);
        let combo = ImageTensor::new(6, 10, 3, x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect()).unwrap();
        let (fx, fy, fc) = (forward_fft(&x).unwrap(), forward_fft(&y).unwrap(), forward_fft(&combo).unwrap());
        for i in 0..fc.data().len() {
            prop_assert!((fc.data()[i] - (alpha * fx.data()[i] + beta * fy.data()[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_spectrum_permutation_invariant(seed in 0u64..1000) {
        let images: Vec<_> = (0..7).map(|i| random_image(8, 8, 1, seed * 31 + i)).collect();
        let mut shuffled = images.clone();
        shuffled.shuffle(&mut rng(seed));
        prop_assert_eq!(mean_spectrum_2d(&images).unwrap(), mean_spectrum_2d(&shuffled).unwrap());
        prop_assert_eq!(
            mean_radial_profile(&images, RadialMode::Mean).unwrap(),
            mean_radial_profile(&shuffled, RadialMode::Mean).unwrap()
        );
    }

    #[test]
    fn canonical_sum_is_order_free(mut values in prop::collection::vec(-1e6f64..1e6, 0..40), seed in 0u64..100) {
        let a = canonical_sum(&values);
        values.shuffle(&mut rng(seed));
        prop_assert_eq!(a.to_bits(), canonical_sum(&values).to_bits());
    }

    #[test]
    fn profile_nonnegative_and_gap_symmetric(a in image_strategy(), seed in 0u64..100) {
        let pa = radial_power_spectrum(&a);
        prop_assert!(pa.power.iter().all(|&p| p >= 0.0));
        let b = random_image(a.height(), a.width(), a.channels(), seed);
        let pb = radial_power_spectrum(&b);
        let band = 0..=pa.max_radius();
        prop_assert_eq!(spectral_gap(&pa, &pb, band.clone()).unwrap(), spectral_gap(&pb, &pa, band).unwrap());
    }
}
