use euv_ilt::field::{
    blend_shift, conv2d, decode_pgm, diffraction_kernel, encode_pgm, fractional_shift,
    gaussian_blur, gaussian_kernel, gradient_l1, read_csv, read_pgm, write_csv, write_pgm,
    PgmFormat,
};
use euv_ilt::{Error, Field2D, Kernel2D};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const PX: f64 = 6.328;

fn random_field(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Field2D {
    Field2D::from_fn(w, h, PX, |_, _| rng.gen_range(-1.0..1.0))
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

fn brute_conv(f: &Field2D, k: &Kernel2D) -> Field2D {
    let r = (k.size() / 2) as isize;
    Field2D::from_fn(f.width(), f.height(), f.pixel_size_nm(), |row, col| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let sr = mirror(row as isize - dy, f.height());
                let sc = mirror(col as isize - dx, f.width());
                acc += k.at(dy, dx) * f.get(sr, sc);
            }
        }
        acc
    })
}

fn entropy(k: &Kernel2D) -> f64 {
    k.weights()
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| -w * w.ln())
        .sum()
}

#[test]
fn delta_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = random_field(9, 7, &mut rng);
    assert_eq!(conv2d(&f, &Kernel2D::delta(5).unwrap()).unwrap(), f);
}

#[test]
fn constant_survives_normalized_kernels() {
    let f = Field2D::filled(12, 12, PX, 0.37);
    for k in [
        gaussian_kernel(1.3).unwrap(),
        diffraction_kernel(7, PX, 13.5).unwrap(),
    ] {
        let out = conv2d(&f, &k).unwrap();
        for &v in out.values() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_field(5, 5, &mut rng);
    let k = Kernel2D::new(3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let got = conv2d(&f, &k).unwrap();
    let want = brute_conv(&f, &k);
    for (a, b) in got.values().iter().zip(want.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn conv_is_a_true_convolution() {
    // An asymmetric kernel applied to an impulse reproduces the kernel itself.
    let mut f = Field2D::zeros(7, 7, PX);
    f.set(3, 3, 1.0);
    let k = Kernel2D::new(3, (1..=9).map(f64::from).collect()).unwrap();
    let out = conv2d(&f, &k).unwrap();
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let v = out.get((3 + dy) as usize, (3 + dx) as usize);
            assert_eq!(v, k.at(dy, dx));
        }
    }
}

#[test]
fn oversized_kernel_is_a_dimension_error() {
    let f = Field2D::zeros(5, 5, PX);
    assert!(matches!(
        conv2d(&f, &gaussian_kernel(1.0).unwrap()),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn gaussian_center_weight() {
    let mut z = 0.0;
    for y in -3..=3 {
        for x in -3..=3 {
            z += (-((x * x + y * y) as f64) / 2.0).exp();
        }
    }
    let k = gaussian_kernel(1.0).unwrap();
    assert!((k.at(0, 0) - 1.0 / z).abs() < 1e-15);
    assert_eq!(k.size(), 7);
}

#[test]
fn gaussian_kernel_is_symmetric_and_normalized() {
    for s in [0.5, 0.9, 2.0, 3.5] {
        let k = gaussian_kernel(s).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-9);
        for y in -3..=3 {
            for x in -3..=3 {
                assert_eq!(k.at(y, x), k.at(-y, x));
                assert_eq!(k.at(y, x), k.at(y, -x));
            }
        }
    }
}

#[test]
fn wider_gaussian_has_more_entropy() {
    let narrow = gaussian_kernel(0.5).unwrap();
    let wide = gaussian_kernel(3.5).unwrap();
    assert!(entropy(&wide) > entropy(&narrow));
}

#[test]
fn gaussian_rejects_non_positive_sigma() {
    assert!(matches!(gaussian_kernel(0.0), Err(Error::Parameter(_))));
    assert!(matches!(gaussian_kernel(-1.0), Err(Error::Parameter(_))));
}

#[test]
fn diffraction_kernel_matches_scalar_evaluation() {
    let scale = PX / 13.5;
    let mut raw = Vec::new();
    for y in -3i32..=3 {
        for x in -3i32..=3 {
            let r = f64::from(x * x + y * y).sqrt() * scale;
            let s = if r == 0.0 {
                1.0
            } else {
                (PI * r).sin() / (PI * r)
            };
            raw.push(s * (-r * r / 4.0).exp());
        }
    }
    // Unnormalized center value is exactly one.
    assert_eq!(raw[24], 1.0);
    let z: f64 = raw.iter().sum();
    let k = diffraction_kernel(7, PX, 13.5).unwrap();
    for (got, want) in k.weights().iter().zip(&raw) {
        assert!((got - want / z).abs() < 1e-12);
    }
    assert!((k.sum() - 1.0).abs() < 1e-9);
    for y in -3..=3 {
        for x in -3..=3 {
            assert_eq!(k.at(y, x), k.at(x, y));
            assert_eq!(k.at(y, x), k.at(y, -x));
        }
    }
}

#[test]
fn gradient_l1_of_a_step_column() {
    let (w, h) = (10, 6);
    let f = Field2D::from_fn(w, h, PX, |_, c| if c >= 4 { 1.0 } else { 0.0 });
    // One unit jump per row in the x direction, nothing in y.
    assert_eq!(gradient_l1(&f), h as f64 / (w * h) as f64);
    assert_eq!(gradient_l1(&Field2D::filled(w, h, PX, 3.0)), 0.0);
}

#[test]
fn checkerboard_beats_any_step() {
    let n = 8;
    let checker = Field2D::from_fn(n, n, PX, |r, c| ((r + c) % 2) as f64);
    let g_checker = gradient_l1(&checker);
    for col in 1..n {
        let step = Field2D::from_fn(n, n, PX, |_, c| if c >= col { 1.0 } else { 0.0 });
        assert!(g_checker > gradient_l1(&step));
        let hstep = step.transpose();
        assert!(g_checker > gradient_l1(&hstep));
    }
}

#[test]
fn integer_and_half_shifts_of_an_impulse() {
    let mut f = Field2D::zeros(9, 5, PX);
    f.set(2, 4, 1.0);
    assert_eq!(fractional_shift(&f, 0.0), f);
    let one = fractional_shift(&f, 1.0);
    let mut want = Field2D::zeros(9, 5, PX);
    want.set(2, 5, 1.0);
    assert_eq!(one, want);
    let half = fractional_shift(&f, 0.5);
    assert_eq!(half.get(2, 4), 0.5);
    assert_eq!(half.get(2, 5), 0.5);
    assert_eq!(half.sum(), 1.0);
}

#[test]
fn negative_shift_moves_left() {
    let mut f = Field2D::zeros(9, 3, PX);
    f.set(1, 4, 1.0);
    let s = fractional_shift(&f, -1.25);
    assert!((s.get(1, 3) - 0.75).abs() < 1e-15);
    assert!((s.get(1, 2) - 0.25).abs() < 1e-15);
}

#[test]
fn shift_replicates_the_border_column() {
    let f = Field2D::from_fn(6, 2, PX, |_, c| c as f64);
    let s = fractional_shift(&f, 2.0);
    assert_eq!(s.row(0), &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
}

#[test]
fn blend_shift_weights() {
    let mut f = Field2D::zeros(8, 3, PX);
    f.set(1, 2, 1.0);
    assert_eq!(blend_shift(&f, 0.0, 0.8, 0.2), f);
    let out = blend_shift(&f, 1.0, 0.8, 0.2);
    assert_eq!(out.get(1, 2), 0.8);
    assert_eq!(out.get(1, 3), 0.2);
}

#[test]
fn blur_below_threshold_is_passthrough() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = random_field(10, 10, &mut rng);
    assert_eq!(gaussian_blur(&f, 0.55, 0.6).unwrap(), f);
    assert_ne!(gaussian_blur(&f, 0.65, 0.6).unwrap(), f);
}

#[test]
fn pgm_round_trips_within_quantization() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = Field2D::from_fn(13, 9, PX, |_, _| rng.gen_range(0.0..1.0));
    let dir = tempfile::tempdir().unwrap();
    for (fmt, name) in [(PgmFormat::Plain, "a.pgm"), (PgmFormat::Raw, "b.pgm")] {
        let path = dir.path().join(name);
        write_pgm(&path, &f, fmt).unwrap();
        let g = read_pgm(&path, PX).unwrap();
        assert_eq!((g.width(), g.height()), (13, 9));
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
    let binary = Field2D::from_fn(4, 4, PX, |r, c| ((r * c) % 2) as f64);
    let back = decode_pgm(&encode_pgm(&binary, PgmFormat::Raw), PX).unwrap();
    assert_eq!(back, binary);
}

#[test]
fn pgm_header_comments_are_skipped() {
    let text = b"P2\n# made by hand\n2 1\n65535\n0 65535\n";
    let f = decode_pgm(text, PX).unwrap();
    assert_eq!(f.values(), &[0.0, 1.0]);
}

#[test]
fn csv_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = Field2D::from_fn(7, 5, PX, |_, _| rng.gen::<f64>() * 1e3 - 500.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    write_csv(&path, &f).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("row,col,value\n"));
    assert!(!text.contains('\r'));
    assert_eq!(read_csv(&path, PX).unwrap(), f);
}

#[test]
fn field_rejects_bad_shapes() {
    assert!(matches!(
        Field2D::new(0, 3, PX, vec![]),
        Err(Error::Dimension(_))
    ));
    assert!(Field2D::new(2, 2, PX, vec![0.0; 3]).is_err());
    assert!(Field2D::new(1, 1, PX, vec![f64::NAN]).is_err());
}

fn bump(w: usize, h: usize, cx: f64, cy: f64, s: f64) -> Field2D {
    Field2D::from_fn(w, h, PX, |r, c| {
        let dx = c as f64 - cx;
        let dy = r as f64 - cy;
        (-(dx * dx + dy * dy) / (2.0 * s * s)).exp()
    })
}

/// Largest absolute second difference along x.
fn max_dxx(f: &Field2D) -> f64 {
    let mut m: f64 = 0.0;
    for r in 0..f.height() {
        let row = f.row(r);
        for c in 1..f.width() - 1 {
            m = m.max((row[c + 1] - 2.0 * row[c] + row[c - 1]).abs());
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(16, 16, &mut rng);
        let g = random_field(16, 16, &mut rng);
        let k = Kernel2D::new(5, (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let lhs = conv2d(&f.zip_map(&g, |x, y| a * x + b * y).unwrap(), &k).unwrap();
        let cf = conv2d(&f, &k).unwrap();
        let cg = conv2d(&g, &k).unwrap();
        let rhs = cf.zip_map(&cg, |x, y| a * x + b * y).unwrap();
        for (l, r) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_kernels_preserve_constants(v in -5.0f64..5.0, sigma in 0.5f64..3.5) {
        let f = Field2D::filled(11, 9, PX, v);
        let out = conv2d(&f, &gaussian_kernel(sigma).unwrap()).unwrap();
        for &o in out.values() {
            prop_assert!((o - v).abs() < 1e-12);
        }
    }

    #[test]
    fn shifts_compose_on_smooth_bumps(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        s in 2.0f64..4.0,
        cy in 8.0f64..16.0,
    ) {
        let f = bump(48, 24, 24.0, cy, s);
        let two = fractional_shift(&fractional_shift(&f, a), b);
        let one = fractional_shift(&f, a + b);
        let bound = 0.25 * max_dxx(&f);
        for (x, y) in two.values().iter().zip(one.values()) {
            prop_assert!((x - y).abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn gradient_l1_is_non_negative(seed in any::<u64>(), w in 2usize..12, h in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(w, h, &mut rng);
        prop_assert!(gradient_l1(&f) > 0.0);
        prop_assert_eq!(gradient_l1(&Field2D::filled(w, h, PX, f.get(0, 0))), 0.0);
    }
}
