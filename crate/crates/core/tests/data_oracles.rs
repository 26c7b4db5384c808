mod common;

use common::{canny_oracle, keys, rng};
use rand::Rng;
use srgan_core::data::{
    bicubic_resize, canny_edges, from_network_range, images_to_tensor, load_split, make_pair, random_crop_offset,
    scan_directory, synth_image, tensor_to_images, to_grayscale, to_network_range, CannyParams, DatasetManifest,
    Family, ImageBuffer, PairSpec, Split, Task,
};

fn row_image(values: &[f32]) -> ImageBuffer {
    ImageBuffer::new(values.len(), 1, 1, values.to_vec()).unwrap()
}

#[test]
fn bicubic_upscale_of_impulse_traces_the_keys_kernel() {
    let mut v = vec![0.0f32; 16];
    v[8] = 1.0;
    let up = bicubic_resize(&row_image(&v), 64, 1).unwrap();
    for (i, &got) in up.data().iter().enumerate() {
        // Output centre i + 0.5 maps to source coordinate (i + 0.5) / 4.
        let want = keys(8.5 - (i as f64 + 0.5) / 4.0).clamp(0.0, 1.0);
        assert!((got as f64 - want).abs() < 1e-6, "i={i}: {got} vs {want}");
    }
}

#[test]
fn bicubic_downscale_uses_the_stretched_kernel() {
    let mut v = vec![0.0f32; 32];
    v[15] = 1.0;
    let down = bicubic_resize(&row_image(&v), 16, 1).unwrap();
    for (i, &got) in down.data().iter().enumerate() {
        let center = (i as f64 + 0.5) * 2.0;
        let norm: f64 = (-8..40).map(|j| keys((j as f64 + 0.5 - center) / 2.0)).sum();
        let want = (keys((15.5 - center) / 2.0) / norm).clamp(0.0, 1.0);
        assert!((got as f64 - want).abs() < 1e-6, "i={i}: {got} vs {want}");
    }
}

#[test]
fn random_crop_offsets_are_uniform() {
    // 130 → 128 admits offsets {0, 1, 2} on each axis: nine joint cells.
    let mut g = rng(2024);
    let mut counts = [0usize; 9];
    let draws = 10_000;
    for _ in 0..draws {
        let (x, y) = random_crop_offset(130, 130, 128, &mut g).unwrap();
        assert!(x <= 2 && y <= 2);
        counts[y * 3 + x] += 1;
    }
    let expected = draws as f64 / 9.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Critical value of chi-square with 8 degrees of freedom at p = 0.01.
    assert!(chi2 < 20.09, "chi2 = {chi2}, counts {counts:?}");
}

fn ramp_step(w: usize, h: usize, col: usize, lo: f32, hi: f32) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 1, |x, _, _| match x.cmp(&col) {
        std::cmp::Ordering::Less => lo,
        std::cmp::Ordering::Equal => (lo + hi) / 2.0,
        std::cmp::Ordering::Greater => hi,
    })
    .unwrap()
}

#[test]
fn canny_on_a_step_matches_the_reference_and_is_one_line() {
    let img = ramp_step(32, 24, 16, 0.1, 0.9);
    let p = CannyParams::default();
    let got = canny_edges(&img, p).unwrap();
    let want = canny_oracle(img.data(), 32, 24, p.sigma as f64, p.low as f64, p.high as f64);
    let got_u8: Vec<u8> = got.data().iter().map(|&v| v as u8).collect();
    assert_eq!(got_u8, want);
    for y in 0..24 {
        let cols: Vec<usize> = (0..32).filter(|&x| got.get(x, y, 0) == 1.0).collect();
        assert_eq!(cols, vec![16], "row {y}");
    }
}

#[test]
fn canny_on_a_hard_step_gives_a_single_one_pixel_line() {
    let img = ImageBuffer::from_fn(16, 16, 1, |x, _, _| if x < 8 { 0.0 } else { 1.0 }).unwrap();
    let p = CannyParams::default();
    let got = canny_edges(&img, p).unwrap();
    let want = canny_oracle(img.data(), 16, 16, 1.0, 0.1, 0.2);
    assert_eq!(got.data().iter().map(|&v| v as u8).collect::<Vec<_>>(), want);
    let line: Vec<usize> = (0..16).filter(|&x| got.get(x, 0, 0) == 1.0).collect();
    assert_eq!(line.len(), 1);
    for y in 0..16 {
        let cols: Vec<usize> = (0..16).filter(|&x| got.get(x, y, 0) == 1.0).collect();
        assert_eq!(cols, line, "row {y}");
    }
}

#[test]
fn canny_agrees_with_reference_on_synthetic_images() {
    for f in Family::MATRIX {
        let gray = to_grayscale(&synth_image(f, 3, 0, 48).unwrap()).unwrap();
        let p = CannyParams::default();
        let got = canny_edges(&gray, p).unwrap();
        let want = canny_oracle(gray.data(), 48, 48, 1.0, 0.1, 0.2);
        let agree = got.data().iter().zip(&want).filter(|(a, b)| **a as u8 == **b).count();
        // Float ties in suppression may flip a handful of pixels.
        assert!(agree as f64 >= 0.99 * want.len() as f64, "{f}: {agree}/{}", want.len());
        assert!(got.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}

#[test]
fn canny_ignores_steps_below_the_low_threshold() {
    let img = ramp_step(32, 16, 16, 0.40, 0.48);
    let e = canny_edges(&img, CannyParams::default()).unwrap();
    assert!(e.data().iter().all(|&v| v == 0.0));
}

#[test]
fn bicubic_round_trip_keeps_smooth_content_and_loses_noise() {
    let side = 128;
    let smooth = ImageBuffer::from_fn(side, side, 1, |x, y, _| {
        0.5 + 0.4 * ((x as f32 / 64.0) * std::f32::consts::TAU).sin() * ((y as f32 / 64.0) * std::f32::consts::TAU).cos()
    })
    .unwrap();
    let mut g = rng(1);
    let noise = ImageBuffer::from_fn(side, side, 1, |_, _, _| g.gen::<f32>()).unwrap();
    let rmse = |img: &ImageBuffer| {
        let back = bicubic_resize(&bicubic_resize(img, 32, 32).unwrap(), side, side).unwrap();
        let s: f64 = img.data().iter().zip(back.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
        (s / img.data().len() as f64).sqrt()
    };
    let (rs, rn) = (rmse(&smooth), rmse(&noise));
    assert!(rs < 0.02, "smooth {rs}");
    assert!(rn > 0.2, "noise {rn}");
}

#[test]
fn grayscale_matches_luma_formula() {
    let mut g = rng(4);
    let img = ImageBuffer::from_fn(9, 7, 3, |_, _, _| g.gen::<f32>()).unwrap();
    let gray = to_grayscale(&img).unwrap();
    for (p, &v) in img.data().chunks(3).zip(gray.data()) {
        let want = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
        assert!((v as f64 - want).abs() < 1e-6);
    }
}

#[test]
fn pairs_have_task_specific_inputs() {
    let target = synth_image(Family::Disks, 1, 0, 64).unwrap();
    let (i, t) = make_pair(&target, &PairSpec::new(Task::Sr, 2)).unwrap();
    assert_eq!((i.width(), i.height(), i.channels()), (16, 16, 3));
    assert_eq!(t, target);
    assert_eq!(i, bicubic_resize(&target, 16, 16).unwrap());
    let (i, _) = make_pair(&target, &PairSpec::new(Task::Color, 0)).unwrap();
    assert_eq!(i, to_grayscale(&target).unwrap());
    assert!(make_pair(&target, &PairSpec::new(Task::Color, 1)).is_err());
    let (i, _) = make_pair(&target, &PairSpec::new(Task::Edges, 0)).unwrap();
    assert_eq!(i.channels(), 1);
    assert!(i.data().iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(i.data().iter().any(|&v| v == 1.0));
    assert!(make_pair(&synth_image(Family::Disks, 1, 0, 40).unwrap(), &PairSpec::new(Task::Sr, 4)).is_err());
}

#[test]
fn tensor_packing_round_trips() {
    let imgs: Vec<ImageBuffer> = (0..3).map(|i| synth_image(Family::Stripes, 2, i, 16).unwrap()).collect();
    let refs: Vec<&ImageBuffer> = imgs.iter().collect();
    let t = images_to_tensor(&refs).unwrap();
    assert_eq!(t.shape(), &[3, 3, 16, 16]);
    assert_eq!(tensor_to_images(&t).unwrap(), imgs);
    let back = from_network_range(&to_network_range(&t));
    assert!(back.data().iter().zip(t.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    assert!(to_network_range(&t).data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
}

#[test]
fn synthetic_families_are_deterministic_per_index() {
    for f in Family::MATRIX {
        assert_eq!(synth_image(f, 5, 3, 32).unwrap(), synth_image(f, 5, 3, 32).unwrap());
        assert_ne!(synth_image(f, 5, 3, 32).unwrap(), synth_image(f, 5, 4, 32).unwrap());
    }
    let m = DatasetManifest::synthetic(Family::Blocks, 9).with_counts(3, 2).with_side(32);
    let train = load_split(&m, Split::Train).unwrap();
    let test = load_split(&m, Split::Test).unwrap();
    assert_eq!(train.len(), 3);
    assert_eq!(test[0], synth_image(Family::Blocks, 9, 3, 32).unwrap());
}

#[test]
fn directory_ingest_skips_foreign_and_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..4 {
        synth_image(Family::Disks, 1, i, 40).unwrap().save_png(&dir.path().join(format!("{i}.png"))).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "hello").unwrap();
    std::fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
    std::fs::create_dir(dir.path().join("nested.png")).unwrap();
    let files = scan_directory(dir.path()).unwrap();
    assert_eq!(files.len(), 5, "four images plus the broken file");
    let m = DatasetManifest::directory("d", dir.path(), 0).with_counts(3, 1).with_side(32);
    let train = load_split(&m, Split::Train).unwrap();
    let test = load_split(&m, Split::Test).unwrap();
    assert_eq!((train.len(), test.len()), (3, 1));
    assert!(train.iter().chain(&test).all(|i| i.width() == 32 && i.height() == 32));
    let empty = tempfile::tempdir().unwrap();
    assert!(scan_directory(empty.path()).is_err());
}
