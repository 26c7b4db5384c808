mod common;

use common::{adam_scalar, rng, uniform_vec};
use srgan_core::data::{make_pair, synth_dataset, DatasetManifest, Family, PairSpec, SampleBatch, Task};
use srgan_core::gradcheck::grad_check;
use srgan_core::metrics::{TinyConv, PERCEPTUAL_SEED};
use srgan_core::nn::{Bound, Network, NetworkSpec};
use srgan_core::tensor::ops::BnMode;
use srgan_core::train::{
    adam_update, adversarial_losses, content_loss, discriminator_loss, generator_adversarial_loss, perceptual_loss,
    train, train_step, AdamConfig, ContentKind, ExperimentConfig, LossConfig, TrainState,
};
use srgan_core::{Tape, Tensor};

fn t64(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, uniform_vec(&mut rng(seed), n, -1.0, 1.0)).unwrap()
}

#[test]
fn adam_matches_scalar_reference_on_a_parabola() {
    let cfg = AdamConfig::default().with_lr(0.05);
    let want = adam_scalar(1.0, |x| 2.0 * x, 10, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let (mut x, mut m, mut v) = ([1.0f64], [0.0f64], [0.0f64]);
    for (t, w) in want.iter().enumerate() {
        let g = [2.0 * x[0]];
        adam_update(&mut x, &g, &mut m, &mut v, t as u64 + 1, &cfg);
        assert!((x[0] - w).abs() < 1e-7, "step {}: {} vs {w}", t + 1, x[0]);
    }
}

#[test]
fn content_loss_matches_pixel_loop() {
    let (gen, target) = (t64(&[2, 3, 5, 4], 1), t64(&[2, 3, 5, 4], 2));
    for kind in [ContentKind::L1, ContentKind::L2] {
        let mut tape = Tape::<f64>::new();
        let (g, t) = (tape.constant(gen.clone()), tape.constant(target.clone()));
        let l = content_loss(&mut tape, g, t, kind).unwrap();
        let got = tape.value(l).data()[0];
        let mut per_image = [0.0f64; 2];
        for n in 0..2 {
            for c in 0..3 {
                for y in 0..5 {
                    for x in 0..4 {
                        let i = ((n * 3 + c) * 5 + y) * 4 + x;
                        let d = gen.data()[i] - target.data()[i];
                        per_image[n] += if kind == ContentKind::L1 { d.abs() } else { d * d };
                    }
                }
            }
        }
        let want = (per_image[0] + per_image[1]) / 2.0;
        assert!((got - want).abs() <= 1e-4 * want.abs(), "{kind:?}: {got} vs {want}");
    }
}

#[test]
fn content_loss_of_unit_difference_is_pixel_count() {
    let mut tape = Tape::<f32>::new();
    let g = tape.constant(Tensor::full(&[1, 3, 6, 5], 1.0).unwrap());
    let t = tape.constant(Tensor::zeros(&[1, 3, 6, 5]).unwrap());
    for kind in [ContentKind::L1, ContentKind::L2] {
        let l = content_loss(&mut tape, g, t, kind).unwrap();
        assert_eq!(tape.value(l).data()[0], 90.0);
    }
}

#[test]
fn perceptual_loss_gradient_matches_finite_differences() {
    let net = TinyConv::new(PERCEPTUAL_SEED);
    let target = t64(&[1, 3, 8, 8], 3);
    let gen = t64(&[1, 3, 8, 8], 4);
    let err = grad_check(
        |tape, v| {
            let t = tape.constant(target.clone());
            perceptual_loss(tape, v[0], t, &net)
        },
        &[gen],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-2, "{err}");
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(target.clone());
    let b = tape.constant(target);
    let l = perceptual_loss(&mut tape, a, b, &net).unwrap();
    assert_eq!(tape.value(l).data()[0], 0.0);
}

#[test]
fn adversarial_losses_closed_forms() {
    let (d, g) = adversarial_losses(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
    assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert!((g - 2f64.ln()).abs() < 1e-12);
    let (d, _) = adversarial_losses(&[1.0], &[0.0]).unwrap();
    assert!(d.abs() < 1e-12);
    let mut last = f64::INFINITY;
    for i in 1..100 {
        let (_, g) = adversarial_losses(&[0.5], &[i as f64 / 100.0]).unwrap();
        assert!(g < last);
        last = g;
    }
    assert!(adversarial_losses(&[1.2], &[0.5]).is_err());
    // Tape form agrees with the plain-number form.
    let mut tape = Tape::<f64>::new();
    let r = tape.constant(Tensor::new(&[2, 1], vec![0.8, 0.6]).unwrap());
    let f = tape.constant(Tensor::new(&[2, 1], vec![0.3, 0.1]).unwrap());
    let dl = discriminator_loss(&mut tape, r, f);
    let gl = generator_adversarial_loss(&mut tape, f);
    let (d, g) = adversarial_losses(&[0.8, 0.6], &[0.3, 0.1]).unwrap();
    assert!((tape.value(dl).data()[0] - d).abs() < 1e-12);
    assert!((tape.value(gl).data()[0] - g).abs() < 1e-12);
}

fn tiny_nets(u: u32, side: usize, seed: u64) -> (Network, Network) {
    let g = Network::generator(
        &NetworkSpec { n_residual_blocks: 1, ..NetworkSpec::generator(2, u).with_side(side) },
        seed,
    )
    .unwrap();
    let d = Network::discriminator(&NetworkSpec { head_width: 4, ..NetworkSpec::discriminator(1).with_side(side) }, seed + 1)
        .unwrap();
    (g, d)
}

#[test]
fn full_generator_loss_gradient_matches_finite_differences() {
    let (g, d) = tiny_nets(1, 16, 5);
    let net = TinyConv::new(PERCEPTUAL_SEED);
    let x = t64(&[2, 3, 8, 8], 6);
    let y = t64(&[2, 3, 16, 16], 7);
    let params: Vec<Tensor<f64>> = g.params().iter().map(|p| p.value.cast()).collect();
    let err = grad_check(
        |tape, vars| {
            let bound = Bound { vars: vars.to_vec() };
            let xv = tape.constant(x.clone());
            let yv = tape.constant(y.clone());
            let fake = g.forward(tape, &bound, xv, BnMode::Train).map_err(|e| match e {
                srgan_core::nn::NnError::Layer { source, .. } => source,
                other => panic!("{other}"),
            })?;
            let c = content_loss(tape, fake.output, yv, ContentKind::L2)?;
            let p = perceptual_loss(tape, fake.output, yv, &net)?;
            let frozen = d.bind(tape, false);
            let s = d.forward(tape, &frozen, fake.output, BnMode::Train).unwrap();
            let a = generator_adversarial_loss(tape, s.output);
            let a = tape.scale(a, 1e-3);
            let cp = tape.add(c, p)?;
            tape.add(cp, a)
        },
        &params,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-2, "composed generator loss: {err}");
}

fn batch(family: Family, n: usize, side: usize, u: u32, seed: u64) -> SampleBatch {
    let spec = PairSpec::new(Task::Sr, u);
    let pairs: Vec<_> = synth_dataset(family, n, seed, side).unwrap().iter().map(|t| make_pair(t, &spec).unwrap()).collect();
    SampleBatch::from_pairs(&pairs, &spec).unwrap()
}

fn flat(net: &Network) -> Vec<f32> {
    net.params().iter().flat_map(|p| p.value.data().to_vec()).collect()
}

#[test]
fn step_keeps_counters_equal_and_recomposes_the_total() {
    let (g, d) = tiny_nets(1, 16, 1);
    let mut state = TrainState::new(g, d, AdamConfig::default());
    let b = batch(Family::Disks, 2, 16, 1, 3);
    let loss = LossConfig { content_weight: 0.7, perceptual_weight: 0.4, adversarial_weight: 0.05, ..LossConfig::default() };
    let net = loss.perceptual_net().unwrap();
    for k in 1..=3 {
        let l = train_step(&mut state, &b, &loss, net.as_ref()).unwrap();
        assert_eq!((state.g_steps, state.d_steps), (k, k));
        assert_eq!(state.adam_g.t, state.adam_d.t);
        assert!(l.d_loss >= 0.0 && l.g_adv >= 0.0 && l.g_content >= 0.0 && l.g_perceptual >= 0.0);
        let recomposed = 0.7 * l.g_content + 0.4 * l.g_perceptual + 0.05 * l.g_adv;
        assert!((recomposed - l.total).abs() <= 1e-5 * l.total.abs().max(1.0), "{recomposed} vs {}", l.total);
    }
}

#[test]
fn discriminator_update_leaves_generator_untouched() {
    let (g, d) = tiny_nets(1, 16, 2);
    let mut state = TrainState::new(g, d, AdamConfig::default());
    state.adam_g.cfg.lr = 0.0;
    let (g0, d0) = (flat(&state.generator), flat(&state.discriminator));
    let b = batch(Family::Stripes, 2, 16, 1, 4);
    train_step(&mut state, &b, &LossConfig::default(), None).unwrap();
    assert_eq!(flat(&state.generator), g0, "generator bits changed by the discriminator update");
    assert_ne!(flat(&state.discriminator), d0);
}

#[test]
fn adversarial_gradient_reaches_the_generator_through_a_frozen_discriminator() {
    let (g, d) = tiny_nets(1, 16, 3);
    let mut state = TrainState::new(g, d, AdamConfig::default());
    state.adam_d.cfg.lr = 0.0;
    let (g0, d0) = (flat(&state.generator), flat(&state.discriminator));
    let adv_only = LossConfig { content_weight: 0.0, perceptual_weight: 0.0, adversarial_weight: 1.0, ..LossConfig::default() };
    train_step(&mut state, &batch(Family::Blocks, 2, 16, 1, 5), &adv_only, None).unwrap();
    assert_eq!(flat(&state.discriminator), d0, "generator update wrote to the discriminator");
    let g1 = flat(&state.generator);
    let moved = g0.iter().zip(&g1).filter(|(a, b)| a != b).count();
    assert!(moved > g0.len() / 2, "only {moved} of {} generator values moved", g0.len());
}

#[test]
fn scaling_all_weights_preserves_first_step_directions() {
    let b = batch(Family::Disks, 2, 16, 1, 6);
    let base = LossConfig { content_weight: 1.0, perceptual_weight: 0.5, adversarial_weight: 1e-2, ..LossConfig::default() };
    let net = base.perceptual_net().unwrap();
    let deltas = |scale: f64| {
        let (g, d) = tiny_nets(1, 16, 8);
        let g0 = flat(&g);
        let mut state = TrainState::new(g, d, AdamConfig::default());
        let cfg = LossConfig {
            content_weight: base.content_weight * scale,
            perceptual_weight: base.perceptual_weight * scale,
            adversarial_weight: base.adversarial_weight * scale,
            ..base.clone()
        };
        train_step(&mut state, &b, &cfg, net.as_ref()).unwrap();
        let g1 = &state.generator;
        // A conv bias feeding batch normalization has an exactly zero true
        // gradient (the mean is subtracted), so its sign is rounding noise.
        let mut out = Vec::new();
        let mut offset = 0;
        for p in g1.params() {
            let n = p.value.numel();
            if !(p.name.ends_with(".bias") && p.name != "tail.conv.bias") {
                out.extend(p.value.data().iter().zip(&g0[offset..offset + n]).map(|(a, b)| (p.name.clone(), a - b)));
            }
            offset += n;
        }
        out
    };
    let (a, b) = (deltas(1.0), deltas(37.0));
    assert!(a.len() > 100);
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        assert!(x.signum() == y.signum() || (*x == 0.0 && *y == 0.0), "{name}: {x} vs {y}");
    }
}

#[test]
fn content_only_overfits_a_single_batch() {
    let (g, d) = tiny_nets(1, 16, 4);
    let mut state = TrainState::new(g, d, AdamConfig::default().with_lr(1e-2));
    let b = batch(Family::Disks, 2, 16, 1, 7);
    let loss = LossConfig::content_only(ContentKind::L2);
    let first = train_step(&mut state, &b, &loss, None).unwrap().g_content;
    let mut last = first;
    for _ in 1..200 {
        last = train_step(&mut state, &b, &loss, None).unwrap().g_content;
    }
    assert!(last < 0.1 * first, "{last} vs {first}");
}

fn tiny_run(dir: &std::path::Path, task: Task, u: u32, family: Family, epochs: usize) -> ExperimentConfig {
    let ds = DatasetManifest::synthetic(family, 11).with_counts(12, 4).with_side(32);
    let mut cfg = ExperimentConfig::new("tiny", task, u, ds, dir);
    cfg.generator.base_channels = 4;
    cfg.generator.n_residual_blocks = 1;
    cfg.discriminator.base_channels = 2;
    cfg.discriminator.head_width = 8;
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.optimizer = AdamConfig::default().with_lr(2e-3);
    cfg.seed = 3;
    cfg
}

#[test]
fn identical_runs_and_resumed_runs_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = tiny_run(&root.path().join(name), Task::Sr, 1, Family::Blocks, 3);
        train(&cfg, None).unwrap();
        cfg
    };
    let a = run("a");
    run("b");
    let read = |n: &str, f: &str| std::fs::read(root.path().join(n).join(f)).unwrap();
    assert_eq!(read("a", "generator.srgb"), read("b", "generator.srgb"));
    assert_eq!(read("a", "losses.csv"), read("b", "losses.csv"));
    assert_eq!(read("a", "checkpoints/d_epoch003.srgb"), read("b", "checkpoints/d_epoch003.srgb"));

    // Resume from epoch 1 of a copy and finish: same bytes as the straight run.
    let c_dir = root.path().join("c");
    std::fs::create_dir_all(c_dir.join("checkpoints")).unwrap();
    for f in ["checkpoints/g_epoch001.srgb", "checkpoints/d_epoch001.srgb"] {
        std::fs::copy(root.path().join("a").join(f), c_dir.join(f)).unwrap();
    }
    let csv = String::from_utf8(read("a", "losses.csv")).unwrap();
    let first_epoch: String = csv.lines().filter(|l| !l.contains(",2,") && !l.contains(",3,")).map(|l| format!("{l}\n")).collect();
    std::fs::write(c_dir.join("losses.csv"), first_epoch).unwrap();
    let mut c = a.clone();
    c.output_dir = c_dir;
    train(&c, Some(1)).unwrap();
    assert_eq!(read("a", "generator.srgb"), read("c", "generator.srgb"));
    assert_eq!(read("a", "losses.csv"), read("c", "losses.csv"));
}

#[test]
fn edges_u0_on_blocks_converges() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = tiny_run(root.path(), Task::Edges, 0, Family::Blocks, 12);
    cfg.loss.adversarial_weight = 1e-3;
    let out = train(&cfg, None).unwrap();
    assert!(out.status.is_converged(), "{:?}", out.status);
}
