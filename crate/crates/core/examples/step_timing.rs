//! Times training steps for a few network widths.
//!
//! `cargo run --release -p srgan-core --example step_timing -- <g_base> <d_base> <side> <u> [blocks]`

use std::time::Instant;

use srgan_core::data::{make_pair, synth_image, Family, PairSpec, SampleBatch, Task};
use srgan_core::nn::{Network, NetworkSpec};
use srgan_core::train::{train_step, AdamConfig, LossConfig, TrainState};
use srgan_core::metrics::{TinyConv, PERCEPTUAL_SEED};

fn main() {
    let a: Vec<usize> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let (gb, db, side, u) = (a[0], a[1], a[2], a[3] as u32);
    let blocks = a.get(4).copied().unwrap_or(8);
    let mut gs = NetworkSpec::generator(gb, u).with_side(side);
    gs.n_residual_blocks = blocks;
    let ds = NetworkSpec::discriminator(db).with_side(side);
    let g = Network::generator(&gs, 1).unwrap();
    let d = Network::discriminator(&ds, 2).unwrap();
    println!("G params {} D params {}", g.param_count(), d.param_count());
    let mut st = TrainState::new(g, d, AdamConfig::default());
    let spec = PairSpec::new(Task::Sr, u);
    let pairs: Vec<_> = (0..8).map(|i| make_pair(&synth_image(Family::Disks, 0, i, side).unwrap(), &spec).unwrap()).collect();
    let batch = SampleBatch::from_pairs(&pairs, &spec).unwrap();
    let net = TinyConv::new(PERCEPTUAL_SEED);
    let cfg = LossConfig::default();
    for i in 0..4 {
        let t = Instant::now();
        let l = train_step(&mut st, &batch, &cfg, Some(&net)).unwrap();
        println!("step {i}: {:.3}s {:?}", t.elapsed().as_secs_f64(), l);
    }
}
