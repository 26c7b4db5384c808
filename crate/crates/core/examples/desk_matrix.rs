//! Runs the desk-scale 3×3 cross-family matrix and prints the FID grid.
//!
//! cargo run --release -p srgan-core --example desk_matrix -- OUT_DIR [SIDE] [EPOCHS]

use std::path::PathBuf;

use srgan_core::data::{DatasetManifest, Family, Task};
use srgan_core::experiment::{cmd_matrix, MatrixConfig};
use srgan_core::train::{DatasetRef, ExperimentConfig};

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let out = PathBuf::from(args.get(1).map_or("desk_matrix_out", |s| s.as_str()));
    let side: usize = args.get(2).map_or(128, |s| s.parse().expect("side"));
    let epochs: usize = args.get(3).map_or(10, |s| s.parse().expect("epochs"));
    let manifest = |f: Family| DatasetManifest::synthetic(f, 7).with_counts(200, 32).with_side(side);
    let runs = Family::MATRIX
        .iter()
        .map(|&f| {
            let mut c = ExperimentConfig::new(f.as_str(), Task::Sr, 2, manifest(f), PathBuf::new());
            c.generator.base_channels = 16;
            c.discriminator.base_channels = 16;
            c.epochs = epochs;
            c.seed = 1;
            c
        })
        .collect();
    let cfg = MatrixConfig {
        runs,
        eval: Family::MATRIX.iter().map(|&f| DatasetRef::Inline(manifest(f))).collect(),
        extractor: "tinyconv".into(),
        n: 32,
        seed: 0,
        output_dir: out,
    };
    let t = std::time::Instant::now();
    let result = cmd_matrix(&cfg).expect("matrix");
    for (i, row) in result.cells.iter().enumerate() {
        let fids: Vec<String> = row.iter().map(|c| format!("{:9.4}", c.as_ref().unwrap().fid)).collect();
        let psnr: Vec<String> = row.iter().map(|c| format!("{:7.3}", c.as_ref().unwrap().psnr_db)).collect();
        println!("{:8} fid {}  psnr {}", result.train_sets[i], fids.join(" "), psnr.join(" "));
    }
    for c in result.column_checks() {
        println!("{:8} diag {:.4} best-off {:.4} margin {:+.3}", c.eval_set, c.diagonal_fid, c.best_off_diagonal_fid, c.margin);
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
}
