use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{usage, ExperimentError};
use crate::data::{
    bicubic_resize, from_network_range, hconcat, images_to_tensor, load_split, make_pair, scan_directory,
    synth_dataset, tensor_to_images, to_grayscale, to_network_range, write_manifest, CropPolicy, DatasetManifest,
    DatasetSource, Family, ImageBuffer, PairSpec, Split, Task,
};
use crate::metrics::{extractor_by_id, score_pair_sets, MetricsReport, MetricsRow};
use crate::nn::{load_checkpoint, Checkpoint, Network};
use crate::train::{train, ExperimentConfig, TrainOutcome};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
    pub side: usize,
    pub out: PathBuf,
    pub force: bool,
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), ExperimentError> {
    if dir.is_dir() && std::fs::read_dir(dir)?.next().is_some() {
        if !force {
            return Err(usage(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
        for entry in std::fs::read_dir(dir)? {
            let p = entry?.path();
            let ours = p.extension().is_some_and(|e| e == "png") || p.file_name().is_some_and(|n| n == MANIFEST_FILE);
            if ours && p.is_file() {
                std::fs::remove_file(p)?;
            }
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Held-out share matching 32 test images per 232.
fn split_counts(n: usize) -> (usize, usize) {
    let test = if n < 2 { 0 } else { ((n * 32 + 116) / 232).max(1) };
    (n - test, test)
}

/// Writes `n` PNGs of a synthetic family plus a manifest listing the split.
pub fn cmd_synth(opts: &SynthOptions) -> Result<DatasetManifest, ExperimentError> {
    if opts.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    prepare_out_dir(&opts.out, opts.force)?;
    let images = synth_dataset(opts.family, opts.n, opts.seed, opts.side)?;
    let mut names = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let name = format!("{:05}.png", i);
        img.save_png(&opts.out.join(&name))?;
        names.push(name);
    }
    let (train, test) = split_counts(opts.n);
    let manifest = DatasetManifest {
        name: opts.family.as_str().into(),
        source: DatasetSource::Directory { root: ".".into() },
        seed: opts.seed,
        side: opts.side,
        crop: CropPolicy::CenterResize,
        train,
        test,
        test_files: names.split_off(train),
        train_files: names,
    };
    write_manifest(&opts.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads a config, applies CLI overrides and trains.
pub fn cmd_train(
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    resume_from: Option<usize>,
) -> Result<TrainOutcome, ExperimentError> {
    if !config.is_file() {
        return Err(usage(format!("config file {} does not exist", config.display())));
    }
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
    Ok(train(&cfg, resume_from)?)
}

/// Pairing rule and training-set name stored in a generator checkpoint.
/// Checkpoints without a run context are treated as super-resolution at
/// their own scale.
pub fn checkpoint_context(ckpt: &Checkpoint) -> (PairSpec, String) {
    let ctx = ckpt.meta.context.as_ref();
    let pair = ctx
        .and_then(|c| serde_json::from_value::<PairSpec>(c["pair"].clone()).ok())
        .unwrap_or_else(|| {
            let task = if ckpt.meta.spec.input_channels == 1 { Task::Color } else { Task::Sr };
            PairSpec::new(task, ckpt.meta.spec.upscale_exponent)
        });
    let name = ctx
        .and_then(|c| c["dataset"].as_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("unknown")
        .to_string();
    (pair, name)
}

const INFER_CHUNK: usize = 8;

/// Runs the generator over `inputs`. A passthrough generator returns its
/// inputs untouched, so it reproduces them bit for bit.
pub fn generate(net: &Network, inputs: &[ImageBuffer]) -> Result<Vec<ImageBuffer>, ExperimentError> {
    let spec = net.spec();
    let side = spec.input_side();
    for img in inputs {
        if img.width() != side || img.height() != side {
            return Err(usage(format!(
                "input is {}x{} but the checkpoint expects {side}x{side}",
                img.width(),
                img.height()
            )));
        }
    }
    if spec.passthrough {
        return Ok(inputs.iter().map(|i| i.to_rgb()).collect());
    }
    let prepared: Vec<ImageBuffer> = inputs
        .iter()
        .map(|img| match (spec.input_channels, img.channels()) {
            (1, 3) => to_grayscale(img),
            (3, 1) => Ok(img.to_rgb()),
            _ => Ok(img.clone()),
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in prepared.chunks(INFER_CHUNK) {
        let refs: Vec<&ImageBuffer> = chunk.iter().collect();
        let x = to_network_range(&images_to_tensor(&refs)?);
        let y = net.infer(&x)?;
        out.extend(tensor_to_images(&from_network_range(&y))?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct InferSummary {
    pub outputs: Vec<PathBuf>,
    pub triptychs: Vec<PathBuf>,
}

/// Generates an output for every PNG in `input_dir`, plus a triptych
/// (input | target | output) per image. Targets are looked up by file name
/// in `target_dir` when given; the input panel is upscaled for display.
pub fn cmd_infer(
    checkpoint: &Path,
    input_dir: &Path,
    out_dir: &Path,
    target_dir: Option<&Path>,
) -> Result<InferSummary, ExperimentError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let files = scan_directory(input_dir)?;
    let inputs: Vec<ImageBuffer> = files.iter().map(|p| ImageBuffer::load_png(p)).collect::<Result<_, _>>()?;
    let outputs = generate(&ckpt.network, &inputs)?;
    std::fs::create_dir_all(out_dir)?;
    let mut summary = InferSummary {
        outputs: Vec::new(),
        triptychs: Vec::new(),
    };
    for ((path, input), output) in files.iter().zip(&inputs).zip(&outputs) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let out_path = out_dir.join(format!("{stem}.png"));
        output.save_png(&out_path)?;
        let mut panels = vec![bicubic_resize(input, output.width(), output.height())?];
        if let Some(dir) = target_dir {
            let t = dir.join(path.file_name().expect("scanned files have names"));
            if t.is_file() {
                panels.push(ImageBuffer::load_png(&t)?);
            }
        }
        panels.push(output.clone());
        let trip = out_dir.join(format!("{stem}_triptych.png"));
        hconcat(&panels)?.save_png(&trip)?;
        summary.outputs.push(out_path);
        summary.triptychs.push(trip);
    }
    Ok(summary)
}

pub const EVAL_CSV: &str = "eval.csv";

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub checkpoint: PathBuf,
    pub manifest: DatasetManifest,
    pub extractor: String,
    pub n: usize,
    pub seed: u64,
    /// Score the training split instead of the held-out one. Rows are
    /// labelled `<name>:train` so the leak is visible in every report.
    pub leakage: bool,
    /// Append the row to this CSV (created with a header if missing).
    pub append_to: Option<PathBuf>,
}

/// Runs a generator over `n` evaluation images and scores its outputs
/// against the targets.
pub fn eval_network(
    net: &Network,
    pair: &PairSpec,
    manifest: &DatasetManifest,
    split: Split,
    extractor: &str,
    n: usize,
) -> Result<crate::metrics::PairScores, ExperimentError> {
    let ex = extractor_by_id(extractor)?;
    let count = manifest.count(split);
    if n > count {
        return Err(usage(format!("n = {n} exceeds the {count} images of the split")));
    }
    let mut m = manifest.clone();
    match split {
        Split::Train => m.train = m.train.min(n.max(1)),
        Split::Test => {}
    }
    let targets: Vec<ImageBuffer> = load_split(&m, split)?.into_iter().take(n).collect();
    if targets.first().is_some_and(|t| t.width() != net.spec().image_side) {
        return Err(usage(format!(
            "dataset side {} does not match the checkpoint's {}",
            targets[0].width(),
            net.spec().image_side
        )));
    }
    let inputs: Vec<ImageBuffer> = targets
        .iter()
        .map(|t| make_pair(t, pair).map(|p| p.0))
        .collect::<Result<_, _>>()?;
    let outputs = generate(net, &inputs)?;
    Ok(score_pair_sets(&targets, &outputs, ex.as_ref(), n)?)
}

pub fn cmd_eval(opts: &EvalOptions) -> Result<MetricsRow, ExperimentError> {
    let ckpt = load_checkpoint(&opts.checkpoint)?;
    let (pair, train_set) = checkpoint_context(&ckpt);
    let split = if opts.leakage { Split::Train } else { Split::Test };
    let scores = eval_network(&ckpt.network, &pair, &opts.manifest, split, &opts.extractor, opts.n)?;
    let row = MetricsRow {
        train_set,
        eval_set: if opts.leakage {
            format!("{}:train", opts.manifest.name)
        } else {
            opts.manifest.name.clone()
        },
        psnr_db: scores.psnr_db,
        ssim: scores.ssim,
        fid: scores.fid,
        n: scores.n,
        extractor: opts.extractor.clone(),
        seed: opts.seed,
    };
    if let Some(path) = &opts.append_to {
        append_row(path, &row)?;
    }
    Ok(row)
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn append_row(path: &Path, row: &MetricsRow) -> Result<(), ExperimentError> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let text = MetricsReport { rows: vec![row.clone()] }.to_csv()?;
    let body = if fresh { text.as_str() } else { text.split_once('\n').map_or("", |(_, b)| b) };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}
