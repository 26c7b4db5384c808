use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{content_loss, discriminator_loss, generator_adversarial_loss, perceptual_loss, LOG_FLOOR};
use super::{Adam, ConvergenceConfig, ExperimentConfig, LossConfig, TrainError};
use crate::archive::write_atomic;
use crate::autograd::{Gradients, Tape, Var};
use crate::data::{load_split, make_pair, to_network_range, ImageBuffer, PairSpec, SampleBatch, Split};
use crate::metrics::{fmt_float, TinyConv};
use crate::nn::{load_checkpoint, save_checkpoint, Bound, Checkpoint, Network};
use crate::tensor::ops::BnMode;
use crate::tensor::{Tensor, TensorError};

/// Loss components of one step. `total` is the weighted generator objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_content: f64,
    pub g_perceptual: f64,
    pub total: f64,
}

impl StepLosses {
    pub fn all_finite(&self) -> bool {
        [self.d_loss, self.g_adv, self.g_content, self.g_perceptual, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: StepLosses,
}

/// Diagnostics captured when a step produces a non-finite value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NanSnapshot {
    pub step: u64,
    pub phase: String,
    pub losses: StepLosses,
    pub grad_norm_g: f64,
    pub grad_norm_d: f64,
    pub detail: String,
}

/// Networks, optimizers and update counters.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub generator: Network,
    pub discriminator: Network,
    pub adam_g: Adam,
    pub adam_d: Adam,
    pub g_steps: u64,
    pub d_steps: u64,
}

impl TrainState {
    pub fn new(generator: Network, discriminator: Network, cfg: super::AdamConfig) -> Self {
        let adam_g = Adam::new(cfg, generator.params());
        let adam_d = Adam::new(cfg, discriminator.params());
        Self {
            generator,
            discriminator,
            adam_g,
            adam_d,
            g_steps: 0,
            d_steps: 0,
        }
    }
}

fn collect_grads(grads: &Gradients<f32>, bound: &Bound) -> Vec<Option<Tensor<f32>>> {
    bound.vars.iter().map(|v| grads.get(*v).cloned()).collect()
}

fn grad_norm(grads: &[Option<Tensor<f32>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.data().iter())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

fn scalar(tape: &Tape<f32>, v: Var) -> f64 {
    tape.value(v).data()[0] as f64
}

fn mean_log(scores: &[f32], f: impl Fn(f64) -> f64) -> f64 {
    -scores.iter().map(|&s| f(s as f64).max(LOG_FLOOR).ln()).sum::<f64>() / scores.len() as f64
}

fn non_finite(step: u64, phase: &str, losses: StepLosses, g: f64, d: f64, detail: String) -> TrainError {
    TrainError::NonFinite(Box::new(NanSnapshot {
        step,
        phase: phase.into(),
        losses,
        grad_norm_g: g,
        grad_norm_d: d,
        detail,
    }))
}

/// Turns tensor-level non-finite errors into a diagnosable abort.
fn lift(step: u64, phase: &'static str) -> impl Fn(TensorError) -> TrainError {
    move |e| match e {
        TensorError::NonFinite { op } => non_finite(step, phase, StepLosses::default(), f64::NAN, f64::NAN, op.into()),
        other => TrainError::Tensor(other),
    }
}

fn lift_nn(step: u64, phase: &'static str) -> impl Fn(crate::nn::NnError) -> TrainError {
    move |e| match e {
        crate::nn::NnError::Layer {
            layer,
            source: TensorError::NonFinite { op },
        } => non_finite(step, phase, StepLosses::default(), f64::NAN, f64::NAN, format!("{op} in {layer}")),
        other => TrainError::Nn(other),
    }
}

/// One discriminator update on real targets and detached fakes, then one
/// generator update with the discriminator frozen.
pub fn train_step(
    state: &mut TrainState,
    batch: &SampleBatch,
    loss: &LossConfig,
    perceptual: Option<&TinyConv>,
) -> Result<StepLosses, TrainError> {
    let step = state.g_steps + 1;
    let x = to_network_range(&batch.input);
    let y = to_network_range(&batch.target);

    // generator forward, kept on its tape for the later update
    let mut tg = Tape::<f32>::new();
    let xv = tg.constant(x);
    let yv = tg.constant(y.clone());
    let (fake, bound_g) = state
        .generator
        .forward_train(&mut tg, xv, true)
        .map_err(lift_nn(step, "generator forward"))?;
    let fake_value = tg.value(fake).clone();

    // discriminator update
    let mut td = Tape::<f32>::new();
    let bound_d = state.discriminator.bind(&mut td, true);
    let real_in = td.constant(y);
    let fake_in = td.constant(fake_value);
    let dr = state
        .discriminator
        .forward(&mut td, &bound_d, real_in, BnMode::Train)
        .map_err(lift_nn(step, "discriminator forward"))?;
    let df = state
        .discriminator
        .forward(&mut td, &bound_d, fake_in, BnMode::Train)
        .map_err(lift_nn(step, "discriminator forward"))?;
    let d_loss_v = discriminator_loss(&mut td, dr.output, df.output);
    let mut losses = StepLosses {
        d_loss: scalar(&td, d_loss_v),
        ..Default::default()
    };
    let d_grads = collect_grads(&td.backward(d_loss_v).map_err(lift(step, "discriminator backward"))?, &bound_d);
    let dn = grad_norm(&d_grads);
    if !losses.d_loss.is_finite() || !dn.is_finite() {
        return Err(non_finite(step, "discriminator update", losses, f64::NAN, dn, "loss or gradient".into()));
    }
    state.adam_d.step(state.discriminator.params_mut(), &d_grads);
    state.discriminator.commit_bn(&dr.bn_updates);
    state.discriminator.commit_bn(&df.bn_updates);
    state.d_steps += 1;
    let pre_update_fake_scores = td.value(df.output).data().to_vec();
    drop(td);

    // generator update against the freshly updated, frozen discriminator
    let content = content_loss(&mut tg, fake, yv, loss.content).map_err(lift(step, "content loss"))?;
    losses.g_content = scalar(&tg, content);
    let mut total = tg.scale(content, loss.content_weight as f32);
    if let Some(net) = perceptual.filter(|_| loss.perceptual_weight > 0.0) {
        let p = perceptual_loss(&mut tg, fake, yv, net).map_err(lift(step, "perceptual loss"))?;
        losses.g_perceptual = scalar(&tg, p);
        let w = tg.scale(p, loss.perceptual_weight as f32);
        total = tg.add(total, w)?;
    }
    if loss.adversarial_weight > 0.0 {
        let frozen = state.discriminator.bind(&mut tg, false);
        let scores = state
            .discriminator
            .forward(&mut tg, &frozen, fake, BnMode::Train)
            .map_err(lift_nn(step, "adversarial forward"))?;
        let adv = generator_adversarial_loss(&mut tg, scores.output);
        losses.g_adv = scalar(&tg, adv);
        let w = tg.scale(adv, loss.adversarial_weight as f32);
        total = tg.add(total, w)?;
    } else {
        losses.g_adv = mean_log(&pre_update_fake_scores, |s| s);
    }
    losses.total = scalar(&tg, total);
    let g_grads = collect_grads(&tg.backward(total).map_err(lift(step, "generator backward"))?, &bound_g);
    let gn = grad_norm(&g_grads);
    if !losses.all_finite() || !gn.is_finite() {
        return Err(non_finite(step, "generator update", losses, gn, dn, "loss or gradient".into()));
    }
    state.adam_g.step(state.generator.params_mut(), &g_grads);
    state.g_steps += 1;
    Ok(losses)
}

/// Outcome of the convergence check on a finished (or aborted) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ConvergenceStatus {
    Converged { initial: f64, last: f64 },
    NotConverged { initial: f64, last: f64 },
    Diverged { reason: String },
}

impl ConvergenceStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, ConvergenceStatus::Converged { .. })
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, ConvergenceStatus::Diverged { .. })
    }
}

/// Compares the mean content loss over the first and last windows of the
/// history.
pub fn assess_convergence(history: &[LossRecord], cfg: &ConvergenceConfig) -> ConvergenceStatus {
    if history.is_empty() {
        return ConvergenceStatus::NotConverged {
            initial: f64::NAN,
            last: f64::NAN,
        };
    }
    if let Some(r) = history.iter().find(|r| !r.losses.all_finite()) {
        return ConvergenceStatus::Diverged {
            reason: format!("non-finite loss at step {}", r.step),
        };
    }
    let w = ((history.len() as f64 * cfg.window).ceil() as usize).clamp(1, history.len());
    let mean = |s: &[LossRecord]| s.iter().map(|r| r.losses.g_content).sum::<f64>() / s.len() as f64;
    let initial = mean(&history[..w]);
    let last = mean(&history[history.len() - w..]);
    if last <= cfg.converge_ratio * initial {
        ConvergenceStatus::Converged { initial, last }
    } else if last >= cfg.diverge_ratio * initial {
        ConvergenceStatus::Diverged {
            reason: format!("content loss rose from {initial:.4} to {last:.4}"),
        }
    } else {
        ConvergenceStatus::NotConverged { initial, last }
    }
}

pub const LOSS_CSV_HEADER: &str = "step,epoch,d_loss,g_adv,g_content,g_perceptual,total";

pub fn history_to_csv(history: &[LossRecord]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for r in history {
        let l = &r.losses;
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step,
            r.epoch,
            fmt_float(l.d_loss),
            fmt_float(l.g_adv),
            fmt_float(l.g_content),
            fmt_float(l.g_perceptual),
            fmt_float(l.total)
        ));
    }
    s
}

pub fn history_from_csv(text: &str) -> Result<Vec<LossRecord>, TrainError> {
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_CSV_HEADER) {
        return Err(TrainError::Config("loss history has an unexpected header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || TrainError::Config(format!("loss history line {}: `{l}`", i + 2));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            Ok(LossRecord {
                step: f[0].parse().map_err(|_| bad())?,
                epoch: f[1].parse().map_err(|_| bad())?,
                losses: StepLosses {
                    d_loss: num(2)?,
                    g_adv: num(3)?,
                    g_content: num(4)?,
                    g_perceptual: num(5)?,
                    total: num(6)?,
                },
            })
        })
        .collect()
}

/// Summary of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<LossRecord>,
    pub status: ConvergenceStatus,
    pub generator: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub state: TrainState,
}

/// Seeds derived from the run seed so G and D never share a stream.
pub fn discriminator_seed(seed: u64) -> u64 {
    seed ^ 0xD15C_0000_0000_0001
}

pub fn checkpoint_paths(out: &Path, epoch: usize) -> (PathBuf, PathBuf) {
    let dir = out.join("checkpoints");
    (
        dir.join(format!("g_epoch{epoch:03}.srgb")),
        dir.join(format!("d_epoch{epoch:03}.srgb")),
    )
}

pub const FINAL_GENERATOR: &str = "generator.srgb";

/// Precomputed training pairs for a config.
pub fn training_pairs(cfg: &ExperimentConfig) -> Result<Vec<(ImageBuffer, ImageBuffer)>, TrainError> {
    let manifest = cfg.manifest()?;
    let spec = cfg.pair_spec();
    load_split(&manifest, Split::Train)?
        .iter()
        .map(|t| make_pair(t, &spec).map_err(TrainError::from))
        .collect()
}

/// Batches of one epoch as index lists. The order depends only on the data
/// seed and the epoch, so a resumed run replays the same sequence.
pub fn epoch_batches(n: usize, batch: usize, data_seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    rng.set_stream(epoch as u64);
    idx.shuffle(&mut rng);
    idx.chunks(batch).filter(|c| c.len() >= 2).map(|c| c.to_vec()).collect()
}

fn run_context(cfg: &ExperimentConfig, epoch: usize, state: &TrainState, t: u64, spec: &PairSpec) -> serde_json::Value {
    let dataset = cfg.manifest().map(|m| m.name).unwrap_or_default();
    serde_json::json!({
        "run": cfg.name,
        "dataset": dataset,
        "task": cfg.task,
        "pair": spec,
        "epoch": epoch,
        "g_steps": state.g_steps,
        "d_steps": state.d_steps,
        "adam_t": t,
    })
}

fn save_state(cfg: &ExperimentConfig, out: &Path, epoch: usize, state: &TrainState) -> Result<(PathBuf, PathBuf), TrainError> {
    let (gp, dp) = checkpoint_paths(out, epoch);
    let spec = cfg.pair_spec();
    let mut g = Checkpoint::new(state.generator.clone(), state.g_steps, cfg.seed);
    g.meta.context = Some(run_context(cfg, epoch, state, state.adam_g.t, &spec));
    g.extra = state.adam_g.to_extra(state.generator.params());
    let mut d = Checkpoint::new(state.discriminator.clone(), state.d_steps, discriminator_seed(cfg.seed));
    d.meta.context = Some(run_context(cfg, epoch, state, state.adam_d.t, &spec));
    d.extra = state.adam_d.to_extra(state.discriminator.params());
    save_checkpoint(&g, &gp)?;
    save_checkpoint(&d, &dp)?;
    Ok((gp, dp))
}

fn load_state(cfg: &ExperimentConfig, out: &Path, epoch: usize) -> Result<TrainState, TrainError> {
    let (gp, dp) = checkpoint_paths(out, epoch);
    let g = load_checkpoint(&gp)?;
    let d = load_checkpoint(&dp)?;
    let t_of = |c: &Checkpoint| {
        c.meta
            .context
            .as_ref()
            .and_then(|v| v["adam_t"].as_u64())
            .ok_or_else(|| TrainError::Config("checkpoint lacks optimizer step".into()))
    };
    let adam_g = Adam::from_extra(cfg.optimizer, t_of(&g)?, g.network.params(), &g.extra)?;
    let adam_d = Adam::from_extra(cfg.optimizer, t_of(&d)?, d.network.params(), &d.extra)?;
    Ok(TrainState {
        g_steps: g.meta.step,
        d_steps: d.meta.step,
        generator: g.network,
        discriminator: d.network,
        adam_g,
        adam_d,
    })
}

/// Runs (or resumes after epoch `resume_from`) a full training. Every epoch
/// writes G and D checkpoints plus the loss CSV; a non-finite step writes
/// `nan_snapshot.json` and aborts.
pub fn train(cfg: &ExperimentConfig, resume_from: Option<usize>) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(out.join("checkpoints"))?;
    let manifest = cfg.manifest()?;
    let side = manifest.side;
    let pairs = training_pairs(cfg)?;
    let pair_spec = cfg.pair_spec();
    let perceptual = cfg.loss.perceptual_net()?;

    let (mut state, mut history, first_epoch) = match resume_from {
        Some(k) if k >= 1 => {
            let state = load_state(cfg, &out, k)?;
            let text = std::fs::read_to_string(out.join("losses.csv"))?;
            let mut h = history_from_csv(&text)?;
            h.retain(|r| r.epoch <= k);
            if h.last().map(|r| r.step) != Some(state.g_steps) {
                return Err(TrainError::Config(format!(
                    "loss history does not line up with the epoch-{k} checkpoint"
                )));
            }
            (state, h, k + 1)
        }
        _ => {
            let g = Network::generator(&cfg.generator_spec(side), cfg.seed)?;
            let d = Network::discriminator(&cfg.discriminator_spec(side), discriminator_seed(cfg.seed))?;
            (TrainState::new(g, d, cfg.optimizer), Vec::new(), 1)
        }
    };
    std::fs::write(out.join("config.json"), cfg.to_json() + "\n")?;

    let mut checkpoints = Vec::new();
    for epoch in first_epoch..=cfg.epochs {
        for idx in epoch_batches(pairs.len(), cfg.batch_size, cfg.data_seed(), epoch) {
            let chosen: Vec<(ImageBuffer, ImageBuffer)> = idx.iter().map(|&i| pairs[i].clone()).collect();
            let batch = SampleBatch::from_pairs(&chosen, &pair_spec)?;
            match train_step(&mut state, &batch, &cfg.loss, perceptual.as_ref()) {
                Ok(losses) => history.push(LossRecord {
                    step: state.g_steps,
                    epoch,
                    losses,
                }),
                Err(TrainError::NonFinite(snap)) => {
                    let text = serde_json::to_string_pretty(&*snap).unwrap_or_default();
                    std::fs::write(out.join("nan_snapshot.json"), text + "\n")?;
                    write_atomic(&out.join("losses.csv"), history_to_csv(&history).as_bytes())?;
                    return Err(TrainError::NonFinite(snap));
                }
                Err(e) => return Err(e),
            }
            debug_assert_eq!(state.g_steps, state.d_steps);
        }
        let (gp, dp) = save_state(cfg, &out, epoch, &state)?;
        write_atomic(&out.join("losses.csv"), history_to_csv(&history).as_bytes())?;
        log::info!(
            "{}: epoch {epoch}/{} done, content {:.4}",
            cfg.name,
            cfg.epochs,
            history.last().map_or(f64::NAN, |r| r.losses.g_content)
        );
        checkpoints.push(gp);
        checkpoints.push(dp);
    }

    let (last_g, _) = checkpoint_paths(&out, cfg.epochs);
    let final_g = out.join(FINAL_GENERATOR);
    std::fs::copy(&last_g, &final_g)?;
    let status = assess_convergence(&history, &cfg.convergence);
    let run_manifest = serde_json::json!({
        "name": cfg.name,
        "config": cfg,
        "producer": "single",
        "generator_params": state.generator.param_count(),
        "discriminator_params": state.discriminator.param_count(),
        "g_steps": state.g_steps,
        "d_steps": state.d_steps,
        "training_pairs": pairs.len(),
        "convergence": status,
        "final_losses": history.last().map(|r| r.losses),
    });
    std::fs::write(
        out.join("run_manifest.json"),
        serde_json::to_string_pretty(&run_manifest).expect("serializable") + "\n",
    )?;
    Ok(TrainOutcome {
        history,
        status,
        generator: final_g,
        checkpoints,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, c: f64) -> LossRecord {
        LossRecord {
            step,
            epoch: 1,
            losses: StepLosses {
                g_content: c,
                total: c,
                ..Default::default()
            },
        }
    }

    #[test]
    fn convergence_classes() {
        let cfg = ConvergenceConfig::default();
        let down: Vec<_> = (0..20).map(|i| rec(i, 10.0 - i as f64 * 0.45)).collect();
        assert!(assess_convergence(&down, &cfg).is_converged());
        let up: Vec<_> = (0..20).map(|i| rec(i, 1.0 + i as f64)).collect();
        assert!(assess_convergence(&up, &cfg).is_diverged());
        let flat: Vec<_> = (0..20).map(|i| rec(i, 5.0 - 0.01 * i as f64)).collect();
        assert!(matches!(assess_convergence(&flat, &cfg), ConvergenceStatus::NotConverged { .. }));
        let mut nan = flat.clone();
        nan[7].losses.d_loss = f64::NAN;
        assert!(assess_convergence(&nan, &cfg).is_diverged());
    }

    #[test]
    fn loss_csv_round_trip() {
        let h = vec![rec(1, 3.5), rec(2, 1.0 / 3.0)];
        let text = history_to_csv(&h);
        assert!(text.starts_with("step,epoch,d_loss,g_adv,g_content,g_perceptual,total\n"));
        assert_eq!(history_from_csv(&text).unwrap(), h);
    }

    #[test]
    fn epoch_order_depends_on_seed_and_epoch() {
        let a = epoch_batches(20, 8, 1, 1);
        assert_eq!(a, epoch_batches(20, 8, 1, 1));
        assert_ne!(a, epoch_batches(20, 8, 1, 2));
        assert_eq!(a.len(), 3);
        assert_eq!(epoch_batches(17, 8, 1, 1).len(), 2);
    }
}
