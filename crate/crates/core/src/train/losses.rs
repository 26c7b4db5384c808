use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autograd::{Tape, Var};
use crate::metrics::{extractor_by_id, TinyConv, PERCEPTUAL_SEED};
use crate::tensor::{Scalar, TensorError};

/// Scores below this are clamped before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    L1,
    L2,
}

pub const PERCEPTUAL_NET: &str = "tinyconv-perceptual";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(default = "default_content")]
    pub content: ContentKind,
    #[serde(default = "one")]
    pub content_weight: f64,
    #[serde(default = "one")]
    pub perceptual_weight: f64,
    #[serde(default = "default_adversarial")]
    pub adversarial_weight: f64,
    /// `tinyconv-perceptual` or a path to a `.srgb` weight archive.
    #[serde(default = "default_feature_net")]
    pub feature_net: String,
}

fn default_content() -> ContentKind {
    ContentKind::L2
}
fn one() -> f64 {
    1.0
}
fn default_adversarial() -> f64 {
    1e-3
}
fn default_feature_net() -> String {
    PERCEPTUAL_NET.into()
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            content: default_content(),
            content_weight: 1.0,
            perceptual_weight: 1.0,
            adversarial_weight: default_adversarial(),
            feature_net: default_feature_net(),
        }
    }
}

impl LossConfig {
    /// Pixel loss only.
    pub fn content_only(kind: ContentKind) -> Self {
        Self {
            content: kind,
            perceptual_weight: 0.0,
            adversarial_weight: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let w = [self.content_weight, self.perceptual_weight, self.adversarial_weight];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(TrainError::Config(format!("loss weights must be finite and non-negative, got {w:?}")));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(TrainError::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }

    /// The frozen feature network, or `None` when the perceptual term is off.
    pub fn perceptual_net(&self) -> Result<Option<TinyConv>, TrainError> {
        if self.perceptual_weight == 0.0 {
            return Ok(None);
        }
        if self.feature_net == PERCEPTUAL_NET {
            return Ok(Some(TinyConv::new(PERCEPTUAL_SEED)));
        }
        if self.feature_net.ends_with(".srgb") {
            let bytes = std::fs::read(&self.feature_net)?;
            let archive = crate::archive::Archive::decode(&bytes)?;
            return Ok(Some(TinyConv::from_archive(&archive)?));
        }
        // only convolutional extractors are differentiable here
        extractor_by_id(&self.feature_net)?;
        Err(TrainError::Config(format!(
            "feature net `{}` cannot be used for the perceptual loss",
            self.feature_net
        )))
    }
}

fn batch_size<T: Scalar>(tape: &Tape<T>, v: Var) -> usize {
    tape.value(v).shape()[0]
}

/// Per-image sum of absolute (L1) or squared (L2) differences, averaged
/// over the batch.
pub fn content_loss<T: Scalar>(tape: &mut Tape<T>, gen: Var, target: Var, kind: ContentKind) -> Result<Var, TensorError> {
    let n = batch_size(tape, gen);
    let diff = tape.sub(gen, target)?;
    let per = match kind {
        ContentKind::L1 => tape.abs(diff),
        ContentKind::L2 => tape.square(diff),
    };
    let total = tape.sum(per);
    Ok(tape.scale(total, T::from_f64(1.0 / n as f64)))
}

/// Squared distance between frozen feature maps, summed per image and
/// averaged over the batch.
pub fn perceptual_loss<T: Scalar>(tape: &mut Tape<T>, gen: Var, target: Var, net: &TinyConv) -> Result<Var, TensorError> {
    let n = batch_size(tape, gen);
    let fg = net.feature_map(tape, gen)?;
    let ft = net.feature_map(tape, target)?;
    let diff = tape.sub(fg, ft)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(tape.scale(total, T::from_f64(1.0 / n as f64)))
}

/// `−mean(log d_real) − mean(log(1 − d_fake))`.
pub fn discriminator_loss<T: Scalar>(tape: &mut Tape<T>, d_real: Var, d_fake: Var) -> Var {
    let floor = T::from_f64(LOG_FLOOR);
    let lr = tape.log_clamped(d_real, floor);
    let neg = tape.scale(d_fake, -T::one());
    let one_minus = tape.add_scalar(neg, T::one());
    let lf = tape.log_clamped(one_minus, floor);
    let mr = tape.mean(lr);
    let mf = tape.mean(lf);
    let a = tape.scale(mr, -T::one());
    let b = tape.scale(mf, -T::one());
    tape.add(a, b).expect("scalar means share a shape")
}

/// Non-saturating generator loss `−mean(log d_fake)`.
pub fn generator_adversarial_loss<T: Scalar>(tape: &mut Tape<T>, d_fake: Var) -> Var {
    let l = tape.log_clamped(d_fake, T::from_f64(LOG_FLOOR));
    let m = tape.mean(l);
    tape.scale(m, -T::one())
}

/// Plain-number form of the adversarial pair `(d_loss, g_loss)`.
pub fn adversarial_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64), TrainError> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(TrainError::Config("empty score vector".into()));
    }
    if let Some(s) = d_real.iter().chain(d_fake).find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(TrainError::Config(format!("discriminator score {s} outside [0, 1]")));
    }
    let lg = |s: f64| s.max(LOG_FLOOR).ln();
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&s| f(s)).sum::<f64>() / v.len() as f64;
    let d = -mean(d_real, &lg) - mean(d_fake, &|s| lg(1.0 - s));
    let g = -mean(d_fake, &lg);
    Ok((d, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn content_unit_difference() {
        let (h, w) = (4, 5);
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::full(&[1, 3, h, w], 0.5).unwrap());
        let b = tape.constant(Tensor::full(&[1, 3, h, w], -0.5).unwrap());
        for kind in [ContentKind::L1, ContentKind::L2] {
            let l = content_loss(&mut tape, a, b, kind).unwrap();
            assert_eq!(tape.value(l).item().unwrap(), (3 * h * w) as f64);
        }
        let z = content_loss(&mut tape, a, a, ContentKind::L2).unwrap();
        assert_eq!(tape.value(z).item().unwrap(), 0.0);
    }

    #[test]
    fn adversarial_reference_values() {
        let (d, g) = adversarial_losses(&[0.5], &[0.5]).unwrap();
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((g - 2f64.ln()).abs() < 1e-12);
        let (d, _) = adversarial_losses(&[1.0], &[0.0]).unwrap();
        assert!(d.abs() < 1e-12);
        assert!(adversarial_losses(&[1.5], &[0.5]).is_err());

        let mut tape = Tape::<f64>::new();
        let r = tape.leaf(Tensor::full(&[2, 1], 0.5).unwrap());
        let f = tape.leaf(Tensor::full(&[2, 1], 0.5).unwrap());
        let dl = discriminator_loss(&mut tape, r, f);
        let gl = generator_adversarial_loss(&mut tape, f);
        assert!((tape.value(dl).item().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((tape.value(gl).item().unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weight_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let mut c = LossConfig::content_only(ContentKind::L1);
        c.content_weight = 0.0;
        assert!(c.validate().is_err());
        c.content_weight = -1.0;
        assert!(c.validate().is_err());
    }
}
