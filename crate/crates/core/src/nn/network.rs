use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{NetworkSpec, Role, DISCRIMINATOR_CONVS, DISCRIMINATOR_DOWNSAMPLE};
use super::NnError;
use crate::autograd::{BatchStats, Tape, Var};
use crate::tensor::ops::{BnMode, RunningStats};
use crate::tensor::{Scalar, Tensor};

/// One instruction of a network program. There is deliberately no pooling
/// variant: the only spatial reduction available is a strided [`Layer::Conv`].
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    BatchNorm {
        name: String,
        channels: usize,
    },
    PRelu {
        name: String,
        channels: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    PixelShuffle {
        factor: usize,
    },
    Flatten,
    Dense {
        name: String,
        in_features: usize,
        out_features: usize,
    },
    Sigmoid,
    /// Remember the current activation in a skip slot.
    SaveSkip {
        slot: usize,
    },
    /// Add the activation saved in a skip slot.
    AddSkip {
        slot: usize,
    },
}

pub const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    params: Vec<Param>,
    bn_stats: Vec<(String, RunningStats<f32>)>,
    index: HashMap<String, usize>,
    bn_index: HashMap<String, usize>,
}

/// Parameter leaves of a network registered on a particular tape, aligned
/// with [`Network::params`].
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Output of one forward pass. In training mode `bn_updates` carries the
/// batch statistics for every normalization layer, keyed by its name.
pub struct Forward<T> {
    pub output: Var,
    pub bn_updates: Vec<(String, BatchStats<T>)>,
}

fn generator_layers(spec: &NetworkSpec) -> Vec<Layer> {
    let base = spec.base_channels;
    let conv = |name: &str, i, o| Layer::Conv {
        name: name.into(),
        in_channels: i,
        out_channels: o,
        stride: 1,
    };
    let bn = |name: &str, c| Layer::BatchNorm {
        name: name.into(),
        channels: c,
    };
    let prelu = |name: &str, c| Layer::PRelu {
        name: name.into(),
        channels: c,
    };
    let mut l = vec![
        conv("head.conv", spec.input_channels, base),
        bn("head.bn", base),
        prelu("head.prelu", base),
        Layer::SaveSkip { slot: 0 },
    ];
    for i in 0..spec.n_residual_blocks {
        let p = format!("blocks.{i}");
        l.extend([
            Layer::SaveSkip { slot: 1 },
            conv(&format!("{p}.conv1"), base, base),
            bn(&format!("{p}.bn1"), base),
            prelu(&format!("{p}.prelu"), base),
            conv(&format!("{p}.conv2"), base, base),
            bn(&format!("{p}.bn2"), base),
            Layer::AddSkip { slot: 1 },
        ]);
    }
    l.extend([
        conv("trunk.conv", base, base),
        bn("trunk.bn", base),
        Layer::AddSkip { slot: 0 },
    ]);
    for j in 0..spec.upscale_exponent {
        let p = format!("up.{j}");
        l.extend([
            conv(&format!("{p}.conv"), base, 4 * base),
            bn(&format!("{p}.bn"), 4 * base),
            Layer::PixelShuffle { factor: 2 },
            prelu(&format!("{p}.prelu"), base),
        ]);
    }
    l.push(conv("tail.conv", base, 3));
    l
}

fn discriminator_layers(spec: &NetworkSpec) -> Vec<Layer> {
    let widths = spec.discriminator_widths();
    let mut l = Vec::new();
    let mut cin = spec.input_channels;
    for (i, &w) in widths.iter().enumerate() {
        l.push(Layer::Conv {
            name: format!("convs.{i}.conv"),
            in_channels: cin,
            out_channels: w,
            stride: if i % 2 == 0 { 1 } else { 2 },
        });
        if i > 0 {
            l.push(Layer::BatchNorm {
                name: format!("convs.{i}.bn"),
                channels: w,
            });
        }
        l.push(Layer::LeakyRelu {
            slope: spec.leaky_slope,
        });
        cin = w;
    }
    let side = spec.image_side / DISCRIMINATOR_DOWNSAMPLE;
    l.extend([
        Layer::Flatten,
        Layer::Dense {
            name: "head.fc1".into(),
            in_features: widths[DISCRIMINATOR_CONVS - 1] * side * side,
            out_features: spec.head_width,
        },
        Layer::LeakyRelu {
            slope: spec.leaky_slope,
        },
        Layer::Dense {
            name: "head.fc2".into(),
            in_features: spec.head_width,
            out_features: 1,
        },
        Layer::Sigmoid,
    ]);
    l
}

impl Network {
    /// Builds the generator: head conv, residual trunk with a long skip,
    /// `u` pixel-shuffle stages and an output conv.
    pub fn generator(spec: &NetworkSpec, seed: u64) -> Result<Self, NnError> {
        if spec.role != Role::Generator {
            return Err(NnError::InvalidSpec("expected a generator spec".into()));
        }
        spec.validate()?;
        let layers = if spec.passthrough {
            Vec::new()
        } else {
            generator_layers(spec)
        };
        Ok(Self::from_layers(spec.clone(), layers, seed))
    }

    /// Builds the discriminator: eight conv layers alternating stride 1/2,
    /// a dense head and a sigmoid.
    pub fn discriminator(spec: &NetworkSpec, seed: u64) -> Result<Self, NnError> {
        if spec.role != Role::Discriminator {
            return Err(NnError::InvalidSpec("expected a discriminator spec".into()));
        }
        spec.validate()?;
        Ok(Self::from_layers(spec.clone(), discriminator_layers(spec), seed))
    }

    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self, NnError> {
        match spec.role {
            Role::Generator => Self::generator(spec, seed),
            Role::Discriminator => Self::discriminator(spec, seed),
        }
    }

    fn from_layers(spec: NetworkSpec, layers: Vec<Layer>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut bn_stats = Vec::new();
        let uniform = |shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f32).sqrt();
            Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound)).expect("non-empty shape")
        };
        let mut push = |name: String, value: Tensor<f32>| params.push(Param { name, value });
        for layer in &layers {
            match layer {
                Layer::Conv {
                    name,
                    in_channels,
                    out_channels,
                    ..
                } => {
                    let fan_in = in_channels * KERNEL * KERNEL;
                    let w = uniform(&[*out_channels, *in_channels, KERNEL, KERNEL], fan_in, &mut rng);
                    let b = uniform(&[*out_channels], fan_in, &mut rng);
                    push(format!("{name}.weight"), w);
                    push(format!("{name}.bias"), b);
                }
                Layer::Dense {
                    name,
                    in_features,
                    out_features,
                } => {
                    let w = uniform(&[*out_features, *in_features], *in_features, &mut rng);
                    let b = uniform(&[*out_features], *in_features, &mut rng);
                    push(format!("{name}.weight"), w);
                    push(format!("{name}.bias"), b);
                }
                Layer::BatchNorm { name, channels } => {
                    push(format!("{name}.gamma"), Tensor::full(&[*channels], 1.0).expect("c>0"));
                    push(format!("{name}.beta"), Tensor::zeros(&[*channels]).expect("c>0"));
                    bn_stats.push((name.clone(), RunningStats::new(*channels)));
                }
                Layer::PRelu { name, channels } => {
                    let a = Tensor::full(&[*channels], spec.prelu_init as f32).expect("c>0");
                    push(format!("{name}.alpha"), a);
                }
                _ => {}
            }
        }
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        let bn_index = bn_stats
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        Self {
            spec,
            layers,
            params,
            bn_stats,
            index,
            bn_index,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<f32>> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn bn_stats(&self) -> &[(String, RunningStats<f32>)] {
        &self.bn_stats
    }

    pub(crate) fn bn_stats_mut(&mut self, name: &str) -> Option<&mut RunningStats<f32>> {
        self.bn_index.get(name).map(|&i| &mut self.bn_stats[i].1)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Registers every parameter on `tape`, as differentiable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                let v = p.value.cast::<T>();
                if trainable {
                    tape.leaf(v)
                } else {
                    tape.constant(v)
                }
            })
            .collect();
        Bound { vars }
    }

    fn pv(&self, bound: &Bound, name: &str) -> Var {
        bound.vars[self.index[name]]
    }

    fn expected_input(&self) -> [usize; 3] {
        let s = self.spec.input_side();
        [self.spec.input_channels, s, s]
    }

    /// Runs the layer program on `x`. Normalization layers use batch
    /// statistics in [`BnMode::Train`] and running statistics otherwise; in
    /// training mode the returned `bn_updates` still have to be committed with
    /// [`Network::commit_bn`].
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        x: Var,
        mode: BnMode,
    ) -> Result<Forward<T>, NnError> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 4 || shape[1..] != self.expected_input() {
            return Err(NnError::InputShape {
                expected: self.expected_input().to_vec(),
                actual: shape,
            });
        }
        let eps = T::from_f64(self.spec.bn_eps);
        let mut h = x;
        let mut skips: [Option<Var>; 2] = [None, None];
        let mut bn_updates = Vec::new();
        for layer in &self.layers {
            let at = |e| NnError::Layer {
                layer: layer_name(layer),
                source: e,
            };
            h = match layer {
                Layer::Conv { name, stride, .. } => {
                    let w = self.pv(bound, &format!("{name}.weight"));
                    let b = self.pv(bound, &format!("{name}.bias"));
                    tape.conv2d(h, w, b, *stride, KERNEL / 2).map_err(at)?
                }
                Layer::BatchNorm { name, .. } => {
                    let g = self.pv(bound, &format!("{name}.gamma"));
                    let b = self.pv(bound, &format!("{name}.beta"));
                    match mode {
                        BnMode::Train => {
                            let (out, stats) = tape.batch_norm_train(h, g, b, eps).map_err(at)?;
                            bn_updates.push((name.clone(), stats));
                            out
                        }
                        BnMode::Infer => {
                            let rs = &self.bn_stats[self.bn_index[name]].1;
                            let rs = RunningStats {
                                mean: rs.mean.iter().map(|&v| T::from_f64(v as f64)).collect(),
                                var: rs.var.iter().map(|&v| T::from_f64(v as f64)).collect(),
                            };
                            tape.batch_norm_infer(h, g, b, &rs, eps).map_err(at)?
                        }
                    }
                }
                Layer::PRelu { name, .. } => {
                    let a = self.pv(bound, &format!("{name}.alpha"));
                    tape.prelu(h, a).map_err(at)?
                }
                Layer::LeakyRelu { slope } => tape.leaky_relu(h, T::from_f64(*slope)),
                Layer::PixelShuffle { factor } => tape.pixel_shuffle(h, *factor).map_err(at)?,
                Layer::Flatten => tape.flatten(h).map_err(at)?,
                Layer::Dense { name, .. } => {
                    let w = self.pv(bound, &format!("{name}.weight"));
                    let b = self.pv(bound, &format!("{name}.bias"));
                    tape.dense(h, w, b).map_err(at)?
                }
                Layer::Sigmoid => tape.sigmoid(h),
                Layer::SaveSkip { slot } => {
                    skips[*slot] = Some(h);
                    h
                }
                Layer::AddSkip { slot } => {
                    let s = skips[*slot].expect("skip slot saved before use");
                    tape.add(h, s).map_err(at)?
                }
            };
        }
        Ok(Forward {
            output: h,
            bn_updates,
        })
    }

    /// Folds batch statistics from a training-mode forward into the running
    /// estimates.
    pub fn commit_bn<T: Scalar>(&mut self, updates: &[(String, BatchStats<T>)]) {
        let momentum = self.spec.bn_momentum as f32;
        for (name, stats) in updates {
            let mean: Vec<f32> = stats.mean.iter().map(|v| v.as_f64() as f32).collect();
            let var: Vec<f32> = stats.var.iter().map(|v| v.as_f64() as f32).collect();
            if let Some(rs) = self.bn_stats_mut(name) {
                rs.update(&mean, &var, stats.count, momentum);
            }
        }
    }

    /// Training-mode forward on an f32 tape: binds parameters (trainable or
    /// frozen), runs, and commits the batch statistics.
    pub fn forward_train(
        &mut self,
        tape: &mut Tape<f32>,
        x: Var,
        trainable: bool,
    ) -> Result<(Var, Bound), NnError> {
        let bound = self.bind(tape, trainable);
        let fwd = self.forward(tape, &bound, x, BnMode::Train)?;
        self.commit_bn(&fwd.bn_updates);
        Ok((fwd.output, bound))
    }

    /// Inference-mode forward on a fresh non-recording tape.
    pub fn infer(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
        let mut tape = Tape::no_grad();
        let x = tape.constant(batch.clone());
        let bound = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &bound, x, BnMode::Infer)?.output;
        Ok(tape.value(out).clone())
    }

    pub(crate) fn from_parts(
        spec: NetworkSpec,
        params: Vec<(String, Tensor<f32>)>,
        stats: Vec<(String, RunningStats<f32>)>,
    ) -> Result<Self, NnError> {
        spec.validate()?;
        let mut net = match spec.role {
            Role::Generator if spec.passthrough => Self::from_layers(spec.clone(), Vec::new(), 0),
            Role::Generator => Self::from_layers(spec.clone(), generator_layers(&spec), 0),
            Role::Discriminator => Self::from_layers(spec.clone(), discriminator_layers(&spec), 0),
        };
        let mut seen = vec![false; net.params.len()];
        for (name, value) in params {
            let i = *net
                .index
                .get(&name)
                .ok_or_else(|| NnError::SpecMismatch(format!("unexpected tensor `{name}`")))?;
            if net.params[i].value.shape() != value.shape() {
                return Err(NnError::SpecMismatch(format!(
                    "tensor `{name}` has shape {:?}, spec expects {:?}",
                    value.shape(),
                    net.params[i].value.shape()
                )));
            }
            seen[i] = true;
            net.params[i].value = value;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(NnError::SpecMismatch(format!(
                "missing tensor `{}`",
                net.params[i].name
            )));
        }
        for (name, rs) in stats {
            let slot = net
                .bn_stats_mut(&name)
                .ok_or_else(|| NnError::SpecMismatch(format!("unexpected running stats `{name}`")))?;
            if slot.mean.len() != rs.mean.len() {
                return Err(NnError::SpecMismatch(format!("running stats `{name}` width")));
            }
            *slot = rs;
        }
        Ok(net)
    }
}

fn layer_name(layer: &Layer) -> String {
    match layer {
        Layer::Conv { name, .. }
        | Layer::BatchNorm { name, .. }
        | Layer::PRelu { name, .. }
        | Layer::Dense { name, .. } => name.clone(),
        Layer::LeakyRelu { .. } => "leaky_relu".into(),
        Layer::PixelShuffle { .. } => "pixel_shuffle".into(),
        Layer::Flatten => "flatten".into(),
        Layer::Sigmoid => "sigmoid".into(),
        Layer::SaveSkip { slot } => format!("save_skip.{slot}"),
        Layer::AddSkip { slot } => format!("add_skip.{slot}"),
    }
}
