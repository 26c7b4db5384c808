use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
}

/// Declarative description of one network. Every convolution uses kernel 3;
/// the only spatial reductions are strided convolutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: Role,
    /// Generator trunk width, or the discriminator's first-layer width.
    pub base_channels: usize,
    /// Residual blocks in the generator trunk. Ignored by the discriminator.
    #[serde(default = "default_blocks")]
    pub n_residual_blocks: usize,
    /// Generator upscale factor is `2^upscale_exponent`.
    #[serde(default)]
    pub upscale_exponent: u32,
    pub input_channels: usize,
    /// High-resolution side: generator output / discriminator input.
    #[serde(default = "default_side")]
    pub image_side: usize,
    /// Hidden width of the discriminator's dense head.
    #[serde(default = "default_head_width")]
    pub head_width: usize,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f64,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
    #[serde(default = "default_prelu_init")]
    pub prelu_init: f64,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
    /// Largest spatial side any layer may produce.
    #[serde(default = "default_max_side")]
    pub max_side: usize,
    /// Debug generator that returns its input unchanged (u = 0 only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub passthrough: bool,
}

fn default_blocks() -> usize {
    8
}
fn default_side() -> usize {
    128
}
fn default_head_width() -> usize {
    128
}
fn default_bn_eps() -> f64 {
    1e-5
}
fn default_bn_momentum() -> f64 {
    0.1
}
fn default_prelu_init() -> f64 {
    0.25
}
fn default_leaky_slope() -> f64 {
    0.2
}
fn default_max_side() -> usize {
    2048
}

/// Number of convolution layers in the discriminator.
pub const DISCRIMINATOR_CONVS: usize = 8;
/// Total spatial reduction of the discriminator (four stride-2 layers).
pub const DISCRIMINATOR_DOWNSAMPLE: usize = 16;

impl NetworkSpec {
    pub fn generator(base_channels: usize, upscale_exponent: u32) -> Self {
        Self {
            role: Role::Generator,
            base_channels,
            n_residual_blocks: default_blocks(),
            upscale_exponent,
            input_channels: 3,
            image_side: default_side(),
            head_width: default_head_width(),
            bn_eps: default_bn_eps(),
            bn_momentum: default_bn_momentum(),
            prelu_init: default_prelu_init(),
            leaky_slope: default_leaky_slope(),
            max_side: default_max_side(),
            passthrough: false,
        }
    }

    pub fn discriminator(base_channels: usize) -> Self {
        Self {
            role: Role::Discriminator,
            upscale_exponent: 0,
            ..Self::generator(base_channels, 0)
        }
    }

    /// Desk-scale default generator: 32 channels, 8 residual blocks.
    pub fn default_generator(upscale_exponent: u32) -> Self {
        Self::generator(32, upscale_exponent)
    }

    /// Desk-scale default discriminator: 64 channels doubling every two layers.
    pub fn default_discriminator() -> Self {
        Self::discriminator(64)
    }

    pub fn with_side(mut self, side: usize) -> Self {
        self.image_side = side;
        self
    }

    pub fn upscale_factor(&self) -> usize {
        1usize << self.upscale_exponent
    }

    /// Spatial side the network consumes.
    pub fn input_side(&self) -> usize {
        match self.role {
            Role::Generator => self.image_side / self.upscale_factor(),
            Role::Discriminator => self.image_side,
        }
    }

    pub fn output_channels(&self) -> usize {
        match self.role {
            Role::Generator => 3,
            Role::Discriminator => 1,
        }
    }

    /// Discriminator conv widths, doubling every two layers.
    pub fn discriminator_widths(&self) -> [usize; DISCRIMINATOR_CONVS] {
        std::array::from_fn(|i| self.base_channels << (i / 2))
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidSpec(m));
        if self.base_channels == 0 || self.input_channels == 0 || self.image_side == 0 {
            return bad("channel counts and image side must be positive".into());
        }
        if !(self.bn_eps > 0.0) {
            return bad(format!("bn_eps must be positive, got {}", self.bn_eps));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad(format!("bn_momentum must be in [0, 1], got {}", self.bn_momentum));
        }
        if self.image_side > self.max_side {
            return bad(format!(
                "image side {} exceeds the configured maximum {}",
                self.image_side, self.max_side
            ));
        }
        match self.role {
            Role::Generator => {
                if self.n_residual_blocks == 0 && !self.passthrough {
                    return bad("generator needs at least one residual block".into());
                }
                if self.upscale_exponent > 16 {
                    return bad(format!("upscale exponent {} too large", self.upscale_exponent));
                }
                let f = self.upscale_factor();
                if self.image_side % f != 0 {
                    return bad(format!(
                        "image side {} not divisible by upscale factor {f}",
                        self.image_side
                    ));
                }
                if self.passthrough && (self.upscale_exponent != 0 || self.input_channels != 3) {
                    return bad("passthrough generator requires u = 0 and 3 input channels".into());
                }
            }
            Role::Discriminator => {
                if self.image_side % DISCRIMINATOR_DOWNSAMPLE != 0 {
                    return bad(format!(
                        "discriminator input side {} not divisible by total downsampling {}",
                        self.image_side, DISCRIMINATOR_DOWNSAMPLE
                    ));
                }
                if self.head_width == 0 {
                    return bad("discriminator head width must be positive".into());
                }
            }
        }
        Ok(())
    }
}
