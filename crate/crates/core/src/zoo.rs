//! Desk-scale architecture zoo.
//!
//! Six structurally distinct families stand in for the large image models
//! usually diversified across nodes: one linear model, two MLP depths and
//! three convolutional variants (3x3 stack, 5x5 stack, global-average-pool
//! head). Documented parameter counts assume 1x28x28 inputs and 10 classes.
//!
//! | id          | stack                                                     | params  |
//! |-------------|-----------------------------------------------------------|---------|
//! | `logreg`    | dense 784→10                                              | 7,850   |
//! | `mlp_small` | dense 784→256, relu, dense 256→10                         | 203,530 |
//! | `mlp_deep`  | dense 784→128→128→64→10 with relu between                 | 125,898 |
//! | `cnn_a`     | conv3 1→8, pool, conv3 8→16, pool, dense 784→10           | 9,098   |
//! | `cnn_b`     | conv5 1→6, pool, conv5 6→12, pool, dense 588→10           | 7,858   |
//! | `cnn_gap`   | conv3 1→8, pool, conv3 8→16, pool, conv3 16→32, gap, 32→10 | 6,218   |

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;
use rand::Rng;

use crate::nn::{LayerSpec, Network, Scalar, Shape};
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Arch {
    Logreg,
    MlpSmall,
    MlpDeep,
    CnnA,
    CnnB,
    CnnGap,
}

impl Arch {
    pub const ALL: [Arch; 6] = [
        Arch::Logreg,
        Arch::MlpSmall,
        Arch::MlpDeep,
        Arch::CnnA,
        Arch::CnnB,
        Arch::CnnGap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Arch::Logreg => "logreg",
            Arch::MlpSmall => "mlp_small",
            Arch::MlpDeep => "mlp_deep",
            Arch::CnnA => "cnn_a",
            Arch::CnnB => "cnn_b",
            Arch::CnnGap => "cnn_gap",
        }
    }

    /// Parameter count for 1x28x28 inputs and 10 classes.
    pub fn documented_params(&self) -> usize {
        match self {
            Arch::Logreg => 7_850,
            Arch::MlpSmall => 203_530,
            Arch::MlpDeep => 125_898,
            Arch::CnnA => 9_098,
            Arch::CnnB => 7_858,
            Arch::CnnGap => 6_218,
        }
    }

    /// Layer stack for the given input geometry.
    pub fn layers(&self, input: Shape, classes: usize) -> Result<Vec<LayerSpec>> {
        use LayerSpec::*;
        let flat = input.len();
        let conv_input = match input {
            Shape::Image {
                channels,
                height,
                width,
            } => Some((channels, height, width)),
            Shape::Flat(_) => None,
        };
        let stack = match self {
            Arch::Logreg => vec![Flatten, Dense { inputs: flat, outputs: classes }],
            Arch::MlpSmall => vec![
                Flatten,
                Dense { inputs: flat, outputs: 256 },
                Relu,
                Dense { inputs: 256, outputs: classes },
            ],
            Arch::MlpDeep => vec![
                Flatten,
                Dense { inputs: flat, outputs: 128 },
                Relu,
                Dense { inputs: 128, outputs: 128 },
                Relu,
                Dense { inputs: 128, outputs: 64 },
                Relu,
                Dense { inputs: 64, outputs: classes },
            ],
            Arch::CnnA | Arch::CnnB | Arch::CnnGap => {
                let (c, h, w) = conv_input
                    .filter(|&(_, h, w)| h >= 4 && w >= 4)
                    .ok_or_else(|| {
                        Error::InvalidSpec(format!("{} needs an image input of at least 4x4, got {:?}", self, input))
                    })?;
                let (k, c1, c2) = if *self == Arch::CnnB { (5, 6, 12) } else { (3, 8, 16) };
                let mut s = vec![
                    Conv2d { in_channels: c, out_channels: c1, kernel: k },
                    Relu,
                    MaxPool2,
                    Conv2d { in_channels: c1, out_channels: c2, kernel: k },
                    Relu,
                    MaxPool2,
                ];
                if *self == Arch::CnnGap {
                    s.extend([
                        Conv2d { in_channels: c2, out_channels: 32, kernel: 3 },
                        Relu,
                        GlobalAvgPool,
                        Dense { inputs: 32, outputs: classes },
                    ]);
                } else {
                    s.extend([Flatten, Dense { inputs: c2 * (h / 4) * (w / 4), outputs: classes }]);
                }
                s
            }
        };
        Ok(stack)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownId(s.to_string()))
    }
}

/// An architecture bound to an input geometry and class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArchitectureId {
    pub arch: Arch,
    pub input: Shape,
    pub classes: usize,
}

impl ArchitectureId {
    pub fn new(arch: Arch, input: Shape, classes: usize) -> Self {
        Self { arch, input, classes }
    }

    /// The reference geometry: 1x28x28 grayscale, 10 classes.
    pub fn mnist(arch: Arch) -> Self {
        Self::new(arch, Shape::image(1, 28, 28), 10)
    }

    /// Structural signature: the layer kinds and sizes in order.
    pub fn signature(&self) -> Result<Vec<LayerSpec>> {
        self.arch.layers(self.input, self.classes)
    }
}

/// Builds a freshly initialised network.
///
/// Layers followed by a ReLU get Kaiming-uniform weights
/// `U(±sqrt(6 / fan_in))`; the output layer gets `U(±1/sqrt(fan_in))`.
/// Biases start at zero. Identical `(id, seed)` pairs give bit-identical
/// weights.
pub fn build<T: Scalar>(id: ArchitectureId, seed: u64) -> Result<Network<T>> {
    let layers = id.signature()?;
    let mut net = Network::new(id.input, layers.clone(), id.classes)?;
    let last_param = layers.iter().rposition(|l| l.param_count() > 0);
    let mut rng = rng_for(seed, &[crate::rng::tag("init")]);
    for (i, layer) in layers.iter().enumerate() {
        if layer.param_count() == 0 {
            continue;
        }
        let fan_in = layer.fan_in() as f64;
        let bound = if Some(i) == last_param {
            1.0 / Float::sqrt(fan_in)
        } else {
            Float::sqrt(6.0 / fan_in)
        };
        let p = &mut net.params_mut()[i];
        for w in p.weight.data_mut() {
            *w = T::of(rng.gen_range(-bound..bound));
        }
    }
    Ok(net)
}
