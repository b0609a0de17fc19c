use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Per-sample activation geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl Shape {
    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Shape::Image {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimensions without the batch axis.
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Image {
                channels,
                height,
                width,
            } => vec![channels, height, width],
            Shape::Flat(n) => vec![n],
        }
    }
}

/// One layer of a sequential network.
///
/// Convolutions are stride 1 with zero padding that preserves the spatial
/// size (odd kernels only). Pooling is either 2x2 max (floor on odd sizes) or
/// global average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize },
    MaxPool2,
    GlobalAvgPool,
    Relu,
    Flatten,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2 => "maxpool2",
            LayerSpec::GlobalAvgPool => "avgpool-global",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Output geometry for the given input, or an error when the layer
    /// cannot consume it.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let mismatch = |what: &str| Error::ShapeMismatch {
            expected: format!("{} input for {}", what, self.name()),
            actual: format!("{:?}", input),
        };
        match (*self, input) {
            (LayerSpec::Dense { inputs, outputs }, Shape::Flat(n)) => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::InvalidSpec(format!("dense {}->{}", inputs, outputs)));
                }
                if n != inputs {
                    return Err(mismatch(&format!("flat {}", inputs)));
                }
                Ok(Shape::Flat(outputs))
            }
            (
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || kernel % 2 == 0 {
                    return Err(Error::InvalidSpec(format!(
                        "conv2d {}->{} kernel {}",
                        in_channels, out_channels, kernel
                    )));
                }
                if channels != in_channels {
                    return Err(mismatch(&format!("{}-channel image", in_channels)));
                }
                Ok(Shape::image(out_channels, height, width))
            }
            (
                LayerSpec::MaxPool2,
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) => {
                if height < 2 || width < 2 {
                    return Err(mismatch("image at least 2x2"));
                }
                Ok(Shape::image(channels, height / 2, width / 2))
            }
            (LayerSpec::GlobalAvgPool, Shape::Image { channels, .. }) => Ok(Shape::Flat(channels)),
            (LayerSpec::Relu, s) => Ok(s),
            (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.len())),
            (LayerSpec::Dense { inputs, .. }, _) => Err(mismatch(&format!("flat {}", inputs))),
            _ => Err(mismatch("image")),
        }
    }

    /// Shapes of (weight, bias); `None` for parameter-free layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((vec![inputs, outputs], vec![outputs])),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => Some((
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            )),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .unwrap_or(0)
    }

    /// Fan-in of one output unit, used for weight initialisation.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }
}
