use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::{cross_entropy, softmax_rows, LayerSpec, Scalar, Shape, Tensor};
use crate::{Error, Result};

/// Weight and bias of one layer. Both are empty for parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros_for(spec: &LayerSpec) -> Self {
        match spec.param_shapes() {
            Some((w, b)) => Self {
                weight: Tensor::zeros(w),
                bias: Tensor::zeros(b),
            },
            None => Self {
                weight: Tensor::empty(),
                bias: Tensor::empty(),
            },
        }
    }
}

/// Parameter gradients, laid out exactly like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat views in the same order as [`Network::param_slices_mut`].
    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|p| [p.weight.data(), p.bias.data()])
            .filter(|s| !s.is_empty())
    }
}

/// Sequential classifier `f_θ: X → [0,1]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input: Shape,
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    params: Vec<LayerParams<T>>,
    classes: usize,
}

struct Trace<T> {
    outputs: Vec<Vec<T>>,
    pool_args: Vec<Vec<u32>>,
    cols: Vec<Vec<T>>,
}

/// Per-sample losses, probabilities and input gradients for a batch.
#[derive(Debug, Clone)]
pub struct SampleGradients<T> {
    pub losses: Vec<T>,
    pub probs: Tensor<T>,
    pub grads: Tensor<T>,
}

impl<T: Scalar> Network<T> {
    /// Builds a network with all parameters zero.
    pub fn new(input: Shape, layers: Vec<LayerSpec>, classes: usize) -> Result<Self> {
        if layers.is_empty() || classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "{} layers, {} classes",
                layers.len(),
                classes
            )));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input);
        for layer in &layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        if *shapes.last().unwrap() != Shape::Flat(classes) {
            return Err(Error::ShapeMismatch {
                expected: format!("final output Flat({})", classes),
                actual: format!("{:?}", shapes.last().unwrap()),
            });
        }
        let params = layers.iter().map(LayerParams::zeros_for).collect();
        Ok(Self {
            input,
            layers,
            shapes,
            params,
            classes,
        })
    }

    /// Builds a network and installs the given parameters.
    pub fn with_params(
        input: Shape,
        layers: Vec<LayerSpec>,
        classes: usize,
        params: Vec<LayerParams<T>>,
    ) -> Result<Self> {
        let mut net = Self::new(input, layers, classes)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameter slots", net.params.len()),
                actual: format!("{}", params.len()),
            });
        }
        for (slot, p) in net.params.iter().zip(&params) {
            if slot.weight.shape() != p.weight.shape() || slot.bias.shape() != p.bias.shape() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{:?}/{:?}", slot.weight.shape(), slot.bias.shape()),
                    actual: format!("{:?}/{:?}", p.weight.shape(), p.bias.shape()),
                });
            }
        }
        net.params = params;
        Ok(net)
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Activation shapes: the input followed by each layer's output.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[LayerParams<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// All non-empty parameter arrays in layer order, weight before bias.
    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.params
            .iter_mut()
            .flat_map(|p| [p.weight.data_mut(), p.bias.data_mut()])
            .filter(|s| !s.is_empty())
    }

    pub fn param_slices(&self) -> impl Iterator<Item = &[T]> {
        self.params
            .iter()
            .flat_map(|p| [p.weight.data(), p.bias.data()])
            .filter(|s| !s.is_empty())
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input: self.input,
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self
                .params
                .iter()
                .map(|p| LayerParams {
                    weight: p.weight.map(|v| U::of(v.as_f64())),
                    bias: p.bias.map(|v| U::of(v.as_f64())),
                })
                .collect(),
            classes: self.classes,
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let rows = batch.rows();
        if rows == 0 || batch.row_len() != self.input.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("batch of {:?}", self.input.dims()),
                actual: format!("{:?}", batch.shape()),
            });
        }
        Ok(rows)
    }

    fn check_labels(&self, labels: &[usize], rows: usize) -> Result<()> {
        if labels.len() != rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", rows),
                actual: format!("{}", labels.len()),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        Ok(())
    }

    fn run(&self, x: &[T], rows: usize) -> Result<Trace<T>> {
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut pool_args = Vec::with_capacity(self.layers.len());
        let mut cols = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let src: &[T] = if i == 0 { x } else { &outputs[i - 1] };
            let (ins, outs) = (self.shapes[i], self.shapes[i + 1]);
            let mut arg = Vec::new();
            let mut patches = Vec::new();
            let out = match *layer {
                LayerSpec::Dense { inputs, outputs: n } => {
                    let mut y = vec![T::zero(); rows * n];
                    let p = &self.params[i];
                    kernels::dense_forward(src, p.weight.data(), p.bias.data(), &mut y, inputs, n);
                    y
                }
                LayerSpec::Conv2d { .. } => {
                    let mut y = vec![T::zero(); rows * outs.len()];
                    let p = &self.params[i];
                    let g = conv_geom(layer, ins);
                    patches = g.im2col(src, rows);
                    kernels::conv_forward(&patches, p.weight.data(), p.bias.data(), &mut y, g);
                    y
                }
                LayerSpec::MaxPool2 => {
                    let (c, h, w) = image_dims(ins);
                    let mut y = vec![T::zero(); rows * outs.len()];
                    arg = vec![0u32; rows * outs.len()];
                    kernels::maxpool_forward(src, &mut y, &mut arg, rows * c, h, w);
                    y
                }
                LayerSpec::GlobalAvgPool => {
                    let (c, h, w) = image_dims(ins);
                    let mut y = vec![T::zero(); rows * c];
                    kernels::gap_forward(src, &mut y, h * w);
                    y
                }
                LayerSpec::Relu => kernels::relu_forward(src),
                LayerSpec::Flatten => src.to_vec(),
            };
            outputs.push(out);
            pool_args.push(arg);
            cols.push(patches);
        }
        let logits = outputs.last().unwrap();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".to_string()));
        }
        Ok(Trace {
            outputs,
            pool_args,
            cols,
        })
    }

    /// Propagates `dlogits` back through the network.
    fn backprop(
        &self,
        x: &[T],
        trace: &Trace<T>,
        dlogits: Vec<T>,
        want_params: bool,
        want_input: bool,
    ) -> (Option<Gradients<T>>, Option<Vec<T>>) {
        let mut grads = want_params.then(|| Gradients {
            layers: self.layers.iter().map(LayerParams::zeros_for).collect(),
        });
        let mut d = dlogits;
        for i in (0..self.layers.len()).rev() {
            let src: &[T] = if i == 0 { x } else { &trace.outputs[i - 1] };
            let need_dx = i > 0 || want_input;
            let ins = self.shapes[i];
            let layer = self.layers[i];
            let p = &self.params[i];
            let next = match layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let mut dx = if need_dx { vec![T::zero(); src.len()] } else { Vec::new() };
                    let slot = grads
                        .as_mut()
                        .map(|g| {
                            let lp = &mut g.layers[i];
                            (lp.weight.data_mut(), lp.bias.data_mut())
                        });
                    kernels::dense_backward(
                        src,
                        p.weight.data(),
                        &d,
                        slot,
                        need_dx.then_some(dx.as_mut_slice()),
                        inputs,
                        outputs,
                    );
                    dx
                }
                LayerSpec::Conv2d { .. } => {
                    let mut dx = if need_dx { vec![T::zero(); src.len()] } else { Vec::new() };
                    let slot = grads.as_mut().map(|g| {
                        let lp = &mut g.layers[i];
                        (lp.weight.data_mut(), lp.bias.data_mut())
                    });
                    kernels::conv_backward(
                        &trace.cols[i],
                        p.weight.data(),
                        &d,
                        slot,
                        need_dx.then_some(dx.as_mut_slice()),
                        conv_geom(&layer, ins),
                    );
                    dx
                }
                LayerSpec::MaxPool2 => {
                    let mut dx = vec![T::zero(); src.len()];
                    kernels::maxpool_backward(&d, &trace.pool_args[i], &mut dx);
                    dx
                }
                LayerSpec::GlobalAvgPool => {
                    let (_, h, w) = image_dims(ins);
                    let mut dx = vec![T::zero(); src.len()];
                    kernels::gap_backward(&d, &mut dx, h * w);
                    dx
                }
                LayerSpec::Relu => kernels::relu_backward(src, &d),
                LayerSpec::Flatten => d,
            };
            d = next;
        }
        (grads, want_input.then_some(d))
    }

    /// Smallest distance of any activation in the batch to a
    /// non-differentiable point: a ReLU input at zero or a tie inside a max
    /// pooling window.
    pub(crate) fn kink_margin(&self, batch: &Tensor<T>) -> Result<T> {
        let rows = self.check_batch(batch)?;
        let trace = self.run(batch.data(), rows)?;
        let mut margin = T::infinity();
        for (i, layer) in self.layers.iter().enumerate() {
            let src: &[T] = if i == 0 { batch.data() } else { &trace.outputs[i - 1] };
            match layer {
                LayerSpec::Relu => {
                    for v in src {
                        margin = margin.min(v.abs());
                    }
                }
                LayerSpec::MaxPool2 => {
                    let (c, h, w) = image_dims(self.shapes[i]);
                    for p in 0..rows * c {
                        for oy in 0..h / 2 {
                            for ox in 0..w / 2 {
                                let mut win = [T::zero(); 4];
                                for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                                    win[k] = src[p * h * w + (2 * oy + dy) * w + 2 * ox + dx];
                                }
                                let top = win.iter().copied().fold(T::neg_infinity(), T::max);
                                let mut second = T::neg_infinity();
                                let mut seen_top = false;
                                for v in win {
                                    if v == top && !seen_top {
                                        seen_top = true;
                                    } else {
                                        second = second.max(v);
                                    }
                                }
                                margin = margin.min(top - second);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(margin)
    }

    /// Raw class scores, shape `(rows, classes)`.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let rows = self.check_batch(batch)?;
        let mut trace = self.run(batch.data(), rows)?;
        let logits = trace.outputs.pop().unwrap();
        Tensor::new(vec![rows, self.classes], logits)
    }

    /// Class probabilities (softmax of the logits), shape `(rows, classes)`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut t = self.logits(batch)?;
        softmax_rows(t.data_mut(), self.classes);
        Ok(t)
    }

    /// `C(x) = argmax_i f_θ(x)_i` for each row.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok(logits
            .data()
            .chunks_exact(self.classes)
            .map(super::argmax)
            .collect())
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<T> {
        let logits = self.logits(batch)?;
        self.check_labels(labels, batch.rows())?;
        let total: T = logits
            .data()
            .chunks_exact(self.classes)
            .zip(labels)
            .map(|(row, &y)| cross_entropy(row, y))
            .sum();
        Ok(total / T::of(labels.len() as f64))
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_param_grads(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<(T, Gradients<T>)> {
        let rows = self.check_batch(batch)?;
        self.check_labels(labels, rows)?;
        let trace = self.run(batch.data(), rows)?;
        let logits = trace.outputs.last().unwrap();
        let scale = T::one() / T::of(rows as f64);
        let mut loss = T::zero();
        let mut dlogits = logits.clone();
        for (row, &y) in dlogits.chunks_exact_mut(self.classes).zip(labels) {
            loss = loss + cross_entropy(row, y);
            softmax_rows(row, self.classes);
            row[y] = row[y] - T::one();
            row.iter_mut().for_each(|v| *v = *v * scale);
        }
        let (grads, _) = self.backprop(batch.data(), &trace, dlogits, true, false);
        Ok((loss * scale, grads.unwrap()))
    }

    /// Per-sample cross-entropy, probabilities and `∇_x L(y_i, x_i, θ)` for
    /// every row; each row's gradient is that of its own loss (not the mean).
    pub fn sample_gradients(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<SampleGradients<T>> {
        let rows = self.check_batch(batch)?;
        self.check_labels(labels, rows)?;
        let trace = self.run(batch.data(), rows)?;
        let logits = trace.outputs.last().unwrap();
        let mut losses = Vec::with_capacity(rows);
        let mut probs = logits.clone();
        for (row, &y) in probs.chunks_exact_mut(self.classes).zip(labels) {
            losses.push(cross_entropy(row, y));
            softmax_rows(row, self.classes);
        }
        let mut dlogits = probs.clone();
        for (row, &y) in dlogits.chunks_exact_mut(self.classes).zip(labels) {
            row[y] = row[y] - T::one();
        }
        let (_, dx) = self.backprop(batch.data(), &trace, dlogits, false, true);
        let dx = dx.unwrap();
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input gradient".to_string()));
        }
        Ok(SampleGradients {
            losses,
            probs: Tensor::new(vec![rows, self.classes], probs)?,
            grads: Tensor::new(batch.shape().to_vec(), dx)?,
        })
    }

    /// `∇_x L(y, x, θ)` for a single sample; the result has the shape of `x`.
    pub fn input_gradient(&self, x: &Tensor<T>, y: usize) -> Result<Tensor<T>> {
        if x.len() != self.input.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("sample of {:?}", self.input.dims()),
                actual: format!("{:?}", x.shape()),
            });
        }
        let mut shape = vec![1];
        shape.extend(self.input.dims());
        let batch = Tensor::new(shape, x.data().to_vec())?;
        let g = self.sample_gradients(&batch, &[y])?;
        Tensor::new(x.shape().to_vec(), g.grads.into_data())
    }
}

fn image_dims(s: Shape) -> (usize, usize, usize) {
    match s {
        Shape::Image {
            channels,
            height,
            width,
        } => (channels, height, width),
        Shape::Flat(n) => (n, 1, 1),
    }
}

fn conv_geom(layer: &LayerSpec, input: Shape) -> ConvGeom {
    let (_, height, width) = image_dims(input);
    match *layer {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => ConvGeom {
            in_channels,
            out_channels,
            kernel,
            height,
            width,
        },
        _ => unreachable!("conv geometry requested for {}", layer.name()),
    }
}
