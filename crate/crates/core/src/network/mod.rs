//! The layered classifier: a fixed set of layer kinds composed in order,
//! with a forward pass that keeps every intermediate activation so the
//! relevance pass can reconstruct per-neuron contributions.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ops, Scalar, Tensor};

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use train::{accuracy, predict, train_erm, train_on_batches, LabeledSet, Sgd, TrainConfig, TrainOutcome};

/// Input shape of the desk-scale network: 3 colour channels at 32×32.
pub const IMAGE_SHAPE: [usize; 3] = [3, 32, 32];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        bias: bool,
    },
    Relu,
    AvgPool2,
    GlobalAvgPool,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
}

impl LayerSpec {
    /// Output shape for a given input shape, or an error if they do not compose.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: &[usize]| Error::dim("layer composition", input, expected);
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                if input.len() != 3 || input[0] != in_channels || input[1] < kernel || input[2] < kernel {
                    return Err(mismatch(&[in_channels, kernel, kernel]));
                }
                Ok(vec![out_channels, input[1] - kernel + 1, input[2] - kernel + 1])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::AvgPool2 => {
                if input.len() != 3 || input[1] < 2 || input[2] < 2 {
                    return Err(mismatch(&[0, 2, 2]));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
            LayerSpec::GlobalAvgPool => {
                if input.len() != 3 {
                    return Err(mismatch(&[0, 0, 0]));
                }
                Ok(vec![input[0]])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs, .. } => {
                if input != [inputs] {
                    return Err(mismatch(&[inputs]));
                }
                Ok(vec![outputs])
            }
        }
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                bias,
            } => {
                let mut v = vec![vec![out_channels, in_channels, kernel, kernel]];
                if bias {
                    v.push(vec![out_channels]);
                }
                v
            }
            LayerSpec::Dense { inputs, outputs, bias } => {
                let mut v = vec![vec![inputs, outputs]];
                if bias {
                    v.push(vec![outputs]);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f32> {
    pub spec: LayerSpec,
    /// `[weight]` or `[weight, bias]`; empty for parameter-free layers.
    pub params: Vec<Tensor<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn weight(&self) -> Option<&Tensor<T>> {
        self.params.first()
    }

    pub fn bias(&self) -> Option<&Tensor<T>> {
        self.params.get(1)
    }
}

/// Parameter gradients, structured exactly like [`LayerStack::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub per_layer: Vec<Vec<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &LayerStack<T>) -> Self {
        Gradients {
            per_layer: model
                .layers
                .iter()
                .map(|l| l.params.iter().map(|p| Tensor::zeros(p.shape())).collect())
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) -> Result<()> {
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add_assign(y)?;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: T) {
        self.per_layer.iter_mut().flatten().for_each(|t| t.scale(c));
    }

    pub fn is_finite(&self) -> bool {
        self.per_layer.iter().flatten().all(|t| t.is_finite())
    }
}

/// Activations recorded by one forward pass.
///
/// `activations[0]` is the input and `activations[i + 1]` the output of layer
/// `i`; the last entry holds the logits. Layer-output indices used throughout
/// the crate (`ℓ`) index into this vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T = f32> {
    pub activations: Vec<Tensor<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn input(&self) -> &Tensor<T> {
        &self.activations[0]
    }

    pub fn logits(&self) -> &Tensor<T> {
        self.activations.last().expect("trace is never empty")
    }

    /// Input activation of layer `i`.
    pub fn layer_input(&self, i: usize) -> &Tensor<T> {
        &self.activations[i]
    }

    /// Output activation of layer `i`.
    pub fn layer_output(&self, i: usize) -> &Tensor<T> {
        &self.activations[i + 1]
    }

    /// Number of layers the trace covers.
    pub fn len(&self) -> usize {
        self.activations.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered stack of layers ending in a dense layer producing `num_classes`
/// logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<T = f32> {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer<T>>,
    /// Layer-output index of the feature vector targeted by regularization.
    pub penultimate: usize,
}

impl<T: Scalar> LayerStack<T> {
    /// Builds a stack with zeroed parameters after validating that every
    /// layer composes with the next.
    pub fn from_specs(input_shape: &[usize], specs: Vec<LayerSpec>, penultimate: usize) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        for spec in &specs {
            shape = spec.output_shape(&shape)?;
        }
        match specs.last() {
            Some(LayerSpec::Dense { .. }) => {}
            _ => return Err(Error::Config("layer stack must end with a dense layer".into())),
        }
        if penultimate > specs.len() {
            return Err(Error::Index {
                what: "penultimate layer",
                index: penultimate,
                len: specs.len() + 1,
            });
        }
        let layers = specs
            .into_iter()
            .map(|spec| Layer {
                params: spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
                spec,
            })
            .collect();
        Ok(LayerStack {
            input_shape: input_shape.to_vec(),
            layers,
            penultimate,
        })
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last().map(|l| &l.spec) {
            Some(LayerSpec::Dense { outputs, .. }) => *outputs,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Kaiming-uniform weights (`U(±sqrt(6 / fan_in))`) and zero biases.
    pub fn init_kaiming(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = layer.spec.fan_in();
            if let Some(w) = layer.params.first_mut() {
                let bound = (6.0 / fan_in as f64).sqrt();
                for v in w.data_mut() {
                    *v = T::from_f64(rng.random_range(-bound..bound));
                }
            }
            for b in layer.params.iter_mut().skip(1) {
                b.data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    /// Shape of the activation at layer-output index `l`.
    pub fn shape_at(&self, l: usize) -> Result<Vec<usize>> {
        if l > self.layers.len() {
            return Err(Error::Index {
                what: "layer-output index",
                index: l,
                len: self.layers.len() + 1,
            });
        }
        let mut shape = self.input_shape.clone();
        for layer in &self.layers[..l] {
            shape = layer.spec.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn cast<U: Scalar>(&self) -> LayerStack<U> {
        LayerStack {
            input_shape: self.input_shape.clone(),
            penultimate: self.penultimate,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    params: l.params.iter().map(|p| p.cast()).collect(),
                })
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.params).map(|p| p.len()).sum()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<ForwardTrace<T>> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::dim("forward", x.shape(), &self.input_shape));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let input = activations.last().unwrap();
            let out = layer_forward(layer, input)?;
            activations.push(out);
        }
        let trace = ForwardTrace { activations };
        trace.logits().ensure_finite("forward logits")?;
        Ok(trace)
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x)?.activations.pop().unwrap())
    }

    /// Reverse pass from `dlogits` through the stack. `injections` add extra
    /// upstream gradient at layer-output indices (used by activation
    /// penalties). Returns parameter gradients and the input gradient.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        dlogits: &Tensor<T>,
        injections: &[(usize, Tensor<T>)],
    ) -> Result<(Gradients<T>, Tensor<T>)> {
        if trace.len() != self.layers.len() {
            return Err(Error::dim("backward trace", &[trace.len()], &[self.layers.len()]));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut g = dlogits.clone();
        for (l, inj) in injections {
            if *l == self.layers.len() {
                g.add_assign(inj)?;
            }
        }
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = trace.layer_input(i);
            let (gin, pgrads) = layer_backward(layer, input, &g)?;
            grads.per_layer[i] = pgrads;
            g = gin;
            for (l, inj) in injections {
                if *l == i {
                    g.add_assign(inj)?;
                }
            }
        }
        Ok((grads, g))
    }

    /// Applies `param -= update` layer by layer.
    pub fn apply_update(&mut self, update: &Gradients<T>) {
        for (layer, ups) in self.layers.iter_mut().zip(&update.per_layer) {
            for (p, u) in layer.params.iter_mut().zip(ups) {
                for (v, &d) in p.data_mut().iter_mut().zip(u.data()) {
                    *v = *v - d;
                }
            }
        }
    }
}

fn layer_forward<T: Scalar>(layer: &Layer<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    match layer.spec {
        LayerSpec::Conv { .. } => {
            let mut out = ops::conv2d(x, &layer.params[0], 1)?;
            if let Some(b) = layer.bias() {
                ops::add_channel_bias(&mut out, b)?;
            }
            Ok(out)
        }
        LayerSpec::Relu => Ok(ops::relu(x)),
        LayerSpec::AvgPool2 => ops::avg_pool2(x),
        LayerSpec::GlobalAvgPool => ops::global_avg_pool(x),
        LayerSpec::Flatten => x.clone().reshape(&[x.len()]),
        LayerSpec::Dense { inputs, outputs, .. } => {
            let row = x.clone().reshape(&[1, inputs])?;
            let mut out = ops::matmul(&row, &layer.params[0])?.reshape(&[outputs])?;
            if let Some(b) = layer.bias() {
                out.add_assign(b)?;
            }
            Ok(out)
        }
    }
}

fn layer_backward<T: Scalar>(layer: &Layer<T>, x: &Tensor<T>, dout: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    match layer.spec {
        LayerSpec::Conv { .. } => {
            let (dx, dk) = ops::conv2d_backward(x, &layer.params[0], 1, dout)?;
            let mut pg = vec![dk];
            if layer.bias().is_some() {
                pg.push(ops::add_channel_bias_backward(dout));
            }
            Ok((dx, pg))
        }
        LayerSpec::Relu => Ok((ops::relu_backward(x, dout)?, Vec::new())),
        LayerSpec::AvgPool2 => Ok((ops::avg_pool2_backward(x.shape(), dout)?, Vec::new())),
        LayerSpec::GlobalAvgPool => Ok((ops::global_avg_pool_backward(x.shape(), dout)?, Vec::new())),
        LayerSpec::Flatten => Ok((dout.clone().reshape(x.shape())?, Vec::new())),
        LayerSpec::Dense { inputs, outputs, .. } => {
            let row = x.clone().reshape(&[1, inputs])?;
            let drow = dout.clone().reshape(&[1, outputs])?;
            let (dx, dw) = ops::matmul_backward(&row, &layer.params[0], &drow)?;
            let mut pg = vec![dw];
            if layer.bias().is_some() {
                pg.push(dout.clone());
            }
            Ok((dx.reshape(x.shape())?, pg))
        }
    }
}

/// Layer list of the desk-scale patch classifier:
/// `Conv(3→8,3×3) ReLU AvgPool2 Conv(8→16,3×3) ReLU GlobalAvgPool Dense(16→K)`.
pub fn patchnet_specs(num_classes: usize, bias: bool) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv {
            in_channels: 3,
            out_channels: 8,
            kernel: 3,
            bias,
        },
        LayerSpec::Relu,
        LayerSpec::AvgPool2,
        LayerSpec::Conv {
            in_channels: 8,
            out_channels: 16,
            kernel: 3,
            bias,
        },
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dense {
            inputs: 16,
            outputs: num_classes,
            bias,
        },
    ]
}

/// Layer-output index of the pooled 16-dim feature vector in PatchNet.
pub const PATCHNET_PENULTIMATE: usize = 6;

pub fn build_patchnet<T: Scalar>(num_classes: usize, seed: u64) -> Result<LayerStack<T>> {
    build_patchnet_with_bias(num_classes, seed, true)
}

pub fn build_patchnet_with_bias<T: Scalar>(num_classes: usize, seed: u64, bias: bool) -> Result<LayerStack<T>> {
    if num_classes < 2 {
        return Err(Error::Config(format!("num_classes must be ≥ 2, got {num_classes}")));
    }
    let mut net = LayerStack::from_specs(&IMAGE_SHAPE, patchnet_specs(num_classes, bias), PATCHNET_PENULTIMATE)?;
    net.init_kaiming(seed);
    Ok(net)
}
