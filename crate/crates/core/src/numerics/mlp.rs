use rand::Rng;

use super::loss::LossTarget;
use super::matrix::{axpy, dot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Shape of a fully connected network, input size first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive: {layer_sizes:?}"
            )));
        }
        Ok(MlpSpec {
            layer_sizes,
            hidden_activation,
            output_activation,
        })
    }

    /// ReLU hidden layers with a linear output.
    pub fn relu(layer_sizes: &[usize]) -> Result<Self> {
        MlpSpec::new(layer_sizes.to_vec(), Activation::Relu, Activation::Linear)
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// Weights (`out × in`) and bias (`out`) of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        LayerParams {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    fn same_shape(&self, other: &LayerParams) -> bool {
        self.weights.rows() == other.weights.rows()
            && self.weights.cols() == other.weights.cols()
            && self.bias.len() == other.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    layers: Vec<LayerParams>,
}

/// Gradient of a scalar loss with respect to every parameter of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

impl ParamGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        ParamGrads {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.weights.cols(), l.weights.rows()))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.data_mut().iter_mut().for_each(|w| *w *= factor);
            l.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) -> Result<()> {
        self.check_shape(&other.layers)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(1.0, b.weights.data(), a.weights.data_mut());
            axpy(1.0, &b.bias, &mut a.bias);
        }
        Ok(())
    }

    pub(crate) fn check_shape(&self, layers: &[LayerParams]) -> Result<()> {
        if self.layers.len() != layers.len() {
            return Err(Error::Dimension {
                context: "gradient layer count",
                expected: layers.len(),
                got: self.layers.len(),
            });
        }
        for (g, p) in self.layers.iter().zip(layers) {
            if !g.same_shape(p) {
                return Err(Error::Dimension {
                    context: "gradient layer shape",
                    expected: p.weights.rows() * p.weights.cols(),
                    got: g.weights.rows() * g.weights.cols(),
                });
            }
        }
        Ok(())
    }

    /// All entries as one flat sequence in checkpoint order.
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

/// Per-layer pre-activations and post-activations recorded by a forward pass.
/// `post[0]` is the input batch; `post[l + 1]` is the output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<Matrix>,
    pub post: Vec<Matrix>,
}

impl MlpParams {
    /// All-zero weights and biases.
    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| LayerParams::zeros(w[0], w[1]))
            .collect();
        MlpParams { spec, layers }
    }

    /// Weights uniform in ±sqrt(6 / (fan_in + fan_out)); zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut params = MlpParams::zeros(spec);
        for layer in &mut params.layers {
            let limit = (6.0 / (layer.weights.cols() + layer.weights.rows()) as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = rng.random_range(-limit..=limit);
            }
        }
        params
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<LayerParams>) -> Result<Self> {
        let expected = MlpParams::zeros(spec);
        ParamGrads { layers: layers.clone() }.check_shape(&expected.layers)?;
        Ok(MlpParams {
            spec: expected.spec,
            layers,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.spec.input_size() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.spec.input_size(),
                got: cols,
            });
        }
        Ok(())
    }

    /// Output for a batch (one example per row) without recording a cache.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x.cols())?;
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &current);
            let act = self.spec.activation(l);
            z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            if !z.is_finite() {
                return Err(Error::NonFinite { layer: l });
            }
            current = z;
        }
        Ok(current)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.predict_batch(&batch)?.into_data())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x.cols())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, post.last().unwrap());
            if !z.is_finite() {
                return Err(Error::NonFinite { layer: l });
            }
            let act = self.spec.activation(l);
            let mut a = z.clone();
            a.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            pre.push(z);
            post.push(a);
        }
        let out = post.last().unwrap().clone();
        Ok((out, ForwardCache { pre, post }))
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let (out, cache) = self.forward_batch(&batch)?;
        Ok((out.into_data(), cache))
    }

    /// Backpropagates `d_output` (∂L/∂output, one row per example) through the
    /// cached forward pass. Parameter gradients are summed over the batch.
    /// The input gradient is only computed when `want_input` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_output: &Matrix,
        want_input: bool,
    ) -> Result<(ParamGrads, Option<Matrix>)> {
        let batch = cache.post[0].rows();
        if d_output.rows() != batch || d_output.cols() != self.spec.output_size() {
            return Err(Error::Dimension {
                context: "output gradient",
                expected: batch * self.spec.output_size(),
                got: d_output.rows() * d_output.cols(),
            });
        }
        let mut grads = ParamGrads::zeros_like(self);
        let mut upstream = d_output.clone();
        for l in (0..self.layers.len()).rev() {
            let act = self.spec.activation(l);
            let z = &cache.pre[l];
            let mut delta = upstream;
            for (d, &zv) in delta.data_mut().iter_mut().zip(z.data()) {
                *d *= act.derivative(zv);
            }
            if !delta.is_finite() {
                return Err(Error::NonFinite { layer: l });
            }
            let a_prev = &cache.post[l];
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let inputs = layer.weights.cols();
            for b in 0..batch {
                let prev_row = a_prev.row(b);
                for (o, &d) in delta.row(b).iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    axpy(d, prev_row, g.weights.row_mut(o));
                    g.bias[o] += d;
                }
            }
            if l == 0 && !want_input {
                return Ok((grads, None));
            }
            let mut d_prev = Matrix::zeros(batch, inputs);
            for b in 0..batch {
                let out_row = d_prev.row_mut(b);
                for (o, &d) in delta.row(b).iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, layer.weights.row(o), out_row);
                    }
                }
            }
            upstream = d_prev;
        }
        Ok((grads, Some(upstream)))
    }

    /// ∇ₓ of the loss at a single input.
    pub fn input_gradient(&self, x: &[f64], target: &LossTarget) -> Result<Vec<f64>> {
        let (out, cache) = self.forward(x)?;
        let (_, d_out) = target.value_and_grad(&out)?;
        self.input_gradient_from_output(&cache, d_out)
    }

    /// ∇ₓ given an explicit ∂L/∂output for a single cached example.
    pub fn input_gradient_from_output(
        &self,
        cache: &ForwardCache,
        d_output: Vec<f64>,
    ) -> Result<Vec<f64>> {
        let d = Matrix::from_vec(1, d_output.len(), d_output)?;
        let (_, d_input) = self.backward(cache, &d, true)?;
        let g = d_input.expect("input gradient requested").into_data();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: 0 });
        }
        Ok(g)
    }

    /// Parameter gradient of the loss at a single input.
    pub fn backprop_params(&self, x: &[f64], target: &LossTarget) -> Result<ParamGrads> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        self.backprop_params_batch(&batch, std::slice::from_ref(target))
    }

    /// Mean parameter gradient over a batch (one target per row).
    pub fn backprop_params_batch(&self, x: &Matrix, targets: &[LossTarget]) -> Result<ParamGrads> {
        if targets.len() != x.rows() {
            return Err(Error::Dimension {
                context: "batch targets",
                expected: x.rows(),
                got: targets.len(),
            });
        }
        let (out, cache) = self.forward_batch(x)?;
        let mut d_out = Matrix::zeros(out.rows(), out.cols());
        for (b, t) in targets.iter().enumerate() {
            let (_, g) = t.value_and_grad(out.row(b))?;
            d_out.row_mut(b).copy_from_slice(&g);
        }
        let (mut grads, _) = self.backward(&cache, &d_out, false)?;
        grads.scale(1.0 / x.rows().max(1) as f64);
        Ok(grads)
    }
}

/// `x · Wᵀ + b` for a batch `x`.
fn affine(layer: &LayerParams, x: &Matrix) -> Matrix {
    let outputs = layer.weights.rows();
    let mut z = Matrix::zeros(x.rows(), outputs);
    for b in 0..x.rows() {
        let xr = x.row(b);
        let zr = z.row_mut(b);
        for (o, zv) in zr.iter_mut().enumerate() {
            *zv = dot(layer.weights.row(o), xr) + layer.bias[o];
        }
    }
    z
}

/// Checkpoint order: weights then bias, layer by layer.
fn flatten(layers: &[LayerParams]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.data());
        out.extend_from_slice(&l.bias);
    }
    out
}
