use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Trans};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fixed negative slope of every leaky ReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if v > T::zero() {
                    v
                } else {
                    v * T::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's own output.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, out: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if out > T::zero() {
                    T::one()
                } else {
                    T::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => T::one() - out * out,
            Activation::Identity => T::one(),
        }
    }
}

/// One affine map followed by an activation. `weight` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: vec![T::zero(); output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Feed-forward stack of [`Dense`] layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    layers: Vec<Dense<T>>,
}

/// Activations recorded by [`DenseNet::forward_traced`]; entry 0 is the input,
/// entry `l + 1` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub activations: Vec<Matrix<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.activations.last().expect("trace holds at least the input")
    }
}

impl<T: Scalar> DenseNet<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("dense net needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dim(
                    format!("layer {} input", i + 1),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
            if pair[0].bias.len() != pair[0].output_dim() {
                return Err(Error::dim(format!("layer {i} bias"), pair[0].output_dim(), pair[0].bias.len()));
            }
        }
        let last = layers.last().unwrap();
        if last.bias.len() != last.output_dim() {
            return Err(Error::dim("last layer bias", last.output_dim(), last.bias.len()));
        }
        Ok(Self { layers })
    }

    /// All-zero multilayer perceptron `input -> hidden.. -> output`.
    pub fn zeros(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
    ) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output_act } else { hidden_act };
                Dense::zeros(widths[i], widths[i + 1], act)
            })
            .collect();
        Self { layers }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            let (fan_in, fan_out) = (layer.input_dim(), layer.output_dim());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weight.as_mut_slice() {
                *w = T::of(rng.random_range(-limit..limit));
            }
            layer.bias.iter_mut().for_each(|b| *b = T::zero());
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim(), l.activation))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Weight and bias slices of every layer, in layer order.
    pub fn param_slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Batched forward pass; rows of `input` are samples.
    pub fn forward(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(input)?;
        let mut cur = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = apply_layer(layer, &cur, i)?;
        }
        Ok(cur)
    }

    pub fn forward_traced(&self, input: &Matrix<T>) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = apply_layer(layer, activations.last().unwrap(), i)?;
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    /// Reverse pass. Accumulates parameter gradients into `grads` (which must
    /// have this net's shape) and returns the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace<T>, grad_out: Matrix<T>, grads: &mut DenseNet<T>) -> Result<Matrix<T>> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::dim("trace length", self.layers.len() + 1, trace.activations.len()));
        }
        let out = trace.output();
        if grad_out.rows() != out.rows() || grad_out.cols() != out.cols() {
            return Err(Error::dim("output gradient", out.rows() * out.cols(), grad_out.rows() * grad_out.cols()));
        }
        let mut g = grad_out;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let post = &trace.activations[l + 1];
            if layer.activation != Activation::Identity {
                for (gv, &y) in g.as_mut_slice().iter_mut().zip(post.as_slice()) {
                    *gv *= layer.activation.derivative_from_output(y);
                }
            }
            let input = &trace.activations[l];
            let gl = &mut grads.layers[l];
            gl.weight.gemm(T::one(), input, Trans::Yes, &g, Trans::No, T::one())?;
            for row in g.iter_rows() {
                for (b, &v) in gl.bias.iter_mut().zip(row) {
                    *b += v;
                }
            }
            let mut gin = Matrix::zeros(g.rows(), layer.input_dim());
            gin.gemm(T::one(), &g, Trans::No, &layer.weight, Trans::Yes, T::zero())?;
            g = gin;
        }
        Ok(g)
    }

    fn check_input(&self, input: &Matrix<T>) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim("dense net input", self.input_dim(), input.cols()));
        }
        Ok(())
    }
}

fn apply_layer<T: Scalar>(layer: &Dense<T>, input: &Matrix<T>, index: usize) -> Result<Matrix<T>> {
    let n = input.rows();
    let mut out = Matrix::from_fn(n, layer.output_dim(), |_, c| layer.bias[c]);
    out.gemm(T::one(), input, Trans::No, &layer.weight, Trans::No, T::one())?;
    let act = layer.activation;
    for v in out.as_mut_slice() {
        *v = act.apply(*v);
        if !v.is_finite() {
            return Err(Error::NonFiniteActivation { layer: index });
        }
    }
    Ok(out)
}

/// Forward pass of a single input vector.
pub fn dense_apply<T: Scalar>(net: &DenseNet<T>, input: &[T]) -> Result<Vec<T>> {
    if input.len() != net.input_dim() {
        return Err(Error::dim("dense_apply input", net.input_dim(), input.len()));
    }
    Ok(net.forward(&Matrix::row_vector(input))?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_with_tanh_head_outputs_zero() {
        let net = DenseNet::<f64>::zeros(3, &[5, 4], 2, Activation::LeakyRelu, Activation::Tanh);
        assert_eq!(dense_apply(&net, &[0.3, -7.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = Dense::<f64>::zeros(2, 2, Activation::Identity);
        layer.weight.set(0, 0, 1.0);
        layer.weight.set(1, 1, 1.0);
        let net = DenseNet::new(vec![layer]).unwrap();
        assert_eq!(dense_apply(&net, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn leaky_relu_hand_evaluation() {
        let mut layer = Dense::<f64>::zeros(1, 1, Activation::LeakyRelu);
        layer.weight.set(0, 0, 2.0);
        layer.bias[0] = 1.0;
        let net = DenseNet::new(vec![layer]).unwrap();
        let out = dense_apply(&net, &[-1.0]).unwrap();
        assert!((out[0] - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn unchained_layers_are_rejected() {
        let a = Dense::<f32>::zeros(2, 3, Activation::Tanh);
        let b = Dense::<f32>::zeros(4, 1, Activation::Tanh);
        assert!(matches!(DenseNet::new(vec![a, b]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn wrong_input_width_is_a_dimension_error() {
        let net = DenseNet::<f32>::zeros(3, &[], 1, Activation::Identity, Activation::Identity);
        assert!(matches!(dense_apply(&net, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn overflow_reports_layer_index() {
        let mut net = DenseNet::<f32>::zeros(1, &[1], 1, Activation::Identity, Activation::Identity);
        net.layers_mut()[0].weight.set(0, 0, 1e30);
        net.layers_mut()[1].weight.set(0, 0, 1e30);
        let err = dense_apply(&net, &[1e5]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteActivation { layer: 1 }), "{err}");
    }

    #[test]
    fn backward_matches_finite_differences_on_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = DenseNet::<f64>::zeros(3, &[4], 2, Activation::LeakyRelu, Activation::Tanh);
        net.init_uniform(&mut rng);
        let x = Matrix::new(1, 3, vec![0.3, -0.4, 0.9]).unwrap();
        // loss = sum of outputs
        let trace = net.forward_traced(&x).unwrap();
        let mut grads = net.zeros_like();
        let gin = net
            .backward(&trace, Matrix::new(1, 2, vec![1.0, 1.0]).unwrap(), &mut grads)
            .unwrap();
        let f = |v: &[f64]| -> f64 { dense_apply(&net, v).unwrap().iter().sum() };
        for i in 0..3 {
            let mut p = x.row(0).to_vec();
            let mut m = p.clone();
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - gin.get(0, i)).abs() < 1e-8);
        }
    }

    #[test]
    fn glorot_init_respects_limit_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = DenseNet::<f32>::zeros(10, &[6], 4, Activation::LeakyRelu, Activation::Identity);
        net.init_uniform(&mut rng);
        let l0 = &net.layers()[0];
        let lim = (6.0f32 / 16.0).sqrt();
        assert!(l0.weight.as_slice().iter().all(|w| w.abs() <= lim));
        assert!(l0.weight.as_slice().iter().any(|w| *w != 0.0));
        assert!(l0.bias.iter().all(|b| *b == 0.0));
    }
}
