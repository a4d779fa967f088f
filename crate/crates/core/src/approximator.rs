//! Dense feedforward approximators with hand-written backpropagation.
//!
//! Parameters live in one flat `f64` vector preceded by a layer-shape
//! header. Per layer the layout is the weight matrix in row-major
//! `[output][input]` order followed by the bias vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Identity),
            other => Err(Error::Format {
                what: "layer header",
                reason: format!("unknown activation code {other}"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    pub fn n_params(&self) -> usize {
        self.input_dim * self.output_dim + self.output_dim
    }
}

/// Builds the layer list of a multilayer perceptron.
pub fn mlp_layers(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    hidden_activation: Activation,
    output_activation: Activation,
) -> Vec<LayerSpec> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &width in hidden {
        layers.push(LayerSpec::new(prev, width, hidden_activation));
        prev = width;
    }
    layers.push(LayerSpec::new(prev, output_dim, output_activation));
    layers
}

fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Shape("approximator needs at least one layer".into()));
    }
    for (i, layer) in layers.iter().enumerate() {
        if layer.input_dim == 0 || layer.output_dim == 0 {
            return Err(Error::Shape(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && layers[i - 1].output_dim != layer.input_dim {
            return Err(Error::Shape(format!(
                "layer {i} expects {} inputs but layer {} emits {}",
                layer.input_dim,
                i - 1,
                layers[i - 1].output_dim
            )));
        }
        if layer.activation == Activation::Identity && i + 1 != layers.len() {
            return Err(Error::Shape(format!(
                "identity activation only allowed on the final layer (found on layer {i})"
            )));
        }
    }
    Ok(())
}

/// Flat parameter vector plus the layer header describing it.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproximatorParams {
    layers: Vec<LayerSpec>,
    values: Vec<f64>,
}

/// Post-activation values of every layer from one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input at least")
    }
}

impl ApproximatorParams {
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        validate_layers(&layers)?;
        let n = layers.iter().map(LayerSpec::n_params).sum();
        Ok(Self {
            layers,
            values: vec![0.0; n],
        })
    }

    pub fn from_values(layers: Vec<LayerSpec>, values: Vec<f64>) -> Result<Self> {
        validate_layers(&layers)?;
        let n: usize = layers.iter().map(LayerSpec::n_params).sum();
        check_dim("parameter vector", n, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(Self { layers, values })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(layers)?;
        let mut offset = 0;
        for layer in &params.layers {
            let limit = (6.0 / (layer.input_dim + layer.output_dim) as f64).sqrt();
            let n_weights = layer.input_dim * layer.output_dim;
            for w in &mut params.values[offset..offset + n_weights] {
                *w = rng.random_range(-limit..limit);
            }
            offset += layer.n_params();
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers == other.layers
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("forward input", self.input_dim(), input.len())?;
        let mut x = input.to_vec();
        let mut offset = 0;
        for layer in &self.layers {
            x = self.apply_layer(layer, offset, &x);
            offset += layer.n_params();
        }
        Ok(x)
    }

    /// Forward pass that keeps every intermediate for [`Self::backward`].
    pub fn forward_traced(&self, input: &[f64]) -> Result<Trace> {
        check_dim("forward input", self.input_dim(), input.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let mut offset = 0;
        for layer in &self.layers {
            let next = self.apply_layer(layer, offset, activations.last().unwrap());
            activations.push(next);
            offset += layer.n_params();
        }
        Ok(Trace { activations })
    }

    #[inline]
    fn apply_layer(&self, layer: &LayerSpec, offset: usize, x: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (layer.input_dim, layer.output_dim);
        let weights = &self.values[offset..offset + n_in * n_out];
        let biases = &self.values[offset + n_in * n_out..offset + layer.n_params()];
        weights
            .chunks_exact(n_in)
            .zip(biases)
            .map(|(row, b)| {
                let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
                layer.activation.apply(z)
            })
            .collect()
    }

    /// Backpropagates `upstream` (dL/d output) through a traced pass.
    ///
    /// Parameter gradients are *added* into `param_grad`; the gradient with
    /// respect to the network input is returned.
    pub fn backward(&self, trace: &Trace, upstream: &[f64], param_grad: &mut [f64]) -> Result<Vec<f64>> {
        check_dim("gradient buffer", self.values.len(), param_grad.len())?;
        self.backward_impl(trace, upstream, Some(param_grad))
    }

    /// Gradient of `upstream · output` with respect to the input only.
    pub fn input_gradient(&self, trace: &Trace, upstream: &[f64]) -> Result<Vec<f64>> {
        self.backward_impl(trace, upstream, None)
    }

    fn backward_impl(&self, trace: &Trace, upstream: &[f64], mut param_grad: Option<&mut [f64]>) -> Result<Vec<f64>> {
        check_dim("upstream gradient", self.output_dim(), upstream.len())?;
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.n_params();
        }

        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.input_dim, layer.output_dim);
            let x = &trace.activations[l];
            let y = &trace.activations[l + 1];
            for (d, &yj) in delta.iter_mut().zip(y) {
                *d *= layer.activation.derivative_at_output(yj);
            }

            let w_off = offsets[l];
            let b_off = w_off + n_in * n_out;
            let weights = &self.values[w_off..b_off];
            let mut next = vec![0.0; n_in];
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = j * n_in;
                if let Some(pg) = param_grad.as_deref_mut() {
                    for (g, xi) in pg[w_off + row..w_off + row + n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                    pg[b_off + j] += d;
                }
                for (nx, w) in next.iter_mut().zip(&weights[row..row + n_in]) {
                    *nx += d * w;
                }
            }
            debug_assert_eq!(delta.len(), n_out);
            delta = next;
        }
        Ok(delta)
    }

    /// Gradient of `upstream · forward(input)` with respect to the parameters.
    pub fn grad(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_traced(input)?;
        let mut g = vec![0.0; self.values.len()];
        self.backward(&trace, upstream, &mut g)?;
        Ok(g)
    }
}

/// Exponential moving average `(1 - tau) * target + tau * online`.
pub fn polyak_update(
    target: &ApproximatorParams,
    online: &ApproximatorParams,
    tau: f64,
) -> Result<ApproximatorParams> {
    let mut out = target.clone();
    polyak_update_in_place(&mut out, online, tau)?;
    Ok(out)
}

pub fn polyak_update_in_place(
    target: &mut ApproximatorParams,
    online: &ApproximatorParams,
    tau: f64,
) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("polyak tau {tau} outside (0, 1]")));
    }
    if !target.same_shape(online) {
        return Err(Error::Shape("polyak update between differently shaped networks".into()));
    }
    for (t, o) in target.values.iter_mut().zip(&online.values) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    GradientDescent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step_size: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub const DEFAULT_STEP_SIZE: f64 = 3e-4;

    pub fn adam(n_params: usize, step_size: f64) -> Self {
        Self::new(
            n_params,
            step_size,
            OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
        )
    }

    pub fn gradient_descent(n_params: usize, step_size: f64) -> Self {
        Self::new(n_params, step_size, OptimizerKind::GradientDescent)
    }

    pub fn new(n_params: usize, step_size: f64, kind: OptimizerKind) -> Self {
        Self {
            kind,
            step_size,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, params: &mut ApproximatorParams, gradient: &[f64]) -> Result<()> {
        self.step_slice(&mut params.values, gradient)
    }

    /// One descent step on a raw parameter slice.
    pub fn step_slice(&mut self, values: &mut [f64], gradient: &[f64]) -> Result<()> {
        check_dim("optimizer parameters", self.first_moment.len(), values.len())?;
        check_dim("optimizer gradient", values.len(), gradient.len())?;
        if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {i} = {} at optimizer step {}",
                gradient[i], self.step_count
            )));
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::GradientDescent => {
                for (v, g) in values.iter_mut().zip(gradient) {
                    *v -= self.step_size * g;
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((v, g), m), s) in values
                    .iter_mut()
                    .zip(gradient)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *s = beta2 * *s + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let s_hat = *s / c2;
                    *v -= self.step_size * m_hat / (s_hat.sqrt() + epsilon);
                }
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} after optimizer step")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize]) -> ApproximatorParams {
        let layers = mlp_layers(
            dims[0],
            &dims[1..dims.len() - 1],
            dims[dims.len() - 1],
            Activation::Tanh,
            Activation::Identity,
        );
        ApproximatorParams::init(layers, rng).unwrap()
    }

    /// Straight-line evaluator written independently of `apply_layer`.
    #[allow(clippy::needless_range_loop)]
    fn reference_forward(p: &ApproximatorParams, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut off = 0;
        for layer in p.layers() {
            let mut y = vec![0.0; layer.output_dim];
            for j in 0..layer.output_dim {
                let mut z = p.values()[off + layer.input_dim * layer.output_dim + j];
                for i in 0..layer.input_dim {
                    z += p.values()[off + j * layer.input_dim + i] * x[i];
                }
                y[j] = match layer.activation {
                    Activation::Tanh => z.tanh(),
                    Activation::Relu => {
                        if z > 0.0 {
                            z
                        } else {
                            0.0
                        }
                    }
                    Activation::Identity => z,
                };
            }
            off += layer.n_params();
            x = y;
        }
        x
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = ApproximatorParams::zeros(mlp_layers(3, &[4], 2, Activation::Tanh, Activation::Identity))
            .unwrap();
        assert_eq!(p.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_is_identity_map() {
        let layers = vec![LayerSpec::new(3, 3, Activation::Identity)];
        let mut values = vec![0.0; 12];
        for i in 0..3 {
            values[i * 3 + i] = 1.0;
        }
        let p = ApproximatorParams::from_values(layers, values).unwrap();
        let x = [0.25, -7.0, 3.5];
        assert_eq!(p.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_reference_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let p = random_net(&mut rng, &[3, 5, 2]);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = p.forward(&x).unwrap();
            let b = reference_forward(&p, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let p = ApproximatorParams::zeros(mlp_layers(3, &[], 1, Activation::Tanh, Activation::Identity))
            .unwrap();
        assert!(matches!(p.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn identity_rejected_on_hidden_layer() {
        let layers = vec![
            LayerSpec::new(2, 2, Activation::Identity),
            LayerSpec::new(2, 1, Activation::Identity),
        ];
        assert!(ApproximatorParams::zeros(layers).is_err());
    }

    #[test]
    fn linear_gradient() {
        let layers = vec![LayerSpec::new(1, 1, Activation::Identity)];
        let p = ApproximatorParams::from_values(layers, vec![0.7, -0.2]).unwrap();
        assert_eq!(p.grad(&[3.0], &[1.0]).unwrap(), vec![3.0, 1.0]);
        assert_eq!(p.grad(&[3.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..50 {
            let dims: &[usize] = if trial % 2 == 0 { &[3, 4, 4, 2] } else { &[2, 6, 1] };
            let mut p = random_net(&mut rng, dims);
            if trial % 3 == 0 {
                // exercise relu on a hidden layer
                let mut layers = p.layers().to_vec();
                layers[0].activation = Activation::Relu;
                p = ApproximatorParams::from_values(layers, p.values().to_vec()).unwrap();
            }
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up: Vec<f64> = (0..p.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = p.grad(&x, &up).unwrap();
            let h = 1e-5;
            let mut fd = vec![0.0; p.len()];
            for (k, slot) in fd.iter_mut().enumerate() {
                let mut plus = p.clone();
                plus.values_mut()[k] += h;
                let mut minus = p.clone();
                minus.values_mut()[k] -= h;
                let fp: f64 = plus.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum();
                let fm: f64 = minus.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum();
                *slot = (fp - fm) / (2.0 * h);
            }
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt()
                + fd.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(num / den.max(1e-12) <= 1e-4, "trial {trial}: rel err {}", num / den);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_net(&mut rng, &[4, 8, 1]);
        let x = vec![0.1, -0.4, 0.8, 0.3];
        let trace = p.forward_traced(&x).unwrap();
        let mut scratch = vec![0.0; p.len()];
        let gx = p.backward(&trace, &[1.0], &mut scratch).unwrap();
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            let fd = (p.forward(&xp).unwrap()[0] - p.forward(&xm).unwrap()[0]) / 2e-6;
            assert!((fd - gx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn gradient_descent_on_square() {
        // f(w) = w^2, f'(w) = 2w
        let layers = vec![LayerSpec::new(1, 1, Activation::Identity)];
        let mut p = ApproximatorParams::from_values(layers, vec![1.0, 0.0]).unwrap();
        let mut opt = OptimizerState::gradient_descent(2, 0.1);
        let g = vec![2.0 * p.values()[0], 0.0];
        opt.step(&mut p, &g).unwrap();
        assert!((p.values()[0] - 0.8).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = random_net(&mut rng, &[2, 3, 1]);
        let before = p.clone();
        let mut opt = OptimizerState::adam(p.len(), 1e-3);
        let zero = vec![0.0; p.len()];
        opt.step(&mut p, &zero).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(w) = 0.5 * sum_i a_i (w_i - c_i)^2, minimizer c
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..3.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut w = vec![0.0; 4];
        let mut opt = OptimizerState::adam(4, 0.1);
        for _ in 0..200 {
            let g: Vec<f64> = (0..4).map(|i| a[i] * (w[i] - c[i])).collect();
            opt.step_slice(&mut w, &g).unwrap();
        }
        for i in 0..4 {
            assert!((w[i] - c[i]).abs() < 1e-3, "{} vs {}", w[i], c[i]);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut opt = OptimizerState::adam(2, 1e-3);
        let mut w = vec![0.0, 0.0];
        let err = opt.step_slice(&mut w, &[1.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("gradient entry 1"));
    }

    #[test]
    fn polyak_examples() {
        let layers = vec![LayerSpec::new(1, 1, Activation::Identity)];
        let zero = ApproximatorParams::from_values(layers.clone(), vec![0.0, 0.0]).unwrap();
        let one = ApproximatorParams::from_values(layers.clone(), vec![1.0, 1.0]).unwrap();
        assert_eq!(polyak_update(&zero, &one, 1.0).unwrap(), one);
        assert_eq!(polyak_update(&zero, &one, 0.5).unwrap().values(), &[0.5, 0.5]);
        assert!(polyak_update(&zero, &one, 0.0).is_err());

        // repeated updates: distance shrinks as (1 - tau)^n
        let mut t = zero.clone();
        for _ in 0..20 {
            polyak_update_in_place(&mut t, &one, 0.1).unwrap();
        }
        let expected = 1.0 - 0.9f64.powi(20);
        assert!((t.values()[0] - expected).abs() < 1e-12);

        let other = ApproximatorParams::zeros(vec![LayerSpec::new(2, 1, Activation::Identity)]).unwrap();
        assert!(polyak_update(&zero, &other, 0.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn polyak_is_a_contraction(seed in 0u64..1000, tau in 0.01f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_net(&mut rng, &[2, 3, 1]);
            let o = random_net(&mut rng, &[2, 3, 1]);
            let dist = |a: &ApproximatorParams, b: &ApproximatorParams| -> f64 {
                a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            };
            let t2 = polyak_update(&t, &o, tau).unwrap();
            let lhs = dist(&t2, &o);
            let rhs = (1.0 - tau) * dist(&t, &o);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn forward_is_bitwise_deterministic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_net(&mut rng, &[3, 4, 2]);
            let x = [0.1, 0.2, -0.3];
            let a = p.forward(&x).unwrap();
            let b = p.forward(&x).unwrap();
            proptest::prop_assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }
}
