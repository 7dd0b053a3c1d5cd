//! Dense feed-forward networks with hand-written gradients.
//!
//! Everything here runs in `f64`. Parameters of a network live in one flat
//! vector so that the optimizer and the gradient checker can treat a network
//! as a plain point in parameter space. Per layer the layout is the weight
//! matrix (row-major, `out x in`) followed by the bias vector (`out`).
//!
//! Batched passes go through `matrixmultiply::dgemm`; a single-sample pass is
//! a batch of one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
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

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
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
}

/// A stack of fully connected layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Cached activations from a batched forward pass.
///
/// `activations[0]` is the input batch, `activations[l + 1]` the output of
/// layer `l`. All matrices are row-major with one row per sample.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    batch: usize,
    activations: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Output of layer `l` (`0` is the input batch).
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.activations[l]
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }
}

/// Gradients returned by [`DenseNet::backward_batch`].
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Same layout as [`DenseNet::params`].
    pub params: Vec<f64>,
    /// Row-major `batch x input_dim`.
    pub input: Vec<f64>,
}

impl DenseNet {
    /// Network with all parameters zero.
    ///
    /// `sizes` lists the width of every layer boundary, input first.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidInput(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Dimension {
                expected: sizes.len() - 1,
                got: activations.len(),
                context: "one activation per layer",
            });
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidInput("layer widths must be positive".into()));
        }
        let n = sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; n],
        })
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn random<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        for l in 0..net.num_layers() {
            let bound = 1.0 / (net.sizes[l] as f64).sqrt();
            let (start, end) = net.layer_range(l);
            for p in &mut net.params[start..end] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Build from explicit `(weights[out][in], bias[out], activation)` layers.
    pub fn from_layers(layers: Vec<(Vec<Vec<f64>>, Vec<f64>, Activation)>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidInput("no layers given".into()))?;
        let mut sizes = vec![first.0.first().map_or(0, Vec::len)];
        let mut activations = Vec::with_capacity(layers.len());
        let mut params = Vec::new();
        for (weights, bias, act) in layers {
            let inp = *sizes.last().unwrap();
            if weights.len() != bias.len() {
                return Err(Error::Dimension {
                    expected: weights.len(),
                    got: bias.len(),
                    context: "bias length must equal weight rows",
                });
            }
            for row in &weights {
                if row.len() != inp {
                    return Err(Error::Dimension {
                        expected: inp,
                        got: row.len(),
                        context: "layer widths must chain",
                    });
                }
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&bias);
            sizes.push(bias.len());
            activations.push(act);
        }
        let mut net = Self::zeros(&sizes, &activations)?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: params.len(),
                context: "flat parameter vector",
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes
            .windows(2)
            .take(layer)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    fn layer_range(&self, layer: usize) -> (usize, usize) {
        let start = self.layer_offset(layer);
        let (inp, out) = (self.sizes[layer], self.sizes[layer + 1]);
        (start, start + out * inp + out)
    }

    /// Row-major `out x in` weights of one layer.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let start = self.layer_offset(layer);
        &self.params[start..start + self.sizes[layer + 1] * self.sizes[layer]]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (_, end) = self.layer_range(layer);
        &self.params[end - self.sizes[layer + 1]..end]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (_, end) = self.layer_range(layer);
        let out = self.sizes[layer + 1];
        &mut self.params[end - out..end]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, 1)?.output().to_vec())
    }

    /// Forward pass over `batch` samples stored row-major in `inputs`.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<ForwardPass> {
        if inputs.len() != batch * self.input_dim() {
            return Err(Error::Dimension {
                expected: batch * self.input_dim(),
                got: inputs.len(),
                context: "network input batch",
            });
        }
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(inputs.to_vec());
        for l in 0..self.num_layers() {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &activations[l];
            let w = self.weights(l);
            let b = self.bias(l);
            let mut z = vec![0.0; batch * out];
            for row in z.chunks_exact_mut(out) {
                row.copy_from_slice(b);
            }
            // z (batch x out) += x (batch x in) * w^T (in x out)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    inp,
                    out,
                    1.0,
                    x.as_ptr(),
                    inp as isize,
                    1,
                    w.as_ptr(),
                    1,
                    inp as isize,
                    1.0,
                    z.as_mut_ptr(),
                    out as isize,
                    1,
                );
            }
            let act = self.activations[l];
            if act != Activation::Identity {
                for v in &mut z {
                    *v = act.apply(*v);
                }
            }
            activations.push(z);
        }
        Ok(ForwardPass { batch, activations })
    }

    /// Gradients of the scalar loss whose gradient with respect to the network
    /// output is `upstream` (row-major `batch x output_dim`). Parameter
    /// gradients are summed over the batch.
    pub fn backward_batch(&self, pass: &ForwardPass, upstream: &[f64]) -> Result<Gradients> {
        let batch = pass.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::Dimension {
                expected: batch * self.output_dim(),
                got: upstream.len(),
                context: "upstream gradient",
            });
        }
        if pass.activations.len() != self.num_layers() + 1
            || pass.activations[0].len() != batch * self.input_dim()
        {
            return Err(Error::InvalidInput(
                "forward pass does not belong to this network".into(),
            ));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activations[l];
            if act != Activation::Identity {
                for (d, &y) in delta.iter_mut().zip(&pass.activations[l + 1]) {
                    *d *= act.derivative_from_output(y);
                }
            }
            let x = &pass.activations[l];
            let (start, end) = self.layer_range(l);
            let (gw, gb) = grads[start..end].split_at_mut(out * inp);
            // gw (out x in) = delta^T (out x batch) * x (batch x in)
            unsafe {
                matrixmultiply::dgemm(
                    out,
                    batch,
                    inp,
                    1.0,
                    delta.as_ptr(),
                    1,
                    out as isize,
                    x.as_ptr(),
                    inp as isize,
                    1,
                    0.0,
                    gw.as_mut_ptr(),
                    inp as isize,
                    1,
                );
            }
            for row in delta.chunks_exact(out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            // dx (batch x in) = delta (batch x out) * w (out x in)
            let w = self.weights(l);
            let mut dx = vec![0.0; batch * inp];
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    out,
                    inp,
                    1.0,
                    delta.as_ptr(),
                    out as isize,
                    1,
                    w.as_ptr(),
                    inp as isize,
                    1,
                    0.0,
                    dx.as_mut_ptr(),
                    inp as isize,
                    1,
                );
            }
            delta = dx;
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }

    /// Single-sample backward pass; returns `(param_grads, input_grad)`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let pass = self.forward_batch(input, 1)?;
        let g = self.backward_batch(&pass, upstream)?;
        Ok((g.params, g.input))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates and step counter of the ADAM optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            config,
        }
    }

    /// One bias-corrected descent step on `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
                context: "adam parameter/gradient length",
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at index {i} (adam step {})",
                self.t + 1
            )));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Maximum relative error between the analytic gradient returned by
/// `loss_fn` and central finite differences with the given step.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, floor)` with
/// `floor = 1e-4 * max(1, max_j |a_j|)`, so that round-off in the loss does
/// not dominate coordinates whose gradient is negligible next to the rest.
pub fn grad_check<F>(loss_fn: F, params: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_fn(params);
    let floor = 1e-4 * analytic.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let (up, _) = loss_fn(&probe);
        probe[i] = orig - step;
        let (down, _) = loss_fn(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_zero_weights_returns_bias() {
        let net = DenseNet::from_layers(vec![(
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![1.0, 2.0],
            Activation::Identity,
        )])
        .unwrap();
        assert_eq!(net.forward(&[3.0, -7.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_relu_identity_weights() {
        let net = DenseNet::from_layers(vec![(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Relu,
        )])
        .unwrap();
        assert_eq!(net.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn forward_tanh_of_one() {
        let net =
            DenseNet::from_layers(vec![(vec![vec![1.0]], vec![0.0], Activation::Tanh)]).unwrap();
        // tanh(1) to 20 digits: 0.76159415595576488812
        let y = net.forward(&[1.0]).unwrap()[0];
        assert!((y - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = DenseNet::zeros(&[3, 2], &[Activation::Identity]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let r = DenseNet::from_layers(vec![
            (vec![vec![1.0, 1.0]], vec![0.0], Activation::Tanh),
            (vec![vec![1.0, 1.0]], vec![0.0], Activation::Identity),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net =
            DenseNet::random(&[3, 5, 2], &[Activation::Tanh, Activation::Identity], &mut rng)
                .unwrap();
        let (gp, gx) = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(gp.iter().all(|&g| g == 0.0));
        assert!(gx.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_linear_scalar() {
        let net =
            DenseNet::from_layers(vec![(vec![vec![0.3]], vec![0.1], Activation::Identity)])
                .unwrap();
        let (gp, gx) = net.backward(&[2.5], &[1.0]).unwrap();
        assert_eq!(gp, vec![2.5, 1.0]);
        assert_eq!(gx, vec![0.3]);
    }

    fn tanh_net_loss(net: &DenseNet, x: &[f64], batch: usize, coeffs: &[f64]) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
        let net = net.clone();
        let x = x.to_vec();
        let coeffs = coeffs.to_vec();
        move |p: &[f64]| {
            let mut n = net.clone();
            n.set_params(p).unwrap();
            let pass = n.forward_batch(&x, batch).unwrap();
            let loss = pass.output().iter().zip(&coeffs).map(|(y, c)| y * c).sum();
            let g = n.backward_batch(&pass, &coeffs).unwrap();
            (loss, g.params)
        }
    }

    #[test]
    fn backward_matches_finite_differences_two_layer_tanh() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNet::random(&[4, 6, 3], &[Activation::Tanh, Activation::Tanh], &mut rng)
            .unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = grad_check(tanh_net_loss(&net, &x, 2, &coeffs), net.params(), 1e-6);
        assert!(err <= 1e-5, "max rel err {err}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::random(
            &[3, 7, 2],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let coeffs = [0.7, -1.3];
        let f = |x: &[f64]| {
            let y = net.forward(x).unwrap();
            let (_, gx) = net.backward(x, &coeffs).unwrap();
            (y[0] * coeffs[0] + y[1] * coeffs[1], gx)
        };
        assert!(grad_check(f, &[0.2, -0.4, 0.9], 1e-6) <= 1e-6);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut state = AdamState::new(3, AdamConfig::with_lr(0.01));
        let mut p = vec![1.0, -2.0, 3.0];
        state.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert!(state.m.iter().chain(&state.v).all(|&x| x == 0.0));
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut state = AdamState::new(3, AdamConfig::with_lr(0.01));
        let mut p = vec![0.0; 3];
        state.step(&mut p, &[0.5, -3.0, 100.0]).unwrap();
        // m_hat = g, v_hat = g^2  =>  delta = -lr * g / (|g| + eps)
        for (x, g) in p.iter().zip([0.5f64, -3.0, 100.0]) {
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-15);
            assert!((x + 0.01 * g.signum()).abs() < 0.01 * 1e-8 / g.abs() + 1e-15);
        }
    }

    #[test]
    fn adam_moment_decay_after_zero_gradients() {
        let cfg = AdamConfig::with_lr(0.01);
        let mut state = AdamState::new(1, cfg);
        let mut p = vec![0.0];
        state.step(&mut p, &[2.0]).unwrap();
        let after_first = p[0];
        state.step(&mut p, &[0.0]).unwrap();
        state.step(&mut p, &[0.0]).unwrap();
        // hand evaluation: m_t = 0.1*2*0.9^(t-1), v_t = 0.001*4*0.999^(t-1)
        let mut expected = after_first;
        for t in 2..=3 {
            let m = 0.2 * 0.9f64.powi(t - 1);
            let v = 0.004 * 0.999f64.powi(t - 1);
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            expected -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        assert!((p[0] - expected).abs() < 1e-15);
        assert!(p[0] < after_first);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut state = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            state.step(&mut p, &[1.0, f64::NAN]),
            Err(Error::Numerical(_))
        ));
        assert_eq!(state.t, 0);
    }

    #[test]
    fn adam_is_bit_reproducible() {
        let grads = [0.3, -0.1, 2.0];
        let run = || {
            let mut s = AdamState::new(3, AdamConfig::with_lr(0.05));
            let mut p = vec![0.1, 0.2, 0.3];
            for _ in 0..5 {
                s.step(&mut p, &grads).unwrap();
            }
            (p, s)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax(&[0.0, 2f64.ln(), 3f64.ln()]);
        for (x, e) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((x - e).abs() < 1e-15);
        }
        let a = softmax(&[0.3, -1.2]);
        let b = softmax(&[1000.3, 998.8]);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 5.0, 5.0]), 1);
    }

    #[test]
    fn grad_check_quadratic() {
        let f = |p: &[f64]| (0.5 * p.iter().map(|x| x * x).sum::<f64>(), p.to_vec());
        let p = [0.3, -1.7, 2.2, 0.9];
        assert!(grad_check(f, &p, 1e-6) <= 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-15.0f64..15.0, 1..8)) {
            let p = softmax(&logits);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0 || logits.len() == 1));
        }

        #[test]
        fn backward_matches_finite_differences_random_nets(
            seed in any::<u64>(),
            hidden in 1usize..6,
            inp in 1usize..4,
            batch in 1usize..4,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = DenseNet::random(
                &[inp, hidden, 2],
                &[Activation::Tanh, Activation::Identity],
                &mut rng,
            ).unwrap();
            let x: Vec<f64> = (0..inp * batch).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let coeffs: Vec<f64> = (0..2 * batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let err = grad_check(tanh_net_loss(&net, &x, batch, &coeffs), net.params(), 1e-6);
            prop_assert!(err <= 1e-5, "rel err {}", err);
        }

        #[test]
        fn forward_is_deterministic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = DenseNet::random(&[3, 8, 4, 3], &[Activation::Relu, Activation::Relu, Activation::Identity], &mut rng).unwrap();
            let x = [0.5, -0.25, 1.5];
            prop_assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        }
    }
}
