//! Minimal dense feedforward network engine.
//!
//! Scalar-output stacks of [`DenseLayer`] with exact reverse-mode gradients,
//! a central-finite-difference oracle, and plain SGD with non-negativity
//! projection for constrained layers. Everything is `f64` and deterministic
//! under a seeded RNG; no graphs, no batching magic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activation function attached to a layer.
///
/// Every variant is nondecreasing on all of the reals, which is what makes
/// constrained stacks monotone end to end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivationKind {
    Linear,
    ReLU,
    Sigmoid,
    /// Truncated rectifier `min(alpha * sigmoid(beta * x), max(0, x))`.
    ///
    /// Bounded above by `alpha`; `beta` controls how sharply the bound is
    /// approached. Both are fixed per-layer hyperparameters.
    PTRelu { alpha: f64, beta: f64 },
}

impl ActivationKind {
    pub fn validate(&self) -> Result<()> {
        if let ActivationKind::PTRelu { alpha, beta } = self {
            if !(*alpha > 0.0) || !(*beta > 0.0) {
                return Err(Error::Spec(format!(
                    "PTRelu requires alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}"
                )));
            }
        }
        Ok(())
    }

    /// Activation value. Assumes a finite input; boundary checking happens in
    /// [`activate`] and [`forward`].
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Linear => x,
            ActivationKind::ReLU => x.max(0.0),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::PTRelu { alpha, beta } => {
                (alpha * sigmoid(beta * x)).min(x.max(0.0))
            }
        }
    }

    /// Derivative with respect to the pre-activation.
    ///
    /// Kink conventions are deterministic: ReLU (and the rectifier branch of
    /// PTRelu) use slope 0 at x = 0, and a PTRelu branch tie resolves to the
    /// `max(0, x)` branch.
    pub fn slope(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Linear => 1.0,
            ActivationKind::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::PTRelu { alpha, beta } => {
                let cap = alpha * sigmoid(beta * x);
                let rect = x.max(0.0);
                if cap < rect {
                    let s = sigmoid(beta * x);
                    alpha * beta * s * (1.0 - s)
                } else if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// True when `x` sits within `eps` of a non-differentiable point of this
    /// activation. Used by gradient checks to exclude kink neighborhoods.
    pub fn near_kink(&self, x: f64, eps: f64) -> bool {
        match self {
            ActivationKind::Linear | ActivationKind::Sigmoid => false,
            ActivationKind::ReLU => x.abs() < eps,
            ActivationKind::PTRelu { alpha, beta } => {
                let cap = alpha * sigmoid(beta * x);
                x.abs() < eps || (cap - x.max(0.0)).abs() < eps
            }
        }
    }
}

/// Evaluate an activation at `x`, rejecting non-finite inputs and invalid
/// parameterizations.
pub fn activate(x: f64, kind: &ActivationKind) -> Result<f64> {
    kind.validate()?;
    if !x.is_finite() {
        return Err(Error::NonFiniteInput(x));
    }
    Ok(kind.apply(x))
}

/// Dense affine layer `activation(W x + b)`.
///
/// Weights are row-major with shape `(out_dim, in_dim)`. When
/// `nonneg_constrained` is set, every weight entry must stay `>= 0`
/// (the bias is never constrained); updates restore this by projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
    pub nonneg_constrained: bool,
}

impl DenseLayer {
    /// Seeded initialization: constrained layers draw uniform in
    /// `[0, 1/sqrt(in_dim)]` (already feasible), unconstrained layers draw
    /// symmetric uniform; biases start at zero.
    pub fn seeded(
        in_dim: usize,
        out_dim: usize,
        activation: ActivationKind,
        nonneg_constrained: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| {
                if nonneg_constrained {
                    rng.random::<f64>() * scale
                } else {
                    (rng.random::<f64>() * 2.0 - 1.0) * scale
                }
            })
            .collect();
        DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
            nonneg_constrained,
        }
    }

    /// `out = W x + b` (pre-activation).
    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        let mut out = self.bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o += acc;
        }
        Ok(out)
    }

    /// `out = W x` with the bias skipped (pass-through projections carry no
    /// bias term).
    pub fn linear(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.out_dim];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
        Ok(out)
    }

    /// Clamp constrained weights to `>= 0`. Idempotent; no-op when the layer
    /// is unconstrained.
    pub fn project_nonneg(&mut self) {
        if self.nonneg_constrained {
            for w in &mut self.weights {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::Spec(format!(
                "layer buffers inconsistent with dims {}x{}",
                self.out_dim, self.in_dim
            )));
        }
        if self.nonneg_constrained && self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Spec("constrained layer holds a negative weight".into()));
        }
        Ok(())
    }
}

/// Plain sequential stack ending in a scalar output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    /// Unconstrained MLP: ReLU hidden layers, linear scalar output.
    pub fn mlp(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for &w in hidden {
            layers.push(DenseLayer::seeded(prev, w, ActivationKind::ReLU, false, &mut rng));
            prev = w;
        }
        layers.push(DenseLayer::seeded(prev, 1, ActivationKind::Linear, false, &mut rng));
        DenseNet { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Spec("network has no layers".into()));
        }
        let mut prev = self.layers[0].in_dim;
        for l in &self.layers {
            l.validate()?;
            if l.in_dim != prev {
                return Err(Error::Shape {
                    expected: prev,
                    got: l.in_dim,
                });
            }
            prev = l.out_dim;
        }
        if prev != 1 {
            return Err(Error::Shape { expected: 1, got: prev });
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let wn = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + wn]);
            off += wn;
            let bn = l.bias.len();
            l.bias.copy_from_slice(&p[off..off + bn]);
            off += bn;
        }
        Ok(())
    }

    /// Clamp all constrained layers.
    pub fn project(&mut self) {
        for l in &mut self.layers {
            l.project_nonneg();
        }
    }

    /// Sum of squared weights over all layers (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .map(|w| w * w)
            .sum()
    }

    /// True when any recorded pre-activation sits within `eps` of an
    /// activation kink.
    pub fn trace_near_kink(&self, trace: &ForwardTrace, eps: f64) -> bool {
        self.layers.iter().zip(&trace.pre).any(|(l, pre)| {
            pre.iter().any(|&z| l.activation.near_kink(z, eps))
        })
    }
}

/// Intermediates recorded during [`forward`], consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Per-layer pre-activations.
    pub pre: Vec<Vec<f64>>,
    /// Per-layer post-activations.
    pub post: Vec<Vec<f64>>,
    pub output: f64,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients shaped exactly like the network's parameters, plus the gradient
/// with respect to the input vector.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
    pub input: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            input: vec![0.0; net.input_dim()],
        }
    }

    /// Parameter gradients flattened in the same order as
    /// [`DenseNet::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Evaluate the stack on `x`, recording every intermediate.
pub fn forward(net: &DenseNet, x: &[f64]) -> Result<(f64, ForwardTrace)> {
    net.validate()?;
    if x.len() != net.input_dim() {
        return Err(Error::Shape {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(bad));
    }
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut post = Vec::with_capacity(net.layers.len());
    let mut cur = x.to_vec();
    for l in &net.layers {
        let z = l.affine(&cur)?;
        let a: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
        pre.push(z);
        cur = a.clone();
        post.push(a);
    }
    let output = cur[0];
    Ok((
        output,
        ForwardTrace {
            input: x.to_vec(),
            pre,
            post,
            output,
        },
    ))
}

/// Exact reverse-mode gradients of `output * upstream` with respect to every
/// parameter and the input. The trace must come from [`forward`] on the same
/// network.
pub fn backward(net: &DenseNet, trace: &ForwardTrace, upstream: f64) -> Result<GradientSet> {
    if trace.pre.len() != net.layers.len() || trace.input.len() != net.input_dim() {
        return Err(Error::Trace("trace layer count or input width differs".into()));
    }
    for (l, z) in net.layers.iter().zip(&trace.pre) {
        if z.len() != l.out_dim {
            return Err(Error::Trace("trace width differs from layer output".into()));
        }
    }
    let mut grads = GradientSet::zeros_like(net);
    // Gradient flowing into the post-activation of the current layer.
    let mut g_post = vec![upstream];
    for (idx, l) in net.layers.iter().enumerate().rev() {
        let z = &trace.pre[idx];
        let input: &[f64] = if idx == 0 {
            &trace.input
        } else {
            &trace.post[idx - 1]
        };
        let g_pre: Vec<f64> = g_post
            .iter()
            .zip(z)
            .map(|(&g, &zv)| g * l.activation.slope(zv))
            .collect();
        let lg = &mut grads.layers[idx];
        for (r, &gp) in g_pre.iter().enumerate() {
            lg.bias[r] += gp;
            let row = &mut lg.weights[r * l.in_dim..(r + 1) * l.in_dim];
            for (w, &xi) in row.iter_mut().zip(input) {
                *w += gp * xi;
            }
        }
        let mut g_in = vec![0.0; l.in_dim];
        for (r, &gp) in g_pre.iter().enumerate() {
            let row = &l.weights[r * l.in_dim..(r + 1) * l.in_dim];
            for (gi, &w) in g_in.iter_mut().zip(row) {
                *gi += gp * w;
            }
        }
        g_post = g_in;
    }
    grads.input = g_post;
    Ok(grads)
}

/// Central-difference oracle: `(f(p+h) - f(p-h)) / 2h` for every parameter and
/// every input coordinate. Independent of [`backward`] by construction.
pub fn finite_diff_grad(net: &DenseNet, x: &[f64], h: f64) -> Result<GradientSet> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut work = net.clone();
    let params = work.flat_params();
    let n = params.len();
    let mut flat = vec![0.0; n];
    for i in 0..n {
        let mut plus = params.clone();
        plus[i] += h;
        work.set_flat_params(&plus)?;
        let (f_plus, _) = forward(&work, x)?;
        let mut minus = params.clone();
        minus[i] -= h;
        work.set_flat_params(&minus)?;
        let (f_minus, _) = forward(&work, x)?;
        flat[i] = (f_plus - f_minus) / (2.0 * h);
    }
    work.set_flat_params(&params)?;

    let mut grads = GradientSet::zeros_like(net);
    let mut off = 0;
    for lg in &mut grads.layers {
        let wn = lg.weights.len();
        lg.weights.copy_from_slice(&flat[off..off + wn]);
        off += wn;
        let bn = lg.bias.len();
        lg.bias.copy_from_slice(&flat[off..off + bn]);
        off += bn;
    }
    for (i, gi) in grads.input.iter_mut().enumerate() {
        let mut xp = x.to_vec();
        xp[i] += h;
        let (f_plus, _) = forward(net, &xp)?;
        xp[i] = x[i] - h;
        let (f_minus, _) = forward(net, &xp)?;
        *gi = (f_plus - f_minus) / (2.0 * h);
    }
    Ok(grads)
}

/// One plain SGD step: each parameter decremented by `lr * gradient`, then
/// constrained layers are projected back onto the non-negative orthant.
pub fn sgd_step(net: &mut DenseNet, grads: &GradientSet, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    if grads.layers.len() != net.layers.len() {
        return Err(Error::Trace("gradient set layer count differs".into()));
    }
    for lg in &grads.layers {
        if lg.weights.iter().chain(&lg.bias).any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
    }
    for (l, lg) in net.layers.iter_mut().zip(&grads.layers) {
        for (w, g) in l.weights.iter_mut().zip(&lg.weights) {
            *w -= lr * g;
        }
        for (b, g) in l.bias.iter_mut().zip(&lg.bias) {
            *b -= lr * g;
        }
        l.project_nonneg();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn one_layer(w: f64, b: f64, activation: ActivationKind) -> DenseNet {
        DenseNet {
            layers: vec![DenseLayer {
                in_dim: 1,
                out_dim: 1,
                weights: vec![w],
                bias: vec![b],
                activation,
                nonneg_constrained: false,
            }],
        }
    }

    #[test]
    fn ptrelu_values() {
        let k = ActivationKind::PTRelu { alpha: 1.0, beta: 1.0 };
        assert_eq!(activate(0.0, &k).unwrap(), 0.0);
        assert_eq!(activate(-2.0, &k).unwrap(), 0.0);
        // 2 / (1 + e^-10), evaluated independently at high precision.
        let k2 = ActivationKind::PTRelu { alpha: 2.0, beta: 1.0 };
        assert_relative_eq!(
            activate(10.0, &k2).unwrap(),
            1.9999092042625951,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ptrelu_rejects_bad_params() {
        let k = ActivationKind::PTRelu { alpha: 0.0, beta: 1.0 };
        assert!(activate(1.0, &k).is_err());
    }

    #[test]
    fn activate_rejects_non_finite() {
        assert!(matches!(
            activate(f64::NAN, &ActivationKind::ReLU),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn forward_identity_and_clamp() {
        let net = one_layer(1.0, 0.0, ActivationKind::Linear);
        let (y, _) = forward(&net, &[3.0]).unwrap();
        assert_eq!(y, 3.0);

        let net = one_layer(1.0, -5.0, ActivationKind::ReLU);
        let (y, _) = forward(&net, &[3.0]).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn forward_matches_hand_rolled_two_layer() {
        // Independent re-evaluation of a 2-2-1 stack with known weights.
        let net = DenseNet {
            layers: vec![
                DenseLayer {
                    in_dim: 2,
                    out_dim: 2,
                    weights: vec![0.5, -0.25, 1.0, 0.75],
                    bias: vec![0.1, -0.2],
                    activation: ActivationKind::ReLU,
                    nonneg_constrained: false,
                },
                DenseLayer {
                    in_dim: 2,
                    out_dim: 1,
                    weights: vec![2.0, -1.0],
                    bias: vec![0.3],
                    activation: ActivationKind::Linear,
                    nonneg_constrained: false,
                },
            ],
        };
        let x = [1.0, 2.0];
        let h0 = (0.5 * 1.0 - 0.25 * 2.0 + 0.1f64).max(0.0);
        let h1 = (1.0 * 1.0 + 0.75 * 2.0 - 0.2f64).max(0.0);
        let expect = 2.0 * h0 - 1.0 * h1 + 0.3;
        let (y, trace) = forward(&net, &x).unwrap();
        assert_relative_eq!(y, expect, max_relative = 1e-15);
        assert_eq!(trace.output, y);
    }

    #[test]
    fn forward_shape_error() {
        let net = one_layer(1.0, 0.0, ActivationKind::Linear);
        assert!(matches!(forward(&net, &[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_linear_gradient_equals_input() {
        let net = one_layer(1.0, 0.0, ActivationKind::Linear);
        let (_, trace) = forward(&net, &[3.0]).unwrap();
        let g = backward(&net, &trace, 1.0).unwrap();
        assert_eq!(g.layers[0].weights[0], 3.0);
        assert_eq!(g.layers[0].bias[0], 1.0);
        assert_eq!(g.input[0], 1.0);
    }

    #[test]
    fn backward_dead_relu_gives_zero() {
        let net = one_layer(1.0, -5.0, ActivationKind::ReLU);
        let (_, trace) = forward(&net, &[3.0]).unwrap();
        let g = backward(&net, &trace, 1.0).unwrap();
        assert_eq!(g.layers[0].weights[0], 0.0);
        assert_eq!(g.input[0], 0.0);
    }

    #[test]
    fn backward_matches_finite_differences_random_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..30 {
            let widths = [
                1 + (trial % 4),
                1 + ((trial / 2) % 5),
            ];
            let act = match trial % 3 {
                0 => ActivationKind::ReLU,
                1 => ActivationKind::Sigmoid,
                _ => ActivationKind::PTRelu { alpha: 4.0, beta: 1.0 },
            };
            let mut layers = Vec::new();
            let mut prev = 6;
            for &w in &widths {
                layers.push(DenseLayer::seeded(prev, w, act, false, &mut rng));
                prev = w;
            }
            layers.push(DenseLayer::seeded(prev, 1, ActivationKind::Linear, false, &mut rng));
            let net = DenseNet { layers };

            // Resample the probe point until it is clear of every kink.
            let mut x: Vec<f64>;
            let trace = loop {
                x = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let (_, t) = forward(&net, &x).unwrap();
                if !net.trace_near_kink(&t, 1e-6) {
                    break t;
                }
            };
            let exact = backward(&net, &trace, 1.0).unwrap().flat();
            let fd = finite_diff_grad(&net, &x, 1e-5).unwrap().flat();
            for (a, b) in exact.iter().zip(&fd) {
                let denom = a.abs().max(b.abs()).max(1e-3);
                assert!(
                    ((a - b) / denom).abs() < 1e-4,
                    "gradient mismatch: exact {a}, fd {b} (trial {trial})"
                );
            }
        }
    }

    #[test]
    fn finite_diff_quadratic_composition() {
        // f(x) = w2 * (w1 * x), so df/dw1 = w2 * x by the product rule.
        let net = DenseNet {
            layers: vec![
                DenseLayer {
                    in_dim: 1,
                    out_dim: 1,
                    weights: vec![3.0],
                    bias: vec![0.0],
                    activation: ActivationKind::Linear,
                    nonneg_constrained: false,
                },
                DenseLayer {
                    in_dim: 1,
                    out_dim: 1,
                    weights: vec![5.0],
                    bias: vec![0.0],
                    activation: ActivationKind::Linear,
                    nonneg_constrained: false,
                },
            ],
        };
        let g = finite_diff_grad(&net, &[2.0], 1e-5).unwrap();
        assert_relative_eq!(g.layers[0].weights[0], 5.0 * 2.0, max_relative = 1e-8);
        assert_relative_eq!(g.layers[1].weights[0], 3.0 * 2.0, max_relative = 1e-8);
    }

    #[test]
    fn finite_diff_step_shrink_improves_agreement() {
        let net = one_layer(2.0, 0.1, ActivationKind::Sigmoid);
        let x = [0.7];
        let (_, trace) = forward(&net, &x).unwrap();
        let exact = backward(&net, &trace, 1.0).unwrap().flat();
        let coarse = finite_diff_grad(&net, &x, 1e-3).unwrap().flat();
        let fine = finite_diff_grad(&net, &x, 1e-5).unwrap().flat();
        let err = |fd: &[f64]| -> f64 {
            fd.iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(&fine) <= err(&coarse));
    }

    #[test]
    fn sgd_step_and_projection() {
        let mut net = one_layer(1.0, 0.01, ActivationKind::Linear);
        let g = GradientSet {
            layers: vec![LayerGrads {
                weights: vec![0.5],
                bias: vec![1.0],
            }],
            input: vec![0.0],
        };
        sgd_step(&mut net, &g, 0.1).unwrap();
        assert_relative_eq!(net.layers[0].weights[0], 0.95);
        // Bias is unconstrained and may go negative.
        assert_relative_eq!(net.layers[0].bias[0], -0.09);

        let mut constrained = one_layer(0.01, 0.01, ActivationKind::Linear);
        constrained.layers[0].nonneg_constrained = true;
        let g = GradientSet {
            layers: vec![LayerGrads {
                weights: vec![1.0],
                bias: vec![1.0],
            }],
            input: vec![0.0],
        };
        sgd_step(&mut constrained, &g, 0.1).unwrap();
        assert_eq!(constrained.layers[0].weights[0], 0.0);
        assert_relative_eq!(constrained.layers[0].bias[0], -0.09);
    }

    #[test]
    fn sgd_rejects_non_finite_gradient() {
        let mut net = one_layer(1.0, 0.0, ActivationKind::Linear);
        let g = GradientSet {
            layers: vec![LayerGrads {
                weights: vec![f64::INFINITY],
                bias: vec![0.0],
            }],
            input: vec![0.0],
        };
        assert!(matches!(sgd_step(&mut net, &g, 0.1), Err(Error::NonFiniteGradient)));
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut l = DenseLayer::seeded(4, 3, ActivationKind::ReLU, true, &mut rng);
        for (i, w) in l.weights.iter_mut().enumerate() {
            if i % 2 == 0 {
                *w = -*w - 0.5;
            }
        }
        l.project_nonneg();
        let once = l.weights.clone();
        l.project_nonneg();
        assert_eq!(once, l.weights);
    }

    #[test]
    fn activations_are_nondecreasing() {
        let kinds = [
            ActivationKind::Linear,
            ActivationKind::ReLU,
            ActivationKind::Sigmoid,
            ActivationKind::PTRelu { alpha: 4.0, beta: 1.0 },
            ActivationKind::PTRelu { alpha: 0.5, beta: 3.0 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in kinds {
            for _ in 0..10_000 {
                let a = (rng.random::<f64>() - 0.5) * 40.0;
                let b = (rng.random::<f64>() - 0.5) * 40.0;
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                assert!(kind.apply(lo) <= kind.apply(hi), "{kind:?} decreased on [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn ptrelu_bounded_by_alpha() {
        let kind = ActivationKind::PTRelu { alpha: 2.5, beta: 0.7 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x = (rng.random::<f64>() - 0.5) * 200.0;
            let v = kind.apply(x);
            assert!((0.0..=2.5).contains(&v), "PTRelu({x}) = {v} escaped [0, alpha]");
        }
    }
}
