//! Monotonicity-constrained network architectures.
//!
//! A hard-MNN is monotone by construction: a sign mask flips every
//! monotonically decreasing input, all downstream weights are constrained
//! non-negative, and every activation is nondecreasing, so the composed map
//! is nondecreasing in each masked coordinate regardless of the weight
//! values. The partial variant routes non-monotone features through an
//! unconstrained ReLU branch that merges additively into each hidden layer.
//!
//! [`check_monotonicity`] audits any predictor (constrained or not) by
//! scanning natural curves over a bounded domain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netcore::{ActivationKind, DenseLayer};
use crate::{Error, Result};

/// Declared monotone direction of one feature with respect to the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increase,
    Decrease,
    NonMonotone,
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "increase" | "inc" | "up" => Ok(Direction::Increase),
            "decrease" | "dec" | "down" => Ok(Direction::Decrease),
            "nonmonotone" | "non-monotone" | "none" => Ok(Direction::NonMonotone),
            other => Err(Error::Config(format!("unknown direction '{other}'"))),
        }
    }
}

/// Ordered feature names with one [`Direction`] each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicitySpec {
    names: Vec<String>,
    directions: Vec<Direction>,
}

impl MonotonicitySpec {
    pub fn new(names: Vec<String>, directions: Vec<Direction>) -> Result<Self> {
        if names.len() != directions.len() {
            return Err(Error::Spec(format!(
                "{} names vs {} directions",
                names.len(),
                directions.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::Spec("empty monotonicity spec".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Spec(format!("duplicate feature name '{n}'")));
            }
        }
        Ok(MonotonicitySpec { names, directions })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn direction_of(&self, name: &str) -> Option<Direction> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.directions[i])
    }

    pub fn has_non_monotone(&self) -> bool {
        self.directions.contains(&Direction::NonMonotone)
    }

    pub fn monotone_indices(&self) -> Vec<usize> {
        self.directions
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != Direction::NonMonotone)
            .map(|(i, _)| i)
            .collect()
    }

    /// Replace the direction of one named feature.
    pub fn with_direction(&self, name: &str, dir: Direction) -> Result<Self> {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Spec(format!("unknown feature '{name}'")))?;
        let mut directions = self.directions.clone();
        directions[idx] = dir;
        Ok(MonotonicitySpec {
            names: self.names.clone(),
            directions,
        })
    }
}

/// Sign mask for fully monotone specs: decreasing features are negated,
/// increasing features pass through unchanged.
pub fn mask_apply(x: &[f64], spec: &MonotonicitySpec) -> Result<Vec<f64>> {
    if x.len() != spec.len() {
        return Err(Error::Shape {
            expected: spec.len(),
            got: x.len(),
        });
    }
    let mut out = Vec::with_capacity(x.len());
    for (&v, d) in x.iter().zip(spec.directions()) {
        match d {
            Direction::Increase => out.push(v),
            Direction::Decrease => out.push(-v),
            Direction::NonMonotone => {
                return Err(Error::Spec(
                    "mask_apply requires a fully monotone spec; use partial_mask_apply".into(),
                ))
            }
        }
    }
    Ok(out)
}

/// Split mask for mixed specs. Returns `(x_m, x_n)`, both full width:
/// `x_m` carries signed monotone features (non-monotone entries zeroed) and
/// `x_n` carries the non-monotone features untouched (monotone entries
/// zeroed).
pub fn partial_mask_apply(x: &[f64], spec: &MonotonicitySpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != spec.len() {
        return Err(Error::Shape {
            expected: spec.len(),
            got: x.len(),
        });
    }
    let mut x_m = vec![0.0; x.len()];
    let mut x_n = vec![0.0; x.len()];
    for (i, (&v, d)) in x.iter().zip(spec.directions()).enumerate() {
        match d {
            Direction::Increase => x_m[i] = v,
            Direction::Decrease => x_m[i] = -v,
            Direction::NonMonotone => x_n[i] = v,
        }
    }
    Ok((x_m, x_n))
}

/// How the pass-through projection joins each hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    /// Elementwise add after the activation.
    Plus,
    /// Append to the activated hidden vector before the next layer.
    Concat,
}

/// Shape of an MNN: hidden widths, backbone activation, and the
/// pass-through wiring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnnArchitecture {
    pub hidden: Vec<usize>,
    pub activation: ActivationKind,
    pub aggregation: Aggregation,
    pub passthrough: bool,
}

impl MnnArchitecture {
    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Spec("need at least one hidden layer of width >= 1".into()));
        }
        if self.aggregation == Aggregation::Concat && !self.passthrough {
            return Err(Error::Spec("concat aggregation requires the pass-through path".into()));
        }
        Ok(())
    }

    /// Defaults used for the chiller model: two PTRelu hidden layers with the
    /// pass-through added elementwise.
    pub fn default_chiller() -> Self {
        MnnArchitecture {
            hidden: vec![16, 16],
            activation: ActivationKind::PTRelu { alpha: 4.0, beta: 1.0 },
            aggregation: Aggregation::Plus,
            passthrough: true,
        }
    }

    /// Width of the vector leaving hidden block `i` (0-based).
    fn block_width(&self, i: usize) -> usize {
        match self.aggregation {
            Aggregation::Plus => self.hidden[i],
            Aggregation::Concat => {
                if self.passthrough {
                    2 * self.hidden[i]
                } else {
                    self.hidden[i]
                }
            }
        }
    }
}

/// Monotonicity-constrained network.
///
/// The backbone (`main_layers`, `passthrough_layers`, `output_layer`) holds
/// only non-negative weights and sees the sign-masked input; the optional
/// `branch_layers` are an unconstrained ReLU stack fed by the non-monotone
/// features, merged additively into each hidden block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnnNetwork {
    pub spec: MonotonicitySpec,
    pub arch: MnnArchitecture,
    pub main_layers: Vec<DenseLayer>,
    pub passthrough_layers: Vec<DenseLayer>,
    pub branch_layers: Vec<DenseLayer>,
    pub output_layer: DenseLayer,
}

/// Intermediates of one MNN forward evaluation.
#[derive(Debug, Clone)]
pub struct MnnTrace {
    pub x_m: Vec<f64>,
    pub x_n: Vec<f64>,
    pub main_pre: Vec<Vec<f64>>,
    pub main_post: Vec<Vec<f64>>,
    pub pass_out: Vec<Vec<f64>>,
    pub branch_pre: Vec<Vec<f64>>,
    pub branch_post: Vec<Vec<f64>>,
    /// Output of each hidden block after aggregation and branch merge.
    pub block_out: Vec<Vec<f64>>,
    pub output: f64,
}

/// Gradients mirroring [`MnnNetwork`]'s parameter layout plus the gradient
/// with respect to the raw (unmasked) input.
#[derive(Debug, Clone)]
pub struct MnnGradients {
    pub main: Vec<(Vec<f64>, Vec<f64>)>,
    pub passthrough: Vec<(Vec<f64>, Vec<f64>)>,
    pub branch: Vec<(Vec<f64>, Vec<f64>)>,
    pub output: (Vec<f64>, Vec<f64>),
    pub input: Vec<f64>,
}

/// Build an MNN with the wiring dictated by `spec` and `arch`; weights are
/// seeded and already feasible (constrained entries non-negative).
pub fn build_mnn(spec: &MonotonicitySpec, arch: &MnnArchitecture, seed: u64) -> Result<MnnNetwork> {
    arch.validate()?;
    let d = spec.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut main_layers = Vec::with_capacity(arch.hidden.len());
    let mut passthrough_layers = Vec::new();
    let mut branch_layers = Vec::new();
    let mut prev = d;
    for (i, &w) in arch.hidden.iter().enumerate() {
        main_layers.push(DenseLayer::seeded(prev, w, arch.activation, true, &mut rng));
        if arch.passthrough {
            let mut pl = DenseLayer::seeded(d, w, ActivationKind::Linear, true, &mut rng);
            // Pass-through carries no bias; the activation slot is unused
            // because the projection is applied raw.
            pl.bias.iter_mut().for_each(|b| *b = 0.0);
            passthrough_layers.push(pl);
        }
        prev = arch.block_width(i);
    }
    if spec.has_non_monotone() {
        let mut bprev = d;
        for &w in &arch.hidden {
            branch_layers.push(DenseLayer::seeded(bprev, w, ActivationKind::ReLU, false, &mut rng));
            bprev = w;
        }
    }
    let output_layer = DenseLayer::seeded(prev, 1, ActivationKind::Linear, true, &mut rng);
    Ok(MnnNetwork {
        spec: spec.clone(),
        arch: arch.clone(),
        main_layers,
        passthrough_layers,
        branch_layers,
        output_layer,
    })
}

impl MnnNetwork {
    pub fn input_dim(&self) -> usize {
        self.spec.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        for l in self
            .main_layers
            .iter()
            .chain(&self.passthrough_layers)
            .chain(std::iter::once(&self.output_layer))
        {
            l.validate()?;
            if !l.nonneg_constrained {
                return Err(Error::Spec("backbone layer lost its constraint flag".into()));
            }
        }
        for l in &self.branch_layers {
            l.validate()?;
        }
        if self.branch_layers.is_empty() == self.spec.has_non_monotone() {
            return Err(Error::Spec(
                "branch layers must be present exactly when the spec has non-monotone features".into(),
            ));
        }
        Ok(())
    }

    /// Forward evaluation with a full trace.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, MnnTrace)> {
        if x.len() != self.spec.len() {
            return Err(Error::Shape {
                expected: self.spec.len(),
                got: x.len(),
            });
        }
        if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(bad));
        }
        let (x_m, x_n) = partial_mask_apply(x, &self.spec)?;
        let n = self.main_layers.len();
        let mut trace = MnnTrace {
            x_m: x_m.clone(),
            x_n: x_n.clone(),
            main_pre: Vec::with_capacity(n),
            main_post: Vec::with_capacity(n),
            pass_out: Vec::with_capacity(n),
            branch_pre: Vec::with_capacity(n),
            branch_post: Vec::with_capacity(n),
            block_out: Vec::with_capacity(n),
            output: 0.0,
        };
        let mut cur = x_m.clone();
        let mut branch_cur = x_n.clone();
        for (i, l) in self.main_layers.iter().enumerate() {
            let pre = l.affine(&cur)?;
            let mut act: Vec<f64> = pre.iter().map(|&z| l.activation.apply(z)).collect();
            trace.main_pre.push(pre);
            trace.main_post.push(act.clone());

            if !self.branch_layers.is_empty() {
                let bl = &self.branch_layers[i];
                let bpre = bl.affine(&branch_cur)?;
                let bact: Vec<f64> = bpre.iter().map(|&z| bl.activation.apply(z)).collect();
                for (a, b) in act.iter_mut().zip(&bact) {
                    *a += b;
                }
                branch_cur = bact.clone();
                trace.branch_pre.push(bpre);
                trace.branch_post.push(bact);
            }

            let block = if self.arch.passthrough {
                let pass = self.passthrough_layers[i].linear(&x_m)?;
                let out = match self.arch.aggregation {
                    Aggregation::Plus => {
                        act.iter().zip(&pass).map(|(a, p)| a + p).collect::<Vec<f64>>()
                    }
                    Aggregation::Concat => {
                        let mut v = act.clone();
                        v.extend_from_slice(&pass);
                        v
                    }
                };
                trace.pass_out.push(pass);
                out
            } else {
                act.clone()
            };
            trace.block_out.push(block.clone());
            cur = block;
        }
        let out_pre = self.output_layer.affine(&cur)?;
        let y = self.output_layer.activation.apply(out_pre[0]);
        trace.output = y;
        Ok((y, trace))
    }

    /// Reverse-mode gradients of `output * upstream` for every parameter and
    /// the raw input.
    pub fn backward(&self, trace: &MnnTrace, upstream: f64) -> Result<MnnGradients> {
        let n = self.main_layers.len();
        if trace.main_pre.len() != n || trace.x_m.len() != self.spec.len() {
            return Err(Error::Trace("trace does not match MNN layout".into()));
        }
        let zero_like = |l: &DenseLayer| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]);
        let mut grads = MnnGradients {
            main: self.main_layers.iter().map(zero_like).collect(),
            passthrough: self.passthrough_layers.iter().map(zero_like).collect(),
            branch: self.branch_layers.iter().map(zero_like).collect(),
            output: zero_like(&self.output_layer),
            input: vec![0.0; self.spec.len()],
        };

        // Output layer (linear).
        let last_block = &trace.block_out[n - 1];
        let g_out_pre = upstream * self.output_layer.activation.slope(
            self.output_layer
                .affine(last_block)?[0],
        );
        for (gw, &h) in grads.output.0.iter_mut().zip(last_block) {
            *gw = g_out_pre * h;
        }
        grads.output.1[0] = g_out_pre;
        let mut g_block: Vec<f64> = self
            .output_layer
            .weights
            .iter()
            .map(|&w| g_out_pre * w)
            .collect();

        let mut g_xm = vec![0.0; self.spec.len()];
        let mut g_xn = vec![0.0; self.spec.len()];
        // Gradient flowing into the branch activation from the *next* branch
        // layer (the branch chains independently of the backbone).
        let mut g_branch_chain: Vec<f64> = Vec::new();

        for i in (0..n).rev() {
            let l = &self.main_layers[i];
            let width = l.out_dim;
            // Split the block gradient into activation part and pass-through part.
            let (g_act_agg, g_pass): (Vec<f64>, Vec<f64>) = if self.arch.passthrough {
                match self.arch.aggregation {
                    Aggregation::Plus => (g_block.clone(), g_block.clone()),
                    Aggregation::Concat => (
                        g_block[..width].to_vec(),
                        g_block[width..].to_vec(),
                    ),
                }
            } else {
                (g_block.clone(), Vec::new())
            };

            if self.arch.passthrough {
                let pl = &self.passthrough_layers[i];
                let (gw, _) = &mut grads.passthrough[i];
                for (r, &gp) in g_pass.iter().enumerate() {
                    let row = &mut gw[r * pl.in_dim..(r + 1) * pl.in_dim];
                    for (w, &xv) in row.iter_mut().zip(&trace.x_m) {
                        *w += gp * xv;
                    }
                }
                for (r, &gp) in g_pass.iter().enumerate() {
                    let row = &pl.weights[r * pl.in_dim..(r + 1) * pl.in_dim];
                    for (gx, &w) in g_xm.iter_mut().zip(row) {
                        *gx += gp * w;
                    }
                }
            }

            // Branch: its activation feeds both this block and the next
            // branch layer.
            if !self.branch_layers.is_empty() {
                let bl = &self.branch_layers[i];
                let mut g_bact = g_act_agg.clone();
                if !g_branch_chain.is_empty() {
                    for (g, extra) in g_bact.iter_mut().zip(&g_branch_chain) {
                        *g += extra;
                    }
                }
                let bpre = &trace.branch_pre[i];
                let g_bpre: Vec<f64> = g_bact
                    .iter()
                    .zip(bpre)
                    .map(|(&g, &z)| g * bl.activation.slope(z))
                    .collect();
                let binput: Vec<f64> = if i == 0 {
                    trace.x_n.clone()
                } else {
                    trace.branch_post[i - 1].clone()
                };
                let (gw, gb) = &mut grads.branch[i];
                for (r, &gp) in g_bpre.iter().enumerate() {
                    gb[r] += gp;
                    let row = &mut gw[r * bl.in_dim..(r + 1) * bl.in_dim];
                    for (w, &xv) in row.iter_mut().zip(&binput) {
                        *w += gp * xv;
                    }
                }
                let mut g_bin = vec![0.0; bl.in_dim];
                for (r, &gp) in g_bpre.iter().enumerate() {
                    let row = &bl.weights[r * bl.in_dim..(r + 1) * bl.in_dim];
                    for (g, &w) in g_bin.iter_mut().zip(row) {
                        *g += gp * w;
                    }
                }
                if i == 0 {
                    g_xn = g_bin;
                    g_branch_chain = Vec::new();
                } else {
                    g_branch_chain = g_bin;
                }
            }

            // Main dense layer.
            let pre = &trace.main_pre[i];
            let g_pre: Vec<f64> = g_act_agg
                .iter()
                .zip(pre)
                .map(|(&g, &z)| g * l.activation.slope(z))
                .collect();
            let input: Vec<f64> = if i == 0 {
                trace.x_m.clone()
            } else {
                trace.block_out[i - 1].clone()
            };
            let (gw, gb) = &mut grads.main[i];
            for (r, &gp) in g_pre.iter().enumerate() {
                gb[r] += gp;
                let row = &mut gw[r * l.in_dim..(r + 1) * l.in_dim];
                for (w, &xv) in row.iter_mut().zip(&input) {
                    *w += gp * xv;
                }
            }
            let mut g_in = vec![0.0; l.in_dim];
            for (r, &gp) in g_pre.iter().enumerate() {
                let row = &l.weights[r * l.in_dim..(r + 1) * l.in_dim];
                for (g, &w) in g_in.iter_mut().zip(row) {
                    *g += gp * w;
                }
            }
            if i == 0 {
                for (gx, g) in g_xm.iter_mut().zip(&g_in) {
                    *gx += g;
                }
            } else {
                g_block = g_in;
            }
        }

        // Undo the masks: monotone features see +/- x_m sensitivity,
        // non-monotone features only the branch path.
        for (idx, d) in self.spec.directions().iter().enumerate() {
            grads.input[idx] = match d {
                Direction::Increase => g_xm[idx],
                Direction::Decrease => -g_xm[idx],
                Direction::NonMonotone => g_xn[idx],
            };
        }
        Ok(grads)
    }

    /// Clamp every constrained layer back onto the non-negative orthant.
    pub fn project(&mut self) {
        for l in self
            .main_layers
            .iter_mut()
            .chain(&mut self.passthrough_layers)
        {
            l.project_nonneg();
        }
        self.output_layer.project_nonneg();
    }

    fn layer_seq(&self) -> impl Iterator<Item = &DenseLayer> {
        self.main_layers
            .iter()
            .chain(&self.passthrough_layers)
            .chain(&self.branch_layers)
            .chain(std::iter::once(&self.output_layer))
    }

    fn layer_seq_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.main_layers
            .iter_mut()
            .chain(self.passthrough_layers.iter_mut())
            .chain(self.branch_layers.iter_mut())
            .chain(std::iter::once(&mut self.output_layer))
    }

    pub fn param_count(&self) -> usize {
        self.layer_seq().map(DenseLayer::param_count).sum()
    }

    /// Flat layout: main, pass-through, branch, output; each layer as
    /// weights row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layer_seq() {
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
        for l in self.layer_seq_mut() {
            let wn = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + wn]);
            off += wn;
            let bn = l.bias.len();
            l.bias.copy_from_slice(&p[off..off + bn]);
            off += bn;
        }
        Ok(())
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.layer_seq()
            .flat_map(|l| l.weights.iter())
            .map(|w| w * w)
            .sum()
    }
}

impl MnnGradients {
    /// Flattened in the same order as [`MnnNetwork::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self
            .main
            .iter()
            .chain(&self.passthrough)
            .chain(&self.branch)
            .chain(std::iter::once(&self.output))
        {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Deterministic prediction: mask(s) then forward.
pub fn predict(net: &MnnNetwork, x: &[f64]) -> Result<f64> {
    net.forward(x).map(|(y, _)| y)
}

/// Anything that maps a feature vector to a scalar power prediction.
pub trait Predictor {
    fn predict_one(&self, x: &[f64]) -> Result<f64>;
}

impl Predictor for MnnNetwork {
    fn predict_one(&self, x: &[f64]) -> Result<f64> {
        predict(self, x)
    }
}

impl Predictor for crate::netcore::DenseNet {
    fn predict_one(&self, x: &[f64]) -> Result<f64> {
        crate::netcore::forward(self, x).map(|(y, _)| y)
    }
}

/// Result of a natural-curve monotonicity audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Consecutive-step pairs examined.
    pub pairs_checked: usize,
    /// Pairs whose signed difference contradicts the declared direction by
    /// more than the tolerance.
    pub violations: usize,
    /// Largest observed violation magnitude.
    pub worst_gap: f64,
    /// Per-feature (name, violation rate).
    pub per_feature: Vec<(String, f64)>,
}

impl ViolationReport {
    pub fn violation_rate(&self) -> f64 {
        if self.pairs_checked == 0 {
            0.0
        } else {
            self.violations as f64 / self.pairs_checked as f64
        }
    }
}

/// Scan natural curves of `model` along every monotone feature.
///
/// For each monotone feature, `grid_n` anchor points are drawn inside
/// `bounds` (fixed internal seed, so audits are reproducible) and the
/// feature is swept over `grid_n` evenly spaced steps; consecutive
/// predictions that move against the declared direction by more than `tol`
/// count as violations. Ties within `tol` are ignored.
pub fn check_monotonicity<P: Predictor>(
    model: &P,
    spec: &MonotonicitySpec,
    bounds: &[(f64, f64)],
    grid_n: usize,
    tol: f64,
) -> Result<ViolationReport> {
    if grid_n < 2 {
        return Err(Error::Config(format!("grid_n must be >= 2, got {grid_n}")));
    }
    if bounds.len() != spec.len() {
        return Err(Error::Shape {
            expected: spec.len(),
            got: bounds.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f6e6f); // fixed: audits are reproducible
    let mut report = ViolationReport {
        pairs_checked: 0,
        violations: 0,
        worst_gap: 0.0,
        per_feature: Vec::new(),
    };
    use rand::Rng;
    for (fi, dir) in spec.directions().iter().enumerate() {
        if *dir == Direction::NonMonotone {
            continue;
        }
        let mut feature_pairs = 0usize;
        let mut feature_viol = 0usize;
        let (lo, hi) = bounds[fi];
        for _ in 0..grid_n {
            let mut anchor: Vec<f64> = bounds
                .iter()
                .map(|&(l, h)| l + rng.random::<f64>() * (h - l))
                .collect();
            let mut prev: Option<f64> = None;
            for step in 0..grid_n {
                let t = lo + (hi - lo) * step as f64 / (grid_n - 1) as f64;
                anchor[fi] = t;
                let y = model.predict_one(&anchor)?;
                if let Some(p) = prev {
                    let signed = match dir {
                        Direction::Increase => y - p,
                        Direction::Decrease => p - y,
                        Direction::NonMonotone => unreachable!(),
                    };
                    feature_pairs += 1;
                    if signed < -tol {
                        feature_viol += 1;
                        report.worst_gap = report.worst_gap.max(-signed);
                    }
                }
                prev = Some(y);
            }
        }
        report.pairs_checked += feature_pairs;
        report.violations += feature_viol;
        report.per_feature.push((
            spec.names()[fi].clone(),
            if feature_pairs == 0 {
                0.0
            } else {
                feature_viol as f64 / feature_pairs as f64
            },
        ));
    }
    Ok(report)
}
