//! Training objectives and the mini-batch training loop.
//!
//! The full objective is
//! `mse_l2 + rank_weight * mean(rank loss) + range_weight * mean(range penalty)`:
//! the usual regularized squared error, plus pairwise rank penalties that push
//! natural curves toward the declared monotone directions, plus hinge-style
//! penalties on predictions escaping the plausible output range.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mnn::{build_mnn, Direction, MnnArchitecture, MonotonicitySpec};
use crate::model::{ArchKind, CoreNet, Normalizer, TrainedModel};
use crate::netcore::{sigmoid, DenseNet};
use crate::plant::PlantSample;
use crate::{Error, Result};

/// Which pairwise rank loss to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankKind {
    CrossEntropy,
    Hinge,
    None,
}

impl std::str::FromStr for RankKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" | "cross-entropy" | "crossentropy" => Ok(RankKind::CrossEntropy),
            "hinge" => Ok(RankKind::Hinge),
            "none" => Ok(RankKind::None),
            other => Err(Error::Config(format!("unknown rank loss '{other}'"))),
        }
    }
}

/// A pair of feature vectors with the true ordering of their targets:
/// `label = 1` means `y_A > y_B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
    pub label: u8,
}

/// Hyperparameters of the training loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty coefficient on weights (the objective's ridge term).
    pub l2_gamma: f64,
    pub rank_weight: f64,
    pub rank_kind: RankKind,
    pub range_weight: f64,
    /// Output range `(lower, upper)` for the range penalty, in the same units
    /// as the targets. `None` defaults to `[0, 1.5 * max(target)]`.
    pub y_bounds: Option<(f64, f64)>,
    pub batch_size: usize,
    /// Momentum coefficient; `None` is plain SGD.
    pub momentum: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.05,
            l2_gamma: 1e-4,
            rank_weight: 1.0,
            rank_kind: RankKind::CrossEntropy,
            range_weight: 0.1,
            y_bounds: None,
            batch_size: 32,
            momentum: Some(0.9),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.l2_gamma < 0.0 || self.rank_weight < 0.0 || self.range_weight < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.y_bounds {
            if !(lo <= hi) {
                return Err(Error::Config(format!("y bounds [{lo}, {hi}] inverted")));
            }
        }
        if self.rank_kind == RankKind::None && self.rank_weight > 0.0 {
            return Err(Error::Config(
                "rank_weight > 0 requires a rank loss kind other than None".into(),
            ));
        }
        Ok(())
    }
}

/// `(1/2m) sum (y - yhat)^2 + gamma * sum w^2` over the given weight entries
/// (biases are excluded by the caller).
pub fn mse_l2(preds: &[f64], targets: &[f64], weights: &[f64], gamma: f64) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::Shape { expected: targets.len(), got: preds.len() });
    }
    let m = preds.len() as f64;
    let sq: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    let l2: f64 = weights.iter().map(|w| w * w).sum();
    Ok(sq / (2.0 * m) + gamma * l2)
}

/// Cross-entropy rank loss on the predicted margin `d = yhat_a - yhat_b`:
/// `-label*ln(sigmoid(d)) - (1-label)*ln(1-sigmoid(d))`, computed in the
/// stable softplus form.
pub fn rank_loss_ce(yhat_a: f64, yhat_b: f64, label: u8) -> f64 {
    let d = yhat_a - yhat_b;
    let softplus = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
    if label != 0 {
        softplus(-d)
    } else {
        softplus(d)
    }
}

/// d(rank_loss_ce)/d(yhat_a): `sigmoid(d) - label`. The gradient with respect
/// to `yhat_b` is the negation.
pub fn rank_loss_ce_grad_a(yhat_a: f64, yhat_b: f64, label: u8) -> f64 {
    sigmoid(yhat_a - yhat_b) - if label != 0 { 1.0 } else { 0.0 }
}

/// Hinge rank loss: the misordered margin, zero when the predicted order
/// agrees with (or ties) the label.
pub fn rank_loss_hinge(yhat_a: f64, yhat_b: f64, label: u8) -> f64 {
    if label != 0 {
        (yhat_b - yhat_a).max(0.0)
    } else {
        (yhat_a - yhat_b).max(0.0)
    }
}

/// d(rank_loss_hinge)/d(yhat_a); the gradient for `yhat_b` is the negation.
pub fn rank_loss_hinge_grad_a(yhat_a: f64, yhat_b: f64, label: u8) -> f64 {
    if label != 0 {
        if yhat_b > yhat_a {
            -1.0
        } else {
            0.0
        }
    } else if yhat_a > yhat_b {
        1.0
    } else {
        0.0
    }
}

/// Penalty for predictions escaping `[lower, upper]`:
/// `max(yhat - upper, 0) + max(lower - yhat, 0)`.
pub fn range_penalty(yhat: f64, lower: f64, upper: f64) -> f64 {
    (yhat - upper).max(0.0) + (lower - yhat).max(0.0)
}

fn range_penalty_grad(yhat: f64, lower: f64, upper: f64) -> f64 {
    if yhat > upper {
        1.0
    } else if yhat < lower {
        -1.0
    } else {
        0.0
    }
}

fn rank_grad_a(kind: RankKind, yhat_a: f64, yhat_b: f64, label: u8) -> f64 {
    match kind {
        RankKind::CrossEntropy => rank_loss_ce_grad_a(yhat_a, yhat_b, label),
        RankKind::Hinge => rank_loss_hinge_grad_a(yhat_a, yhat_b, label),
        RankKind::None => 0.0,
    }
}

fn rank_loss(kind: RankKind, yhat_a: f64, yhat_b: f64, label: u8) -> f64 {
    match kind {
        RankKind::CrossEntropy => rank_loss_ce(yhat_a, yhat_b, label),
        RankKind::Hinge => rank_loss_hinge(yhat_a, yhat_b, label),
        RankKind::None => 0.0,
    }
}

/// Synthesize rank pairs from plant samples: copy a random anchor's feature
/// vector, bump one monotone feature by a positive amount up to
/// `delta_frac` of its observed range, and derive the true ordering from the
/// declared direction.
pub fn generate_pairs(
    dataset: &[PlantSample],
    spec: &MonotonicitySpec,
    delta_frac: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<PairSample>> {
    if dataset.is_empty() {
        return Err(Error::Config("pair generation needs a nonempty dataset".into()));
    }
    if !(delta_frac > 0.0 && delta_frac <= 0.2) {
        return Err(Error::Config(format!(
            "delta_frac must be in (0, 0.2], got {delta_frac}"
        )));
    }
    let monotone = spec.monotone_indices();
    if monotone.is_empty() {
        return Err(Error::Spec("spec has no monotone features to perturb".into()));
    }
    let d = spec.len();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for s in dataset {
        for (r, v) in ranges.iter_mut().zip(s.features()) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let anchor = &dataset[rng.random_range(0..dataset.len())];
        let fi = monotone[rng.random_range(0..monotone.len())];
        let span = ranges[fi].1 - ranges[fi].0;
        let span = if span > 0.0 { span } else { 1.0 };
        // (1 - u) with u in [0, 1) keeps the perturbation strictly positive.
        let bump = (1.0 - rng.random::<f64>()) * delta_frac * span;
        let x_a: Vec<f64> = anchor.features().to_vec();
        let mut x_b = x_a.clone();
        x_b[fi] += bump;
        // x_b has the larger coordinate, so a decreasing feature means
        // y_a > y_b.
        let label = match spec.directions()[fi] {
            Direction::Decrease => 1,
            Direction::Increase => 0,
            Direction::NonMonotone => unreachable!("only monotone features are picked"),
        };
        pairs.push(PairSample { x_a, x_b, label });
    }
    Ok(pairs)
}

/// Loss components recorded at the end of one epoch, evaluated over the full
/// dataset and pair set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mse: f64,
    pub rank_loss: f64,
    pub range_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_total(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.total)
    }
}

/// Mini-batch SGD over the combined objective. Each data batch is paired
/// with an equally sized batch of rank pairs (cycling through `pairs`), the
/// gradients are combined into a single step, and constrained layers are
/// projected after every update.
pub fn train(
    net: &mut CoreNet,
    xs: &[Vec<f64>],
    ys: &[f64],
    pairs: &[PairSample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Config("training needs a nonempty aligned dataset".into()));
    }
    if cfg.rank_kind != RankKind::None && cfg.rank_weight > 0.0 && pairs.is_empty() {
        return Err(Error::Config("rank loss enabled but no pairs supplied".into()));
    }
    let use_rank = cfg.rank_kind != RankKind::None && cfg.rank_weight > 0.0 && !pairs.is_empty();
    let (y_lo, y_hi) = cfg.y_bounds.unwrap_or_else(|| {
        let max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0.0, 1.5 * max)
    });
    let use_range = cfg.range_weight > 0.0;

    let n_params = net.param_count();
    let mut grad = vec![0.0; n_params];
    let mut velocity = vec![0.0; n_params];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut pair_order: Vec<usize> = (0..pairs.len()).collect();
    let mut pair_cursor = 0usize;
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        if use_rank {
            pair_order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let m = batch.len() as f64;
            for &i in batch {
                let x = &xs[i];
                let y = ys[i];
                let yhat = net.predict(x)?;
                let mut upstream = (yhat - y) / m;
                if use_range {
                    upstream += cfg.range_weight * range_penalty_grad(yhat, y_lo, y_hi) / m;
                }
                net.add_param_grads(x, upstream, &mut grad)?;
            }
            net.add_l2_grad(cfg.l2_gamma, &mut grad);

            if use_rank {
                let pm = batch.len().min(pairs.len());
                for _ in 0..pm {
                    let p = &pairs[pair_order[pair_cursor % pairs.len()]];
                    pair_cursor += 1;
                    let yhat_b = net.predict(&p.x_b)?;
                    let yhat_a = net.predict(&p.x_a)?;
                    let ga = rank_grad_a(cfg.rank_kind, yhat_a, yhat_b, p.label);
                    let w = cfg.rank_weight / pm as f64;
                    net.add_param_grads(&p.x_a, w * ga, &mut grad)?;
                    net.add_param_grads(&p.x_b, -w * ga, &mut grad)?;
                }
            }

            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            let mut params = net.flat_params();
            match cfg.momentum {
                Some(mu) => {
                    for ((v, g), p) in velocity.iter_mut().zip(&grad).zip(params.iter_mut()) {
                        *v = mu * *v + g;
                        *p -= cfg.lr * *v;
                    }
                }
                None => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= cfg.lr * g;
                    }
                }
            }
            net.set_flat_params(&params)?;
            net.project();
        }

        let stats = evaluate_objective(net, xs, ys, pairs, cfg, (y_lo, y_hi), epoch)?;
        if !stats.total.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.epochs.push(stats);
    }
    Ok(history)
}

fn evaluate_objective(
    net: &CoreNet,
    xs: &[Vec<f64>],
    ys: &[f64],
    pairs: &[PairSample],
    cfg: &TrainConfig,
    bounds: (f64, f64),
    epoch: usize,
) -> Result<EpochStats> {
    let mut preds = Vec::with_capacity(xs.len());
    for x in xs {
        preds.push(net.predict(x)?);
    }
    let m = xs.len() as f64;
    let sq: f64 = preds.iter().zip(ys).map(|(p, y)| (y - p) * (y - p)).sum();
    let mse = sq / (2.0 * m) + cfg.l2_gamma * net.weight_sq_norm();
    let range_loss = if cfg.range_weight > 0.0 {
        preds.iter().map(|&p| range_penalty(p, bounds.0, bounds.1)).sum::<f64>() / m
    } else {
        0.0
    };
    let rank = if cfg.rank_kind != RankKind::None && !pairs.is_empty() {
        let mut acc = 0.0;
        for p in pairs {
            let a = net.predict(&p.x_a)?;
            let b = net.predict(&p.x_b)?;
            acc += rank_loss(cfg.rank_kind, a, b, p.label);
        }
        acc / pairs.len() as f64
    } else {
        0.0
    };
    Ok(EpochStats {
        epoch,
        mse,
        rank_loss: rank,
        range_loss,
        total: mse + cfg.rank_weight * rank + cfg.range_weight * range_loss,
    })
}

/// End-to-end chiller training setup used by the CLI and the benchmarks.
#[derive(Debug, Clone)]
pub struct ChillerTrainSetup {
    pub kind: ArchKind,
    pub arch: MnnArchitecture,
    /// Rank pairs to synthesize (ignored when the kind trains without them).
    pub pair_count: usize,
    pub delta_frac: f64,
    pub cfg: TrainConfig,
}

impl ChillerTrainSetup {
    pub fn new(kind: ArchKind) -> Self {
        let mut cfg = TrainConfig::default();
        if kind == ArchKind::Mlp {
            cfg.rank_kind = RankKind::None;
            cfg.rank_weight = 0.0;
        }
        ChillerTrainSetup {
            kind,
            arch: MnnArchitecture::default_chiller(),
            pair_count: 1000,
            delta_frac: 0.05,
            cfg,
        }
    }
}

/// Fit a chiller power model (`P_CH` as a function of the six features) on
/// plant samples: standardize, synthesize pairs if the recipe needs them,
/// build the network, and run [`train`] in normalized space.
pub fn train_chiller(
    samples: &[PlantSample],
    spec: &MonotonicitySpec,
    setup: &ChillerTrainSetup,
) -> Result<(TrainedModel, TrainHistory)> {
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    if spec.len() != 6 {
        return Err(Error::Spec(format!("chiller spec needs 6 features, got {}", spec.len())));
    }
    if matches!(setup.kind, ArchKind::HardMnn) && spec.has_non_monotone() {
        return Err(Error::Spec(
            "hard-mnn requires a fully monotone spec; use partial-mnn".into(),
        ));
    }
    let xs_raw: Vec<Vec<f64>> = samples.iter().map(|s| s.features().to_vec()).collect();
    let ys_raw: Vec<f64> = samples.iter().map(|s| s.p_ch).collect();
    let norm = Normalizer::fit(&xs_raw, &ys_raw)?;
    let xs: Vec<Vec<f64>> = xs_raw.iter().map(|x| norm.norm_x(x)).collect();
    let ys: Vec<f64> = ys_raw.iter().map(|&y| norm.norm_y(y)).collect();

    let mut cfg = setup.cfg.clone();
    // Range bounds arrive in kW; the loop works in normalized units.
    if cfg.range_weight > 0.0 {
        let (lo_kw, hi_kw) = cfg.y_bounds.unwrap_or_else(|| {
            (0.0, 1.5 * ys_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        });
        cfg.y_bounds = Some((norm.norm_y(lo_kw), norm.norm_y(hi_kw)));
    }

    let use_pairs = !matches!(cfg.rank_kind, RankKind::None) && cfg.rank_weight > 0.0;
    let pairs: Vec<PairSample> = if use_pairs {
        generate_pairs(samples, spec, setup.delta_frac, setup.pair_count, cfg.seed ^ 0x9e3779b9)?
            .into_iter()
            .map(|p| PairSample {
                x_a: norm.norm_x(&p.x_a),
                x_b: norm.norm_x(&p.x_b),
                label: p.label,
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut net = match setup.kind {
        ArchKind::Mlp | ArchKind::SoftMnn => {
            CoreNet::Mlp(DenseNet::mlp(spec.len(), &setup.arch.hidden, cfg.seed))
        }
        ArchKind::HardMnn | ArchKind::PartialMnn => {
            CoreNet::Mnn(build_mnn(spec, &setup.arch, cfg.seed)?)
        }
    };
    let history = train(&mut net, &xs, &ys, &pairs, &cfg)?;
    Ok((
        TrainedModel { kind: setup.kind, spec: spec.clone(), normalizer: norm, net },
        history,
    ))
}

/// Mean absolute percentage error of a trained model over plant samples.
pub fn mape(model: &TrainedModel, samples: &[PlantSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("MAPE needs samples".into()));
    }
    let mut acc = 0.0;
    for s in samples {
        let yhat = model.predict(&s.features())?;
        acc += ((s.p_ch - yhat) / s.p_ch).abs();
    }
    Ok(100.0 * acc / samples.len() as f64)
}
