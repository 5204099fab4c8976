//! Online control optimization without a global model.
//!
//! Each step fits an affine local model of total power over the most recent
//! `k` samples (ridge-regularized ordinary least squares, intercept
//! included) and uses its slope vector as a biased gradient estimate. The
//! control descends with a `1/sqrt(t)` step inside a small trust region
//! around the previous command, then bounded discretized Gaussian noise is
//! added so the next window stays well-conditioned. Exploration shrinking
//! shrinks the gradient bias; the loop keeps running estimates of both for
//! diagnosis against a ground-truth plant.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::mbo::{optimize_controls, OptimizeConfig, OptimizeMethod, PowerSurrogate};
use crate::plant::{ControlVector, PlantSample, PlantState};
use crate::simulator::{observe, plant_power, PlantConfig};
use crate::{Error, Result};

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decay {
    /// `eta_t = eta0 / sqrt(t)` over descent steps.
    InvSqrtT,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AoiConfig {
    /// Sliding window capacity; at least `d + 1` samples are needed for the
    /// affine fit.
    pub k: usize,
    /// Step scale. `None` derives `diam(box) / G` from a running gradient
    /// bound.
    pub eta0: Option<f64>,
    pub decay: Decay,
    /// Exploration noise standard deviation (control units).
    pub explore_sigma: f64,
    /// Cap on both the exploration offset and the per-step trust region.
    pub explore_cap: f64,
    /// Setpoint discretization: noise is rounded to multiples of this.
    pub s_unit: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub ridge: f64,
    /// Window invalidation threshold: when the local fit's residual RMSE
    /// exceeds `xi * mean(|y|)` over the window, the window is flushed and
    /// the local model refit from scratch. `None` disables the check.
    pub staleness_xi: Option<f64>,
    pub seed: u64,
}

impl AoiConfig {
    /// Sensible defaults for a box: `k = 3(d+1)`, trust region and noise at
    /// a few percent of the narrowest box width.
    pub fn for_box(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let d = lo.len();
        let width = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| h - l)
            .fold(f64::INFINITY, f64::min);
        let cap = 0.05 * width;
        AoiConfig {
            k: 3 * (d + 1),
            eta0: None,
            decay: Decay::InvSqrtT,
            explore_sigma: 0.5 * cap,
            explore_cap: cap,
            s_unit: 0.1 * cap,
            lo,
            hi,
            ridge: 1e-8,
            staleness_xi: Some(1.0),
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.hi.len() != d {
            return Err(Error::Config("empty or mismatched box bounds".into()));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l <= h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::Config(format!("bad box bounds [{l}, {h}]")));
            }
        }
        if self.k < d + 1 {
            return Err(Error::Config(format!(
                "window k = {} below the d + 1 = {} minimum",
                self.k,
                d + 1
            )));
        }
        if !(self.explore_sigma >= 0.0) || !(self.explore_cap > 0.0) || !(self.s_unit > 0.0) {
            return Err(Error::Config("exploration parameters must be positive".into()));
        }
        if self.ridge < 0.0 {
            return Err(Error::Config("ridge must be >= 0".into()));
        }
        if let Some(e) = self.eta0 {
            if !(e > 0.0) {
                return Err(Error::Config("eta0 must be positive when fixed".into()));
            }
        }
        Ok(())
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }
}

/// One observation the controller keeps: the commanded control and the
/// (noisy) objective it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiSample {
    pub c: Vec<f64>,
    pub y: f64,
}

impl AoiSample {
    pub fn from_plant(s: &PlantSample) -> Self {
        AoiSample { c: s.control.as_array().to_vec(), y: s.p_total }
    }
}

/// Slope vector of the ridge-regularized affine fit `y ~ theta0 + theta . c`
/// over the window. The intercept is included in the fit but not penalized.
pub fn ols_gradient(window: &[AoiSample], ridge: f64) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(Error::DegenerateWindow("empty window".into()));
    }
    let d = window[0].c.len();
    let m = window.len();
    if m < d + 1 {
        return Err(Error::DegenerateWindow(format!(
            "{m} samples cannot identify {d} slopes plus intercept"
        )));
    }
    if ridge < 0.0 {
        return Err(Error::Config(format!("ridge must be >= 0, got {ridge}")));
    }
    // Zero spread in any control column means the slope is unidentifiable no
    // matter the ridge; surface it as insufficient exploration.
    for j in 0..d {
        let first = window[0].c[j];
        if window.iter().all(|s| s.c[j] == first) {
            return Err(Error::DegenerateWindow(format!(
                "control column {j} has zero variance"
            )));
        }
    }
    let mut x = DMatrix::<f64>::zeros(m, d + 1);
    let mut y = DVector::<f64>::zeros(m);
    for (i, s) in window.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for j in 0..d {
            x[(i, j + 1)] = s.c[j];
        }
        y[i] = s.y;
    }
    let mut gram = x.transpose() * &x;
    for j in 1..=d {
        gram[(j, j)] += ridge;
    }
    let rhs = x.transpose() * y;
    let theta = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateWindow("singular design after ridge".into()))?;
    Ok(theta.as_slice()[1..].to_vec())
}

/// Residual RMSE of the same affine fit, for the staleness check.
fn ols_residual_rmse(window: &[AoiSample], slopes: &[f64]) -> f64 {
    // Re-derive the intercept from the fitted slopes (mean residual form).
    let m = window.len() as f64;
    let mean_y = window.iter().map(|s| s.y).sum::<f64>() / m;
    let mut intercept = mean_y;
    for (j, th) in slopes.iter().enumerate() {
        let mean_c = window.iter().map(|s| s.c[j]).sum::<f64>() / m;
        intercept -= th * mean_c;
    }
    let ss: f64 = window
        .iter()
        .map(|s| {
            let pred = intercept
                + slopes
                    .iter()
                    .enumerate()
                    .map(|(j, th)| th * s.c[j])
                    .sum::<f64>();
            (s.y - pred) * (s.y - pred)
        })
        .sum();
    (ss / m).sqrt()
}

/// Draw `Normal(0, sigma^2)`, round to the nearest multiple of `s_unit`, and
/// clamp into `[lo, hi]` (with `lo <= 0 <= hi`).
pub fn bounded_discrete_normal(
    sigma: f64,
    lo: f64,
    hi: f64,
    s_unit: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    debug_assert!(lo <= 0.0 && hi >= 0.0 && s_unit > 0.0);
    if sigma <= 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    let draw: f64 = normal.sample(rng);
    let rounded = (draw / s_unit).round() * s_unit;
    rounded.clamp(lo, hi)
}

/// Controller state carried across steps.
#[derive(Debug, Clone)]
pub struct AoiState {
    /// Samples observed so far.
    pub t: u64,
    /// Descent steps taken so far (drives the decay schedule).
    pub descent_steps: u64,
    /// Last commanded control (exploration noise included).
    pub c: Vec<f64>,
    /// Last pre-noise descent iterate; this is the converged answer.
    pub c_exploit: Vec<f64>,
    pub window: VecDeque<AoiSample>,
    pub last_grad: Option<Vec<f64>>,
    /// Running bound on the gradient norm, floored at 1, used to scale eta0.
    pub g_max: f64,
    rng: ChaCha8Rng,
}

impl AoiState {
    pub fn new(c0: Vec<f64>, cfg: &AoiConfig) -> Result<Self> {
        cfg.validate()?;
        if c0.len() != cfg.dim() {
            return Err(Error::Shape { expected: cfg.dim(), got: c0.len() });
        }
        let clamped: Vec<f64> = c0
            .iter()
            .zip(cfg.lo.iter().zip(&cfg.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect();
        Ok(AoiState {
            t: 0,
            descent_steps: 0,
            c: clamped.clone(),
            c_exploit: clamped,
            window: VecDeque::with_capacity(cfg.k),
            last_grad: None,
            g_max: 1.0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }
}

/// What one step did, for trajectory logging.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub grad: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub window_flushed: bool,
}

/// Advance the controller by one observation and produce the next command.
///
/// With a full window the step estimates the gradient, descends inside the
/// trust region `[c - cap, c + cap]` intersected with the box, and then adds
/// bounded discrete exploration noise. Below `k` samples (cold start) or on
/// a degenerate window it explores only.
pub fn aoi_step(state: &mut AoiState, cfg: &AoiConfig, latest: AoiSample) -> Result<StepInfo> {
    if latest.c.len() != cfg.dim() {
        return Err(Error::Shape { expected: cfg.dim(), got: latest.c.len() });
    }
    state.t += 1;
    if state.window.len() == cfg.k {
        state.window.pop_front();
    }
    state.window.push_back(latest);

    let mut info = StepInfo { grad: None, eta: None, window_flushed: false };
    let window: Vec<AoiSample> = state.window.iter().cloned().collect();
    if window.len() >= cfg.k {
        match ols_gradient(&window, cfg.ridge) {
            Ok(grad) => {
                let stale = cfg.staleness_xi.map_or(false, |xi| {
                    let mean_abs = window.iter().map(|s| s.y.abs()).sum::<f64>()
                        / window.len() as f64;
                    ols_residual_rmse(&window, &grad) > xi * mean_abs
                });
                if stale {
                    state.window.clear();
                    info.window_flushed = true;
                } else {
                    let g_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    state.g_max = state.g_max.max(g_norm).max(1.0);
                    let eta0 = cfg.eta0.unwrap_or(cfg.diameter() / state.g_max);
                    state.descent_steps += 1;
                    let eta = match cfg.decay {
                        Decay::InvSqrtT => eta0 / (state.descent_steps as f64).sqrt(),
                        Decay::Constant => eta0,
                    };
                    // The iterate sequence is the pre-noise exploit point;
                    // exploration excursions never accumulate into it.
                    let base = state.c_exploit.clone();
                    let mut next = vec![0.0; cfg.dim()];
                    for i in 0..cfg.dim() {
                        let moved = base[i] - eta * grad[i];
                        let boxed = moved.clamp(cfg.lo[i], cfg.hi[i]);
                        next[i] =
                            boxed.clamp(base[i] - cfg.explore_cap, base[i] + cfg.explore_cap);
                    }
                    state.c_exploit = next;
                    info.eta = Some(eta);
                    info.grad = Some(grad.clone());
                    state.last_grad = Some(grad);
                }
            }
            Err(Error::DegenerateWindow(_)) => {
                // Recoverable: keep exploring until the design has spread.
            }
            Err(e) => return Err(e),
        }
    }
    // Bounded discrete exploration around the exploited point, always
    // feasible by construction. With no descent (cold start or degenerate
    // window) the exploit point simply holds.
    let mut commanded = state.c_exploit.clone();
    for i in 0..cfg.dim() {
        let l = (commanded[i] - cfg.lo[i]).min(cfg.explore_cap);
        let r = (cfg.hi[i] - commanded[i]).min(cfg.explore_cap);
        let u = bounded_discrete_normal(cfg.explore_sigma, -l, r, cfg.s_unit, &mut state.rng);
        commanded[i] += u;
    }
    state.c = commanded;
    Ok(info)
}

/// A plant the online loop can drive: observations are noisy, ground truth
/// is available separately for diagnostics only.
pub trait OnlinePlant {
    fn dim(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_control(&self) -> Vec<f64>;
    /// Apply the control, return the (noisy) observed objective.
    fn observe(&mut self, c: &[f64]) -> Result<f64>;
    fn true_objective(&self, c: &[f64]) -> Result<f64>;
    fn true_gradient(&self, c: &[f64]) -> Result<Vec<f64>>;
    /// Best achievable true objective over the box.
    fn optimal_value(&self) -> f64;
}

/// One row of the run log.
#[derive(Debug, Clone)]
pub struct AoiRecord {
    pub t: u64,
    /// Control commanded at this step (what was actually applied).
    pub c: Vec<f64>,
    /// Observed (noisy) objective at `c`.
    pub y: f64,
    /// Norm of the gradient estimate, 0 when no descent happened.
    pub g_norm: f64,
    /// Norm of (estimate - true gradient), 0 when no descent happened.
    pub e_norm: f64,
    /// Step size used, 0 when no descent happened.
    pub eta: f64,
    /// True instantaneous regret at `c`.
    pub regret: f64,
}

/// Ground-truth diagnostics of a finished run.
#[derive(Debug, Clone)]
pub struct AoiDiagnostics {
    pub bias_norms: Vec<f64>,
    pub regrets: Vec<f64>,
    pub final_exploit: Vec<f64>,
    pub final_true_objective: f64,
    pub optimal_value: f64,
}

impl AoiDiagnostics {
    /// Mean regret over the first and second halves of the run.
    pub fn regret_halves(&self) -> (f64, f64) {
        let n = self.regrets.len();
        let mid = n / 2;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (mean(&self.regrets[..mid]), mean(&self.regrets[mid..]))
    }

    pub fn median_bias(&self) -> f64 {
        if self.bias_norms.is_empty() {
            return 0.0;
        }
        let mut b = self.bias_norms.clone();
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b[b.len() / 2]
    }
}

/// Closed loop: command, observe, step; diagnostics come from the plant's
/// ground truth. Deterministic per seed.
pub fn run_aoi<P: OnlinePlant>(
    plant: &mut P,
    cfg: &AoiConfig,
    t_steps: usize,
) -> Result<(Vec<AoiRecord>, AoiDiagnostics)> {
    if t_steps < 1 {
        return Err(Error::Config("need at least one step".into()));
    }
    cfg.validate()?;
    let mut state = AoiState::new(plant.initial_control(), cfg)?;
    let f_star = plant.optimal_value();
    let mut records = Vec::with_capacity(t_steps);
    let mut bias_norms = Vec::new();
    let mut regrets = Vec::with_capacity(t_steps);
    for _ in 0..t_steps {
        let commanded = state.c.clone();
        let y = plant.observe(&commanded)?;
        let true_obj = plant.true_objective(&commanded)?;
        let true_grad = plant.true_gradient(&commanded)?;
        let regret = true_obj - f_star;
        let info = aoi_step(&mut state, cfg, AoiSample { c: commanded.clone(), y })?;
        let (g_norm, e_norm, eta) = match (&info.grad, info.eta) {
            (Some(g), Some(eta)) => {
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let en = g
                    .iter()
                    .zip(&true_grad)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                bias_norms.push(en);
                (gn, en, eta)
            }
            _ => (0.0, 0.0, 0.0),
        };
        records.push(AoiRecord { t: state.t, c: commanded, y, g_norm, e_norm, eta, regret });
        regrets.push(regret);
    }
    let final_true_objective = plant.true_objective(&state.c_exploit)?;
    Ok((
        records,
        AoiDiagnostics {
            bias_norms,
            regrets,
            final_exploit: state.c_exploit.clone(),
            final_true_objective,
            optimal_value: f_star,
        },
    ))
}

/// Separable quadratic toy plant `f(c) = sum (c_i - center_i)^2` with
/// Gaussian observation noise.
#[derive(Debug, Clone)]
pub struct QuadraticPlant {
    pub center: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub start: Vec<f64>,
    pub noise_sigma: f64,
    rng: ChaCha8Rng,
}

impl QuadraticPlant {
    pub fn new(
        center: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        start: Vec<f64>,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        QuadraticPlant {
            center,
            lo,
            hi,
            start,
            noise_sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl OnlinePlant for QuadraticPlant {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }

    fn initial_control(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn observe(&mut self, c: &[f64]) -> Result<f64> {
        let clean = self.true_objective(c)?;
        if self.noise_sigma == 0.0 {
            return Ok(clean);
        }
        let n = Normal::new(0.0, self.noise_sigma).expect("sigma >= 0");
        Ok(clean + n.sample(&mut self.rng))
    }

    fn true_objective(&self, c: &[f64]) -> Result<f64> {
        Ok(c.iter()
            .zip(&self.center)
            .map(|(v, m)| (v - m) * (v - m))
            .sum())
    }

    fn true_gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        Ok(c.iter().zip(&self.center).map(|(v, m)| 2.0 * (v - m)).collect())
    }

    fn optimal_value(&self) -> f64 {
        // The center is assumed inside the box.
        0.0
    }
}

/// The chiller simulator wrapped as an online plant: the state is held at
/// the prevailing conditions and every observation is logged as a full
/// [`PlantSample`].
pub struct ChillerPlantLoop {
    pub plant: PlantConfig,
    pub state: PlantState,
    pub samples: Vec<PlantSample>,
    optimal: f64,
    t: u64,
    rng: ChaCha8Rng,
}

impl ChillerPlantLoop {
    pub fn new(plant: PlantConfig, state: PlantState, seed: u64) -> Result<Self> {
        state.validate()?;
        let oracle = optimize_controls(
            &plant,
            &state,
            &OptimizeConfig::new(OptimizeMethod::GridOracle, plant.bounds.control_bounds()),
            0,
        )?;
        Ok(ChillerPlantLoop {
            plant,
            state,
            samples: Vec::new(),
            optimal: oracle.f_star,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn control(c: &[f64]) -> ControlVector {
        ControlVector { f_cow_pump: c[0], f_fan: c[1] }
    }
}

impl OnlinePlant for ChillerPlantLoop {
    fn dim(&self) -> usize {
        2
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let cb = self.plant.bounds.control_bounds();
        (cb.lo().to_vec(), cb.hi().to_vec())
    }

    fn initial_control(&self) -> Vec<f64> {
        self.plant.bounds.control_bounds().midpoint().as_array().to_vec()
    }

    fn observe(&mut self, c: &[f64]) -> Result<f64> {
        let control = Self::control(c);
        let truth = plant_power(&self.plant, &control, &self.state)?;
        let seen = observe(&truth, self.plant.noise_sigma, &mut self.rng);
        self.samples.push(PlantSample {
            t: self.t,
            state: self.state,
            control,
            p_ch: seen.p_ch,
            p_ct: seen.p_ct,
            p_cowp: seen.p_cowp,
            p_chwp: seen.p_chwp,
            p_total: seen.p_total,
        });
        self.t += 1;
        Ok(seen.p_total)
    }

    fn true_objective(&self, c: &[f64]) -> Result<f64> {
        Ok(plant_power(&self.plant, &Self::control(c), &self.state)?.p_total)
    }

    fn true_gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .plant
            .control_grad(&Self::control(c), &self.state)?
            .to_vec())
    }

    fn optimal_value(&self) -> f64 {
        self.optimal
    }
}
