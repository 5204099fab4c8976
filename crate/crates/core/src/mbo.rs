//! Model-based control optimization: assemble the total-power surrogate from
//! the component models and minimize it over the control box.
//!
//! Two solvers are provided. The projected-gradient path does seeded
//! multi-start descent through the surrogate's input gradients, clamping
//! every iterate into the box. The grid oracle exhaustively evaluates a
//! regular lattice and is used both as a baseline policy and as the
//! reference the gradient path is checked against.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::devicefit::CubicDeviceModel;
use crate::model::TrainedModel;
use crate::plant::{
    chiller_features, ControlBounds, ControlVector, PlantState, FEATURE_IDX_COW_PUMP,
    FEATURE_IDX_FAN,
};
use crate::simulator::{plant_power, PlantConfig};
use crate::{Error, Result};

/// Anything that predicts total plant power for a state/control pair and can
/// expose its gradient with respect to the two controls.
pub trait PowerSurrogate {
    fn total_power(&self, c: &ControlVector, s: &PlantState) -> Result<f64>;
    /// `[d/dF_cow_pump, d/dF_fan]`.
    fn control_grad(&self, c: &ControlVector, s: &PlantState) -> Result<[f64; 2]>;
}

/// Learned surrogate: trained chiller network plus the three fitted cubic
/// device models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TotalPowerModel {
    pub chiller: TrainedModel,
    pub tower: CubicDeviceModel,
    pub cow_pump: CubicDeviceModel,
    pub chw_pump: CubicDeviceModel,
}

impl TotalPowerModel {
    /// Sum of the four component predictions.
    pub fn total_power(&self, c: &ControlVector, s: &PlantState) -> Result<f64> {
        let f = chiller_features(s, c);
        Ok(self.chiller.predict(&f)?
            + self.tower.power(c.f_fan)?
            + self.cow_pump.power(c.f_cow_pump)?
            + self.chw_pump.power(s.f_chw_pump)?)
    }
}

impl PowerSurrogate for TotalPowerModel {
    fn total_power(&self, c: &ControlVector, s: &PlantState) -> Result<f64> {
        TotalPowerModel::total_power(self, c, s)
    }

    fn control_grad(&self, c: &ControlVector, s: &PlantState) -> Result<[f64; 2]> {
        let f = chiller_features(s, c);
        let g = self.chiller.input_grad(&f)?;
        Ok([
            g[FEATURE_IDX_COW_PUMP] + self.cow_pump.power_slope(c.f_cow_pump)?,
            g[FEATURE_IDX_FAN] + self.tower.power_slope(c.f_fan)?,
        ])
    }
}

/// The true plant doubles as a surrogate for oracle experiments.
impl PowerSurrogate for PlantConfig {
    fn total_power(&self, c: &ControlVector, s: &PlantState) -> Result<f64> {
        Ok(plant_power(self, c, s)?.p_total)
    }

    fn control_grad(&self, c: &ControlVector, s: &PlantState) -> Result<[f64; 2]> {
        // Analytic: the chiller term is a * T_wb / (r_p * r_f); each device
        // adds its own cubic slope in its own control.
        let r_p = c.f_cow_pump / self.cow_pump.f_rated;
        let r_f = c.f_fan / self.tower.f_rated;
        let d_ch_dp = -self.coef_a * s.t_wb / (r_f * r_p * r_p * self.cow_pump.f_rated);
        let d_ch_df = -self.coef_a * s.t_wb / (r_p * r_f * r_f * self.tower.f_rated);
        Ok([
            d_ch_dp + self.cow_pump.power_slope(c.f_cow_pump)?,
            d_ch_df + self.tower.power_slope(c.f_fan)?,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizeMethod {
    ProjectedGradient,
    GridOracle,
}

impl std::str::FromStr for OptimizeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgd" | "projected-gradient" => Ok(OptimizeMethod::ProjectedGradient),
            "grid" | "grid-oracle" => Ok(OptimizeMethod::GridOracle),
            other => Err(Error::Config(format!("unknown optimize method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub method: OptimizeMethod,
    pub restarts: usize,
    pub max_iters: usize,
    /// Gradient step, Hz per (kW/Hz).
    pub lr: f64,
    pub grid_resolution: usize,
    pub bounds: ControlBounds,
}

impl OptimizeConfig {
    pub fn new(method: OptimizeMethod, bounds: ControlBounds) -> Self {
        OptimizeConfig {
            method,
            restarts: 8,
            max_iters: 500,
            lr: 1.0,
            grid_resolution: 101,
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.restarts < 1 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid resolution must be >= 2".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One recorded optimizer iterate.
#[derive(Debug, Clone, Copy)]
pub struct OptPoint {
    pub restart: usize,
    pub iter: usize,
    pub c: ControlVector,
    pub f: f64,
}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub c_star: ControlVector,
    pub f_star: f64,
    pub evaluations: usize,
    /// Projected-gradient iterates (empty for the grid oracle).
    pub trace: Vec<OptPoint>,
}

/// Deterministic starts: the box midpoint first, then Latin-hypercube
/// points, so a larger restart budget always contains the smaller one.
fn multi_starts(bounds: &ControlBounds, n: usize, seed: u64) -> Vec<ControlVector> {
    let mut starts = vec![bounds.midpoint()];
    if n > 1 {
        let m = n - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut strata: [Vec<usize>; 2] = [(0..m).collect(), (0..m).collect()];
        strata[0].shuffle(&mut rng);
        strata[1].shuffle(&mut rng);
        let lo = bounds.lo();
        let hi = bounds.hi();
        for i in 0..m {
            let frac = |k: usize| (k as f64 + 0.5) / m as f64;
            starts.push(ControlVector {
                f_cow_pump: lo[0] + frac(strata[0][i]) * (hi[0] - lo[0]),
                f_fan: lo[1] + frac(strata[1][i]) * (hi[1] - lo[1]),
            });
        }
    }
    starts
}

/// Minimize the surrogate over the control box for a fixed state.
pub fn optimize_controls<M: PowerSurrogate>(
    m: &M,
    s: &PlantState,
    cfg: &OptimizeConfig,
    seed: u64,
) -> Result<OptOutcome> {
    cfg.validate()?;
    match cfg.method {
        OptimizeMethod::GridOracle => grid_oracle(m, s, cfg),
        OptimizeMethod::ProjectedGradient => projected_gradient(m, s, cfg, seed),
    }
}

/// Exhaustive lattice argmin; ties keep the lowest lexicographic index
/// (cow-pump axis outer, fan axis inner).
fn grid_oracle<M: PowerSurrogate>(
    m: &M,
    s: &PlantState,
    cfg: &OptimizeConfig,
) -> Result<OptOutcome> {
    let n = cfg.grid_resolution;
    let lo = cfg.bounds.lo();
    let hi = cfg.bounds.hi();
    let mut best: Option<(ControlVector, f64)> = None;
    let mut evaluations = 0;
    for i in 0..n {
        let p = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let f = lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64;
            let c = ControlVector { f_cow_pump: p, f_fan: f };
            let v = m.total_power(&c, s)?;
            evaluations += 1;
            if !v.is_finite() {
                return Err(Error::Surrogate(vec![p, f]));
            }
            if best.map_or(true, |(_, bv)| v < bv) {
                best = Some((c, v));
            }
        }
    }
    let (c_star, f_star) = best.expect("resolution >= 2 guarantees evaluations");
    Ok(OptOutcome { c_star, f_star, evaluations, trace: Vec::new() })
}

fn projected_gradient<M: PowerSurrogate>(
    m: &M,
    s: &PlantState,
    cfg: &OptimizeConfig,
    seed: u64,
) -> Result<OptOutcome> {
    let starts = multi_starts(&cfg.bounds, cfg.restarts, seed);
    let mut best: Option<(ControlVector, f64)> = None;
    let mut evaluations = 0;
    let mut trace = Vec::new();
    for (ri, start) in starts.into_iter().enumerate() {
        let mut c = cfg.bounds.clamp(&start);
        for iter in 0..cfg.max_iters {
            let v = m.total_power(&c, s)?;
            evaluations += 1;
            if !v.is_finite() {
                return Err(Error::Surrogate(c.as_array().to_vec()));
            }
            trace.push(OptPoint { restart: ri, iter, c, f: v });
            if best.map_or(true, |(_, bv)| v < bv) {
                best = Some((c, v));
            }
            let g = m.control_grad(&c, s)?;
            let next = cfg.bounds.clamp(&ControlVector {
                f_cow_pump: c.f_cow_pump - cfg.lr * g[0],
                f_fan: c.f_fan - cfg.lr * g[1],
            });
            let step = (next.f_cow_pump - c.f_cow_pump)
                .abs()
                .max((next.f_fan - c.f_fan).abs());
            c = next;
            if step < 1e-4 {
                break;
            }
        }
        // Score the final iterate too.
        let v = m.total_power(&c, s)?;
        evaluations += 1;
        if !v.is_finite() {
            return Err(Error::Surrogate(c.as_array().to_vec()));
        }
        trace.push(OptPoint { restart: ri, iter: cfg.max_iters, c, f: v });
        if best.map_or(true, |(_, bv)| v < bv) {
            best = Some((c, v));
        }
    }
    let (c_star, f_star) = best.expect("restarts >= 1");
    Ok(OptOutcome { c_star, f_star, evaluations, trace })
}

/// One row of a policy evaluation: the optimizer's pick for a state, scored
/// on the true plant, with the grid-oracle true optimum alongside.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolicyRow {
    pub state_id: usize,
    pub t_wb: f64,
    pub c_fan: f64,
    pub c_pump: f64,
    pub pred_kw: f64,
    pub true_kw: f64,
    pub oracle_true_kw: f64,
}

/// Optimize each state with the surrogate, then score the chosen controls on
/// the true plant; the oracle column is the grid argmin of the true plant
/// itself.
pub fn evaluate_policy<M: PowerSurrogate>(
    m: &M,
    cfg: &OptimizeConfig,
    plant: &PlantConfig,
    states: &[PlantState],
    seed: u64,
) -> Result<Vec<PolicyRow>> {
    if states.is_empty() {
        return Err(Error::Config("policy evaluation needs at least one state".into()));
    }
    let oracle_cfg = OptimizeConfig {
        method: OptimizeMethod::GridOracle,
        ..cfg.clone()
    };
    let mut rows = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let outcome = optimize_controls(m, s, cfg, seed.wrapping_add(i as u64))?;
        let truth = plant_power(plant, &outcome.c_star, s)?;
        let oracle = optimize_controls(plant, s, &oracle_cfg, seed)?;
        let oracle_truth = plant_power(plant, &oracle.c_star, s)?;
        rows.push(PolicyRow {
            state_id: i,
            t_wb: s.t_wb,
            c_fan: outcome.c_star.f_fan,
            c_pump: outcome.c_star.f_cow_pump,
            pred_kw: outcome.f_star,
            true_kw: truth.p_total,
            oracle_true_kw: oracle_truth.p_total,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnn::{build_mnn, MnnArchitecture};
    use crate::model::{ArchKind, CoreNet, Normalizer};
    use crate::plant::chiller_spec;
    use crate::simulator::random_state;
    use approx::assert_relative_eq;

    fn nominal_state() -> PlantState {
        PlantState { t_wb: 20.0, t_chw_in: 12.0, t_chw_out: 7.0, f_chw_pump: 40.0 }
    }

    fn zero_surrogate() -> TotalPowerModel {
        let spec = chiller_spec();
        let mut net = build_mnn(&spec, &MnnArchitecture::default_chiller(), 0).unwrap();
        let n = net.param_count();
        net.set_flat_params(&vec![0.0; n]).unwrap();
        let zero_device = CubicDeviceModel { theta: [0.0; 4], p_rated: 1.0, f_rated: 50.0 };
        TotalPowerModel {
            chiller: TrainedModel {
                kind: ArchKind::HardMnn,
                spec,
                normalizer: Normalizer::identity(6),
                net: CoreNet::Mnn(net),
            },
            tower: zero_device,
            cow_pump: zero_device,
            chw_pump: zero_device,
        }
    }

    #[test]
    fn zero_models_give_zero_total() {
        let m = zero_surrogate();
        let c = ControlVector { f_cow_pump: 40.0, f_fan: 40.0 };
        assert_eq!(m.total_power(&c, &nominal_state()).unwrap(), 0.0);
    }

    #[test]
    fn total_is_sum_of_components() {
        let plant = PlantConfig::default().validated().unwrap();
        let mut m = zero_surrogate();
        m.tower = plant.tower;
        m.cow_pump = plant.cow_pump;
        m.chw_pump = plant.chw_pump;
        let c = ControlVector { f_cow_pump: 37.0, f_fan: 44.0 };
        let s = nominal_state();
        let expect = m.chiller.predict(&chiller_features(&s, &c)).unwrap()
            + m.tower.power(c.f_fan).unwrap()
            + m.cow_pump.power(c.f_cow_pump).unwrap()
            + m.chw_pump.power(s.f_chw_pump).unwrap();
        assert_relative_eq!(m.total_power(&c, &s).unwrap(), expect, max_relative = 1e-15);
    }

    #[test]
    fn true_plant_control_grad_matches_finite_differences() {
        let plant = PlantConfig::default().validated().unwrap();
        let s = nominal_state();
        let c = ControlVector { f_cow_pump: 38.0, f_fan: 42.0 };
        let g = plant.control_grad(&c, &s).unwrap();
        let h = 1e-5;
        for (i, gi) in g.iter().enumerate() {
            let mut cp = c.as_array();
            cp[i] += h;
            let fp = plant
                .total_power(&ControlVector::from_array(cp), &s)
                .unwrap();
            cp[i] = c.as_array()[i] - h;
            let fm = plant
                .total_power(&ControlVector::from_array(cp), &s)
                .unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(*gi, fd, max_relative = 1e-4);
        }
    }

    #[test]
    fn grid_oracle_is_true_grid_minimum() {
        let plant = PlantConfig::default().validated().unwrap();
        let s = nominal_state();
        let cfg = OptimizeConfig {
            grid_resolution: 11,
            ..OptimizeConfig::new(OptimizeMethod::GridOracle, plant.bounds.control_bounds())
        };
        let out = optimize_controls(&plant, &s, &cfg, 0).unwrap();
        let lo = cfg.bounds.lo();
        let hi = cfg.bounds.hi();
        for i in 0..11 {
            for j in 0..11 {
                let c = ControlVector {
                    f_cow_pump: lo[0] + (hi[0] - lo[0]) * i as f64 / 10.0,
                    f_fan: lo[1] + (hi[1] - lo[1]) * j as f64 / 10.0,
                };
                assert!(plant.total_power(&c, &s).unwrap() >= out.f_star);
            }
        }
    }

    #[test]
    fn monotone_decreasing_surrogate_hits_upper_corner() {
        struct Decreasing;
        impl PowerSurrogate for Decreasing {
            fn total_power(&self, c: &ControlVector, _s: &PlantState) -> Result<f64> {
                Ok(-c.f_cow_pump - c.f_fan)
            }
            fn control_grad(&self, _c: &ControlVector, _s: &PlantState) -> Result<[f64; 2]> {
                Ok([-1.0, -1.0])
            }
        }
        let bounds = ControlBounds { cow_pump: (30.0, 50.0), fan: (30.0, 50.0) };
        let cfg = OptimizeConfig::new(OptimizeMethod::ProjectedGradient, bounds);
        let out = optimize_controls(&Decreasing, &nominal_state(), &cfg, 1).unwrap();
        assert_relative_eq!(out.c_star.f_cow_pump, 50.0, epsilon = 1e-9);
        assert_relative_eq!(out.c_star.f_fan, 50.0, epsilon = 1e-9);
    }

    #[test]
    fn pgd_matches_grid_oracle_on_true_plant() {
        let plant = PlantConfig::default().validated().unwrap();
        let bounds = plant.bounds.control_bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cell = (bounds.fan.1 - bounds.fan.0) / 100.0;
        for k in 0..10 {
            let s = random_state(&plant, &mut rng);
            let grid = optimize_controls(
                &plant,
                &s,
                &OptimizeConfig::new(OptimizeMethod::GridOracle, bounds),
                0,
            )
            .unwrap();
            let pgd = optimize_controls(
                &plant,
                &s,
                &OptimizeConfig::new(OptimizeMethod::ProjectedGradient, bounds),
                k,
            )
            .unwrap();
            assert!(
                (pgd.c_star.f_fan - grid.c_star.f_fan).abs() <= cell + 1e-9
                    && (pgd.c_star.f_cow_pump - grid.c_star.f_cow_pump).abs() <= cell + 1e-9,
                "pgd {:?} vs grid {:?}",
                pgd.c_star,
                grid.c_star
            );
        }
    }

    #[test]
    fn more_restarts_never_worse() {
        let plant = PlantConfig::default().validated().unwrap();
        let bounds = plant.bounds.control_bounds();
        let s = nominal_state();
        let one = optimize_controls(
            &plant,
            &s,
            &OptimizeConfig {
                restarts: 1,
                ..OptimizeConfig::new(OptimizeMethod::ProjectedGradient, bounds)
            },
            7,
        )
        .unwrap();
        let eight = optimize_controls(
            &plant,
            &s,
            &OptimizeConfig {
                restarts: 8,
                ..OptimizeConfig::new(OptimizeMethod::ProjectedGradient, bounds)
            },
            7,
        )
        .unwrap();
        assert!(eight.f_star <= one.f_star + 1e-12);
    }

    #[test]
    fn iterates_stay_in_box() {
        let plant = PlantConfig::default().validated().unwrap();
        let bounds = plant.bounds.control_bounds();
        let cfg = OptimizeConfig::new(OptimizeMethod::ProjectedGradient, bounds);
        let out = optimize_controls(&plant, &nominal_state(), &cfg, 3).unwrap();
        assert!(!out.trace.is_empty());
        for p in &out.trace {
            assert!(bounds.contains(&p.c), "iterate escaped the box: {:?}", p.c);
        }
    }

    #[test]
    fn policy_rows_bounded_below_by_oracle() {
        // A deliberately miscalibrated surrogate: the oracle on the true
        // plant must lower-bound the true cost of its policy.
        let plant = PlantConfig::default().validated().unwrap();
        let wrong = PlantConfig { coef_a: 3.5, ..plant.clone() }.validated().unwrap();
        let bounds = plant.bounds.control_bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let states: Vec<PlantState> = (0..5).map(|_| random_state(&plant, &mut rng)).collect();
        let cfg = OptimizeConfig::new(OptimizeMethod::ProjectedGradient, bounds);
        let rows = evaluate_policy(&wrong, &cfg, &plant, &states, 1).unwrap();
        for r in rows {
            assert!(r.oracle_true_kw <= r.true_kw + 1e-9);
        }
    }

    #[test]
    fn identical_surrogates_give_identical_policies() {
        let plant = PlantConfig::default().validated().unwrap();
        let bounds = plant.bounds.control_bounds();
        let s = nominal_state();
        let cfg = OptimizeConfig::new(OptimizeMethod::ProjectedGradient, bounds);
        let a = optimize_controls(&plant, &s, &cfg, 5).unwrap();
        let b = optimize_controls(&plant.clone(), &s, &cfg, 5).unwrap();
        assert_eq!(a.c_star, b.c_star);
        assert_eq!(a.f_star.to_bits(), b.f_star.to_bits());
    }
}
