//! Synthetic chiller plant with known monotone ground truth.
//!
//! The chiller power follows the causal proportionalities of the real
//! device — wet-bulb load divided by the cooling-side flow ratios plus the
//! chilled-water load term — and the fans/pumps follow their cubic laws.
//! Construction validates that the configured coefficients actually honor
//! the declared monotone directions over the whole bounded domain; a config
//! that does not fails loudly instead of silently producing inconsistent
//! ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::devicefit::CubicDeviceModel;
use crate::mnn::Direction;
use crate::plant::{chiller_spec, ControlBounds, ControlVector, PlantSample, PlantState};
use crate::{Error, Result};

/// Domain bounds for every plant variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantBounds {
    pub fan: (f64, f64),
    pub cow_pump: (f64, f64),
    pub chw_pump: (f64, f64),
    pub t_wb: (f64, f64),
    pub t_chw_out: (f64, f64),
    /// Chilled-water temperature rise (return minus supply), degC.
    pub delta_t: (f64, f64),
}

impl PlantBounds {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [
            self.fan,
            self.cow_pump,
            self.chw_pump,
            self.t_wb,
            self.t_chw_out,
            self.delta_t,
        ] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("bad bounds [{lo}, {hi}]")));
            }
        }
        if self.fan.0 <= 0.0 || self.cow_pump.0 <= 0.0 || self.chw_pump.0 <= 0.0 {
            return Err(Error::Config("frequency bounds must be strictly positive".into()));
        }
        if self.delta_t.0 < 0.0 {
            return Err(Error::Config("delta_t must be non-negative".into()));
        }
        Ok(())
    }

    pub fn control_bounds(&self) -> ControlBounds {
        ControlBounds { cow_pump: self.cow_pump, fan: self.fan }
    }

    pub fn t_chw_in(&self) -> (f64, f64) {
        (
            self.t_chw_out.0 + self.delta_t.0,
            self.t_chw_out.1 + self.delta_t.1,
        )
    }

    /// Per-feature intervals in chiller feature order, for audits and curve
    /// scans.
    pub fn feature_bounds(&self) -> Vec<(f64, f64)> {
        vec![
            self.t_wb,
            self.t_chw_out,
            self.t_chw_in(),
            self.cow_pump,
            self.fan,
            self.chw_pump,
        ]
    }
}

impl Default for PlantBounds {
    fn default() -> Self {
        PlantBounds {
            fan: (30.0, 50.0),
            cow_pump: (30.0, 50.0),
            chw_pump: (30.0, 50.0),
            t_wb: (10.0, 30.0),
            t_chw_out: (6.0, 10.0),
            delta_t: (3.0, 7.0),
        }
    }
}

/// Ground-truth plant: chiller coefficients, one cubic model per rotating
/// device, domain bounds, and observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Chiller load coefficient on `T_wb / (r_pump * r_fan)`, kW.
    pub coef_a: f64,
    /// Chiller load coefficient on `(T_chw_in - T_chw_out) * r_chwp`, kW/degC.
    pub coef_b: f64,
    /// Chiller idle power, kW.
    pub base_kw: f64,
    pub tower: CubicDeviceModel,
    pub cow_pump: CubicDeviceModel,
    pub chw_pump: CubicDeviceModel,
    pub bounds: PlantBounds,
    /// Per-component observation noise, kW.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let device = |p_rated: f64| CubicDeviceModel {
            theta: [0.05, 0.0, 0.0, 0.95],
            p_rated,
            f_rated: 50.0,
        };
        PlantConfig {
            coef_a: 2.0,
            coef_b: 1.0,
            base_kw: 50.0,
            tower: device(30.0),
            cow_pump: device(22.0),
            chw_pump: device(18.0),
            bounds: PlantBounds::default(),
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

/// Per-component powers of one evaluation, kW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentPowers {
    pub p_ch: f64,
    pub p_ct: f64,
    pub p_cowp: f64,
    pub p_chwp: f64,
    pub p_total: f64,
}

impl PlantConfig {
    /// Validate coefficients and run the construction-time monotonicity scan.
    pub fn validated(self) -> Result<Self> {
        self.bounds.validate()?;
        if !(self.coef_a > 0.0) || !(self.coef_b > 0.0) || self.base_kw < 0.0 {
            return Err(Error::Config(
                "chiller coefficients must be positive (base non-negative)".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise sigma must be >= 0".into()));
        }
        self.scan_monotonicity(5)?;
        Ok(self)
    }

    /// Noise-free chiller power at a feature point (chiller feature order).
    fn p_ch_at(&self, f: &[f64; 6]) -> f64 {
        let [t_wb, t_chw_out, t_chw_in, f_cow, f_fan, f_chw] = *f;
        let r_pump = f_cow / self.cow_pump.f_rated;
        let r_fan = f_fan / self.tower.f_rated;
        let r_chwp = f_chw / self.chw_pump.f_rated;
        self.base_kw + self.coef_a * t_wb / (r_pump * r_fan) + self.coef_b * (t_chw_in - t_chw_out) * r_chwp
    }

    /// Grid-scan every chiller feature direction over the bounded domain;
    /// errors out on the first violation.
    fn scan_monotonicity(&self, per_axis: usize) -> Result<()> {
        let spec = chiller_spec();
        let fb = self.bounds.feature_bounds();
        let lin = |(lo, hi): (f64, f64), k: usize, n: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
        // Coarse anchor lattice over the other axes, dense sweep per axis.
        let anchors = 3usize;
        for (fi, dir) in spec.directions().iter().enumerate() {
            let mut anchor_idx = vec![0usize; 6];
            loop {
                let mut point = [0.0f64; 6];
                for (j, &ai) in anchor_idx.iter().enumerate() {
                    point[j] = lin(fb[j], ai, anchors);
                }
                let mut prev: Option<f64> = None;
                for k in 0..per_axis {
                    point[fi] = lin(fb[fi], k, per_axis);
                    if point[2] < point[1] {
                        // Return colder than supply cannot occur physically.
                        prev = None;
                        continue;
                    }
                    let v = self.p_ch_at(&point);
                    if let Some(p) = prev {
                        let ok = match dir {
                            Direction::Increase => v >= p - 1e-12,
                            Direction::Decrease => v <= p + 1e-12,
                            Direction::NonMonotone => true,
                        };
                        if !ok {
                            return Err(Error::Config(format!(
                                "ground truth violates {dir:?} for feature {} at {point:?}",
                                spec.names()[fi]
                            )));
                        }
                    }
                    prev = Some(v);
                }
                // Advance the mixed-radix anchor counter.
                let mut j = 0;
                loop {
                    if j == 6 {
                        break;
                    }
                    if j == fi {
                        j += 1;
                        continue;
                    }
                    anchor_idx[j] += 1;
                    if anchor_idx[j] < anchors {
                        break;
                    }
                    anchor_idx[j] = 0;
                    j += 1;
                }
                if j == 6 {
                    break;
                }
            }
        }
        Ok(())
    }

    pub fn save_toml(&self, path: &std::path::Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serialize plant config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_toml(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PlantConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("parse plant config: {e}")))?;
        cfg.validated()
    }
}

fn check_in(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo..=hi).contains(&v) {
        return Err(Error::Domain(format!("{name}={v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Noise-free component powers at `(c, s)`. Inputs must lie inside the
/// configured bounds.
pub fn plant_power(cfg: &PlantConfig, c: &ControlVector, s: &PlantState) -> Result<ComponentPowers> {
    s.validate()?;
    check_in("F_cow_pump", c.f_cow_pump, cfg.bounds.cow_pump)?;
    check_in("F_fan", c.f_fan, cfg.bounds.fan)?;
    check_in("F_chw_pump", s.f_chw_pump, cfg.bounds.chw_pump)?;
    check_in("T_wb", s.t_wb, cfg.bounds.t_wb)?;
    check_in("T_chw_out", s.t_chw_out, cfg.bounds.t_chw_out)?;
    check_in("T_chw_in", s.t_chw_in, cfg.bounds.t_chw_in())?;
    let features = crate::plant::chiller_features(s, c);
    let p_ch = cfg.p_ch_at(&features);
    let p_ct = cfg.tower.power(c.f_fan)?;
    let p_cowp = cfg.cow_pump.power(c.f_cow_pump)?;
    let p_chwp = cfg.chw_pump.power(s.f_chw_pump)?;
    Ok(ComponentPowers {
        p_ch,
        p_ct,
        p_cowp,
        p_chwp,
        p_total: p_ch + p_ct + p_cowp + p_chwp,
    })
}

/// One bounded random-walk exploration step: each control gets
/// `u ~ Uniform[-delta, delta]` and is clamped back into the box.
pub fn explore_control(
    c: &ControlVector,
    bounds: &ControlBounds,
    delta: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> ControlVector {
    let mut arr = c.as_array();
    let lo = bounds.lo();
    let hi = bounds.hi();
    for i in 0..2 {
        let u = (rng.random::<f64>() * 2.0 - 1.0) * delta[i];
        arr[i] = (arr[i] + u).clamp(lo[i], hi[i]);
    }
    ControlVector::from_array(arr)
}

/// How controls are chosen while generating a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    /// Hold the box midpoint.
    FixedSetpoint,
    /// Random walk with 1 Hz steps, clamped to the box.
    Explore,
    /// Independent uniform draw over the box each step.
    UniformRandom,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" | "fixed-setpoint" => Ok(Policy::FixedSetpoint),
            "explore" => Ok(Policy::Explore),
            "uniform" | "uniform-random" => Ok(Policy::UniformRandom),
            other => Err(Error::Config(format!("unknown policy '{other}'"))),
        }
    }
}

/// Exploration step size for the `Explore` policy, Hz per dimension.
pub const EXPLORE_DELTA_HZ: f64 = 1.0;

/// Draw the plant state at time step `t`: a daily sinusoid with jitter for
/// wet-bulb, uniform chilled-water conditions.
fn draw_state(cfg: &PlantConfig, t: u64, rng: &mut ChaCha8Rng, jitter: &Normal<f64>) -> PlantState {
    let (wb_lo, wb_hi) = cfg.bounds.t_wb;
    let mid = 0.5 * (wb_lo + wb_hi);
    let half = 0.5 * (wb_hi - wb_lo);
    // 96 steps per simulated day (15-minute sampling).
    let phase = 2.0 * std::f64::consts::PI * (t % 96) as f64 / 96.0;
    let t_wb = (mid + 0.7 * half * phase.sin() + 0.1 * half * jitter.sample(rng))
        .clamp(wb_lo, wb_hi);
    let t_chw_out = cfg.bounds.t_chw_out.0
        + rng.random::<f64>() * (cfg.bounds.t_chw_out.1 - cfg.bounds.t_chw_out.0);
    let dt = cfg.bounds.delta_t.0 + rng.random::<f64>() * (cfg.bounds.delta_t.1 - cfg.bounds.delta_t.0);
    let f_chw_pump = cfg.bounds.chw_pump.0
        + rng.random::<f64>() * (cfg.bounds.chw_pump.1 - cfg.bounds.chw_pump.0);
    PlantState { t_wb, t_chw_in: t_chw_out + dt, t_chw_out, f_chw_pump }
}

/// Draw a single random state (used for policy evaluation sets).
pub fn random_state(cfg: &PlantConfig, rng: &mut ChaCha8Rng) -> PlantState {
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let t: u64 = rng.random_range(0..96);
    draw_state(cfg, t, rng, &jitter)
}

/// Apply per-component Gaussian noise and re-sum the total, so the
/// conservation identity holds on the observed numbers too.
pub fn observe(powers: &ComponentPowers, sigma: f64, rng: &mut ChaCha8Rng) -> ComponentPowers {
    if sigma == 0.0 {
        return *powers;
    }
    let noise = Normal::new(0.0, sigma).expect("sigma >= 0");
    let p_ch = powers.p_ch + noise.sample(rng);
    let p_ct = powers.p_ct + noise.sample(rng);
    let p_cowp = powers.p_cowp + noise.sample(rng);
    let p_chwp = powers.p_chwp + noise.sample(rng);
    ComponentPowers {
        p_ch,
        p_ct,
        p_cowp,
        p_chwp,
        p_total: p_ch + p_ct + p_cowp + p_chwp,
    }
}

/// Generate `n` samples under the given control policy; deterministic per
/// seed.
pub fn generate_dataset(
    cfg: &PlantConfig,
    policy: Policy,
    n: usize,
    seed: u64,
) -> Result<Vec<PlantSample>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let cb = cfg.bounds.control_bounds();
    let mut control = cb.midpoint();
    let mut out = Vec::with_capacity(n);
    for t in 0..n as u64 {
        let state = draw_state(cfg, t, &mut rng, &jitter);
        control = match policy {
            Policy::FixedSetpoint => cb.midpoint(),
            Policy::Explore => {
                explore_control(&control, &cb, [EXPLORE_DELTA_HZ, EXPLORE_DELTA_HZ], &mut rng)
            }
            Policy::UniformRandom => ControlVector {
                f_cow_pump: cb.cow_pump.0 + rng.random::<f64>() * (cb.cow_pump.1 - cb.cow_pump.0),
                f_fan: cb.fan.0 + rng.random::<f64>() * (cb.fan.1 - cb.fan.0),
            },
        };
        let truth = plant_power(cfg, &control, &state)?;
        let seen = observe(&truth, cfg.noise_sigma, &mut rng);
        out.push(PlantSample {
            t,
            state,
            control,
            p_ch: seen.p_ch,
            p_ct: seen.p_ct,
            p_cowp: seen.p_cowp,
            p_chwp: seen.p_chwp,
            p_total: seen.p_total,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nominal_state() -> PlantState {
        PlantState { t_wb: 20.0, t_chw_in: 12.0, t_chw_out: 7.0, f_chw_pump: 50.0 }
    }

    #[test]
    fn default_config_validates() {
        PlantConfig::default().validated().unwrap();
    }

    #[test]
    fn nominal_point_hand_value() {
        let cfg = PlantConfig::default().validated().unwrap();
        let c = ControlVector { f_cow_pump: 50.0, f_fan: 50.0 };
        let p = plant_power(&cfg, &c, &nominal_state()).unwrap();
        // base 50 + 2 * 20 / (1 * 1) + 1 * 5 * 1 = 95 kW.
        assert_relative_eq!(p.p_ch, 95.0, max_relative = 1e-12);
    }

    #[test]
    fn fan_direction_check() {
        let cfg = PlantConfig::default().validated().unwrap();
        let s = nominal_state();
        let lo = plant_power(&cfg, &ControlVector { f_cow_pump: 40.0, f_fan: 35.0 }, &s).unwrap();
        let hi = plant_power(&cfg, &ControlVector { f_cow_pump: 40.0, f_fan: 45.0 }, &s).unwrap();
        assert!(hi.p_ch < lo.p_ch, "raising fan frequency must cut chiller power");
        assert!(hi.p_ct > lo.p_ct, "raising fan frequency must raise tower power");
    }

    #[test]
    fn zero_load_term_when_temps_equal() {
        let cfg = PlantConfig::default().validated().unwrap();
        let c = ControlVector { f_cow_pump: 50.0, f_fan: 50.0 };
        let s = PlantState { t_wb: 20.0, t_chw_in: 9.0, t_chw_out: 9.0, f_chw_pump: 50.0 };
        let p = plant_power(&cfg, &c, &s).unwrap();
        assert_relative_eq!(p.p_ch, 50.0 + 40.0, max_relative = 1e-12);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let cfg = PlantConfig::default().validated().unwrap();
        let c = ControlVector { f_cow_pump: 20.0, f_fan: 40.0 };
        assert!(matches!(plant_power(&cfg, &c, &nominal_state()), Err(Error::Domain(_))));
    }

    #[test]
    fn conservation_is_exact() {
        let cfg = PlantConfig::default().validated().unwrap();
        let data = generate_dataset(&cfg, Policy::UniformRandom, 500, 3).unwrap();
        for s in &data {
            assert_eq!(s.p_total, s.p_ch + s.p_ct + s.p_cowp + s.p_chwp);
        }
    }

    #[test]
    fn noise_free_samples_match_plant_exactly() {
        let cfg = PlantConfig { noise_sigma: 0.0, ..PlantConfig::default() }
            .validated()
            .unwrap();
        let data = generate_dataset(&cfg, Policy::Explore, 200, 5).unwrap();
        for s in &data {
            let p = plant_power(&cfg, &s.control, &s.state).unwrap();
            assert_eq!(s.p_ch, p.p_ch);
            assert_eq!(s.p_total, p.p_total);
        }
    }

    #[test]
    fn explore_widens_support_over_fixed() {
        let cfg = PlantConfig::default().validated().unwrap();
        let fixed = generate_dataset(&cfg, Policy::FixedSetpoint, 300, 7).unwrap();
        let explore = generate_dataset(&cfg, Policy::Explore, 300, 7).unwrap();
        let width = |data: &[PlantSample]| {
            let fans: Vec<f64> = data.iter().map(|s| s.control.f_fan).collect();
            fans.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - fans.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        assert_eq!(width(&fixed), 0.0);
        assert!(width(&explore) > 0.0);
    }

    #[test]
    fn explore_step_semantics() {
        use rand::SeedableRng;
        let bounds = ControlBounds { cow_pump: (40.0, 60.0), fan: (40.0, 60.0) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // delta = 0 leaves the control untouched.
        let c = ControlVector { f_cow_pump: 50.0, f_fan: 59.5 };
        let out = explore_control(&c, &bounds, [0.0, 0.0], &mut rng);
        assert_eq!(out, c);
        // Steps stay clamped at the box.
        for _ in 0..200 {
            let out = explore_control(&c, &bounds, [2.0, 2.0], &mut rng);
            assert!(bounds.contains(&out));
            assert!((out.f_cow_pump - 50.0).abs() <= 2.0);
            assert!(out.f_fan <= 60.0 && out.f_fan >= 57.5);
        }
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let cfg = PlantConfig::default().validated().unwrap();
        let a = generate_dataset(&cfg, Policy::Explore, 50, 11).unwrap();
        let b = generate_dataset(&cfg, Policy::Explore, 50, 11).unwrap();
        let c = generate_dataset(&cfg, Policy::Explore, 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_coefficients_fail_loudly() {
        let cfg = PlantConfig { coef_a: -2.0, ..PlantConfig::default() };
        assert!(cfg.validated().is_err());
    }

    #[test]
    fn ground_truth_monotone_on_dense_grid() {
        // Ten points per axis along every feature, anchored on a coarse
        // lattice of the remaining features.
        let cfg = PlantConfig::default().validated().unwrap();
        cfg.scan_monotonicity(10).unwrap();
    }

    #[test]
    fn total_power_midpoint_convex_in_controls() {
        let cfg = PlantConfig::default().validated().unwrap();
        let s = nominal_state();
        let n = 21;
        let (plo, phi) = cfg.bounds.cow_pump;
        let (flo, fhi) = cfg.bounds.fan;
        let mut grid = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let c = ControlVector {
                    f_cow_pump: plo + (phi - plo) * i as f64 / (n - 1) as f64,
                    f_fan: flo + (fhi - flo) * j as f64 / (n - 1) as f64,
                };
                grid[i][j] = plant_power(&cfg, &c, &s).unwrap().p_total;
            }
        }
        for i1 in 0..n {
            for j1 in 0..n {
                for i2 in i1..n {
                    for j2 in 0..n {
                        if (i1 + i2) % 2 != 0 || (j1 + j2) % 2 != 0 {
                            continue;
                        }
                        let mid = grid[(i1 + i2) / 2][(j1 + j2) / 2];
                        let avg = 0.5 * (grid[i1][j1] + grid[i2][j2]);
                        assert!(
                            mid <= avg + 1e-9,
                            "midpoint convexity violated at ({i1},{j1})-({i2},{j2})"
                        );
                    }
                }
            }
        }
    }
}
