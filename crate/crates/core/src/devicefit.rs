//! Cubic frequency/power model for fans and pumps.
//!
//! `power(f) = P_rated * (t3 r^3 + t2 r^2 + t1 r + t0)` with `r = f / F_rated`
//! (the affinity-law form: at rated frequency with a pure cube the device
//! draws exactly rated power). Two fitting paths are provided: a closed-form
//! ridge solve on the basis `(1, r, r^2, r^3)` used as the test oracle, and
//! plain full-batch gradient descent on the same objective.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::losses::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicDeviceModel {
    /// Polynomial coefficients `[t0, t1, t2, t3]` (dimensionless).
    pub theta: [f64; 4],
    /// Rated power, kW.
    pub p_rated: f64,
    /// Rated frequency, Hz.
    pub f_rated: f64,
}

impl CubicDeviceModel {
    pub fn new(theta: [f64; 4], p_rated: f64, f_rated: f64) -> Result<Self> {
        if !(p_rated > 0.0) || !(f_rated > 0.0) {
            return Err(Error::Config(format!(
                "rated power and frequency must be positive, got {p_rated}, {f_rated}"
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("non-finite device coefficients".into()));
        }
        Ok(CubicDeviceModel { theta, p_rated, f_rated })
    }

    pub fn power(&self, freq: f64) -> Result<f64> {
        device_power(self, freq)
    }

    /// d(power)/d(freq), used by the control optimizer.
    pub fn power_slope(&self, freq: f64) -> Result<f64> {
        if freq < 0.0 || !freq.is_finite() {
            return Err(Error::Domain(format!("frequency {freq} Hz")));
        }
        let [_, t1, t2, t3] = self.theta;
        let r = freq / self.f_rated;
        Ok(self.p_rated * (t1 + r * (2.0 * t2 + r * 3.0 * t3)) / self.f_rated)
    }
}

/// Exact polynomial evaluation in the normalized variable `r = freq / F_rated`.
pub fn device_power(m: &CubicDeviceModel, freq: f64) -> Result<f64> {
    if freq < 0.0 || !freq.is_finite() {
        return Err(Error::Domain(format!("frequency {freq} Hz")));
    }
    let [t0, t1, t2, t3] = m.theta;
    let r = freq / m.f_rated;
    Ok(m.p_rated * (t0 + r * (t1 + r * (t2 + r * t3))))
}

fn check_samples(samples: &[(f64, f64)]) -> Result<()> {
    if samples.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    let mut distinct: Vec<f64> = Vec::new();
    for &(f, p) in samples {
        if f < 0.0 || !f.is_finite() || !p.is_finite() {
            return Err(Error::Fit(format!("bad sample ({f}, {p})")));
        }
        if !distinct.contains(&f) {
            distinct.push(f);
        }
    }
    if distinct.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 distinct frequencies, got {}",
            distinct.len()
        )));
    }
    Ok(())
}

fn basis(r: f64) -> [f64; 4] {
    [1.0, r, r * r, r * r * r]
}

/// Closed-form ridge solve of
/// `(1/2m) sum (y_i - P_rated * basis(r_i) . theta)^2 + gamma * |theta|^2`.
///
/// This is the oracle path: the normal equations
/// `(P^2 X'X + 2 gamma m I) theta = P X'y` solved directly.
pub fn fit_device_closed_form(
    samples: &[(f64, f64)],
    p_rated: f64,
    f_rated: f64,
    gamma: f64,
) -> Result<CubicDeviceModel> {
    check_samples(samples)?;
    if !(p_rated > 0.0) || !(f_rated > 0.0) {
        return Err(Error::Config("rated power/frequency must be positive".into()));
    }
    if gamma < 0.0 {
        return Err(Error::Config(format!("ridge coefficient must be >= 0, got {gamma}")));
    }
    let m = samples.len() as f64;
    let mut gram = Matrix4::<f64>::zeros();
    let mut rhs = Vector4::<f64>::zeros();
    for &(f, y) in samples {
        let x = basis(f / f_rated);
        for i in 0..4 {
            rhs[i] += p_rated * x[i] * y;
            for j in 0..4 {
                gram[(i, j)] += p_rated * p_rated * x[i] * x[j];
            }
        }
    }
    for i in 0..4 {
        gram[(i, i)] += 2.0 * gamma * m;
    }
    let theta = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Fit("rank-deficient design matrix".into()))?;
    CubicDeviceModel::new([theta[0], theta[1], theta[2], theta[3]], p_rated, f_rated)
}

/// Largest stable gradient-descent step for this dataset: `1 / lambda_max` of
/// the quadratic term's Hessian `(P^2/m) X'X` (plus the ridge term).
pub fn stable_gd_lr(samples: &[(f64, f64)], p_rated: f64, f_rated: f64, gamma: f64) -> Result<f64> {
    check_samples(samples)?;
    let m = samples.len() as f64;
    let mut gram = Matrix4::<f64>::zeros();
    for &(f, _) in samples {
        let x = basis(f / f_rated);
        for i in 0..4 {
            for j in 0..4 {
                gram[(i, j)] += p_rated * p_rated * x[i] * x[j] / m;
            }
        }
    }
    for i in 0..4 {
        gram[(i, i)] += 2.0 * gamma;
    }
    let lambda_max = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    if !(lambda_max > 0.0) {
        return Err(Error::Fit("degenerate design".into()));
    }
    Ok(1.0 / lambda_max)
}

/// Gradient-descent fit of the same objective as
/// [`fit_device_closed_form`]: `theta_j <- theta_j - lr * dJ/dtheta_j`,
/// starting from zero, for `cfg.epochs` full-batch iterations (with an early
/// exit once the gradient vanishes).
///
/// The monomial basis on a narrow frequency band is badly conditioned, so
/// reaching the closed-form solution takes millions of cheap iterations;
/// pick `cfg.lr` via [`stable_gd_lr`].
pub fn fit_device(
    samples: &[(f64, f64)],
    p_rated: f64,
    f_rated: f64,
    cfg: &TrainConfig,
) -> Result<CubicDeviceModel> {
    check_samples(samples)?;
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {}", cfg.lr)));
    }
    let m = samples.len() as f64;
    let gamma = cfg.l2_gamma;
    let xs: Vec<[f64; 4]> = samples.iter().map(|&(f, _)| basis(f / f_rated)).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, y)| y).collect();
    let mut theta = [0.0f64; 4];
    for iter in 0..cfg.epochs {
        let mut grad = [0.0f64; 4];
        for (x, &y) in xs.iter().zip(&ys) {
            let pred = p_rated * (theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[2] + theta[3] * x[3]);
            let resid = pred - y;
            for j in 0..4 {
                grad[j] += resid * p_rated * x[j] / m;
            }
        }
        for j in 0..4 {
            grad[j] += 2.0 * gamma * theta[j];
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch: iter });
        }
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax < 1e-13 {
            break;
        }
        for j in 0..4 {
            theta[j] -= cfg.lr * grad[j];
        }
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence { epoch: cfg.epochs });
    }
    CubicDeviceModel::new(theta, p_rated, f_rated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cube_samples(p_rated: f64, f_rated: f64) -> Vec<(f64, f64)> {
        let model = CubicDeviceModel::new([0.0, 0.0, 0.0, 1.0], p_rated, f_rated).unwrap();
        (0..6)
            .map(|i| {
                let f = 25.0 + 5.0 * i as f64;
                (f, model.power(f).unwrap())
            })
            .collect()
    }

    #[test]
    fn affinity_identity_at_rated_point() {
        let m = CubicDeviceModel::new([0.0, 0.0, 0.0, 1.0], 30.0, 50.0).unwrap();
        assert_eq!(m.power(50.0).unwrap(), 30.0);
    }

    #[test]
    fn constant_term_only() {
        let m = CubicDeviceModel::new([0.1, 0.0, 0.0, 0.0], 100.0, 50.0).unwrap();
        for f in [0.0, 17.3, 50.0] {
            assert_eq!(m.power(f).unwrap(), 10.0);
        }
    }

    #[test]
    fn half_speed_cube() {
        let m = CubicDeviceModel::new([0.0, 0.0, 0.0, 1.0], 30.0, 50.0).unwrap();
        assert_relative_eq!(m.power(25.0).unwrap(), 3.75, max_relative = 1e-15);
    }

    #[test]
    fn zero_frequency_is_bit_exact_constant() {
        let m = CubicDeviceModel::new([0.37, 1.0, -2.0, 3.0], 41.0, 50.0).unwrap();
        assert_eq!(m.power(0.0).unwrap().to_bits(), (41.0f64 * 0.37).to_bits());
    }

    #[test]
    fn negative_frequency_rejected() {
        let m = CubicDeviceModel::new([0.0, 0.0, 0.0, 1.0], 30.0, 50.0).unwrap();
        assert!(matches!(m.power(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_recovers_noiseless_cube() {
        let samples = cube_samples(30.0, 50.0);
        let fit = fit_device_closed_form(&samples, 30.0, 50.0, 0.0).unwrap();
        let expect = [0.0, 0.0, 0.0, 1.0];
        for (t, e) in fit.theta.iter().zip(&expect) {
            assert!((t - e).abs() < 1e-6, "theta {t} vs {e}");
        }
    }

    #[test]
    fn gd_matches_closed_form() {
        let samples = cube_samples(30.0, 50.0);
        let oracle = fit_device_closed_form(&samples, 30.0, 50.0, 0.0).unwrap();
        let cfg = TrainConfig {
            epochs: 15_000_000,
            lr: stable_gd_lr(&samples, 30.0, 50.0, 0.0).unwrap(),
            l2_gamma: 0.0,
            ..TrainConfig::default()
        };
        let gd = fit_device(&samples, 30.0, 50.0, &cfg).unwrap();
        for (a, b) in gd.theta.iter().zip(&oracle.theta) {
            assert!((a - b).abs() < 1e-3, "gd {a} vs closed form {b}");
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let samples = vec![(25.0, 1.0), (30.0, 2.0), (35.0, 3.0)];
        assert!(matches!(
            fit_device_closed_form(&samples, 30.0, 50.0, 0.0),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn repeated_frequencies_rejected() {
        let samples = vec![(40.0, 1.0); 8];
        assert!(matches!(
            fit_device_closed_form(&samples, 30.0, 50.0, 0.0),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn ridge_shrinks_coefficients() {
        // Noisy-ish realizable data; |theta| must be nonincreasing in gamma.
        let samples: Vec<(f64, f64)> = cube_samples(30.0, 50.0)
            .into_iter()
            .enumerate()
            .map(|(i, (f, p))| (f, p + if i % 2 == 0 { 0.05 } else { -0.05 }))
            .collect();
        let norms: Vec<f64> = [0.0, 1e-4, 1e-2]
            .iter()
            .map(|&g| {
                let fit = fit_device_closed_form(&samples, 30.0, 50.0, g).unwrap();
                fit.theta.iter().map(|t| t * t).sum::<f64>().sqrt()
            })
            .collect();
        assert!(norms[0] >= norms[1] && norms[1] >= norms[2], "norms {norms:?}");
    }

    #[test]
    fn residual_vanishes_on_realizable_data() {
        let samples = cube_samples(22.0, 50.0);
        let fit = fit_device_closed_form(&samples, 22.0, 50.0, 0.0).unwrap();
        for &(f, y) in &samples {
            assert!((fit.power(f).unwrap() - y).abs() < 1e-8);
        }
    }
}
