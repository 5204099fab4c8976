//! Trained-model wrapper and on-disk document format.
//!
//! [`CoreNet`] unifies the plain MLP and the MNN behind one parameter/grad
//! interface so the training loop and the optimizers don't care which
//! architecture they hold. [`TrainedModel`] adds the feature standardization
//! fitted on the training set (affine with positive scales, so declared
//! monotone directions survive in raw units). [`ModelDoc`] is the JSON
//! document written next to every trained artifact.

use serde::{Deserialize, Serialize};

use crate::devicefit::CubicDeviceModel;
use crate::mnn::{MnnNetwork, MonotonicitySpec, Predictor};
use crate::netcore::{self, DenseNet};
use crate::{Error, Result};

/// Which training recipe produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Mlp,
    SoftMnn,
    HardMnn,
    PartialMnn,
}

impl std::str::FromStr for ArchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ArchKind::Mlp),
            "soft-mnn" => Ok(ArchKind::SoftMnn),
            "hard-mnn" => Ok(ArchKind::HardMnn),
            "partial-mnn" => Ok(ArchKind::PartialMnn),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ArchKind::Mlp => "mlp",
            ArchKind::SoftMnn => "soft-mnn",
            ArchKind::HardMnn => "hard-mnn",
            ArchKind::PartialMnn => "partial-mnn",
        };
        f.write_str(s)
    }
}

/// A scalar-output network of either architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CoreNet {
    Mlp(DenseNet),
    Mnn(MnnNetwork),
}

impl CoreNet {
    pub fn input_dim(&self) -> usize {
        match self {
            CoreNet::Mlp(n) => n.input_dim(),
            CoreNet::Mnn(n) => n.input_dim(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            CoreNet::Mlp(n) => netcore::forward(n, x).map(|(y, _)| y),
            CoreNet::Mnn(n) => n.forward(x).map(|(y, _)| y),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            CoreNet::Mlp(n) => n.param_count(),
            CoreNet::Mnn(n) => n.param_count(),
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            CoreNet::Mlp(n) => n.flat_params(),
            CoreNet::Mnn(n) => n.flat_params(),
        }
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        match self {
            CoreNet::Mlp(n) => n.set_flat_params(p),
            CoreNet::Mnn(n) => n.set_flat_params(p),
        }
    }

    /// Predict and accumulate `upstream * d(output)/d(param)` into `acc`
    /// (flat layout). Returns the prediction.
    pub fn add_param_grads(&self, x: &[f64], upstream: f64, acc: &mut [f64]) -> Result<f64> {
        match self {
            CoreNet::Mlp(n) => {
                let (y, trace) = netcore::forward(n, x)?;
                let g = netcore::backward(n, &trace, upstream)?;
                for (a, v) in acc.iter_mut().zip(g.flat()) {
                    *a += v;
                }
                Ok(y)
            }
            CoreNet::Mnn(n) => {
                let (y, trace) = n.forward(x)?;
                let g = n.backward(&trace, upstream)?;
                for (a, v) in acc.iter_mut().zip(g.flat()) {
                    *a += v;
                }
                Ok(y)
            }
        }
    }

    /// Gradient of the output with respect to the input vector.
    pub fn input_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            CoreNet::Mlp(n) => {
                let (_, trace) = netcore::forward(n, x)?;
                Ok(netcore::backward(n, &trace, 1.0)?.input)
            }
            CoreNet::Mnn(n) => {
                let (_, trace) = n.forward(x)?;
                Ok(n.backward(&trace, 1.0)?.input)
            }
        }
    }

    /// Clamp constrained layers onto the non-negative orthant.
    pub fn project(&mut self) {
        match self {
            CoreNet::Mlp(n) => n.project(),
            CoreNet::Mnn(n) => n.project(),
        }
    }

    pub fn weight_sq_norm(&self) -> f64 {
        match self {
            CoreNet::Mlp(n) => n.weight_sq_norm(),
            CoreNet::Mnn(n) => n.weight_sq_norm(),
        }
    }

    /// Add the L2 penalty gradient `2 * gamma * w` at every weight position
    /// of the flat layout (biases untouched).
    pub fn add_l2_grad(&self, gamma: f64, acc: &mut [f64]) {
        if gamma == 0.0 {
            return;
        }
        let mut off = 0;
        let mut add = |weights: &[f64], bias_len: usize| {
            for (a, w) in acc[off..off + weights.len()].iter_mut().zip(weights) {
                *a += 2.0 * gamma * w;
            }
            off += weights.len() + bias_len;
        };
        match self {
            CoreNet::Mlp(n) => {
                for l in &n.layers {
                    add(&l.weights, l.bias.len());
                }
            }
            CoreNet::Mnn(n) => {
                for l in n
                    .main_layers
                    .iter()
                    .chain(&n.passthrough_layers)
                    .chain(&n.branch_layers)
                    .chain(std::iter::once(&n.output_layer))
                {
                    add(&l.weights, l.bias.len());
                }
            }
        }
        debug_assert_eq!(off, self.param_count());
    }
}

impl Predictor for CoreNet {
    fn predict_one(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

/// Per-feature standardization fitted on the training set.
///
/// Scales are strictly positive, so the transform preserves monotone
/// directions and the inverse is exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Normalizer {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Config("normalizer needs a nonempty aligned dataset".into()));
        }
        let d = xs[0].len();
        let n = xs.len() as f64;
        let mut x_mean = vec![0.0; d];
        for x in xs {
            for (m, v) in x_mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut x_std = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in x_std.iter_mut().zip(x).zip(&x_mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut x_std {
            *s = s.sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        let y_mean = ys.iter().sum::<f64>() / n;
        let mut y_std = (ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n).sqrt();
        if y_std < 1e-12 {
            y_std = 1.0;
        }
        Ok(Normalizer { x_mean, x_std, y_mean, y_std })
    }

    /// No-op transform of the given width.
    pub fn identity(d: usize) -> Self {
        Normalizer {
            x_mean: vec![0.0; d],
            x_std: vec![1.0; d],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn norm_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.x_mean)
            .zip(&self.x_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn norm_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn denorm_y(&self, y: f64) -> f64 {
        y * self.y_std + self.y_mean
    }
}

/// A fitted chiller power model: architecture tag, feature directions,
/// standardization, and the network itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ArchKind,
    pub spec: MonotonicitySpec,
    pub normalizer: Normalizer,
    pub net: CoreNet,
}

impl TrainedModel {
    /// Predict in raw feature units (kW out).
    pub fn predict(&self, raw_x: &[f64]) -> Result<f64> {
        let z = self.normalizer.norm_x(raw_x);
        Ok(self.normalizer.denorm_y(self.net.predict(&z)?))
    }

    /// Gradient of the raw-unit prediction with respect to raw features.
    pub fn input_grad(&self, raw_x: &[f64]) -> Result<Vec<f64>> {
        let z = self.normalizer.norm_x(raw_x);
        let g = self.net.input_grad(&z)?;
        Ok(g
            .iter()
            .zip(&self.normalizer.x_std)
            .map(|(gi, s)| gi * self.normalizer.y_std / s)
            .collect())
    }
}

impl Predictor for TrainedModel {
    fn predict_one(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model document: the chiller network plus the three cubic device
/// models, any of which may be absent while the pipeline is mid-flight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chiller: Option<TrainedModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tower: Option<CubicDeviceModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cow_pump: Option<CubicDeviceModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chw_pump: Option<CubicDeviceModel>,
}

impl ModelDoc {
    pub fn new() -> Self {
        ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            chiller: None,
            tower: None,
            cow_pump: None,
            chw_pump: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelDoc(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s).map_err(|e| Error::ModelDoc(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelDoc(format!(
                "unsupported format version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Default for ModelDoc {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnn::{build_mnn, Direction, MnnArchitecture, MonotonicitySpec};

    fn sample_model() -> TrainedModel {
        let spec = MonotonicitySpec::new(
            vec!["a".into(), "b".into()],
            vec![Direction::Increase, Direction::Decrease],
        )
        .unwrap();
        let net = build_mnn(&spec, &MnnArchitecture::default_chiller(), 5).unwrap();
        TrainedModel {
            kind: ArchKind::HardMnn,
            spec,
            normalizer: Normalizer {
                x_mean: vec![0.1, -0.7],
                x_std: vec![1.3, 0.004],
                y_mean: 95.5,
                y_std: 12.25,
            },
            net: CoreNet::Mnn(net),
        }
    }

    #[test]
    fn model_doc_roundtrip_is_bit_exact() {
        let mut doc = ModelDoc::new();
        doc.chiller = Some(sample_model());
        doc.tower = Some(CubicDeviceModel {
            theta: [0.05, 0.0, 1.0 / 3.0, 0.95],
            p_rated: 30.0,
            f_rated: 50.0,
        });
        let json = doc.to_json().unwrap();
        let back = ModelDoc::from_json(&json).unwrap();

        let orig = doc.chiller.as_ref().unwrap().net.flat_params();
        let rt = back.chiller.as_ref().unwrap().net.flat_params();
        assert_eq!(orig.len(), rt.len());
        for (a, b) in orig.iter().zip(&rt) {
            assert_eq!(a.to_bits(), b.to_bits(), "parameter changed across round-trip");
        }
        let t = back.tower.unwrap();
        assert_eq!(t.theta[2].to_bits(), (1.0f64 / 3.0).to_bits());
        // A second serialization is byte-identical.
        assert_eq!(json, back.to_json().unwrap());
    }

    #[test]
    fn format_version_checked() {
        let bad = r#"{"format_version": 99}"#;
        assert!(ModelDoc::from_json(bad).is_err());
    }

    #[test]
    fn normalizer_roundtrip_and_gradient_chain() {
        let m = sample_model();
        let y = m.normalizer.denorm_y(m.normalizer.norm_y(42.0));
        assert!((y - 42.0).abs() < 1e-12);

        // Raw-unit input gradient matches finite differences through the
        // whole normalize -> net -> denormalize chain.
        let x = [0.4, -0.69];
        let g = m.input_grad(&x).unwrap();
        for i in 0..2 {
            let h = 1e-6 * m.normalizer.x_std[i];
            let mut xp = x.to_vec();
            xp[i] += h;
            let fp = m.predict(&xp).unwrap();
            xp[i] = x[i] - h;
            let fm = m.predict(&xp).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let denom = g[i].abs().max(fd.abs()).max(1e-3);
            assert!(
                ((g[i] - fd) / denom).abs() < 1e-4,
                "raw grad {} vs fd {}",
                g[i],
                fd
            );
        }
    }

    #[test]
    fn flat_param_roundtrip() {
        let m = sample_model();
        let mut net = m.net.clone();
        let p = net.flat_params();
        let mut p2 = p.clone();
        for v in &mut p2 {
            *v += 0.5;
        }
        net.set_flat_params(&p2).unwrap();
        assert_eq!(net.flat_params(), p2);
    }
}
