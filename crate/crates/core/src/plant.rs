//! Shared plant domain types: states, controls, timestamped samples, and the
//! feature ordering used by the chiller power model.

use serde::{Deserialize, Serialize};

use crate::mnn::{Direction, MonotonicitySpec};
use crate::{Error, Result};

/// Uncontrolled operating conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Wet-bulb temperature, degC.
    pub t_wb: f64,
    /// Chilled water return temperature (into the chiller), degC.
    pub t_chw_in: f64,
    /// Chilled water supply temperature (out of the chiller), degC.
    pub t_chw_out: f64,
    /// Chilled water pump frequency, Hz.
    pub f_chw_pump: f64,
}

impl PlantState {
    pub fn validate(&self) -> Result<()> {
        if self.t_chw_in < self.t_chw_out {
            return Err(Error::Domain(format!(
                "return water ({}) colder than supply ({})",
                self.t_chw_in, self.t_chw_out
            )));
        }
        Ok(())
    }
}

/// The two optimized setpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    /// Cooling water pump frequency, Hz.
    pub f_cow_pump: f64,
    /// Cooling tower fan frequency, Hz.
    pub f_fan: f64,
}

impl ControlVector {
    pub fn as_array(&self) -> [f64; 2] {
        [self.f_cow_pump, self.f_fan]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        ControlVector { f_cow_pump: a[0], f_fan: a[1] }
    }
}

/// Box bounds on the control vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub cow_pump: (f64, f64),
    pub fan: (f64, f64),
}

impl ControlBounds {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.cow_pump, self.fan] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("bad control bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn lo(&self) -> [f64; 2] {
        [self.cow_pump.0, self.fan.0]
    }

    pub fn hi(&self) -> [f64; 2] {
        [self.cow_pump.1, self.fan.1]
    }

    pub fn clamp(&self, c: &ControlVector) -> ControlVector {
        ControlVector {
            f_cow_pump: c.f_cow_pump.clamp(self.cow_pump.0, self.cow_pump.1),
            f_fan: c.f_fan.clamp(self.fan.0, self.fan.1),
        }
    }

    pub fn contains(&self, c: &ControlVector) -> bool {
        (self.cow_pump.0..=self.cow_pump.1).contains(&c.f_cow_pump)
            && (self.fan.0..=self.fan.1).contains(&c.f_fan)
    }

    pub fn midpoint(&self) -> ControlVector {
        ControlVector {
            f_cow_pump: 0.5 * (self.cow_pump.0 + self.cow_pump.1),
            f_fan: 0.5 * (self.fan.0 + self.fan.1),
        }
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        let a = self.cow_pump.1 - self.cow_pump.0;
        let b = self.fan.1 - self.fan.0;
        (a * a + b * b).sqrt()
    }
}

/// One timestamped plant observation: conditions, commanded controls, and
/// per-component powers. `p_total` is always the exact sum of the four
/// component readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSample {
    pub t: u64,
    pub state: PlantState,
    pub control: ControlVector,
    pub p_ch: f64,
    pub p_ct: f64,
    pub p_cowp: f64,
    pub p_chwp: f64,
    pub p_total: f64,
}

/// Chiller model feature names, in input order.
pub const CHILLER_FEATURES: [&str; 6] = [
    "T_wb",
    "T_chw_out",
    "T_chw_in",
    "F_cow_pump",
    "F_fan",
    "F_chw_pump",
];

/// Feature indices of the two control variables within [`CHILLER_FEATURES`].
pub const FEATURE_IDX_COW_PUMP: usize = 3;
pub const FEATURE_IDX_FAN: usize = 4;

/// Default monotone directions of chiller power in each feature:
/// fan and cooling-pump frequency and supply temperature push power down,
/// wet-bulb, return temperature and chilled-pump frequency push it up.
pub fn chiller_spec() -> MonotonicitySpec {
    MonotonicitySpec::new(
        CHILLER_FEATURES.iter().map(|s| s.to_string()).collect(),
        vec![
            Direction::Increase, // T_wb
            Direction::Decrease, // T_chw_out
            Direction::Increase, // T_chw_in
            Direction::Decrease, // F_cow_pump
            Direction::Decrease, // F_fan
            Direction::Increase, // F_chw_pump
        ],
    )
    .expect("static spec is valid")
}

/// Assemble the chiller feature vector from a state/control pair.
pub fn chiller_features(state: &PlantState, control: &ControlVector) -> [f64; 6] {
    [
        state.t_wb,
        state.t_chw_out,
        state.t_chw_in,
        control.f_cow_pump,
        control.f_fan,
        state.f_chw_pump,
    ]
}

impl PlantSample {
    pub fn features(&self) -> [f64; 6] {
        chiller_features(&self.state, &self.control)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_matches_feature_order() {
        let spec = chiller_spec();
        assert_eq!(spec.names().len(), CHILLER_FEATURES.len());
        assert_eq!(spec.direction_of("F_fan"), Some(Direction::Decrease));
        assert_eq!(spec.direction_of("T_wb"), Some(Direction::Increase));
        assert_eq!(spec.names()[FEATURE_IDX_FAN], "F_fan");
        assert_eq!(spec.names()[FEATURE_IDX_COW_PUMP], "F_cow_pump");
    }

    #[test]
    fn state_invariant() {
        let bad = PlantState { t_wb: 20.0, t_chw_in: 5.0, t_chw_out: 9.0, f_chw_pump: 40.0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bounds_clamp() {
        let b = ControlBounds { cow_pump: (30.0, 50.0), fan: (30.0, 50.0) };
        let c = b.clamp(&ControlVector { f_cow_pump: 61.0, f_fan: 12.0 });
        assert_eq!(c.f_cow_pump, 50.0);
        assert_eq!(c.f_fan, 30.0);
        assert!(b.contains(&c));
    }
}
