//! CSV file formats.
//!
//! All reals are written with Rust's shortest round-trip formatting, so a
//! file parses back to bit-identical values and identical runs produce
//! byte-identical files.

use std::path::Path;

use crate::aoi::AoiRecord;
use crate::losses::TrainHistory;
use crate::mbo::PolicyRow;
use crate::plant::{ControlVector, PlantSample, PlantState};
use crate::{Error, Result};

pub const DATASET_HEADER: [&str; 12] = [
    "t", "T_wb", "T_chw_in", "T_chw_out", "F_chw_pump", "F_cow_pump", "F_fan", "P_CH", "P_CT",
    "P_COWP", "P_CHWP", "P_total",
];

pub const HISTORY_HEADER: [&str; 5] = ["epoch", "mse", "rank_loss", "range_loss", "total"];

pub const POLICY_HEADER: [&str; 7] = [
    "state_id", "T_wb", "c_fan", "c_pump", "pred_kw", "true_kw", "oracle_true_kw",
];

pub const CURVES_HEADER: [&str; 4] = ["anchor_id", "feature", "x", "pred_kw"];

pub const DEVICE_HEADER: [&str; 2] = ["freq_hz", "power_kw"];

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_dataset(path: &Path, samples: &[PlantSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DATASET_HEADER)?;
    for s in samples {
        w.write_record([
            s.t.to_string(),
            fmt(s.state.t_wb),
            fmt(s.state.t_chw_in),
            fmt(s.state.t_chw_out),
            fmt(s.state.f_chw_pump),
            fmt(s.control.f_cow_pump),
            fmt(s.control.f_fan),
            fmt(s.p_ch),
            fmt(s.p_ct),
            fmt(s.p_cowp),
            fmt(s.p_chwp),
            fmt(s.p_total),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f(field: &str, name: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("bad {name} value '{field}'")))
}

pub fn read_dataset(path: &Path) -> Result<Vec<PlantSample>> {
    let mut r = csv::Reader::from_path(path)?;
    {
        let got: Vec<&str> = r.headers()?.iter().collect();
        if got != DATASET_HEADER {
            return Err(Error::Config(format!(
                "dataset header mismatch: expected {DATASET_HEADER:?}, got {got:?}"
            )));
        }
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != DATASET_HEADER.len() {
            return Err(Error::Config(format!("dataset row has {} fields", rec.len())));
        }
        out.push(PlantSample {
            t: rec[0]
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad time index '{}'", &rec[0])))?,
            state: PlantState {
                t_wb: parse_f(&rec[1], "T_wb")?,
                t_chw_in: parse_f(&rec[2], "T_chw_in")?,
                t_chw_out: parse_f(&rec[3], "T_chw_out")?,
                f_chw_pump: parse_f(&rec[4], "F_chw_pump")?,
            },
            control: ControlVector {
                f_cow_pump: parse_f(&rec[5], "F_cow_pump")?,
                f_fan: parse_f(&rec[6], "F_fan")?,
            },
            p_ch: parse_f(&rec[7], "P_CH")?,
            p_ct: parse_f(&rec[8], "P_CT")?,
            p_cowp: parse_f(&rec[9], "P_COWP")?,
            p_chwp: parse_f(&rec[10], "P_CHWP")?,
            p_total: parse_f(&rec[11], "P_total")?,
        });
    }
    Ok(out)
}

pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            fmt(e.mse),
            fmt(e.rank_loss),
            fmt(e.range_loss),
            fmt(e.total),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_policy(path: &Path, rows: &[PolicyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(POLICY_HEADER)?;
    for r in rows {
        w.write_record([
            r.state_id.to_string(),
            fmt(r.t_wb),
            fmt(r.c_fan),
            fmt(r.c_pump),
            fmt(r.pred_kw),
            fmt(r.true_kw),
            fmt(r.oracle_true_kw),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_policy(path: &Path) -> Result<Vec<PolicyRow>> {
    let mut r = csv::Reader::from_path(path)?;
    {
        let got: Vec<&str> = r.headers()?.iter().collect();
        if got != POLICY_HEADER {
            return Err(Error::Config(format!(
                "policy header mismatch: expected {POLICY_HEADER:?}, got {got:?}"
            )));
        }
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(PolicyRow {
            state_id: rec[0]
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad state id '{}'", &rec[0])))?,
            t_wb: parse_f(&rec[1], "T_wb")?,
            c_fan: parse_f(&rec[2], "c_fan")?,
            c_pump: parse_f(&rec[3], "c_pump")?,
            pred_kw: parse_f(&rec[4], "pred_kw")?,
            true_kw: parse_f(&rec[5], "true_kw")?,
            oracle_true_kw: parse_f(&rec[6], "oracle_true_kw")?,
        });
    }
    Ok(out)
}

/// Trajectory rows: the dataset schema plus the online-optimizer columns.
pub fn write_trajectory(path: &Path, samples: &[PlantSample], records: &[AoiRecord]) -> Result<()> {
    if samples.len() != records.len() {
        return Err(Error::Config(format!(
            "{} samples vs {} records",
            samples.len(),
            records.len()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = DATASET_HEADER.to_vec();
    header.extend(["g_norm", "e_norm", "eta", "regret"]);
    w.write_record(&header)?;
    for (s, r) in samples.iter().zip(records) {
        w.write_record([
            s.t.to_string(),
            fmt(s.state.t_wb),
            fmt(s.state.t_chw_in),
            fmt(s.state.t_chw_out),
            fmt(s.state.f_chw_pump),
            fmt(s.control.f_cow_pump),
            fmt(s.control.f_fan),
            fmt(s.p_ch),
            fmt(s.p_ct),
            fmt(s.p_cowp),
            fmt(s.p_chwp),
            fmt(s.p_total),
            fmt(r.g_norm),
            fmt(r.e_norm),
            fmt(r.eta),
            fmt(r.regret),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Natural-curve rows: one prediction per anchor sample per grid step.
pub struct CurveRow {
    pub anchor_id: usize,
    pub feature: String,
    pub x: f64,
    pub pred_kw: f64,
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVES_HEADER)?;
    for r in rows {
        w.write_record([
            r.anchor_id.to_string(),
            r.feature.clone(),
            fmt(r.x),
            fmt(r.pred_kw),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read device samples, either from the dedicated `freq_hz,power_kw` format
/// or from a dataset CSV with the named frequency/power columns extracted.
pub fn read_device_samples(path: &Path, freq_col: &str, power_col: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    let fi = headers
        .iter()
        .position(|h| h == freq_col)
        .ok_or_else(|| Error::Config(format!("column '{freq_col}' not found in {headers:?}")))?;
    let pi = headers
        .iter()
        .position(|h| h == power_col)
        .ok_or_else(|| Error::Config(format!("column '{power_col}' not found in {headers:?}")))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((parse_f(&rec[fi], freq_col)?, parse_f(&rec[pi], power_col)?));
    }
    Ok(out)
}

/// Comparison table: mean true power per wet-bulb bucket per method, with
/// the oracle column last.
pub fn write_compare(
    path: &Path,
    methods: &[String],
    buckets: &[(i64, Vec<f64>, f64)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t_wb_bucket".to_string()];
    header.extend(methods.iter().cloned());
    header.push("oracle".to_string());
    w.write_record(&header)?;
    for (bucket, per_method, oracle) in buckets {
        let mut rec = vec![bucket.to_string()];
        rec.extend(per_method.iter().map(|v| fmt(*v)));
        rec.push(fmt(*oracle));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
