//! Depth-completion, depth-estimation and enhancement metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub unit: String,
}

/// Metric name → value with unit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, Metric>,
}

impl MetricReport {
    pub fn insert(&mut self, name: &str, value: f64, unit: &str) {
        self.metrics.insert(
            name.to_string(),
            Metric {
                value,
                unit: unit.to_string(),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    pub fn merge(&mut self, other: MetricReport) {
        self.metrics.extend(other.metrics);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metric report serialises")
    }
}

/// `(prediction, truth)` pairs over the valid pixels; both must be positive there.
fn valid_pairs(o: &Tensor, d: &Tensor, valid: &Tensor) -> Result<Vec<(f64, f64)>> {
    o.expect_same_shape(d)?;
    o.expect_same_shape(valid)?;
    let pairs: Vec<_> = o
        .data()
        .iter()
        .zip(d.data())
        .zip(valid.data())
        .filter(|(_, &v)| v > 0.0)
        .map(|((&o, &d), _)| (o, d))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoValidPixels);
    }
    if let Some((o, d)) = pairs.iter().find(|(o, d)| !(*o > 0.0 && *d > 0.0)) {
        return Err(Error::Domain(format!("non-positive depth on a valid pixel (pred {o}, truth {d})")));
    }
    Ok(pairs)
}

fn mean(pairs: &[(f64, f64)], f: impl Fn(f64, f64) -> f64) -> f64 {
    pairs.iter().map(|&(o, d)| f(o, d)).sum::<f64>() / pairs.len() as f64
}

/// RMSE and MAE in metres; iRMSE and iMAE on inverse depth in 1/km.
pub fn completion_metrics(o: &Tensor, d: &Tensor, valid: &Tensor) -> Result<MetricReport> {
    let p = valid_pairs(o, d, valid)?;
    let inv = |o: f64, d: f64| 1000.0 / o - 1000.0 / d;
    let mut r = MetricReport::default();
    r.insert("rmse", mean(&p, |o, d| (o - d).powi(2)).sqrt(), "m");
    r.insert("mae", mean(&p, |o, d| (o - d).abs()), "m");
    r.insert("irmse", mean(&p, |o, d| inv(o, d).powi(2)).sqrt(), "1/km");
    r.insert("imae", mean(&p, |o, d| inv(o, d).abs()), "1/km");
    Ok(r)
}

/// Abs Rel, Sq Rel, RMSE, RMSE log and the δ < 1.25ⁱ accuracies (strict).
pub fn estimation_metrics(o: &Tensor, d: &Tensor, valid: &Tensor) -> Result<MetricReport> {
    let p = valid_pairs(o, d, valid)?;
    let mut r = MetricReport::default();
    r.insert("abs_rel", mean(&p, |o, d| (o - d).abs() / d), "");
    r.insert("sq_rel", mean(&p, |o, d| (o - d).powi(2) / d), "");
    r.insert("rmse", mean(&p, |o, d| (o - d).powi(2)).sqrt(), "m");
    r.insert("rmse_log", mean(&p, |o, d| (o.ln() - d.ln()).powi(2)).sqrt(), "");
    for i in 1..=3 {
        let t = 1.25f64.powi(i);
        r.insert(&format!("delta{i}"), mean(&p, |o, d| f64::from((o / d).max(d / o) < t)), "fraction");
    }
    Ok(r)
}

/// Shannon entropy in bits of the 256-level histogram pooled over channels.
pub fn discrete_entropy(img: &Tensor) -> Result<f64> {
    if img.numel() == 0 {
        return Err(Error::Domain("entropy of an empty image".into()));
    }
    let mut hist = [0usize; 256];
    for &v in img.data() {
        hist[crate::data::io::quantize_u8(v.clamp(0.0, 1.0)) as usize] += 1;
    }
    let n = img.numel() as f64;
    Ok(hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// Mean intensity over all channels.
pub fn brightness(img: &Tensor) -> f64 {
    img.mean()
}
