//! Serializable evaluation reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Color space a report's distances are measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportSpace {
    Rgb,
    Lab,
}

impl std::fmt::Display for ReportSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReportSpace::Rgb => f.write_str("RGB"),
            ReportSpace::Lab => f.write_str("L*a*b"),
        }
    }
}

/// Per-channel L1/L2 distances plus optional FID over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub colorspace: ReportSpace,
    pub per_channel_l1: BTreeMap<String, f64>,
    pub per_channel_l2: BTreeMap<String, f64>,
    pub mean_l1: f64,
    pub mean_l2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
    pub n_images: usize,
}

impl MetricsReport {
    pub fn new(
        model: impl Into<String>,
        colorspace: ReportSpace,
        per_channel_l1: BTreeMap<String, f64>,
        per_channel_l2: BTreeMap<String, f64>,
        fid: Option<f64>,
        n_images: usize,
    ) -> Result<Self> {
        if n_images == 0 {
            return Err(Error::contract("report needs at least one image"));
        }
        if let Some(f) = fid {
            if f < 0.0 {
                return Err(Error::contract(format!("fid must be non-negative, got {f}")));
            }
        }
        let mean = |m: &BTreeMap<String, f64>| m.values().sum::<f64>() / m.len().max(1) as f64;
        Ok(MetricsReport {
            model: model.into(),
            colorspace,
            mean_l1: mean(&per_channel_l1),
            mean_l2: mean(&per_channel_l2),
            per_channel_l1,
            per_channel_l2,
            fid,
            n_images,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Two-column text table mirroring the layout of the evaluation tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, k: &str, v: String| {
            out.push_str(&format!("{k:<24} | {v}\n"));
        };
        push(&mut out, "Model", self.model.clone());
        push(&mut out, "Color Space", self.colorspace.to_string());
        push(&mut out, "Images", self.n_images.to_string());
        push(&mut out, "L1 Distance (mean)", format!("{:.6}", self.mean_l1));
        push(&mut out, "L2 Distance (mean)", format!("{:.6}", self.mean_l2));
        for (ch, v) in &self.per_channel_l1 {
            push(&mut out, &format!("L1 [{ch}]"), format!("{v:.6}"));
        }
        for (ch, v) in &self.per_channel_l2 {
            push(&mut out, &format!("L2 [{ch}]"), format!("{v:.6}"));
        }
        if let Some(f) = self.fid {
            push(&mut out, "FID", format!("{f:.6}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_is_average_of_channels() {
        let mut l1 = BTreeMap::new();
        l1.insert("R".into(), 10.0);
        l1.insert("G".into(), 20.0);
        l1.insert("B".into(), 30.0);
        let r = MetricsReport::new("m", ReportSpace::Rgb, l1.clone(), l1, None, 5).unwrap();
        assert!((r.mean_l1 - 20.0).abs() < 1e-9);
        assert_eq!(r.n_images, 5);
    }

    #[test]
    fn json_roundtrip() {
        let mut l1 = BTreeMap::new();
        l1.insert("a".into(), 0.1);
        l1.insert("b".into(), 0.2);
        let r = MetricsReport::new("m", ReportSpace::Lab, l1.clone(), l1, Some(1.5), 2).unwrap();
        let s = r.to_json().unwrap();
        let back: MetricsReport = serde_json::from_str(&s).unwrap();
        assert_eq!(r, back);
        assert!(r.to_table().contains("FID"));
    }
}
