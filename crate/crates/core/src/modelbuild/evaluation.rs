//! Per-region landmark distance statistics.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::mesh::LandmarkSet;
use crate::{Error, Result};

/// Landmark name → region name. Regions are reported in order of first
/// appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionMap {
    entries: Vec<(String, String)>,
}

impl RegionMap {
    pub fn new<A: Into<String>, B: Into<String>>(entries: impl IntoIterator<Item = (A, B)>) -> Self {
        Self { entries: entries.into_iter().map(|(a, b)| (a.into(), b.into())).collect() }
    }

    /// JSON object `{"landmark": "region", …}`.
    pub fn from_json(text: &str, ctx: &str) -> Result<Self> {
        let map: Map<String, Value> = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
        let entries = map
            .into_iter()
            .map(|(k, v)| match v {
                Value::String(r) => Ok((k, r)),
                other => Err(Error::parse(ctx, format!("region of '{k}' must be a string, got {other}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn region_of(&self, landmark: &str) -> Option<&str> {
        self.entries.iter().find(|(l, _)| l == landmark).map(|(_, r)| r.as_str())
    }

    fn regions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (_, r) in &self.entries {
            if !out.contains(&r.as_str()) {
                out.push(r);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionStats {
    pub name: String,
    /// Millimeters.
    pub mean: f64,
    /// Sample standard deviation (`n − 1`), 0 for a single distance.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandmarkReport {
    pub regions: Vec<RegionStats>,
}

impl LandmarkReport {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Aligned plain-text table, one region per row.
    pub fn to_table(&self) -> String {
        let width = self.regions.iter().map(|r| r.name.len()).max().unwrap_or(0).max("Region".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>17}  {:>5}", "Region", "Mean ± Std (mm)", "N");
        for r in &self.regions {
            let cell = format!("{:.2} ± {:.2}", r.mean, r.std);
            let _ = writeln!(out, "{:<width$}  {:>17}  {:>5}", r.name, cell, r.count);
        }
        out
    }
}

/// Report for one registered/ground-truth pair.
pub fn evaluate_landmarks(registered: &LandmarkSet, truth: &LandmarkSet, regions: &RegionMap) -> Result<LandmarkReport> {
    evaluate_landmark_sets(&[(registered.clone(), truth.clone())], regions)
}

/// Pools distances over several pairs. Every landmark must appear in both
/// sets of its pair and in the region map; offenders are listed in the error.
pub fn evaluate_landmark_sets(pairs: &[(LandmarkSet, LandmarkSet)], regions: &RegionMap) -> Result<LandmarkReport> {
    let mut unmatched = Vec::new();
    let names = regions.regions();
    let mut distances: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (registered, truth) in pairs {
        for l in registered.entries() {
            match (truth.get(&l.name), regions.region_of(&l.name)) {
                (Some(t), Some(region)) => {
                    let k = names.iter().position(|n| *n == region).expect("region listed");
                    distances[k].push((l.point - t).norm());
                }
                _ => unmatched.push(l.name.clone()),
            }
        }
        for l in truth.entries() {
            if registered.get(&l.name).is_none() {
                unmatched.push(l.name.clone());
            }
        }
    }
    if !unmatched.is_empty() {
        unmatched.sort();
        unmatched.dedup();
        return Err(Error::UnmatchedLandmarks(unmatched));
    }
    let regions = names
        .iter()
        .zip(distances)
        .filter(|(_, d)| !d.is_empty())
        .map(|(name, d)| {
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let std = if d.len() > 1 { (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            RegionStats { name: name.to_string(), mean, std, count: d.len() }
        })
        .collect();
    Ok(LandmarkReport { regions })
}
