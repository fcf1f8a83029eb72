//! Dataset files: a self-describing JSON document for plain and
//! probabilistic instances, plus a CSV convenience importer.
//!
//! Plain points:
//! `{"dim": 2, "points": [{"coords": [0, 1], "color": "red", "weight": 2.0, "prior": 1}]}`
//! (color/weight/prior are optional but must be present on all records or
//! none; `prior` is a 1-based cluster id in the file and 0-based in memory).
//!
//! Probabilistic nodes:
//! `{"nodes": [{"realizations": [{"coords": [0, 1], "prob": 0.5}]}]}`
//!
//! CSV: one row per point, all-numeric columns are coordinates, an optional
//! trailing non-numeric column is the color.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cckit::geometry::{Point, PointSet};
use cckit::partitions::{Instance, UncertainNode, UncertainSet};

#[derive(Debug, Serialize, Deserialize)]
pub struct PointRecord {
    pub coords: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub coords: Vec<f64>,
    pub prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeRecord {
    pub realizations: Vec<RealizationRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PointRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeRecord>>,
}

pub fn load_dataset(path: &Path) -> Result<Instance> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("csv") {
        return load_csv(path);
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let file: DatasetFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    instance_from_file(file)
}

pub fn instance_from_file(file: DatasetFile) -> Result<Instance> {
    match (file.points, file.nodes) {
        (Some(points), None) => Ok(Instance::Points(points_from_records(file.dim, points)?)),
        (None, Some(nodes)) => Ok(Instance::Uncertain(nodes_from_records(nodes)?)),
        (Some(_), Some(_)) => bail!("dataset has both \"points\" and \"nodes\""),
        (None, None) => bail!("dataset has neither \"points\" nor \"nodes\""),
    }
}

fn points_from_records(dim: Option<usize>, records: Vec<PointRecord>) -> Result<PointSet> {
    if records.is_empty() {
        bail!("dataset has no points");
    }
    let dim = dim.unwrap_or(records[0].coords.len());
    let has_color = records[0].color.is_some();
    let has_weight = records[0].weight.is_some();
    let has_prior = records[0].prior.is_some();
    let mut points = Vec::with_capacity(records.len());
    let mut colors = Vec::new();
    let mut weights = Vec::new();
    let mut priors = Vec::new();
    let mut palette: BTreeMap<String, u32> = BTreeMap::new();
    for (i, rec) in records.into_iter().enumerate() {
        if rec.coords.len() != dim {
            bail!("record {i}: expected {dim} coordinates, got {}", rec.coords.len());
        }
        points.push(Point::new(rec.coords).map_err(|e| anyhow::anyhow!("record {i}: {e}"))?);
        match (has_color, rec.color) {
            (true, Some(c)) => {
                let next = palette.len() as u32;
                colors.push(*palette.entry(c).or_insert(next));
            }
            (false, None) => {}
            _ => bail!("record {i}: color present on some records but not all"),
        }
        match (has_weight, rec.weight) {
            (true, Some(w)) => weights.push(w),
            (false, None) => {}
            _ => bail!("record {i}: weight present on some records but not all"),
        }
        match (has_prior, rec.prior) {
            (true, Some(p)) => {
                if p == 0 {
                    bail!("record {i}: prior cluster ids are 1-based");
                }
                priors.push((p - 1) as usize);
            }
            (false, None) => {}
            _ => bail!("record {i}: prior present on some records but not all"),
        }
    }
    let mut ps = PointSet::new(points)?;
    if has_weight {
        ps = ps.with_weights(weights)?;
    }
    if has_color {
        ps = ps.with_colors(colors)?;
    }
    if has_prior {
        ps = ps.with_prior_labels(priors)?;
    }
    Ok(ps)
}

fn nodes_from_records(records: Vec<NodeRecord>) -> Result<UncertainSet> {
    let mut nodes = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let mut realizations = Vec::with_capacity(rec.realizations.len());
        let mut total = 0.0;
        for r in rec.realizations {
            total += r.prob;
            realizations
                .push((Point::new(r.coords).map_err(|e| anyhow::anyhow!("node {i}: {e}"))?, r.prob));
        }
        if total > 1.0 + 1e-9 {
            bail!("node {i}: probabilities sum to {total} > 1");
        }
        nodes.push(UncertainNode { realizations });
    }
    Ok(UncertainSet::new(nodes)?)
}

fn load_csv(path: &Path) -> Result<Instance> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    let mut colors: Vec<String> = Vec::new();
    let mut any_color = false;
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("record {i}"))?;
        let fields: Vec<&str> = row.iter().map(str::trim).collect();
        if fields.is_empty() {
            continue;
        }
        let (coord_fields, color) = match fields.last().unwrap().parse::<f64>() {
            Ok(_) => (&fields[..], None),
            Err(_) => (&fields[..fields.len() - 1], Some(fields.last().unwrap().to_string())),
        };
        let coords: Vec<f64> = coord_fields
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| anyhow::anyhow!("record {i}: {e}")))
            .collect::<Result<_>>()?;
        points.push(PointRecord { coords, color: color.clone(), weight: None, prior: None });
        if let Some(c) = color {
            any_color = true;
            colors.push(c);
        }
    }
    if any_color && colors.len() != points.len() {
        bail!("color column present on some rows but not all");
    }
    if !any_color {
        for p in points.iter_mut() {
            p.color = None;
        }
    }
    Ok(Instance::Points(points_from_records(None, points)?))
}
