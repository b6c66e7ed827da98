//! TF-IDF reweighting of region x occupation employment.
//!
//! An occupation's weight in a region is its raw employment scaled by
//! `log(N / df)`, where `N` is the number of regions and `df` the number of
//! regions employing anyone in that occupation. Occupations found everywhere
//! get weight zero.

use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{MatrixKind, RegionOccupationMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, v: f64) -> f64 {
        match self {
            LogBase::E => v.ln(),
            LogBase::Two => v.log2(),
            LogBase::Ten => v.log10(),
        }
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" => Ok(LogBase::E),
            "2" | "two" => Ok(LogBase::Two),
            "10" | "ten" => Ok(LogBase::Ten),
            other => Err(Error::Config(format!("unknown log base `{other}` (use e, 2 or 10)"))),
        }
    }
}

fn require_kind(x: &RegionOccupationMatrix, kind: MatrixKind) -> Result<()> {
    if x.kind != kind {
        return Err(Error::Data(format!(
            "expected a {} matrix, got {}",
            kind.as_str(),
            x.kind.as_str()
        )));
    }
    Ok(())
}

/// Number of regions with strictly positive employment, per occupation.
pub fn document_frequency(x: &RegionOccupationMatrix) -> Result<Vec<usize>> {
    require_kind(x, MatrixKind::Raw)?;
    Ok(x.values
        .axis_iter(Axis(1))
        .map(|col| col.iter().filter(|&&v| v > 0.0).count())
        .collect())
}

/// Natural-log TF-IDF.
pub fn tfidf(x: &RegionOccupationMatrix) -> Result<RegionOccupationMatrix> {
    tfidf_with_base(x, LogBase::E)
}

pub fn tfidf_with_base(x: &RegionOccupationMatrix, base: LogBase) -> Result<RegionOccupationMatrix> {
    let df = document_frequency(x)?;
    let n = x.n_regions() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { base.log(n / d as f64) })
        .collect();
    let (rows, cols) = x.values.dim();
    // each entry is an independent product, so the parallel split cannot
    // change results
    let flat: Vec<f64> = x
        .values
        .as_standard_layout()
        .as_slice()
        .expect("standard layout")
        .par_iter()
        .enumerate()
        .map(|(k, &v)| if v > 0.0 { v * idf[k % cols] } else { 0.0 })
        .collect();
    let values = Array2::from_shape_vec((rows, cols), flat).expect("same shape");
    Ok(RegionOccupationMatrix {
        values,
        region_labels: x.region_labels.clone(),
        occupation_labels: x.occupation_labels.clone(),
        region_names: x.region_names.clone(),
        occupation_names: x.occupation_names.clone(),
        kind: MatrixKind::Tfidf,
    })
}

/// The `k` highest-scoring occupations of a region, descending, ties broken
/// by occupation code.
pub fn top_k_by_region(
    x: &RegionOccupationMatrix,
    region: &str,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let i = x
        .region_index(region)
        .ok_or_else(|| Error::UnknownRegion(region.to_string()))?;
    let row = x.values.row(i);
    let mut order: Vec<usize> = (0..x.n_occupations()).collect();
    order.sort_by(|&a, &b| {
        row[b]
            .total_cmp(&row[a])
            .then_with(|| x.occupation_labels[a].cmp(&x.occupation_labels[b]))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|j| (x.occupation_labels[j].clone(), row[j]))
        .collect())
}

/// Writes `(code, weight)` rows from [`top_k_by_region`] with display names.
pub fn write_top_occupations_csv<W: std::io::Write>(
    x: &RegionOccupationMatrix,
    rows: &[(String, f64)],
    out: W,
) -> Result<()> {
    let names = x.occupation_names_by_code();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["occupation", "name", "weight"])?;
    for (code, v) in rows {
        w.write_record([code.as_str(), names.get(code.as_str()).copied().unwrap_or(""), &v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
