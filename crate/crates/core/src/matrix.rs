//! Labelled dense region x occupation matrix and its CSV encoding.
//!
//! The CSV layout puts occupation codes in the header row and region codes in
//! the first column. Display names do not fit that layout, so they go to a
//! sidecar file `<name>.names.csv` (columns `axis,code,name`) when present.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cache;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Raw,
    Tfidf,
}

impl MatrixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::Raw => "raw",
            MatrixKind::Tfidf => "tfidf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOccupationMatrix {
    pub values: Array2<f64>,
    pub region_labels: Vec<String>,
    pub occupation_labels: Vec<String>,
    pub region_names: Vec<String>,
    pub occupation_names: Vec<String>,
    pub kind: MatrixKind,
}

impl RegionOccupationMatrix {
    /// Builds a matrix whose display names default to the codes.
    pub fn new(
        values: Array2<f64>,
        region_labels: Vec<String>,
        occupation_labels: Vec<String>,
        kind: MatrixKind,
    ) -> Result<Self> {
        let region_names = region_labels.clone();
        let occupation_names = occupation_labels.clone();
        Self::with_names(
            values,
            region_labels,
            occupation_labels,
            region_names,
            occupation_names,
            kind,
        )
    }

    pub fn with_names(
        values: Array2<f64>,
        region_labels: Vec<String>,
        occupation_labels: Vec<String>,
        region_names: Vec<String>,
        occupation_names: Vec<String>,
        kind: MatrixKind,
    ) -> Result<Self> {
        let (r, o) = values.dim();
        if region_labels.len() != r || region_names.len() != r {
            return Err(Error::Shape(format!(
                "{} rows but {} region labels / {} names",
                r,
                region_labels.len(),
                region_names.len()
            )));
        }
        if occupation_labels.len() != o || occupation_names.len() != o {
            return Err(Error::Shape(format!(
                "{} columns but {} occupation labels / {} names",
                o,
                occupation_labels.len(),
                occupation_names.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Data(format!(
                "matrix entries must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self {
            values,
            region_labels,
            occupation_labels,
            region_names,
            occupation_names,
            kind,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_occupations(&self) -> usize {
        self.values.ncols()
    }

    pub fn region_index(&self, code: &str) -> Option<usize> {
        self.region_labels.iter().position(|c| c == code)
    }

    pub fn occupation_names_by_code(&self) -> HashMap<&str, &str> {
        self.occupation_labels
            .iter()
            .map(String::as_str)
            .zip(self.occupation_names.iter().map(String::as_str))
            .collect()
    }

    /// Drops occupation columns that are zero in every region.
    pub fn prune_empty_columns(&self) -> Self {
        let keep: Vec<usize> = (0..self.n_occupations())
            .filter(|&j| self.values.column(j).iter().any(|&v| v > 0.0))
            .collect();
        let values = self.values.select(ndarray::Axis(1), &keep);
        Self {
            values,
            region_labels: self.region_labels.clone(),
            occupation_labels: keep.iter().map(|&j| self.occupation_labels[j].clone()).collect(),
            region_names: self.region_names.clone(),
            occupation_names: keep.iter().map(|&j| self.occupation_names[j].clone()).collect(),
            kind: self.kind,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["region".to_string()];
        header.extend(self.occupation_labels.iter().cloned());
        w.write_record(&header)?;
        for (i, code) in self.region_labels.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.n_occupations() + 1);
            rec.push(code.clone());
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, kind: MatrixKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.is_empty() {
            return Err(Error::Format("matrix CSV has an empty header".into()));
        }
        let occupation_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut region_labels = Vec::new();
        let mut flat = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != occupation_labels.len() + 1 {
                return Err(Error::Format(format!(
                    "matrix row {} has {} cells, expected {}",
                    line + 2,
                    rec.len(),
                    occupation_labels.len() + 1
                )));
            }
            region_labels.push(rec[0].to_string());
            for cell in rec.iter().skip(1) {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::Format(format!("matrix row {}: bad number `{cell}`", line + 2))
                })?;
                flat.push(v);
            }
        }
        let values = Array2::from_shape_vec((region_labels.len(), occupation_labels.len()), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(values, region_labels, occupation_labels, kind)
    }

    /// Writes either the binary cache (`.lscope`) or CSV plus a names sidecar,
    /// chosen by file extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        if is_cache_path(path) {
            let mut buf = Vec::new();
            cache::write_matrix(&mut buf, self)?;
            return fs::write(path, buf).map_err(|e| Error::io(path, e));
        }
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        let names_path = names_sidecar(path);
        if self.region_names != self.region_labels || self.occupation_names != self.occupation_labels {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["axis", "code", "name"])?;
            for (c, n) in self.region_labels.iter().zip(&self.region_names) {
                w.write_record(["region", c, n])?;
            }
            for (c, n) in self.occupation_labels.iter().zip(&self.occupation_names) {
                w.write_record(["occupation", c, n])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
            fs::write(&names_path, bytes).map_err(|e| Error::io(&names_path, e))?;
        } else if names_path.exists() {
            fs::remove_file(&names_path).map_err(|e| Error::io(&names_path, e))?;
        }
        Ok(())
    }

    /// Reads a matrix written by [`save`](Self::save). `kind` applies to CSV
    /// input only; the binary cache records its own kind.
    pub fn load(path: &Path, kind: MatrixKind) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(cache::MAGIC) {
            return cache::read_matrix(&mut bytes.as_slice());
        }
        let mut m = Self::read_csv(bytes.as_slice(), kind)?;
        let names_path = names_sidecar(path);
        if names_path.exists() {
            let mut rdr = csv::Reader::from_path(&names_path)?;
            let mut regions = HashMap::new();
            let mut occupations = HashMap::new();
            for rec in rdr.records() {
                let rec = rec?;
                if rec.len() < 3 {
                    continue;
                }
                let target = if &rec[0] == "region" {
                    &mut regions
                } else {
                    &mut occupations
                };
                target.insert(rec[1].to_string(), rec[2].to_string());
            }
            for (c, n) in m.region_labels.iter().zip(m.region_names.iter_mut()) {
                if let Some(name) = regions.get(c) {
                    n.clone_from(name);
                }
            }
            for (c, n) in m.occupation_labels.iter().zip(m.occupation_names.iter_mut()) {
                if let Some(name) = occupations.get(c) {
                    n.clone_from(name);
                }
            }
        }
        Ok(m)
    }
}

pub(crate) fn is_cache_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "lscope")
}

fn names_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".names.csv");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_negative_and_mislabelled() {
        let bad = RegionOccupationMatrix::new(
            array![[1.0, -1.0]],
            vec!["a".into()],
            vec!["x".into(), "y".into()],
            MatrixKind::Raw,
        );
        assert!(matches!(bad, Err(Error::Data(_))));
        let short = RegionOccupationMatrix::new(
            array![[1.0, 1.0]],
            vec!["a".into()],
            vec!["x".into()],
            MatrixKind::Raw,
        );
        assert!(matches!(short, Err(Error::Shape(_))));
    }

    #[test]
    fn csv_with_names_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = RegionOccupationMatrix::with_names(
            array![[1.5, 0.0], [0.1, 3.0]],
            vec!["r1".into(), "r2".into()],
            vec!["o1".into(), "o2".into()],
            vec!["Region, One".into(), "Region Two".into()],
            vec!["Gaming Dealers".into(), "o2".into()],
            MatrixKind::Tfidf,
        )
        .unwrap();
        m.save(&path).unwrap();
        let back = RegionOccupationMatrix::load(&path, MatrixKind::Tfidf).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn prune_drops_zero_columns_only() {
        let m = RegionOccupationMatrix::new(
            array![[0.0, 1.0, 0.0], [0.0, 2.0, 5.0]],
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into(), "z".into()],
            MatrixKind::Raw,
        )
        .unwrap();
        let p = m.prune_empty_columns();
        assert_eq!(p.occupation_labels, vec!["y", "z"]);
        assert_eq!(p.values, array![[1.0, 0.0], [2.0, 5.0]]);
    }
}
