//! Model directory layout: `w.csv`, `h.csv`, `trace.csv` and `meta.json`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Init, Solver, TopicModel};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Labelled {
    code: String,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    k: usize,
    solver: Solver,
    init: Init,
    seed: u64,
    iterations: usize,
    converged: bool,
    final_objective: f64,
    #[serde(default)]
    year: Option<i32>,
    #[serde(default)]
    labels: Vec<Option<String>>,
    regions: Vec<Labelled>,
    occupations: Vec<Labelled>,
}

fn write_file(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn topic_header(k: usize) -> impl Iterator<Item = String> {
    (1..=k).map(|t| format!("topic_{t}"))
}

pub fn save_model(model: &TopicModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("region".to_string()).chain(topic_header(model.k)))?;
    for (i, code) in model.region_labels.iter().enumerate() {
        w.write_record(
            std::iter::once(code.clone()).chain(model.w.row(i).iter().map(|v| v.to_string())),
        )?;
    }
    write_file(&dir.join("w.csv"), w.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;

    let mut h = csv::Writer::from_writer(Vec::new());
    h.write_record(std::iter::once("topic").chain(model.occupation_labels.iter().map(String::as_str)))?;
    for (t, name) in topic_header(model.k).enumerate() {
        h.write_record(std::iter::once(name).chain(model.h.row(t).iter().map(|v| v.to_string())))?;
    }
    write_file(&dir.join("h.csv"), h.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;

    let mut tr = csv::Writer::from_writer(Vec::new());
    tr.write_record(["iteration", "objective"])?;
    for (i, v) in model.objective_trace.iter().enumerate() {
        tr.write_record([i.to_string(), v.to_string()])?;
    }
    write_file(&dir.join("trace.csv"), tr.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;

    let meta = Meta {
        k: model.k,
        solver: model.solver,
        init: model.init,
        seed: model.seed,
        iterations: model.iterations_run,
        converged: model.converged,
        final_objective: model.final_objective(),
        year: model.year,
        labels: model.labels.clone(),
        regions: model
            .region_labels
            .iter()
            .zip(&model.region_names)
            .map(|(c, n)| Labelled { code: c.clone(), name: n.clone() })
            .collect(),
        occupations: model
            .occupation_labels
            .iter()
            .zip(&model.occupation_names)
            .map(|(c, n)| Labelled { code: c.clone(), name: n.clone() })
            .collect(),
    };
    write_file(&dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)
}

fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<String>, Array2<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            flat.push(cell.parse::<f64>().map_err(|_| {
                Error::Format(format!("{}: bad number `{cell}`", path.display()))
            })?);
        }
    }
    let m = Array2::from_shape_vec((rows.len(), header.len()), flat)
        .map_err(|e| Error::Shape(format!("{}: {e}", path.display())))?;
    Ok((header, rows, m))
}

pub fn load_model(dir: &Path) -> Result<TopicModel> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_slice(&fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?;
    let (_, regions, w) = read_numeric_csv(&dir.join("w.csv"))?;
    let (occupations, _, h) = read_numeric_csv(&dir.join("h.csv"))?;
    if w.ncols() != meta.k || h.nrows() != meta.k {
        return Err(Error::Shape(format!(
            "model in {} declares k = {} but W is {:?} and H is {:?}",
            dir.display(),
            meta.k,
            w.dim(),
            h.dim()
        )));
    }
    if regions.len() != meta.regions.len() || occupations.len() != meta.occupations.len() {
        return Err(Error::Shape(format!("label count mismatch in {}", dir.display())));
    }
    let trace_path = dir.join("trace.csv");
    let mut objective_trace = Vec::new();
    if trace_path.exists() {
        let mut rdr = csv::Reader::from_path(&trace_path)?;
        for rec in rdr.records() {
            let rec = rec?;
            objective_trace.push(rec[1].parse::<f64>().map_err(|_| {
                Error::Format(format!("{}: bad objective `{}`", trace_path.display(), &rec[1]))
            })?);
        }
    }
    let mut labels = meta.labels;
    labels.resize(meta.k, None);
    Ok(TopicModel {
        w,
        h,
        k: meta.k,
        objective_trace,
        solver: meta.solver,
        init: meta.init,
        seed: meta.seed,
        iterations_run: meta.iterations,
        converged: meta.converged,
        region_labels: regions,
        region_names: meta.regions.into_iter().map(|l| l.name).collect(),
        occupation_labels: occupations,
        occupation_names: meta.occupations.into_iter().map(|l| l.name).collect(),
        labels,
        year: meta.year,
    })
}
