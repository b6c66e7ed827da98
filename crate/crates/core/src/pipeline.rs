//! The full run: ingest, crosswalk, restrict, TF-IDF, pooled and per-year
//! fits, topic summaries, alignment, clustering and spatial statistics.
//!
//! Every stage writes its outputs into one directory. A `.partial` marker
//! sits in that directory until the run finishes; on failure it names the
//! stage that failed. Finished runs end with `manifest.json`, which records
//! the configuration and SHA-256 hashes of every input and output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{cosine_distance_matrix, hierarchical_cluster, select_top_regions, Linkage};
use crate::dynamics::{chain, Matching};
use crate::error::{Error, Result};
use crate::factorization::{fit, save_model, FitConfig, Init, Solver, TopicModel};
use crate::ingest::{
    apply_crosswalk, merge_tables, parse_csv_file, restrict_consistent, to_matrix, to_pooled_matrix, Crosswalk,
    EmploymentTable, FormatConfig,
};
use crate::spatial::{
    build_weights, location_quotient, morans_i_table, write_moran_csv, RegionCoordinates, RegionVariables,
    SectorMap, SpatialWeights, WeightSource,
};
use crate::topics::{compose_regions, summarize_topics, write_compositions_csv, write_prevalence_table_csv};
use crate::weighting::{tfidf_with_base, LogBase};

pub const PARTIAL_MARKER: &str = ".partial";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    /// Year for files without a year column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMethod {
    #[default]
    Knn,
    InverseDistance,
    Adjacency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightsConfig {
    pub method: WeightsMethod,
    pub knn: usize,
    pub power: f64,
    pub row_standardize: bool,
    /// Adjacency CSV for `method = "adjacency"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<PathBuf>,
    /// Permutations for Moran's I pseudo p-values; none by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            method: WeightsMethod::Knn,
            knn: 8,
            power: 1.0,
            row_standardize: true,
            adjacency: None,
            permutations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub inputs: Vec<InputFile>,
    /// Required whenever more than one year is analysed. A header-only file
    /// states that no codes change.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crosswalk: Option<PathBuf>,
    /// Years to analyse; all years in the inputs when empty.
    pub years: Vec<i32>,
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub solver: Solver,
    pub init: Init,
    /// The only source of randomness in a run.
    pub seed: u64,
    pub log_base: LogBase,
    pub alpha: f64,
    pub matching: Matching,
    pub linkage: Linkage,
    pub top_regions: usize,
    pub top_occupations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sectors: Option<PathBuf>,
    pub weights: WeightsConfig,
    pub out_dir: PathBuf,
    pub format: FormatConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            inputs: Vec::new(),
            crosswalk: None,
            years: Vec::new(),
            k: fit.k,
            max_iter: fit.max_iter,
            tol: fit.tol,
            solver: fit.solver,
            init: fit.init,
            seed: fit.seed,
            log_base: LogBase::E,
            alpha: 0.5,
            matching: Matching::Greedy,
            linkage: Linkage::Average,
            top_regions: 50,
            top_occupations: 10,
            coordinates: None,
            sectors: None,
            weights: WeightsConfig::default(),
            out_dir: PathBuf::from("out"),
            format: FormatConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config; relative paths in it are taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inputs.iter_mut().for_each(|i| fix(&mut i.path));
        self.crosswalk.iter_mut().for_each(fix);
        self.coordinates.iter_mut().for_each(fix);
        self.sectors.iter_mut().for_each(fix);
        self.weights.adjacency.iter_mut().for_each(fix);
        fix(&mut self.out_dir);
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            k: self.k,
            max_iter: self.max_iter,
            tol: self.tol,
            solver: self.solver,
            init: self.init,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("no input files configured".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.top_regions < 2 {
            return Err(Error::Config("top_regions must be at least 2".into()));
        }
        if self.weights.method == WeightsMethod::Adjacency && self.weights.adjacency.is_none() {
            return Err(Error::Config("adjacency weights need an `adjacency` file".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        Ok(())
    }

    /// Every file the run reads.
    fn input_paths(&self) -> Vec<PathBuf> {
        let mut paths: Vec<PathBuf> = self.inputs.iter().map(|i| i.path.clone()).collect();
        paths.extend(self.crosswalk.iter().cloned());
        paths.extend(self.coordinates.iter().cloned());
        paths.extend(self.sectors.iter().cloned());
        paths.extend(self.weights.adjacency.iter().cloned());
        paths
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub years: Vec<i32>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn stage<T>(name: &'static str, out_dir: &Path, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| {
        let marker = out_dir.join(PARTIAL_MARKER);
        let _ = fs::write(&marker, format!("failed in stage {name}: {e}\n"));
        e.in_stage(name)
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_bytes(path, &buf)
}

/// Reads, crosswalks and restricts the configured inputs. Returns the table
/// and the analysed years.
pub fn load_table(cfg: &PipelineConfig) -> Result<(EmploymentTable, Vec<i32>)> {
    let mut tables = Vec::with_capacity(cfg.inputs.len());
    for input in &cfg.inputs {
        let mut format = cfg.format.clone();
        if input.year.is_some() {
            format.default_year = input.year;
        }
        let parsed = parse_csv_file(&input.path, &format)?;
        if parsed.dropped > 0 {
            log::info!("{}: {} suppressed rows dropped", input.path.display(), parsed.dropped);
        }
        if let Some(first) = parsed.row_errors.first() {
            log::warn!(
                "{}: {} unparseable rows skipped (first at {first})",
                input.path.display(),
                parsed.row_errors.len()
            );
        }
        tables.push(parsed.table);
    }
    let table = merge_tables(tables)?;
    let years = if cfg.years.is_empty() { table.years().to_vec() } else { cfg.years.clone() };
    if years.is_empty() {
        return Err(Error::Data("inputs contain no records".into()));
    }
    if let Some(y) = years.iter().find(|y| !table.years().contains(y)) {
        return Err(Error::YearAbsent(*y));
    }
    let table = match &cfg.crosswalk {
        Some(path) => apply_crosswalk(&table, &Crosswalk::load(path)?)?,
        None if years.len() > 1 => {
            return Err(Error::Config(
                "a crosswalk file is required when analysing more than one year".into(),
            ))
        }
        None => table,
    };
    let table = restrict_consistent(&table, &years)?;
    Ok((table, years))
}

fn spatial_weights(cfg: &PipelineConfig, regions: &[String]) -> Result<Option<SpatialWeights>> {
    let w = &cfg.weights;
    let weights = match (w.method, &cfg.coordinates, &w.adjacency) {
        (WeightsMethod::Adjacency, _, Some(path)) => {
            let adj = SpatialWeights::load_adjacency(path)?;
            let adj = if w.row_standardize { adj.row_standardize() } else { adj };
            let known: Vec<String> = regions.iter().filter(|r| adj.labels.contains(r)).cloned().collect();
            adj.subset(&known)?
        }
        (WeightsMethod::Adjacency, _, None) => unreachable!("validated"),
        (_, None, _) => return Ok(None),
        (method, Some(path), _) => {
            let (coords, missing) = RegionCoordinates::load(path)?.restrict(regions.iter().map(String::as_str));
            if !missing.is_empty() {
                log::warn!("{} regions have no coordinates and are left out of spatial statistics", missing.len());
            }
            let source = match method {
                WeightsMethod::Knn => WeightSource::Knn(w.knn),
                _ => WeightSource::InverseDistance(w.power),
            };
            build_weights(&coords, source, w.row_standardize)?
        }
    };
    Ok(Some(weights))
}

/// Runs every stage and returns the manifest written to `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let _ = fs::remove_file(out.join(MANIFEST));
    write_bytes(&out.join(PARTIAL_MARKER), b"running\n")?;
    let mut outputs: Vec<PathBuf> = Vec::new();

    write_bytes(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    outputs.push("config.toml".into());

    let (table, years) = stage("ingest", &out, || {
        let (table, years) = load_table(cfg)?;
        table.save(&out.join("table.lscope"))?;
        Ok((table, years))
    })?;
    outputs.push("table.lscope".into());
    log::info!(
        "{} regions, {} occupations, years {:?}",
        table.regions().len(),
        table.occupations().len(),
        years
    );

    let fit_cfg = cfg.fit_config();
    let (raw, pooled_model) = stage("fit", &out, || {
        let raw = to_pooled_matrix(&table, &years)?;
        let x = tfidf_with_base(&raw, cfg.log_base)?;
        x.save(&out.join("tfidf.csv"))?;
        let model = fit(&x, &fit_cfg)?;
        if !model.converged {
            log::warn!("pooled fit stopped after {} iterations without converging", model.iterations_run);
        }
        save_model(&model, &out.join("pooled/model"))?;
        Ok((raw, model))
    })?;
    outputs.extend(["tfidf.csv", "tfidf.csv.names.csv"].map(PathBuf::from));
    outputs.extend(["w.csv", "h.csv", "trace.csv", "meta.json"].map(|f| Path::new("pooled/model").join(f)));

    let comps = stage("topics", &out, || {
        write_json(&out.join("topics.json"), &summarize_topics(&pooled_model, cfg.top_occupations))?;
        let comps = compose_regions(&pooled_model);
        write_with(&out.join("compositions.csv"), |b| write_compositions_csv(&comps, cfg.k, b))?;
        write_with(&out.join("prevalence.csv"), |b| write_prevalence_table_csv(&comps, cfg.k, b))?;
        Ok(comps)
    })?;
    outputs.extend(["topics.json", "compositions.csv", "prevalence.csv"].map(PathBuf::from));

    if years.len() > 1 {
        let models: Vec<TopicModel> = stage("fit_years", &out, || {
            let models = years
                .par_iter()
                .map(|&y| {
                    let x = tfidf_with_base(&to_matrix(&table, y)?, cfg.log_base)?;
                    let mut m = fit(&x, &fit_cfg)?;
                    m.year = Some(y);
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()?;
            for m in &models {
                let dir = out.join(format!("years/{}", m.year.expect("set above")));
                save_model(m, &dir.join("model"))?;
                write_json(&dir.join("topics.json"), &summarize_topics(m, cfg.top_occupations))?;
            }
            Ok(models)
        })?;
        for y in &years {
            let dir = Path::new("years").join(y.to_string());
            outputs.extend(["w.csv", "h.csv", "trace.csv", "meta.json"].map(|f| dir.join("model").join(f)));
            outputs.push(dir.join("topics.json"));
        }
        stage("align", &out, || {
            let alignment = chain(&models, cfg.alpha, cfg.matching)?;
            log::info!(
                "{} of {} chains persist across all years",
                alignment.persistent_chains().len(),
                cfg.k
            );
            write_json(&out.join("alignment.json"), &alignment.to_json())
        })?;
        outputs.push("alignment.json".into());
    }

    stage("cluster", &out, || {
        let usable: Vec<_> = comps.iter().filter(|c| !c.degenerate).cloned().collect();
        if usable.len() < comps.len() {
            log::warn!("{} regions with empty compositions are not clustered", comps.len() - usable.len());
        }
        let reference = years.last().copied();
        let top = select_top_regions(&usable, &table, cfg.top_regions.min(usable.len()), reference);
        let d = cosine_distance_matrix(&top)?;
        let tree = hierarchical_cluster(&d, cfg.linkage)?;
        write_json(&out.join("dendrogram.json"), &tree.to_json())?;
        write_with(&out.join("heatmap.csv"), |b| d.reordered(&tree.leaf_order()).write_csv(b))
    })?;
    outputs.extend(["dendrogram.json", "heatmap.csv"].map(PathBuf::from));

    let spatial_outputs = stage("spatial", &out, || {
        let mut written = Vec::new();
        let lq = match &cfg.sectors {
            Some(path) => {
                let lq = location_quotient(&raw, &SectorMap::load(path)?)?;
                write_with(&out.join("lq.csv"), |b| lq.write_csv(b))?;
                written.push(PathBuf::from("lq.csv"));
                Some(lq)
            }
            None => None,
        };
        let Some(weights) = spatial_weights(cfg, &raw.region_labels)? else {
            log::info!("no coordinates or adjacency configured; skipping Moran's I");
            return Ok(written);
        };
        let perms = cfg.weights.permutations.map(|n| (n, cfg.seed));
        let topic_vars = RegionVariables {
            regions: comps.iter().map(|c| c.region_code.clone()).collect(),
            names: (1..=cfg.k).map(|t| format!("topic_{t}")).collect(),
            columns: (0..cfg.k).map(|t| comps.iter().map(|c| c.weights[t]).collect()).collect(),
        };
        let mut rows = morans_i_table("topics", &without_constant(topic_vars), &weights, perms)?;
        if let Some(lq) = lq {
            let sector_vars = RegionVariables {
                regions: lq.region_labels.clone(),
                names: lq.sectors.clone(),
                columns: (0..lq.sectors.len()).map(|s| lq.values.column(s).to_vec()).collect(),
            };
            rows.extend(morans_i_table("sectors", &without_constant(sector_vars), &weights, perms)?);
        }
        write_with(&out.join("moran.csv"), |b| write_moran_csv(&rows, b))?;
        written.push(PathBuf::from("moran.csv"));
        Ok(written)
    })?;
    outputs.extend(spatial_outputs);

    let manifest = Manifest {
        config: cfg.clone(),
        years,
        inputs: cfg
            .input_paths()
            .iter()
            .map(|p| {
                Ok(FileHash {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|p| {
                Ok(FileHash {
                    path: p.display().to_string(),
                    sha256: sha256_file(&out.join(p))?,
                })
            })
            .collect::<Result<_>>()?,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    fs::remove_file(out.join(PARTIAL_MARKER)).map_err(|e| Error::io(out.join(PARTIAL_MARKER), e))?;
    Ok(manifest)
}

/// Drops variables that are constant over the regions, which have no
/// defined Moran's I.
fn without_constant(mut vars: RegionVariables) -> RegionVariables {
    let keep: Vec<bool> = vars.columns.iter().map(|c| c.iter().any(|&v| v != c[0])).collect();
    let dropped: Vec<&String> = vars.names.iter().zip(&keep).filter(|(_, k)| !**k).map(|(n, _)| n).collect();
    if !dropped.is_empty() {
        log::warn!("constant variables skipped for Moran's I: {dropped:?}");
    }
    let mut it = keep.iter();
    vars.names.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    vars.columns.retain(|_| *it.next().unwrap());
    vars
}

/// Output files and their hashes, keyed by relative path.
pub fn output_hashes(manifest: &Manifest) -> BTreeMap<&str, &str> {
    manifest.outputs.iter().map(|f| (f.path.as_str(), f.sha256.as_str())).collect()
}
