//! Spatial weights, Moran's I, and employment location quotients.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{MatrixKind, RegionOccupationMatrix};

const EARTH_RADIUS_KM: f64 = 6371.0088;

pub const UNCLASSIFIED: &str = "unclassified";

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

/// Finds a header column by any of `names`, case-insensitively.
fn column(headers: &csv::StringRecord, names: &[&str]) -> Result<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
        .ok_or_else(|| Error::MissingColumn(names[0].to_string()))
}

fn number(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: `{field}` is not a number")))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionCoordinates {
    coords: BTreeMap<String, (f64, f64)>,
}

impl RegionCoordinates {
    pub fn new(entries: impl IntoIterator<Item = (String, f64, f64)>) -> Result<Self> {
        let mut coords = BTreeMap::new();
        for (code, lat, lon) in entries {
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(Error::Data(format!(
                    "region `{code}` has invalid coordinates ({lat}, {lon})"
                )));
            }
            if coords.insert(code.clone(), (lat, lon)).is_some() {
                return Err(Error::Data(format!("region `{code}` has two coordinate rows")));
            }
        }
        Ok(Self { coords })
    }

    /// Reads `region_code,lat,lon` rows.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let c = column(&headers, &["region_code", "region"])?;
        let la = column(&headers, &["lat", "latitude"])?;
        let lo = column(&headers, &["lon", "lng", "longitude"])?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            entries.push((
                rec[c].trim().to_string(),
                number(&rec[la], line)?,
                number(&rec[lo], line)?,
            ));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(open(path)?)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, code: &str) -> Option<(f64, f64)> {
        self.coords.get(code).copied()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.coords.keys().map(String::as_str)
    }

    /// Keeps only `codes`; also returns the requested codes that had no
    /// coordinates.
    pub fn restrict<'a>(&self, codes: impl IntoIterator<Item = &'a str>) -> (Self, Vec<String>) {
        let mut kept = BTreeMap::new();
        let mut missing = Vec::new();
        for code in codes {
            match self.coords.get(code) {
                Some(&c) => {
                    kept.insert(code.to_string(), c);
                }
                None => missing.push(code.to_string()),
            }
        }
        (Self { coords: kept }, missing)
    }
}

/// Great-circle distance in kilometres between two (lat, lon) points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Knn(usize),
    InverseDistance(f64),
    AdjacencyFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    pub w: Array2<f64>,
    /// Region codes indexing both axes of `w`.
    pub labels: Vec<String>,
    pub row_standardized: bool,
    pub source: WeightSource,
}

impl SpatialWeights {
    pub fn new(w: Array2<f64>, labels: Vec<String>, source: WeightSource) -> Result<Self> {
        let n = labels.len();
        if w.dim() != (n, n) {
            return Err(Error::Shape(format!("{n} labels for a {:?} weight matrix", w.dim())));
        }
        for ((i, j), &v) in w.indexed_iter() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Data(format!("weight ({i}, {j}) = {v} is not a nonnegative number")));
            }
            if i == j && v != 0.0 {
                return Err(Error::Data(format!("region `{}` is its own neighbor", labels[i])));
            }
        }
        Ok(Self {
            w,
            labels,
            row_standardized: false,
            source,
        })
    }

    /// Scales every nonzero row to sum to one. Isolated regions stay zero.
    pub fn row_standardize(mut self) -> Self {
        for mut row in self.w.rows_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|v| v / s);
            }
        }
        self.row_standardized = true;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Reads `region,neighbor[,weight]` rows. Each row sets one directed
    /// entry; list both directions for symmetric adjacency.
    pub fn read_adjacency_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let a = column(&headers, &["region", "region_code", "from"])?;
        let b = column(&headers, &["neighbor", "neighbour", "to"])?;
        let wcol = column(&headers, &["weight"]).ok();
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let weight = match wcol {
                Some(c) => number(&rec[c], line)?,
                None => 1.0,
            };
            entries.push((rec[a].trim().to_string(), rec[b].trim().to_string(), weight));
        }
        let mut labels: Vec<String> = entries.iter().flat_map(|e| [e.0.clone(), e.1.clone()]).collect();
        labels.sort();
        labels.dedup();
        let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut w = Array2::zeros((labels.len(), labels.len()));
        for (x, y, v) in &entries {
            w[[index[x.as_str()], index[y.as_str()]]] = *v;
        }
        Self::new(w, labels, WeightSource::AdjacencyFile)
    }

    pub fn load_adjacency(path: &Path) -> Result<Self> {
        Self::read_adjacency_csv(open(path)?)
    }

    /// The weights among `codes` only, in that order. Row standardization is
    /// redone on the subset when it was applied before.
    pub fn subset(&self, codes: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let idx: Vec<usize> = codes
            .iter()
            .map(|c| index.get(c.as_str()).copied().ok_or_else(|| Error::UnknownRegion(c.clone())))
            .collect::<Result<_>>()?;
        let w = Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| self.w[[idx[i], idx[j]]]);
        let out = Self::new(w, codes.to_vec(), self.source)?;
        Ok(if self.row_standardized { out.row_standardize() } else { out })
    }
}

/// Builds weights from coordinates. Regions are ordered by code.
pub fn build_weights(coords: &RegionCoordinates, source: WeightSource, row_standardize: bool) -> Result<SpatialWeights> {
    let labels: Vec<String> = coords.codes().map(String::from).collect();
    let points: Vec<(f64, f64)> = coords.coords.values().copied().collect();
    let n = labels.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least two regions with coordinates, got {n}")));
    }
    let dist = Array2::from_shape_fn((n, n), |(i, j)| haversine_km(points[i], points[j]));
    let mut w = Array2::zeros((n, n));
    match source {
        WeightSource::Knn(k) => {
            if k == 0 {
                return Err(Error::Config("knn needs k >= 1".into()));
            }
            let k = if k > n - 1 {
                log::warn!("knn k={k} exceeds the {} other regions; using all of them", n - 1);
                n - 1
            } else {
                k
            };
            for i in 0..n {
                // labels are sorted, so index order is code order
                let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                others.sort_by(|&a, &b| dist[[i, a]].total_cmp(&dist[[i, b]]).then(a.cmp(&b)));
                if k < others.len() && dist[[i, others[k - 1]]] == dist[[i, others[k]]] {
                    log::warn!(
                        "region `{}` has tied neighbors at the k={k} cutoff; kept by code order",
                        labels[i]
                    );
                }
                for &j in &others[..k] {
                    w[[i, j]] = 1.0;
                }
            }
        }
        WeightSource::InverseDistance(p) => {
            if !(p > 0.0) {
                return Err(Error::Config(format!("inverse-distance power must be positive, got {p}")));
            }
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    if dist[[i, j]] == 0.0 {
                        return Err(Error::Data(format!(
                            "regions `{}` and `{}` share coordinates; inverse distance is undefined",
                            labels[i], labels[j]
                        )));
                    }
                    w[[i, j]] = dist[[i, j]].powf(-p);
                }
            }
        }
        WeightSource::AdjacencyFile => {
            return Err(Error::Config("adjacency weights come from a file, not coordinates".into()));
        }
    }
    let out = SpatialWeights::new(w, labels, source)?;
    Ok(if row_standardize { out.row_standardize() } else { out })
}

/// Moran's I of `values`, which are aligned with `weights.labels`.
pub fn morans_i(values: &[f64], weights: &SpatialWeights) -> Result<f64> {
    let n = values.len();
    if n != weights.len() {
        return Err(Error::Shape(format!("{n} values for {} weighted regions", weights.len())));
    }
    if n < 3 {
        return Err(Error::Data(format!("Moran's I needs at least three regions, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("values must be finite".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Err(Error::ZeroVariance);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let m2: f64 = z.iter().map(|v| v * v).sum();
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    // per-row partial sums, then a fixed-order total
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = weights.w.row(i);
            let mut cross = 0.0;
            let mut s0 = 0.0;
            for (j, &wij) in row.iter().enumerate() {
                cross += wij * z[j];
                s0 += wij;
            }
            (z[i] * cross, s0)
        })
        .collect();
    let cross: f64 = rows.iter().map(|r| r.0).sum();
    let s0: f64 = rows.iter().map(|r| r.1).sum();
    if s0 == 0.0 {
        return Err(Error::Degenerate("spatial weights are all zero".into()));
    }
    Ok(n as f64 / s0 * cross / m2)
}

/// Moran's I with a one-sided permutation pseudo p-value: the share of
/// `permutations` random relabelings (plus the observed one) with I at least
/// as large as observed.
pub fn morans_i_permutation(
    values: &[f64],
    weights: &SpatialWeights,
    permutations: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let observed = morans_i(values, weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = values.to_vec();
    let mut at_least = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        if morans_i(&shuffled, weights)? >= observed {
            at_least += 1;
        }
    }
    Ok((observed, (at_least + 1) as f64 / (permutations + 1) as f64))
}

/// Per-region variables keyed by region code, e.g. topic prevalence or
/// location quotients read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionVariables {
    pub regions: Vec<String>,
    pub names: Vec<String>,
    /// One column per variable, aligned with `regions`.
    pub columns: Vec<Vec<f64>>,
}

/// Columns that describe a region rather than measure it.
const NON_VARIABLES: &[&str] = &["name", "dominant_topic", "degenerate", "zero_employment"];

impl RegionVariables {
    /// Reads a CSV with a `region` column; every other column except
    /// descriptive ones (`name`, `dominant_topic`, `degenerate`,
    /// `zero_employment`) must be numeric.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let rc = column(&headers, &["region", "region_code"])?;
        let vars: Vec<usize> = (0..headers.len())
            .filter(|&i| i != rc && !NON_VARIABLES.iter().any(|n| headers[i].eq_ignore_ascii_case(n)))
            .collect();
        let mut regions = Vec::new();
        let mut columns = vec![Vec::new(); vars.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            regions.push(rec[rc].trim().to_string());
            for (c, &i) in vars.iter().enumerate() {
                columns[c].push(number(&rec[i], line)?);
            }
        }
        Ok(Self {
            regions,
            names: vars.iter().map(|&i| headers[i].to_string()).collect(),
            columns,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(open(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub group: String,
    pub variable: String,
    pub morans_i: f64,
    pub p_value: Option<f64>,
}

/// Moran's I of every variable over the regions that also have weights.
/// Results are ranked by I, largest first, ties by variable name.
pub fn morans_i_table(
    group: &str,
    vars: &RegionVariables,
    weights: &SpatialWeights,
    permutations: Option<(usize, u64)>,
) -> Result<Vec<MoranResult>> {
    let known: HashMap<&str, usize> = weights.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let keep: Vec<usize> = (0..vars.regions.len())
        .filter(|&r| known.contains_key(vars.regions[r].as_str()))
        .collect();
    if keep.len() < vars.regions.len() {
        log::warn!(
            "{} of {} regions in `{group}` have no spatial weights and are left out",
            vars.regions.len() - keep.len(),
            vars.regions.len()
        );
    }
    let codes: Vec<String> = keep.iter().map(|&r| vars.regions[r].clone()).collect();
    let sub = weights.subset(&codes)?;
    let mut out = Vec::with_capacity(vars.names.len());
    for (name, col) in vars.names.iter().zip(&vars.columns) {
        let values: Vec<f64> = keep.iter().map(|&r| col[r]).collect();
        let (i, p) = match permutations {
            Some((n, seed)) => {
                let (i, p) = morans_i_permutation(&values, &sub, n, seed)?;
                (i, Some(p))
            }
            None => (morans_i(&values, &sub)?, None),
        };
        out.push(MoranResult {
            group: group.to_string(),
            variable: name.clone(),
            morans_i: i,
            p_value: p,
        });
    }
    out.sort_by(|a, b| b.morans_i.total_cmp(&a.morans_i).then_with(|| a.variable.cmp(&b.variable)));
    Ok(out)
}

pub fn write_moran_csv<W: Write>(rows: &[MoranResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "variable", "morans_i", "p_value"])?;
    for r in rows {
        w.write_record([
            r.group.as_str(),
            r.variable.as_str(),
            &r.morans_i.to_string(),
            &r.p_value.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Occupation code to sector code.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SectorMap {
    map: BTreeMap<String, String>,
}

impl SectorMap {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (occ, sector) in entries {
            if let Some(prev) = map.insert(occ.clone(), sector.clone()) {
                if prev != sector {
                    return Err(Error::Data(format!(
                        "occupation `{occ}` mapped to both `{prev}` and `{sector}`"
                    )));
                }
            }
        }
        Ok(Self { map })
    }

    /// Reads `occupation_code,sector_code` rows.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let o = column(&headers, &["occupation_code", "occupation", "occ_code"])?;
        let s = column(&headers, &["sector_code", "sector"])?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            entries.push((rec[o].trim().to_string(), rec[s].trim().to_string()));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(open(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn sector_of(&self, occupation: &str) -> Option<&str> {
        self.map.get(occupation).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationQuotients {
    pub region_labels: Vec<String>,
    pub region_names: Vec<String>,
    /// Sorted sector codes indexing the columns of `values`.
    pub sectors: Vec<String>,
    pub values: Array2<f64>,
    /// Regions with no employment; their rows are zero.
    pub zero_employment: Vec<String>,
}

impl LocationQuotients {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["region".to_string(), "name".to_string(), "zero_employment".to_string()];
        header.extend(self.sectors.iter().cloned());
        w.write_record(&header)?;
        for (i, code) in self.region_labels.iter().enumerate() {
            let mut rec = vec![
                code.clone(),
                self.region_names[i].clone(),
                self.zero_employment.contains(code).to_string(),
            ];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `LQ[r][s] = (e_rs / e_r) / (E_s / E)` on raw employment.
pub fn location_quotient(x: &RegionOccupationMatrix, mapping: &SectorMap) -> Result<LocationQuotients> {
    if x.kind != MatrixKind::Raw {
        return Err(Error::Data("location quotients need raw employment, not TF-IDF".into()));
    }
    if mapping.is_empty() {
        return Err(Error::Config("sector mapping is empty".into()));
    }
    let assigned: Vec<&str> = x
        .occupation_labels
        .iter()
        .map(|o| mapping.sector_of(o).unwrap_or(UNCLASSIFIED))
        .collect();
    let unmapped = x.occupation_labels.iter().filter(|o| mapping.sector_of(o).is_none()).count();
    if unmapped > 0 {
        log::warn!("{unmapped} occupations have no sector and count as `{UNCLASSIFIED}`");
    }
    let mut sectors: Vec<String> = assigned.iter().map(|s| s.to_string()).collect();
    sectors.sort();
    sectors.dedup();
    let col: HashMap<&str, usize> = sectors.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let (nr, ns) = (x.n_regions(), sectors.len());
    let mut e = Array2::<f64>::zeros((nr, ns));
    for r in 0..nr {
        for (o, s) in assigned.iter().enumerate() {
            e[[r, col[s]]] += x.values[[r, o]];
        }
    }
    let sector_totals: Vec<f64> = (0..ns).map(|s| e.column(s).sum()).collect();
    let total: f64 = sector_totals.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("total employment is zero".into()));
    }
    let mut values = Array2::zeros((nr, ns));
    let mut zero_employment = Vec::new();
    for r in 0..nr {
        let er: f64 = e.row(r).sum();
        if er == 0.0 {
            zero_employment.push(x.region_labels[r].clone());
            continue;
        }
        for s in 0..ns {
            if sector_totals[s] > 0.0 {
                values[[r, s]] = (e[[r, s]] / er) / (sector_totals[s] / total);
            }
        }
    }
    if !zero_employment.is_empty() {
        log::warn!("{} regions have zero employment; their quotients are zero", zero_employment.len());
    }
    Ok(LocationQuotients {
        region_labels: x.region_labels.clone(),
        region_names: x.region_names.clone(),
        sectors,
        values,
        zero_employment,
    })
}
