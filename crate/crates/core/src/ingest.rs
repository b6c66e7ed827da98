//! Long-form employment tables: CSV parsing, area-code crosswalks, and
//! conversion to region x occupation matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cache;
use crate::error::{Error, Result, RowError};
use crate::matrix::{is_cache_path, MatrixKind, RegionOccupationMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmploymentRecord {
    pub region_code: String,
    pub region_name: String,
    pub occupation_code: String,
    pub occupation_name: String,
    pub year: i32,
    pub employment: f64,
}

/// Column mapping for an input CSV. Header matching is case-insensitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormatConfig {
    pub area_code: String,
    pub area_name: String,
    pub occupation_code: String,
    pub occupation_title: String,
    pub employment: String,
    /// Year column. When the file has no such column, `default_year` is used.
    pub year: String,
    pub default_year: Option<i32>,
    /// Employment cell values that mark a suppressed estimate.
    pub suppressed_markers: Vec<String>,
    /// Occupation codes to skip. A leading `*` matches by suffix, so
    /// `*-0000` drops OES aggregate rows.
    pub exclude_occupations: Vec<String>,
}

impl Default for FormatConfig {
    fn default() -> Self {
        Self {
            area_code: "AREA".into(),
            area_name: "AREA_NAME".into(),
            occupation_code: "OCC_CODE".into(),
            occupation_title: "OCC_TITLE".into(),
            employment: "TOT_EMP".into(),
            year: "YEAR".into(),
            default_year: None,
            suppressed_markers: vec!["**".into(), "#".into(), String::new()],
            exclude_occupations: Vec::new(),
        }
    }
}

impl FormatConfig {
    fn excludes(&self, occ: &str) -> bool {
        self.exclude_occupations.iter().any(|p| match p.strip_prefix('*') {
            Some(suffix) => occ.ends_with(suffix),
            None => occ == p,
        })
    }
}

/// Functional map from `(year, old_code)` to a canonical region code.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Crosswalk {
    map: BTreeMap<(i32, String), String>,
}

impl Crosswalk {
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i32, S, S)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (year, old, canonical) in entries {
            let old = old.into();
            let canonical = canonical.into();
            match map.get(&(year, old.clone())) {
                Some(existing) if *existing != canonical => {
                    return Err(Error::Data(format!(
                        "crosswalk maps ({year}, {old}) to both {existing} and {canonical}"
                    )));
                }
                _ => {
                    map.insert((year, old), canonical);
                }
            }
        }
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn lookup(&self, year: i32, code: &str) -> Option<&str> {
        self.map.get(&(year, code.to_string())).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (i32, &str, &str)> {
        self.map.iter().map(|((y, o), c)| (*y, o.as_str(), c.as_str()))
    }

    /// Reads a `year,old_code,canonical_code` CSV.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (yc, oc, cc) = (col("year")?, col("old_code")?, col("canonical_code")?);
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let year: i32 = rec[yc].parse().map_err(|_| {
                Error::Format(format!("crosswalk line {}: bad year `{}`", i + 2, &rec[yc]))
            })?;
            entries.push((year, rec[oc].to_string(), rec[cc].to_string()));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

/// Employment records with deterministic, lexicographically ordered index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct EmploymentTable {
    records: Vec<EmploymentRecord>,
    regions: Vec<String>,
    occupations: Vec<String>,
    years: Vec<i32>,
}

impl EmploymentTable {
    /// Builds a table, summing records that share `(region, occupation, year)`.
    ///
    /// Display names are taken from the latest year in which a code appears.
    pub fn from_records(records: impl IntoIterator<Item = EmploymentRecord>) -> Result<Self> {
        let mut merged: BTreeMap<(String, String, i32), f64> = BTreeMap::new();
        let mut region_names: HashMap<String, (i32, String)> = HashMap::new();
        let mut occ_names: HashMap<String, (i32, String)> = HashMap::new();
        for r in records {
            if !(r.employment >= 0.0) || !r.employment.is_finite() {
                return Err(Error::Data(format!(
                    "employment must be finite and nonnegative: {} / {} / {} = {}",
                    r.region_code, r.occupation_code, r.year, r.employment
                )));
            }
            note_name(&mut region_names, &r.region_code, r.year, &r.region_name);
            note_name(&mut occ_names, &r.occupation_code, r.year, &r.occupation_name);
            *merged
                .entry((r.region_code, r.occupation_code, r.year))
                .or_insert(0.0) += r.employment;
        }
        let mut regions = BTreeSet::new();
        let mut occupations = BTreeSet::new();
        let mut years = BTreeSet::new();
        let records = merged
            .into_iter()
            .map(|((region_code, occupation_code, year), employment)| {
                regions.insert(region_code.clone());
                occupations.insert(occupation_code.clone());
                years.insert(year);
                EmploymentRecord {
                    region_name: region_names[&region_code].1.clone(),
                    occupation_name: occ_names[&occupation_code].1.clone(),
                    region_code,
                    occupation_code,
                    year,
                    employment,
                }
            })
            .collect();
        Ok(Self {
            records,
            regions: regions.into_iter().collect(),
            occupations: occupations.into_iter().collect(),
            years: years.into_iter().collect(),
        })
    }

    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
            regions: Vec::new(),
            occupations: Vec::new(),
            years: Vec::new(),
        }
    }

    pub fn records(&self) -> &[EmploymentRecord] {
        &self.records
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn occupations(&self) -> &[String] {
        &self.occupations
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn region_names(&self) -> HashMap<&str, &str> {
        self.records
            .iter()
            .map(|r| (r.region_code.as_str(), r.region_name.as_str()))
            .collect()
    }

    pub fn occupation_names(&self) -> HashMap<&str, &str> {
        self.records
            .iter()
            .map(|r| (r.occupation_code.as_str(), r.occupation_name.as_str()))
            .collect()
    }

    /// Total employment per region, over `year` or over all years.
    pub fn region_totals(&self, year: Option<i32>) -> BTreeMap<&str, f64> {
        let mut totals = BTreeMap::new();
        for r in &self.records {
            if year.is_none_or(|y| y == r.year) {
                *totals.entry(r.region_code.as_str()).or_insert(0.0) += r.employment;
            }
        }
        totals
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["AREA", "AREA_NAME", "OCC_CODE", "OCC_TITLE", "TOT_EMP", "YEAR"])?;
        for r in &self.records {
            w.write_record([
                r.region_code.as_str(),
                r.region_name.as_str(),
                r.occupation_code.as_str(),
                r.occupation_name.as_str(),
                &r.employment.to_string(),
                &r.year.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Writes the binary cache for `.lscope` paths and canonical CSV otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        if is_cache_path(path) {
            cache::write_table(&mut buf, self)?;
        } else {
            self.write_csv(&mut buf)?;
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Loads a table from the binary cache or a canonical CSV.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(cache::MAGIC) {
            return cache::read_table(&mut bytes.as_slice());
        }
        Ok(parse_csv(bytes.as_slice(), &FormatConfig::default())?.table)
    }
}

fn note_name(names: &mut HashMap<String, (i32, String)>, code: &str, year: i32, name: &str) {
    match names.get_mut(code) {
        Some(slot) if year > slot.0 || (year == slot.0 && slot.1.is_empty()) => {
            *slot = (year, name.to_string())
        }
        Some(_) => {}
        None => {
            names.insert(code.to_string(), (year, name.to_string()));
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub table: EmploymentTable,
    /// Rows skipped because their employment cell held a suppression marker.
    pub dropped: usize,
    /// Rows skipped because a cell could not be parsed.
    pub row_errors: Vec<RowError>,
}

/// Parses a long-form employment CSV.
///
/// Unparseable rows are collected into `row_errors`; the call only fails when
/// more than half of the data rows are unparseable.
pub fn parse_csv<R: Read>(input: R, format: &FormatConfig) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let need = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let area = need(&format.area_code)?;
    let area_name = need(&format.area_name)?;
    let occ = need(&format.occupation_code)?;
    let occ_title = need(&format.occupation_title)?;
    let emp = need(&format.employment)?;
    let year_col = match (find(&format.year), format.default_year) {
        (Some(c), _) => Some(c),
        (None, Some(_)) => None,
        (None, None) => return Err(Error::MissingColumn(format.year.clone())),
    };

    let mut records = Vec::new();
    let mut dropped = 0usize;
    let mut row_errors = Vec::new();
    let mut total = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        total += 1;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let occ_code = cell(occ);
        if format.excludes(occ_code) {
            total -= 1;
            continue;
        }
        let emp_cell = cell(emp);
        if format.suppressed_markers.iter().any(|m| m == emp_cell) {
            dropped += 1;
            continue;
        }
        let employment = match parse_number(emp_cell) {
            Some(v) if v >= 0.0 => v,
            _ => {
                row_errors.push(RowError {
                    line,
                    message: format!("unreadable employment `{emp_cell}`"),
                });
                continue;
            }
        };
        let year = match year_col {
            Some(c) => match cell(c).parse::<i32>() {
                Ok(y) => y,
                Err(_) => {
                    row_errors.push(RowError {
                        line,
                        message: format!("unreadable year `{}`", cell(c)),
                    });
                    continue;
                }
            },
            None => format.default_year.expect("checked above"),
        };
        let region_code = cell(area);
        if region_code.is_empty() || occ_code.is_empty() {
            row_errors.push(RowError {
                line,
                message: "empty area or occupation code".into(),
            });
            continue;
        }
        records.push(EmploymentRecord {
            region_code: region_code.to_string(),
            region_name: cell(area_name).to_string(),
            occupation_code: occ_code.to_string(),
            occupation_name: cell(occ_title).to_string(),
            year,
            employment,
        });
    }
    if !row_errors.is_empty() && row_errors.len() * 2 > total {
        return Err(Error::TooManyRowErrors {
            failed: row_errors.len(),
            total,
            first: row_errors[0].clone(),
        });
    }
    for e in &row_errors {
        log::warn!("skipping row: {e}");
    }
    Ok(ParseOutcome {
        table: EmploymentTable::from_records(records)?,
        dropped,
        row_errors,
    })
}

pub fn parse_csv_file(path: &Path, format: &FormatConfig) -> Result<ParseOutcome> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(f, format)
}

fn parse_number(cell: &str) -> Option<f64> {
    let cleaned: String = cell.chars().filter(|c| *c != ',').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Concatenates several tables (e.g. one file per year) into one.
pub fn merge_tables(tables: impl IntoIterator<Item = EmploymentTable>) -> Result<EmploymentTable> {
    EmploymentTable::from_records(tables.into_iter().flat_map(|t| t.records))
}

/// Rewrites region codes through the crosswalk and sums records that collide.
pub fn apply_crosswalk(table: &EmploymentTable, xwalk: &Crosswalk) -> Result<EmploymentTable> {
    if xwalk.is_empty() {
        return Ok(table.clone());
    }
    let records = table.records.iter().map(|r| {
        let mut r = r.clone();
        if let Some(canonical) = xwalk.lookup(r.year, &r.region_code) {
            r.region_code = canonical.to_string();
        }
        r
    });
    let mut out = EmploymentTable::from_records(records)?;
    // Regions renamed by the crosswalk take the name the canonical code
    // itself carries in the input, when it appears there.
    let mut canonical_names: HashMap<String, (i32, String)> = HashMap::new();
    for r in &table.records {
        if out.regions.binary_search(&r.region_code).is_ok() {
            note_name(&mut canonical_names, &r.region_code, r.year, &r.region_name);
        }
    }
    let latest: HashMap<String, String> =
        canonical_names.into_iter().map(|(c, (_, n))| (c, n)).collect();
    for r in &mut out.records {
        if let Some(name) = latest.get(&r.region_code) {
            r.region_name.clone_from(name);
        }
    }
    Ok(out)
}

/// Keeps only regions with at least one record in every year of `years`, and
/// only records from those years.
pub fn restrict_consistent(table: &EmploymentTable, years: &[i32]) -> Result<EmploymentTable> {
    if years.is_empty() {
        return Err(Error::Config("restrict_consistent needs at least one year".into()));
    }
    let wanted: BTreeSet<i32> = years.iter().copied().collect();
    let mut presence: BTreeMap<&str, BTreeSet<i32>> = BTreeMap::new();
    for r in &table.records {
        if wanted.contains(&r.year) {
            presence.entry(&r.region_code).or_default().insert(r.year);
        }
    }
    let keep: BTreeSet<&str> = presence
        .into_iter()
        .filter(|(_, ys)| ys.len() == wanted.len())
        .map(|(c, _)| c)
        .collect();
    if keep.is_empty() {
        return Err(Error::NoConsistentRegions(wanted.into_iter().collect()));
    }
    EmploymentTable::from_records(
        table
            .records
            .iter()
            .filter(|r| wanted.contains(&r.year) && keep.contains(r.region_code.as_str()))
            .cloned(),
    )
}

/// Dense raw matrix for a single year over the table's full index sets.
pub fn to_matrix(table: &EmploymentTable, year: i32) -> Result<RegionOccupationMatrix> {
    if !table.years.contains(&year) {
        return Err(Error::YearAbsent(year));
    }
    fill_matrix(table, |y| y == year)
}

/// Dense raw matrix summing employment over `years` (all years when empty).
pub fn to_pooled_matrix(table: &EmploymentTable, years: &[i32]) -> Result<RegionOccupationMatrix> {
    if let Some(y) = years.iter().find(|y| !table.years.contains(y)) {
        return Err(Error::YearAbsent(*y));
    }
    fill_matrix(table, |y| years.is_empty() || years.contains(&y))
}

fn fill_matrix(
    table: &EmploymentTable,
    include_year: impl Fn(i32) -> bool,
) -> Result<RegionOccupationMatrix> {
    let mut values = Array2::<f64>::zeros((table.regions.len(), table.occupations.len()));
    for r in table.records.iter().filter(|r| include_year(r.year)) {
        let i = table
            .regions
            .binary_search(&r.region_code)
            .expect("record region in index");
        let j = table
            .occupations
            .binary_search(&r.occupation_code)
            .expect("record occupation in index");
        values[[i, j]] += r.employment;
    }
    let region_names = table.region_names();
    let occ_names = table.occupation_names();
    RegionOccupationMatrix::with_names(
        values,
        table.regions.clone(),
        table.occupations.clone(),
        table.regions.iter().map(|c| region_names[c.as_str()].to_string()).collect(),
        table.occupations.iter().map(|c| occ_names[c.as_str()].to_string()).collect(),
        MatrixKind::Raw,
    )
}
