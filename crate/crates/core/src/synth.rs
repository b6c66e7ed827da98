//! Seeded synthetic employment corpora with planted topics.
//!
//! Every topic owns a disjoint block of occupations, so TF-IDF rescales each
//! planted topic uniformly and leaves the direction of its occupation profile
//! intact. "Local" occupations are employed in every region and vanish under
//! TF-IDF.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EmploymentRecord, EmploymentTable};

/// A change applied to the planted topics from year index `at` onward.
/// Topic ids are zero-based planted ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlantedEvent {
    /// `absorbed`'s occupations and regions join `into`.
    Merge { into: usize, absorbed: usize, at: usize },
    /// The second half of `topic`'s occupations becomes a new topic with
    /// its own set of regions.
    Split { topic: usize, at: usize },
    Drop { topic: usize, at: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub regions: usize,
    pub occupations: usize,
    pub topics: usize,
    pub seed: u64,
    /// Standard deviation of the relative Gaussian noise on each entry.
    pub noise_level: f64,
    /// Explicit `topics x occupations` profile. Generated block profiles are
    /// used when absent.
    #[serde(skip)]
    pub planted_h: Option<Array2<f64>>,
    pub local_occupation_fraction: f64,
    pub years: usize,
    pub first_year: i32,
    /// Relative log-normal drift of topic weights between consecutive years.
    pub drift: f64,
    pub events: Vec<PlantedEvent>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            regions: 60,
            occupations: 200,
            topics: 8,
            seed: 0,
            noise_level: 0.0,
            planted_h: None,
            local_occupation_fraction: 0.1,
            years: 1,
            first_year: 2014,
            drift: 0.0,
            events: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::Config("synthetic corpus needs at least one topic".into()));
        }
        if self.regions < 2 {
            return Err(Error::Config("synthetic corpus needs at least two regions".into()));
        }
        if self.topics > self.regions.min(self.occupations) {
            return Err(Error::Config(format!(
                "{} topics exceed min(regions, occupations) = {}",
                self.topics,
                self.regions.min(self.occupations)
            )));
        }
        if !(self.noise_level >= 0.0) || !(self.drift >= 0.0) {
            return Err(Error::Config("noise level and drift must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.local_occupation_fraction) {
            return Err(Error::Config("local occupation fraction must lie in [0, 1]".into()));
        }
        if self.years == 0 {
            return Err(Error::Config("synthetic corpus needs at least one year".into()));
        }
        if let Some(h) = &self.planted_h {
            if h.dim() != (self.topics, self.occupations) {
                return Err(Error::Shape(format!(
                    "planted H is {:?}, expected ({}, {})",
                    h.dim(),
                    self.topics,
                    self.occupations
                )));
            }
            if h.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Data("planted H must be finite and nonnegative".into()));
            }
        } else if self.topics > self.topic_occupations() && self.topic_occupations() > 0 {
            return Err(Error::Config(format!(
                "{} topics need at least as many non-local occupations, got {}",
                self.topics,
                self.topic_occupations()
            )));
        }
        Ok(())
    }

    fn local_occupations(&self) -> usize {
        if self.planted_h.is_some() {
            return 0;
        }
        (self.local_occupation_fraction * self.occupations as f64).round() as usize
    }

    fn topic_occupations(&self) -> usize {
        self.occupations - self.local_occupations()
    }
}

/// Ground-truth factors for one year. Row `t` of `h` and column `t` of `w`
/// belong to planted topic `topic_ids[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFactors {
    pub year: i32,
    pub topic_ids: Vec<usize>,
    pub w: Array2<f64>,
    pub h: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub table: EmploymentTable,
    pub planted: Vec<PlantedFactors>,
    pub region_codes: Vec<String>,
    pub occupation_codes: Vec<String>,
    /// Planted topic id of each occupation, `None` for local ones.
    pub occupation_topic: Vec<Option<usize>>,
    /// (latitude, longitude) per region.
    pub coordinates: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct Topic {
    id: usize,
    h: Vec<f64>,
    w: Vec<f64>,
}

fn region_code(i: usize) -> String {
    format!("R{:04}", i + 1)
}

fn occupation_code(j: usize) -> String {
    format!("{:02}-{:04}", 11 + j / 10_000, j % 10_000 + 1)
}

/// Draws which regions carry each topic: every region gets at least one
/// topic, and every topic is present in some but not all regions.
fn draw_presence(rng: &mut ChaCha8Rng, regions: usize, topics: usize) -> Array2<bool> {
    let mut present = Array2::from_elem((regions, topics), false);
    let p = (1.5 / topics as f64).clamp(0.2, 0.5);
    for r in 0..regions {
        for t in 0..topics {
            present[[r, t]] = rng.random_bool(p);
        }
    }
    // give topic t a distinct anchor region so every topic is present
    let mut anchors: Vec<usize> = (0..regions).collect();
    anchors.shuffle(rng);
    for t in 0..topics {
        present[[anchors[t], t]] = true;
    }
    for r in 0..regions {
        if !(0..topics).any(|t| present[[r, t]]) {
            let t = rng.random_range(0..topics);
            present[[r, t]] = true;
        }
    }
    // a topic present everywhere would get zero idf
    for t in 0..topics {
        if (0..regions).all(|r| present[[r, t]]) {
            let spare = (0..regions)
                .find(|&r| r != anchors[t] && (0..topics).filter(|&u| present[[r, u]]).count() > 1);
            match spare {
                Some(r) => present[[r, t]] = false,
                None => log::warn!("planted topic {t} is present in every region"),
            }
        }
    }
    present
}

fn draw_column(rng: &mut ChaCha8Rng, scale: &[f64], p: f64) -> Vec<f64> {
    let mut col: Vec<f64> = scale
        .iter()
        .map(|&s| if rng.random_bool(p) { s * rng.random_range(1.0..10.0) } else { 0.0 })
        .collect();
    if col.iter().all(|&v| v == 0.0) {
        let r = rng.random_range(0..col.len());
        col[r] = scale[r] * rng.random_range(1.0..10.0);
    }
    if col.iter().all(|&v| v > 0.0) {
        let r = rng.random_range(0..col.len());
        col[r] = 0.0;
    }
    col
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (nr, no, k) = (spec.regions, spec.occupations, spec.topics);
    let n_local = spec.local_occupations();
    let n_topic_occ = no - n_local;

    // region size factors, log-normal so totals spread out
    let size = Normal::<f64>::new(0.0, 0.75).expect("valid normal");
    let scale: Vec<f64> = (0..nr).map(|_| size.sample(&mut rng).exp() * 100.0).collect();
    let coordinates: Vec<(f64, f64)> = (0..nr)
        .map(|_| (rng.random_range(25.0..49.0), rng.random_range(-124.0..-67.0)))
        .collect();

    let mut occupation_topic = vec![None; no];
    let profiles: Vec<Vec<f64>> = match &spec.planted_h {
        Some(h) => (0..k).map(|t| h.row(t).to_vec()).collect(),
        None => {
            let mut profiles = vec![vec![0.0; no]; k];
            if n_topic_occ > 0 {
                for j in 0..n_topic_occ {
                    let t = j * k / n_topic_occ;
                    profiles[t][j] = rng.random_range(0.5..1.5);
                    occupation_topic[j] = Some(t);
                }
            }
            profiles
        }
    };

    let present = draw_presence(&mut rng, nr, k);
    let mut topics: Vec<Topic> = (0..k)
        .map(|t| Topic {
            id: t,
            h: profiles[t].clone(),
            w: (0..nr)
                .map(|r| if present[[r, t]] { scale[r] * rng.random_range(1.0..10.0) } else { 0.0 })
                .collect(),
        })
        .collect();
    let local_base: Vec<f64> = (0..n_local).map(|_| rng.random_range(0.5..2.0)).collect();
    let p_column = (1.5 / k as f64).clamp(0.2, 0.5);
    let mut next_id = k;

    let drift = Normal::new(0.0, 1.0).expect("valid normal");
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut planted = Vec::with_capacity(spec.years);
    let mut records = Vec::new();
    let occupation_codes: Vec<String> = (0..no).map(occupation_code).collect();
    let region_codes: Vec<String> = (0..nr).map(region_code).collect();

    for y in 0..spec.years {
        let year = spec.first_year + y as i32;
        if y > 0 && spec.drift > 0.0 {
            for topic in &mut topics {
                for v in topic.w.iter_mut().filter(|v| **v > 0.0) {
                    *v *= (spec.drift * drift.sample(&mut rng)).exp();
                }
            }
        }
        for event in spec.events.iter().filter(|e| event_year(e) == y) {
            apply_event(*event, &mut topics, &mut next_id, &mut rng, &scale, p_column)?;
        }
        for (j, t) in occupation_topic.iter_mut().enumerate().take(n_topic_occ) {
            if spec.planted_h.is_none() {
                *t = topics.iter().find(|tp| tp.h[j] > 0.0).map(|tp| tp.id);
            }
        }

        let kt = topics.len();
        let w = Array2::from_shape_fn((nr, kt), |(r, t)| topics[t].w[r]);
        let h = Array2::from_shape_fn((kt, no), |(t, j)| topics[t].h[j]);
        let mut x = w.dot(&h);
        for r in 0..nr {
            for (l, &base) in local_base.iter().enumerate() {
                x[[r, n_topic_occ + l]] = scale[r] * base * rng.random_range(0.9..1.1);
            }
        }
        if spec.noise_level > 0.0 {
            for v in x.iter_mut() {
                *v = (*v + spec.noise_level * *v * noise.sample(&mut rng)).max(0.0);
            }
        }
        for r in 0..nr {
            for j in 0..no {
                if x[[r, j]] > 0.0 {
                    records.push(EmploymentRecord {
                        region_code: region_codes[r].clone(),
                        region_name: format!("Synthetic Region {}", r + 1),
                        occupation_code: occupation_codes[j].clone(),
                        occupation_name: match occupation_topic[j] {
                            _ if j >= n_topic_occ => format!("Local occupation {}", j - n_topic_occ + 1),
                            Some(t) => format!("Topic {} occupation {}", t + 1, j + 1),
                            None => format!("Occupation {}", j + 1),
                        },
                        year,
                        employment: x[[r, j]],
                    });
                }
            }
        }
        planted.push(PlantedFactors {
            year,
            topic_ids: topics.iter().map(|t| t.id).collect(),
            w,
            h,
        });
    }

    Ok(SynthCorpus {
        table: EmploymentTable::from_records(records)?,
        planted,
        region_codes,
        occupation_codes,
        occupation_topic,
        coordinates,
    })
}

fn event_year(e: &PlantedEvent) -> usize {
    match *e {
        PlantedEvent::Merge { at, .. } | PlantedEvent::Split { at, .. } | PlantedEvent::Drop { at, .. } => at,
    }
}

fn apply_event(
    event: PlantedEvent,
    topics: &mut Vec<Topic>,
    next_id: &mut usize,
    rng: &mut ChaCha8Rng,
    scale: &[f64],
    p_column: f64,
) -> Result<()> {
    let position = |topics: &[Topic], id: usize| {
        topics
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::Config(format!("planted event refers to missing topic {id}")))
    };
    match event {
        PlantedEvent::Merge { into, absorbed, .. } => {
            if into == absorbed {
                return Err(Error::Config("a topic cannot merge with itself".into()));
            }
            let b = position(topics, absorbed)?;
            let gone = topics.remove(b);
            let a = position(topics, into)?;
            let target = &mut topics[a];
            for (h, g) in target.h.iter_mut().zip(&gone.h) {
                *h += g;
            }
            // co-located from now on: the merged topic appears wherever
            // either did, at the heavier weight
            for (w, g) in target.w.iter_mut().zip(&gone.w) {
                *w = w.max(*g);
            }
        }
        PlantedEvent::Split { topic, .. } => {
            let a = position(topics, topic)?;
            let support: Vec<usize> = (0..topics[a].h.len()).filter(|&j| topics[a].h[j] > 0.0).collect();
            if support.len() < 2 {
                return Err(Error::Config(format!("topic {topic} has too few occupations to split")));
            }
            let mut h = vec![0.0; topics[a].h.len()];
            for &j in &support[support.len() / 2..] {
                h[j] = topics[a].h[j];
                topics[a].h[j] = 0.0;
            }
            topics.push(Topic {
                id: *next_id,
                h,
                w: draw_column(rng, scale, p_column),
            });
            *next_id += 1;
        }
        PlantedEvent::Drop { topic, .. } => {
            let a = position(topics, topic)?;
            topics.remove(a);
            // regions left without any topic pick up a surviving one
            for (r, &s) in scale.iter().enumerate() {
                if !topics.is_empty() && topics.iter().all(|t| t.w[r] == 0.0) {
                    let t = rng.random_range(0..topics.len());
                    topics[t].w[r] = s * rng.random_range(1.0..10.0);
                }
            }
        }
    }
    Ok(())
}

impl SynthCorpus {
    /// Writes `table.csv`, planted factors per year, `coordinates.csv`,
    /// `sectors.csv` (planted topic of every occupation), and a header-only
    /// `crosswalk.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.table.save(&dir.join("table.csv"))?;
        for p in &self.planted {
            let mut w = csv::Writer::from_path(dir.join(format!("planted_w_{}.csv", p.year)))?;
            let mut header = vec!["region".to_string()];
            header.extend(p.topic_ids.iter().map(|t| format!("topic_{}", t + 1)));
            w.write_record(&header)?;
            for (r, code) in self.region_codes.iter().enumerate() {
                let mut rec = vec![code.clone()];
                rec.extend(p.w.row(r).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;

            let mut h = csv::Writer::from_path(dir.join(format!("planted_h_{}.csv", p.year)))?;
            let mut header = vec!["topic".to_string()];
            header.extend(self.occupation_codes.iter().cloned());
            h.write_record(&header)?;
            for (t, id) in p.topic_ids.iter().enumerate() {
                let mut rec = vec![format!("topic_{}", id + 1)];
                rec.extend(p.h.row(t).iter().map(|v| v.to_string()));
                h.write_record(&rec)?;
            }
            h.flush().map_err(|e| Error::io(dir, e))?;
        }

        let mut c = csv::Writer::from_path(dir.join("coordinates.csv"))?;
        c.write_record(["region_code", "lat", "lon"])?;
        for (code, (lat, lon)) in self.region_codes.iter().zip(&self.coordinates) {
            c.write_record([code.as_str(), &lat.to_string(), &lon.to_string()])?;
        }
        c.flush().map_err(|e| Error::io(dir, e))?;

        let mut s = csv::Writer::from_path(dir.join("sectors.csv"))?;
        s.write_record(["occupation_code", "sector_code"])?;
        for (code, t) in self.occupation_codes.iter().zip(&self.occupation_topic) {
            let sector = t.map_or_else(|| "local".to_string(), |t| format!("S{:02}", t + 1));
            s.write_record([code.as_str(), &sector])?;
        }
        s.flush().map_err(|e| Error::io(dir, e))?;

        fs::write(dir.join("crosswalk.csv"), "year,old_code,canonical_code\n")
            .map_err(|e| Error::io(dir.join("crosswalk.csv"), e))?;
        Ok(())
    }

    /// Planted employment per region for a year, before noise and without
    /// local occupations.
    pub fn planted_matrix(&self, year: i32) -> Option<Array2<f64>> {
        self.planted.iter().find(|p| p.year == year).map(|p| p.w.dot(&p.h))
    }

    /// Occupation counts per planted topic.
    pub fn topic_sizes(&self) -> BTreeMap<usize, usize> {
        let mut sizes = BTreeMap::new();
        for t in self.occupation_topic.iter().flatten() {
            *sizes.entry(*t).or_insert(0) += 1;
        }
        sizes
    }
}
