//! Readable views of a fitted model: top occupations per topic and the
//! topical composition of each region.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{normalize, TopicModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedOccupation {
    pub code: String,
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    /// One-based topic number.
    pub topic_id: usize,
    pub label: Option<String>,
    pub top: Vec<WeightedOccupation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionComposition {
    pub region_code: String,
    pub region_name: String,
    /// L1-normalized topic weights; all zero when `degenerate`.
    pub weights: Vec<f64>,
    /// The region's row of `W` after topic rows of `H` are L1-normalized.
    pub raw_weights: Vec<f64>,
    /// One-based id of the heaviest topic, `None` for degenerate rows.
    pub dominant_topic: Option<usize>,
    pub degenerate: bool,
}

/// Orders indices by descending value, then by ascending code.
fn ranked(values: &[f64], codes: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| codes[a].cmp(&codes[b])));
    idx
}

/// The `n` heaviest occupations of every topic. Zero-weight occupations are
/// never listed, so sparse topics yield shorter lists.
pub fn summarize_topics(model: &TopicModel, n: usize) -> Vec<TopicSummary> {
    let (model, _) = normalize(model);
    let n_occ = model.occupation_labels.len();
    let n = if n > n_occ {
        log::warn!("requested top {n} occupations but only {n_occ} exist; truncating");
        n_occ
    } else {
        n
    };
    (0..model.k)
        .map(|t| {
            let row: Vec<f64> = model.h.row(t).to_vec();
            let top = ranked(&row, &model.occupation_labels)
                .into_iter()
                .take(n)
                .filter(|&j| row[j] > 0.0)
                .map(|j| WeightedOccupation {
                    code: model.occupation_labels[j].clone(),
                    name: model.occupation_names[j].clone(),
                    weight: row[j],
                })
                .collect();
            TopicSummary {
                topic_id: t + 1,
                label: model.labels.get(t).cloned().flatten(),
                top,
            }
        })
        .collect()
}

pub fn compose_regions(model: &TopicModel) -> Vec<RegionComposition> {
    let (model, _) = normalize(model);
    (0..model.region_labels.len())
        .map(|i| {
            let raw: Vec<f64> = model.w.row(i).to_vec();
            let total: f64 = raw.iter().sum();
            let degenerate = !(total > 0.0);
            let weights = if degenerate {
                vec![0.0; raw.len()]
            } else {
                raw.iter().map(|v| v / total).collect()
            };
            let dominant_topic = if degenerate {
                None
            } else {
                let mut best = 0;
                for (t, &v) in weights.iter().enumerate() {
                    if v > weights[best] {
                        best = t;
                    }
                }
                Some(best + 1)
            };
            RegionComposition {
                region_code: model.region_labels[i].clone(),
                region_name: model.region_names[i].clone(),
                weights,
                raw_weights: raw,
                dominant_topic,
                degenerate,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPrevalence {
    pub region_code: String,
    pub region_name: String,
    pub weight: f64,
}

/// Normalized weight of one topic (one-based id) in every region, heaviest first.
pub fn topic_prevalence(model: &TopicModel, topic_id: usize) -> Result<Vec<RegionPrevalence>> {
    if topic_id == 0 || topic_id > model.k {
        return Err(Error::Config(format!(
            "topic id {topic_id} outside [1, {}]",
            model.k
        )));
    }
    let comps = compose_regions(model);
    let values: Vec<f64> = comps.iter().map(|c| c.weights[topic_id - 1]).collect();
    let codes: Vec<String> = comps.iter().map(|c| c.region_code.clone()).collect();
    Ok(ranked(&values, &codes)
        .into_iter()
        .map(|i| RegionPrevalence {
            region_code: comps[i].region_code.clone(),
            region_name: comps[i].region_name.clone(),
            weight: values[i],
        })
        .collect())
}

pub fn write_compositions_csv<W: Write>(comps: &[RegionComposition], k: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "region".to_string(),
        "name".to_string(),
        "dominant_topic".to_string(),
        "degenerate".to_string(),
    ];
    header.extend((1..=k).map(|t| format!("topic_{t}")));
    header.extend((1..=k).map(|t| format!("raw_topic_{t}")));
    w.write_record(&header)?;
    for c in comps {
        let mut rec = vec![
            c.region_code.clone(),
            c.region_name.clone(),
            c.dominant_topic.map(|t| t.to_string()).unwrap_or_default(),
            c.degenerate.to_string(),
        ];
        rec.extend(c.weights.iter().map(|v| v.to_string()));
        rec.extend(c.raw_weights.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Normalized weight of every topic per region, one column per topic.
pub fn write_prevalence_table_csv<W: Write>(comps: &[RegionComposition], k: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["region".to_string(), "name".to_string()];
    header.extend((1..=k).map(|t| format!("topic_{t}")));
    w.write_record(&header)?;
    for c in comps {
        let mut rec = vec![c.region_code.clone(), c.region_name.clone()];
        rec.extend(c.weights.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_prevalence_csv<W: Write>(rows: &[RegionPrevalence], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "name", "weight"])?;
    for r in rows {
        w.write_record([r.region_code.as_str(), r.region_name.as_str(), &r.weight.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
