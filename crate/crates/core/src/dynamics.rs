//! Topic alignment across years.
//!
//! Topics from consecutive yearly fits are compared by the cosine similarity
//! of their occupation distributions. Every pair above the threshold becomes
//! an edge of the dynamics graph; a one-to-one matching over those edges
//! carries topic identities forward so persistent topics keep one chain id.

use std::collections::BTreeSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::TopicModel;

/// `u.v / (|u| |v|)`; errors when either vector is zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("vector lengths {} and {}", u.len(), v.len())));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity("zero vector".into()));
    }
    // sqrt(nu * nv) == nu exactly when u == v, so identical rows score 1.0
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    #[default]
    Greedy,
    Hungarian,
}

impl std::str::FromStr for Matching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Matching::Greedy),
            "hungarian" => Ok(Matching::Hungarian),
            other => Err(Error::Config(format!("unknown matching `{other}`"))),
        }
    }
}

/// Link between topic `topic_a` of one year and `topic_b` of the next
/// (both one-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub topic_a: usize,
    pub topic_b: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAlignment {
    pub year_a: i32,
    pub year_b: i32,
    /// Every pair with similarity strictly above alpha, sorted by (a, b).
    pub edges: Vec<Edge>,
    /// Injective matching over `edges`, in the order it was chosen.
    pub order_map: Vec<Edge>,
}

impl PairAlignment {
    pub fn target_of(&self, topic_a: usize) -> Option<usize> {
        self.order_map.iter().find(|e| e.topic_a == topic_a).map(|e| e.topic_b)
    }
}

/// Cosine similarity between every row of `a` and every row of `b`.
/// Entries involving an all-zero row are `None`.
pub fn similarity_matrix(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<Option<f64>>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("{} vs {} columns", a.ncols(), b.ncols())));
    }
    let (ka, kb) = (a.nrows(), b.nrows());
    let cells: Vec<Option<f64>> = (0..ka * kb)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / kb, c % kb);
            let (ra, rb) = (a.row(i).to_vec(), b.row(j).to_vec());
            cosine_similarity(&ra, &rb).ok()
        })
        .collect();
    Ok(Array2::from_shape_vec((ka, kb), cells).expect("shape"))
}

/// Reorders the columns of `b.h` to follow `a`'s occupation order; errors when
/// the label sets differ.
fn conform_h(a: &TopicModel, b: &TopicModel) -> Result<Array2<f64>> {
    if a.occupation_labels == b.occupation_labels {
        return Ok(b.h.clone());
    }
    let sa: BTreeSet<&String> = a.occupation_labels.iter().collect();
    let sb: BTreeSet<&String> = b.occupation_labels.iter().collect();
    if sa != sb {
        return Err(Error::LabelMismatch {
            only_a: sa.difference(&sb).map(|s| s.to_string()).collect(),
            only_b: sb.difference(&sa).map(|s| s.to_string()).collect(),
        });
    }
    let idx: Vec<usize> = a
        .occupation_labels
        .iter()
        .map(|c| b.occupation_labels.iter().position(|d| d == c).expect("same set"))
        .collect();
    Ok(b.h.select(ndarray::Axis(1), &idx))
}

pub fn align(a: &TopicModel, b: &TopicModel, alpha: f64) -> Result<PairAlignment> {
    align_with(a, b, alpha, Matching::Greedy)
}

pub fn align_with(a: &TopicModel, b: &TopicModel, alpha: f64, matching: Matching) -> Result<PairAlignment> {
    let hb = conform_h(a, b)?;
    let sims = similarity_matrix(&a.h, &hb)?;
    let mut edges = Vec::new();
    for ((i, j), s) in sims.indexed_iter() {
        if let Some(s) = *s {
            if s > alpha {
                edges.push(Edge { topic_a: i + 1, topic_b: j + 1, similarity: s });
            }
        }
    }
    let order_map = match matching {
        Matching::Greedy => greedy_matching(&edges),
        Matching::Hungarian => hungarian_matching(&edges, a.k, b.k, alpha),
    };
    Ok(PairAlignment {
        year_a: a.year.unwrap_or(0),
        year_b: b.year.unwrap_or(1),
        edges,
        order_map,
    })
}

/// Repeatedly takes the most similar pair whose endpoints are both free.
/// Exact ties go to the smaller `(topic_a, topic_b)`.
pub fn greedy_matching(edges: &[Edge]) -> Vec<Edge> {
    let mut sorted = edges.to_vec();
    sorted.sort_by(|x, y| {
        y.similarity
            .total_cmp(&x.similarity)
            .then(x.topic_a.cmp(&y.topic_a))
            .then(x.topic_b.cmp(&y.topic_b))
    });
    let mut used_a = BTreeSet::new();
    let mut used_b = BTreeSet::new();
    let mut out = Vec::new();
    for e in sorted {
        if !used_a.contains(&e.topic_a) && !used_b.contains(&e.topic_b) {
            used_a.insert(e.topic_a);
            used_b.insert(e.topic_b);
            out.push(e);
        }
    }
    out
}

/// Maximum-weight matching over `edges` with weight `similarity - alpha`.
pub fn hungarian_matching(edges: &[Edge], ka: usize, kb: usize, alpha: f64) -> Vec<Edge> {
    let n = ka.max(kb);
    if n == 0 || edges.is_empty() {
        return Vec::new();
    }
    let mut cost = vec![vec![0.0f64; n]; n];
    for e in edges {
        cost[e.topic_a - 1][e.topic_b - 1] = -(e.similarity - alpha);
    }
    let assignment = min_cost_assignment(&cost);
    let mut out: Vec<Edge> = assignment
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            edges
                .iter()
                .find(|e| e.topic_a == i + 1 && e.topic_b == j + 1)
                .copied()
        })
        .collect();
    out.sort_by(|x, y| y.similarity.total_cmp(&x.similarity).then(x.topic_a.cmp(&y.topic_a)));
    out
}

/// Square assignment problem via shortest augmenting paths with potentials.
/// Returns the column assigned to each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainNode {
    pub year: i32,
    pub topic_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub chain_id: usize,
    pub nodes: Vec<ChainNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicAlignment {
    pub alpha: f64,
    pub years: Vec<i32>,
    pub pairs: Vec<PairAlignment>,
    pub chains: Vec<Chain>,
    /// Topic labels per year, indexed like `years`.
    pub labels: Vec<Vec<Option<String>>>,
}

impl TopicAlignment {
    /// Chains with a node in every year.
    pub fn persistent_chains(&self) -> Vec<&Chain> {
        self.chains
            .iter()
            .filter(|c| c.nodes.len() == self.years.len())
            .collect()
    }

    /// Chain id carried by each topic, per year.
    pub fn chain_ids(&self) -> Vec<Vec<usize>> {
        let mut ids: Vec<Vec<usize>> = self.labels.iter().map(|l| vec![0; l.len()]).collect();
        for c in &self.chains {
            for n in &c.nodes {
                let y = self.years.iter().position(|&y| y == n.year).expect("known year");
                ids[y][n.topic_id - 1] = c.chain_id;
            }
        }
        ids
    }

    pub fn to_json(&self) -> serde_json::Value {
        let ids = self.chain_ids();
        let nodes: Vec<_> = self
            .years
            .iter()
            .enumerate()
            .flat_map(|(y, &year)| {
                let ids = &ids[y];
                self.labels[y].iter().enumerate().map(move |(t, label)| {
                    serde_json::json!({
                        "year": year,
                        "topic_id": t + 1,
                        "chain_id": ids[t],
                        "label": label,
                    })
                })
            })
            .collect();
        let edge_json = |p: &PairAlignment, e: &Edge| {
            serde_json::json!({
                "year_a": p.year_a,
                "topic_a": e.topic_a,
                "year_b": p.year_b,
                "topic_b": e.topic_b,
                "similarity": e.similarity,
            })
        };
        let edges: Vec<_> = self
            .pairs
            .iter()
            .flat_map(|p| p.edges.iter().map(move |e| edge_json(p, e)))
            .collect();
        let matches: Vec<_> = self
            .pairs
            .iter()
            .flat_map(|p| p.order_map.iter().map(move |e| edge_json(p, e)))
            .collect();
        let chains: Vec<_> = self.chains.iter().map(|c| &c.nodes).collect();
        serde_json::json!({
            "alpha": self.alpha,
            "years": self.years,
            "nodes": nodes,
            "edges": edges,
            "matches": matches,
            "chains": chains,
        })
    }
}

/// Aligns consecutive models and threads chain ids through the matchings.
///
/// Topics of the first model start chains `1..=k`. A matched topic inherits
/// its predecessor's chain; an unmatched one starts a fresh chain. Models
/// without a year are numbered by position.
pub fn chain(models: &[TopicModel], alpha: f64, matching: Matching) -> Result<TopicAlignment> {
    if models.len() < 2 {
        return Err(Error::Config("chaining needs at least two models".into()));
    }
    let years: Vec<i32> = models
        .iter()
        .enumerate()
        .map(|(i, m)| m.year.unwrap_or(i as i32))
        .collect();
    let mut pairs = Vec::with_capacity(models.len() - 1);
    for (w, ys) in models.windows(2).zip(years.windows(2)) {
        let mut p = align_with(&w[0], &w[1], alpha, matching)?;
        p.year_a = ys[0];
        p.year_b = ys[1];
        pairs.push(p);
    }

    let mut chains: Vec<Chain> = (1..=models[0].k)
        .map(|t| Chain {
            chain_id: t,
            nodes: vec![ChainNode { year: years[0], topic_id: t }],
        })
        .collect();
    // chain index (into `chains`) held by each topic of the current year
    let mut current: Vec<usize> = (0..models[0].k).collect();
    for (step, p) in pairs.iter().enumerate() {
        let next_k = models[step + 1].k;
        let mut next = vec![usize::MAX; next_k];
        for e in &p.order_map {
            let c = current[e.topic_a - 1];
            chains[c].nodes.push(ChainNode { year: p.year_b, topic_id: e.topic_b });
            next[e.topic_b - 1] = c;
        }
        for (t, slot) in next.iter_mut().enumerate() {
            if *slot == usize::MAX {
                let id = chains.len() + 1;
                chains.push(Chain {
                    chain_id: id,
                    nodes: vec![ChainNode { year: p.year_b, topic_id: t + 1 }],
                });
                *slot = chains.len() - 1;
            }
        }
        current = next;
    }

    Ok(TopicAlignment {
        alpha,
        years,
        pairs,
        chains,
        labels: models.iter().map(|m| m.labels.clone()).collect(),
    })
}
