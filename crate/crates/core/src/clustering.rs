//! Agglomerative clustering of regions by cosine distance between their
//! topical compositions.

use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::cosine_similarity;
use crate::error::{Error, Result};
use crate::ingest::EmploymentTable;
use crate::topics::RegionComposition;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: Array2<f64>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let n = labels.len();
        if values.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "{n} labels for a {:?} distance matrix",
                values.dim()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[[i, j]];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Data(format!("distance ({i}, {j}) = {v} is not a nonnegative number")));
                }
                if (v - values[[j, i]]).abs() > 1e-12 {
                    return Err(Error::Data(format!("distance matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { labels, values })
    }

    /// Rows and columns reordered by `order`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            values: Array2::from_shape_fn((order.len(), order.len()), |(i, j)| {
                self.values[[order[i], order[j]]]
            }),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(std::iter::once("region").chain(self.labels.iter().map(String::as_str)))?;
        for (i, l) in self.labels.iter().enumerate() {
            w.write_record(
                std::iter::once(l.clone()).chain(self.values.row(i).iter().map(|v| v.to_string())),
            )?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `1 - cos(w_i, w_j)` over the normalized composition vectors.
pub fn cosine_distance_matrix(compositions: &[RegionComposition]) -> Result<DistanceMatrix> {
    let labels: Vec<String> = compositions.iter().map(|c| c.region_code.clone()).collect();
    let rows: Vec<&[f64]> = compositions.iter().map(|c| c.weights.as_slice()).collect();
    cosine_distances(labels, &rows)
}

pub fn cosine_distances(labels: Vec<String>, rows: &[&[f64]]) -> Result<DistanceMatrix> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least two regions to cluster, got {n}")));
    }
    if let Some(i) = rows.iter().position(|r| r.iter().all(|&v| v == 0.0)) {
        return Err(Error::UndefinedSimilarity(format!(
            "region `{}` has an all-zero composition",
            labels[i]
        )));
    }
    let upper: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / n, c % n);
            if i >= j {
                return Ok(0.0);
            }
            Ok((1.0 - cosine_similarity(rows[i], rows[j])?).max(0.0))
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            values[[i, j]] = upper[i * n + j];
            values[[j, i]] = upper[i * n + j];
        }
    }
    Ok(DistanceMatrix { labels, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            other => Err(Error::Config(format!("unknown linkage `{other}`"))),
        }
    }
}

/// One agglomeration step. Leaves are clusters `0..n`; step `s` creates
/// cluster `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub height: f64,
    pub new_cluster: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_labels: Vec<String>,
    pub linkage: Linkage,
}

/// Standard agglomerative clustering with Lance-Williams distance updates.
///
/// Among equally close pairs, the one with the smallest `(min id, max id)`
/// cluster-id key merges first.
pub fn hierarchical_cluster(d: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let d = DistanceMatrix::new(d.labels.clone(), d.values.clone())?;
    let n = d.labels.len();
    let mut dist = d.values.clone();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in (a + 1)..n {
                if !active[b] {
                    continue;
                }
                let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                let cand = (dist[[a, b]], key, a, b);
                best = match best {
                    None => Some(cand),
                    Some(cur) if cand.0 < cur.0 || (cand.0 == cur.0 && cand.1 < cur.1) => Some(cand),
                    keep => keep,
                };
            }
        }
        let (height, (lo, hi), a, b) = best.expect("two active clusters");
        let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let (dka, dkb) = (dist[[k, a]], dist[[k, b]]);
            let merged = match linkage {
                Linkage::Single => dka.min(dkb),
                Linkage::Complete => dka.max(dkb),
                Linkage::Average => (na * dka + nb * dkb) / (na + nb),
            };
            dist[[k, a]] = merged;
            dist[[a, k]] = merged;
        }
        active[b] = false;
        sizes[a] += sizes[b];
        let new_id = n + step;
        ids[a] = new_id;
        merges.push(Merge {
            cluster_a: lo,
            cluster_b: hi,
            height,
            new_cluster: new_id,
            size: sizes[a],
        });
    }

    Ok(Dendrogram {
        merges,
        leaf_labels: d.labels,
        linkage,
    })
}

impl Dendrogram {
    fn children(&self, id: usize) -> Option<(usize, usize, f64)> {
        let n = self.leaf_labels.len();
        (id >= n).then(|| {
            let m = &self.merges[id - n];
            (m.cluster_a, m.cluster_b, m.height)
        })
    }

    fn height_of(&self, id: usize) -> f64 {
        self.children(id).map_or(0.0, |c| c.2)
    }

    fn root(&self) -> Option<usize> {
        match self.leaf_labels.len() {
            0 => None,
            1 => Some(0),
            n => Some(n + self.merges.len() - 1),
        }
    }

    /// Leaf indices in left-to-right dendrogram order.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.leaf_labels.len());
        let mut stack: Vec<usize> = self.root().into_iter().collect();
        while let Some(id) = stack.pop() {
            match self.children(id) {
                Some((a, b, _)) => {
                    stack.push(b);
                    stack.push(a);
                }
                None => out.push(id),
            }
        }
        out
    }

    pub fn newick(&self) -> String {
        fn quote(label: &str) -> String {
            if label.chars().any(|c| "(),:;'[] \t".contains(c)) {
                format!("'{}'", label.replace('\'', "''"))
            } else {
                label.to_string()
            }
        }
        fn walk(d: &Dendrogram, id: usize, out: &mut String) {
            match d.children(id) {
                Some((a, b, h)) => {
                    out.push('(');
                    walk(d, a, out);
                    out.push_str(&format!(":{}", h - d.height_of(a)));
                    out.push(',');
                    walk(d, b, out);
                    out.push_str(&format!(":{}", h - d.height_of(b)));
                    out.push(')');
                }
                None => out.push_str(&quote(&d.leaf_labels[id])),
            }
        }
        let mut s = String::new();
        if let Some(r) = self.root() {
            walk(self, r, &mut s);
        }
        s.push(';');
        s
    }

    /// Flat cluster index per leaf after undoing every merge above `height`.
    /// Clusters are numbered by first appearance in leaf order.
    pub fn cut_at_height(&self, height: f64) -> Vec<usize> {
        let n = self.leaf_labels.len();
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for m in self.merges.iter().filter(|m| m.height <= height) {
            let ra = find(&mut parent, m.cluster_a);
            let rb = find(&mut parent, m.cluster_b);
            parent[ra] = m.new_cluster;
            parent[rb] = m.new_cluster;
        }
        let mut labels = vec![usize::MAX; n];
        let mut seen = std::collections::HashMap::new();
        for leaf in self.leaf_order() {
            let root = find(&mut parent, leaf);
            let next = seen.len();
            labels[leaf] = *seen.entry(root).or_insert(next);
        }
        labels
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "linkage": self.linkage,
            "leaf_labels": self.leaf_labels,
            "merges": self.merges,
            "leaf_order": self.leaf_order(),
            "newick": self.newick(),
        })
    }
}

/// The `n` compositions whose regions employ the most people (in `year`, or
/// over all years), largest first.
pub fn select_top_regions(
    compositions: &[RegionComposition],
    table: &EmploymentTable,
    n: usize,
    year: Option<i32>,
) -> Vec<RegionComposition> {
    let totals = table.region_totals(year);
    let mut ranked: Vec<(&RegionComposition, f64)> = compositions
        .iter()
        .map(|c| (c, totals.get(c.region_code.as_str()).copied().unwrap_or(0.0)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.region_code.cmp(&b.0.region_code)));
    ranked.into_iter().take(n).map(|(c, _)| c.clone()).collect()
}
