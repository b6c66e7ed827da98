//! Nonnegative matrix factorization `X ~ W H` under the loss
//! `0.5 * ||X - W H||_F^2`.
//!
//! Two solvers are provided. Multiplicative updates (the default) never
//! increase the loss, which the fit records in `objective_trace`. HALS
//! updates one factor column at a time in closed form and usually converges
//! in fewer iterations.

mod io;
mod nndsvd;

use std::str::FromStr;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RegionOccupationMatrix;

pub use io::{load_model, save_model};
pub use nndsvd::{nndsvd_init, InitialFactors};

/// Added to multiplicative-update denominators.
pub const DENOM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    #[serde(alias = "mu")]
    MultiplicativeUpdate,
    Hals,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" | "multiplicative_update" => Ok(Solver::MultiplicativeUpdate),
            "hals" => Ok(Solver::Hals),
            other => Err(Error::Config(format!("unknown solver `{other}` (use mu or hals)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Nndsvd,
    Random,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nndsvd" => Ok(Init::Nndsvd),
            "random" => Ok(Init::Random),
            other => Err(Error::Config(format!("unknown init `{other}` (use nndsvd or random)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    pub solver: Solver,
    pub init: Init,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 15,
            max_iter: 500,
            tol: 1e-6,
            solver: Solver::MultiplicativeUpdate,
            init: Init::Nndsvd,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.k > rows.min(cols) {
            return Err(Error::Config(format!(
                "k = {} exceeds min(R, O) = {}",
                self.k,
                rows.min(cols)
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of fitting bare factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// Objective at initialization followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Initialization actually used (NNDSVD may fall back to random).
    pub init: Init,
}

/// A fitted topic model with the labels of the matrix it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    /// Regions x topics.
    pub w: Array2<f64>,
    /// Topics x occupations.
    pub h: Array2<f64>,
    pub k: usize,
    pub objective_trace: Vec<f64>,
    pub solver: Solver,
    pub init: Init,
    pub seed: u64,
    pub iterations_run: usize,
    pub converged: bool,
    pub region_labels: Vec<String>,
    pub region_names: Vec<String>,
    pub occupation_labels: Vec<String>,
    pub occupation_names: Vec<String>,
    /// Optional user-supplied topic names, one slot per topic.
    pub labels: Vec<Option<String>>,
    pub year: Option<i32>,
}

impl TopicModel {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn set_labels<I, S>(&mut self, labels: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for (slot, l) in self.labels.iter_mut().zip(labels) {
            let l = l.into();
            *slot = if l.is_empty() { None } else { Some(l) };
        }
    }
}

/// `0.5 * sum_ij (X_ij - (W H)_ij)^2`.
pub fn objective(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64> {
    if w.nrows() != x.nrows() || h.ncols() != x.ncols() || w.ncols() != h.nrows() {
        return Err(Error::Shape(format!(
            "X is {:?}, W is {:?}, H is {:?}",
            x.dim(),
            w.dim(),
            h.dim()
        )));
    }
    Ok(residual_half_sq(x, w, h))
}

fn residual_half_sq(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let wh = w.dot(h);
    let mut acc = 0.0;
    Zip::from(x).and(&wh).for_each(|&a, &b| {
        let d = a - b;
        acc += d * d;
    });
    0.5 * acc
}

pub(crate) fn random_init(x: &Array2<f64>, k: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let (r, o) = x.dim();
    let scale = (x.mean().unwrap_or(0.0) / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Array2::from_shape_simple_fn((r, k), || rng.random::<f64>() * scale);
    let h = Array2::from_shape_simple_fn((k, o), || rng.random::<f64>() * scale);
    (w, h)
}

/// Fits factors to a bare nonnegative array.
pub fn fit_factors(x: &Array2<f64>, cfg: &FitConfig) -> Result<Factors> {
    let (rows, cols) = x.dim();
    cfg.validate(rows, cols)?;
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Data("NMF input must be finite and nonnegative".into()));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("input matrix is all zero".into()));
    }

    let (mut w, mut h, init) = match cfg.init {
        Init::Nndsvd => {
            let f = nndsvd_init(x, cfg.k, cfg.seed)?;
            let used = if f.fell_back { Init::Random } else { Init::Nndsvd };
            (f.w, f.h, used)
        }
        Init::Random => {
            let (w, h) = random_init(x, cfg.k, cfg.seed);
            (w, h, Init::Random)
        }
    };

    let mut trace = Vec::with_capacity(cfg.max_iter + 1);
    let mut prev = residual_half_sq(x, &w, &h);
    trace.push(prev);
    let mut converged = prev == 0.0;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iter {
        match cfg.solver {
            Solver::MultiplicativeUpdate => mu_step(x, &mut w, &mut h),
            Solver::Hals => hals_step(x, &mut w, &mut h),
        }
        iterations += 1;
        let cur = residual_half_sq(x, &w, &h);
        if !cur.is_finite() {
            return Err(Error::Numeric(format!("objective became {cur} at iteration {iterations}")));
        }
        trace.push(cur);
        converged = cur == 0.0 || (prev - cur).abs() / prev < cfg.tol;
        prev = cur;
    }

    Ok(Factors {
        w,
        h,
        objective_trace: trace,
        iterations_run: iterations,
        converged,
        init,
    })
}

/// Fits a labelled topic model.
///
/// The matrix is normally TF-IDF weighted, but any nonnegative matrix works.
pub fn fit(x: &RegionOccupationMatrix, cfg: &FitConfig) -> Result<TopicModel> {
    let f = fit_factors(&x.values, cfg)?;
    Ok(TopicModel {
        w: f.w,
        h: f.h,
        k: cfg.k,
        objective_trace: f.objective_trace,
        solver: cfg.solver,
        init: f.init,
        seed: cfg.seed,
        iterations_run: f.iterations_run,
        converged: f.converged,
        region_labels: x.region_labels.clone(),
        region_names: x.region_names.clone(),
        occupation_labels: x.occupation_labels.clone(),
        occupation_names: x.occupation_names.clone(),
        labels: vec![None; cfg.k],
        year: None,
    })
}

fn mu_step(x: &Array2<f64>, w: &mut Array2<f64>, h: &mut Array2<f64>) {
    let numer = w.t().dot(x);
    let denom = w.t().dot(&*w).dot(&*h);
    Zip::from(&mut *h).and(&numer).and(&denom).for_each(|hv, &n, &d| {
        *hv *= n / (d + DENOM_EPS);
    });
    let numer = x.dot(&h.t());
    let denom = w.dot(&h.dot(&h.t()));
    Zip::from(&mut *w).and(&numer).and(&denom).for_each(|wv, &n, &d| {
        *wv *= n / (d + DENOM_EPS);
    });
}

fn hals_step(x: &Array2<f64>, w: &mut Array2<f64>, h: &mut Array2<f64>) {
    let k = w.ncols();
    let xht = x.dot(&h.t());
    let hht = h.dot(&h.t());
    for j in 0..k {
        let d = hht[[j, j]];
        if d <= 0.0 {
            continue;
        }
        for i in 0..w.nrows() {
            let fitted = w.row(i).dot(&hht.column(j));
            w[[i, j]] = (w[[i, j]] + (xht[[i, j]] - fitted) / d).max(0.0);
        }
    }
    let wtx = w.t().dot(x);
    let wtw = w.t().dot(&*w);
    for j in 0..k {
        let d = wtw[[j, j]];
        if d <= 0.0 {
            continue;
        }
        for c in 0..h.ncols() {
            let fitted = wtw.row(j).dot(&h.column(c));
            h[[j, c]] = (h[[j, c]] + (wtx[[j, c]] - fitted) / d).max(0.0);
        }
    }
}

/// Rescales each row of `H` to unit L1 norm and moves the scale into the
/// matching column of `W`, leaving `W H` unchanged.
///
/// Returns the normalized model and the zero-based indices of all-zero topic
/// rows, which are left untouched.
pub fn normalize(model: &TopicModel) -> (TopicModel, Vec<usize>) {
    let mut out = model.clone();
    let mut zero_topics = Vec::new();
    for t in 0..out.k {
        let s: f64 = out.h.row(t).sum();
        if s <= 0.0 {
            zero_topics.push(t);
            continue;
        }
        out.h.row_mut(t).mapv_inplace(|v| v / s);
        out.w.column_mut(t).mapv_inplace(|v| v * s);
    }
    if !zero_topics.is_empty() {
        log::warn!("topics {zero_topics:?} have all-zero occupation weights");
    }
    (out, zero_topics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn model(w: Array2<f64>, h: Array2<f64>) -> TopicModel {
        let k = w.ncols();
        TopicModel {
            region_labels: (0..w.nrows()).map(|i| format!("r{i}")).collect(),
            region_names: (0..w.nrows()).map(|i| format!("r{i}")).collect(),
            occupation_labels: (0..h.ncols()).map(|j| format!("o{j}")).collect(),
            occupation_names: (0..h.ncols()).map(|j| format!("o{j}")).collect(),
            w,
            h,
            k,
            objective_trace: vec![],
            solver: Solver::MultiplicativeUpdate,
            init: Init::Nndsvd,
            seed: 0,
            iterations_run: 0,
            converged: true,
            labels: vec![None; k],
            year: None,
        }
    }

    #[test]
    fn objective_trivial_cases() {
        let x = array![[1.0]];
        assert_eq!(objective(&x, &array![[0.0]], &array![[0.0]]).unwrap(), 0.5);
        let w = array![[1.0, 2.0], [0.0, 1.0]];
        let h = array![[1.0, 0.0, 3.0], [2.0, 1.0, 0.0]];
        assert_eq!(objective(&w.dot(&h), &w, &h).unwrap(), 0.0);
        assert!(matches!(objective(&x, &w, &h), Err(Error::Shape(_))));
    }

    #[test]
    fn objective_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_simple_fn((4, 3), || rng.random::<f64>());
        let w = Array2::from_shape_simple_fn((4, 2), || rng.random::<f64>());
        let h = Array2::from_shape_simple_fn((2, 3), || rng.random::<f64>());
        let mut brute = 0.0;
        for i in 0..4 {
            for j in 0..3 {
                let mut p = 0.0;
                for t in 0..2 {
                    p += w[[i, t]] * h[[t, j]];
                }
                brute += (x[[i, j]] - p).powi(2);
            }
        }
        let got = objective(&x, &w, &h).unwrap();
        assert!((got - 0.5 * brute).abs() < 1e-14);
    }

    #[test]
    fn config_errors() {
        let x = Array2::<f64>::ones((3, 4));
        let bad_k = FitConfig { k: 4, ..FitConfig::default() };
        assert!(matches!(fit_factors(&x, &bad_k), Err(Error::Config(_))));
        let bad_tol = FitConfig { k: 1, tol: 0.0, ..FitConfig::default() };
        assert!(matches!(fit_factors(&x, &bad_tol), Err(Error::Config(_))));
        let zero = Array2::<f64>::zeros((3, 4));
        let ok = FitConfig { k: 1, ..FitConfig::default() };
        assert!(matches!(fit_factors(&zero, &ok), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_entry_is_captured_exactly() {
        let mut x = Array2::<f64>::zeros((3, 4));
        x[[1, 2]] = 5.0;
        let f = fit_factors(&x, &FitConfig { k: 1, ..FitConfig::default() }).unwrap();
        assert!(*f.objective_trace.last().unwrap() < 1e-12);
    }

    #[test]
    fn rank_one_recovered_by_both_solvers() {
        let u = array![1.0, 3.0, 0.5, 2.0, 4.0];
        let v = array![2.0, 0.1, 1.0, 0.0, 3.0, 1.5];
        let x = Array2::from_shape_fn((5, 6), |(i, j)| u[i] * v[j]);
        let norm2 = x.mapv(|e| e * e).sum();
        for solver in [Solver::MultiplicativeUpdate, Solver::Hals] {
            for init in [Init::Nndsvd, Init::Random] {
                let cfg = FitConfig { k: 1, solver, init, seed: 3, tol: 1e-12, ..FitConfig::default() };
                let f = fit_factors(&x, &cfg).unwrap();
                let obj = *f.objective_trace.last().unwrap();
                assert!(obj <= 1e-6 * norm2, "{solver:?}/{init:?}: {obj}");
            }
        }
    }

    #[test]
    fn hals_monotone_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_simple_fn((12, 15), || rng.random::<f64>() * 3.0);
        let cfg = FitConfig { k: 4, solver: Solver::Hals, max_iter: 100, ..FitConfig::default() };
        let a = fit_factors(&x, &cfg).unwrap();
        let b = fit_factors(&x, &cfg).unwrap();
        assert_eq!(a, b);
        for pair in a.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn normalize_transfers_scale() {
        let m = model(array![[1.0], [3.0]], array![[2.0, 2.0]]);
        let (n, zero) = normalize(&m);
        assert!(zero.is_empty());
        assert_eq!(n.h, array![[0.5, 0.5]]);
        assert_eq!(n.w, array![[4.0], [12.0]]);
    }

    #[test]
    fn normalize_flags_zero_topic_and_is_idempotent() {
        let m = model(array![[1.0, 2.0], [3.0, 1.0]], array![[0.0, 0.0], [1.0, 3.0]]);
        let (n, zero) = normalize(&m);
        assert_eq!(zero, vec![0]);
        assert_eq!(n.h.row(0), m.h.row(0));
        let (again, _) = normalize(&n);
        for (a, b) in again.h.iter().zip(n.h.iter()).chain(again.w.iter().zip(n.w.iter())) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn normalize_preserves_product(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Array2::from_shape_simple_fn((6, 3), || rng.random::<f64>() * 10.0);
            let h = Array2::from_shape_simple_fn((3, 8), || rng.random::<f64>());
            let m = model(w, h);
            let (n, _) = normalize(&m);
            let before = m.w.dot(&m.h);
            let after = n.w.dot(&n.h);
            let diff = (&before - &after).mapv(|e| e * e).sum().sqrt();
            let scale = before.mapv(|e| e * e).sum().sqrt();
            prop_assert!(diff / scale < 1e-12);
            for row in n.h.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn mu_trace_nonincreasing_and_nonnegative(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_simple_fn((10, 12), || {
                if rng.random::<f64>() < 0.4 { 0.0 } else { rng.random::<f64>() * 5.0 }
            });
            if x.iter().all(|&v| v == 0.0) { return Ok(()); }
            let cfg = FitConfig { k: 3, max_iter: 60, ..FitConfig::default() };
            let f = fit_factors(&x, &cfg).unwrap();
            prop_assert!(f.w.iter().chain(f.h.iter()).all(|&v| v >= 0.0));
            for pair in f.objective_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-9));
            }
        }
    }
}
