//! Nonnegative double SVD initialization.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Factors produced by an initializer.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialFactors {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// True when the SVD did not converge and seeded random factors were used.
    pub fell_back: bool,
}

const SVD_EPS: f64 = 1e-14;
const SVD_MAX_SWEEPS: usize = 10_000;
/// Exact zeros are lifted to `mean(x) * ZERO_FILL` so multiplicative updates
/// can still move them.
const ZERO_FILL: f64 = 1e-4;

/// Deterministic NNDSVD from the leading `k` singular triplets of `x`.
///
/// The first triplet is taken in absolute value. Each later triplet is split
/// into positive and negative parts and the pair with the larger norm product
/// is kept, scaled by `sqrt(sigma * norm_u * norm_v)`.
pub fn nndsvd_init(x: &Array2<f64>, k: usize, fallback_seed: u64) -> Result<InitialFactors> {
    let (r, o) = x.dim();
    if k == 0 || k > r.min(o) {
        return Err(Error::Config(format!("k = {k} must lie in [1, {}]", r.min(o))));
    }
    let mean = x.mean().unwrap_or(0.0);
    let std = x.as_standard_layout();
    let m = DMatrix::from_row_slice(r, o, std.as_slice().expect("standard layout"));
    let Some(svd) = m.try_svd(true, true, SVD_EPS, SVD_MAX_SWEEPS) else {
        log::warn!("SVD did not converge; using seeded random initialization");
        let (w, h) = super::random_init(x, k, fallback_seed);
        return Ok(InitialFactors { w, h, fell_back: true });
    };
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let sigma = svd.singular_values;

    let mut w = Array2::<f64>::zeros((r, k));
    let mut h = Array2::<f64>::zeros((k, o));
    for j in 0..k {
        let uj = Array1::from_iter(u.column(j).iter().copied());
        let vj = Array1::from_iter(vt.row(j).iter().copied());
        let s = sigma[j];
        if j == 0 {
            let scale = s.sqrt();
            w.column_mut(0).assign(&uj.mapv(|v| scale * v.abs()));
            h.row_mut(0).assign(&vj.mapv(|v| scale * v.abs()));
            continue;
        }
        let (up, un) = split(&uj);
        let (vp, vn) = split(&vj);
        let (nup, nun, nvp, nvn) = (norm(&up), norm(&un), norm(&vp), norm(&vn));
        let (a, b, na, nb) = if nup * nvp >= nun * nvn {
            (up, vp, nup, nvp)
        } else {
            (un, vn, nun, nvn)
        };
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let scale = (s * na * nb).sqrt();
        w.column_mut(j).assign(&a.mapv(|v| scale * v / na));
        h.row_mut(j).assign(&b.mapv(|v| scale * v / nb));
    }
    let fill = mean * ZERO_FILL;
    w.mapv_inplace(|v| if v == 0.0 { fill } else { v });
    h.mapv_inplace(|v| if v == 0.0 { fill } else { v });
    Ok(InitialFactors { w, h, fell_back: false })
}

fn split(v: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    (v.mapv(|e| e.max(0.0)), v.mapv(|e| (-e).max(0.0)))
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}
