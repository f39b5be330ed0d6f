//! Small dense complex linear-algebra helpers shared by the combiner and
//! precoder modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub(crate) const POWER_ITER_TOL: f64 = 1e-10;
pub(crate) const POWER_ITER_CAP: usize = 10_000;

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `a^H b`.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Rotates `v` so that its largest-magnitude element is real and positive.
/// Ties on magnitude go to the lowest index.
pub fn fix_global_phase(v: &mut CVector) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let rot = v[best].conj() / best_mag;
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Dominant eigenvector of a Hermitian positive semidefinite matrix by power
/// iteration. Returns `None` for the zero matrix.
///
/// The start vector is the column of largest norm, which cannot be orthogonal
/// to the dominant eigenspace of a PSD matrix. The result is unit-norm with
/// its global phase fixed by [`fix_global_phase`].
pub fn dominant_eigvec(a: &CMatrix) -> Option<CVector> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut start = 0;
    let mut start_norm = 0.0;
    for j in 0..n {
        let c: f64 = a.column(j).iter().map(|z| z.norm_sqr()).sum();
        if c > start_norm {
            start_norm = c;
            start = j;
        }
    }
    if start_norm == 0.0 || !start_norm.is_finite() {
        return None;
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut v: CVector = a.column(start).into_owned();
    v /= Complex64::new(v.norm(), 0.0);
    for _ in 0..POWER_ITER_CAP {
        let av = a * &v;
        let lambda = inner(&v, &av).re;
        let resid = (&av - &v * Complex64::new(lambda, 0.0)).norm();
        let nav = av.norm();
        if nav == 0.0 {
            break;
        }
        v = av / Complex64::new(nav, 0.0);
        if resid <= POWER_ITER_TOL * lambda.abs().max(scale * f64::EPSILON) {
            break;
        }
    }
    fix_global_phase(&mut v);
    Some(v)
}

/// Orthonormal basis (as columns) of the span of `vectors`, via SVD.
/// Directions with singular value below `rel_tol * sigma_max` are dropped.
pub fn span_basis(vectors: &[CVector], rel_tol: f64) -> CMatrix {
    let n = vectors.first().map_or(0, |v| v.len());
    if vectors.is_empty() || n == 0 {
        return CMatrix::zeros(n, 0);
    }
    let stacked = CMatrix::from_columns(vectors);
    let svd = stacked.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return CMatrix::zeros(n, 0);
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > rel_tol * smax)
        .map(|(i, _)| i)
        .collect();
    let cols: Vec<CVector> = keep.iter().map(|&i| u.column(i).into_owned()).collect();
    CMatrix::from_columns(&cols)
}
