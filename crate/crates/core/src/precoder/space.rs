use num_complex::Complex64;

use super::EffectiveChannel;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr, span_basis, CMatrix, CVector};

/// Relative singular-value cutoff for the channel span.
const SPAN_TOL: f64 = 1e-12;

/// Orthonormal coordinates for the span of all effective channels, scaled so
/// the power budget is 1. Received powers stay in mW: the convexification of
/// the SINR constraints is not invariant to rescaling the lifted variables.
pub(crate) struct ReducedSpace {
    basis: CMatrix,
    sqrt_power: f64,
    /// Reduced channel of every device, scaled by `sqrt(P_tx)`.
    pub g: Vec<CVector>,
    pub noise: Vec<f64>,
    pub scheduled: Vec<usize>,
}

impl ReducedSpace {
    pub fn new(links: &[EffectiveChannel], scheduled: &[usize], p_tx_mw: f64) -> Result<Self> {
        let raw: Vec<CVector> = links.iter().map(|l| l.g.clone()).collect();
        let basis = span_basis(&raw, SPAN_TOL);
        if basis.ncols() == 0 {
            return Err(Error::SingularConfiguration(
                "all effective channels are zero".into(),
            ));
        }
        let g = links
            .iter()
            .map(|l| basis.adjoint() * &l.g * Complex64::new(p_tx_mw.sqrt(), 0.0))
            .collect();
        Ok(ReducedSpace {
            basis,
            sqrt_power: p_tx_mw.sqrt(),
            g,
            noise: links.iter().map(|l| l.noise_mw).collect(),
            scheduled: scheduled.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn k(&self) -> usize {
        self.g.len()
    }

    pub fn k_prime(&self) -> usize {
        self.scheduled.len()
    }

    pub fn reduce(&self, v: &CVector) -> CVector {
        self.basis.adjoint() * v / Complex64::new(self.sqrt_power, 0.0)
    }

    pub fn expand(&self, c: &CVector) -> CVector {
        &self.basis * c * Complex64::new(self.sqrt_power, 0.0)
    }

    /// Real rows `(re, im)` with `g_k^H c = re . x + j im . x` for `c`
    /// stored as interleaved `(Re, Im)` pairs.
    pub fn rows(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let g = &self.g[k];
        let mut re = Vec::with_capacity(2 * g.len());
        let mut im = Vec::with_capacity(2 * g.len());
        for v in g.iter() {
            re.extend([v.re, v.im]);
            im.extend([-v.im, v.re]);
        }
        (re, im)
    }

    pub fn gain(&self, k: usize, c: &CVector) -> f64 {
        inner(&self.g[k], c).norm_sqr()
    }

    /// Interference plus noise (mW) at device `k` from the listed streams.
    pub fn interference(&self, k: usize, streams: &[CVector], skip: Option<usize>) -> f64 {
        self.noise[k]
            + streams
                .iter()
                .enumerate()
                .filter(|&(j, _)| Some(j) != skip)
                .map(|(_, c)| self.gain(k, c))
                .sum::<f64>()
    }

    pub fn power(c: &[CVector], m: &CVector) -> f64 {
        c.iter().map(norm_sqr).sum::<f64>() + norm_sqr(m)
    }
}

pub(crate) fn from_reals(x: &[f64]) -> CVector {
    CVector::from_iterator(x.len() / 2, x.chunks(2).map(|p| Complex64::new(p[0], p[1])))
}
