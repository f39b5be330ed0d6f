//! Constant-modulus, finite-resolution receive combiners.
//!
//! Each device steers along the dominant left singular vector of its channel
//! and then rounds every element to the nearest phase of its codebook.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigvec, CVector};

/// Phases `delta * exp(j 2 pi i / l_rx)`, `i = 0..l_rx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCodebook {
    pub l_rx: usize,
    pub delta_rx: f64,
}

impl PhaseCodebook {
    /// Codebook whose combiners spend exactly `p_rx_mw` over `n_rx` elements.
    pub fn new(l_rx: usize, p_rx_mw: f64, n_rx: usize) -> Result<Self> {
        if l_rx == 0 || n_rx == 0 {
            return Err(Error::invalid("codebook needs l_rx >= 1 and n_rx >= 1"));
        }
        if !(p_rx_mw > 0.0) {
            return Err(Error::invalid("receive power must be positive"));
        }
        Ok(PhaseCodebook {
            l_rx,
            delta_rx: (p_rx_mw / n_rx as f64).sqrt(),
        })
    }

    pub fn element(&self, index: usize) -> Complex64 {
        Complex64::from_polar(self.delta_rx, 2.0 * PI * index as f64 / self.l_rx as f64)
    }

    /// Index of the element maximizing `Re{conj(phi) * r}`, i.e. the phase
    /// nearest to `arg r`. Equidistant phases resolve to the smaller index.
    pub fn nearest_index(&self, r: Complex64) -> usize {
        let l = self.l_rx;
        if r.norm_sqr() == 0.0 {
            return 0;
        }
        let mut pos = r.arg() / (2.0 * PI) * l as f64;
        if pos < 0.0 {
            pos += l as f64;
        }
        let lo = (pos.floor() as usize) % l;
        let hi = (lo + 1) % l;
        let score = |i: usize| (self.element(i).conj() * r).re;
        let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
        if score(b) > score(a) {
            b
        } else {
            a
        }
    }
}

/// A designed combiner and the codebook indices of its elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    pub w: CVector,
    pub indices: Vec<usize>,
}

/// Dominant eigenvector of `H H^H` (unit norm, largest element real-positive).
pub fn principal_eigvec(h: &ChannelMatrix) -> Result<CVector> {
    let gram = &h.entries * h.entries.adjoint();
    dominant_eigvec(&gram).ok_or_else(|| Error::invalid("channel matrix is zero"))
}

/// Projects the principal eigenvector onto the codebook element by element.
pub fn design_combiner(h: &ChannelMatrix, codebook: &PhaseCodebook) -> Result<Combiner> {
    let r = principal_eigvec(h)?;
    let indices: Vec<usize> = r.iter().map(|&z| codebook.nearest_index(z)).collect();
    let w = CVector::from_iterator(indices.len(), indices.iter().map(|&i| codebook.element(i)));
    Ok(Combiner { w, indices })
}

/// Combiners for every device.
pub fn design_combiners(
    channels: &[ChannelMatrix],
    codebook: &PhaseCodebook,
) -> Result<Vec<Combiner>> {
    channels
        .iter()
        .map(|h| design_combiner(h, codebook))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel_set, AngleRanges, ArrayGeometry};
    use crate::linalg::{norm_sqr, CMatrix};

    fn chans(n_rx: usize, k: usize, seed: u64) -> Vec<ChannelMatrix> {
        let geom = ArrayGeometry::new(8, n_rx).unwrap();
        draw_channel_set(5, seed, k, &geom, 3, &AngleRanges::default()).unwrap()
    }

    #[test]
    fn single_antenna_combiner() {
        let cb = PhaseCodebook::new(4, 1.0, 1).unwrap();
        let c = design_combiner(&chans(1, 1, 0)[0], &cb).unwrap();
        assert_eq!(c.indices, vec![0]);
        assert!((c.w[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rank_one_channel_recovers_left_vector() {
        let u = CVector::from_vec(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]);
        let v = CVector::from_vec(vec![
            Complex64::new(1.0, 1.0),
            Complex64::new(-0.5, 2.0),
            Complex64::new(0.3, 0.0),
        ]);
        let h = ChannelMatrix::from_entries(&u * v.adjoint());
        let r = principal_eigvec(&h).unwrap();
        let phase = crate::linalg::inner(&u, &r);
        assert!((phase.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn diagonal_gram_picks_largest_axis() {
        let mut e = CMatrix::zeros(3, 3);
        e[(0, 0)] = Complex64::new(1.0, 0.0);
        e[(1, 1)] = Complex64::new(3.0, 0.0);
        e[(2, 2)] = Complex64::new(2.0, 0.0);
        let r = principal_eigvec(&ChannelMatrix::from_entries(e)).unwrap();
        assert!((r[1] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_channel_rejected() {
        let h = ChannelMatrix::from_entries(CMatrix::zeros(2, 4));
        assert!(principal_eigvec(&h).is_err());
        assert!(design_combiner(&h, &PhaseCodebook::new(4, 1.0, 2).unwrap()).is_err());
    }

    #[test]
    fn eigvec_matches_dense_eigensolver() {
        for (i, h) in chans(4, 20, 1).iter().enumerate() {
            let r = principal_eigvec(h).unwrap();
            let achieved = (r.adjoint() * &h.entries).norm();
            let svd = h.entries.clone().svd(false, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            assert!(
                (achieved - smax).abs() <= 1e-8 * smax.max(1.0),
                "device {i}: {achieved} vs {smax}"
            );
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn high_resolution_phase_error_bound() {
        let cb = PhaseCodebook::new(1024, 1.0, 4).unwrap();
        for h in chans(4, 10, 2) {
            let r = principal_eigvec(&h).unwrap();
            let c = design_combiner(&h, &cb).unwrap();
            for (z, w) in r.iter().zip(c.w.iter()) {
                let mut d = (w.arg() - z.arg()).abs();
                if d > PI {
                    d = 2.0 * PI - d;
                }
                assert!(d <= PI / 1024.0 + 1e-12);
            }
        }
    }

    #[test]
    fn projection_matches_codebook_enumeration() {
        let cb = PhaseCodebook::new(4, 1.0, 3).unwrap();
        for h in chans(3, 25, 3) {
            let r = principal_eigvec(&h).unwrap();
            let c = design_combiner(&h, &cb).unwrap();
            for (l, z) in r.iter().enumerate() {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for i in 0..4 {
                    let phi = Complex64::from_polar(cb.delta_rx, 2.0 * PI * i as f64 / 4.0);
                    let s = (phi.conj() * z).re;
                    if s > best_score {
                        best_score = s;
                        best = i;
                    }
                }
                assert_eq!(c.indices[l], best);
            }
            assert!((norm_sqr(&c.w) - 1.0).abs() < 1e-12);
            for w in c.w.iter() {
                assert!((w.norm() - cb.delta_rx).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equidistant_phase_goes_to_smaller_index() {
        let cb = PhaseCodebook::new(4, 1.0, 1).unwrap();
        // exactly between index 0 (0 rad) and index 1 (pi/2)
        assert_eq!(cb.nearest_index(Complex64::new(1.0, 1.0)), 0);
        // between index 3 (3pi/2) and index 0 (wraps)
        assert_eq!(cb.nearest_index(Complex64::new(1.0, -1.0)), 0);
    }

    #[test]
    fn quantized_gain_improves_with_resolution() {
        let hs = chans(4, 40, 4);
        let mut prev = 0.0;
        for l in [2, 4, 8, 16] {
            let cb = PhaseCodebook::new(l, 1.0, 4).unwrap();
            let total: f64 = hs
                .iter()
                .map(|h| (design_combiner(h, &cb).unwrap().w.adjoint() * &h.entries).norm_squared())
                .sum();
            assert!(total >= prev, "L_rx={l}");
            prev = total;
        }
    }
}
