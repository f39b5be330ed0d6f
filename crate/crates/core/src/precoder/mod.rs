//! Unicast and multicast precoder design.
//!
//! The max-min unicast SINR problem under a multicast QoS constraint is
//! solved by the convex-concave procedure: a zero-forcing warm start
//! ([`build_initial_point`]) followed by convexified subproblems
//! ([`ccp_step`]) until the achieved level stops improving.
//!
//! Internally all vectors live in an orthonormal basis of the span of the
//! effective channels, with transmit power normalised to 1. Received powers
//! stay in mW. Components outside that span only consume power, so the
//! reduction loses nothing while shrinking the subproblems.

mod ccp;
mod init;
mod space;

use std::io::Write;

use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::combiner::Combiner;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr, CVector};

pub use ccp::{ccp_step, solve_precoders};
pub use init::{build_initial_point, zero_forcing_directions};

/// Combined channel `g_k = H_k^H w_k` seen by the transmitter for device `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub g: CVector,
    /// Combiner the channel was formed with.
    pub w: CVector,
    /// Post-combining noise power `sigma^2 |w_k|^2` in mW.
    pub noise_mw: f64,
}

/// `g_k = H_k^H w_k` for every device.
pub fn effective_channels(
    channels: &[ChannelMatrix],
    combiners: &[Combiner],
    sigma2_mw: f64,
) -> Result<Vec<EffectiveChannel>> {
    if channels.len() != combiners.len() {
        return Err(Error::invalid(format!(
            "{} channels but {} combiners",
            channels.len(),
            combiners.len()
        )));
    }
    if !(sigma2_mw > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    let n_tx = channels.first().map_or(0, ChannelMatrix::n_tx);
    channels
        .iter()
        .zip(combiners)
        .map(|(h, c)| {
            if h.n_rx() != c.w.len() || h.n_tx() != n_tx {
                return Err(Error::invalid(format!(
                    "channel {}x{} does not match combiner length {} / n_tx {n_tx}",
                    h.n_rx(),
                    h.n_tx(),
                    c.w.len()
                )));
            }
            Ok(EffectiveChannel {
                g: h.entries.adjoint() * &c.w,
                w: c.w.clone(),
                noise_mw: sigma2_mw * norm_sqr(&c.w),
            })
        })
        .collect()
}

/// Whether the precoder carries the multicast layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layering {
    /// Superimposed multicast and unicast layers with the multicast QoS constraint.
    Superposed,
    /// Unicast streams only, with the full power budget.
    UnicastOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecoderParams {
    pub p_tx_mw: f64,
    pub gamma_min: f64,
    pub n_conv: usize,
    pub epsilon: f64,
    pub layering: Layering,
}

impl PrecoderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_tx_mw > 0.0 && self.p_tx_mw.is_finite()) {
            return Err(Error::invalid("transmit power must be positive"));
        }
        if self.layering == Layering::Superposed && !(self.gamma_min > 0.0) {
            return Err(Error::invalid("gamma_min must be positive"));
        }
        if self.n_conv == 0 || !(self.epsilon >= 0.0) {
            return Err(Error::invalid(
                "n_conv must be positive and epsilon nonnegative",
            ));
        }
        Ok(())
    }
}

/// Warm start: zero-forcing unicast beams, dominant-eigenvector
/// multicast beam and LP power split. Powers are in mW.
#[derive(Debug, Clone)]
pub struct InitialPoint {
    pub b: Vec<CVector>,
    pub m: CVector,
    /// Interference plus noise per scheduled device (mW).
    pub t: Vec<f64>,
    pub alpha: f64,
    pub a_unicast: Vec<f64>,
    pub a_multicast: f64,
}

/// One CCP iterate. `t`, `r` are per scheduled device and `p`, `q` per
/// device, all in mW.
#[derive(Debug, Clone)]
pub struct CcpState {
    pub b: Vec<CVector>,
    pub m: CVector,
    pub alpha: f64,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub iteration: usize,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub alpha: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
    pub solver_iterations: usize,
}

/// Writes a convergence trace as CSV.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration",
        "alpha",
        "primal_residual",
        "dual_residual",
        "relative_gap",
        "solver_iterations",
    ])?;
    for e in trace {
        w.write_record([
            e.iteration.to_string(),
            format!("{:.15e}", e.alpha),
            format!("{:.6e}", e.primal_residual),
            format!("{:.6e}", e.dual_residual),
            format!("{:.6e}", e.relative_gap),
            e.solver_iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BeamformingSolution {
    /// Combiners of all devices.
    pub w: Vec<CVector>,
    /// Unicast precoders, in schedule order.
    pub b: Vec<CVector>,
    /// Multicast precoder (zero when no multicast layer is carried).
    pub m: CVector,
    /// Smallest recomputed unicast SINR of the scheduled devices.
    pub alpha: f64,
    /// Number of accepted convexified steps.
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// `sum |b|^2 + |m|^2`.
pub fn transmit_power(b: &[CVector], m: &CVector) -> f64 {
    b.iter().map(norm_sqr).sum::<f64>() + norm_sqr(m)
}

/// Unicast SINR of scheduled device `scheduled[i]` for every `i`, using
/// effective channels.
pub fn unicast_sinrs(links: &[EffectiveChannel], scheduled: &[usize], b: &[CVector]) -> Vec<f64> {
    scheduled
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let g = &links[k].g;
            let gains: Vec<f64> = b.iter().map(|bj| inner(g, bj).norm_sqr()).collect();
            let interference: f64 = gains
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum();
            gains[i] / (interference + links[k].noise_mw)
        })
        .collect()
}

/// Multicast SINR of every device, with all unicast streams as interference.
pub fn multicast_sinrs(links: &[EffectiveChannel], b: &[CVector], m: &CVector) -> Vec<f64> {
    links
        .iter()
        .map(|l| {
            let interference: f64 = b.iter().map(|bj| inner(&l.g, bj).norm_sqr()).sum();
            inner(&l.g, m).norm_sqr() / (interference + l.noise_mw)
        })
        .collect()
}

pub(crate) fn check_schedule(links: &[EffectiveChannel], scheduled: &[usize]) -> Result<()> {
    if links.is_empty() {
        return Err(Error::invalid("no devices"));
    }
    let n_tx = links[0].g.len();
    if links.iter().any(|l| l.g.len() != n_tx) {
        return Err(Error::invalid("effective channels differ in length"));
    }
    if links.iter().any(|l| !(l.noise_mw > 0.0)) {
        return Err(Error::invalid("noise power must be positive"));
    }
    if scheduled.is_empty() {
        return Err(Error::invalid("empty schedule"));
    }
    if scheduled.len() > n_tx {
        return Err(Error::invalid(format!(
            "{} scheduled devices exceed {n_tx} transmit antennas",
            scheduled.len()
        )));
    }
    let mut sorted = scheduled.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != scheduled.len() || sorted.last().is_some_and(|&k| k >= links.len()) {
        return Err(Error::invalid(
            "schedule indices must be distinct and in range",
        ));
    }
    Ok(())
}

pub(crate) fn czero(n: usize) -> CVector {
    CVector::from_element(n, Complex64::new(0.0, 0.0))
}
