use nalgebra::DMatrix;
use num_complex::Complex64;

use super::space::ReducedSpace;
use super::{
    check_schedule, czero, CcpState, EffectiveChannel, InitialPoint, Layering, PrecoderParams,
};
use crate::conic::{ConicProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigvec, CMatrix, CVector};

/// Smallest accepted ratio of extreme singular values of the scheduled stack.
const ZF_CONDITION: f64 = 1e-10;
/// Multicast margin used inside the power LP so the warm start stays
/// feasible after rounding.
const GAMMA_MARGIN: f64 = 1e-7;
const POWER_MARGIN: f64 = 1e-9;
/// Reweighting rounds tried when the plain aggregate direction misses the
/// multicast target.
const REWEIGHT_ROUNDS: usize = 50;
/// Interference, relative to the noise power, treated as exact zero.
const NEGLIGIBLE_INTERFERENCE: f64 = 1e-9;

/// Unit-norm zero-forcing directions `G (G^H G)^{-1}`, one per column of
/// the stacked channels.
pub fn zero_forcing_directions(g: &[CVector]) -> Result<Vec<CVector>> {
    let Some(first) = g.first() else {
        return Err(Error::invalid("no channels to null"));
    };
    let n = first.len();
    if g.iter().any(|v| v.len() != n) {
        return Err(Error::invalid("channels differ in length"));
    }
    if g.len() > n {
        return Err(Error::SingularConfiguration(format!(
            "{} channels cannot be separated with {n} antennas",
            g.len()
        )));
    }
    let stack = CMatrix::from_columns(g);
    let svd = stack.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < ZF_CONDITION * smax {
        return Err(Error::SingularConfiguration(format!(
            "scheduled channels are linearly dependent (singular values {smin:e} / {smax:e})"
        )));
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    // U S^{-1} V^H equals G (G^H G)^{-1}
    let inv = DMatrix::from_diagonal(&svd.singular_values.map(|s| Complex64::new(1.0 / s, 0.0)));
    let b = u * inv * v_t;
    Ok(b.column_iter()
        .map(|c| {
            let c = c.into_owned();
            let nrm = c.norm();
            c / Complex64::new(nrm, 0.0)
        })
        .collect())
}

/// Normalised-space iterate shared by the warm start and the CCP loop.
#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub c: Vec<CVector>,
    pub m: CVector,
    pub alpha: f64,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Iterate {
    /// Fills the lifted variables with their tightest values for `(c, m)`.
    pub fn tight(space: &ReducedSpace, c: Vec<CVector>, m: CVector) -> Iterate {
        let sched = &space.scheduled;
        let t: Vec<f64> = sched
            .iter()
            .enumerate()
            .map(|(i, &k)| space.interference(k, &c, Some(i)))
            .collect();
        let r: Vec<f64> = sched
            .iter()
            .enumerate()
            .map(|(i, &k)| space.gain(k, &c[i]))
            .collect();
        let alpha = r
            .iter()
            .zip(&t)
            .map(|(r, t)| r / t)
            .fold(f64::INFINITY, f64::min);
        let p = (0..space.k()).map(|k| space.gain(k, &m)).collect();
        let q = (0..space.k())
            .map(|k| space.interference(k, &c, None))
            .collect();
        Iterate {
            c,
            m,
            alpha,
            t,
            r,
            p,
            q,
        }
    }

    /// Largest relative violation of the power budget and multicast QoS,
    /// evaluated with the original quotient forms.
    pub fn violation(&self, space: &ReducedSpace, params: &PrecoderParams) -> f64 {
        let mut worst = ReducedSpace::power(&self.c, &self.m) - 1.0;
        if params.layering == Layering::Superposed {
            for k in 0..space.k() {
                let sinr = space.gain(k, &self.m) / space.interference(k, &self.c, None);
                worst = worst.max(1.0 - sinr / params.gamma_min);
            }
        }
        worst
    }

    pub fn to_state(&self, space: &ReducedSpace, iteration: usize) -> CcpState {
        CcpState {
            b: self.c.iter().map(|c| space.expand(c)).collect(),
            m: space.expand(&self.m),
            alpha: self.alpha,
            t: self.t.clone(),
            r: self.r.clone(),
            p: self.p.clone(),
            q: self.q.clone(),
            iteration,
            trace: Vec::new(),
        }
    }

    pub fn from_state(space: &ReducedSpace, s: &CcpState) -> Iterate {
        Iterate {
            c: s.b.iter().map(|b| space.reduce(b)).collect(),
            m: space.reduce(&s.m),
            alpha: s.alpha,
            t: s.t.clone(),
            r: s.r.clone(),
            p: s.p.clone(),
            q: s.q.clone(),
        }
    }
}

/// Smallest full-power multicast SNR margin `min_k |g_k^H m|^2 / (gamma n_k)`
/// that leaves room for the LP margins.
fn multicast_margin(space: &ReducedSpace, m: &CVector, gamma_min: f64) -> f64 {
    (0..space.k())
        .map(|k| space.gain(k, m) / (gamma_min * space.noise[k]))
        .fold(f64::INFINITY, f64::min)
}

/// Dominant eigenvector of the aggregate channel `sum_k g_k g_k^H`. When it
/// leaves some device below the multicast target even at full power, the
/// aggregate is reweighted towards the weakest devices for a few rounds and
/// the direction with the best worst-case margin is kept.
fn multicast_direction(space: &ReducedSpace, gamma_min: f64) -> Result<CVector> {
    let d = space.dim();
    let required = 1.0 + 2.0 * GAMMA_MARGIN + POWER_MARGIN;
    let eig = |weights: &[f64]| {
        let mut agg = CMatrix::zeros(d, d);
        for (k, w) in weights.iter().enumerate() {
            let v = &space.g[k];
            agg += v * v.adjoint() * Complex64::new(*w, 0.0);
        }
        dominant_eigvec(&agg)
            .ok_or_else(|| Error::SingularConfiguration("aggregate channel matrix is zero".into()))
    };
    let mut weights = vec![1.0; space.k()];
    let mut best = eig(&weights)?;
    let mut best_margin = multicast_margin(space, &best, gamma_min);
    let mut m = best.clone();
    for _ in 0..REWEIGHT_ROUNDS {
        if best_margin >= required {
            break;
        }
        let margins: Vec<f64> = (0..space.k())
            .map(|k| space.gain(k, &m) / (gamma_min * space.noise[k]))
            .collect();
        let total: f64 = weights
            .iter_mut()
            .zip(&margins)
            .map(|(w, mk)| {
                *w /= mk.max(f64::MIN_POSITIVE);
                *w
            })
            .sum();
        weights.iter_mut().for_each(|w| *w /= total);
        m = eig(&weights)?;
        let margin = multicast_margin(space, &m, gamma_min);
        if margin > best_margin {
            best_margin = margin;
            best = m.clone();
        }
    }
    Ok(best)
}

pub(crate) struct WarmStart {
    pub iterate: Iterate,
    pub a_unicast: Vec<f64>,
    pub a_multicast: f64,
}

pub(crate) fn warm_start(space: &ReducedSpace, params: &PrecoderParams) -> Result<WarmStart> {
    let sched = &space.scheduled;
    let kp = sched.len();
    let d = space.dim();
    let multicast = params.layering == Layering::Superposed;

    let g_sched: Vec<CVector> = sched.iter().map(|&k| space.g[k].clone()).collect();
    let b_hat = zero_forcing_directions(&g_sched)?;

    let m_hat = if multicast {
        multicast_direction(space, params.gamma_min)?
    } else {
        czero(d)
    };

    // |h_{k,j}|^2 and |h_k|^2 in mW per unit of the power budget
    let hkj: Vec<Vec<f64>> = (0..space.k())
        .map(|k| b_hat.iter().map(|b| space.gain(k, b)).collect())
        .collect();
    let hk: Vec<f64> = (0..space.k()).map(|k| space.gain(k, &m_hat)).collect();
    let noise = &space.noise;

    let gamma = params.gamma_min * (1.0 + GAMMA_MARGIN);
    if multicast {
        let slack = hk
            .iter()
            .zip(noise)
            .map(|(h, n)| h / (params.gamma_min * n))
            .fold(f64::INFINITY, f64::min);
        if slack < 1.0 + 2.0 * GAMMA_MARGIN + POWER_MARGIN {
            return Err(Error::ScenarioInfeasible {
                constraint: "multicast QoS (warm-start power allocation)".into(),
                slack,
            });
        }
    }

    // variables: a_1..a_K', then a when the multicast layer is present
    let n_pow = kp + usize::from(multicast);
    let interference_cost: Vec<f64> = (0..kp)
        .map(|j| {
            sched
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &k)| hkj[k][j])
                .sum()
        })
        .collect();
    let base = |extra: usize| {
        let n = n_pow + extra;
        let mut lp = ConicProgram::new(n);
        if multicast {
            // rows divided by the device's noise power
            for k in 0..space.k() {
                let mut row = vec![0.0; n];
                for j in 0..kp {
                    row[j] = gamma * hkj[k][j] / noise[k];
                }
                row[kp] = -hk[k] / noise[k];
                lp.add_linear(row, -gamma);
            }
        }
        let mut budget = vec![0.0; n];
        budget[..n_pow].fill(1.0);
        lp.add_linear(budget, 1.0 - POWER_MARGIN);
        for j in 0..n_pow {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            lp.add_linear(row, 0.0);
        }
        lp
    };

    // stage 1: least total unicast interference
    let mut lp = base(0);
    let mut obj = vec![0.0; n_pow];
    for j in 0..kp {
        obj[j] = -interference_cost[j];
    }
    lp.set_objective(obj);
    let sol = lp.solve()?;
    check_lp(&lp, sol.status, "interference LP")?;
    let least = -sol.objective_value;

    // stage 2: among those optima, the largest worst-case unicast SNR
    let mut lp2 = base(1);
    let n2 = n_pow + 1;
    // Under exact nulling the stage-1 objective is zero up to round-off and
    // the optimality row would only inject round-off coefficients.
    let min_noise = noise.iter().copied().fold(f64::INFINITY, f64::min);
    if interference_cost
        .iter()
        .any(|&c| c > NEGLIGIBLE_INTERFERENCE * min_noise)
    {
        let mut row = vec![0.0; n2];
        row[..kp].copy_from_slice(&interference_cost);
        lp2.add_linear(row, least + 1e-9 * (1.0 + least.abs()));
    }
    for (j, &k) in sched.iter().enumerate() {
        let mut row = vec![0.0; n2];
        row[j] = -hkj[k][j] / noise[k];
        row[n_pow] = 1.0;
        lp2.add_linear(row, 0.0);
    }
    let mut obj = vec![0.0; n2];
    obj[n_pow] = 1.0;
    lp2.set_objective(obj);
    let sol2 = lp2.solve()?;
    check_lp(&lp2, sol2.status, "power-split LP")?;

    let a: Vec<f64> = sol2.x[..n_pow].iter().map(|v| v.max(0.0)).collect();
    let a_multicast = if multicast { a[kp] } else { 0.0 };
    let c: Vec<CVector> = b_hat
        .iter()
        .zip(&a)
        .map(|(b, &aj)| b * Complex64::new(aj.sqrt(), 0.0))
        .collect();
    let m = &m_hat * Complex64::new(a_multicast.sqrt(), 0.0);
    let iterate = Iterate::tight(space, c, m);
    let viol = iterate.violation(space, params);
    if viol > 1e-9 {
        return Err(Error::InternalConsistency {
            message: format!("warm start violates the power or multicast constraints by {viol:e}"),
            dump: lp2.dump(),
        });
    }
    Ok(WarmStart {
        iterate,
        a_unicast: a[..kp].to_vec(),
        a_multicast,
    })
}

fn check_lp(lp: &ConicProgram, status: SolveStatus, what: &str) -> Result<()> {
    match status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => Err(Error::ScenarioInfeasible {
            constraint: format!("multicast QoS ({what})"),
            slack: 0.0,
        }),
        other => Err(Error::InternalConsistency {
            message: format!("{what} ended with status {other:?}"),
            dump: lp.dump(),
        }),
    }
}

/// Zero-forcing warm start with powers from the interference LP. Powers and
/// lifted quantities are returned in mW.
pub fn build_initial_point(
    links: &[EffectiveChannel],
    scheduled: &[usize],
    params: &PrecoderParams,
) -> Result<InitialPoint> {
    params.validate()?;
    check_schedule(links, scheduled)?;
    let space = ReducedSpace::new(links, scheduled, params.p_tx_mw)?;
    let ws = warm_start(&space, params)?;
    let state = ws.iterate.to_state(&space, 0);
    Ok(InitialPoint {
        b: state.b,
        m: state.m,
        t: state.t,
        alpha: state.alpha,
        a_unicast: ws.a_unicast.iter().map(|a| a * params.p_tx_mw).collect(),
        a_multicast: ws.a_multicast * params.p_tx_mw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| {
            Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        })
    }

    fn link(g: CVector) -> EffectiveChannel {
        EffectiveChannel {
            w: CVector::from_element(1, Complex64::new(1.0, 0.0)),
            g,
            noise_mw: 10.0,
        }
    }

    fn params() -> PrecoderParams {
        PrecoderParams {
            p_tx_mw: 10f64.powf(3.5),
            gamma_min: 4.0,
            n_conv: 20,
            epsilon: 1e-3,
            layering: Layering::Superposed,
        }
    }

    proptest! {
        #[test]
        fn zero_forcing_nulls_other_channels(seed in any::<u64>(), n in 2usize..9, kp in 1usize..5) {
            prop_assume!(kp <= n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g: Vec<CVector> = (0..kp).map(|_| random_vec(&mut rng, n)).collect();
            let b = zero_forcing_directions(&g).unwrap();
            for (j, bj) in b.iter().enumerate() {
                prop_assert!((bj.norm() - 1.0).abs() < 1e-12);
                for (i, gi) in g.iter().enumerate() {
                    let v = inner(gi, bj).norm();
                    if i == j {
                        prop_assert!(v > 1e-6);
                    } else {
                        prop_assert!(v < 1e-10 * gi.norm());
                    }
                }
            }
        }
    }

    #[test]
    fn single_channel_gives_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_vec(&mut rng, 4);
        let b = zero_forcing_directions(std::slice::from_ref(&g)).unwrap();
        let expected = &g / Complex64::new(g.norm(), 0.0);
        assert!((&b[0] - expected).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_channels_are_their_own_directions() {
        let e = |i: usize, v: f64| {
            let mut x = CVector::zeros(3);
            x[i] = Complex64::new(0.0, v);
            x
        };
        let g = vec![e(0, 2.0), e(2, -0.5)];
        let b = zero_forcing_directions(&g).unwrap();
        for (bj, gj) in b.iter().zip(&g) {
            let want = gj / Complex64::new(gj.norm(), 0.0);
            assert!((bj - want).norm() < 1e-12);
        }
    }

    #[test]
    fn dependent_channels_are_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_vec(&mut rng, 4);
        let g2 = &g * Complex64::new(0.0, 3.0);
        assert!(matches!(
            zero_forcing_directions(&[g, g2]),
            Err(Error::SingularConfiguration(_))
        ));
        let many: Vec<CVector> = (0..3).map(|_| random_vec(&mut rng, 2)).collect();
        assert!(matches!(
            zero_forcing_directions(&many),
            Err(Error::SingularConfiguration(_))
        ));
    }

    #[test]
    fn warm_start_is_feasible_and_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let links: Vec<EffectiveChannel> = (0..5).map(|_| link(random_vec(&mut rng, 8))).collect();
        let p = params();
        let space = ReducedSpace::new(&links, &[0, 3], p.p_tx_mw).unwrap();
        let ws = warm_start(&space, &p).unwrap();
        let it = &ws.iterate;
        assert!(it.violation(&space, &p) <= 1e-9);
        assert!(ws.a_unicast.iter().all(|&a| a >= 0.0));
        assert!(ws.a_unicast.iter().sum::<f64>() + ws.a_multicast <= 1.0 + 1e-12);
        // zero-forcing leaves only noise on the scheduled devices
        for (i, &k) in space.scheduled.iter().enumerate() {
            assert!((it.t[i] - space.noise[k]).abs() <= 1e-9 * space.noise[k]);
        }
    }

    #[test]
    fn unreachable_multicast_target_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let links: Vec<EffectiveChannel> = (0..3).map(|_| link(random_vec(&mut rng, 4))).collect();
        let p = PrecoderParams {
            gamma_min: 1e9,
            ..params()
        };
        let space = ReducedSpace::new(&links, &[1], p.p_tx_mw).unwrap();
        match warm_start(&space, &p) {
            Err(Error::ScenarioInfeasible { slack, .. }) => assert!(slack < 1.0),
            other => panic!(
                "expected infeasibility, got {:?}",
                other.map(|w| w.a_multicast)
            ),
        }
    }

    #[test]
    fn unicast_only_warm_start_spends_the_budget_on_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let links: Vec<EffectiveChannel> = (0..4).map(|_| link(random_vec(&mut rng, 6))).collect();
        let p = PrecoderParams {
            layering: Layering::UnicastOnly,
            ..params()
        };
        let space = ReducedSpace::new(&links, &[0, 1, 2], p.p_tx_mw).unwrap();
        let ws = warm_start(&space, &p).unwrap();
        assert_eq!(ws.a_multicast, 0.0);
        let total: f64 = ws.a_unicast.iter().sum();
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }
}
