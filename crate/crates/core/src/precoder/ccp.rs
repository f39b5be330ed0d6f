use super::init::{warm_start, Iterate};
use super::space::{from_reals, ReducedSpace};
use super::{
    check_schedule, unicast_sinrs, BeamformingSolution, CcpState, EffectiveChannel, Layering,
    PrecoderParams, TraceEntry,
};
use crate::conic::{AffineExpr, ConicProgram, ConicSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::CVector;
use num_complex::Complex64;

/// Accepted relative violation of power and multicast QoS for an iterate.
const FEASIBILITY_TOL: f64 = 1e-7;

/// Multiples of the momentum weight tried when extrapolating.
const EXTRAPOLATION_STRETCH: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Variable offsets of one convexified subproblem.
struct Layout {
    d2: usize,
    kp: usize,
    k: usize,
    multicast: bool,
}

impl Layout {
    fn new(space: &ReducedSpace, layering: Layering) -> Self {
        Layout {
            d2: 2 * space.dim(),
            kp: space.k_prime(),
            k: space.k(),
            multicast: layering == Layering::Superposed,
        }
    }
    fn b(&self, j: usize) -> usize {
        j * self.d2
    }
    fn m(&self) -> usize {
        self.kp * self.d2
    }
    fn alpha(&self) -> usize {
        self.kp * self.d2 + if self.multicast { self.d2 } else { 0 }
    }
    fn t(&self, i: usize) -> usize {
        self.alpha() + 1 + i
    }
    fn r(&self, i: usize) -> usize {
        self.alpha() + 1 + self.kp + i
    }
    fn p(&self, k: usize) -> usize {
        self.alpha() + 1 + 2 * self.kp + k
    }
    fn q(&self, k: usize) -> usize {
        self.p(0) + self.k + k
    }
    fn len(&self) -> usize {
        if self.multicast {
            self.q(0) + self.k
        } else {
            self.p(0)
        }
    }
    /// Number of precoder coordinates (unicast streams, then multicast).
    fn beams(&self) -> usize {
        self.alpha()
    }
}

fn place(row: &mut [f64], offset: usize, coeffs: &[f64], scale: f64) {
    for (i, c) in coeffs.iter().enumerate() {
        row[offset + i] += scale * c;
    }
}

/// Linear under-estimate `2 Re{conj(z0) g^H x} - |z0|^2` of `|g^H x|^2`
/// around the point where `g^H x = z0`, returned as `(coeffs, constant)`
/// over the beam block.
fn tangent(re: &[f64], im: &[f64], z0_re: f64, z0_im: f64) -> (Vec<f64>, f64) {
    let coeffs = re
        .iter()
        .zip(im)
        .map(|(a, b)| 2.0 * (z0_re * a + z0_im * b))
        .collect();
    (coeffs, -(z0_re * z0_re + z0_im * z0_im))
}

fn build_subproblem(space: &ReducedSpace, it: &Iterate, params: &PrecoderParams) -> ConicProgram {
    let lay = Layout::new(space, params.layering);
    let n = lay.len();
    let mut prog = ConicProgram::new(n);
    let mut obj = vec![0.0; n];
    obj[lay.alpha()] = 1.0;
    prog.set_objective(obj);
    let sched = &space.scheduled;

    for (i, &k) in sched.iter().enumerate() {
        let (re, im) = space.rows(k);
        // R1-1: r_i <= tangent of |g_k^H b_i|^2 at the previous beam
        let z0 = crate::linalg::inner(&space.g[k], &it.c[i]);
        let (tan, c0) = tangent(&re, &im, z0.re, z0.im);
        let mut row = vec![0.0; n];
        row[lay.r(i)] = 1.0;
        place(&mut row, lay.b(i), &tan, -1.0);
        prog.add_linear(row, c0);

        // R1-2: interference from other scheduled streams plus noise <= t_i
        let mut factor = Vec::with_capacity(2 * (lay.kp - 1));
        for j in (0..lay.kp).filter(|&j| j != i) {
            for coeffs in [&re, &im] {
                let mut f = vec![0.0; n];
                place(&mut f, lay.b(j), coeffs, 1.0);
                factor.push(f);
            }
        }
        let mut lin = vec![0.0; n];
        lin[lay.t(i)] = -1.0;
        prog.add_quadratic(factor, lin, space.noise[k]);

        // R1-3: (alpha + t)^2 - 4 r minus the tangent of (alpha - t)^2
        let c0 = it.alpha - it.t[i];
        let mut f = vec![0.0; n];
        f[lay.alpha()] = 1.0;
        f[lay.t(i)] = 1.0;
        let mut lin = vec![0.0; n];
        lin[lay.r(i)] = -4.0;
        lin[lay.alpha()] = -2.0 * c0;
        lin[lay.t(i)] = 2.0 * c0;
        prog.add_quadratic(vec![f], lin, c0 * c0);
    }

    if lay.multicast {
        for k in 0..lay.k {
            let (re, im) = space.rows(k);
            // R2-1
            let y0 = crate::linalg::inner(&space.g[k], &it.m);
            let (tan, c0) = tangent(&re, &im, y0.re, y0.im);
            let mut row = vec![0.0; n];
            row[lay.p(k)] = 1.0;
            place(&mut row, lay.m(), &tan, -1.0);
            prog.add_linear(row, c0);

            // R2-2
            let mut factor = Vec::with_capacity(2 * lay.kp);
            for j in 0..lay.kp {
                for coeffs in [&re, &im] {
                    let mut f = vec![0.0; n];
                    place(&mut f, lay.b(j), coeffs, 1.0);
                    factor.push(f);
                }
            }
            let mut lin = vec![0.0; n];
            lin[lay.q(k)] = -1.0;
            prog.add_quadratic(factor, lin, space.noise[k]);

            // R2-3
            let mut row = vec![0.0; n];
            row[lay.q(k)] = params.gamma_min;
            row[lay.p(k)] = -1.0;
            prog.add_linear(row, 0.0);
        }
    }

    // lifted variables are scaled by their values at the expansion point
    let mut scales = vec![1.0; n];
    scales[lay.alpha()] = it.alpha.max(1.0);
    for i in 0..lay.kp {
        scales[lay.t(i)] = it.t[i].max(1.0);
        scales[lay.r(i)] = it.r[i].max(1.0);
    }
    if lay.multicast {
        for k in 0..lay.k {
            scales[lay.p(k)] = it.p[k].max(1.0);
            scales[lay.q(k)] = it.q[k].max(1.0);
        }
    }
    prog.set_variable_scales(scales);

    // R3: total power within the (normalised) budget
    let tail = (0..lay.beams())
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            AffineExpr::new(e, 0.0)
        })
        .collect();
    prog.add_soc(AffineExpr::new(vec![0.0; n], 1.0), tail);
    prog
}

fn extract(space: &ReducedSpace, lay: &Layout, x: &[f64], prev: &Iterate) -> Iterate {
    let c: Vec<CVector> = (0..lay.kp)
        .map(|j| from_reals(&x[lay.b(j)..lay.b(j) + lay.d2]))
        .collect();
    let m = if lay.multicast {
        from_reals(&x[lay.m()..lay.m() + lay.d2])
    } else {
        prev.m.clone()
    };
    let (p, q) = if lay.multicast {
        (
            (0..lay.k).map(|k| x[lay.p(k)]).collect(),
            (0..lay.k).map(|k| x[lay.q(k)]).collect(),
        )
    } else {
        (
            vec![0.0; lay.k],
            (0..lay.k)
                .map(|k| space.interference(k, &c, None))
                .collect(),
        )
    };
    Iterate {
        c,
        m,
        alpha: x[lay.alpha()],
        t: (0..lay.kp).map(|i| x[lay.t(i)]).collect(),
        r: (0..lay.kp).map(|i| x[lay.r(i)]).collect(),
        p,
        q,
    }
}

struct StepOutcome {
    iterate: Iterate,
    solution: ConicSolution,
}

fn step(space: &ReducedSpace, it: &Iterate, params: &PrecoderParams) -> Result<StepOutcome> {
    let prog = build_subproblem(space, it, params);
    let solution = prog.solve()?;
    if solution.status == SolveStatus::Infeasible {
        return Err(Error::InternalConsistency {
            message: "convexified subproblem reported infeasible at a feasible expansion point"
                .into(),
            dump: prog.dump(),
        });
    }
    let lay = Layout::new(space, params.layering);
    Ok(StepOutcome {
        iterate: extract(space, &lay, &solution.x, it),
        solution,
    })
}

fn trace_entry(iteration: usize, alpha: f64, sol: Option<&ConicSolution>) -> TraceEntry {
    TraceEntry {
        iteration,
        alpha,
        primal_residual: sol.map_or(0.0, |s| s.primal_residual),
        dual_residual: sol.map_or(0.0, |s| s.dual_residual),
        relative_gap: sol.map_or(0.0, |s| s.relative_gap),
        solver_iterations: sol.map_or(0, |s| s.iterations),
    }
}

/// Solves one convexified subproblem around `state` and returns its optimum
/// as the next iterate. The returned trace holds this step's entry appended
/// to the input trace.
pub fn ccp_step(
    state: &CcpState,
    links: &[EffectiveChannel],
    scheduled: &[usize],
    params: &PrecoderParams,
) -> Result<CcpState> {
    params.validate()?;
    check_schedule(links, scheduled)?;
    if state.b.len() != scheduled.len() || state.t.len() != scheduled.len() {
        return Err(Error::invalid("state does not match the schedule"));
    }
    let space = ReducedSpace::new(links, scheduled, params.p_tx_mw)?;
    let it = Iterate::from_state(&space, state);
    let out = step(&space, &it, params)?;
    if out.solution.status != SolveStatus::Optimal {
        return Err(Error::InternalConsistency {
            message: format!("subproblem ended with status {:?}", out.solution.status),
            dump: build_subproblem(&space, &it, params).dump(),
        });
    }
    let mut next = out.iterate.to_state(&space, state.iteration + 1);
    next.trace = state.trace.clone();
    next.trace
        .push(trace_entry(next.iteration, next.alpha, Some(&out.solution)));
    Ok(next)
}

/// `cur + beta (cur - prev)` in the beams, scaled into the power budget,
/// if it keeps the multicast targets and raises the level.
fn extrapolate(
    space: &ReducedSpace,
    params: &PrecoderParams,
    cur: &Iterate,
    prev: &Iterate,
    beta: f64,
) -> Option<Iterate> {
    if beta <= 0.0 {
        return None;
    }
    let push = |a: &CVector, b: &CVector| a + (a - b) * Complex64::new(beta, 0.0);
    let mut c: Vec<CVector> = cur.c.iter().zip(&prev.c).map(|(a, b)| push(a, b)).collect();
    let mut m = push(&cur.m, &prev.m);
    let power = ReducedSpace::power(&c, &m);
    if power > 1.0 {
        let s = Complex64::new(1.0 / power.sqrt(), 0.0);
        c.iter_mut().for_each(|v| *v *= s);
        m *= s;
    }
    let y = Iterate::tight(space, c, m);
    (y.violation(space, params) <= 0.0 && y.alpha > cur.alpha).then_some(y)
}

/// Warm start followed by convexified steps until the level changes by at
/// most `epsilon` or `n_conv` steps have run.
///
/// Each subproblem is expanded around the current iterate, or around a
/// momentum extrapolation of it when that point is feasible and has a higher
/// level. Iterates are re-lifted tightly, so the level is the true minimum
/// unicast SINR. A step is accepted only if it is solved to optimality, does
/// not lower the level and keeps the power and multicast constraints;
/// otherwise the previous iterate is returned.
pub fn solve_precoders(
    links: &[EffectiveChannel],
    scheduled: &[usize],
    params: &PrecoderParams,
) -> Result<BeamformingSolution> {
    params.validate()?;
    check_schedule(links, scheduled)?;
    let space = ReducedSpace::new(links, scheduled, params.p_tx_mw)?;
    let mut cur = warm_start(&space, params)?.iterate;
    let mut trace = vec![trace_entry(0, cur.alpha, None)];
    let mut converged = false;
    let mut accepted = 0;
    let mut prev: Option<Iterate> = None;
    let mut theta = 1.0_f64;

    for ell in 1..=params.n_conv {
        // expand around an extrapolated point when it is feasible and better
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        theta = theta_next;
        let base = prev
            .as_ref()
            .and_then(|p| {
                EXTRAPOLATION_STRETCH
                    .iter()
                    .filter_map(|f| extrapolate(&space, params, &cur, p, beta * f))
                    .max_by(|a, b| a.alpha.total_cmp(&b.alpha))
            })
            .unwrap_or_else(|| cur.clone());

        let out = step(&space, &base, params)?;
        if out.solution.status != SolveStatus::Optimal {
            break;
        }
        let next = Iterate::tight(&space, out.iterate.c, out.iterate.m);
        let delta = next.alpha - cur.alpha;
        if delta < 0.0 {
            // the expansion point is feasible for this subproblem, so a
            // lower optimum is solver round-off: treat as stationary
            converged = -delta <= params.epsilon;
            break;
        }
        if next.violation(&space, params) > FEASIBILITY_TOL {
            break;
        }
        prev = Some(std::mem::replace(&mut cur, next));
        accepted = ell;
        trace.push(trace_entry(ell, cur.alpha, Some(&out.solution)));
        if delta <= params.epsilon {
            converged = true;
            break;
        }
    }

    // enforce the power budget exactly
    let power = ReducedSpace::power(&cur.c, &cur.m);
    if power > 1.0 {
        let s = Complex64::new(1.0 / power.sqrt(), 0.0);
        cur.c.iter_mut().for_each(|c| *c *= s);
        cur.m *= s;
    }
    let viol = cur.violation(&space, params);
    if viol > 1e-6 {
        return Err(Error::InternalConsistency {
            message: format!(
                "final precoders violate the multicast or power constraint by {viol:e}"
            ),
            dump: build_subproblem(&space, &cur, params).dump(),
        });
    }

    let b: Vec<CVector> = cur.c.iter().map(|c| space.expand(c)).collect();
    let m = space.expand(&cur.m);
    let alpha = unicast_sinrs(links, scheduled, &b)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(BeamformingSolution {
        w: links.iter().map(|l| l.w.clone()).collect(),
        b,
        m,
        alpha,
        iterations: accepted,
        converged,
        trace,
    })
}
