//! Homogeneous self-dual primal-dual interior-point method with
//! Nesterov-Todd scaling and Mehrotra predictor-corrector steps.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cone::{ConeSpec, Scaling};
use super::SolveStatus;

pub(crate) struct StandardForm {
    pub g: DMatrix<f64>,
    /// `G^T`, kept so products with it run as plain matrix-vector products.
    pub gt: DMatrix<f64>,
    pub h: DVector<f64>,
    pub c: DVector<f64>,
    pub cone: ConeSpec,
}

impl StandardForm {
    pub fn new(g: DMatrix<f64>, h: DVector<f64>, c: DVector<f64>, cone: ConeSpec) -> Self {
        let gt = g.transpose();
        StandardForm { g, gt, h, c, cone }
    }
}

/// Stopping tolerances for the interior-point iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    pub max_iter: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            feastol: 1e-9,
            abstol: 1e-9,
            reltol: 1e-9,
            max_iter: 100,
        }
    }
}

/// Accepted when progress stalls before the strict tolerances are met.
const RELAXED_FEAS: f64 = 1e-8;
const RELAXED_GAP: f64 = 1e-7;
const STEP_FRACTION: f64 = 0.99;

pub(crate) struct IpmResult {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub pres: f64,
    pub dres: f64,
    pub pcost: f64,
    pub dcost: f64,
    pub iterations: usize,
}

/// Factored reduced KKT system for one scaling.
struct Kkt<'a> {
    sf: &'a StandardForm,
    w: &'a Scaling,
    ghat: DMatrix<f64>,
    ghat_t: DMatrix<f64>,
    diag: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Kkt<'a> {
    fn new(sf: &'a StandardForm, w: &'a Scaling) -> Option<Self> {
        let (m, n) = sf.g.shape();
        let mut ghat = sf.g.clone();
        {
            let data = ghat.as_mut_slice();
            for j in 0..n {
                w.apply_inv(&sf.cone, &mut data[j * m..(j + 1) * m]);
            }
        }
        let ghat_t = ghat.transpose();
        let mut hmat = &ghat_t * &ghat;
        // symmetric Jacobi scaling so the regularisation is relative to
        // each diagonal entry rather than the largest one
        let diag: DVector<f64> = hmat
            .diagonal()
            .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 });
        for j in 0..n {
            for i in 0..n {
                hmat[(i, j)] *= diag[i] * diag[j];
            }
        }
        let mut reg = 1e-13;
        for _ in 0..8 {
            let mut reg_mat = hmat.clone();
            for i in 0..n {
                reg_mat[(i, i)] += reg;
            }
            if let Some(chol) = reg_mat.cholesky() {
                return Some(Kkt {
                    sf,
                    w,
                    ghat,
                    ghat_t,
                    diag,
                    chol,
                });
            }
            reg *= 100.0;
        }
        None
    }

    fn winv(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.w.apply_inv(&self.sf.cone, out.as_mut_slice());
        out
    }

    fn wsq(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.w.apply(&self.sf.cone, out.as_mut_slice());
        self.w.apply(&self.sf.cone, out.as_mut_slice());
        out
    }

    fn solve_once(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let r2h = self.winv(r2);
        let rhs = r1 + &self.ghat_t * &r2h;
        let u = self
            .chol
            .solve(&rhs.component_mul(&self.diag))
            .component_mul(&self.diag);
        let v = self.winv(&(&self.ghat * &u - r2h));
        (u, v)
    }

    /// Solves `[0 G^T; G -W^2] [u; v] = [r1; r2]` with iterative refinement.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut u, mut v) = self.solve_once(r1, r2);
        let size = r1.amax().max(r2.amax()).max(1e-300);
        let residual = |u: &DVector<f64>, v: &DVector<f64>| {
            let e1 = r1 - &self.sf.gt * v;
            let e2 = r2 - (&self.sf.g * u - self.wsq(v));
            let err = e1.amax().max(e2.amax());
            (e1, e2, err)
        };
        let (mut e1, mut e2, mut err) = residual(&u, &v);
        for _ in 0..10 {
            if err <= 1e-15 * size {
                break;
            }
            let (du, dv) = self.solve_once(&e1, &e2);
            let (nu, nv) = (&u + du, &v + dv);
            let (ne1, ne2, nerr) = residual(&nu, &nv);
            if nerr >= err {
                break;
            }
            (u, v, e1, e2, err) = (nu, nv, ne1, ne2, nerr);
        }
        (u, v)
    }
}

struct Direction {
    x: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    /// `W^{-1} ds`
    s_scaled: DVector<f64>,
    /// `W dz`
    z_scaled: DVector<f64>,
    kappa: f64,
}

pub(crate) fn solve(sf: &StandardForm, settings: &IpmSettings) -> IpmResult {
    let cone = &sf.cone;
    let deg = cone.degree() as f64;
    let hnorm = sf.h.norm().max(1.0);
    let cnorm = sf.c.norm().max(1.0);

    let (mut x, mut s, mut z) = initial_point(sf);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let result = |x: &DVector<f64>, tau: f64, status, pres, dres, pc, dc, it| IpmResult {
        x: (x / tau).iter().copied().collect(),
        status,
        pres,
        dres,
        pcost: pc,
        dcost: dc,
        iterations: it,
    };

    // best iterate by its worst stopping measure, used if progress stalls
    let mut best: Option<(f64, DVector<f64>, f64, [f64; 4], usize)> = None;
    for it in 0..=settings.max_iter {
        let rx = (&sf.gt * &z) + &sf.c * tau;
        let rz = &sf.g * &x + &s - &sf.h * tau;
        let cx = sf.c.dot(&x);
        let hz = sf.h.dot(&z);
        let rt = kappa + cx + hz;
        let sz = s.dot(&z);
        let mu = (sz + tau * kappa) / (deg + 1.0);

        let pres = rz.norm() / tau / hnorm;
        let dres = rx.norm() / tau / cnorm;
        let pcost = cx / tau;
        let dcost = -hz / tau;
        let gap = sz / (tau * tau);
        let relgap = (pcost - dcost).abs() / (1.0 + pcost.abs());
        let cgap = gap / (1.0 + pcost.abs());
        let score = pres.max(dres).max(relgap).max(cgap);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, x.clone(), tau, [pres, dres, pcost, dcost], it));
        }

        if pres <= settings.feastol
            && dres <= settings.feastol
            && (gap <= settings.abstol || (relgap <= settings.reltol && cgap <= settings.reltol))
        {
            return result(&x, tau, SolveStatus::Optimal, pres, dres, pcost, dcost, it);
        }
        if hz < 0.0 {
            let pinf = (&sf.gt * &z).norm() / (-hz);
            if pinf <= settings.feastol * cnorm.max(1.0) && tau < kappa {
                return result(
                    &x,
                    tau,
                    SolveStatus::Infeasible,
                    pres,
                    dres,
                    pcost,
                    dcost,
                    it,
                );
            }
        }
        if cx < 0.0 {
            let dinf = (&sf.g * &x + &s).norm() / (-cx);
            if dinf <= settings.feastol * hnorm.max(1.0) && tau < kappa {
                return result(
                    &x,
                    tau,
                    SolveStatus::Unbounded,
                    pres,
                    dres,
                    pcost,
                    dcost,
                    it,
                );
            }
        }
        if it == settings.max_iter {
            break;
        }

        let Some(w) = Scaling::compute(cone, s.as_slice(), z.as_slice()) else {
            break;
        };
        let mut lambda = z.clone();
        w.apply(cone, lambda.as_mut_slice());
        let Some(kkt) = Kkt::new(sf, &w) else {
            break;
        };
        let neg_c = -&sf.c;
        let (x1, z1) = kkt.solve(&neg_c, &sf.h);
        let denom_base = sf.c.dot(&x1) + sf.h.dot(&z1);

        let lam = lambda.as_slice();
        let lam_sq = cone.jordan_prod(lam, lam);

        let direction = |xi: &[f64], xi_tau: f64, damp: f64| -> Direction {
            let li = DVector::from_vec(cone.jordan_div(lam, xi));
            let mut wli = li.clone();
            w.apply(cone, wli.as_mut_slice());
            let bx = -&rx * damp;
            let bz = -&rz * damp - wli;
            let bt = -rt * damp - xi_tau / tau;
            let (x2, z2) = kkt.solve(&bx, &bz);
            let dtau = (bt - sf.c.dot(&x2) - sf.h.dot(&z2)) / (denom_base - kappa / tau);
            let dx = x2 + &x1 * dtau;
            let dz = z2 + &z1 * dtau;
            let mut wdz = dz.clone();
            w.apply(cone, wdz.as_mut_slice());
            // ds from the linearised primal equation keeps the primal
            // residual shrinking even when the reduced solve loses accuracy
            let mut ds_scaled = -&rz * damp - &sf.g * &dx + &sf.h * dtau;
            w.apply_inv(cone, ds_scaled.as_mut_slice());
            let dkappa = (xi_tau - kappa * dtau) / tau;
            Direction {
                x: dx,
                z: dz,
                tau: dtau,
                s_scaled: ds_scaled,
                z_scaled: wdz,
                kappa: dkappa,
            }
        };
        let max_step = |d: &Direction| -> f64 {
            let mut a = cone
                .max_step(lam, d.s_scaled.as_slice())
                .min(cone.max_step(lam, d.z_scaled.as_slice()));
            if d.tau < 0.0 {
                a = a.min(-tau / d.tau);
            }
            if d.kappa < 0.0 {
                a = a.min(-kappa / d.kappa);
            }
            a
        };

        // predictor
        let xi_aff: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let aff = direction(&xi_aff, -tau * kappa, 1.0);
        let alpha_aff = max_step(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

        // corrector
        let cross = cone.jordan_prod(aff.s_scaled.as_slice(), aff.z_scaled.as_slice());
        let mut xi: Vec<f64> = lam_sq.iter().zip(&cross).map(|(a, b)| -a - b).collect();
        cone.add_identity(&mut xi, sigma * mu);
        let xi_tau = -tau * kappa - aff.tau * aff.kappa + sigma * mu;
        let d = direction(&xi, xi_tau, 1.0 - sigma);
        let mut alpha = (STEP_FRACTION * max_step(&d)).min(1.0);
        let mut ds = d.s_scaled.clone();
        w.apply(cone, ds.as_mut_slice());
        // rounding can put a full step on the boundary; back off if so
        let mut moved = false;
        for _ in 0..20 {
            if !(alpha > 1e-12) {
                break;
            }
            let s_new = &s + &ds * alpha;
            let z_new = &z + &d.z * alpha;
            let tau_new = tau + alpha * d.tau;
            let kappa_new = kappa + alpha * d.kappa;
            if tau_new > 0.0
                && kappa_new > 0.0
                && cone.boundary_shift(s_new.as_slice()) < 0.0
                && cone.boundary_shift(z_new.as_slice()) < 0.0
            {
                x += &d.x * alpha;
                s = s_new;
                z = z_new;
                tau = tau_new;
                kappa = kappa_new;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }

    let Some((_, x, tau, [pres, dres, pcost, dcost], it)) = best else {
        unreachable!("the loop records at least one iterate");
    };
    let relgap = (pcost - dcost).abs() / (1.0 + pcost.abs());
    let status = if pres <= RELAXED_FEAS.max(settings.feastol)
        && dres <= RELAXED_FEAS.max(settings.feastol)
        && relgap <= RELAXED_GAP.max(settings.reltol)
    {
        SolveStatus::Optimal
    } else {
        SolveStatus::IterationLimit
    };
    result(&x, tau, status, pres, dres, pcost, dcost, it)
}

fn initial_point(sf: &StandardForm) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (m, n) = sf.g.shape();
    let cone = &sf.cone;
    let mut gtg = &sf.gt * &sf.g;
    let scale = gtg.diagonal().max().max(1.0);
    for i in 0..n {
        gtg[(i, i)] += 1e-12 * scale;
    }
    let chol = gtg.cholesky();
    let (x, z) = match chol {
        Some(ch) => {
            let x = ch.solve(&(&sf.gt * &sf.h));
            let y = ch.solve(&(-&sf.c));
            (x, &sf.g * y)
        }
        None => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut s = &sf.h - &sf.g * &x;
    let mut z = z;
    let shift = |v: &mut DVector<f64>| {
        let t = cone.boundary_shift(v.as_slice());
        if t >= 0.0 {
            cone.add_identity(v.as_mut_slice(), 1.0 + t);
        }
    };
    shift(&mut s);
    shift(&mut z);
    (x, s, z)
}
