//! Product cone `R_+^l x Q^{q_1} x ... x Q^{q_p}` and its Nesterov-Todd scaling.
//!
//! Vectors are laid out with the nonnegative orthant first, then each
//! second-order cone block with its head (scalar) element first.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConeSpec {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nrm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `x0^2 - |x1|^2`, computed as a product to limit cancellation.
fn soc_det(x: &[f64]) -> f64 {
    let t = nrm(&x[1..]);
    (x[0] - t) * (x[0] + t)
}

impl ConeSpec {
    /// Barrier degree: one per orthant coordinate and one per SOC block.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// `(start, len)` of every SOC block.
    pub fn soc_blocks(&self) -> Vec<(usize, usize)> {
        let mut start = self.nonneg;
        self.soc
            .iter()
            .map(|&len| {
                let b = (start, len);
                start += len;
                b
            })
            .collect()
    }

    pub fn add_identity(&self, x: &mut [f64], t: f64) {
        for v in &mut x[..self.nonneg] {
            *v += t;
        }
        for (st, _) in self.soc_blocks() {
            x[st] += t;
        }
    }

    /// Smallest `t` with `x + t e` on the cone boundary (negative when `x` is interior).
    pub fn boundary_shift(&self, x: &[f64]) -> f64 {
        let mut t = f64::NEG_INFINITY;
        for v in &x[..self.nonneg] {
            t = t.max(-v);
        }
        for (st, len) in self.soc_blocks() {
            let b = &x[st..st + len];
            t = t.max(nrm(&b[1..]) - b[0]);
        }
        t
    }

    pub fn jordan_prod(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for (st, len) in self.soc_blocks() {
            let (ub, vb) = (&u[st..st + len], &v[st..st + len]);
            out[st] = dot(ub, vb);
            for i in 1..len {
                out[st + i] = ub[0] * vb[i] + vb[0] * ub[i];
            }
        }
        out
    }

    /// Solves `lambda o x = xi` for `x` (`lambda` interior).
    pub fn jordan_div(&self, lambda: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; lambda.len()];
        for i in 0..self.nonneg {
            out[i] = xi[i] / lambda[i];
        }
        for (st, len) in self.soc_blocks() {
            let (l, x) = (&lambda[st..st + len], &xi[st..st + len]);
            let det = soc_det(l);
            let x0 = (l[0] * x[0] - dot(&l[1..], &x[1..])) / det;
            out[st] = x0;
            for i in 1..len {
                out[st + i] = (x[i] - x0 * l[i]) / l[0];
            }
        }
        out
    }

    /// Largest `alpha >= 0` keeping `x + alpha d` in the cone, for interior `x`.
    pub fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut amax = f64::INFINITY;
        for i in 0..self.nonneg {
            if d[i] < 0.0 {
                amax = amax.min(-x[i] / d[i]);
            }
        }
        for (st, len) in self.soc_blocks() {
            let (xb, db) = (&x[st..st + len], &d[st..st + len]);
            // f(a) = A a^2 + 2 B a + C, C > 0
            let a = db[0] * db[0] - dot(&db[1..], &db[1..]);
            let b = xb[0] * db[0] - dot(&xb[1..], &db[1..]);
            let c = soc_det(xb);
            let root = if a == 0.0 {
                if b < 0.0 {
                    -c / (2.0 * b)
                } else {
                    f64::INFINITY
                }
            } else {
                let disc = b * b - a * c;
                if disc < 0.0 {
                    // no sign change; A > 0 here because f(0) > 0
                    f64::INFINITY
                } else {
                    let sq = disc.sqrt();
                    let q = -(b + b.signum() * sq);
                    let mut best = f64::INFINITY;
                    for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
                        if r > 0.0 && r < best {
                            best = r;
                        }
                    }
                    best
                }
            };
            amax = amax.min(root);
        }
        amax
    }
}

#[derive(Debug, Clone)]
struct SocScaling {
    beta: f64,
    v: Vec<f64>,
}

/// Nesterov-Todd scaling `W` with `W z = W^{-1} s = lambda`.
/// `W` is symmetric positive definite and maps the cone onto itself.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    d: Vec<f64>,
    soc: Vec<SocScaling>,
}

impl Scaling {
    /// Returns `None` unless both `s` and `z` are strictly interior.
    pub fn compute(cone: &ConeSpec, s: &[f64], z: &[f64]) -> Option<Scaling> {
        let mut d = Vec::with_capacity(cone.nonneg);
        for i in 0..cone.nonneg {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            d.push((s[i] / z[i]).sqrt());
        }
        let mut soc = Vec::with_capacity(cone.soc.len());
        for (st, len) in cone.soc_blocks() {
            let (sb, zb) = (&s[st..st + len], &z[st..st + len]);
            let (a, b) = (soc_det(sb), soc_det(zb));
            if !(a > 0.0 && b > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                return None;
            }
            let (aa, bb) = (a.sqrt(), b.sqrt());
            let st_n: Vec<f64> = sb.iter().map(|x| x / aa).collect();
            let zt_n: Vec<f64> = zb.iter().map(|x| x / bb).collect();
            let gamma = ((1.0 + dot(&st_n, &zt_n)) / 2.0).sqrt();
            let mut v = vec![0.0; len];
            v[0] = (st_n[0] + zt_n[0]) / (2.0 * gamma) + 1.0;
            for i in 1..len {
                v[i] = (st_n[i] - zt_n[i]) / (2.0 * gamma);
            }
            let nv = (2.0 * v[0]).sqrt();
            for x in &mut v {
                *x /= nv;
            }
            soc.push(SocScaling {
                beta: (aa / bb).sqrt(),
                v,
            });
        }
        Some(Scaling { d, soc })
    }

    /// `x <- W x`.
    pub fn apply(&self, cone: &ConeSpec, x: &mut [f64]) {
        for i in 0..cone.nonneg {
            x[i] *= self.d[i];
        }
        for ((st, len), sc) in cone.soc_blocks().into_iter().zip(&self.soc) {
            let xb = &mut x[st..st + len];
            let vx = dot(&sc.v, xb);
            // beta (2 v v^T - J) x
            xb[0] = sc.beta * (2.0 * sc.v[0] * vx - xb[0]);
            for i in 1..len {
                xb[i] = sc.beta * (2.0 * sc.v[i] * vx + xb[i]);
            }
        }
    }

    /// `x <- W^{-1} x`.
    pub fn apply_inv(&self, cone: &ConeSpec, x: &mut [f64]) {
        for i in 0..cone.nonneg {
            x[i] /= self.d[i];
        }
        for ((st, len), sc) in cone.soc_blocks().into_iter().zip(&self.soc) {
            let xb = &mut x[st..st + len];
            // (1/beta) (2 J v v^T J - J) x
            let jvx = sc.v[0] * xb[0] - dot(&sc.v[1..], &xb[1..]);
            xb[0] = (2.0 * sc.v[0] * jvx - xb[0]) / sc.beta;
            for i in 1..len {
                xb[i] = (-2.0 * sc.v[i] * jvx + xb[i]) / sc.beta;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cone() -> ConeSpec {
        ConeSpec {
            nonneg: 2,
            soc: vec![3, 4],
        }
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_same_point() {
        let k = cone();
        let s = vec![1.0, 2.0, 3.0, 1.0, -0.5, 2.0, 0.3, 0.4, -1.0];
        let z = vec![0.5, 4.0, 1.0, 0.2, 0.3, 5.0, -1.0, 2.0, 0.5];
        let w = Scaling::compute(&k, &s, &z).unwrap();
        let mut wz = z.clone();
        w.apply(&k, &mut wz);
        let mut wis = s.clone();
        w.apply_inv(&k, &mut wis);
        for (a, b) in wz.iter().zip(&wis) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // W^{-1} W = I
        let mut x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let orig = x.clone();
        w.apply(&k, &mut x);
        w.apply_inv(&k, &mut x);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_div_inverts_product() {
        let k = cone();
        let l = vec![1.0, 2.0, 3.0, 1.0, -0.5, 2.0, 0.3, 0.4, -1.0];
        let x: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let p = k.jordan_prod(&l, &x);
        let back = k.jordan_div(&l, &p);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn max_step_hits_boundary() {
        let k = cone();
        let x = vec![1.0, 2.0, 3.0, 1.0, -0.5, 2.0, 0.3, 0.4, -1.0];
        let d: Vec<f64> = (0..9).map(|i| -((i as f64) * 1.3).sin() - 0.4).collect();
        let a = k.max_step(&x, &d);
        assert!(a.is_finite() && a > 0.0);
        let at: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + a * d).collect();
        assert!(k.boundary_shift(&at).abs() < 1e-9);
        let inside: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + 0.999 * a * d).collect();
        assert!(k.boundary_shift(&inside) < 0.0);
    }
}
