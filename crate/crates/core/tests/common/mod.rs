#![allow(dead_code)]

use ldm_core::conic::{AffineExpr, ConicProgram};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random SOCP whose optimum is known from a planted primal-dual pair.
///
/// Picks `x*`, complementary slack `s*` and dual `z*` in the cone, a random
/// `G`, then sets `h = G x* + s*` and `c = -G^T z*`. KKT conditions hold at
/// `(x*, s*, z*)`, so the maximum of `-c . x` over `G x <=_K h` is `h . z*`.
pub struct PlantedSocp {
    pub program: ConicProgram,
    pub optimum: f64,
}

/// Inactive linear rows are added when needed so `G` has full column rank.
pub fn planted_socp<R: Rng>(rng: &mut R, n: usize, n_lin: usize, socs: &[usize]) -> PlantedSocp {
    let n_lin = n_lin.max((n + 1).saturating_sub(socs.iter().sum::<usize>()));
    let x_star: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let mut s = Vec::new();
    let mut z = Vec::new();
    for _ in 0..n_lin {
        let v = rng.random_range(0.5..2.0);
        if rng.random_bool(0.5) {
            s.push(0.0);
            z.push(v);
        } else {
            s.push(v);
            z.push(0.0);
        }
    }
    for &q in socs {
        let tail: Vec<f64> = (1..q).map(|_| normal(rng)).collect();
        let r = tail.iter().map(|t| t * t).sum::<f64>().sqrt();
        match rng.random_range(0..3) {
            0 => {
                // both on the boundary, mutually reflected
                let mu = rng.random_range(0.5..2.0);
                s.push(r);
                s.extend(&tail);
                z.push(mu * r);
                z.extend(tail.iter().map(|t| -mu * t));
            }
            1 => {
                s.push(r + rng.random_range(0.5..2.0));
                s.extend(&tail);
                z.extend(std::iter::repeat_n(0.0, q));
            }
            _ => {
                s.extend(std::iter::repeat_n(0.0, q));
                z.push(r + rng.random_range(0.5..2.0));
                z.extend(&tail);
            }
        }
    }
    let m = s.len();
    let g: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| normal(rng)).collect())
        .collect();
    let h: Vec<f64> = (0..m)
        .map(|i| g[i].iter().zip(&x_star).map(|(a, b)| a * b).sum::<f64>() + s[i])
        .collect();
    let objective: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| g[i][j] * z[i]).sum())
        .collect();
    let optimum = h.iter().zip(&z).map(|(a, b)| a * b).sum();

    let mut program = ConicProgram::new(n);
    program.set_objective(objective);
    for i in 0..n_lin {
        program.add_linear(g[i].clone(), h[i]);
    }
    let mut row = n_lin;
    // s = h - G x must lie in the cone
    let affine = |i: usize| AffineExpr::new(g[i].iter().map(|a| -a).collect(), h[i]);
    for &q in socs {
        let head = affine(row);
        let tail = (row + 1..row + q).map(affine).collect();
        program.add_soc(head, tail);
        row += q;
    }
    PlantedSocp { program, optimum }
}
