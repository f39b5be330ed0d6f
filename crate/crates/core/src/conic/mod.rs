//! Second-order cone programming.
//!
//! Programs are stated in the natural form used by the beamforming
//! subproblems (maximize a linear objective over linear, convex-quadratic and
//! second-order-cone constraints) and lowered to the standard conic form
//! `min c^T x  s.t.  G x + s = h,  s in K` solved by [`ipm`].

mod cone;
mod ipm;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use cone::ConeSpec;
pub use ipm::IpmSettings;

/// Affine form `coeffs . x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl AffineExpr {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        AffineExpr { coeffs, offset }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `coeffs . x <= bound`
    Linear { coeffs: Vec<f64>, bound: f64 },
    /// `|F x|^2 + linear . x + constant <= 0`, `F` given by its rows.
    Quadratic {
        factor: Vec<Vec<f64>>,
        linear: Vec<f64>,
        constant: f64,
    },
    /// `|(tail_1(x), ..., tail_p(x))| <= head(x)`
    SecondOrderCone {
        head: AffineExpr,
        tail: Vec<AffineExpr>,
    },
}

impl Constraint {
    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = match self {
            Constraint::Linear { coeffs, bound } => dot(coeffs, x) - bound,
            Constraint::Quadratic {
                factor,
                linear,
                constant,
            } => factor.iter().map(|r| dot(r, x).powi(2)).sum::<f64>() + dot(linear, x) + constant,
            Constraint::SecondOrderCone { head, tail } => {
                tail.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt() - head.eval(x)
            }
        };
        v.max(0.0)
    }
}

/// `maximize objective . x` subject to `constraints`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    n: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    /// Typical magnitude of each variable; the solver works in `x / scale`.
    scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub dual_value: f64,
    pub status: SolveStatus,
    /// Relative primal residual of the lowered program.
    pub primal_residual: f64,
    /// Relative dual residual of the lowered program.
    pub dual_residual: f64,
    /// `|primal - dual| / (1 + |primal|)`.
    pub relative_gap: f64,
    pub iterations: usize,
}

impl ConicProgram {
    pub fn new(n: usize) -> Self {
        ConicProgram {
            n,
            objective: vec![0.0; n],
            constraints: Vec::new(),
            scales: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, coeffs: Vec<f64>) {
        self.objective = coeffs;
    }

    /// Hints the expected magnitude of every variable. The solution is
    /// unchanged; only the conditioning of the iterations is affected.
    pub fn set_variable_scales(&mut self, scales: Vec<f64>) {
        self.scales = Some(scales);
    }

    pub fn add(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn add_linear(&mut self, coeffs: Vec<f64>, bound: f64) {
        self.add(Constraint::Linear { coeffs, bound });
    }

    pub fn add_quadratic(&mut self, factor: Vec<Vec<f64>>, linear: Vec<f64>, constant: f64) {
        self.add(Constraint::Quadratic {
            factor,
            linear,
            constant,
        });
    }

    pub fn add_soc(&mut self, head: AffineExpr, tail: Vec<AffineExpr>) {
        self.add(Constraint::SecondOrderCone { head, tail });
    }

    /// Largest constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::invalid("conic program has no variables"));
        }
        let check = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != n {
                return Err(Error::invalid(format!(
                    "{what} has length {} but the program has {n} variables",
                    v.len()
                )));
            }
            if v.iter().any(|a| !a.is_finite()) {
                return Err(Error::invalid(format!(
                    "{what} contains non-finite entries"
                )));
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        if let Some(d) = &self.scales {
            check(d, "variable scales")?;
            if d.iter().any(|v| *v <= 0.0) {
                return Err(Error::invalid("variable scales must be positive"));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let label = format!("constraint {i}");
            match c {
                Constraint::Linear { coeffs, bound } => {
                    check(coeffs, &label)?;
                    if !bound.is_finite() {
                        return Err(Error::invalid(format!("{label}: non-finite bound")));
                    }
                }
                Constraint::Quadratic {
                    factor,
                    linear,
                    constant,
                } => {
                    for r in factor {
                        check(r, &label)?;
                    }
                    check(linear, &label)?;
                    if !constant.is_finite() {
                        return Err(Error::invalid(format!("{label}: non-finite constant")));
                    }
                }
                Constraint::SecondOrderCone { head, tail } => {
                    for e in std::iter::once(head).chain(tail) {
                        check(&e.coeffs, &label)?;
                        if !e.offset.is_finite() {
                            return Err(Error::invalid(format!("{label}: non-finite offset")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Lowers to `min c^T x, G x + s = h, s in K`, with every cone block
    /// rescaled so its largest row of `G` has unit norm.
    fn lower(&self) -> ipm::StandardForm {
        let n = self.n;
        let mut lin: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut socs: Vec<Vec<(Vec<f64>, f64)>> = Vec::new();
        for c in &self.constraints {
            match c {
                Constraint::Linear { coeffs, bound } => lin.push((coeffs.clone(), *bound)),
                Constraint::Quadratic {
                    factor,
                    linear,
                    constant,
                } => {
                    if factor.is_empty() {
                        lin.push((linear.clone(), -constant));
                        continue;
                    }
                    // |Fx|^2 <= u with u = -q.x - c is equivalent to
                    // |(2 sqrt(k) Fx, u - k)| <= u + k for any k > 0; k near
                    // the size of u keeps the cone well conditioned.
                    // Rows are (G_i, h_i) with s = h - Gx.
                    let kappa = quadratic_scale(*constant, linear, self.scales.as_deref());
                    let root = 2.0 * kappa.sqrt();
                    let mut block = Vec::with_capacity(factor.len() + 2);
                    block.push((linear.clone(), kappa - constant));
                    for r in factor {
                        block.push((r.iter().map(|a| -root * a).collect(), 0.0));
                    }
                    block.push((linear.clone(), -constant - kappa));
                    socs.push(block);
                }
                Constraint::SecondOrderCone { head, tail } => {
                    let mut block = Vec::with_capacity(tail.len() + 1);
                    block.push((head.coeffs.iter().map(|a| -a).collect(), head.offset));
                    for t in tail {
                        block.push((t.coeffs.iter().map(|a| -a).collect(), t.offset));
                    }
                    socs.push(block);
                }
            }
        }
        let m = lin.len() + socs.iter().map(Vec::len).sum::<usize>();
        let mut g = DMatrix::<f64>::zeros(m, n);
        let mut h = DVector::<f64>::zeros(m);
        let mut row = 0;
        let mut put = |rows: &[(Vec<f64>, f64)], g: &mut DMatrix<f64>, h: &mut DVector<f64>| {
            let scale = rows
                .iter()
                .map(|(r, _)| dot(r, r).sqrt())
                .fold(0.0, f64::max);
            let f = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            for (r, b) in rows {
                for (j, a) in r.iter().enumerate() {
                    g[(row, j)] = a * f;
                }
                h[row] = b * f;
                row += 1;
            }
        };
        for r in &lin {
            put(std::slice::from_ref(r), &mut g, &mut h);
        }
        for b in &socs {
            put(b, &mut g, &mut h);
        }
        let mut c = DVector::from_iterator(n, self.objective.iter().map(|a| -a));
        if let Some(d) = &self.scales {
            for (j, &dj) in d.iter().enumerate() {
                g.column_mut(j).scale_mut(dj);
                c[j] *= dj;
            }
        }
        let cone = ConeSpec {
            nonneg: lin.len(),
            soc: socs.iter().map(Vec::len).collect(),
        };
        ipm::StandardForm::new(g, h, c, cone)
    }

    /// Human-readable listing of the program, for failure reports.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", self.n);
        let _ = writeln!(out, "maximize {:?}", self.objective);
        for (i, c) in self.constraints.iter().enumerate() {
            match c {
                Constraint::Linear { coeffs, bound } => {
                    let _ = writeln!(out, "[{i}] linear {coeffs:?} <= {bound:e}");
                }
                Constraint::Quadratic {
                    factor,
                    linear,
                    constant,
                } => {
                    let _ = writeln!(
                        out,
                        "[{i}] quadratic rows={} linear={linear:?} const={constant:e}",
                        factor.len()
                    );
                    for r in factor {
                        let _ = writeln!(out, "    F {r:?}");
                    }
                }
                Constraint::SecondOrderCone { head, tail } => {
                    let _ = writeln!(out, "[{i}] soc head {:?} + {:e}", head.coeffs, head.offset);
                    for t in tail {
                        let _ = writeln!(out, "    tail {:?} + {:e}", t.coeffs, t.offset);
                    }
                }
            }
        }
        out
    }

    pub fn solve(&self) -> Result<ConicSolution> {
        self.solve_with(&IpmSettings::default())
    }

    pub fn solve_with(&self, settings: &IpmSettings) -> Result<ConicSolution> {
        self.validate()?;
        let sf = self.lower();
        let mut r = ipm::solve(&sf, settings);
        if let Some(d) = &self.scales {
            r.x.iter_mut().zip(d).for_each(|(x, d)| *x *= d);
        }
        let objective_value = dot(&self.objective, &r.x);
        let relative_gap = (r.pcost - r.dcost).abs() / (1.0 + r.pcost.abs());
        Ok(ConicSolution {
            objective_value,
            dual_value: -r.dcost,
            status: r.status,
            primal_residual: r.pres,
            dual_residual: r.dres,
            relative_gap,
            iterations: r.iterations,
            x: r.x,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Magnitude used to balance the cone form of a quadratic constraint: the
/// size of `-q.x - c` when every variable is at its hinted scale.
fn quadratic_scale(constant: f64, linear: &[f64], scales: Option<&[f64]>) -> f64 {
    let spread: f64 = match scales {
        Some(d) => linear.iter().zip(d).map(|(a, s)| (a * s).abs()).sum(),
        None => linear.iter().map(|a| a.abs()).sum(),
    };
    let k = constant.abs().max(spread);
    if k > 0.0 {
        k
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_optimal(sol: &ConicSolution, value: f64, tol: f64) {
        assert_eq!(sol.status, SolveStatus::Optimal, "{sol:?}");
        assert!(
            (sol.objective_value - value).abs() <= tol,
            "objective {} vs {value}",
            sol.objective_value
        );
    }

    #[test]
    fn box_lp() {
        let mut p = ConicProgram::new(2);
        p.set_objective(vec![1.0, 1.0]);
        p.add_linear(vec![1.0, 0.0], 1.0);
        p.add_linear(vec![0.0, 1.0], 2.0);
        p.add_linear(vec![-1.0, 0.0], 0.0);
        let sol = p.solve().unwrap();
        assert_optimal(&sol, 3.0, 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn disc_quadratic() {
        // max x + y over the unit disc
        let mut p = ConicProgram::new(2);
        p.set_objective(vec![1.0, 1.0]);
        p.add_quadratic(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0], -1.0);
        let sol = p.solve().unwrap();
        assert_optimal(&sol, 2f64.sqrt(), 1e-9);
    }

    #[test]
    fn shifted_paraboloid() {
        // max y  s.t.  (x - 1)^2 + y <= 0   ->  y = 0 at x = 1
        let mut p = ConicProgram::new(2);
        p.set_objective(vec![0.0, 1.0]);
        p.add_quadratic(vec![vec![1.0, 0.0]], vec![-2.0, 1.0], 1.0);
        let sol = p.solve().unwrap();
        assert_optimal(&sol, 0.0, 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn explicit_cone() {
        // max x  s.t.  |(x, y - 1)| <= 2 - y
        let mut p = ConicProgram::new(2);
        p.set_objective(vec![1.0, 0.0]);
        p.add_soc(
            AffineExpr::new(vec![0.0, -1.0], 2.0),
            vec![
                AffineExpr::new(vec![1.0, 0.0], 0.0),
                AffineExpr::new(vec![0.0, 1.0], -1.0),
            ],
        );
        // equivalent to x^2 <= 3 - 2y with y >= 0
        p.add_linear(vec![0.0, -1.0], 0.0);
        let sol = p.solve().unwrap();
        assert_optimal(&sol, 3f64.sqrt(), 1e-8);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = ConicProgram::new(1);
        p.set_objective(vec![1.0]);
        p.add_linear(vec![1.0], -1.0);
        p.add_linear(vec![-1.0], -1.0);
        assert_eq!(p.solve().unwrap().status, SolveStatus::Infeasible);

        let mut q = ConicProgram::new(2);
        q.set_objective(vec![1.0, 0.0]);
        q.add_quadratic(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0], -1.0);
        q.add_linear(vec![-1.0, 0.0], -2.0);
        assert_eq!(q.solve().unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut p = ConicProgram::new(2);
        p.set_objective(vec![1.0, 0.0]);
        p.add_linear(vec![-1.0, 0.0], 0.0);
        p.add_linear(vec![0.0, 1.0], 1.0);
        assert_eq!(p.solve().unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn malformed_program_is_rejected() {
        let mut p = ConicProgram::new(2);
        p.add_linear(vec![1.0], 1.0);
        assert!(matches!(p.solve(), Err(Error::InvalidArgument(_))));
        let mut q = ConicProgram::new(1);
        q.add_linear(vec![f64::NAN], 1.0);
        assert!(matches!(q.solve(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn violation_measures() {
        let c = Constraint::Quadratic {
            factor: vec![vec![1.0]],
            linear: vec![0.0],
            constant: -1.0,
        };
        assert_eq!(c.violation(&[0.5]), 0.0);
        assert!((c.violation(&[2.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn dump_lists_every_constraint() {
        let mut p = ConicProgram::new(1);
        p.add_linear(vec![1.0], 1.0);
        p.add_quadratic(vec![vec![1.0]], vec![0.0], -1.0);
        let d = p.dump();
        assert!(d.contains("[0] linear") && d.contains("[1] quadratic"));
    }
}
