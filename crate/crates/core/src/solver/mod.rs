//! Solver for `div(g(|∇u|², u) ∇u) + h(|∇u|², u) = 0` with `u = 0` on the boundary.
//!
//! The nonlinear system is driven by damped Picard iterations (coefficients
//! frozen, one sparse LU per step) followed by an optional Newton polish with
//! a colored finite-difference Jacobian. Both phases backtrack on the step
//! length so the residual history never increases.

mod discrete;
mod linear;
pub mod radial;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Arm, Direction, DiscreteDomain};
use crate::lagrangian::{LagrangianModel, ModelError};

pub use discrete::{nodal_gradient, node_gradient};
pub(crate) use linear::weighted_lstsq;
pub use radial::{solve_radial, RadialError, RadialProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("ellipticity lost at ({x}, {y}): g({p}, {q}) = {g}")]
    Ellipticity { x: f64, y: f64, p: f64, q: f64, g: f64 },
    #[error("model evaluation failed near ({x}, {y}): {source}")]
    Model { x: f64, y: f64, source: ModelError },
    #[error("sparse factorization failed")]
    Factorization,
    #[error("field has {got} values, the domain has {expected} nodes")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub residual_tol: f64,
    pub step_tol: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub newton_polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { residual_tol: 1e-8, step_tol: 1e-10, max_iterations: 200, damping: 0.7, newton_polish: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return Err(SolverError::Config(format!("residual_tol must be positive, got {}", self.residual_tol)));
        }
        if !(self.step_tol > 0.0 && self.step_tol.is_finite()) {
            return Err(SolverError::Config(format!("step_tol must be positive, got {}", self.step_tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub method: Method,
    pub residual: f64,
    pub damping: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub u: Vec<f64>,
    pub grad_u: Vec<[f64; 2]>,
    /// `∂u/∂ν` at each boundary sample.
    pub normal_derivative: Vec<f64>,
    /// Residual ∞-norm of the initial guess followed by one entry per iteration.
    pub residual_history: Vec<f64>,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    /// `(min u, max u)` over the closure, so both bounds include the boundary value 0.
    pub solution_range: (f64, f64),
    /// `(0, max |∇u|)` over nodes and boundary samples.
    pub gradient_range: (f64, f64),
}

impl SolveResult {
    /// Rebuilds every derived field from nodal values.
    pub fn from_solution(
        dom: &DiscreteDomain,
        u: Vec<f64>,
        residual_history: Vec<f64>,
        log: Vec<IterationRecord>,
        converged: bool,
    ) -> Result<Self, SolverError> {
        if u.len() != dom.len() {
            return Err(SolverError::Length { expected: dom.len(), got: u.len() });
        }
        let grad_u = nodal_gradient(dom, &u);
        let normal_derivative = normal_derivatives(dom, &u);
        let (lo, hi) = u.iter().fold((0.0f64, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        let p_nodes = grad_u.iter().map(|g| g[0].hypot(g[1])).fold(0.0f64, f64::max);
        let p_bdry = normal_derivative.iter().map(|d| d.abs()).fold(0.0f64, f64::max);
        Ok(SolveResult {
            u,
            grad_u,
            normal_derivative,
            residual_history,
            log,
            converged,
            solution_range: (lo, hi),
            gradient_range: (0.0, p_nodes.max(p_bdry)),
        })
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn iterations(&self) -> usize {
        self.log.len()
    }
}

/// Pointwise discrete `div(g ∇u) + h`.
pub fn el_residual(model: &LagrangianModel, dom: &DiscreteDomain, u: &[f64]) -> Result<Vec<f64>, SolverError> {
    if u.len() != dom.len() {
        return Err(SolverError::Length { expected: dom.len(), got: u.len() });
    }
    discrete::residual(model, dom, u)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Linear problem with the coefficients frozen at `(p, q) = (0, 0)`.
fn initial_guess(model: &LagrangianModel, dom: &DiscreteDomain) -> Result<Vec<f64>, SolverError> {
    let (g0, h0) = match model.divergence_coefficients(0.0, 0.0) {
        Ok((g, h)) if g > 0.0 && g.is_finite() => (g, h),
        // degenerate at the origin: any positive diffusion gives a usable start
        Ok((_, h)) => (1.0, h),
        Err(_) => (1.0, model.eval_jet(0.0, 0.0).map(|j| -j.f_q).unwrap_or(0.0)),
    };
    if h0 == 0.0 {
        return Ok(vec![0.0; dom.len()]);
    }
    let c = discrete::Coefficients {
        faces: vec![[g0; 4]; dom.len()],
        source: vec![h0; dom.len()],
        source_q: vec![0.0; dom.len()],
    };
    let a = discrete::frozen_matrix(dom, &c);
    a.solve(&c.source).ok_or(SolverError::Factorization)
}

/// Solves the Dirichlet problem. Nonconvergence is reported through
/// `converged = false`; errors are reserved for ellipticity loss and
/// failures that leave no usable iterate.
pub fn solve_el(model: &LagrangianModel, dom: &DiscreteDomain, cfg: &SolverConfig) -> Result<SolveResult, SolverError> {
    cfg.validate()?;
    let mut u = initial_guess(model, dom)?;
    let mut r = discrete::residual(model, dom, &u)?;
    let mut norm = inf_norm(&r);
    let initial = norm;
    let mut history = vec![norm];
    let mut log = Vec::new();
    let mut converged = norm <= cfg.residual_tol;
    let mut picard_steps = 0;

    while !converged && log.len() < cfg.max_iterations {
        let newton = cfg.newton_polish && (norm <= 1e-2 * initial || picard_steps >= 30);
        let (method, dir) = if newton {
            let jac = discrete::jacobian(model, dom, &u, &r)?;
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            match jac.solve(&neg) {
                Some(d) => (Method::Newton, d),
                None => (Method::Picard, picard_direction(model, dom, &u)?),
            }
        } else {
            (Method::Picard, picard_direction(model, dom, &u)?)
        };
        if method == Method::Picard {
            picard_steps += 1;
        }
        let mut omega = if method == Method::Picard { cfg.damping } else { 1.0 };
        let mut accepted = None;
        while omega >= 1.0 / 1024.0 {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + omega * d).collect();
            match discrete::residual(model, dom, &trial) {
                Ok(rt) => {
                    let nt = inf_norm(&rt);
                    if nt < norm {
                        accepted = Some((trial, rt, nt));
                        break;
                    }
                }
                // a trial step may leave the elliptic range; shorter steps may not
                Err(SolverError::Ellipticity { .. }) | Err(SolverError::Model { .. }) => {}
                Err(e) => return Err(e),
            }
            omega *= 0.5;
        }
        let Some((trial, rt, nt)) = accepted else {
            break;
        };
        let step = omega * inf_norm(&dir);
        u = trial;
        r = rt;
        norm = nt;
        history.push(norm);
        log.push(IterationRecord { iteration: log.len() + 1, method, residual: norm, damping: omega, step });
        converged = norm <= cfg.residual_tol;
        if !converged && step <= cfg.step_tol {
            break;
        }
    }
    SolveResult::from_solution(dom, u, history, log, converged)
}

fn picard_direction(model: &LagrangianModel, dom: &DiscreteDomain, u: &[f64]) -> Result<Vec<f64>, SolverError> {
    let c = discrete::coefficients(model, dom, u, true)?;
    let a = discrete::frozen_matrix(dom, &c);
    let rhs: Vec<f64> = c.source.iter().zip(&c.source_q).zip(u).map(|((s, sq), v)| s - sq.min(0.0) * v).collect();
    let target = a.solve(&rhs).ok_or(SolverError::Factorization)?;
    Ok(target.iter().zip(u).map(|(t, v)| t - v).collect())
}

/// `∂u/∂ν` at the boundary samples from a weighted quadratic least-squares fit
/// through nearby nodes and cut points, with `u(y) = 0` built into the basis.
pub fn normal_derivatives(dom: &DiscreteDomain, u: &[f64]) -> Vec<f64> {
    use rayon::prelude::*;
    dom.boundary()
        .par_iter()
        .map(|s| boundary_gradient(dom, u, s.point).map_or(0.0, |g| g[0] * s.normal[0] + g[1] * s.normal[1]))
        .collect()
}

/// Gradient of `u` at a boundary point from the local fit.
pub fn boundary_gradient(dom: &DiscreteDomain, u: &[f64], y: [f64; 2]) -> Option<[f64; 2]> {
    let h = dom.spacing();
    let (ci, cj) = dom.nearest_grid(y);
    for radius in [2.5, 3.5, 4.5] {
        let reach = radius as isize + 1;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let mut weights = Vec::new();
        let mut add = |x: [f64; 2], value: f64| {
            let (dx, dy) = ((x[0] - y[0]) / h, (x[1] - y[1]) / h);
            let d2 = dx * dx + dy * dy;
            if d2 <= radius * radius && d2 > 1e-12 {
                rows.push(vec![dx, dy, dx * dx, dx * dy, dy * dy]);
                rhs.push(value);
                weights.push(1.0 / (0.25 + d2));
            }
        };
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let Some(k) = dom.node_at(ci + di, cj + dj) else { continue };
                let n = &dom.nodes()[k];
                add(n.pos, u[k]);
                for d in Direction::ALL {
                    if let Arm::Cut(t) = n.arm(d) {
                        let v = d.vector();
                        add([n.pos[0] + t * v[0], n.pos[1] + t * v[1]], 0.0);
                    }
                }
            }
        }
        if rows.len() >= 8 {
            if let Some(c) = weighted_lstsq(&rows, &rhs, &weights) {
                return Some([c[0] / h, c[1] / h]);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, Shape};
    use crate::lagrangian::Potential;

    fn torsion() -> LagrangianModel {
        LagrangianModel::dirichlet_potential(Potential::Affine { slope: 1.0, offset: 0.5 })
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { damping: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { residual_tol: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn torsion_disc_center_value() {
        let dom = build_domain(Shape::disc(1.0).unwrap(), 1.0 / 32.0).unwrap();
        let res = solve_el(&torsion(), &dom, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        let center = dom.nodes().iter().position(|n| n.pos == [0.0, 0.0]).unwrap();
        assert!((res.u[center] + 0.25).abs() < 2e-3);
        for d in &res.normal_derivative {
            assert!((d - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn laplace_gives_zero() {
        let m = LagrangianModel::dirichlet_potential(Potential::Affine { slope: 0.0, offset: 0.3 });
        let dom = build_domain(Shape::ellipse(1.5, 1.0).unwrap(), 1.0 / 16.0).unwrap();
        let res = solve_el(&m, &dom, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.u.iter().all(|v| *v == 0.0));
        assert!(el_residual(&m, &dom, &res.u).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn history_is_monotone() {
        let m = LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 1.0, rate: 1.0 });
        let dom = build_domain(Shape::disc(1.0).unwrap(), 1.0 / 16.0).unwrap();
        let res = solve_el(&m, &dom, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.residual_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(res.final_residual() <= 1e-8);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let m = LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 1.0, rate: 1.0 });
        let dom = build_domain(Shape::disc(1.0).unwrap(), 1.0 / 16.0).unwrap();
        let cfg = SolverConfig { max_iterations: 1, newton_polish: false, ..Default::default() };
        let res = solve_el(&m, &dom, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.log.len(), 1);
    }
}
