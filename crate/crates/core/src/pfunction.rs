//! The P-function `λ₁ = ⟨L_ξ, ∇u⟩ - L = |∇u| F_p - F` along a solution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Arm, Direction, DiscreteDomain};
use crate::lagrangian::{LagrangianModel, ModelError, ORIGIN_EPS};
use crate::solver::{solve_radial, RadialError, SolveResult};
pub use crate::tensor::LocationClass;
use crate::tensor::{boundary_collar, classify_node, p_crit_tol};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PFunctionError {
    #[error("refusing to analyse an unconverged solution")]
    Unconverged,
    #[error("model evaluation failed at p = {p}, q = {q}: {source}")]
    Model { p: f64, q: f64, source: ModelError },
    #[error("no critical points at grid resolution (|∇u| > {tol:e} everywhere)")]
    NoCriticalSet { tol: f64 },
    #[error(transparent)]
    Radial(#[from] RadialError),
}

fn jet(model: &LagrangianModel, p: f64, q: f64) -> Result<crate::lagrangian::Jet2, PFunctionError> {
    model.eval_jet(p, q).map_err(|source| PFunctionError::Model { p, q, source })
}

/// `⟨L_ξ, g⟩ - L` with `L_ξ = F_p g / |g|`.
fn lambda1_at(model: &LagrangianModel, g: [f64; 2], q: f64) -> Result<f64, PFunctionError> {
    let p = g[0].hypot(g[1]);
    let j = jet(model, p, q)?;
    let l_xi = if p > ORIGIN_EPS { [j.f_p * g[0] / p, j.f_p * g[1] / p] } else { [0.0, 0.0] };
    Ok(l_xi[0] * g[0] + l_xi[1] * g[1] - j.f)
}

/// `λ₁` at every node and at every boundary sample (`p = |∂_ν u|`, `q = 0`).
pub fn lambda1_field(
    model: &LagrangianModel,
    sol: &SolveResult,
    dom: &DiscreteDomain,
) -> Result<(Vec<f64>, Vec<f64>), PFunctionError> {
    if !sol.converged {
        return Err(PFunctionError::Unconverged);
    }
    let nodes = sol.grad_u.iter().zip(&sol.u).map(|(g, &u)| lambda1_at(model, *g, u)).collect::<Result<_, _>>()?;
    let bdry = dom
        .boundary()
        .iter()
        .zip(&sol.normal_derivative)
        .map(|(s, &dn)| lambda1_at(model, [dn * s.normal[0], dn * s.normal[1]], 0.0))
        .collect::<Result<_, _>>()?;
    Ok((nodes, bdry))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PReport {
    #[serde(skip)]
    pub lambda1_field: Vec<f64>,
    #[serde(skip)]
    pub lambda1_boundary: Vec<f64>,
    #[serde(skip)]
    pub critical_set_nodes: Vec<usize>,
    pub sup_value: f64,
    pub argmax: [f64; 2],
    pub location_class: LocationClass,
    pub p_crit_tol: f64,
    /// Nodes within this distance of `∂Ω` count as boundary locations.
    pub boundary_collar: f64,
    pub critical_set_size: usize,
    /// `max over ∂Ω of p F_p(p, 0) - F(p, 0)` with `p = |∂_ν u|`.
    pub boundary_formula_value: f64,
    /// `-min over the critical set of F(0, u)`; absent when the set is empty.
    pub critical_formula_value: Option<f64>,
    pub h_min: f64,
    pub lipschitz_estimate: f64,
    /// `max(5e-3, 2h·Lipschitz)`
    pub equality_tolerance: f64,
    /// `sup - max(branches)`; non-positive up to tolerance.
    pub two_branch_excess: f64,
    /// `|sup - critical branch|` when `H_min >= 0` and the critical set is non-empty.
    pub critical_equality_gap: Option<f64>,
    pub notes: Vec<String>,
}

/// Locates the supremum of `λ₁` over nodes and boundary samples and evaluates
/// both branches of the two-branch formula.
pub fn locate_max(model: &LagrangianModel, sol: &SolveResult, dom: &DiscreteDomain) -> Result<PReport, PFunctionError> {
    let (field, bdry) = lambda1_field(model, sol, dom)?;
    let h = dom.spacing();
    let tol = p_crit_tol(h, sol.gradient_range.1);
    let critical: Vec<usize> =
        sol.grad_u.iter().enumerate().filter(|(_, g)| g[0].hypot(g[1]) <= tol).map(|(k, _)| k).collect();

    let (mut sup, mut argmax, mut class) = (f64::NEG_INFINITY, [0.0; 2], LocationClass::InteriorNoncritical);
    for (k, &v) in field.iter().enumerate() {
        if v > sup {
            sup = v;
            argmax = dom.nodes()[k].pos;
            let g = sol.grad_u[k];
            class = classify_node(&dom.nodes()[k], g[0].hypot(g[1]), tol, h);
        }
    }
    for (k, &v) in bdry.iter().enumerate() {
        if v > sup {
            sup = v;
            argmax = dom.boundary()[k].point;
            class = LocationClass::Boundary;
        }
    }

    let mut boundary_branch = f64::NEG_INFINITY;
    for dn in &sol.normal_derivative {
        let p = dn.abs();
        let j = jet(model, p, 0.0)?;
        boundary_branch = boundary_branch.max(p * j.f_p - j.f);
    }
    let mut critical_branch: Option<f64> = None;
    for &k in &critical {
        let v = -jet(model, 0.0, sol.u[k])?.f;
        critical_branch = Some(critical_branch.map_or(v, |c: f64| c.max(v)));
    }

    let mut lip: f64 = 0.0;
    for (k, n) in dom.nodes().iter().enumerate() {
        for d in [Direction::East, Direction::North] {
            if let Arm::Node(m) = n.arm(d) {
                lip = lip.max((field[k] - field[m]).abs() / h);
            }
        }
    }
    let h_min = dom.boundary().iter().map(|s| s.curvature).fold(f64::INFINITY, f64::min);
    let eq_tol = (2.0 * h * lip).max(5e-3);
    let best = critical_branch.map_or(boundary_branch, |c| c.max(boundary_branch));
    let mut notes = Vec::new();
    if critical_branch.is_none() {
        notes.push("critical set empty at grid resolution; only the boundary branch is available".into());
    }
    if h_min < 0.0 {
        notes.push("boundary has negative curvature; the maximum may sit on the boundary".into());
    }
    if class == LocationClass::InteriorNoncritical {
        notes.push("maximum of the P-function at a non-critical interior node".into());
    }
    let critical_equality_gap = match critical_branch {
        Some(c) if h_min >= 0.0 => Some((sup - c).abs()),
        _ => None,
    };
    Ok(PReport {
        critical_set_size: critical.len(),
        lambda1_field: field,
        lambda1_boundary: bdry,
        critical_set_nodes: critical,
        sup_value: sup,
        argmax,
        location_class: class,
        p_crit_tol: tol,
        boundary_collar: boundary_collar(h),
        boundary_formula_value: boundary_branch,
        critical_formula_value: critical_branch,
        h_min,
        lipschitz_estimate: lip,
        equality_tolerance: eq_tol,
        two_branch_excess: sup - best,
        critical_equality_gap,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientBound {
    /// Whether the bound is asserted: `H_min >= 0`, or the maximum lies on the critical set.
    pub applicable: bool,
    /// `-min over the critical set of F(0, u)`
    pub bound: f64,
    /// `min over nodes of (bound - λ₁)`
    pub worst_margin: f64,
    /// `min over nodes of Φ(u) - Φ(m) - ½|∇u|²` for the family `½p² + Φ(q)`.
    pub semilinear_worst_margin: Option<f64>,
    pub holds: bool,
    pub tolerance: f64,
}

/// Checks `λ₁ <= -min over C_u of F(0, u)` at every node and, for the family
/// `½p² + Φ(q)`, the bound `½|∇u|² <= Φ(u) - Φ(m)`.
pub fn gradient_bound_check(
    model: &LagrangianModel,
    sol: &SolveResult,
    report: &PReport,
    tolerance: f64,
) -> Result<GradientBound, PFunctionError> {
    let bound = report.critical_formula_value.ok_or(PFunctionError::NoCriticalSet { tol: report.p_crit_tol })?;
    let worst = report.lambda1_field.iter().map(|l| bound - l).fold(f64::INFINITY, f64::min);
    let semilinear = model.semilinear_potential().map(|phi| {
        let m = sol.solution_range.0;
        sol.u
            .iter()
            .zip(&sol.grad_u)
            .map(|(&u, g)| phi.value(u) - phi.value(m) - 0.5 * (g[0] * g[0] + g[1] * g[1]))
            .fold(f64::INFINITY, f64::min)
    });
    let applicable = report.h_min >= 0.0 || report.location_class == LocationClass::CriticalSet;
    let holds = worst >= -tolerance && semilinear.is_none_or(|e| e >= -tolerance);
    Ok(GradientBound { applicable, bound, worst_margin: worst, semilinear_worst_margin: semilinear, holds, tolerance })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub p: f64,
    pub q: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpConditions {
    pub samples: usize,
    /// smallest `F_pp = g + 2p² ∂g/∂p²`
    pub min_f_pp: PointValue,
    /// largest residual of the compatibility identity
    pub max_identity_residual: Option<PointValue>,
    /// smallest `∂Φ/∂p²`, which equals `F_pp / 2`
    pub min_phi_p2: Option<PointValue>,
    pub ellipticity_ok: bool,
    pub identity_ok: bool,
    pub monotone_ok: bool,
}

/// The three Payne–Philippin conditions over the realized `(p, q)` pairs of a
/// solution (nodes and boundary samples).
pub fn pp_conditions_along_solution(
    model: &LagrangianModel,
    sol: &SolveResult,
) -> Result<PpConditions, PFunctionError> {
    if !sol.converged {
        return Err(PFunctionError::Unconverged);
    }
    let pairs = sol
        .grad_u
        .iter()
        .zip(&sol.u)
        .map(|(g, &u)| (g[0].hypot(g[1]), u))
        .chain(sol.normal_derivative.iter().map(|d| (d.abs(), 0.0)));
    let mut min_fpp = PointValue { p: 0.0, q: 0.0, value: f64::INFINITY };
    let mut max_res: Option<PointValue> = None;
    let mut min_phi: Option<PointValue> = None;
    let mut n = 0;
    for (p, q) in pairs {
        n += 1;
        let j = jet(model, p, q)?;
        if j.f_pp < min_fpp.value {
            min_fpp = PointValue { p, q, value: j.f_pp };
        }
        if p > 0.0 {
            let r = model.pp_identity_residual(p, q).map_err(|source| PFunctionError::Model { p, q, source })?;
            if max_res.is_none_or(|m| r > m.value) {
                max_res = Some(PointValue { p, q, value: r });
            }
            let t = crate::lagrangian::PayneTerms::new(&j, p);
            if min_phi.is_none_or(|m| t.phi_p2 < m.value) {
                min_phi = Some(PointValue { p, q, value: t.phi_p2 });
            }
        }
    }
    Ok(PpConditions {
        samples: n,
        ellipticity_ok: min_fpp.value > 0.0,
        identity_ok: max_res.is_none_or(|r| r.value < 1e-11),
        monotone_ok: min_phi.is_none_or(|m| m.value > 0.0),
        min_f_pp: min_fpp,
        max_identity_residual: max_res,
        min_phi_p2: min_phi,
    })
}

/// Spread `max λ₁ - min λ₁` along the one-dimensional solution on `[-half, half]`,
/// where `λ₁` is a first integral of the equation.
pub fn interval_lambda1_spread(model: &LagrangianModel, half: f64, resolution: usize) -> Result<f64, PFunctionError> {
    let prof = solve_radial(model, 1, (0.0, half), resolution)?;
    let l = prof.lambda1(model).map_err(|source| PFunctionError::Model { p: 0.0, q: 0.0, source })?;
    let hi = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = l.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(hi - lo)
}
