//! Rellich–Pohozaev type integral identities.
//!
//! With `X = x - x₀` and zero Dirichlet data, integrating `div(T X)` over the
//! domain gives
//!
//! * `∫ (⟨∇u, L_ξ⟩ - nL) = ∮ ⟨X, Tν⟩`
//! * `∫ (-u F_q - nL) = ∮ (⟨X, Tν⟩ - u⟨L_ξ, ν⟩)`
//! * for `F = ½p² + Φ(q)`: `∫ ((2-n)/2 |∇u|² - nΦ(u)) = ∮ ⟨X, ν⟩ (½|∂_ν u|² - Φ(0))`
//!
//! The boundary tensor is rebuilt from `∇u = (∂_ν u) ν` and `q = 0`. Each pair
//! is reported together with the variant whose sign or coefficient differs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DiscreteDomain, Point};
use crate::lagrangian::{LagrangianModel, ModelError, Potential, ORIGIN_EPS};
use crate::solver::SolveResult;
use crate::tensor::assemble_t;

const N: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error("refusing to analyse an unconverged solution")]
    Unconverged,
    #[error("model evaluation failed at p = {p}, q = {q}: {source}")]
    Model { p: f64, q: f64, source: ModelError },
    #[error("the semilinear identity needs a model of the form ½p² + Φ(q)")]
    FamilyMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySides {
    pub volume: f64,
    pub boundary: f64,
    pub residual: f64,
}

impl IdentitySides {
    fn new(volume: f64, boundary: f64) -> Self {
        IdentitySides { volume, boundary, residual: (volume - boundary).abs() }
    }
}

fn jet(model: &LagrangianModel, p: f64, q: f64) -> Result<crate::lagrangian::Jet2, IdentityError> {
    model.eval_jet(p, q).map_err(|source| IdentityError::Model { p, q, source })
}

fn check(sol: &SolveResult) -> Result<(), IdentityError> {
    if sol.converged {
        Ok(())
    } else {
        Err(IdentityError::Unconverged)
    }
}

/// Per-sample boundary density `⟨y - x₀, T(y) ν(y)⟩`.
pub fn flux_boundary_density(
    model: &LagrangianModel,
    sol: &SolveResult,
    dom: &DiscreteDomain,
    x0: Point,
) -> Result<Vec<f64>, IdentityError> {
    dom.boundary()
        .iter()
        .zip(&sol.normal_derivative)
        .map(|(s, &dn)| {
            let p = dn.abs();
            let t = assemble_t(&jet(model, p, 0.0)?, &[dn * s.normal[0], dn * s.normal[1]], p);
            let tn = t.t.apply(&s.normal);
            Ok((s.point[0] - x0[0]) * tn[0] + (s.point[1] - x0[1]) * tn[1])
        })
        .collect()
}

/// Nodal integrand `⟨∇u, L_ξ⟩ - nF`.
fn flux_integrand(model: &LagrangianModel, sol: &SolveResult) -> Result<Vec<f64>, IdentityError> {
    sol.grad_u
        .iter()
        .zip(&sol.u)
        .map(|(g, &u)| {
            let p = g[0].hypot(g[1]);
            let j = jet(model, p, u)?;
            let dot = if p > ORIGIN_EPS { j.f_p * (g[0] * g[0] + g[1] * g[1]) / p } else { 0.0 };
            Ok(dot - N * j.f)
        })
        .collect()
}

pub fn verify_flux_identity(
    model: &LagrangianModel,
    sol: &SolveResult,
    dom: &DiscreteDomain,
    x0: Point,
) -> Result<IdentitySides, IdentityError> {
    check(sol)?;
    let vol = dom.volume_integral(&flux_integrand(model, sol)?);
    let bdry = dom.boundary_integral(&flux_boundary_density(model, sol, dom, x0)?);
    Ok(IdentitySides::new(vol, bdry))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletIdentity {
    pub sides: IdentitySides,
    /// `∫ (+u F_q - nF)`, the volume side with the opposite sign on the `u F_q` term.
    pub volume_opposite_sign: f64,
    /// `∮ u ⟨L_ξ, ν⟩` with the Dirichlet trace of `u`; zero by construction.
    pub vanishing_term: f64,
    /// `∫ (⟨∇u, L_ξ⟩ + u F_q)`, zero by integration by parts.
    pub integration_by_parts_defect: f64,
}

pub fn verify_dirichlet_identity(
    model: &LagrangianModel,
    sol: &SolveResult,
    dom: &DiscreteDomain,
    x0: Point,
) -> Result<DirichletIdentity, IdentityError> {
    check(sol)?;
    let mut volume = Vec::with_capacity(sol.u.len());
    let mut flipped = Vec::with_capacity(sol.u.len());
    let mut ibp = Vec::with_capacity(sol.u.len());
    for (g, &u) in sol.grad_u.iter().zip(&sol.u) {
        let p = g[0].hypot(g[1]);
        let j = jet(model, p, u)?;
        volume.push(-u * j.f_q - N * j.f);
        flipped.push(u * j.f_q - N * j.f);
        let dot = if p > ORIGIN_EPS { j.f_p * (g[0] * g[0] + g[1] * g[1]) / p } else { 0.0 };
        ibp.push(dot + u * j.f_q);
    }
    let trace = vec![0.0; dom.boundary().len()];
    let mut flux_term = Vec::with_capacity(trace.len());
    for ((s, &dn), &u) in dom.boundary().iter().zip(&sol.normal_derivative).zip(&trace) {
        let p = dn.abs();
        let j = jet(model, p, u)?;
        // L_ξ = F_p ∇u / p and ∇u = (∂_ν u) ν, so ⟨L_ξ, ν⟩ = F_p sgn(∂_ν u)
        let l_nu =
            if p > ORIGIN_EPS { j.f_p * dn / p * (s.normal[0] * s.normal[0] + s.normal[1] * s.normal[1]) } else { 0.0 };
        flux_term.push(u * l_nu);
    }
    let density = flux_boundary_density(model, sol, dom, x0)?;
    let combined: Vec<f64> = density.iter().zip(&flux_term).map(|(a, b)| a - b).collect();
    Ok(DirichletIdentity {
        sides: IdentitySides::new(dom.volume_integral(&volume), dom.boundary_integral(&combined)),
        volume_opposite_sign: dom.volume_integral(&flipped),
        vanishing_term: dom.boundary_integral(&flux_term),
        integration_by_parts_defect: dom.volume_integral(&ibp),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemilinearIdentity {
    pub sides: IdentitySides,
    /// Boundary side with density `½⟨X, ν⟩(|∂_ν u|² - Φ(0))`.
    pub boundary_halved_potential: f64,
    /// `∫|∇u|² + ∫ u Φ'(u)`, zero by integration by parts.
    pub integration_by_parts_defect: f64,
    /// `∫|∇u|² - ∫ u Φ'(u)`, the same relation with the opposite sign.
    pub integration_by_parts_opposite_sign: f64,
}

/// Boundary density `⟨X, ν⟩(½|∂_ν u|² - Φ(0))` per sample.
pub fn semilinear_boundary_density(phi: &Potential, sol: &SolveResult, dom: &DiscreteDomain, x0: Point) -> Vec<f64> {
    dom.boundary()
        .iter()
        .zip(&sol.normal_derivative)
        .map(|(s, &dn)| {
            let xn = (s.point[0] - x0[0]) * s.normal[0] + (s.point[1] - x0[1]) * s.normal[1];
            xn * (0.5 * dn * dn - phi.value(0.0))
        })
        .collect()
}

pub fn verify_semilinear_identity(
    model: &LagrangianModel,
    sol: &SolveResult,
    dom: &DiscreteDomain,
    x0: Point,
) -> Result<SemilinearIdentity, IdentityError> {
    check(sol)?;
    let phi = model.semilinear_potential().ok_or(IdentityError::FamilyMismatch)?;
    let p2: Vec<f64> = sol.grad_u.iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect();
    let vol: Vec<f64> = p2.iter().zip(&sol.u).map(|(p2, &u)| (2.0 - N) / 2.0 * p2 - N * phi.value(u)).collect();
    let halved: Vec<f64> = dom
        .boundary()
        .iter()
        .zip(&sol.normal_derivative)
        .map(|(s, &dn)| {
            let xn = (s.point[0] - x0[0]) * s.normal[0] + (s.point[1] - x0[1]) * s.normal[1];
            0.5 * xn * (dn * dn - phi.value(0.0))
        })
        .collect();
    let grad_sq = dom.volume_integral(&p2);
    let u_phi: Vec<f64> = sol.u.iter().map(|&u| u * phi.derivative(u)).collect();
    let u_phi = dom.volume_integral(&u_phi);
    Ok(SemilinearIdentity {
        sides: IdentitySides::new(
            dom.volume_integral(&vol),
            dom.boundary_integral(&semilinear_boundary_density(phi, sol, dom, x0)),
        ),
        boundary_halved_potential: dom.boundary_integral(&halved),
        integration_by_parts_defect: grad_sq + u_phi,
        integration_by_parts_opposite_sign: grad_sq - u_phi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    NonNegative,
    Negative,
    NonPositive,
    Unforced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstruction {
    pub star_margin: f64,
    pub applicable: bool,
    pub phi_at_zero: Option<f64>,
    /// Sign of the boundary side guaranteed by star-shapedness and `Φ(0)`.
    pub boundary_sign: Sign,
    /// Sign of `-nΦ` over the realized range of `u`.
    pub volume_sign: Sign,
    /// The forced signs contradict each other, so no solution can exist.
    pub contradiction: bool,
    pub note: String,
}

/// Sign inspection behind the nonexistence argument; a pure diagnostic.
pub fn nonexistence_obstruction(
    model: &LagrangianModel,
    dom: &DiscreteDomain,
    x0: Point,
    solution_range: Option<(f64, f64)>,
) -> Obstruction {
    let star_margin = dom.star_center_margin(x0);
    let Some(phi) = model.semilinear_potential() else {
        return Obstruction {
            star_margin,
            applicable: false,
            phi_at_zero: None,
            boundary_sign: Sign::Unforced,
            volume_sign: Sign::Unforced,
            contradiction: false,
            note: "model is not of the form ½p² + Φ(q)".into(),
        };
    };
    let phi0 = phi.value(0.0);
    if star_margin < 0.0 {
        return Obstruction {
            star_margin,
            applicable: false,
            phi_at_zero: Some(phi0),
            boundary_sign: Sign::Unforced,
            volume_sign: Sign::Unforced,
            contradiction: false,
            note: "domain is not star-shaped with respect to x0; the obstruction does not apply".into(),
        };
    }
    // ⟨X, ν⟩ >= 0, so the density ⟨X, ν⟩(½|∂_ν u|² - Φ(0)) is >= 0 when Φ(0) <= 0
    let boundary_sign = if phi0 < 0.0 { Sign::NonNegative } else { Sign::Unforced };
    let volume_sign = match solution_range {
        Some((lo, hi)) => {
            let vals: Vec<f64> = (0..=256).map(|i| phi.value(lo + (hi - lo) * i as f64 / 256.0)).collect();
            if vals.iter().all(|v| *v > 0.0) {
                Sign::Negative
            } else if vals.iter().all(|v| *v < 0.0) {
                Sign::Positive
            } else {
                Sign::Unforced
            }
        }
        None => Sign::Unforced,
    };
    let contradiction = boundary_sign == Sign::NonNegative && volume_sign == Sign::Negative;
    let note = if contradiction {
        "boundary side is forced non-negative while the volume side is forced negative".into()
    } else if boundary_sign == Sign::NonNegative {
        "boundary side is forced non-negative; the volume side is not sign-forced".into()
    } else {
        "no sign is forced on the boundary side".into()
    };
    Obstruction {
        star_margin,
        applicable: true,
        phi_at_zero: Some(phi0),
        boundary_sign,
        volume_sign,
        contradiction,
        note,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityReport {
    pub x0: Point,
    pub star_margin: f64,
    pub flux_volume: f64,
    pub flux_boundary: f64,
    pub flux_residual: f64,
    pub dirichlet_volume: f64,
    pub dirichlet_boundary: f64,
    pub dirichlet_residual: f64,
    pub dirichlet_volume_opposite_sign: f64,
    pub dirichlet_vanishing_term: f64,
    pub integration_by_parts_defect: f64,
    pub semilinear_volume: Option<f64>,
    pub semilinear_boundary: Option<f64>,
    pub semilinear_residual: Option<f64>,
    pub semilinear_boundary_halved_potential: Option<f64>,
    pub semilinear_integration_by_parts_defect: Option<f64>,
    pub semilinear_integration_by_parts_opposite_sign: Option<f64>,
    pub obstruction: Obstruction,
    pub notes: Vec<String>,
}

pub fn identity_report(
    model: &LagrangianModel,
    sol: &SolveResult,
    dom: &DiscreteDomain,
    x0: Point,
) -> Result<IdentityReport, IdentityError> {
    let flux = verify_flux_identity(model, sol, dom, x0)?;
    let dirichlet = verify_dirichlet_identity(model, sol, dom, x0)?;
    let ex = match verify_semilinear_identity(model, sol, dom, x0) {
        Ok(r) => Some(r),
        Err(IdentityError::FamilyMismatch) => None,
        Err(e) => return Err(e),
    };
    let mut notes = Vec::new();
    if !dom.shape().contains(x0) {
        notes.push("x0 lies outside the domain".into());
    }
    let obstruction = nonexistence_obstruction(model, dom, x0, Some(sol.solution_range));
    Ok(IdentityReport {
        x0,
        star_margin: obstruction.star_margin,
        flux_volume: flux.volume,
        flux_boundary: flux.boundary,
        flux_residual: flux.residual,
        dirichlet_volume: dirichlet.sides.volume,
        dirichlet_boundary: dirichlet.sides.boundary,
        dirichlet_residual: dirichlet.sides.residual,
        dirichlet_volume_opposite_sign: dirichlet.volume_opposite_sign,
        dirichlet_vanishing_term: dirichlet.vanishing_term,
        integration_by_parts_defect: dirichlet.integration_by_parts_defect,
        semilinear_volume: ex.map(|e| e.sides.volume),
        semilinear_boundary: ex.map(|e| e.sides.boundary),
        semilinear_residual: ex.map(|e| e.sides.residual),
        semilinear_boundary_halved_potential: ex.map(|e| e.boundary_halved_potential),
        semilinear_integration_by_parts_defect: ex.map(|e| e.integration_by_parts_defect),
        semilinear_integration_by_parts_opposite_sign: ex.map(|e| e.integration_by_parts_opposite_sign),
        obstruction,
        notes,
    })
}
