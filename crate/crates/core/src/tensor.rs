//! Energy-momentum tensor `T = (F_p / p) ∇u ⊗ ∇u - F·Id` and its spectrum.
//!
//! `∇u` is an eigenvector with eigenvalue `λ₁ = p F_p - F`; every direction
//! orthogonal to it has eigenvalue `-F`. These closed forms are the primary
//! spectrum; a direct eigensolve of the assembled matrix is the cross-check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Arm, Direction, DiscreteDomain, Node};
use crate::lagrangian::{Jet2, LagrangianModel, ModelError, ORIGIN_EPS};
use crate::solver::SolveResult;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("refusing to analyse an unconverged solution")]
    Unconverged,
    #[error("model evaluation failed at p = {p}, q = {q}: {source}")]
    Model { p: f64, q: f64, source: ModelError },
}

/// Symmetric matrix of dimension 1 to 3 stored densely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    pub dim: usize,
    pub m: [[f64; 3]; 3],
}

impl SymTensor {
    pub fn scalar(dim: usize, s: f64) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = s;
        }
        SymTensor { dim, m }
    }

    pub fn apply(&self, x: &[f64]) -> [f64; 3] {
        let mut y = [0.0; 3];
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            *yi = (0..self.dim).map(|j| self.m[i][j] * x[j]).sum();
        }
        y
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.dim {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * self.m[i][j];
            }
        }
        s.sqrt()
    }

    /// `max |T_ij - T_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut a: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                a = a.max((self.m[i][j] - self.m[j][i]).abs());
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorPoint {
    pub t: SymTensor,
    pub lambda1: f64,
    /// Eigenvalue of multiplicity `n - 1`.
    pub lambda_rest: f64,
    pub p: f64,
    pub grad: [f64; 3],
    pub jet: Jet2,
}

/// Assembles `T` from the jet at `(p, u)` and the gradient (of length 1 to 3).
pub fn assemble_t(jet: &Jet2, grad: &[f64], p: f64) -> TensorPoint {
    let dim = grad.len();
    assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
    let mut g = [0.0; 3];
    g[..dim].copy_from_slice(grad);
    let mut t = SymTensor::scalar(dim, -jet.f);
    if p > ORIGIN_EPS {
        let c = jet.f_p / p;
        for i in 0..dim {
            for j in 0..dim {
                t.m[i][j] += c * g[i] * g[j];
            }
        }
        // the outer product is symmetric in exact arithmetic; keep it bitwise so
        for i in 0..dim {
            for j in 0..i {
                t.m[j][i] = t.m[i][j];
            }
        }
    }
    TensorPoint { t, lambda1: p * jet.f_p - jet.f, lambda_rest: -jet.f, p, grad: g, jet: *jet }
}

/// Eigenvalues in ascending order from the characteristic polynomial.
pub fn direct_eigenvalues(t: &SymTensor) -> Vec<f64> {
    let m = &t.m;
    let mut e = match t.dim {
        1 => vec![m[0][0]],
        2 => {
            let mean = 0.5 * (m[0][0] + m[1][1]);
            let r = (0.5 * (m[0][0] - m[1][1])).hypot(m[0][1]);
            vec![mean - r, mean + r]
        }
        _ => {
            let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
            if p1 == 0.0 {
                vec![m[0][0], m[1][1], m[2][2]]
            } else {
                let q = t.trace() / 3.0;
                let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
                let p = (p2 / 6.0).sqrt();
                let mut b = *t;
                for (i, row) in b.m.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = (m[i][j] - if i == j { q } else { 0.0 }) / p;
                    }
                }
                let r = (0.5 * b.det()).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                let e1 = q + 2.0 * p * phi.cos();
                let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
                vec![e1, 3.0 * q - e1 - e3, e3]
            }
        }
    };
    e.sort_by(f64::total_cmp);
    e
}

/// Closed-form eigenvalues `{λ₁, λ_rest × (n-1)}` in ascending order.
pub fn closed_form_eigenvalues(point: &TensorPoint) -> Vec<f64> {
    let mut e = vec![point.lambda_rest; point.t.dim];
    e[0] = point.lambda1;
    e.sort_by(f64::total_cmp);
    e
}

/// `max |closed form - direct|` over the sorted spectra.
pub fn spectrum_crosscheck(point: &TensorPoint) -> f64 {
    closed_form_eigenvalues(point)
        .iter()
        .zip(direct_eigenvalues(&point.t))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetTrace {
    /// `λ₁ (-F)^{n-1}`
    pub det: f64,
    /// `p F_p - n F`
    pub trace: f64,
    pub det_direct: f64,
    pub trace_direct: f64,
    /// `(p F_p - F) F^{n-1}`, the form without the sign of the repeated eigenvalue.
    pub det_unsigned: f64,
}

pub fn det_trace(point: &TensorPoint, n: usize) -> DetTrace {
    let j = &point.jet;
    let k = n as i32 - 1;
    DetTrace {
        det: point.lambda1 * (-j.f).powi(k),
        trace: point.p * j.f_p - n as f64 * j.f,
        det_direct: point.t.det(),
        trace_direct: point.t.trace(),
        det_unsigned: (point.p * j.f_p - j.f) * j.f.powi(k),
    }
}

/// Residuals of the two eigen-relations, `‖T∇u - λ₁∇u‖ / (‖T‖‖∇u‖)` and
/// `‖TX + F X‖ / ‖T‖` for a unit `X ⟂ ∇u` (2D and 3D only).
pub fn eigen_residuals(point: &TensorPoint) -> (f64, f64) {
    let dim = point.t.dim;
    let tn = point.t.norm().max(f64::MIN_POSITIVE);
    let g = &point.grad[..dim];
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r1 = if point.p > ORIGIN_EPS {
        let tg = point.t.apply(g);
        (0..dim).map(|i| (tg[i] - point.lambda1 * g[i]).powi(2)).sum::<f64>().sqrt() / (tn * gn)
    } else {
        0.0
    };
    let x: [f64; 3] = match dim {
        1 => return (r1, 0.0),
        2 if gn > 0.0 => [-g[1] / gn, g[0] / gn, 0.0],
        3 if gn > 0.0 => {
            // any unit vector orthogonal to ∇u
            let e = if g[0].abs() <= g[1].abs() && g[0].abs() <= g[2].abs() {
                [1.0, 0.0, 0.0]
            } else if g[1].abs() <= g[2].abs() {
                [0.0, 1.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            };
            let c = [g[1] * e[2] - g[2] * e[1], g[2] * e[0] - g[0] * e[2], g[0] * e[1] - g[1] * e[0]];
            let cn = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            [c[0] / cn, c[1] / cn, c[2] / cn]
        }
        _ => [1.0, 0.0, 0.0],
    };
    let tx = point.t.apply(&x);
    let r2 = (0..dim).map(|i| (tx[i] + point.jet.f * x[i]).powi(2)).sum::<f64>().sqrt() / tn;
    (r1, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    NegativeDefinite,
    PositiveDefinite,
    Indefinite,
    Degenerate,
}

/// Where the supremum of `λ₁` over the closure is attained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationClass {
    CriticalSet,
    Boundary,
    InteriorNoncritical,
}

/// Critical-set threshold on `|∇u|`, scaled with the grid.
pub fn p_crit_tol(spacing: f64, p_max: f64) -> f64 {
    (2.0 * spacing * p_max).max(1e-6)
}

/// Nodes this close to `∂Ω` cannot be told apart from the boundary at grid resolution.
pub fn boundary_collar(spacing: f64) -> f64 {
    spacing
}

/// Location class of a node attaining the supremum.
pub fn classify_node(node: &Node, p: f64, pcrit: f64, spacing: f64) -> LocationClass {
    if p <= pcrit {
        LocationClass::CriticalSet
    } else if node.boundary_distance <= boundary_collar(spacing) {
        LocationClass::Boundary
    } else {
        LocationClass::InteriorNoncritical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub definiteness: Definiteness,
    pub boundary_points_included: bool,
    /// `-(max eigenvalue)` over the closure when negative definite.
    pub uniform_constant_c: Option<f64>,
    /// `F(0, m)`, the constant the closed form predicts.
    pub f_at_origin_min: f64,
    /// `-F(0, m)`, the same constant with the opposite sign.
    pub c_opposite_sign: f64,
    pub max_eigenvalue: f64,
    pub min_eigenvalue: f64,
    pub degeneracy_tolerance: f64,
    pub min_abs_det: f64,
    pub sup_lambda1: f64,
    pub sup_location: [f64; 2],
    pub location_class: LocationClass,
    pub max_crosscheck: f64,
    pub max_asymmetry: f64,
    pub max_trace_defect: f64,
    pub max_det_defect_relative: f64,
    pub max_det_sign_discrepancy: f64,
    pub max_eigvec_residual: f64,
    pub max_orthogonal_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub nodes: Vec<TensorPoint>,
    pub boundary: Vec<TensorPoint>,
    pub summary: SpectralSummary,
}

fn jet_at(model: &LagrangianModel, p: f64, q: f64) -> Result<Jet2, TensorError> {
    model.eval_jet(p, q).map_err(|source| TensorError::Model { p, q, source })
}

/// Tensor at every node and, from `∇u = (∂_ν u) ν` and `q = 0`, at every boundary sample.
pub fn spectral_field(
    model: &LagrangianModel,
    dom: &DiscreteDomain,
    sol: &SolveResult,
) -> Result<SpectralField, TensorError> {
    if !sol.converged {
        return Err(TensorError::Unconverged);
    }
    let nodes: Result<Vec<TensorPoint>, TensorError> = sol
        .grad_u
        .par_iter()
        .zip(&sol.u)
        .map(|(g, &u)| {
            let p = g[0].hypot(g[1]);
            Ok(assemble_t(&jet_at(model, p, u)?, g, p))
        })
        .collect();
    let boundary: Result<Vec<TensorPoint>, TensorError> = dom
        .boundary()
        .par_iter()
        .zip(&sol.normal_derivative)
        .map(|(s, &dn)| {
            let g = [dn * s.normal[0], dn * s.normal[1]];
            let p = dn.abs();
            Ok(assemble_t(&jet_at(model, p, 0.0)?, &g, p))
        })
        .collect();
    let (nodes, boundary) = (nodes?, boundary?);
    let f0m = jet_at(model, 0.0, sol.solution_range.0)?.f;
    let summary = summarize(dom, &nodes, &boundary, true, f0m, sol.gradient_range.1);
    Ok(SpectralField { nodes, boundary, summary })
}

/// Recomputes the definiteness class and constant, with or without the boundary samples.
pub fn classify_definiteness(field: &mut SpectralField, dom: &DiscreteDomain, boundary_points_included: bool) {
    let s = &field.summary;
    let (f0m, pmax) = (s.f_at_origin_min, field.nodes.iter().chain(&field.boundary).map(|t| t.p).fold(0.0, f64::max));
    field.summary = summarize(dom, &field.nodes, &field.boundary, boundary_points_included, f0m, pmax);
}

fn summarize(
    dom: &DiscreteDomain,
    nodes: &[TensorPoint],
    boundary: &[TensorPoint],
    include_boundary: bool,
    f0m: f64,
    p_max: f64,
) -> SpectralSummary {
    let pts: Vec<&TensorPoint> =
        if include_boundary { nodes.iter().chain(boundary).collect() } else { nodes.iter().collect() };
    let (mut emax, mut emin, mut min_abs_det) = (f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut cross, mut asym, mut trd, mut detd, mut dsign, mut r1m, mut r2m) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for t in &pts {
        let dim = t.t.dim;
        let (hi, lo) = (t.lambda1.max(t.lambda_rest), t.lambda1.min(t.lambda_rest));
        emax = emax.max(hi);
        emin = emin.min(lo);
        let dt = det_trace(t, dim);
        min_abs_det = min_abs_det.min(dt.det.abs());
        cross = cross.max(spectrum_crosscheck(t));
        asym = asym.max(t.t.asymmetry());
        trd = trd.max((dt.trace_direct - (t.lambda1 + (dim as f64 - 1.0) * t.lambda_rest)).abs());
        let scale = t.t.norm().powi(dim as i32).max(f64::MIN_POSITIVE);
        detd = detd.max((dt.det_direct - dt.det).abs() / scale);
        dsign = dsign.max((dt.det - dt.det_unsigned).abs());
        let (r1, r2) = eigen_residuals(t);
        r1m = r1m.max(r1);
        r2m = r2m.max(r2);
    }
    let scale = emax.abs().max(emin.abs());
    let tol = 1e-10 * scale;
    let degenerate = pts.iter().any(|t| t.lambda1.abs() <= tol || t.lambda_rest.abs() <= tol);
    let definiteness = if degenerate {
        Definiteness::Degenerate
    } else if emax < 0.0 {
        Definiteness::NegativeDefinite
    } else if emin > 0.0 {
        Definiteness::PositiveDefinite
    } else {
        Definiteness::Indefinite
    };

    let pcrit = p_crit_tol(dom.spacing(), p_max);
    let (mut sup, mut loc, mut class) = (f64::NEG_INFINITY, [0.0; 2], LocationClass::InteriorNoncritical);
    for (k, t) in nodes.iter().enumerate() {
        if t.lambda1 > sup {
            sup = t.lambda1;
            loc = dom.nodes()[k].pos;
            class = classify_node(&dom.nodes()[k], t.p, pcrit, dom.spacing());
        }
    }
    for (k, t) in boundary.iter().enumerate() {
        if t.lambda1 > sup {
            sup = t.lambda1;
            loc = dom.boundary()[k].point;
            class = LocationClass::Boundary;
        }
    }
    SpectralSummary {
        definiteness,
        boundary_points_included: include_boundary,
        uniform_constant_c: (definiteness == Definiteness::NegativeDefinite).then_some(-emax),
        f_at_origin_min: f0m,
        c_opposite_sign: -f0m,
        max_eigenvalue: emax,
        min_eigenvalue: emin,
        degeneracy_tolerance: tol,
        min_abs_det,
        sup_lambda1: sup,
        sup_location: loc,
        location_class: class,
        max_crosscheck: cross,
        max_asymmetry: asym,
        max_trace_defect: trd,
        max_det_defect_relative: detd,
        max_det_sign_discrepancy: dsign,
        max_eigvec_residual: r1m,
        max_orthogonal_residual: r2m,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceResidual {
    pub field: Vec<[f64; 2]>,
    /// ∞-norm over nodes at least `collar` away from the boundary.
    pub norm: f64,
    pub collar: f64,
}

/// Row-wise divergence of a 2D tensor field at the nodes: centered differences
/// where both neighbours exist, one-sided second-order stencils next to cuts.
pub fn divergence_residual(dom: &DiscreteDomain, t: &[SymTensor]) -> DivergenceResidual {
    let h = dom.spacing();
    let nodes = dom.nodes();
    let field: Vec<[f64; 2]> = nodes
        .par_iter()
        .enumerate()
        .map(|(k, n)| {
            let deriv = |plus: Direction, minus: Direction, comp: (usize, usize)| -> f64 {
                let v = |m: usize| t[m].m[comp.0][comp.1];
                match (n.arm(plus), n.arm(minus)) {
                    (Arm::Node(a), Arm::Node(b)) => (v(a) - v(b)) / (2.0 * h),
                    (Arm::Node(a), Arm::Cut(_)) => match nodes[a].arm(plus) {
                        Arm::Node(aa) => (-3.0 * v(k) + 4.0 * v(a) - v(aa)) / (2.0 * h),
                        Arm::Cut(_) => (v(a) - v(k)) / h,
                    },
                    (Arm::Cut(_), Arm::Node(b)) => match nodes[b].arm(minus) {
                        Arm::Node(bb) => (3.0 * v(k) - 4.0 * v(b) + v(bb)) / (2.0 * h),
                        Arm::Cut(_) => (v(k) - v(b)) / h,
                    },
                    (Arm::Cut(_), Arm::Cut(_)) => 0.0,
                }
            };
            let mut d = [0.0; 2];
            for (i, di) in d.iter_mut().enumerate() {
                *di =
                    deriv(Direction::East, Direction::West, (i, 0)) + deriv(Direction::North, Direction::South, (i, 1));
            }
            d
        })
        .collect();
    let collar = 2.0 * h;
    let norm = nodes
        .iter()
        .zip(&field)
        .filter(|(n, _)| n.boundary_distance >= collar)
        .map(|(_, d)| d[0].abs().max(d[1].abs()))
        .fold(0.0, f64::max);
    DivergenceResidual { field, norm, collar }
}
