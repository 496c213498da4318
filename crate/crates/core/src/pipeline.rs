//! End-to-end runs: hypotheses, solve, analyses, checks and the report.
//!
//! A run is split into a solve stage, whose state can be persisted to a
//! directory, and an analysis stage that can be repeated from that state.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::export::{self, ExportError};
use crate::geometry::{DiscreteDomain, Point, ShapeKind};
use crate::identities::{self, IdentityReport};
use crate::lagrangian::{HypothesisReport, LagrangianModel, SampleBox};
use crate::pfunction::{self, GradientBound, LocationClass, PReport, PpConditions};
use crate::solver::{solve_el, solve_radial, IterationRecord, SolveResult};
use crate::tensor::{self, Definiteness, DivergenceResidual, SpectralField, SpectralSummary};

/// Convexity is required before solving; checked on this box. It stays off
/// `p = 0` so that models degenerate only at vanishing gradient are admitted.
pub const PILOT_BOX: SampleBox = SampleBox { p: (1e-3, 1.0), q: (-1.0, 1.0) };
/// Relative inflation of the realized `(p, q)` range for the a-posteriori check.
pub const REALIZED_INFLATION: f64 = 0.1;
pub const RADIAL_RESOLUTION: usize = 4096;

pub const TOL_EXACT_ALGEBRA: f64 = 1e-10;
pub const TOL_TRACE: f64 = 1e-12;
pub const TOL_PP_IDENTITY: f64 = 1e-11;
pub const TOL_LAMBDA1_PATHS: f64 = 1e-12;
pub const TOL_IDENTITY: f64 = 2e-2;
pub const TOL_RADIAL: f64 = 5e-3;

/// Everything needed to solve, built and validated from a configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub model: LagrangianModel,
    pub domain: DiscreteDomain,
    pub x0: Point,
}

impl Prepared {
    pub fn new(config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let model = config.build_model()?;
        let domain = config.build_domain()?;
        let x0 = config.x0(domain.shape());
        Ok(Prepared { config, model, domain, x0 })
    }

    pub fn pilot_hypotheses(&self) -> HypothesisReport {
        self.model.check_hypotheses(PILOT_BOX, self.config.analysis.hypothesis_samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Unconverged,
    Failed,
    /// Not attempted because the pilot convexity check failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverLog {
    pub status: SolveStatus,
    pub error: Option<String>,
    pub residual_history: Vec<f64>,
    pub log: Vec<IterationRecord>,
    pub pilot: HypothesisReport,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub prepared: Prepared,
    pub log: SolverLog,
    pub solution: Option<SolveResult>,
    pub seconds: f64,
}

pub fn solve_stage(prepared: Prepared) -> Solved {
    let start = Instant::now();
    let pilot = prepared.pilot_hypotheses();
    let (log, solution) = if !pilot.convexity_ok {
        let log = SolverLog {
            status: SolveStatus::Skipped,
            error: Some("F is not strictly convex in p on the pilot box".into()),
            residual_history: Vec::new(),
            log: Vec::new(),
            pilot,
        };
        (log, None)
    } else {
        match solve_el(&prepared.model, &prepared.domain, &prepared.config.solver) {
            Ok(sol) => {
                let status = if sol.converged { SolveStatus::Converged } else { SolveStatus::Unconverged };
                let log = SolverLog {
                    status,
                    error: None,
                    residual_history: sol.residual_history.clone(),
                    log: sol.log.clone(),
                    pilot,
                };
                (log, Some(sol))
            }
            Err(e) => {
                let log = SolverLog {
                    status: SolveStatus::Failed,
                    error: Some(e.to_string()),
                    residual_history: Vec::new(),
                    log: Vec::new(),
                    pilot,
                };
                (log, None)
            }
        }
    };
    Solved { prepared, log, solution, seconds: start.elapsed().as_secs_f64() }
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("{0}")]
    Inconsistent(String),
}

impl Solved {
    /// Writes `config.toml`, `solver_log.json` and, when a field exists, `solution.csv`.
    pub fn persist(&self, dir: &Path) -> Result<(), ExportError> {
        export::create_dir(dir)?;
        let mut cfg = self.prepared.config.clone();
        cfg.output = None;
        export::write_text(&dir.join("config.toml"), &cfg.to_toml())?;
        export::write_json(&dir.join("solver_log.json"), &self.log)?;
        let sol_path = dir.join("solution.csv");
        match &self.solution {
            Some(sol) => export::write_solution_csv(&sol_path, &self.prepared.domain, &sol.u)?,
            None if sol_path.exists() => {
                std::fs::remove_file(&sol_path).map_err(|source| ExportError::Io { path: sol_path, source })?
            }
            None => {}
        }
        Ok(())
    }

    /// Rebuilds the solve state from a directory written by [`Solved::persist`].
    pub fn load(dir: &Path) -> Result<Self, StateError> {
        let config = RunConfig::load(&dir.join("config.toml"))?;
        let prepared = Prepared::new(config)?;
        let log: SolverLog = export::read_json(&dir.join("solver_log.json"))?;
        let sol_path = dir.join("solution.csv");
        let solution = match log.status {
            SolveStatus::Converged | SolveStatus::Unconverged => {
                let u = export::read_solution_csv(&sol_path, &prepared.domain)?;
                let sol = SolveResult::from_solution(
                    &prepared.domain,
                    u,
                    log.residual_history.clone(),
                    log.log.clone(),
                    log.status == SolveStatus::Converged,
                )
                .map_err(|e| StateError::Inconsistent(e.to_string()))?;
                Some(sol)
            }
            SolveStatus::Failed | SolveStatus::Skipped => None,
        };
        let seconds = export::read_json::<Timings>(&dir.join("timings.json")).map_or(0.0, |t| t.solve_seconds);
        Ok(Solved { prepared, log, solution, seconds })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialComparison {
    pub resolution: usize,
    /// max over nodes of `|u - u_radial|`
    pub max_error: f64,
    /// max over boundary samples of `|∂_ν u - ∂_ν u_radial|`
    pub max_normal_derivative_error: f64,
}

/// Reference radial solution on discs and annuli.
pub fn radial_comparison(
    model: &LagrangianModel,
    dom: &DiscreteDomain,
    sol: &SolveResult,
) -> Option<Result<RadialComparison, String>> {
    let shape = dom.shape();
    let radii = match shape.kind {
        ShapeKind::Disc { radius } => (0.0, radius),
        ShapeKind::Annulus { inner, outer } => (inner, outer),
        _ => return None,
    };
    let prof = match solve_radial(model, 2, radii, RADIAL_RESOLUTION) {
        Ok(p) => p,
        Err(e) => return Some(Err(e.to_string())),
    };
    let c = shape.center;
    let rel = |x: Point| [x[0] - c[0], x[1] - c[1]];
    let max_error = dom
        .nodes()
        .iter()
        .zip(&sol.u)
        .map(|(n, &u)| {
            let d = rel(n.pos);
            (u - prof.value(d[0].hypot(d[1]))).abs()
        })
        .fold(0.0, f64::max);
    let max_normal_derivative_error = dom
        .boundary()
        .iter()
        .zip(&sol.normal_derivative)
        .map(|(s, &dn)| {
            let d = rel(s.point);
            let r = d[0].hypot(d[1]);
            let radial_dot_normal = (d[0] * s.normal[0] + d[1] * s.normal[1]) / r;
            (dn - radial_dot_normal * prof.derivative(r)).abs()
        })
        .fold(0.0, f64::max);
    Some(Ok(RadialComparison { resolution: RADIAL_RESOLUTION, max_error, max_normal_derivative_error }))
}

/// Results of the analysis stage, including the per-node fields for export.
#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub realized_hypotheses: Option<HypothesisReport>,
    pub radial: Option<RadialComparison>,
    pub spectral: Option<SpectralField>,
    pub divergence: Option<DivergenceResidual>,
    pub pfunction: Option<PReport>,
    pub gradient_bound: Option<GradientBound>,
    pub pp_conditions: Option<PpConditions>,
    pub identities: Option<IdentityReport>,
    pub flux_density: Option<Vec<f64>>,
    pub semilinear_density: Option<Vec<f64>>,
    /// `max |λ₁(P-function) - λ₁(tensor)|` over nodes and boundary samples.
    pub lambda1_path_gap: Option<f64>,
    pub errors: Vec<String>,
    pub notes: Vec<String>,
    pub seconds: BTreeMap<String, f64>,
}

fn timed<T>(seconds: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    seconds.insert(name.into(), start.elapsed().as_secs_f64());
    out
}

pub fn analyze(solved: &Solved) -> Analysis {
    let mut a = Analysis::default();
    let p = &solved.prepared;
    let (model, dom, cfg) = (&p.model, &p.domain, &p.config.analysis);
    if !p.domain.shape().is_smooth() {
        a.notes.push("theorem hypotheses not met: the boundary has corners".into());
    }
    a.notes.push("classical regularity of u is assumed, not verified".into());
    let Some(sol) = solved.solution.as_ref().filter(|s| s.converged) else {
        a.notes.push("no converged solution; analyses skipped".into());
        return a;
    };
    let mut seconds = BTreeMap::new();

    if cfg.hypotheses {
        let bx = SampleBox::inflated(sol.gradient_range.1, sol.solution_range, REALIZED_INFLATION);
        a.realized_hypotheses =
            Some(timed(&mut seconds, "hypotheses", || model.check_hypotheses(bx, cfg.hypothesis_samples)));
    }

    match timed(&mut seconds, "radial", || radial_comparison(model, dom, sol)) {
        Some(Ok(r)) => a.radial = Some(r),
        Some(Err(e)) => a.notes.push(format!("radial reference unavailable: {e}")),
        None => {}
    }

    if cfg.tensor {
        match timed(&mut seconds, "tensor", || tensor::spectral_field(model, dom, sol)) {
            Ok(field) => {
                let t: Vec<_> = field.nodes.iter().map(|n| n.t).collect();
                a.divergence = Some(timed(&mut seconds, "divergence", || tensor::divergence_residual(dom, &t)));
                a.spectral = Some(field);
            }
            Err(e) => a.errors.push(format!("tensor: {e}")),
        }
    }

    if cfg.pfunction {
        let res = timed(&mut seconds, "pfunction", || {
            let rep = pfunction::locate_max(model, sol, dom)?;
            let pp = pfunction::pp_conditions_along_solution(model, sol)?;
            Ok::<_, pfunction::PFunctionError>((rep, pp))
        });
        match res {
            Ok((rep, pp)) => {
                match pfunction::gradient_bound_check(model, sol, &rep, rep.equality_tolerance) {
                    Ok(g) => a.gradient_bound = Some(g),
                    Err(e) => a.notes.push(format!("gradient bound not evaluated: {e}")),
                }
                if let Some(field) = &a.spectral {
                    let gap = rep
                        .lambda1_field
                        .iter()
                        .zip(&field.nodes)
                        .chain(rep.lambda1_boundary.iter().zip(&field.boundary))
                        .map(|(l, t)| (l - t.lambda1).abs() / l.abs().max(1.0))
                        .fold(0.0, f64::max);
                    a.lambda1_path_gap = Some(gap);
                }
                a.pfunction = Some(rep);
                a.pp_conditions = Some(pp);
            }
            Err(e) => a.errors.push(format!("pfunction: {e}")),
        }
    }

    if cfg.identities {
        if !dom.shape().contains(p.x0) {
            a.notes.push("x0 lies outside the domain; the identities still hold for any x0".into());
        }
        let res = timed(&mut seconds, "identities", || {
            let rep = identities::identity_report(model, sol, dom, p.x0)?;
            let dens = identities::flux_boundary_density(model, sol, dom, p.x0)?;
            Ok::<_, identities::IdentityError>((rep, dens))
        });
        match res {
            Ok((rep, dens)) => {
                a.identities = Some(rep);
                a.flux_density = Some(dens);
                a.semilinear_density = model
                    .semilinear_potential()
                    .map(|phi| identities::semilinear_boundary_density(phi, sol, dom, p.x0));
            }
            Err(e) => a.errors.push(format!("identities: {e}")),
        }
    }
    a.seconds = seconds;
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// A claim that must hold on every converged run; failure is exit code 3.
    Invariant,
    /// A hypothesis on the realized range; failure is exit code 2 in strict mode.
    Hypothesis,
    /// A discretization-accuracy target; reported only.
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value <= tolerance`
    AtMost,
    /// `value >= tolerance`
    AtLeast,
    /// `value > tolerance`
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
    pub severity: Severity,
}

impl Check {
    pub fn new(name: &str, value: f64, relation: Relation, tolerance: f64, severity: Severity) -> Self {
        let pass = Self::evaluate(value, relation, tolerance);
        Check { name: name.into(), value, tolerance, relation, pass, severity }
    }

    fn evaluate(value: f64, relation: Relation, tolerance: f64) -> bool {
        match relation {
            Relation::AtMost => value <= tolerance,
            Relation::AtLeast => value >= tolerance,
            Relation::Above => value > tolerance,
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn checks(solved: &Solved, a: &Analysis) -> Vec<Check> {
    use Relation::*;
    use Severity::*;
    let mut out = Vec::new();
    let dom = &solved.prepared.domain;
    if !a.errors.is_empty() || solved.solution.as_ref().is_some_and(|s| s.converged) {
        out.push(Check::new("analysis.errors", a.errors.len() as f64, AtMost, 0.0, Invariant));
    }
    if let Some(h) = &a.realized_hypotheses {
        out.push(Check::new("hypotheses.convexity_min_f_pp", h.min_f_pp, Above, 0.0, Hypothesis));
        out.push(Check::new(
            "hypotheses.theorem_case_holds",
            flag(h.theorem_hypotheses_hold()),
            AtLeast,
            1.0,
            Hypothesis,
        ));
        out.push(Check::new("hypotheses.boundary_smooth", flag(dom.shape().is_smooth()), AtLeast, 1.0, Hypothesis));
    }
    if let Some(r) = &a.radial {
        out.push(Check::new("solver.radial_max_error", r.max_error, AtMost, TOL_RADIAL, Accuracy));
    }
    if let Some(f) = &a.spectral {
        let s = &f.summary;
        out.push(Check::new("tensor.asymmetry", s.max_asymmetry, AtMost, 0.0, Invariant));
        out.push(Check::new("tensor.spectrum_crosscheck", s.max_crosscheck, AtMost, TOL_EXACT_ALGEBRA, Invariant));
        out.push(Check::new("tensor.trace_defect", s.max_trace_defect, AtMost, TOL_TRACE, Invariant));
        out.push(Check::new(
            "tensor.det_defect_relative",
            s.max_det_defect_relative,
            AtMost,
            TOL_EXACT_ALGEBRA,
            Invariant,
        ));
        out.push(Check::new(
            "tensor.eigenvector_residual",
            s.max_eigvec_residual,
            AtMost,
            TOL_EXACT_ALGEBRA,
            Invariant,
        ));
        out.push(Check::new(
            "tensor.orthogonal_residual",
            s.max_orthogonal_residual,
            AtMost,
            TOL_EXACT_ALGEBRA,
            Invariant,
        ));
        if let Some(h) = &a.realized_hypotheses {
            let h_min = dom.boundary().iter().map(|b| b.curvature).fold(f64::INFINITY, f64::min);
            if h.convexity_ok && h.case3_ok {
                out.push(Check::new(
                    "tensor.positive_definite_in_case3",
                    flag(s.definiteness == Definiteness::PositiveDefinite),
                    AtLeast,
                    1.0,
                    Invariant,
                ));
            } else if h.convexity_ok && h.case2_ok && h_min >= 0.0 && dom.shape().is_smooth() {
                out.push(Check::new(
                    "tensor.negative_definite_in_case2",
                    flag(s.definiteness == Definiteness::NegativeDefinite),
                    AtLeast,
                    1.0,
                    Invariant,
                ));
            }
            if h.convexity_ok && (h.case2_ok || h.case3_ok) {
                out.push(Check::new("tensor.min_abs_det", s.min_abs_det, Above, 0.0, Invariant));
            }
        }
    }
    if let Some(p) = &a.pfunction {
        out.push(Check::new(
            "pfunction.max_not_interior_noncritical",
            flag(p.location_class == LocationClass::InteriorNoncritical),
            AtMost,
            0.0,
            Invariant,
        ));
        out.push(Check::new(
            "pfunction.two_branch_excess",
            p.two_branch_excess,
            AtMost,
            p.equality_tolerance,
            Invariant,
        ));
        if let Some(gap) = p.critical_equality_gap {
            out.push(Check::new("pfunction.critical_branch_equality", gap, AtMost, p.equality_tolerance, Invariant));
        }
        if let Some(gap) = a.lambda1_path_gap {
            out.push(Check::new("pfunction.lambda1_matches_tensor", gap, AtMost, TOL_LAMBDA1_PATHS, Invariant));
        }
    }
    if let Some(g) = &a.gradient_bound {
        if g.applicable {
            out.push(Check::new("pfunction.gradient_bound_margin", g.worst_margin, AtLeast, -g.tolerance, Invariant));
            if let Some(e) = g.semilinear_worst_margin {
                out.push(Check::new("pfunction.semilinear_gradient_bound_margin", e, AtLeast, -g.tolerance, Invariant));
            }
        }
    }
    if let Some(pp) = &a.pp_conditions {
        out.push(Check::new("pfunction.ppc1_min_f_pp", pp.min_f_pp.value, Above, 0.0, Invariant));
        if let Some(r) = pp.max_identity_residual {
            out.push(Check::new("pfunction.ppc2_identity_residual", r.value, AtMost, TOL_PP_IDENTITY, Invariant));
        }
        if let Some(m) = pp.min_phi_p2 {
            out.push(Check::new("pfunction.ppc3_min_phi_p2", m.value, Above, 0.0, Invariant));
        }
    }
    if let Some(r) = &a.identities {
        out.push(Check::new(
            "identities.vanishing_term",
            r.dirichlet_vanishing_term.abs(),
            AtMost,
            TOL_EXACT_ALGEBRA,
            Invariant,
        ));
        out.push(Check::new("identities.flux_residual", r.flux_residual, AtMost, TOL_IDENTITY, Accuracy));
        out.push(Check::new("identities.dirichlet_residual", r.dirichlet_residual, AtMost, TOL_IDENTITY, Accuracy));
        out.push(Check::new(
            "identities.integration_by_parts",
            r.integration_by_parts_defect.abs(),
            AtMost,
            TOL_IDENTITY,
            Accuracy,
        ));
        if let Some(e) = r.semilinear_residual {
            out.push(Check::new("identities.semilinear_residual", e, AtMost, TOL_IDENTITY, Accuracy));
        }
        if r.obstruction.contradiction {
            out.push(Check::new("identities.no_sign_contradiction", 1.0, AtMost, 0.0, Invariant));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Unconverged,
    HypothesisViolation,
    InvariantViolation,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Unconverged => 1,
            Outcome::HypothesisViolation => 2,
            Outcome::InvariantViolation => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSummary {
    pub shape: String,
    pub spacing: f64,
    pub nodes: usize,
    pub boundary_samples: usize,
    pub boundary_components: usize,
    pub discrete_area: f64,
    pub exact_area: f64,
    pub min_curvature: f64,
    pub x0: Point,
    pub star_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub error: Option<String>,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub residual_tol: f64,
    pub solution_range: Option<(f64, f64)>,
    pub max_gradient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceSummary {
    pub norm: f64,
    pub collar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub config: RunConfig,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub strict: bool,
    pub domain: DomainSummary,
    pub pilot_hypotheses: HypothesisReport,
    pub solver: SolverSummary,
    pub realized_hypotheses: Option<HypothesisReport>,
    pub radial_reference: Option<RadialComparison>,
    pub spectral: Option<SpectralSummary>,
    pub divergence: Option<DivergenceSummary>,
    pub pfunction: Option<PReport>,
    pub gradient_bound: Option<GradientBound>,
    pub pp_conditions: Option<PpConditions>,
    pub identities: Option<IdentityReport>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

pub fn outcome(solved: &Solved, checks: &[Check], strict: bool) -> Outcome {
    match solved.log.status {
        SolveStatus::Skipped => return Outcome::HypothesisViolation,
        SolveStatus::Failed | SolveStatus::Unconverged => return Outcome::Unconverged,
        SolveStatus::Converged => {}
    }
    let failed = |s: Severity| checks.iter().any(|c| c.severity == s && !c.pass);
    if failed(Severity::Invariant) {
        Outcome::InvariantViolation
    } else if strict && failed(Severity::Hypothesis) {
        Outcome::HypothesisViolation
    } else {
        Outcome::Ok
    }
}

pub fn build_report(solved: &Solved, a: &Analysis, strict: bool) -> RunReport {
    let p = &solved.prepared;
    let dom = &p.domain;
    let checks = checks(solved, a);
    let outcome = outcome(solved, &checks, strict);
    let mut config = p.config.clone();
    config.output = None;
    let sol = solved.solution.as_ref();
    let mut notes = a.notes.clone();
    notes.extend(a.errors.iter().map(|e| format!("analysis error: {e}")));
    if let Some(e) = &solved.log.error {
        notes.push(format!("solver: {e}"));
    }
    RunReport {
        config,
        outcome,
        exit_code: outcome.exit_code(),
        strict,
        domain: DomainSummary {
            shape: dom.shape().name().into(),
            spacing: dom.spacing(),
            nodes: dom.len(),
            boundary_samples: dom.boundary().len(),
            boundary_components: dom.boundary_components(),
            discrete_area: dom.volume_integral(&vec![1.0; dom.len()]),
            exact_area: dom.shape().area(),
            min_curvature: dom.boundary().iter().map(|s| s.curvature).fold(f64::INFINITY, f64::min),
            x0: p.x0,
            star_margin: dom.star_center_margin(p.x0),
        },
        pilot_hypotheses: solved.log.pilot.clone(),
        solver: SolverSummary {
            status: solved.log.status,
            error: solved.log.error.clone(),
            iterations: solved.log.log.len(),
            final_residual: solved.log.residual_history.last().copied(),
            residual_tol: p.config.solver.residual_tol,
            solution_range: sol.map(|s| s.solution_range),
            max_gradient: sol.map(|s| s.gradient_range.1),
        },
        realized_hypotheses: a.realized_hypotheses.clone(),
        radial_reference: a.radial.clone(),
        spectral: a.spectral.as_ref().map(|f| f.summary.clone()),
        divergence: a.divergence.as_ref().map(|d| DivergenceSummary { norm: d.norm, collar: d.collar }),
        pfunction: a.pfunction.clone(),
        gradient_bound: a.gradient_bound.clone(),
        pp_conditions: a.pp_conditions.clone(),
        identities: a.identities.clone(),
        checks,
        notes,
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Strict parse plus internal consistency: unknown keys are rejected, every
    /// check's verdict must follow from its value and tolerance, and the exit
    /// code must follow from the outcome.
    pub fn validate_json(src: &str) -> Result<RunReport, String> {
        let rep: RunReport = serde_json::from_str(src).map_err(|e| e.to_string())?;
        for c in &rep.checks {
            if Check::evaluate(c.value, c.relation, c.tolerance) != c.pass {
                return Err(format!("check '{}' verdict does not follow from its value", c.name));
            }
        }
        if rep.exit_code != rep.outcome.exit_code() {
            return Err(format!("exit code {} does not match outcome {:?}", rep.exit_code, rep.outcome));
        }
        if rep.outcome == Outcome::Ok && rep.checks.iter().any(|c| c.severity == Severity::Invariant && !c.pass) {
            return Err("failed invariant check in a report with outcome ok".into());
        }
        Ok(rep)
    }
}

/// Writes `fields.csv` and `boundary.csv` when a solution exists.
pub fn write_fields(dir: &Path, solved: &Solved, a: &Analysis) -> Result<(), ExportError> {
    export::create_dir(dir)?;
    let Some(sol) = &solved.solution else {
        return Ok(());
    };
    let dom = &solved.prepared.domain;
    export::write_fields_csv(
        &dir.join("fields.csv"),
        dom,
        &sol.u,
        &sol.grad_u,
        a.spectral.as_ref(),
        a.divergence.as_ref().map(|d| d.field.as_slice()),
    )?;
    export::write_boundary_csv(
        &dir.join("boundary.csv"),
        dom,
        &sol.normal_derivative,
        a.pfunction.as_ref().map(|p| p.lambda1_boundary.as_slice()),
        a.flux_density.as_deref(),
        a.semilinear_density.as_deref(),
    )
}

/// Writes `report.json`, `fields.csv` and `boundary.csv`.
pub fn write_outputs(dir: &Path, solved: &Solved, a: &Analysis, report: &RunReport) -> Result<(), ExportError> {
    write_fields(dir, solved, a)?;
    export::write_text(&dir.join("report.json"), &report.to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub solve_seconds: f64,
    pub analysis_seconds: BTreeMap<String, f64>,
}

pub fn write_timings(dir: &Path, solved: &Solved, a: &Analysis) -> Result<(), ExportError> {
    export::write_json(
        &dir.join("timings.json"),
        &Timings { solve_seconds: solved.seconds, analysis_seconds: a.seconds.clone() },
    )
}

/// Solve, analyse and report in one call.
pub fn run_pipeline(config: RunConfig) -> Result<(Solved, Analysis, RunReport), ConfigError> {
    let strict = config.analysis.strict;
    let solved = solve_stage(Prepared::new(config)?);
    let analysis = analyze(&solved);
    let report = build_report(&solved, &analysis, strict);
    Ok((solved, analysis, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torsion(offset: f64, shape: &str, params: &str, h: f64) -> RunConfig {
        RunConfig::from_toml(&format!(
            r#"
[model]
name = "dirichlet_potential"
potential = "affine"
potential_parameters = [1.0, {offset}]
[domain]
shape = "{shape}"
parameters = {params}
spacing = {h}
"#
        ))
        .unwrap()
    }

    #[test]
    fn torsion_disc_is_clean() {
        let (_, _, rep) = run_pipeline(torsion(0.5, "disc", "[1.0]", 1.0 / 16.0)).unwrap();
        let failed: Vec<_> = rep.checks.iter().filter(|c| !c.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert_eq!(rep.outcome, Outcome::Ok);
        assert_eq!(rep.spectral.as_ref().unwrap().definiteness, Definiteness::NegativeDefinite);
        let back = RunReport::validate_json(&rep.to_json()).unwrap();
        assert_eq!(back.to_json(), rep.to_json());
    }

    #[test]
    fn annulus_notes_x0_outside() {
        let (_, _, rep) = run_pipeline(torsion(0.5, "annulus", "[0.3, 1.0]", 1.0 / 16.0)).unwrap();
        assert!(rep.notes.iter().any(|n| n.contains("x0 lies outside")));
        assert!(rep.domain.min_curvature < 0.0);
        assert_ne!(rep.outcome, Outcome::InvariantViolation);
    }

    #[test]
    fn rectangle_flags_corners() {
        let (_, _, rep) = run_pipeline(torsion(0.5, "rectangle", "[2.0, 1.0]", 1.0 / 16.0)).unwrap();
        assert!(rep.notes.iter().any(|n| n.contains("theorem hypotheses not met")));
        let mut strict = torsion(0.5, "rectangle", "[2.0, 1.0]", 1.0 / 16.0);
        strict.analysis.strict = true;
        let (_, _, rep) = run_pipeline(strict).unwrap();
        assert_eq!(rep.exit_code, 2);
    }

    #[test]
    fn non_convex_model_skips_the_solve() {
        let cfg = RunConfig::from_toml(
            r#"
[model]
name = "custom"
expression = "q - 0.5*p^2"
[domain]
shape = "disc"
parameters = [1.0]
spacing = 0.125
"#,
        )
        .unwrap();
        let (solved, _, rep) = run_pipeline(cfg).unwrap();
        assert_eq!(solved.log.status, SolveStatus::Skipped);
        assert_eq!(rep.exit_code, 2);
        assert!(!rep.pilot_hypotheses.violation_witnesses.is_empty());
    }

    #[test]
    fn unconverged_runs_give_partial_reports() {
        let mut cfg = torsion(0.5, "disc", "[1.0]", 1.0 / 16.0);
        cfg.model.potential = Some("exponential".into());
        cfg.model.potential_parameters = vec![1.0, 1.0];
        cfg.solver.max_iterations = 1;
        cfg.solver.newton_polish = false;
        let (_, _, rep) = run_pipeline(cfg).unwrap();
        assert_eq!(rep.exit_code, 1);
        assert!(rep.spectral.is_none() && rep.identities.is_none());
        RunReport::validate_json(&rep.to_json()).unwrap();
    }

    #[test]
    fn persisted_state_reproduces_the_report() {
        let cfg = torsion(-0.2, "ellipse", "[1.0, 0.7]", 1.0 / 16.0);
        let (solved, a, rep) = run_pipeline(cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        solved.persist(dir.path()).unwrap();
        let loaded = Solved::load(dir.path()).unwrap();
        let again = build_report(&loaded, &analyze(&loaded), false);
        assert_eq!(again.to_json(), rep.to_json());
        write_outputs(dir.path(), &solved, &a, &rep).unwrap();
        assert!(dir.path().join("fields.csv").exists());
    }
}
