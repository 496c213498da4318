//! Radial Lagrangians `L(ξ, η) = F(|ξ|, η)` with exact second-order jets.
//!
//! Every model is compiled to an [`Expr`] and differentiated with [`Dual2`]
//! arithmetic, so the partials are exact up to rounding. Catalog models also
//! remember their potential `Φ(q)` so the quadratic-kinetic family
//! `½p² + Φ(q)` can be recognised by later analyses.
//!
//! [`Dual2`]: crate::jet::Dual2

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ParseError};

/// Below this gradient magnitude `g = F_p / p` is replaced by its limit `F_pp(0, q)`.
pub const ORIGIN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("gradient magnitude p = {p} is negative")]
    Domain { p: f64 },
    #[error("model is singular at (p, q) = ({p}, {q})")]
    Singular { p: f64, q: f64 },
    #[error("g = F_p/p has no finite limit at p = 0 (model is not smooth at the origin, q = {q})")]
    Limit { q: f64 },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("cannot parse expression: {0}")]
    Parse(#[from] ParseError),
}

/// Value and all partials of `F` up to second order at one `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub f: f64,
    pub f_p: f64,
    pub f_q: f64,
    pub f_pp: f64,
    pub f_pq: f64,
    pub f_qq: f64,
}

/// Potential part `Φ(q)` of the catalog models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    /// `slope * q + offset`
    Affine { slope: f64, offset: f64 },
    /// `scale * exp(rate * q)`
    Exponential { scale: f64, rate: f64 },
    /// `scale * (shift + q)^exponent`
    Power { scale: f64, shift: f64, exponent: f64 },
}

impl Potential {
    /// Builds a potential from its catalog name and positional parameters.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self, ModelError> {
        let want = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter(format!(
                    "potential '{name}' takes {n} parameters, got {}",
                    params.len()
                )))
            }
        };
        let pot = match name {
            "affine" => {
                want(2)?;
                Potential::Affine { slope: params[0], offset: params[1] }
            }
            "exponential" => {
                want(2)?;
                Potential::Exponential { scale: params[0], rate: params[1] }
            }
            "power" => {
                want(3)?;
                Potential::Power { scale: params[0], shift: params[1], exponent: params[2] }
            }
            other => return Err(ModelError::UnknownModel(format!("potential {other}"))),
        };
        if pot.parameters().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("non-finite potential parameter".into()));
        }
        Ok(pot)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::Affine { .. } => "affine",
            Potential::Exponential { .. } => "exponential",
            Potential::Power { .. } => "power",
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        match *self {
            Potential::Affine { slope, offset } => vec![slope, offset],
            Potential::Exponential { scale, rate } => vec![scale, rate],
            Potential::Power { scale, shift, exponent } => vec![scale, shift, exponent],
        }
    }

    fn expr(&self) -> Expr {
        let c = Expr::Const;
        let b = Box::new;
        match *self {
            Potential::Affine { slope, offset } => Expr::Add(b(Expr::Mul(b(c(slope)), b(Expr::Q))), b(c(offset))),
            Potential::Exponential { scale, rate } => {
                Expr::Mul(b(c(scale)), b(Expr::Exp(b(Expr::Mul(b(c(rate)), b(Expr::Q))))))
            }
            Potential::Power { scale, shift, exponent } => {
                Expr::Mul(b(c(scale)), b(Expr::Pow(b(Expr::Add(b(c(shift)), b(Expr::Q))), b(c(exponent)))))
            }
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        match *self {
            Potential::Affine { slope, offset } => slope * q + offset,
            Potential::Exponential { scale, rate } => scale * (rate * q).exp(),
            Potential::Power { scale, shift, exponent } => scale * pow_real(shift + q, exponent),
        }
    }

    /// `Φ'(q)`
    pub fn derivative(&self, q: f64) -> f64 {
        match *self {
            Potential::Affine { slope, .. } => slope,
            Potential::Exponential { scale, rate } => scale * rate * (rate * q).exp(),
            Potential::Power { scale, shift, exponent } => scale * exponent * pow_real(shift + q, exponent - 1.0),
        }
    }
}

fn pow_real(x: f64, k: f64) -> f64 {
    if k.fract() == 0.0 && k.abs() < i32::MAX as f64 {
        x.powi(k as i32)
    } else {
        x.powf(k)
    }
}

/// Gradient-dependent part of the catalog models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kinetic {
    /// `½ p²`
    Dirichlet,
    /// `p^m / m`
    Power { m: f64 },
    /// `sqrt(1 + p²)`
    MinimalSurface,
    /// user expression; no separation into kinetic and potential parts
    Custom,
}

#[derive(Debug, Clone)]
pub struct LagrangianModel {
    name: String,
    parameters: Vec<f64>,
    kinetic: Kinetic,
    potential: Option<Potential>,
    expr: Expr,
    smooth_at_origin: bool,
}

impl LagrangianModel {
    /// `F = ½p² + Φ(q)`
    pub fn dirichlet_potential(potential: Potential) -> Self {
        let expr = Expr::Add(
            Box::new(Expr::Mul(
                Box::new(Expr::Const(0.5)),
                Box::new(Expr::Pow(Box::new(Expr::P), Box::new(Expr::Const(2.0)))),
            )),
            Box::new(potential.expr()),
        );
        LagrangianModel {
            name: "dirichlet_potential".into(),
            parameters: Vec::new(),
            kinetic: Kinetic::Dirichlet,
            potential: Some(potential),
            expr,
            smooth_at_origin: true,
        }
    }

    /// `F = p^m/m + Φ(q)`, `m > 1`.
    pub fn power_dirichlet(m: f64, potential: Potential) -> Result<Self, ModelError> {
        if !(m > 1.0) || !m.is_finite() {
            return Err(ModelError::InvalidParameter(format!("power_dirichlet needs m > 1, got {m}")));
        }
        let expr = Expr::Add(
            Box::new(Expr::Div(
                Box::new(Expr::Pow(Box::new(Expr::P), Box::new(Expr::Const(m)))),
                Box::new(Expr::Const(m)),
            )),
            Box::new(potential.expr()),
        );
        Ok(LagrangianModel {
            name: "power_dirichlet".into(),
            parameters: vec![m],
            kinetic: Kinetic::Power { m },
            potential: Some(potential),
            expr,
            smooth_at_origin: true,
        })
    }

    /// `F = sqrt(1 + p²) + Φ(q)`
    pub fn regularized_minimal_surface(potential: Potential) -> Self {
        let one = || Box::new(Expr::Const(1.0));
        let expr = Expr::Add(
            Box::new(Expr::Sqrt(Box::new(Expr::Add(
                one(),
                Box::new(Expr::Pow(Box::new(Expr::P), Box::new(Expr::Const(2.0)))),
            )))),
            Box::new(potential.expr()),
        );
        LagrangianModel {
            name: "regularized_minimal_surface".into(),
            parameters: Vec::new(),
            kinetic: Kinetic::MinimalSurface,
            potential: Some(potential),
            expr,
            smooth_at_origin: true,
        }
    }

    /// A user expression in `p` and `q`. Smoothness at the origin is detected by
    /// checking `F_p(0, q) = 0` at a few values of `q`.
    pub fn custom(src: &str) -> Result<Self, ModelError> {
        let expr = Expr::parse(src)?;
        let smooth_at_origin = [-1.0, -0.25, 0.0, 0.25, 1.0].iter().all(|&q| {
            let j = expr.eval_jet(0.0, q);
            j.is_finite() && j.dp.abs() <= 1e-12
        });
        Ok(LagrangianModel {
            name: "custom".into(),
            parameters: Vec::new(),
            kinetic: Kinetic::Custom,
            potential: None,
            expr,
            smooth_at_origin,
        })
    }

    /// Catalog lookup by name. `potential` is required for every name except `custom`.
    pub fn from_name(name: &str, parameters: &[f64], potential: Option<Potential>) -> Result<Self, ModelError> {
        let need_potential = || {
            potential.clone().ok_or_else(|| ModelError::InvalidParameter(format!("model '{name}' needs a potential")))
        };
        match name {
            "dirichlet_potential" => {
                if !parameters.is_empty() {
                    return Err(ModelError::InvalidParameter("dirichlet_potential takes no parameters".into()));
                }
                Ok(Self::dirichlet_potential(need_potential()?))
            }
            "power_dirichlet" => {
                if parameters.len() != 1 {
                    return Err(ModelError::InvalidParameter("power_dirichlet takes [m]".into()));
                }
                Self::power_dirichlet(parameters[0], need_potential()?)
            }
            "regularized_minimal_surface" => {
                if !parameters.is_empty() {
                    return Err(ModelError::InvalidParameter("regularized_minimal_surface takes no parameters".into()));
                }
                Ok(Self::regularized_minimal_surface(need_potential()?))
            }
            other => Err(ModelError::UnknownModel(other.into())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn kinetic(&self) -> &Kinetic {
        &self.kinetic
    }

    pub fn potential(&self) -> Option<&Potential> {
        self.potential.as_ref()
    }

    /// `Φ` when the model belongs to the family `½p² + Φ(q)`.
    pub fn semilinear_potential(&self) -> Option<&Potential> {
        match self.kinetic {
            Kinetic::Dirichlet => self.potential.as_ref(),
            _ => None,
        }
    }

    pub fn smooth_at_origin(&self) -> bool {
        self.smooth_at_origin
    }

    pub fn expression(&self) -> &Expr {
        &self.expr
    }

    pub fn eval_jet(&self, p: f64, q: f64) -> Result<Jet2, ModelError> {
        if p < 0.0 || p.is_nan() {
            return Err(ModelError::Domain { p });
        }
        let d = self.expr.eval_jet(p, q);
        if !d.is_finite() {
            return Err(ModelError::Singular { p, q });
        }
        Ok(Jet2 { f: d.v, f_p: d.dp, f_q: d.dq, f_pp: d.dpp, f_pq: d.dpq, f_qq: d.dqq })
    }

    /// Coefficients of the divergence form `div(g ∇u) + h = 0`:
    /// `g = F_p / p` and `h = -F_q`.
    pub fn divergence_coefficients(&self, p: f64, q: f64) -> Result<(f64, f64), ModelError> {
        let jet = self.eval_jet(p, q)?;
        let g = if p > ORIGIN_EPS {
            jet.f_p / p
        } else {
            if !self.smooth_at_origin {
                return Err(ModelError::Limit { q });
            }
            self.eval_jet(0.0, q)?.f_pp
        };
        Ok((g, -jet.f_q))
    }

    /// `Φ(p², q) = p F_p - F`, the P-function candidate, at `(p, q)`.
    pub fn p_function(&self, p: f64, q: f64) -> Result<f64, ModelError> {
        let j = self.eval_jet(p, q)?;
        Ok(p * j.f_p - j.f)
    }

    /// Residual of the P-function compatibility equation. Every piece is built
    /// separately from the jet; the exact algebra cancels to zero.
    pub fn pp_identity_residual(&self, p: f64, q: f64) -> Result<f64, ModelError> {
        if !(p > 0.0) {
            return Err(ModelError::Domain { p });
        }
        let t = PayneTerms::new(&self.eval_jet(p, q)?, p);
        let p2 = p * p;
        let lhs = 2.0 * (t.h + p2 * t.dg_dq) * t.phi_p2;
        let rhs = (t.g + 2.0 * p2 * t.dg_dp2) * t.phi_q;
        Ok((lhs - rhs).abs())
    }

    pub fn check_hypotheses(&self, sample_box: SampleBox, samples: usize) -> HypothesisReport {
        check_hypotheses(self, sample_box, samples)
    }
}

/// Pieces of the divergence-form coefficients in the variables `(p², q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayneTerms {
    pub g: f64,
    pub h: f64,
    pub dg_dq: f64,
    pub dg_dp2: f64,
    pub phi_p2: f64,
    pub phi_q: f64,
}

impl PayneTerms {
    /// Requires `p > 0`.
    pub fn new(j: &Jet2, p: f64) -> Self {
        let g = j.f_p / p;
        let dg_dp = j.f_pp / p - j.f_p / (p * p);
        PayneTerms {
            g,
            h: -j.f_q,
            dg_dq: j.f_pq / p,
            // d/d(p²) = (1 / 2p) d/dp
            dg_dp2: dg_dp / (2.0 * p),
            phi_p2: (j.f_p + p * j.f_pp - j.f_p) / (2.0 * p),
            phi_q: p * j.f_pq - j.f_q,
        }
    }

    /// `g + 2p² ∂g/∂p²`, which reduces to `F_pp`.
    pub fn ellipticity(&self, p: f64) -> f64 {
        self.g + 2.0 * p * p * self.dg_dp2
    }
}

/// Axis-aligned sampling box in `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub p: (f64, f64),
    pub q: (f64, f64),
}

impl SampleBox {
    pub fn new(p: (f64, f64), q: (f64, f64)) -> Self {
        SampleBox { p, q }
    }

    /// The realized range of a solution inflated by `frac` of its width on every side
    /// (`p` stays non-negative).
    pub fn inflated(p_max: f64, q_range: (f64, f64), frac: f64) -> Self {
        let dq = (q_range.1 - q_range.0).abs();
        SampleBox { p: (0.0, p_max * (1.0 + frac)), q: (q_range.0 - frac * dq, q_range.1 + frac * dq) }
    }

    /// Deterministic point set: the four corners followed by `n` Halton points.
    pub fn points(&self, n: usize) -> Vec<(f64, f64)> {
        let (p0, p1) = self.p;
        let (q0, q1) = self.q;
        let mut pts = vec![(p0, q0), (p1, q0), (p0, q1), (p1, q1)];
        pts.extend((0..n).map(|i| {
            let (a, b) = halton2(i as u64);
            (p0 + a * (p1 - p0), q0 + b * (q1 - q0))
        }));
        pts
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton point `i` in bases 2 and 3 (index 0 is the origin).
pub fn halton2(i: u64) -> (f64, f64) {
    (radical_inverse(i, 2), radical_inverse(i, 3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisCondition {
    /// `F_pp > 0`
    Convexity,
    /// `F > 0`
    PositiveEnergy,
    /// `F < 0` and `p F_p - F > 0`
    NegativeEnergy,
    /// `F_q >= 0`
    MonotoneInQ,
    /// jet evaluation failed
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub condition: HypothesisCondition,
    pub p: f64,
    pub q: f64,
    /// The offending quantity; `None` for evaluation failures.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisReport {
    pub sample_box: SampleBox,
    pub samples: usize,
    pub convexity_ok: bool,
    pub min_f_pp: f64,
    pub case2_ok: bool,
    pub min_f: f64,
    pub case3_ok: bool,
    pub max_f: f64,
    pub min_p_function: f64,
    pub monotone_q_ok: bool,
    pub min_f_q: f64,
    pub violation_witnesses: Vec<Witness>,
}

impl HypothesisReport {
    /// Convexity plus one of the two sign cases.
    pub fn theorem_hypotheses_hold(&self) -> bool {
        self.convexity_ok && (self.case2_ok || self.case3_ok)
    }
}

fn check_hypotheses(model: &LagrangianModel, sample_box: SampleBox, samples: usize) -> HypothesisReport {
    let samples = samples.max(1);
    let mut rep = HypothesisReport {
        sample_box,
        samples,
        convexity_ok: true,
        min_f_pp: f64::INFINITY,
        case2_ok: true,
        min_f: f64::INFINITY,
        case3_ok: true,
        max_f: f64::NEG_INFINITY,
        min_p_function: f64::INFINITY,
        monotone_q_ok: true,
        min_f_q: f64::INFINITY,
        violation_witnesses: Vec::new(),
    };
    let seen = |rep: &mut HypothesisReport, w: Witness| {
        if !rep.violation_witnesses.iter().any(|x| x.condition == w.condition) {
            rep.violation_witnesses.push(w);
        }
    };
    for (p, q) in sample_box.points(samples) {
        let j = match model.eval_jet(p, q) {
            Ok(j) => j,
            Err(_) => {
                rep.convexity_ok = false;
                rep.case2_ok = false;
                rep.case3_ok = false;
                seen(&mut rep, Witness { condition: HypothesisCondition::Evaluation, p, q, value: None });
                continue;
            }
        };
        let phi = p * j.f_p - j.f;
        rep.min_f_pp = rep.min_f_pp.min(j.f_pp);
        rep.min_f = rep.min_f.min(j.f);
        rep.max_f = rep.max_f.max(j.f);
        rep.min_p_function = rep.min_p_function.min(phi);
        rep.min_f_q = rep.min_f_q.min(j.f_q);
        if !(j.f_pp > 0.0) {
            rep.convexity_ok = false;
            seen(&mut rep, Witness { condition: HypothesisCondition::Convexity, p, q, value: Some(j.f_pp) });
        }
        if !(j.f > 0.0) {
            rep.case2_ok = false;
            seen(&mut rep, Witness { condition: HypothesisCondition::PositiveEnergy, p, q, value: Some(j.f) });
        }
        if !(j.f < 0.0 && phi > 0.0) {
            rep.case3_ok = false;
            let value = if j.f < 0.0 { phi } else { j.f };
            seen(&mut rep, Witness { condition: HypothesisCondition::NegativeEnergy, p, q, value: Some(value) });
        }
        if !(j.f_q >= 0.0) {
            rep.monotone_q_ok = false;
            seen(&mut rep, Witness { condition: HypothesisCondition::MonotoneInQ, p, q, value: Some(j.f_q) });
        }
    }
    rep
}

impl Witness {
    /// Re-evaluates the witness and reports whether the violation is reproduced.
    pub fn reproduces(&self, model: &LagrangianModel) -> bool {
        let Ok(j) = model.eval_jet(self.p, self.q) else {
            return self.condition == HypothesisCondition::Evaluation;
        };
        let phi = self.p * j.f_p - j.f;
        match self.condition {
            HypothesisCondition::Convexity => !(j.f_pp > 0.0) && Some(j.f_pp) == self.value,
            HypothesisCondition::PositiveEnergy => !(j.f > 0.0) && Some(j.f) == self.value,
            HypothesisCondition::NegativeEnergy => {
                let v = if j.f < 0.0 { phi } else { j.f };
                !(j.f < 0.0 && phi > 0.0) && Some(v) == self.value
            }
            HypothesisCondition::MonotoneInQ => !(j.f_q >= 0.0) && Some(j.f_q) == self.value,
            HypothesisCondition::Evaluation => false,
        }
    }
}

/// Named catalog instances used by the test suites and the examples in the README.
pub fn catalog() -> Vec<(&'static str, LagrangianModel)> {
    let affine = |slope, offset| Potential::Affine { slope, offset };
    vec![
        ("torsion", LagrangianModel::dirichlet_potential(affine(1.0, 0.5))),
        ("shifted_torsion", LagrangianModel::dirichlet_potential(affine(1.0, -0.2))),
        (
            "dirichlet_exponential",
            LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 1.0, rate: 1.0 }),
        ),
        (
            "dirichlet_power",
            LagrangianModel::dirichlet_potential(Potential::Power { scale: 0.5, shift: 2.0, exponent: 2.0 }),
        ),
        ("power_dirichlet_m3", LagrangianModel::power_dirichlet(3.0, affine(1.0, 0.5)).expect("m > 1")),
        ("minimal_surface", LagrangianModel::regularized_minimal_surface(affine(1.0, 2.0))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torsion() -> LagrangianModel {
        LagrangianModel::dirichlet_potential(Potential::Affine { slope: 1.0, offset: 0.5 })
    }

    #[test]
    fn jet_of_torsion_lagrangian() {
        let j = torsion().eval_jet(1.0, 0.0).unwrap();
        assert_eq!(j.f, 1.0);
        assert_eq!(j.f_p, 1.0);
        assert_eq!(j.f_q, 1.0);
        assert_eq!(j.f_pp, 1.0);
        assert_eq!(j.f_pq, 0.0);
    }

    #[test]
    fn jet_of_minimal_surface_at_origin() {
        let m = LagrangianModel::custom("sqrt(1 + p^2)").unwrap();
        for q in [-3.0, 0.0, 7.5] {
            let j = m.eval_jet(0.0, q).unwrap();
            assert_eq!(j.f, 1.0);
            assert_eq!(j.f_p, 0.0);
            assert_eq!(j.f_pp, 1.0);
        }
        assert!(m.smooth_at_origin());
    }

    #[test]
    fn jet_matches_central_differences() {
        // F = ½p² + e^q at (2, 1): F_pq = 0, F_qq = e
        let m = LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 1.0, rate: 1.0 });
        let (p, q, d) = (2.0, 1.0, 1e-5);
        let jet = |p: f64, q: f64| m.eval_jet(p, q).unwrap();
        let j = jet(p, q);
        assert_eq!(j.f_pq, 0.0);
        assert!((j.f_qq - std::f64::consts::E).abs() < 1e-15);
        // second partials against central differences of the first partials
        let fd_qq = (jet(p, q + d).f_q - jet(p, q - d).f_q) / (2.0 * d);
        let fd_pq = (jet(p, q + d).f_p - jet(p, q - d).f_p) / (2.0 * d);
        let fd_pp = (jet(p + d, q).f_p - jet(p - d, q).f_p) / (2.0 * d);
        assert!((fd_qq - j.f_qq).abs() < 1e-8, "{fd_qq}");
        assert!((fd_pq - j.f_pq).abs() < 1e-8);
        assert!((fd_pp - j.f_pp).abs() < 1e-8);
        let fd_q = (jet(p, q + d).f - jet(p, q - d).f) / (2.0 * d);
        assert!((fd_q - j.f_q).abs() < 1e-8);
    }

    #[test]
    fn negative_gradient_magnitude_is_rejected() {
        assert_eq!(torsion().eval_jet(-1e-3, 0.0), Err(ModelError::Domain { p: -1e-3 }));
    }

    #[test]
    fn singular_points_are_reported() {
        let m = LagrangianModel::custom("log(q) + p^2").unwrap();
        assert!(matches!(m.eval_jet(0.5, -1.0), Err(ModelError::Singular { .. })));
    }

    #[test]
    fn divergence_coefficients_of_dirichlet_family() {
        let m = LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 2.0, rate: 1.0 });
        for (p, q) in [(0.0, 0.0), (1e-9, 0.3), (0.5, -1.0), (3.0, 2.0)] {
            let (g, h) = m.divergence_coefficients(p, q).unwrap();
            assert!((g - 1.0).abs() < 1e-15);
            assert!((h + 2.0 * q.exp()).abs() < 1e-14);
        }
        let ms = LagrangianModel::regularized_minimal_surface(Potential::Affine { slope: 0.0, offset: 0.0 });
        assert_eq!(ms.divergence_coefficients(0.0, 0.4).unwrap().0, 1.0);
    }

    #[test]
    fn quartic_g_vanishes_at_origin() {
        let m = LagrangianModel::custom("p^4/4 + q").unwrap();
        let g = |p: f64| m.divergence_coefficients(p, 0.0).unwrap().0;
        assert_eq!(g(0.0), 0.0);
        // g(p) = p², so linear extrapolation in p² from two small samples hits 0
        let (p1, p2) = (1e-3, 1e-4);
        let extrap = (g(p2) * p1 * p1 - g(p1) * p2 * p2) / (p1 * p1 - p2 * p2);
        assert!(extrap.abs() < 1e-18);
    }

    #[test]
    fn non_smooth_origin_has_no_limit() {
        let m = LagrangianModel::custom("p + q").unwrap();
        assert!(!m.smooth_at_origin());
        assert_eq!(m.divergence_coefficients(0.0, 0.5), Err(ModelError::Limit { q: 0.5 }));
        assert!(m.divergence_coefficients(0.5, 0.5).is_ok());
    }

    #[test]
    fn hypotheses_for_torsion_box() {
        let rep = torsion().check_hypotheses(SampleBox::new((0.0, 1.0), (-0.25, 0.0)), 200);
        assert!(rep.convexity_ok && rep.case2_ok && rep.monotone_q_ok);
        assert!(!rep.case3_ok);
        assert_eq!(rep.min_f, 0.25);
        assert_eq!(rep.min_f_pp, 1.0);
        assert!(rep.theorem_hypotheses_hold());
    }

    #[test]
    fn hypotheses_for_shifted_torsion_box() {
        let m = LagrangianModel::dirichlet_potential(Potential::Affine { slope: 1.0, offset: -0.2 });
        let rep = m.check_hypotheses(SampleBox::new((0.0, 0.5), (-0.25, 0.0)), 200);
        assert!(rep.case3_ok && !rep.case2_ok);
        assert!((rep.max_f - -0.075).abs() < 1e-15);
        assert!((rep.min_p_function - 0.2).abs() < 1e-15);
    }

    #[test]
    fn minimal_surface_is_case_two_only() {
        let m = LagrangianModel::custom("sqrt(1 + p^2)").unwrap();
        let rep = m.check_hypotheses(SampleBox::new((0.0, 5.0), (-3.0, 3.0)), 100);
        assert!(rep.case2_ok && !rep.case3_ok);
        let w = rep.violation_witnesses.iter().find(|w| w.condition == HypothesisCondition::NegativeEnergy).unwrap();
        assert!(w.reproduces(&m));
    }

    #[test]
    fn concave_model_yields_convexity_witness() {
        let m = LagrangianModel::custom("-p^2 + q").unwrap();
        let rep = m.check_hypotheses(SampleBox::new((0.0, 1.0), (0.0, 1.0)), 10);
        assert!(!rep.convexity_ok);
        let w = rep.violation_witnesses[0];
        assert_eq!(w.condition, HypothesisCondition::Convexity);
        assert!(w.reproduces(&m));
    }

    #[test]
    fn pp_identity_cancels() {
        for (_, m) in catalog() {
            assert!(m.pp_identity_residual(1.0, 0.0).unwrap() < 1e-12);
        }
        let m = LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 1.0, rate: 1.0 });
        assert!(m.pp_identity_residual(0.3, -2.0).unwrap() < 1e-12);
        assert!(matches!(m.pp_identity_residual(0.0, 0.0), Err(ModelError::Domain { .. })));
    }

    #[test]
    fn payne_terms_reduce_to_second_derivative() {
        for (_, m) in catalog() {
            for (p, q) in SampleBox::new((0.05, 2.0), (-1.0, 1.0)).points(50) {
                let j = m.eval_jet(p, q).unwrap();
                let t = PayneTerms::new(&j, p);
                assert!((t.ellipticity(p) - j.f_pp).abs() < 1e-12 * j.f_pp.abs().max(1.0));
                assert!((t.phi_p2 - 0.5 * j.f_pp).abs() < 1e-12 * j.f_pp.abs().max(1.0));
            }
        }
    }

    #[test]
    fn halton_prefix() {
        assert_eq!(halton2(0), (0.0, 0.0));
        assert_eq!(halton2(1), (0.5, 1.0 / 3.0));
        assert_eq!(halton2(2), (0.25, 2.0 / 3.0));
        assert_eq!(halton2(3), (0.75, 1.0 / 9.0));
    }

    #[test]
    fn catalog_lookup_validates() {
        let pot = Potential::from_name("affine", &[1.0, 0.5]).unwrap();
        assert!(LagrangianModel::from_name("power_dirichlet", &[0.5], Some(pot.clone())).is_err());
        assert!(LagrangianModel::from_name("power_dirichlet", &[3.0], None).is_err());
        assert!(LagrangianModel::from_name("nope", &[], Some(pot.clone())).is_err());
        assert!(Potential::from_name("affine", &[1.0]).is_err());
        let m = LagrangianModel::from_name("dirichlet_potential", &[], Some(pot)).unwrap();
        assert!(m.semilinear_potential().is_some());
    }
}
