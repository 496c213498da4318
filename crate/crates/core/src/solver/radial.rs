//! Radial reduction of the Euler–Lagrange equation, solved by shooting.
//!
//! With `w = r^{n-1} sgn(u') F_p(|u'|, u)` the equation becomes the first-order
//! system `u' = sgn(w) P(|w| / r^{n-1}, u)`, `w' = r^{n-1} F_q(|u'|, u)`, where
//! `P(·, q)` inverts `p ↦ F_p(p, q)`. It is integrated with classical RK4.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lagrangian::{Kinetic, LagrangianModel, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadialError {
    #[error("radial dimension must be 1, 2 or 3, got {0}")]
    Dimension(usize),
    #[error("invalid radii ({inner}, {outer})")]
    Radii { inner: f64, outer: f64 },
    #[error("resolution must be at least 16, got {0}")]
    Resolution(usize),
    #[error("shooting did not converge: {0}")]
    Shooting(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `u(r)` on `[inner, outer]` with its derivative, at uniformly spaced radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub dimension: usize,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

impl RadialProfile {
    fn segment(&self, r: f64) -> (usize, f64, f64) {
        let n = self.r.len() - 1;
        let (r0, r1) = (self.r[0], self.r[n]);
        let r = r.clamp(r0, r1);
        let dr = (r1 - r0) / n as f64;
        let i = (((r - r0) / dr) as usize).min(n - 1);
        (i, (r - self.r[i]) / dr, dr)
    }

    /// Cubic Hermite interpolation of `u`.
    pub fn value(&self, r: f64) -> f64 {
        let (i, t, dr) = self.segment(r);
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.u[i]
            + (t3 - 2.0 * t2 + t) * dr * self.du[i]
            + (-2.0 * t3 + 3.0 * t2) * self.u[i + 1]
            + (t3 - t2) * dr * self.du[i + 1]
    }

    /// Derivative of the Hermite interpolant.
    pub fn derivative(&self, r: f64) -> f64 {
        let (i, t, dr) = self.segment(r);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * self.u[i]
            + (3.0 * t2 - 4.0 * t + 1.0) * dr * self.du[i]
            + (-6.0 * t2 + 6.0 * t) * self.u[i + 1]
            + (3.0 * t2 - 2.0 * t) * dr * self.du[i + 1])
            / dr
    }

    /// `|u'| F_p - F` along the profile.
    pub fn lambda1(&self, model: &LagrangianModel) -> Result<Vec<f64>, ModelError> {
        self.u.iter().zip(&self.du).map(|(&u, &du)| model.p_function(du.abs(), u)).collect()
    }
}

/// Solves the radial problem with `u = 0` at `outer` and either `u'(0) = 0`
/// (`inner = 0`, a ball or for `n = 1` the symmetric interval) or `u(inner) = 0`.
pub fn solve_radial(
    model: &LagrangianModel,
    dimension: usize,
    radii: (f64, f64),
    resolution: usize,
) -> Result<RadialProfile, RadialError> {
    if !(1..=3).contains(&dimension) {
        return Err(RadialError::Dimension(dimension));
    }
    let (inner, outer) = radii;
    if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
        return Err(RadialError::Radii { inner, outer });
    }
    if resolution < 16 {
        return Err(RadialError::Resolution(resolution));
    }
    let sys = System { model, n: dimension, a: inner, b: outer, steps: resolution };
    // the unknown is u(0) for a ball and the inner flux w(a) for a shell
    let target = |x: f64| sys.integrate(x, false).map(|p| p.u[resolution]);
    let root = find_root(target)?;
    sys.integrate(root, true).ok_or_else(|| RadialError::Shooting("integration failed at the root".into()))
}

struct System<'a> {
    model: &'a LagrangianModel,
    n: usize,
    a: f64,
    b: f64,
    steps: usize,
}

impl System<'_> {
    fn weight(&self, r: f64) -> f64 {
        r.powi(self.n as i32 - 1)
    }

    /// `(u', w')` at radius `r`.
    fn rhs(&self, r: f64, u: f64, w: f64) -> Option<(f64, f64)> {
        let wt = self.weight(r);
        let s = if wt > 0.0 { w.abs() / wt } else { 0.0 };
        let p = invert_flux(self.model, s, u)?;
        let du = p.copysign(w);
        let jet = self.model.eval_jet(p, u).ok()?;
        Some((if w == 0.0 { 0.0 } else { du }, wt * jet.f_q))
    }

    fn integrate(&self, x: f64, keep: bool) -> Option<RadialProfile> {
        let dr = (self.b - self.a) / self.steps as f64;
        let (mut u, mut w) = if self.a == 0.0 { (x, 0.0) } else { (0.0, x) };
        let cap = if keep { self.steps + 1 } else { 2 };
        let mut prof = RadialProfile {
            dimension: self.n,
            r: Vec::with_capacity(cap),
            u: Vec::with_capacity(cap),
            du: Vec::with_capacity(cap),
        };
        let mut last_du = self.rhs(self.a, u, w)?.0;
        if keep {
            prof.r.push(self.a);
            prof.u.push(u);
            prof.du.push(last_du);
        }
        let mut first = 0;
        if self.a == 0.0 && self.n >= 2 {
            // leading-order series over the first cell: w ≈ r^n F_q(0, u0) / n
            let fq = self.model.eval_jet(0.0, u).ok()?.f_q;
            let (gx, gw) = crate::geometry::gauss_legendre(4);
            let mut du = 0.0;
            for (t, wt) in gx.iter().zip(&gw) {
                let r = 0.5 * dr * (1.0 + t);
                let s = r * fq / self.n as f64;
                du += 0.5 * dr * wt * invert_flux(self.model, s.abs(), u)?.copysign(s);
            }
            u += du;
            w = dr.powi(self.n as i32) * fq / self.n as f64;
            first = 1;
            if keep {
                last_du = self.rhs(dr, u, w)?.0;
                prof.r.push(dr);
                prof.u.push(u);
                prof.du.push(last_du);
            }
        }
        for i in first..self.steps {
            let r = self.a + i as f64 * dr;
            let k1 = self.rhs(r, u, w)?;
            let k2 = self.rhs(r + 0.5 * dr, u + 0.5 * dr * k1.0, w + 0.5 * dr * k1.1)?;
            let k3 = self.rhs(r + 0.5 * dr, u + 0.5 * dr * k2.0, w + 0.5 * dr * k2.1)?;
            let k4 = self.rhs(r + dr, u + dr * k3.0, w + dr * k3.1)?;
            u += dr * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) / 6.0;
            w += dr * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) / 6.0;
            if !(u.is_finite() && w.is_finite()) {
                return None;
            }
            if keep {
                let rn = if i + 1 == self.steps { self.b } else { self.a + (i + 1) as f64 * dr };
                last_du = self.rhs(rn, u, w)?.0;
                prof.r.push(rn);
                prof.u.push(u);
                prof.du.push(last_du);
            }
        }
        if !keep {
            prof.u = vec![0.0; self.steps + 1];
            prof.u[self.steps] = u;
        }
        Some(prof)
    }
}

/// Solves `F_p(p, q) = s` for `p >= 0`.
fn invert_flux(model: &LagrangianModel, s: f64, q: f64) -> Option<f64> {
    if s == 0.0 {
        return Some(0.0);
    }
    match model.kinetic() {
        Kinetic::Dirichlet => Some(s),
        Kinetic::Power { m } => Some(s.powf(1.0 / (m - 1.0))),
        Kinetic::MinimalSurface => (s < 1.0).then(|| s / (1.0 - s * s).sqrt()),
        Kinetic::Custom => invert_flux_numerically(model, s, q),
    }
}

fn invert_flux_numerically(model: &LagrangianModel, s: f64, q: f64) -> Option<f64> {
    let fp = |p: f64| model.eval_jet(p, q).ok().map(|j| (j.f_p - s, j.f_pp));
    let (mut lo, mut hi) = (0.0, s.max(1e-3));
    while fp(hi)?.0 < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut p = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = fp(p)?;
        if f == 0.0 {
            return Some(p);
        }
        if f < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let newton = p - f / df;
        p = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * hi || (f / df).abs() <= 1e-16 * p.max(1e-300) {
            break;
        }
    }
    Some(p)
}

/// Expanding search for a sign change from 0, then the Illinois variant of regula falsi.
fn find_root<F: Fn(f64) -> Option<f64>>(f: F) -> Result<f64, RadialError> {
    let x0 = 0.0;
    let f0 = f(x0).ok_or_else(|| RadialError::Shooting("integration failed for the zero guess".into()))?;
    if f0 == 0.0 {
        return Ok(x0);
    }
    let dir = -f0.signum();
    let (mut a, mut fa) = (x0, f0);
    let mut step = 0.25;
    let mut bracket = None;
    for _ in 0..200 {
        let b = a + dir * step;
        match f(b) {
            None => step *= 0.5,
            Some(fb) if fb.signum() != fa.signum() => {
                bracket = Some((a, fa, b, fb));
                break;
            }
            Some(fb) => {
                if fb.abs() >= fa.abs() && step > 1e6 {
                    break;
                }
                a = b;
                fa = fb;
                step *= 2.0;
            }
        }
        if step < 1e-14 {
            break;
        }
    }
    let (mut a, mut fa, mut b, mut fb) = bracket.ok_or_else(|| RadialError::Shooting("no sign change found".into()))?;
    let mut side = 0;
    for _ in 0..300 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c).ok_or_else(|| RadialError::Shooting(format!("integration failed at {c}")))?;
        if fc == 0.0 || (b - a).abs() <= 4.0 * f64::EPSILON * (1.0 + c.abs()) {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if fc.abs() <= 1e-15 {
            return Ok(c);
        }
    }
    Err(RadialError::Shooting("root refinement did not converge".into()))
}
