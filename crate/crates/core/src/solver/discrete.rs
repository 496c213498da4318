//! Conservative five-point discretization of `div(g ∇u) + h` with
//! Shortley–Weller arms at cut cells.

use rayon::prelude::*;

use super::linear::SparseRows;
use super::SolverError;
use crate::geometry::{Arm, Direction, DiscreteDomain, Node};
use crate::lagrangian::LagrangianModel;

const AXES: [(Direction, Direction); 2] = [(Direction::East, Direction::West), (Direction::North, Direction::South)];

fn opposite(d: Direction) -> Direction {
    match d {
        Direction::East => Direction::West,
        Direction::West => Direction::East,
        Direction::North => Direction::South,
        Direction::South => Direction::North,
    }
}

fn arm_value(arm: Arm, u: &[f64], h: f64) -> (f64, f64) {
    match arm {
        Arm::Node(n) => (h, u[n]),
        Arm::Cut(d) => (d, 0.0),
    }
}

/// Second-order gradient from the three-point formula on each axis, using the
/// cut distance and the zero boundary value where an arm is cut.
pub fn node_gradient(node: &Node, u: &[f64], own: f64, h: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (axis, (plus, minus)) in AXES.iter().enumerate() {
        let (hp, up) = arm_value(node.arm(*plus), u, h);
        let (hm, um) = arm_value(node.arm(*minus), u, h);
        g[axis] = (hm * hm * (up - own) + hp * hp * (own - um)) / (hp * hm * (hp + hm));
    }
    g
}

pub fn nodal_gradient(dom: &DiscreteDomain, u: &[f64]) -> Vec<[f64; 2]> {
    let h = dom.spacing();
    dom.nodes().par_iter().enumerate().map(|(k, n)| node_gradient(n, u, u[k], h)).collect()
}

/// Face coefficients indexed by `Direction as usize`, plus nodal source terms.
pub(crate) struct Coefficients {
    pub faces: Vec<[f64; 4]>,
    pub source: Vec<f64>,
    /// `∂h/∂q` at each node
    pub source_q: Vec<f64>,
}

fn face_g(model: &LagrangianModel, node: &Node, p2: f64, q: f64) -> Result<f64, SolverError> {
    let p = p2.max(0.0).sqrt();
    let (g, _) = model.divergence_coefficients(p, q).map_err(|source| SolverError::Model {
        x: node.pos[0],
        y: node.pos[1],
        source,
    })?;
    if !(g > 0.0) || !g.is_finite() {
        return Err(SolverError::Ellipticity { x: node.pos[0], y: node.pos[1], p, q, g });
    }
    Ok(g)
}

pub(crate) fn coefficients(
    model: &LagrangianModel,
    dom: &DiscreteDomain,
    u: &[f64],
    with_source_q: bool,
) -> Result<Coefficients, SolverError> {
    let h = dom.spacing();
    let nodes = dom.nodes();
    let p2: Vec<f64> = nodes
        .par_iter()
        .enumerate()
        .map(|(k, n)| {
            let g = node_gradient(n, u, u[k], h);
            g[0] * g[0] + g[1] * g[1]
        })
        .collect();

    // East and North faces, plus every cut face, are owned by the node
    let owned: Vec<Result<[f64; 4], SolverError>> = nodes
        .par_iter()
        .enumerate()
        .map(|(k, n)| {
            let mut f = [f64::NAN; 4];
            for d in Direction::ALL {
                match n.arm(d) {
                    Arm::Node(m) if matches!(d, Direction::East | Direction::North) => {
                        f[d as usize] = face_g(model, n, 0.5 * (p2[k] + p2[m]), 0.5 * (u[k] + u[m]))?;
                    }
                    Arm::Cut(t) => {
                        // extrapolate |∇u|² linearly to the face midpoint from the opposite node
                        let p2f = match n.arm(opposite(d)) {
                            Arm::Node(m) => (p2[k] + 0.5 * t * (p2[k] - p2[m]) / h).max(0.0),
                            Arm::Cut(_) => p2[k],
                        };
                        f[d as usize] = face_g(model, n, p2f, 0.5 * u[k])?
                    }
                    Arm::Node(_) => {}
                }
            }
            Ok(f)
        })
        .collect();
    let mut faces = Vec::with_capacity(nodes.len());
    for r in owned {
        faces.push(r?);
    }
    for (k, n) in nodes.iter().enumerate() {
        if let Arm::Node(m) = n.arm(Direction::West) {
            faces[k][Direction::West as usize] = faces[m][Direction::East as usize];
        }
        if let Arm::Node(m) = n.arm(Direction::South) {
            faces[k][Direction::South as usize] = faces[m][Direction::North as usize];
        }
    }

    let src: Vec<Result<(f64, f64), SolverError>> = nodes
        .par_iter()
        .enumerate()
        .map(|(k, n)| {
            let p = p2[k].sqrt();
            let jet =
                model.eval_jet(p, u[k]).map_err(|source| SolverError::Model { x: n.pos[0], y: n.pos[1], source })?;
            let hq = if with_source_q { -jet.f_qq } else { 0.0 };
            Ok((-jet.f_q, hq))
        })
        .collect();
    let mut source = Vec::with_capacity(nodes.len());
    let mut source_q = Vec::with_capacity(nodes.len());
    for r in src {
        let (s, sq) = r?;
        source.push(s);
        source_q.push(sq);
    }
    Ok(Coefficients { faces, source, source_q })
}

fn apply(dom: &DiscreteDomain, c: &Coefficients, u: &[f64]) -> Vec<f64> {
    let h = dom.spacing();
    dom.nodes()
        .par_iter()
        .enumerate()
        .map(|(k, n)| {
            let mut acc = 0.0;
            for (plus, minus) in AXES {
                let (hp, up) = arm_value(n.arm(plus), u, h);
                let (hm, um) = arm_value(n.arm(minus), u, h);
                let gp = c.faces[k][plus as usize];
                let gm = c.faces[k][minus as usize];
                acc += 2.0 / (hp + hm) * (gp * (up - u[k]) / hp - gm * (u[k] - um) / hm);
            }
            acc + c.source[k]
        })
        .collect()
}

/// Pointwise discrete `div(g ∇u) + h` at every unknown.
pub fn residual(model: &LagrangianModel, dom: &DiscreteDomain, u: &[f64]) -> Result<Vec<f64>, SolverError> {
    let c = coefficients(model, dom, u, false)?;
    Ok(apply(dom, &c, u))
}

/// Matrix of `-div(g ∇·) - ∂h/∂q` with frozen coefficients; the diagonal
/// source term is kept only where it strengthens the diagonal.
pub(crate) fn frozen_matrix(dom: &DiscreteDomain, c: &Coefficients) -> SparseRows {
    let h = dom.spacing();
    let mut a = SparseRows::new(dom.len());
    for (k, n) in dom.nodes().iter().enumerate() {
        let mut diag = (-c.source_q[k]).max(0.0);
        for (plus, minus) in AXES {
            let hp = n.arm(plus).length(h);
            let hm = n.arm(minus).length(h);
            for (d, len) in [(plus, hp), (minus, hm)] {
                let coef = 2.0 * c.faces[k][d as usize] / ((hp + hm) * len);
                diag += coef;
                if let Arm::Node(m) = n.arm(d) {
                    a.push(k, m, -coef);
                }
            }
        }
        a.push(k, k, diag);
    }
    a
}

/// Graph colouring of the grid such that nodes of one colour are at Manhattan
/// distance at least 5, so no residual row sees two of them.
fn colour(node: &Node) -> usize {
    (node.grid.0 + 5 * node.grid.1) % 25
}

/// Finite-difference Jacobian of [`residual`], 25 residual evaluations.
pub(crate) fn jacobian(
    model: &LagrangianModel,
    dom: &DiscreteDomain,
    u: &[f64],
    r0: &[f64],
) -> Result<SparseRows, SolverError> {
    let nodes = dom.nodes();
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let step: Vec<f64> = u.iter().map(|v| 1e-7 * v.abs().max(scale)).collect();
    const OFFSETS: [(isize, isize); 13] = [
        (0, 0),
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (2, 0),
        (-2, 0),
        (0, 2),
        (0, -2),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    let mut jac = SparseRows::new(dom.len());
    for c in 0..25 {
        let mut up = u.to_vec();
        let mut any = false;
        for (k, n) in nodes.iter().enumerate() {
            if colour(n) == c {
                up[k] += step[k];
                any = true;
            }
        }
        if !any {
            continue;
        }
        let r1 = residual(model, dom, &up)?;
        for (row, n) in nodes.iter().enumerate() {
            for (di, dj) in OFFSETS {
                let Some(col) = dom.node_at(n.grid.0 as isize + di, n.grid.1 as isize + dj) else {
                    continue;
                };
                if colour(&nodes[col]) == c {
                    let v = (r1[row] - r0[row]) / step[col];
                    if v != 0.0 {
                        jac.push(row, col, v);
                    }
                }
            }
        }
    }
    Ok(jac)
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
    fn gradient_is_exact_for_quadratics() {
        let dom = build_domain(Shape::ellipse(1.3, 0.8).unwrap(), 1.0 / 16.0).unwrap();
        let f = |x: f64, y: f64| 1.0 - (x / 1.3).powi(2) - (y / 0.8).powi(2);
        let u: Vec<f64> = dom.nodes().iter().map(|n| f(n.pos[0], n.pos[1])).collect();
        for (n, g) in dom.nodes().iter().zip(nodal_gradient(&dom, &u)) {
            let want = [-2.0 * n.pos[0] / 1.69, -2.0 * n.pos[1] / 0.64];
            assert!((g[0] - want[0]).abs() < 1e-9 && (g[1] - want[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn torsion_profile_has_roundoff_residual() {
        let dom = build_domain(Shape::disc(1.0).unwrap(), 1.0 / 16.0).unwrap();
        let u: Vec<f64> = dom.nodes().iter().map(|n| (n.pos[0].powi(2) + n.pos[1].powi(2) - 1.0) / 4.0).collect();
        let r = residual(&torsion(), &dom, &u).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-8), "{:e}", r.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn jacobian_of_a_linear_problem_is_the_frozen_matrix() {
        let dom = build_domain(Shape::disc(1.0).unwrap(), 1.0 / 8.0).unwrap();
        let model = torsion();
        let u: Vec<f64> = dom.nodes().iter().map(|n| 0.1 * n.pos[0] - 0.2).collect();
        let r0 = residual(&model, &dom, &u).unwrap();
        let j = jacobian(&model, &dom, &u, &r0).unwrap();
        let c = coefficients(&model, &dom, &u, true).unwrap();
        let a = frozen_matrix(&dom, &c);
        let rhs: Vec<f64> = (0..dom.len()).map(|i| (i % 5) as f64).collect();
        let x = j.solve(&rhs).unwrap();
        let y = a.solve(&rhs).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p + q).abs() < 1e-5 * (1.0 + q.abs()));
        }
    }
}
