//! Analytic planar shapes with embedded Cartesian grids.
//!
//! A [`DiscreteDomain`] classifies the nodes of a uniform grid by the sign of
//! the shape's implicit function, stores exact boundary cut distances along
//! the grid axes for nodes next to the boundary, samples the boundary with
//! outward normals and curvature, and carries precomputed volume quadrature
//! weights with partial-cell corrections.

use std::io::{self, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid grid spacing {0}")]
    InvalidSpacing(f64),
    #[error("grid spacing {spacing} leaves only {interior} interior nodes (need at least 9)")]
    DegenerateGrid { spacing: f64, interior: usize },
    #[error("point ({x}, {y}) is not on the boundary (implicit function = {value:e})")]
    OffBoundary { x: f64, y: f64, value: f64 },
    #[error("point ({x}, {y}) is a corner; the normal is undefined")]
    Corner { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeKind {
    Disc { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    Ellipse { semi_x: f64, semi_y: f64 },
    Rectangle { width: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub center: Point,
}

/// Boundary point with its outward unit normal, curvature and arc-length weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: Point,
    pub normal: Point,
    pub curvature: f64,
    pub weight: f64,
    pub component: usize,
}

const BOUNDARY_TOL: f64 = 1e-9;

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

impl Shape {
    pub fn new(kind: ShapeKind, center: Point) -> Result<Self, GeometryError> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GeometryError::InvalidShape(format!("{what} must be positive and finite, got {v}")))
            }
        };
        match kind {
            ShapeKind::Disc { radius } => pos(radius, "radius")?,
            ShapeKind::Annulus { inner, outer } => {
                pos(inner, "inner radius")?;
                pos(outer, "outer radius")?;
                if !(inner < outer) {
                    return Err(GeometryError::InvalidShape(format!(
                        "annulus needs inner < outer, got {inner} >= {outer}"
                    )));
                }
            }
            ShapeKind::Ellipse { semi_x, semi_y } => {
                pos(semi_x, "semi-axis")?;
                pos(semi_y, "semi-axis")?;
            }
            ShapeKind::Rectangle { width, height } => {
                pos(width, "width")?;
                pos(height, "height")?;
            }
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::InvalidShape("center must be finite".into()));
        }
        Ok(Shape { kind, center })
    }

    pub fn disc(radius: f64) -> Result<Self, GeometryError> {
        Self::new(ShapeKind::Disc { radius }, [0.0, 0.0])
    }

    pub fn annulus(inner: f64, outer: f64) -> Result<Self, GeometryError> {
        Self::new(ShapeKind::Annulus { inner, outer }, [0.0, 0.0])
    }

    pub fn ellipse(semi_x: f64, semi_y: f64) -> Result<Self, GeometryError> {
        Self::new(ShapeKind::Ellipse { semi_x, semi_y }, [0.0, 0.0])
    }

    pub fn rectangle(width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(ShapeKind::Rectangle { width, height }, [0.0, 0.0])
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ShapeKind::Disc { .. } => "disc",
            ShapeKind::Annulus { .. } => "annulus",
            ShapeKind::Ellipse { .. } => "ellipse",
            ShapeKind::Rectangle { .. } => "rectangle",
        }
    }

    /// False for shapes whose boundary has corners.
    pub fn is_smooth(&self) -> bool {
        !matches!(self.kind, ShapeKind::Rectangle { .. })
    }

    fn rel(&self, x: Point) -> Point {
        [x[0] - self.center[0], x[1] - self.center[1]]
    }

    /// Negative inside, positive outside, zero on the boundary.
    pub fn implicit(&self, x: Point) -> f64 {
        let r = self.rel(x);
        match self.kind {
            ShapeKind::Disc { radius } => norm(r) - radius,
            ShapeKind::Annulus { inner, outer } => {
                let d = norm(r);
                (d - outer).max(inner - d)
            }
            ShapeKind::Ellipse { semi_x, semi_y } => (r[0] / semi_x).hypot(r[1] / semi_y) - 1.0,
            ShapeKind::Rectangle { width, height } => (r[0].abs() - 0.5 * width).max(r[1].abs() - 0.5 * height),
        }
    }

    pub fn contains(&self, x: Point) -> bool {
        self.implicit(x) < 0.0
    }

    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self.kind {
            ShapeKind::Disc { radius } => PI * radius * radius,
            ShapeKind::Annulus { inner, outer } => PI * (outer * outer - inner * inner),
            ShapeKind::Ellipse { semi_x, semi_y } => PI * semi_x * semi_y,
            ShapeKind::Rectangle { width, height } => width * height,
        }
    }

    pub fn perimeter(&self) -> f64 {
        use std::f64::consts::PI;
        match self.kind {
            ShapeKind::Disc { radius } => 2.0 * PI * radius,
            ShapeKind::Annulus { inner, outer } => 2.0 * PI * (inner + outer),
            ShapeKind::Ellipse { semi_x, semi_y } => ellipse_perimeter(semi_x, semi_y),
            ShapeKind::Rectangle { width, height } => 2.0 * (width + height),
        }
    }

    pub fn centroid(&self) -> Point {
        self.center
    }

    /// Half-widths of the axis-aligned bounding box.
    pub fn half_extent(&self) -> (f64, f64) {
        match self.kind {
            ShapeKind::Disc { radius } => (radius, radius),
            ShapeKind::Annulus { outer, .. } => (outer, outer),
            ShapeKind::Ellipse { semi_x, semi_y } => (semi_x, semi_y),
            ShapeKind::Rectangle { width, height } => (0.5 * width, 0.5 * height),
        }
    }

    /// Unsigned Euclidean distance from `x` to the boundary.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        let r = self.rel(x);
        match self.kind {
            ShapeKind::Disc { radius } => (norm(r) - radius).abs(),
            ShapeKind::Annulus { inner, outer } => {
                let d = norm(r);
                (d - outer).abs().min((d - inner).abs())
            }
            ShapeKind::Rectangle { width, height } => {
                let dx = r[0].abs() - 0.5 * width;
                let dy = r[1].abs() - 0.5 * height;
                if dx < 0.0 && dy < 0.0 {
                    (-dx).min(-dy)
                } else {
                    dx.max(0.0).hypot(dy.max(0.0))
                }
            }
            ShapeKind::Ellipse { semi_x, semi_y } => ellipse_distance(semi_x, semi_y, r),
        }
    }

    /// First exit distance along the axis direction `dir` from an interior
    /// point, if it lies within `tmax`.
    pub fn ray_exit(&self, origin: Point, dir: Point, tmax: f64) -> Option<f64> {
        let o = self.rel(origin);
        let t = match self.kind {
            ShapeKind::Disc { radius } => circle_exit(o, dir, radius),
            ShapeKind::Annulus { inner, outer } => {
                let t_out = circle_exit(o, dir, outer);
                match circle_entry(o, dir, inner) {
                    Some(t_in) if t_in < t_out => t_in,
                    _ => t_out,
                }
            }
            ShapeKind::Ellipse { semi_x, semi_y } => {
                let os = [o[0] / semi_x, o[1] / semi_y];
                let ds = [dir[0] / semi_x, dir[1] / semi_y];
                let a = dot(ds, ds);
                let b = dot(os, ds);
                let c = dot(os, os) - 1.0;
                let disc = (b * b - a * c).max(0.0);
                if b > 0.0 {
                    c / (-b - disc.sqrt())
                } else {
                    (-b + disc.sqrt()) / a
                }
            }
            ShapeKind::Rectangle { width, height } => {
                let half = [0.5 * width, 0.5 * height];
                let mut t = f64::INFINITY;
                for k in 0..2 {
                    if dir[k] != 0.0 {
                        let wall = half[k].copysign(dir[k]);
                        t = t.min((wall - o[k]) / dir[k]);
                    }
                }
                t
            }
        };
        if t.is_finite() && t <= tmax * (1.0 + 1e-9) {
            Some(t.clamp(0.0, tmax))
        } else {
            None
        }
    }

    /// Intervals `[x0, x1]` of the horizontal line `y = s` that lie inside the shape.
    pub fn slice(&self, s: f64) -> Vec<(f64, f64)> {
        self.chords(s, 1)
    }

    /// Intervals of the axis line `x[axis] = s`, measured along the other axis.
    fn chords(&self, s: f64, axis: usize) -> Vec<(f64, f64)> {
        let other = 1 - axis;
        let c0 = self.center[other];
        let d = s - self.center[axis];
        let chord = |r: f64| (r * r - d * d).max(0.0).sqrt();
        match self.kind {
            ShapeKind::Disc { radius } => {
                if d.abs() < radius {
                    let h = chord(radius);
                    vec![(c0 - h, c0 + h)]
                } else {
                    vec![]
                }
            }
            ShapeKind::Annulus { inner, outer } => {
                if d.abs() >= outer {
                    vec![]
                } else if d.abs() < inner {
                    let (ho, hi) = (chord(outer), chord(inner));
                    vec![(c0 - ho, c0 - hi), (c0 + hi, c0 + ho)]
                } else {
                    let ho = chord(outer);
                    vec![(c0 - ho, c0 + ho)]
                }
            }
            ShapeKind::Ellipse { semi_x, semi_y } => {
                let semi = [semi_x, semi_y];
                if d.abs() < semi[axis] {
                    let t = d / semi[axis];
                    let h = semi[other] * (1.0 - t * t).max(0.0).sqrt();
                    vec![(c0 - h, c0 + h)]
                } else {
                    vec![]
                }
            }
            ShapeKind::Rectangle { width, height } => {
                let half = [0.5 * width, 0.5 * height];
                if d.abs() < half[axis] {
                    vec![(c0 - half[other], c0 + half[other])]
                } else {
                    vec![]
                }
            }
        }
    }

    /// `y` values where the slice length is not smooth.
    fn slice_breakpoints(&self) -> Vec<f64> {
        let cy = self.center[1];
        let mut v = match self.kind {
            ShapeKind::Disc { radius } => vec![radius],
            ShapeKind::Annulus { inner, outer } => vec![inner, outer],
            ShapeKind::Ellipse { semi_y, .. } => vec![semi_y],
            ShapeKind::Rectangle { height, .. } => vec![0.5 * height],
        };
        let mut out: Vec<f64> = v.iter().map(|b| cy - b).collect();
        out.extend(v.drain(..).map(|b| cy + b));
        out
    }

    /// Outward unit normal and curvature (positive where the shape is locally convex)
    /// at a boundary point.
    pub fn boundary_geometry(&self, y: Point) -> Result<(Point, f64), GeometryError> {
        let value = self.implicit(y);
        if value.abs() > BOUNDARY_TOL {
            return Err(GeometryError::OffBoundary { x: y[0], y: y[1], value });
        }
        let r = self.rel(y);
        match self.kind {
            ShapeKind::Disc { radius } => {
                let d = norm(r);
                Ok(([r[0] / d, r[1] / d], 1.0 / radius))
            }
            ShapeKind::Annulus { inner, outer } => {
                let d = norm(r);
                if (d - outer).abs() <= (d - inner).abs() {
                    Ok(([r[0] / d, r[1] / d], 1.0 / outer))
                } else {
                    Ok(([-r[0] / d, -r[1] / d], -1.0 / inner))
                }
            }
            ShapeKind::Ellipse { semi_x, semi_y } => {
                let t = (r[1] / semi_y).atan2(r[0] / semi_x);
                Ok(ellipse_frame(semi_x, semi_y, t))
            }
            ShapeKind::Rectangle { width, height } => {
                let on_x = (r[0].abs() - 0.5 * width).abs() <= BOUNDARY_TOL;
                let on_y = (r[1].abs() - 0.5 * height).abs() <= BOUNDARY_TOL;
                match (on_x, on_y) {
                    (true, true) => Err(GeometryError::Corner { x: y[0], y: y[1] }),
                    (true, false) => Ok(([1f64.copysign(r[0]), 0.0], 0.0)),
                    _ => Ok(([0.0, 1f64.copysign(r[1])], 0.0)),
                }
            }
        }
    }

    /// Samples every boundary component at arc spacing no larger than `spacing`
    /// (at least 64 points per closed curve).
    pub fn sample_boundary(&self, spacing: f64) -> Vec<BoundarySample> {
        use std::f64::consts::PI;
        let count = |len: f64, min: usize| {
            let n = ((2.0 * len / spacing).ceil() as usize).max(min);
            n.div_ceil(8) * 8
        };
        let c = self.center;
        let circle = |radius: f64, outward: f64, component: usize| {
            let n = count(2.0 * PI * radius, 64);
            (0..n)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / n as f64;
                    let (s, co) = th.sin_cos();
                    BoundarySample {
                        point: [c[0] + radius * co, c[1] + radius * s],
                        normal: [outward * co, outward * s],
                        curvature: outward / radius,
                        weight: 2.0 * PI * radius / n as f64,
                        component,
                    }
                })
                .collect::<Vec<_>>()
        };
        match self.kind {
            ShapeKind::Disc { radius } => circle(radius, 1.0, 0),
            ShapeKind::Annulus { inner, outer } => {
                let mut v = circle(outer, 1.0, 0);
                v.extend(circle(inner, -1.0, 1));
                v
            }
            ShapeKind::Ellipse { semi_x, semi_y } => {
                let n = count(ellipse_perimeter(semi_x, semi_y), 64);
                (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        let (st, ct) = t.sin_cos();
                        let speed = (semi_x * st).hypot(semi_y * ct);
                        let (normal, curvature) = ellipse_frame(semi_x, semi_y, t);
                        BoundarySample {
                            point: [c[0] + semi_x * ct, c[1] + semi_y * st],
                            normal,
                            curvature,
                            weight: speed * 2.0 * PI / n as f64,
                            component: 0,
                        }
                    })
                    .collect()
            }
            ShapeKind::Rectangle { width, height } => {
                let (hw, hh) = (0.5 * width, 0.5 * height);
                // (start, end, normal) counter-clockwise from the bottom edge
                let edges = [
                    ([-hw, -hh], [hw, -hh], [0.0, -1.0]),
                    ([hw, -hh], [hw, hh], [1.0, 0.0]),
                    ([hw, hh], [-hw, hh], [0.0, 1.0]),
                    ([-hw, hh], [-hw, -hh], [-1.0, 0.0]),
                ];
                let mut v = Vec::new();
                for (a, b, normal) in edges {
                    let len = norm([b[0] - a[0], b[1] - a[1]]);
                    let n = count(len, 16);
                    for k in 0..n {
                        let s = (k as f64 + 0.5) / n as f64;
                        v.push(BoundarySample {
                            point: [c[0] + a[0] + s * (b[0] - a[0]), c[1] + a[1] + s * (b[1] - a[1])],
                            normal,
                            curvature: 0.0,
                            weight: len / n as f64,
                            component: 0,
                        });
                    }
                }
                v
            }
        }
    }

    /// `min ⟨y - x0, ν(y)⟩` over a dense boundary sampling; non-negative values
    /// certify star-shapedness with respect to `x0` at that resolution.
    pub fn star_center_margin(&self, x0: Point) -> f64 {
        star_margin(&self.sample_boundary(self.perimeter() / 4096.0), x0)
    }
}

pub(crate) fn star_margin(samples: &[BoundarySample], x0: Point) -> f64 {
    samples.iter().map(|s| dot([s.point[0] - x0[0], s.point[1] - x0[1]], s.normal)).fold(f64::INFINITY, f64::min)
}

fn circle_exit(o: Point, d: Point, radius: f64) -> f64 {
    let b = dot(o, d);
    let c = dot(o, o) - radius * radius;
    let disc = (b * b - c).max(0.0).sqrt();
    if b > 0.0 {
        // the roots multiply to c < 0; avoid cancelling -b + disc
        if c < 0.0 {
            -c / (b + disc)
        } else {
            0.0
        }
    } else {
        -b + disc
    }
}

fn circle_entry(o: Point, d: Point, radius: f64) -> Option<f64> {
    let b = dot(o, d);
    let c = dot(o, o) - radius * radius;
    let disc = b * b - c;
    if b >= 0.0 || disc < 0.0 {
        return None;
    }
    Some(c / (-b + disc.sqrt()))
}

fn ellipse_frame(a: f64, b: f64, t: f64) -> (Point, f64) {
    let (st, ct) = t.sin_cos();
    let speed = (a * st).hypot(b * ct);
    ([b * ct / speed, a * st / speed], a * b / (speed * speed * speed))
}

fn ellipse_distance(a: f64, b: f64, r: Point) -> f64 {
    use std::f64::consts::PI;
    let dist2 = |t: f64| {
        let (st, ct) = t.sin_cos();
        (r[0] - a * ct).powi(2) + (r[1] - b * st).powi(2)
    };
    let n = 256;
    let mut best =
        (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).min_by(|x, y| dist2(*x).total_cmp(&dist2(*y))).unwrap_or(0.0);
    // Newton on d/dt of the squared distance; f1, f2 are -D'/2 and -D''/2
    for _ in 0..30 {
        let (st, ct) = best.sin_cos();
        let f1 = (a * a - b * b) * st * ct - r[0] * a * st + r[1] * b * ct;
        let f2 = (a * a - b * b) * (ct * ct - st * st) - r[0] * a * ct - r[1] * b * st;
        if f2 >= 0.0 {
            break;
        }
        let step = f1 / f2;
        best -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    dist2(best).sqrt()
}

/// Perimeter of an ellipse through the arithmetic–geometric mean.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let (mut an, mut bn) = (a.max(b), a.min(b));
    let a2 = an * an;
    let mut sum = 0.5 * (a2 - bn * bn);
    let mut pow2 = 0.5;
    for _ in 0..64 {
        let c = 0.5 * (an - bn);
        let (a_next, b_next) = (0.5 * (an + bn), (an * bn).sqrt());
        an = a_next;
        bn = b_next;
        pow2 *= 2.0;
        sum += pow2 * c * c;
        if c.abs() <= 1e-17 * an {
            break;
        }
    }
    2.0 * std::f64::consts::PI * (a2 - sum) / an
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gauss20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Interior,
    BoundaryAdjacent,
    Exterior,
}

/// One of the four axis directions from a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    East = 0,
    West = 1,
    North = 2,
    South = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::West, Direction::North, Direction::South];

    pub fn vector(self) -> Point {
        match self {
            Direction::East => [1.0, 0.0],
            Direction::West => [-1.0, 0.0],
            Direction::North => [0.0, 1.0],
            Direction::South => [0.0, -1.0],
        }
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::North => (0, 1),
            Direction::South => (0, -1),
        }
    }
}

/// What a node sees along one axis direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arm {
    /// The neighbouring grid node, by unknown index.
    Node(usize),
    /// The boundary, at this distance (in `(0, h]`).
    Cut(f64),
}

impl Arm {
    pub fn length(&self, spacing: f64) -> f64 {
        match *self {
            Arm::Node(_) => spacing,
            Arm::Cut(d) => d,
        }
    }
}

/// A grid node inside the shape; these are the unknowns of every field.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub grid: (usize, usize),
    pub pos: Point,
    pub class: NodeClass,
    /// Indexed by `Direction as usize`.
    pub arms: [Arm; 4],
    pub boundary_distance: f64,
}

impl Node {
    pub fn arm(&self, d: Direction) -> Arm {
        self.arms[d as usize]
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    shape: Shape,
    spacing: f64,
    dims: (usize, usize),
    half: (usize, usize),
    grid_to_node: Vec<Option<usize>>,
    nodes: Vec<Node>,
    boundary: Vec<BoundarySample>,
    volume_weights: Vec<f64>,
    unassigned_area: f64,
}

impl DiscreteDomain {
    pub fn build(shape: Shape, spacing: f64) -> Result<Self, GeometryError> {
        build_domain(shape, spacing)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn boundary(&self) -> &[BoundarySample] {
        &self.boundary
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    /// Volume quadrature weights: `∫ f ≈ Σ w_i f_i` over the unknowns.
    pub fn volume_weights(&self) -> &[f64] {
        &self.volume_weights
    }

    /// Area of cut cells that could not be attached to any nearby node.
    pub fn unassigned_area(&self) -> f64 {
        self.unassigned_area
    }

    pub fn grid_position(&self, i: usize, j: usize) -> Point {
        let h = self.spacing;
        [
            self.shape.center[0] + (i as f64 - self.half.0 as f64) * h,
            self.shape.center[1] + (j as f64 - self.half.1 as f64) * h,
        ]
    }

    /// Unknown index of grid node `(i, j)` when it lies inside the shape.
    pub fn node_at(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.dims.0 || j as usize >= self.dims.1 {
            return None;
        }
        self.grid_to_node[j as usize * self.dims.0 + i as usize]
    }

    /// Grid index nearest to `x` (may be outside the grid for far-away points).
    pub fn nearest_grid(&self, x: Point) -> (isize, isize) {
        let h = self.spacing;
        (
            ((x[0] - self.shape.center[0]) / h).round() as isize + self.half.0 as isize,
            ((x[1] - self.shape.center[1]) / h).round() as isize + self.half.1 as isize,
        )
    }

    /// Number of boundary components, found by flood-filling the exterior grid nodes.
    pub fn boundary_components(&self) -> usize {
        let (nx, ny) = self.dims;
        let mut seen = vec![false; nx * ny];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..nx * ny {
            if seen[start] || self.grid_to_node[start].is_some() {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = ((k % nx) as isize, (k / nx) as isize);
                for d in Direction::ALL {
                    let (di, dj) = d.offset();
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a as usize >= nx || b as usize >= ny {
                        continue;
                    }
                    let kk = b as usize * nx + a as usize;
                    if !seen[kk] && self.grid_to_node[kk].is_none() {
                        seen[kk] = true;
                        stack.push(kk);
                    }
                }
            }
        }
        count
    }

    pub fn volume_integral(&self, field: &[f64]) -> f64 {
        volume_integral(self, field)
    }

    pub fn boundary_integral(&self, density: &[f64]) -> f64 {
        boundary_integral(self, density)
    }

    pub fn star_center_margin(&self, x0: Point) -> f64 {
        star_margin(&self.boundary, x0)
    }

    pub fn write_boundary_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "y_x,y_y,nu_x,nu_y,H,weight")?;
        for s in &self.boundary {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.point[0], s.point[1], s.normal[0], s.normal[1], s.curvature, s.weight
            )?;
        }
        Ok(())
    }
}

pub fn build_domain(shape: Shape, spacing: f64) -> Result<DiscreteDomain, GeometryError> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(GeometryError::InvalidSpacing(spacing));
    }
    let (ex, ey) = shape.half_extent();
    let hx = (ex / spacing).ceil() as usize + 2;
    let hy = (ey / spacing).ceil() as usize + 2;
    if hx > 20_000 || hy > 20_000 {
        return Err(GeometryError::InvalidSpacing(spacing));
    }
    let (nx, ny) = (2 * hx + 1, 2 * hy + 1);
    let mut dom = DiscreteDomain {
        shape,
        spacing,
        dims: (nx, ny),
        half: (hx, hy),
        grid_to_node: vec![None; nx * ny],
        nodes: Vec::new(),
        boundary: Vec::new(),
        volume_weights: Vec::new(),
        unassigned_area: 0.0,
    };

    for j in 0..ny {
        for i in 0..nx {
            let pos = dom.grid_position(i, j);
            if shape.contains(pos) {
                dom.grid_to_node[j * nx + i] = Some(dom.nodes.len());
                dom.nodes.push(Node {
                    grid: (i, j),
                    pos,
                    class: NodeClass::Interior,
                    arms: [Arm::Cut(spacing); 4],
                    boundary_distance: shape.boundary_distance(pos),
                });
            }
        }
    }
    if dom.nodes.len() < 9 {
        return Err(GeometryError::DegenerateGrid { spacing, interior: dom.nodes.len() });
    }

    for k in 0..dom.nodes.len() {
        let (i, j) = dom.nodes[k].grid;
        let pos = dom.nodes[k].pos;
        let mut adjacent = false;
        for d in Direction::ALL {
            let (di, dj) = d.offset();
            let arm = match dom.node_at(i as isize + di, j as isize + dj) {
                Some(n) => Arm::Node(n),
                None => {
                    adjacent = true;
                    let dir = d.vector();
                    let t = shape.ray_exit(pos, dir, spacing).unwrap_or_else(|| bisect_exit(&shape, pos, dir, spacing));
                    Arm::Cut(t.max(1e-12 * spacing))
                }
            };
            dom.nodes[k].arms[d as usize] = arm;
        }
        if adjacent {
            dom.nodes[k].class = NodeClass::BoundaryAdjacent;
        }
    }

    dom.boundary = shape.sample_boundary(spacing);
    let (weights, lost) = volume_weights(&dom);
    dom.volume_weights = weights;
    dom.unassigned_area = lost;
    Ok(dom)
}

fn bisect_exit(shape: &Shape, pos: Point, dir: Point, tmax: f64) -> f64 {
    let at = |t: f64| shape.implicit([pos[0] + t * dir[0], pos[1] + t * dir[1]]);
    let (mut lo, mut hi) = (0.0, tmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Area and first moments of `cell ∩ shape` by Gauss quadrature over horizontal slices.
fn cell_moments(shape: &Shape, x: (f64, f64), y: (f64, f64)) -> (f64, f64, f64) {
    let (gx, gw) = gauss20();
    let mut cuts = vec![y.0];
    // the clipped chord length has kinks where the boundary crosses the cell's vertical edges
    let crossings = [x.0, x.1].into_iter().flat_map(|c| shape.chords(c, 0)).flat_map(|(a, b)| [a, b]);
    cuts.extend(shape.slice_breakpoints().into_iter().chain(crossings).filter(|b| *b > y.0 && *b < y.1));
    cuts.push(y.1);
    cuts.sort_by(f64::total_cmp);
    let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (t, w) in gx.iter().zip(gw) {
            let s = mid + half * t;
            for (l, r) in shape.slice(s) {
                let (l, r) = (l.max(x.0), r.min(x.1));
                if r > l {
                    let len = r - l;
                    area += half * w * len;
                    mx += half * w * 0.5 * (r * r - l * l);
                    my += half * w * s * len;
                }
            }
        }
    }
    (area, mx, my)
}

fn volume_weights(dom: &DiscreteDomain) -> (Vec<f64>, f64) {
    let h = dom.spacing;
    let shape = &dom.shape;
    let mut w = vec![0.0; dom.nodes.len()];
    let mut lost = 0.0;
    let (nx, ny) = dom.dims;
    for j in 0..ny {
        for i in 0..nx {
            let pos = dom.grid_position(i, j);
            let own = dom.grid_to_node[j * nx + i];
            let dist = shape.boundary_distance(pos);
            if dist > 0.75 * h {
                if let Some(k) = own {
                    w[k] += h * h;
                }
                continue;
            }
            let (area, mx, my) =
                cell_moments(shape, (pos[0] - 0.5 * h, pos[0] + 0.5 * h), (pos[1] - 0.5 * h, pos[1] + 0.5 * h));
            if area <= 0.0 {
                continue;
            }
            let centroid = [mx / area, my / area];
            let target = own.or_else(|| nearest_node(dom, (i, j), centroid));
            let Some(t) = target else {
                lost += area;
                continue;
            };
            // f(c) ≈ f_t + ∇f_t · (c - x_t) with a difference stencil for ∇f_t
            w[t] += area;
            let node = &dom.nodes[t];
            let offset = [centroid[0] - node.pos[0], centroid[1] - node.pos[1]];
            for (axis, (plus, minus)) in
                [(Direction::East, Direction::West), (Direction::North, Direction::South)].into_iter().enumerate()
            {
                let scale = area * offset[axis];
                if scale == 0.0 {
                    continue;
                }
                match (node.arm(plus), node.arm(minus)) {
                    (Arm::Node(a), Arm::Node(b)) => {
                        w[a] += scale / (2.0 * h);
                        w[b] -= scale / (2.0 * h);
                    }
                    (Arm::Node(a), _) => {
                        w[a] += scale / h;
                        w[t] -= scale / h;
                    }
                    (_, Arm::Node(b)) => {
                        w[t] += scale / h;
                        w[b] -= scale / h;
                    }
                    _ => {}
                }
            }
        }
    }
    (w, lost)
}

fn nearest_node(dom: &DiscreteDomain, (i, j): (usize, usize), c: Point) -> Option<usize> {
    for radius in 1..=2isize {
        let mut best: Option<(f64, usize)> = None;
        for dj in -radius..=radius {
            for di in -radius..=radius {
                if let Some(k) = dom.node_at(i as isize + di, j as isize + dj) {
                    let p = dom.nodes[k].pos;
                    let d = (p[0] - c[0]).hypot(p[1] - c[1]);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, k));
                    }
                }
            }
        }
        if let Some((_, k)) = best {
            return Some(k);
        }
    }
    None
}

/// Cell-weighted sum over the unknowns with partial-cell corrections near the boundary.
pub fn volume_integral(dom: &DiscreteDomain, field: &[f64]) -> f64 {
    assert_eq!(field.len(), dom.volume_weights.len(), "field length must match the node count");
    dom.volume_weights.iter().zip(field).map(|(w, f)| w * f).sum()
}

/// Arc-weighted sum over the boundary samples.
pub fn boundary_integral(dom: &DiscreteDomain, density: &[f64]) -> f64 {
    assert_eq!(density.len(), dom.boundary.len(), "density length must match the boundary samples");
    dom.boundary.iter().zip(density).map(|(s, d)| s.weight * d).sum()
}
