//! Impurity surfaces inside the layer `R^2 x (0, pi)`, their scaling toward an
//! anchor point, and quadrature rules on them.
//!
//! Three analytic families carry closed-form tangents (rectangle patch, disk,
//! spherical cap). A tabulated node/weight list is accepted as an escape hatch
//! for shapes outside those families.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;

pub type Point = Vector3<f64>;

const VALIDATION_GRID: usize = 41;
const RMIN_GRID: usize = 64;

/// Geometric description of an undeformed (`delta = 1`) surface.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceFamily {
    /// Flat `width x height` patch spanned by `e1`, `e2` around `center`.
    Rectangle {
        center: Point,
        e1: Point,
        e2: Point,
        width: f64,
        height: f64,
    },
    /// Flat disk of `radius` around `center` with unit normal `normal`.
    Disk {
        center: Point,
        normal: Point,
        radius: f64,
    },
    /// Cap `{theta <= polar_angle}` of the sphere `|x - sphere_center| = radius`
    /// measured from the unit `axis`.
    SphericalCap {
        sphere_center: Point,
        radius: f64,
        axis: Point,
        polar_angle: f64,
    },
    /// Precomputed nodes with area weights.
    Tabulated {
        nodes: Vec<Point>,
        weights: Vec<f64>,
    },
}

/// Parameter domain `[q1_lo, q1_hi] x [q2_lo, q2_hi]`; `q2` may be periodic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDomain {
    pub q1: (f64, f64),
    pub q2: (f64, f64),
    pub periodic_q2: bool,
}

/// A surface `Sigma_delta`: the family scaled by `delta` toward the anchor `x0`.
#[derive(Debug, Clone)]
pub struct Surface {
    name: String,
    family: Arc<SurfaceFamily>,
    anchor: Point,
    delta: f64,
}

/// Elliptical map of `[-1, 1]^2` onto the unit disk with partial derivatives.
/// It is analytic on the square, so tensor rules do not cluster at the centre.
struct SquareToDisk {
    a: f64,
    b: f64,
    a_u: f64,
    a_v: f64,
    b_u: f64,
    b_v: f64,
}

impl SquareToDisk {
    fn new(q: [f64; 2]) -> Self {
        let (u, v) = (q[0], q[1]);
        let su = (1.0 - 0.5 * u * u).sqrt();
        let sv = (1.0 - 0.5 * v * v).sqrt();
        Self {
            a: u * sv,
            b: v * su,
            a_u: sv,
            a_v: -0.5 * u * v / sv,
            b_u: -0.5 * u * v / su,
            b_v: su,
        }
    }
}

/// Deterministic orthonormal pair spanning the plane orthogonal to `normal`.
pub fn orthonormal_frame(normal: &Point) -> (Point, Point) {
    let n = normal.normalize();
    let axes = [Point::x(), Point::y(), Point::z()];
    let seed = axes
        .iter()
        .min_by(|a, b| n.dot(a).abs().total_cmp(&n.dot(b).abs()))
        .copied()
        .unwrap_or_else(Point::x);
    let e1 = (seed - n * n.dot(&seed)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

fn unit(v: Point, what: &str) -> Result<Point> {
    let norm = v.norm();
    if !norm.is_finite() || norm < 1e-14 {
        return Err(Error::InvalidSurface(format!(
            "{what} must be a nonzero vector"
        )));
    }
    Ok(v / norm)
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidSurface(format!(
            "{what} must be positive, got {x}"
        )));
    }
    Ok(x)
}

impl SurfaceFamily {
    pub fn rectangle(
        center: Point,
        normal: Point,
        width: f64,
        height: f64,
        in_plane: Option<Point>,
    ) -> Result<Self> {
        let n = unit(normal, "normal")?;
        let (e1, e2) = match in_plane {
            Some(dir) => {
                let e1 = unit(dir - n * n.dot(&dir), "in-plane direction")?;
                (e1, n.cross(&e1))
            }
            None => orthonormal_frame(&n),
        };
        Ok(Self::Rectangle {
            center,
            e1,
            e2,
            width: positive(width, "width")?,
            height: positive(height, "height")?,
        })
    }

    pub fn disk(center: Point, normal: Point, radius: f64) -> Result<Self> {
        Ok(Self::Disk {
            center,
            normal: unit(normal, "normal")?,
            radius: positive(radius, "radius")?,
        })
    }

    pub fn spherical_cap(
        sphere_center: Point,
        radius: f64,
        axis: Point,
        polar_angle: f64,
    ) -> Result<Self> {
        if !(polar_angle > 0.0 && polar_angle <= PI) {
            return Err(Error::InvalidSurface(format!(
                "polar angle must lie in (0, pi], got {polar_angle}"
            )));
        }
        Ok(Self::SphericalCap {
            sphere_center,
            radius: positive(radius, "radius")?,
            axis: unit(axis, "axis")?,
            polar_angle,
        })
    }

    pub fn tabulated(nodes: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidSurface(
                "tabulated surface needs matching, non-empty node and weight lists".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidSurface(
                "tabulated weights must be positive".into(),
            ));
        }
        Ok(Self::Tabulated { nodes, weights })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rectangle { .. } => "rectangle",
            Self::Disk { .. } => "disk",
            Self::SphericalCap { .. } => "cap",
            Self::Tabulated { .. } => "tabulated",
        }
    }

    /// `None` for tabulated surfaces.
    pub fn domain(&self) -> Option<ParamDomain> {
        match *self {
            Self::Rectangle { width, height, .. } => Some(ParamDomain {
                q1: (-0.5 * width, 0.5 * width),
                q2: (-0.5 * height, 0.5 * height),
                periodic_q2: false,
            }),
            Self::Disk { .. } | Self::SphericalCap { .. } => Some(ParamDomain {
                q1: (-1.0, 1.0),
                q2: (-1.0, 1.0),
                periodic_q2: false,
            }),
            Self::Tabulated { .. } => None,
        }
    }

    /// Point and the two tangent vectors at parameter `q`.
    pub fn eval(&self, q: [f64; 2]) -> (Point, Point, Point) {
        match self {
            Self::Rectangle { center, e1, e2, .. } => (center + e1 * q[0] + e2 * q[1], *e1, *e2),
            Self::Disk {
                center,
                normal,
                radius,
            } => {
                let (e1, e2) = orthonormal_frame(normal);
                let m = SquareToDisk::new(q);
                (
                    center + (e1 * m.a + e2 * m.b) * *radius,
                    (e1 * m.a_u + e2 * m.b_u) * *radius,
                    (e1 * m.a_v + e2 * m.b_v) * *radius,
                )
            }
            Self::SphericalCap {
                sphere_center,
                radius,
                axis,
                polar_angle,
            } => {
                // unit disk point (a, b) at polar distance rho goes to theta = theta0 rho
                let (e1, e2) = orthonormal_frame(axis);
                let m = SquareToDisk::new(q);
                let t0 = *polar_angle;
                let rho = m.a.hypot(m.b);
                let (st, ct) = (t0 * rho).sin_cos();
                let (sinc, dsinc) = if rho < 1e-4 {
                    let r2 = rho * rho;
                    (
                        t0 - t0.powi(3) * r2 / 6.0,
                        -t0.powi(3) / 3.0 + t0.powi(5) * r2 / 30.0,
                    )
                } else {
                    (st / rho, (t0 * rho * ct - st) / rho.powi(3))
                };
                let planar = e1 * m.a + e2 * m.b;
                let x = sphere_center + (planar * sinc + axis * ct) * *radius;
                let tangent = |a_q: f64, b_q: f64| {
                    let p = m.a * a_q + m.b * b_q;
                    ((e1 * a_q + e2 * b_q) * sinc + planar * (dsinc * p) - axis * (t0 * sinc * p))
                        * *radius
                };
                (x, tangent(m.a_u, m.b_u), tangent(m.a_v, m.b_v))
            }
            Self::Tabulated { .. } => panic!("tabulated surfaces have no parametrization"),
        }
    }

    /// Anchor used when none is configured: the geometric centre of the
    /// patch/disk, the apex of the cap.
    pub fn default_anchor(&self) -> Point {
        match self {
            Self::Rectangle { center, .. } | Self::Disk { center, .. } => *center,
            Self::SphericalCap {
                sphere_center,
                radius,
                axis,
                ..
            } => sphere_center + axis * *radius,
            Self::Tabulated { nodes, weights } => {
                let total: f64 = weights.iter().sum();
                let centroid = nodes
                    .iter()
                    .zip(weights)
                    .fold(Point::zeros(), |acc, (p, w)| acc + p * *w)
                    / total;
                *nodes
                    .iter()
                    .min_by(|a, b| (*a - centroid).norm().total_cmp(&(*b - centroid).norm()))
                    .expect("non-empty")
            }
        }
    }

    /// Closed-form area of the undeformed surface.
    pub fn area(&self) -> f64 {
        match *self {
            Self::Rectangle { width, height, .. } => width * height,
            Self::Disk { radius, .. } => PI * radius * radius,
            Self::SphericalCap {
                radius,
                polar_angle,
                ..
            } => 2.0 * PI * radius * radius * (1.0 - polar_angle.cos()),
            Self::Tabulated { ref weights, .. } => weights.iter().sum(),
        }
    }
}

/// Distance to the wire axis `x1 = x2 = 0`.
#[inline]
pub fn wire_distance(x: &Point) -> f64 {
    x.x.hypot(x.y)
}

impl Surface {
    /// Surface at `delta = 1` with the family's default anchor.
    pub fn new(name: impl Into<String>, family: SurfaceFamily) -> Result<Self> {
        let anchor = family.default_anchor();
        Self::with_anchor(name, family, anchor)
    }

    pub fn with_anchor(
        name: impl Into<String>,
        family: SurfaceFamily,
        anchor: Point,
    ) -> Result<Self> {
        let surface = Self {
            name: name.into(),
            family: Arc::new(family),
            anchor,
            delta: 1.0,
        };
        surface.validate()?;
        Ok(surface)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> &SurfaceFamily {
        &self.family
    }

    pub fn anchor(&self) -> Point {
        self.anchor
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn domain(&self) -> Option<ParamDomain> {
        self.family.domain()
    }

    pub fn area(&self) -> f64 {
        self.delta * self.delta * self.family.area()
    }

    #[inline]
    fn scale_point(&self, p: Point) -> Point {
        self.anchor + (p - self.anchor) * self.delta
    }

    /// `x_delta(q) = delta x(q) - delta x0 + x0`.
    pub fn point(&self, q: [f64; 2]) -> Point {
        self.scale_point(self.family.eval(q).0)
    }

    /// Scaled point and tangents.
    pub fn eval(&self, q: [f64; 2]) -> (Point, Point, Point) {
        let (x, t1, t2) = self.family.eval(q);
        (self.scale_point(x), t1 * self.delta, t2 * self.delta)
    }

    /// Area element `|d1 x x d2 x|` at `q`.
    pub fn jacobian(&self, q: [f64; 2]) -> f64 {
        let (_, t1, t2) = self.eval(q);
        t1.cross(&t2).norm()
    }

    /// Sample points over the closure of the surface.
    fn samples(&self, m: usize) -> Vec<Point> {
        match (&*self.family, self.domain()) {
            (SurfaceFamily::Tabulated { nodes, .. }, _) => {
                nodes.iter().map(|p| self.scale_point(*p)).collect()
            }
            (_, Some(d)) => {
                let mut out = Vec::with_capacity(m * m);
                for i in 0..m {
                    let q1 = d.q1.0 + (d.q1.1 - d.q1.0) * i as f64 / (m - 1) as f64;
                    for j in 0..m {
                        let q2 = d.q2.0 + (d.q2.1 - d.q2.0) * j as f64 / (m - 1) as f64;
                        out.push(self.point([q1, q2]));
                    }
                }
                out
            }
            _ => unreachable!(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidSurface(format!(
                "scaling factor must lie in (0, 1], got {}",
                self.delta
            )));
        }
        for p in self.samples(VALIDATION_GRID) {
            if !(p.z > 0.0 && p.z < PI) {
                return Err(Error::InvalidSurface(format!(
                    "surface `{}` leaves the layer: point ({:.6}, {:.6}, {:.6})",
                    self.name, p.x, p.y, p.z
                )));
            }
        }
        let r = self.r_min();
        if r <= 1e-12 {
            return Err(Error::InvalidSurface(format!(
                "surface `{}` touches the wire (r_min = {r:e})",
                self.name
            )));
        }
        Ok(())
    }

    /// `Sigma_delta`; the anchor is a fixed point of the scaling.
    pub fn scale(&self, delta: f64) -> Result<Self> {
        let scaled = Self {
            name: self.name.clone(),
            family: Arc::clone(&self.family),
            anchor: self.anchor,
            delta: self.delta * delta,
        };
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidSurface(format!(
                "scaling factor must lie in (0, 1], got {delta}"
            )));
        }
        scaled.validate()?;
        Ok(scaled)
    }

    /// Minimum distance from the surface to the wire axis.
    pub fn r_min(&self) -> f64 {
        let Some(d) = self.domain() else {
            return self
                .samples(0)
                .iter()
                .map(wire_distance)
                .fold(f64::INFINITY, f64::min);
        };
        let m = RMIN_GRID;
        let at = |q: [f64; 2]| wire_distance(&self.point(q));
        let mut seeds: Vec<(f64, [f64; 2])> = Vec::with_capacity(m * m);
        for i in 0..m {
            let q1 = d.q1.0 + (d.q1.1 - d.q1.0) * i as f64 / (m - 1) as f64;
            for j in 0..m {
                let q2 = d.q2.0 + (d.q2.1 - d.q2.0) * j as f64 / (m - 1) as f64;
                seeds.push((at([q1, q2]), [q1, q2]));
            }
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
        let clamp = |q: [f64; 2]| -> [f64; 2] {
            let q1 = q[0].clamp(d.q1.0, d.q1.1);
            let q2 = if d.periodic_q2 {
                q[1]
            } else {
                q[1].clamp(d.q2.0, d.q2.1)
            };
            [q1, q2]
        };
        let mut best = seeds[0].0;
        for &(value, q) in seeds.iter().take(4) {
            // compass search
            let mut q = q;
            let mut value = value;
            let mut step = [
                (d.q1.1 - d.q1.0) / (m - 1) as f64,
                (d.q2.1 - d.q2.0) / (m - 1) as f64,
            ];
            while step[0].max(step[1]) > 1e-13 {
                let mut improved = false;
                for (di, dj) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                    let trial = clamp([q[0] + di * step[0], q[1] + dj * step[1]]);
                    let v = at(trial);
                    if v < value {
                        value = v;
                        q = trial;
                        improved = true;
                    }
                }
                if !improved {
                    step[0] *= 0.5;
                    step[1] *= 0.5;
                }
            }
            best = best.min(value);
        }
        best
    }
}

/// Nodes and area weights on a surface.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Parameter of each node; empty for tabulated surfaces.
    pub param_nodes: Vec<[f64; 2]>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Tensor Gauss-Legendre on the parameter domain (midpoint rule in `q2` when
/// it is periodic). `order^2` nodes.
pub fn build_quadrature(surface: &Surface, order: usize) -> Result<QuadratureRule> {
    if order < 2 {
        return Err(Error::InvalidParameter {
            name: "order",
            detail: format!("quadrature order must be >= 2, got {order}"),
        });
    }
    let Some(d) = surface.domain() else {
        let SurfaceFamily::Tabulated { nodes, weights } = surface.family() else {
            unreachable!()
        };
        let s2 = surface.delta() * surface.delta();
        return Ok(QuadratureRule {
            nodes: nodes.iter().map(|p| surface.scale_point(*p)).collect(),
            weights: weights.iter().map(|w| w * s2).collect(),
            param_nodes: Vec::new(),
            order,
        });
    };
    let (x1, w1) = gauss_legendre_on(order, d.q1.0, d.q1.1);
    let (x2, w2): (Vec<f64>, Vec<f64>) = if d.periodic_q2 {
        let h = (d.q2.1 - d.q2.0) / order as f64;
        (0..order)
            .map(|j| (d.q2.0 + (j as f64 + 0.5) * h, h))
            .unzip()
    } else {
        gauss_legendre_on(order, d.q2.0, d.q2.1)
    };
    let mut nodes = Vec::with_capacity(order * order);
    let mut weights = Vec::with_capacity(order * order);
    let mut param_nodes = Vec::with_capacity(order * order);
    for (q1, a) in x1.iter().zip(&w1) {
        for (q2, b) in x2.iter().zip(&w2) {
            let q = [*q1, *q2];
            let (x, t1, t2) = surface.eval(q);
            nodes.push(x);
            weights.push(a * b * t1.cross(&t2).norm());
            param_nodes.push(q);
        }
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        param_nodes,
        order,
    })
}
