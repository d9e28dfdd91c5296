//! Laplace Green's kernels and single-layer potentials over flat panels.
//!
//! Panels are segments in 2D and triangles in 3D, each carrying a constant
//! density `g = M·n`. Off-panel integrals use Gaussian rules with recursive
//! subdivision of nearby panels; points lying on a panel use closed-form
//! self-integrals.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::laplace::Region;

const ON_PANEL_TOL: f64 = 1e-12;
const MAX_SUBDIVISION: usize = 4;

/// Free-space Green's function of `-Δ`.
pub fn green(dim: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    let r = dist(&x[..dim], &y[..dim]);
    if r == 0.0 {
        return Err(Error::SingularKernel);
    }
    kernel(dim, r)
}

fn kernel(dim: usize, r: f64) -> Result<f64> {
    match dim {
        2 => Ok(-r.ln() / (2.0 * PI)),
        3 => Ok(1.0 / (4.0 * PI * r)),
        _ => Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}"))),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn lift(p: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..p.len().min(3)].copy_from_slice(&p[..p.len().min(3)]);
    out
}

/// Gauss points and weights on a reference element: `[0,1]` for segments
/// (weights sum to 1) or the unit right triangle (weights sum to 1/2).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n`-point Gauss–Legendre rule on `[0,1]`.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("quadrature needs at least one point"));
        }
        let (x, w) = gauss_legendre_unit(n);
        Ok(Self {
            points: x.into_iter().map(|t| [t, 0.0]).collect(),
            weights: w,
        })
    }

    /// The classical 7-point, degree-5 rule on the reference triangle.
    pub fn triangle7() -> Self {
        let s15 = 15f64.sqrt();
        let a1 = (6.0 - s15) / 21.0;
        let a2 = (6.0 + s15) / 21.0;
        let w1 = (155.0 - s15) / 2400.0;
        let w2 = (155.0 + s15) / 2400.0;
        let third = 1.0 / 3.0;
        Self {
            points: vec![
                [third, third],
                [a1, a1],
                [1.0 - 2.0 * a1, a1],
                [a1, 1.0 - 2.0 * a1],
                [a2, a2],
                [1.0 - 2.0 * a2, a2],
                [a2, 1.0 - 2.0 * a2],
            ],
            weights: vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
        }
    }

    /// Collapsed (Duffy) tensor Gauss rule with `n²` points on the reference triangle.
    pub fn triangle_collapsed(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("quadrature needs at least one point"));
        }
        let (x, w) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (s, ws) in x.iter().zip(&w) {
            for (t, wt) in x.iter().zip(&w) {
                points.push([*s, (1.0 - s) * t]);
                weights.push(ws * wt * (1.0 - s));
            }
        }
        Ok(Self { points, weights })
    }

    /// 4-point Gauss–Legendre in 2D, the 7-point triangle rule in 3D.
    pub fn default_for(dim: usize) -> Self {
        if dim == 2 {
            Self::gauss_legendre(4).expect("nonzero order")
        } else {
            Self::triangle7()
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // recompute the derivative at the converged node
        let (mut p0, mut p1) = (1.0, x);
        for j in 2..=n {
            let jf = j as f64;
            let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
            p0 = p1;
            p1 = p2;
        }
        if n == 1 {
            p0 = 1.0;
        }
        if x * x != 1.0 {
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        }
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// A flat boundary element with constant density.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Two (segment) or three (triangle) vertices; unused coordinates are zero.
    pub vertices: Vec<[f64; 3]>,
    pub normal: [f64; 3],
    pub density: f64,
}

impl Panel {
    pub fn dim(&self) -> usize {
        self.vertices.len()
    }

    /// Length (2D) or area (3D).
    pub fn measure(&self) -> f64 {
        match self.dim() {
            2 => norm3(sub(self.vertices[1], self.vertices[0])),
            _ => 0.5 * norm3(self.jacobian_cross()),
        }
    }

    fn jacobian_cross(&self) -> [f64; 3] {
        cross(
            sub(self.vertices[1], self.vertices[0]),
            sub(self.vertices[2], self.vertices[0]),
        )
    }

    pub fn centroid(&self) -> [f64; 3] {
        let k = self.vertices.len() as f64;
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for a in 0..3 {
                c[a] += v[a] / k;
            }
        }
        c
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(norm3(sub(*a, *b)));
            }
        }
        d
    }

    /// Whether `x` lies on the closed panel (up to a relative tolerance).
    pub fn contains(&self, x: &[f64]) -> bool {
        let x = lift(x);
        let tol = ON_PANEL_TOL * self.diameter();
        let v = &self.vertices;
        match self.dim() {
            2 => {
                let e = sub(v[1], v[0]);
                let l2 = dot3(e, e);
                let t = dot3(sub(x, v[0]), e) / l2;
                let foot = [v[0][0] + t * e[0], v[0][1] + t * e[1], 0.0];
                let slack = tol / l2.sqrt();
                norm3(sub(x, foot)) <= tol && t >= -slack && t <= 1.0 + slack
            }
            _ => {
                let n = self.jacobian_cross();
                let area2 = norm3(n);
                if (dot3(sub(x, v[0]), n) / area2).abs() > tol {
                    return false;
                }
                // barycentric signs via sub-areas
                let slack = tol * self.diameter();
                (0..3).all(|i| {
                    let a = v[i];
                    let b = v[(i + 1) % 3];
                    dot3(cross(sub(b, a), sub(x, a)), n) / area2 >= -slack
                })
            }
        }
    }

    fn subdivide(&self) -> Vec<Panel> {
        let v = &self.vertices;
        let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
        let make = |vs: Vec<[f64; 3]>| Panel {
            vertices: vs,
            normal: self.normal,
            density: self.density,
        };
        match self.dim() {
            2 => {
                let m = mid(v[0], v[1]);
                vec![make(vec![v[0], m]), make(vec![m, v[1]])]
            }
            _ => {
                let (m01, m12, m20) = (mid(v[0], v[1]), mid(v[1], v[2]), mid(v[2], v[0]));
                vec![
                    make(vec![v[0], m01, m20]),
                    make(vec![m01, v[1], m12]),
                    make(vec![m20, m12, v[2]]),
                    make(vec![m01, m12, m20]),
                ]
            }
        }
    }
}

/// Integral of `G(x, ·)` over the right isosceles triangle with legs `l`,
/// singular point at its centroid.
pub fn singular_triangle_integral(l: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::invalid(format!("leg length must be positive, got {l}")));
    }
    let (s2, s5, s10) = (2f64.sqrt(), 5f64.sqrt(), 10f64.sqrt());
    Ok(l / (12.0 * PI) * (s2 * (s10 + 3.0).ln() + 2.0 * (s5 + 2.0).ln() + 2.0 * (s2 + 1.0).ln()))
}

/// Integral of the 2D kernel over a segment of length `L`, singular point at its midpoint.
pub fn singular_segment_integral(length: f64) -> Result<f64> {
    if !(length > 0.0) {
        return Err(Error::invalid(format!(
            "segment length must be positive, got {length}"
        )));
    }
    Ok(length / (2.0 * PI) * (1.0 - (0.5 * length).ln()))
}

fn xlogx_term(a: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        a * (1.0 - a.ln())
    }
}

/// Integral of `G(x, ·)` over a panel that contains `x`, without the density.
pub fn self_integral(x: &[f64], panel: &Panel) -> f64 {
    let x = lift(x);
    let v = &panel.vertices;
    match panel.dim() {
        2 => {
            let a = norm3(sub(x, v[0]));
            let b = norm3(sub(x, v[1]));
            (xlogx_term(a) + xlogx_term(b)) / (2.0 * PI)
        }
        _ => {
            // fan of triangles (x, v_i, v_{i+1}); each is ∫ sec in closed form
            let mut total = 0.0;
            for i in 0..3 {
                let a = v[i];
                let b = v[(i + 1) % 3];
                let e = sub(b, a);
                let len = norm3(e);
                let e = [e[0] / len, e[1] / len, e[2] / len];
                let t1 = dot3(sub(a, x), e);
                let t2 = dot3(sub(b, x), e);
                let foot = sub(sub(a, x), [t1 * e[0], t1 * e[1], t1 * e[2]]);
                let rho = norm3(foot);
                if rho <= ON_PANEL_TOL * len {
                    continue;
                }
                total += rho * ((t2 / rho).asinh() - (t1 / rho).asinh());
            }
            total / (4.0 * PI)
        }
    }
}

/// `g · ∫ G(x, ·)` over a panel not containing `x`: Gaussian quadrature,
/// subdividing triangles closer than their diameter; segments within a few
/// lengths of `x` are integrated in closed form.
pub fn panel_integral_regular(x: &[f64], panel: &Panel, g: f64, rule: &QuadratureRule) -> Result<f64> {
    if g == 0.0 {
        return Ok(0.0);
    }
    if panel.contains(x) {
        return Err(Error::SingularKernel);
    }
    Ok(g * regular_unit(&lift(x), panel, rule, 0))
}

/// Segments closer than this many lengths are integrated in closed form.
const SEGMENT_EXACT_RANGE: f64 = 6.0;

/// `∫ G(x, ·)` over the segment `a b` in closed form, any `x`.
///
/// With `s` the arc coordinate from the foot of `x` and `d` the distance to
/// the line, `∫ ln √(s² + d²) ds = s ln √(s² + d²) − s + d atan(s/d)`.
fn segment_integral(x: &[f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let e = sub(b, a);
    let len = norm3(e);
    let t = [e[0] / len, e[1] / len, 0.0];
    let ax = sub(a, *x);
    let s0 = dot3(ax, t);
    let s1 = s0 + len;
    let d = (ax[0] * t[1] - ax[1] * t[0]).abs();
    let antiderivative = |s: f64| {
        let r2 = s * s + d * d;
        let log_part = if r2 == 0.0 { 0.0 } else { 0.5 * s * r2.ln() };
        let angle = if d == 0.0 { 0.0 } else { d * (s / d).atan() };
        log_part - s + angle
    };
    -(antiderivative(s1) - antiderivative(s0)) / (2.0 * PI)
}

fn regular_unit(x: &[f64; 3], panel: &Panel, rule: &QuadratureRule, depth: usize) -> f64 {
    let gap = norm3(sub(*x, panel.centroid()));
    if panel.dim() == 2 && gap < SEGMENT_EXACT_RANGE * panel.diameter() {
        return segment_integral(x, panel.vertices[0], panel.vertices[1]);
    }
    let near = gap < panel.diameter();
    if near && depth < MAX_SUBDIVISION {
        return panel
            .subdivide()
            .iter()
            .map(|p| regular_unit(x, p, rule, depth + 1))
            .sum();
    }
    let v = &panel.vertices;
    let dim = panel.dim();
    let jac = match dim {
        2 => panel.measure(),
        _ => norm3(panel.jacobian_cross()),
    };
    let mut acc = 0.0;
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let y = match dim {
            2 => {
                let t = p[0];
                [
                    v[0][0] + t * (v[1][0] - v[0][0]),
                    v[0][1] + t * (v[1][1] - v[0][1]),
                    0.0,
                ]
            }
            _ => {
                let (s, t) = (p[0], p[1]);
                let mut y = [0.0; 3];
                for a in 0..3 {
                    y[a] = v[0][a] + s * (v[1][a] - v[0][a]) + t * (v[2][a] - v[0][a]);
                }
                y
            }
        };
        let r = norm3(sub(*x, y));
        acc += w * kernel(dim, r).unwrap_or(0.0);
    }
    acc * jac
}

/// Boundary panels of Ω with their densities.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    dim: usize,
    panels: Vec<Panel>,
}

impl BoundaryMesh {
    pub fn new(dim: usize, panels: Vec<Panel>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
        }
        for (i, p) in panels.iter().enumerate() {
            if p.vertices.len() != dim {
                return Err(Error::invalid(format!(
                    "panel {i} has {} vertices",
                    p.vertices.len()
                )));
            }
            let finite = p
                .vertices
                .iter()
                .flatten()
                .chain(&p.normal)
                .all(|v| v.is_finite());
            if !finite || !p.density.is_finite() {
                return Err(Error::NonFinite("boundary panel"));
            }
            if (norm3(p.normal) - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("panel {i} normal is not unit length")));
            }
            if !(p.measure() > 0.0) {
                return Err(Error::invalid(format!("panel {i} is degenerate")));
            }
        }
        Ok(Self { dim, panels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    /// Total charge `∫ g dS`.
    pub fn total_charge(&self) -> f64 {
        self.panels.iter().map(|p| p.density * p.measure()).sum()
    }

    /// Same geometry, densities `M(centroid)·n`.
    pub fn with_magnetization(&self, m: impl Fn(&[f64]) -> [f64; 3]) -> Self {
        let panels = self
            .panels
            .iter()
            .map(|p| {
                let c = p.centroid();
                let mv = m(&c[..self.dim]);
                Panel {
                    density: dot3(mv, p.normal),
                    ..p.clone()
                }
            })
            .collect();
        Self {
            dim: self.dim,
            panels,
        }
    }

    /// Same geometry, densities interpolated from a sampled magnetization.
    pub fn with_field(&self, m: &VectorField) -> Self {
        self.with_magnetization(|p| interpolate(m, p))
    }

    /// Surface of the box `[-r, r]^d` with panels of size `1/n_per_unit`; 3D
    /// faces split each square into two right isosceles triangles.
    pub fn box_surface(dim: usize, half_width: f64, n_per_unit: usize) -> Result<Self> {
        let cells = half_width * 2.0 * n_per_unit as f64;
        if !(half_width > 0.0) || (cells - cells.round()).abs() > 1e-9 || n_per_unit == 0 {
            return Err(Error::Misaligned(format!(
                "box half-width {half_width} is not a multiple of 1/{n_per_unit}"
            )));
        }
        let m = cells.round() as usize;
        let h = 1.0 / n_per_unit as f64;
        let coord = |i: usize| -half_width + i as f64 * h;
        let mut panels = Vec::new();
        match dim {
            2 => {
                // counter-clockwise walk
                let corners = [
                    ([-half_width, -half_width], [1.0, 0.0], [0.0, -1.0]),
                    ([half_width, -half_width], [0.0, 1.0], [1.0, 0.0]),
                    ([half_width, half_width], [-1.0, 0.0], [0.0, 1.0]),
                    ([-half_width, half_width], [0.0, -1.0], [-1.0, 0.0]),
                ];
                for (start, dir, n) in corners {
                    for i in 0..m {
                        let a = [
                            start[0] + dir[0] * i as f64 * h,
                            start[1] + dir[1] * i as f64 * h,
                            0.0,
                        ];
                        let b = if i + 1 == m {
                            [
                                start[0] + dir[0] * 2.0 * half_width,
                                start[1] + dir[1] * 2.0 * half_width,
                                0.0,
                            ]
                        } else {
                            [a[0] + dir[0] * h, a[1] + dir[1] * h, 0.0]
                        };
                        panels.push(Panel {
                            vertices: vec![a, b],
                            normal: [n[0], n[1], 0.0],
                            density: 0.0,
                        });
                    }
                }
            }
            3 => {
                for axis in 0..3 {
                    let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
                    for side in [-1.0, 1.0] {
                        let mut normal = [0.0; 3];
                        normal[axis] = side;
                        for i in 0..m {
                            for j in 0..m {
                                let at = |a: usize, b: usize| {
                                    let mut p = [0.0; 3];
                                    p[axis] = side * half_width;
                                    p[u] = coord(a);
                                    p[w] = coord(b);
                                    p
                                };
                                let (p00, p10, p01, p11) =
                                    (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
                                let (t1, t2) = if side > 0.0 {
                                    (vec![p00, p10, p01], vec![p11, p01, p10])
                                } else {
                                    (vec![p00, p01, p10], vec![p11, p10, p01])
                                };
                                for vs in [t1, t2] {
                                    panels.push(Panel {
                                        vertices: vs,
                                        normal,
                                        density: 0.0,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            _ => return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}"))),
        }
        Self::new(dim, panels)
    }

    /// Maximum over panels of the outward-orientation check: the normal must
    /// point away from `center` (valid for convex domains).
    pub fn outward_from(&self, center: &[f64]) -> bool {
        let c = lift(center);
        self.panels
            .iter()
            .all(|p| dot3(sub(p.centroid(), c), p.normal) > 0.0)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "demagkit-mesh v1 dim={} panels={}",
            self.dim,
            self.panels.len()
        )?;
        for p in &self.panels {
            let mut fields: Vec<String> = Vec::new();
            for v in &p.vertices {
                fields.extend(v[..self.dim].iter().map(|c| format!("{c:.16e}")));
            }
            fields.extend(p.normal[..self.dim].iter().map(|c| format!("{c:.16e}")));
            fields.push(format!("{:.16e}", p.density));
            writeln!(w, "{}", fields.join(" "))?;
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Self> {
        let bad = |reason: String| Error::Format { what: "mesh", reason };
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("demagkit-mesh") || parts.next() != Some("v1") {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut dim = None;
        let mut count = None;
        for kv in parts {
            match kv.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("panels", v)) => count = v.parse::<usize>().ok(),
                _ => return Err(bad(format!("unknown header field {kv:?}"))),
            }
        }
        let (dim, count) = match (dim, count) {
            (Some(d @ (2 | 3)), Some(c)) => (d, c),
            _ => return Err(bad(format!("incomplete header {header:?}"))),
        };
        let per_line = dim * dim + dim + 1;
        let mut panels = Vec::with_capacity(count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if nums.len() != per_line {
                return Err(bad(format!(
                    "panel line has {} numbers, expected {per_line}",
                    nums.len()
                )));
            }
            let vertices = (0..dim).map(|i| lift(&nums[i * dim..(i + 1) * dim])).collect();
            panels.push(Panel {
                vertices,
                normal: lift(&nums[dim * dim..dim * dim + dim]),
                density: nums[per_line - 1],
            });
        }
        if panels.len() != count {
            return Err(bad(format!("expected {count} panels, found {}", panels.len())));
        }
        Self::new(dim, panels)
    }
}

/// Multilinear interpolation of a vector field at `p` (clamped to the grid).
pub fn interpolate(m: &VectorField, p: &[f64]) -> [f64; 3] {
    let g = m.grid();
    let d = g.dim();
    let n = g.nodes_per_axis();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..d {
        let s = ((p[a] + g.half_width()) * g.n_per_unit() as f64).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        base[a] = i;
        frac[a] = s - i as f64;
    }
    let mut out = [0.0; 3];
    for corner in 0..(1usize << d) {
        let mut idx = [0usize; 3];
        let mut w = 1.0;
        for a in 0..d {
            let bit = (corner >> a) & 1;
            idx[a] = base[a] + bit;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w == 0.0 {
            continue;
        }
        let v = m.at(g.index(idx));
        for c in 0..d {
            out[c] += w * v[c];
        }
    }
    out
}

/// Single-layer potential `∫ G(x, y) g(y) dy` at `x`, summed in panel order.
pub fn single_layer_potential(x: &[f64], mesh: &BoundaryMesh, rule: &QuadratureRule) -> f64 {
    let xp = lift(x);
    let mut acc = 0.0;
    for p in &mesh.panels {
        if p.density == 0.0 {
            continue;
        }
        if p.contains(&xp) {
            acc += p.density * self_integral(&xp, p);
        } else {
            acc += p.density * regular_unit(&xp, p, rule, 0);
        }
    }
    acc
}

/// [`single_layer_potential`] at many points, in parallel.
pub fn single_layer_potential_many(
    points: &[[f64; 3]],
    mesh: &BoundaryMesh,
    rule: &QuadratureRule,
) -> Vec<f64> {
    points
        .par_iter()
        .map(|x| single_layer_potential(x, mesh, rule))
        .collect()
}

/// A simple polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(mut vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::invalid("polygon needs at least three vertices"));
        }
        let area: f64 = (0..vertices.len())
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % vertices.len()];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        if area == 0.0 {
            return Err(Error::invalid("polygon has zero area"));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    /// Regular `n`-gon inscribed in the circle of radius `radius`, first vertex on the positive x axis.
    /// When `4 | n` the vertices are exactly invariant under quarter turns.
    pub fn regular(n: usize, radius: f64) -> Result<Self> {
        if n < 3 || !(radius > 0.0) {
            return Err(Error::invalid("regular polygon needs n ≥ 3 and positive radius"));
        }
        let at = |i: usize| {
            let t = 2.0 * PI * i as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        };
        if !n.is_multiple_of(4) {
            return Self::new((0..n).map(at).collect());
        }
        let quarter: Vec<[f64; 2]> = (0..n / 4).map(at).collect();
        let mut vertices = Vec::with_capacity(n);
        for turn in 0..4 {
            vertices.extend(quarter.iter().map(|&[x, y]| match turn {
                0 => [x, y],
                1 => [-y, x],
                2 => [-x, -y],
                _ => [y, -x],
            }));
        }
        Self::new(vertices)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Boundary mesh with densities `M(midpoint)·n`.
    pub fn mesh(&self, m: impl Fn(&[f64]) -> [f64; 3]) -> Result<BoundaryMesh> {
        let n = self.vertices.len();
        let panels = (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                let normal = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len, 0.0];
                Panel {
                    vertices: vec![[a[0], a[1], 0.0], [b[0], b[1], 0.0]],
                    normal,
                    density: 0.0,
                }
            })
            .collect();
        Ok(BoundaryMesh::new(2, panels)?.with_magnetization(m))
    }
}

impl Region for Polygon {
    fn contains(&self, p: &[f64]) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            // on an edge counts as outside
            let cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            let within = (p[0] - a[0]) * (p[0] - b[0]) <= 0.0 && (p[1] - a[1]) * (p[1] - b[1]) <= 0.0;
            if cr == 0.0 && within {
                return false;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn exit_fraction(&self, from: &[f64], to: &[f64]) -> f64 {
        let n = self.vertices.len();
        let d = [to[0] - from[0], to[1] - from[1]];
        let mut best: f64 = 1.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let e = [b[0] - a[0], b[1] - a[1]];
            let den = d[0] * e[1] - d[1] * e[0];
            if den == 0.0 {
                continue;
            }
            let w = [a[0] - from[0], a[1] - from[1]];
            let t = (w[0] * e[1] - w[1] * e[0]) / den;
            let s = (w[0] * d[1] - w[1] * d[0]) / den;
            if t > 0.0 && t <= 1.0 && (0.0..=1.0).contains(&s) {
                best = best.min(t);
            }
        }
        best
    }
}
