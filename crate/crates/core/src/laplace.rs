//! Matrix-free discrete Laplacian and a Jacobi-preconditioned conjugate
//! gradient solver for Dirichlet problems.
//!
//! The symmetric positive definite operator acts on the unknowns only: the
//! box interior for [`BoxLaplacian`], or the nodes strictly inside a curved
//! region for [`MaskedLaplacian`]. Dirichlet data is lifted into the
//! right-hand side.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::vecops;

/// Default relative residual for [`solve_dirichlet`].
pub const DEFAULT_CG_TOL: f64 = 1e-10;
pub const DEFAULT_CG_MAX_ITER: usize = 100_000;

/// A symmetric linear map on a flat vector of unknowns.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal entries, used for Jacobi preconditioning.
    fn diagonal(&self) -> Vec<f64>;
}

/// `-Δ_h` on the interior nodes of a box with homogeneous Dirichlet walls.
#[derive(Debug, Clone, Copy)]
pub struct BoxLaplacian {
    grid: Grid,
    m: usize,
    inv_h2: f64,
}

impl BoxLaplacian {
    pub fn new(grid: Grid) -> Result<Self> {
        grid.require_nodes(3)?;
        let n = grid.n_per_unit() as f64;
        Ok(Self {
            grid,
            m: grid.nodes_per_axis() - 2,
            inv_h2: n * n,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Interior nodes per axis.
    pub fn interior_per_axis(&self) -> usize {
        self.m
    }

    /// Copies the interior values of a full-grid field into unknown order.
    pub fn gather(&self, f: &ScalarField) -> Vec<f64> {
        let g = &self.grid;
        let m = self.m;
        let d = g.dim();
        let mut out = Vec::with_capacity(m.pow(d as u32));
        let kmax = if d == 3 { m } else { 1 };
        for k in 0..kmax {
            for j in 0..m {
                let kk = if d == 3 { k + 1 } else { 0 };
                let row = g.index([1, j + 1, kk]);
                out.extend_from_slice(&f.values()[row..row + m]);
            }
        }
        out
    }

    /// Writes unknowns back into a full-grid field whose walls hold `wall`.
    pub fn scatter(&self, x: &[f64], wall: Option<&ScalarField>) -> ScalarField {
        let g = &self.grid;
        let m = self.m;
        let d = g.dim();
        let mut values = match wall {
            Some(w) => w.values().to_vec(),
            None => vec![0.0; g.node_count()],
        };
        let kmax = if d == 3 { m } else { 1 };
        let mut src = 0;
        for k in 0..kmax {
            for j in 0..m {
                let kk = if d == 3 { k + 1 } else { 0 };
                let row = g.index([1, j + 1, kk]);
                values[row..row + m].copy_from_slice(&x[src..src + m]);
                src += m;
            }
        }
        ScalarField::from_parts(*g, values)
    }

    fn center(&self) -> f64 {
        2.0 * self.grid.dim() as f64 * self.inv_h2
    }
}

impl LinearOperator for BoxLaplacian {
    fn dim(&self) -> usize {
        self.m.pow(self.grid.dim() as u32)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.m;
        let c = self.center();
        let s = self.inv_h2;
        let plane = m * m;
        let three_d = self.grid.dim() == 3;
        y.par_chunks_mut(m).enumerate().for_each(|(row, yr)| {
            let base = row * m;
            let j = row % m;
            let k = row / m;
            let xr = &x[base..base + m];
            let south = (j > 0).then(|| &x[base - m..base]);
            let north = (j + 1 < m).then(|| &x[base + m..base + 2 * m]);
            let (below, above) = if three_d {
                (
                    (k > 0).then(|| &x[base - plane..base - plane + m]),
                    (k + 1 < m).then(|| &x[base + plane..base + plane + m]),
                )
            } else {
                (None, None)
            };
            for i in 0..m {
                let mut nb = 0.0;
                if i > 0 {
                    nb += xr[i - 1];
                }
                if i + 1 < m {
                    nb += xr[i + 1];
                }
                if let Some(r) = south {
                    nb += r[i];
                }
                if let Some(r) = north {
                    nb += r[i];
                }
                if let Some(r) = below {
                    nb += r[i];
                }
                if let Some(r) = above {
                    nb += r[i];
                }
                yr[i] = c * xr[i] - s * nb;
            }
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        vec![self.center(); self.dim()]
    }
}

/// `shift * I + scale * A`, e.g. the implicit Euler matrix `I + dt (-Δ_h)`.
pub struct ShiftedOperator<'a, A: LinearOperator> {
    pub inner: &'a A,
    pub shift: f64,
    pub scale: f64,
}

impl<A: LinearOperator> LinearOperator for ShiftedOperator<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply(x, y);
        let (a, b) = (self.shift, self.scale);
        y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| {
            *yi = a * xi + b * *yi;
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        self.inner
            .diagonal()
            .into_iter()
            .map(|d| self.shift + self.scale * d)
            .collect()
    }
}

/// Applies the 5-point (2D) or 7-point (3D) stencil `(2d v_i - Σ v_nb) / h²`
/// at every interior node, reading wall values from `v`. Wall outputs are zero.
pub fn apply_neg_laplacian(v: &ScalarField) -> Result<ScalarField> {
    let g = *v.grid();
    g.require_nodes(3)?;
    let d = g.dim();
    let strides = g.strides();
    let inv_h2 = (g.n_per_unit() * g.n_per_unit()) as f64;
    let vals = v.values();
    let out = (0..g.node_count())
        .map(|i| {
            if g.is_boundary(i) {
                return 0.0;
            }
            let mut acc = 2.0 * d as f64 * vals[i];
            for s in strides.iter().take(d) {
                acc -= vals[i - s] + vals[i + s];
            }
            acc * inv_h2
        })
        .collect();
    Ok(ScalarField::from_parts(g, out))
}

/// `-Δ v = rhs` in the box, `v = boundary_values` on its walls.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub rhs: ScalarField,
    /// Full-grid field; only its wall nodes are read.
    pub boundary_values: ScalarField,
}

impl DirichletProblem {
    pub fn homogeneous(rhs: ScalarField) -> Self {
        let boundary_values = ScalarField::zeros(*rhs.grid());
        Self { rhs, boundary_values }
    }

    pub fn new(rhs: ScalarField, boundary_values: ScalarField) -> Result<Self> {
        if rhs.grid() != boundary_values.grid() {
            return Err(Error::Misaligned("rhs and boundary data grids differ".into()));
        }
        Ok(Self { rhs, boundary_values })
    }
}

/// Iteration count and final relative residual of a CG run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn pcg<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgReport)> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "CG tolerance must be positive, got {tol}"
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    let n = op.dim();
    let mut x = vec![0.0; n];
    let bnorm = vecops::norm(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = op.diagonal().into_iter().map(|d| 1.0 / d).collect();
    let precondition = |r: &[f64], z: &mut [f64]| {
        z.par_iter_mut()
            .zip(r.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
    };
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = vecops::dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let alpha = rz / vecops::dot(&p, &ap);
        vecops::axpy(alpha, &p, &mut x);
        vecops::axpy(-alpha, &ap, &mut r);
        rel = vecops::norm(&r) / bnorm;
        if rel <= tol {
            return Ok((
                x,
                CgReport {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        precondition(&r, &mut z);
        let rz_new = vecops::dot(&r, &z);
        vecops::xpby(&z, rz_new / rz, &mut p);
        rz = rz_new;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: rel,
    })
}

/// Solves a box Dirichlet problem; wall nodes of the result equal the data exactly.
pub fn solve_dirichlet(p: &DirichletProblem, tol: f64, max_iter: usize) -> Result<ScalarField> {
    if p.rhs.values().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    let op = BoxLaplacian::new(*p.rhs.grid())?;
    let mut rhs = op.gather(&p.rhs);
    lift_walls(&op, &p.boundary_values, &mut rhs);
    let (x, _) = pcg(&op, &rhs, tol, max_iter)?;
    Ok(op.scatter(&x, Some(&p.boundary_values)))
}

/// Adds `g_wall / h²` for every interior node next to a wall.
fn lift_walls(op: &BoxLaplacian, walls: &ScalarField, rhs: &mut [f64]) {
    let g = op.grid();
    let d = g.dim();
    let m = op.interior_per_axis();
    let strides = g.strides();
    let last = g.nodes_per_axis() - 1;
    let inv_h2 = op.inv_h2;
    let wv = walls.values();
    let kmax = if d == 3 { m } else { 1 };
    let mut u = 0;
    for k in 0..kmax {
        for j in 0..m {
            for i in 0..m {
                let idx = [i + 1, j + 1, if d == 3 { k + 1 } else { 0 }];
                let flat = g.index(idx);
                let mut acc = 0.0;
                for a in 0..d {
                    if idx[a] == 1 {
                        acc += wv[flat - strides[a]];
                    }
                    if idx[a] == last - 1 {
                        acc += wv[flat + strides[a]];
                    }
                }
                rhs[u] += acc * inv_h2;
                u += 1;
            }
        }
    }
}

/// Geometry of a curved region seen by the cut-cell Laplacian.
pub trait Region: Sync {
    /// Strict interior test.
    fn contains(&self, p: &[f64]) -> bool;
    /// For `from` inside and `to` outside, the fraction `θ ∈ (0, 1]` of the
    /// segment at which it leaves the region.
    fn exit_fraction(&self, from: &[f64], to: &[f64]) -> f64;
}

/// A boundary intersection of a grid edge leaving the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub unknown: usize,
    pub point: [f64; 3],
    pub theta: f64,
}

const NO_NEIGHBOR: u32 = u32::MAX;
const MIN_THETA: f64 = 1e-9;

/// Symmetric cut-cell Laplacian on the grid nodes strictly inside a region.
///
/// Edges leaving the region use a linear ghost value through the crossing
/// point, which only modifies the diagonal by `1/(θ h²)` and keeps the matrix
/// symmetric positive definite.
pub struct MaskedLaplacian {
    grid: Grid,
    nodes: Vec<usize>,
    neighbors: Vec<[u32; 6]>,
    diag: Vec<f64>,
    crossings: Vec<Crossing>,
    inv_h2: f64,
}

impl MaskedLaplacian {
    pub fn new(grid: Grid, region: &dyn Region) -> Result<Self> {
        grid.require_nodes(3)?;
        let d = grid.dim();
        let last = grid.nodes_per_axis() - 1;
        let mut slot = vec![NO_NEIGHBOR; grid.node_count()];
        let mut nodes = Vec::new();
        for i in 0..grid.node_count() {
            if !grid.is_boundary(i) && region.contains(&grid.point(i)[..d]) {
                slot[i] = nodes.len() as u32;
                nodes.push(i);
            }
        }
        let inv_h2 = (grid.n_per_unit() * grid.n_per_unit()) as f64;
        let strides = grid.strides();
        let mut neighbors = Vec::with_capacity(nodes.len());
        let mut diag = Vec::with_capacity(nodes.len());
        let mut crossings = Vec::new();
        for (u, &flat) in nodes.iter().enumerate() {
            let idx = grid.multi_index(flat);
            let mut nb = [NO_NEIGHBOR; 6];
            let mut dg = 0.0;
            for a in 0..d {
                for (side, sign) in [(0usize, -1isize), (1, 1)] {
                    let at_wall = (sign < 0 && idx[a] == 0) || (sign > 0 && idx[a] == last);
                    let other = (!at_wall).then(|| (flat as isize + sign * strides[a] as isize) as usize);
                    match other.map(|o| slot[o]) {
                        Some(s) if s != NO_NEIGHBOR => {
                            nb[2 * a + side] = s;
                            dg += inv_h2;
                        }
                        _ => {
                            let here = grid.point(flat);
                            let mut there = here;
                            there[a] += sign as f64 * grid.spacing();
                            let theta = region
                                .exit_fraction(&here[..d], &there[..d])
                                .clamp(MIN_THETA, 1.0);
                            let mut point = here;
                            point[a] += sign as f64 * theta * grid.spacing();
                            crossings.push(Crossing {
                                unknown: u,
                                point,
                                theta,
                            });
                            dg += inv_h2 / theta;
                        }
                    }
                }
            }
            neighbors.push(nb);
            diag.push(dg);
        }
        if nodes.is_empty() {
            return Err(Error::invalid("region contains no interior grid nodes"));
        }
        Ok(Self {
            grid,
            nodes,
            neighbors,
            diag,
            crossings,
            inv_h2,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Flat grid indices of the unknowns.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn crossings(&self) -> &[Crossing] {
        &self.crossings
    }

    /// Solves `-Δ b = rhs` inside with `b = boundary(point)` on the region's
    /// boundary. Returns the full-grid field (zero outside) and an inside mask.
    pub fn solve(
        &self,
        rhs: Option<&ScalarField>,
        boundary: impl Fn(&[f64]) -> f64 + Sync,
        tol: f64,
        max_iter: usize,
    ) -> Result<(ScalarField, Vec<bool>)> {
        let d = self.grid.dim();
        let mut b: Vec<f64> = match rhs {
            Some(f) => self.nodes.iter().map(|&i| f.values()[i]).collect(),
            None => vec![0.0; self.nodes.len()],
        };
        let lifted: Vec<f64> = self
            .crossings
            .par_iter()
            .map(|c| boundary(&c.point[..d]) * self.inv_h2 / c.theta)
            .collect();
        for (c, v) in self.crossings.iter().zip(lifted) {
            b[c.unknown] += v;
        }
        // Nodes next to a near-tangent crossing have diagonals up to 1/θ times
        // larger than the rest; solving the symmetrically scaled system keeps
        // the residual test from being dominated by them.
        let scale: Vec<f64> = self.diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let bs: Vec<f64> = b.iter().zip(&scale).map(|(v, s)| v * s).collect();
        let (y, _) = pcg(
            &JacobiScaled {
                inner: self,
                scale: &scale,
            },
            &bs,
            tol,
            max_iter,
        )?;
        let x: Vec<f64> = y.iter().zip(&scale).map(|(v, s)| v * s).collect();
        let mut values = vec![0.0; self.grid.node_count()];
        let mut mask = vec![false; self.grid.node_count()];
        for (&flat, v) in self.nodes.iter().zip(x) {
            values[flat] = v;
            mask[flat] = true;
        }
        Ok((ScalarField::new(self.grid, values)?, mask))
    }
}

impl LinearOperator for MaskedLaplacian {
    fn dim(&self) -> usize {
        self.nodes.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = self.inv_h2;
        y.par_iter_mut().enumerate().for_each(|(u, yu)| {
            let mut nb = 0.0;
            for &o in &self.neighbors[u] {
                if o != NO_NEIGHBOR {
                    nb += x[o as usize];
                }
            }
            *yu = self.diag[u] * x[u] - s * nb;
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

/// `D^{-1/2} A D^{-1/2}` for the diagonal `D` of `A`.
struct JacobiScaled<'a, A: LinearOperator> {
    inner: &'a A,
    scale: &'a [f64],
}

impl<A: LinearOperator> LinearOperator for JacobiScaled<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xs: Vec<f64> = x.iter().zip(self.scale).map(|(v, s)| v * s).collect();
        self.inner.apply(&xs, y);
        y.iter_mut().zip(self.scale).for_each(|(v, s)| *v *= s);
    }

    fn diagonal(&self) -> Vec<f64> {
        vec![1.0; self.inner.dim()]
    }
}
