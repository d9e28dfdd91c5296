//! Brute-force references for the hybrid solver: the direct integral
//! representation of the potential, the plainly truncated Dirichlet solve,
//! and a time-stepped heat integration of the regularized problem.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::bem::{single_layer_potential, BoundaryMesh, QuadratureRule};
use crate::error::{Error, Result};
use crate::grid::{divergence, dual_cell_fraction, embed_source, Grid, ScalarField, VectorField};
use crate::laplace::{pcg, solve_dirichlet, BoxLaplacian, DirichletProblem, LinearOperator, ShiftedOperator};

/// `∫_{[0,a]×[0,b]} ln √(s² + t²) ds dt`.
fn log_corner(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    0.5 * (a * b * (a * a + b * b).ln() - 3.0 * a * b + a * a * (b / a).atan() + b * b * (a / b).atan())
}

/// `∫_{[0,a]×[0,b]×[0,c]} 1/r dV`.
fn inverse_corner(a: f64, b: f64, c: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return 0.0;
    }
    let d = (a * a + b * b + c * c).sqrt();
    b * c * ((a + d) / (b * b + c * c).sqrt()).ln()
        + a * c * ((b + d) / (a * a + c * c).sqrt()).ln()
        + a * b * ((c + d) / (a * a + b * b).sqrt()).ln()
        - 0.5 * a * a * (b * c / (a * d)).atan()
        - 0.5 * b * b * (a * c / (b * d)).atan()
        - 0.5 * c * c * (a * b / (c * d)).atan()
}

/// Exact integral of the Green's function over the box `[lo, hi]` around `x`,
/// by splitting the box into the orthants at `x`. `x` must lie in the box.
fn green_box_integral(dim: usize, x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut total = 0.0;
    for corner in 0..(1usize << dim) {
        let mut ext = [0.0; 3];
        for a in 0..dim {
            ext[a] = if (corner >> a) & 1 == 1 {
                hi[a] - x[a]
            } else {
                x[a] - lo[a]
            };
        }
        total += match dim {
            2 => log_corner(ext[0], ext[1]),
            _ => inverse_corner(ext[0], ext[1], ext[2]),
        };
    }
    match dim {
        2 => -total / (2.0 * PI),
        _ => total / (4.0 * PI),
    }
}

/// `∫_Ω G(x, y) F(y) dy` with node-centred cells clipped to Ω; the cell
/// containing `x` is integrated exactly.
pub fn volume_integral_potential(f: &ScalarField, x: &[f64]) -> f64 {
    let g = f.grid();
    let d = g.dim();
    let h = g.spacing();
    let r = g.half_width();
    let cell = h.powi(d as i32);
    let last = g.nodes_per_axis() - 1;

    // dual cell containing x, if any
    let mut own = None;
    if (0..d).all(|a| x[a].abs() <= r) {
        let mut idx = [0usize; 3];
        for a in 0..d {
            idx[a] = (((x[a] + r) / h).round() as usize).min(last);
        }
        own = Some(g.index(idx));
    }

    let mut acc = 0.0;
    for (j, fj) in f.values().iter().enumerate() {
        if *fj == 0.0 {
            continue;
        }
        let y = g.point(j);
        if Some(j) == own {
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            for a in 0..d {
                lo[a] = (y[a] - 0.5 * h).max(-r);
                hi[a] = (y[a] + 0.5 * h).min(r);
            }
            acc += fj * green_box_integral(d, x, &lo, &hi);
            continue;
        }
        let mut rr = 0.0;
        for a in 0..d {
            rr += (x[a] - y[a]) * (x[a] - y[a]);
        }
        let gk = if d == 2 {
            -0.25 * rr.ln() / PI
        } else {
            1.0 / (4.0 * PI * rr.sqrt())
        };
        acc += fj * gk * cell * dual_cell_fraction(g, j);
    }
    acc
}

/// [`volume_integral_potential`] at every node of `target`, in parallel.
pub fn volume_integral_on_grid(f: &ScalarField, target: &Grid) -> Result<ScalarField> {
    if f.grid().dim() != target.dim() {
        return Err(Error::invalid("source and target dimensions differ"));
    }
    let values: Vec<f64> = (0..target.node_count())
        .into_par_iter()
        .map(|k| volume_integral_potential(f, &target.point(k)))
        .collect();
    ScalarField::new(*target, values)
}

/// Direct integral representation: volume term of `-∇·M` plus the single
/// layer of `M·n` on the boundary mesh.
pub struct IntegralOracle {
    source: ScalarField,
    mesh: BoundaryMesh,
    rule: QuadratureRule,
}

impl IntegralOracle {
    /// `m` lives on Ω's grid; `mesh` should carry densities `M·n`.
    pub fn new(m: &VectorField, mesh: BoundaryMesh) -> Result<Self> {
        if mesh.dim() != m.grid().dim() {
            return Err(Error::invalid("mesh and field dimensions differ"));
        }
        let rule = QuadratureRule::default_for(mesh.dim());
        Ok(Self {
            source: divergence(m)?,
            mesh,
            rule,
        })
    }

    /// For sources that are not a divergence (the uniform disk interior has `F = 0`).
    pub fn from_parts(source: ScalarField, mesh: BoundaryMesh) -> Self {
        let rule = QuadratureRule::default_for(mesh.dim());
        Self { source, mesh, rule }
    }

    pub fn source(&self) -> &ScalarField {
        &self.source
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        volume_integral_potential(&self.source, x) + single_layer_potential(x, &self.mesh, &self.rule)
    }

    pub fn potential_on_grid(&self, target: &Grid) -> Result<ScalarField> {
        let values: Vec<f64> = (0..target.node_count())
            .into_par_iter()
            .map(|k| self.potential(&target.point(k)))
            .collect();
        ScalarField::new(*target, values)
    }
}

/// Convenience wrapper over [`IntegralOracle`].
pub fn integral_representation_potential(m: &VectorField, mesh: &BoundaryMesh, x: &[f64]) -> Result<f64> {
    Ok(IntegralOracle::new(m, mesh.clone())?.potential(x))
}

/// Grid of the box `K_R` matching `f`'s lattice.
pub(crate) fn outer_grid(f: &ScalarField, half_width: f64) -> Result<Grid> {
    let g = f.grid();
    let outer = Grid::new(g.dim(), half_width, g.n_per_unit())?;
    if outer.half_cells() < g.half_cells() {
        return Err(Error::invalid(format!(
            "outer box R={half_width} is smaller than the source box {}",
            g.half_width()
        )));
    }
    Ok(outer)
}

/// `-Δ w = F` on `K_R` with `w = 0` on the walls, no regularization.
pub fn truncated_dirichlet_solve(
    f: &ScalarField,
    half_width: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ScalarField> {
    let outer = outer_grid(f, half_width)?;
    let rhs = embed_source(f, &outer)?;
    solve_dirichlet(&DirichletProblem::homogeneous(rhs), tol, max_iter)
}

/// Time stepping of the heat equation on `K_R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatConfig {
    pub dt: f64,
    pub t_final: f64,
    pub cg_tol: f64,
}

impl HeatConfig {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        let hc = Self {
            dt,
            t_final,
            cg_tol: 1e-12,
        };
        hc.validate()?;
        Ok(hc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.dt <= self.t_final) || !self.t_final.is_finite() {
            return Err(Error::invalid(format!(
                "heat step needs 0 < dt ≤ T, got dt={} T={}",
                self.dt, self.t_final
            )));
        }
        Ok(())
    }

    /// Number of implicit Euler steps; the step is shrunk so they end exactly at `T`.
    pub fn steps(&self) -> usize {
        let n = self.t_final / self.dt;
        let r = n.round();
        if (n - r).abs() < 1e-9 * n.max(1.0) {
            r as usize
        } else {
            n.ceil() as usize
        }
    }
}

/// `∫₀ᵀ v(t) dt` where `∂_t v = Δ_h v` on `K_R` from `v(0) = F`, zero walls.
/// Implicit Euler in time, trapezoidal accumulation of the integral.
pub fn heat_integrate(f: &ScalarField, half_width: f64, hc: &HeatConfig) -> Result<ScalarField> {
    heat_integrate_with(f, half_width, hc, |_, _| {})
}

/// As [`heat_integrate`], calling `observe(step, state)` after each step.
pub fn heat_integrate_with(
    f: &ScalarField,
    half_width: f64,
    hc: &HeatConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<ScalarField> {
    hc.validate()?;
    let outer = outer_grid(f, half_width)?;
    let op = BoxLaplacian::new(outer)?;
    let steps = hc.steps();
    let dt = hc.t_final / steps as f64;
    let step_op = ShiftedOperator {
        inner: &op,
        shift: 1.0,
        scale: dt,
    };
    let mut v = op.gather(&embed_source(f, &outer)?);
    let mut acc: Vec<f64> = v.iter().map(|x| 0.5 * dt * x).collect();
    for s in 1..=steps {
        let (next, _) = pcg(&step_op, &v, hc.cg_tol, 10 * step_op.dim().max(100))?;
        v = next;
        observe(s, &v);
        let w = if s == steps { 0.5 * dt } else { dt };
        acc.iter_mut().zip(&v).for_each(|(a, x)| *a += w * x);
    }
    Ok(op.scatter(&acc, None))
}
