//! The hybrid demagnetization solver `u ≈ v_{T,R} + b`.
//!
//! `v_{T,R}` solves `-Δv = F - e^{TΔ}F` on the enlarged box `K_R` with zero
//! walls, where `F = -∇·M` is extended by zero outside Ω. `b` is harmonic in
//! Ω and equals the single-layer potential of `M·n` on ∂Ω. The two problems
//! are independent and run concurrently.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bem::{
    single_layer_potential, single_layer_potential_many, BoundaryMesh, Polygon, QuadratureRule,
};
use crate::error::{Error, Result};
use crate::expm::{default_krylov_dim, expm_action};
use crate::grid::{divergence, embed_source, gradient, restrict, Grid, ScalarField, Subdomain, VectorField};
use crate::laplace::{
    solve_dirichlet, DirichletProblem, MaskedLaplacian, DEFAULT_CG_MAX_ITER, DEFAULT_CG_TOL,
};

/// How the regularization time is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeRule {
    /// Use the configured `T`.
    #[default]
    Explicit,
    /// `T = (R - 1) / (2 √λ₁)`.
    PeriodicOptimal,
    /// `T = |R - 1| √c_d / ω₀`.
    HighfreqOptimal,
}

fn default_cg_tol() -> f64 {
    DEFAULT_CG_TOL
}

fn default_cg_max_iter() -> usize {
    DEFAULT_CG_MAX_ITER
}

fn default_c_d() -> f64 {
    0.25
}

fn default_lambda1() -> f64 {
    4.0 * PI * PI
}

/// Every tunable of the hybrid solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dim: usize,
    /// Half-width of the outer box `K_R`.
    #[serde(rename = "R")]
    pub r: f64,
    /// Regularization time (required for the explicit rule).
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Krylov dimension; `min(700, unknowns)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub n_per_unit: usize,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max_iter")]
    pub cg_max_iter: usize,
    /// Known spectral gap of `F`, used by the high-frequency rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(rename = "T_rule", default)]
    pub t_rule: TimeRule,
    #[serde(default = "default_c_d")]
    pub c_d: f64,
    /// Smallest positive periodic eigenvalue for the periodic rule.
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
}

impl SolverConfig {
    /// Explicit-`T` configuration with default tolerances.
    pub fn new(dim: usize, r: f64, t: f64, n_per_unit: usize) -> Self {
        Self {
            dim,
            r,
            t: Some(t),
            k: None,
            n_per_unit,
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iter: DEFAULT_CG_MAX_ITER,
            omega0: None,
            t_rule: TimeRule::Explicit,
            c_d: default_c_d(),
            lambda1: default_lambda1(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::invalid(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if !(self.r > 1.0) || !self.r.is_finite() {
            return Err(Error::invalid(format!("R must exceed 1, got {}", self.r)));
        }
        if self.n_per_unit == 0 {
            return Err(Error::invalid("n_per_unit must be positive"));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::invalid("cg_tol must be positive"));
        }
        if self.k == Some(0) {
            return Err(Error::invalid("k must be positive"));
        }
        if !(self.c_d > 0.0) || !(self.lambda1 > 0.0) {
            return Err(Error::invalid("c_d and lambda1 must be positive"));
        }
        self.time().map(|_| ())
    }

    /// The regularization time implied by the rule.
    pub fn time(&self) -> Result<f64> {
        let t = match self.t_rule {
            TimeRule::Explicit => self
                .t
                .ok_or_else(|| Error::invalid("T is required with the explicit rule"))?,
            TimeRule::PeriodicOptimal => (self.r - 1.0) / (2.0 * self.lambda1.sqrt()),
            TimeRule::HighfreqOptimal => {
                let w = self
                    .omega0
                    .filter(|w| *w > 0.0)
                    .ok_or_else(|| Error::invalid("highfreq-optimal rule needs a positive omega0"))?;
                (self.r - 1.0).abs() * self.c_d.sqrt() / w
            }
        };
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("T must be nonnegative, got {t}")));
        }
        Ok(t)
    }

    /// The outer grid on `K_R`.
    pub fn outer_grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.r, self.n_per_unit)
    }
}

/// `v_{T,R}`: solves `-Δv = F - e^{TΔ}F` on `K_R`, `v = 0` on the walls.
/// `F` lives on Ω's grid and is extended by zero.
pub fn solve_regularized(f: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    cfg.validate()?;
    check_source(f.grid(), cfg)?;
    let outer = cfg.outer_grid()?;
    let rhs0 = embed_source(f, &outer)?;
    let t = cfg.time()?;
    regularized_on_box(&rhs0, t, cfg.k, cfg.cg_tol, cfg.cg_max_iter)
}

/// `-Δv = F - e^{TΔ}F` for a source already sampled on the outer box (its
/// wall values are ignored). `k = None` picks `min(700, unknowns)`.
pub fn regularized_on_box(
    f: &ScalarField,
    t: f64,
    k: Option<usize>,
    cg_tol: f64,
    cg_max_iter: usize,
) -> Result<ScalarField> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("T must be nonnegative, got {t}")));
    }
    let outer = *f.grid();
    let k = k.unwrap_or_else(|| default_krylov_dim(outer.interior_count()));
    let rhs = if t == 0.0 {
        ScalarField::zeros(outer)
    } else if f.max_abs() == 0.0 {
        f.clone()
    } else {
        let smoothed = expm_action(t, f, k)?;
        f.combine(1.0, &smoothed, -1.0)?
    };
    solve_dirichlet(&DirichletProblem::homogeneous(rhs), cg_tol, cg_max_iter)
}

fn check_source(g: &Grid, cfg: &SolverConfig) -> Result<()> {
    if g.dim() != cfg.dim || g.n_per_unit() != cfg.n_per_unit {
        return Err(Error::Misaligned(format!(
            "source grid (dim {}, n {}) does not match the configuration (dim {}, n {})",
            g.dim(),
            g.n_per_unit(),
            cfg.dim,
            cfg.n_per_unit
        )));
    }
    if g.half_width() >= cfg.r {
        return Err(Error::invalid(format!(
            "Ω half-width {} must be smaller than R = {}",
            g.half_width(),
            cfg.r
        )));
    }
    Ok(())
}

/// Axis-aligned panels on ∂Ω matching Ω's grid, densities `M·n` from `m`.
pub fn box_mesh(m: &VectorField) -> Result<BoundaryMesh> {
    let g = m.grid();
    Ok(BoundaryMesh::box_surface(g.dim(), g.half_width(), g.n_per_unit())?.with_field(m))
}

/// `b`: harmonic in the box Ω (the grid of `m`), equal to the single layer
/// of the mesh densities on the box surface.
pub fn solve_boundary_term(m: &VectorField, mesh: &BoundaryMesh, cfg: &SolverConfig) -> Result<ScalarField> {
    let g = *m.grid();
    if mesh.dim() != g.dim() {
        return Err(Error::invalid("mesh and field dimensions differ"));
    }
    let rule = QuadratureRule::default_for(g.dim());
    let walls: Vec<usize> = (0..g.node_count()).filter(|&i| g.is_boundary(i)).collect();
    let points: Vec<[f64; 3]> = walls.iter().map(|&i| g.point(i)).collect();
    let values = single_layer_potential_many(&points, mesh, &rule);
    let mut bv = vec![0.0; g.node_count()];
    for (i, v) in walls.into_iter().zip(values) {
        bv[i] = v;
    }
    let problem = DirichletProblem::new(ScalarField::zeros(g), ScalarField::new(g, bv)?)?;
    solve_dirichlet(&problem, cfg.cg_tol, cfg.cg_max_iter)
}

/// The two pieces of the potential on Ω, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct HybridParts {
    /// `v_{T,R}` restricted to Ω.
    pub volume: ScalarField,
    pub boundary: ScalarField,
}

impl HybridParts {
    pub fn potential(&self) -> Result<ScalarField> {
        self.volume.combine(1.0, &self.boundary, 1.0)
    }
}

/// Both terms for magnetization `m` on the box Ω.
pub fn demag_parts(m: &VectorField, mesh: &BoundaryMesh, cfg: &SolverConfig) -> Result<HybridParts> {
    let f = divergence(m)?;
    let omega = Subdomain::new(m.grid().half_width());
    let (v, b) = rayon::join(
        || solve_regularized(&f, cfg).and_then(|v| restrict(&v, &omega)),
        || solve_boundary_term(m, mesh, cfg),
    );
    Ok(HybridParts {
        volume: v?,
        boundary: b?,
    })
}

/// `u ≈ v_{T,R}|_Ω + b` for magnetization `m` sampled on the box Ω.
pub fn demag_potential(m: &VectorField, cfg: &SolverConfig) -> Result<ScalarField> {
    demag_parts(m, &box_mesh(m)?, cfg)?.potential()
}

/// `H = -∇u` on Ω.
pub fn demag_field(m: &VectorField, cfg: &SolverConfig) -> Result<VectorField> {
    Ok(gradient(&demag_potential(m, cfg)?)?.scaled(-1.0))
}

/// Potential for a polygonal Ω inside the box grid `grid`.
///
/// `source` is `F = -∇·M` on `grid` (zero outside Ω), or `None` when `M` is
/// divergence free inside. Returns `u` on `grid` and the mask of nodes where
/// it is defined (strictly inside the polygon).
pub fn demag_potential_polygon(
    source: Option<&ScalarField>,
    polygon: &Polygon,
    mesh: &BoundaryMesh,
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<(ScalarField, Vec<bool>)> {
    let rule = QuadratureRule::default_for(2);
    let lap = MaskedLaplacian::new(*grid, polygon)?;
    let volume = || -> Result<ScalarField> {
        match source {
            Some(f) => restrict(&solve_regularized(f, cfg)?, &Subdomain::new(grid.half_width())),
            None => Ok(ScalarField::zeros(*grid)),
        }
    };
    let (v, bm) = rayon::join(volume, || {
        lap.solve(
            None,
            |p| single_layer_potential(p, mesh, &rule),
            cfg.cg_tol,
            cfg.cg_max_iter,
        )
    });
    let (b, mask) = bm?;
    let v = v?;
    let values = v
        .values()
        .iter()
        .zip(b.values())
        .zip(&mask)
        .map(|((a, c), inside)| if *inside { a + c } else { 0.0 })
        .collect();
    Ok((ScalarField::new(*grid, values)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l2_norm;

    #[test]
    fn config_rules_and_serde_names() {
        let mut cfg = SolverConfig::new(2, 3.0, 0.5, 4);
        assert_eq!(cfg.time().unwrap(), 0.5);
        cfg.t_rule = TimeRule::PeriodicOptimal;
        assert!((cfg.time().unwrap() - 2.0 / (4.0 * PI)).abs() < 1e-15);
        cfg.t_rule = TimeRule::HighfreqOptimal;
        assert!(cfg.time().is_err());
        cfg.omega0 = Some(0.25);
        assert!((cfg.time().unwrap() - 2.0 * 0.5 / 0.25).abs() < 1e-15);
        let json = serde_json::to_string(&cfg).unwrap();
        for key in [
            "\"dim\"",
            "\"R\"",
            "\"T\"",
            "\"n_per_unit\"",
            "\"cg_tol\"",
            "\"omega0\"",
            "\"T_rule\":\"highfreq-optimal\"",
        ] {
            assert!(json.contains(key), "{json}");
        }
        let back: SolverConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<SolverConfig>(r#"{"dim":2,"R":3,"n_per_unit":4,"bogus":1}"#).is_err());
        assert!(SolverConfig::new(2, 0.9, 0.5, 4).validate().is_err());
    }

    #[test]
    fn zero_inputs_give_zero() {
        let g = Grid::new(2, 0.5, 6).unwrap();
        let cfg = SolverConfig::new(2, 2.0, 0.3, 6);
        let v = solve_regularized(&ScalarField::zeros(g), &cfg).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        let u = demag_potential(&VectorField::zeros(g), &cfg).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        let f = ScalarField::from_fn(g, |p| 1.0 + p[0]);
        let mut zero_t = cfg.clone();
        zero_t.t = Some(0.0);
        assert_eq!(solve_regularized(&f, &zero_t).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn linear_in_magnetization_and_order_independent() {
        let g = Grid::new(2, 0.5, 8).unwrap();
        let cfg = SolverConfig::new(2, 2.0, 0.36, 8);
        let m1 = VectorField::from_fn(g, |p| [p[1], 1.0 - p[0] * p[0], 0.0]);
        let m2 = VectorField::from_fn(g, |p| [(3.0 * p[0]).sin(), p[0] * p[1], 0.0]);
        let u1 = demag_potential(&m1, &cfg).unwrap();
        let u2 = demag_potential(&m2, &cfg).unwrap();
        let u12 = demag_potential(&m1.combine(2.0, &m2, -0.5).unwrap(), &cfg).unwrap();
        let lin = u1.combine(2.0, &u2, -0.5).unwrap();
        let s = Subdomain::whole(&g);
        let diff = l2_norm(&u12.combine(1.0, &lin, -1.0).unwrap(), &s).unwrap();
        assert!(diff < 1e-8 * l2_norm(&u12, &s).unwrap());

        // sequential evaluation reproduces the concurrent one bitwise
        let mesh = box_mesh(&m1).unwrap();
        let f = divergence(&m1).unwrap();
        let v = restrict(&solve_regularized(&f, &cfg).unwrap(), &Subdomain::new(0.5)).unwrap();
        let b = solve_boundary_term(&m1, &mesh, &cfg).unwrap();
        assert_eq!(v.combine(1.0, &b, 1.0).unwrap(), u1);
    }

    #[test]
    fn boundary_term_vanishes_without_normal_component() {
        let g = Grid::new(2, 0.5, 6).unwrap();
        let cfg = SolverConfig::new(2, 2.0, 0.3, 6);
        // tangential on every face of the square: M·n = 0
        let m = VectorField::from_fn(g, |p| [0.25 - p[0] * p[0], 0.25 - p[1] * p[1], 0.0]);
        let mesh = box_mesh(&m).unwrap();
        assert!(mesh.panels().iter().all(|p| p.density.abs() < 1e-12));
        let b = solve_boundary_term(&m, &mesh, &cfg).unwrap();
        assert!(b.max_abs() < 1e-12);
    }

    #[test]
    fn field_ignores_constant_shift() {
        let g = Grid::new(2, 0.5, 6).unwrap();
        let u = ScalarField::from_fn(g, |p| p[0] * p[1] + p[0]);
        let a = gradient(&u).unwrap();
        let b = gradient(&ScalarField::from_fn(g, |p| p[0] * p[1] + p[0] + 3.0)).unwrap();
        for c in 0..2 {
            for (x, y) in a.component(c).iter().zip(b.component(c)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
