//! Convergence studies and validation runs driven by the CLI.
//!
//! Each runner takes a serde-configurable parameter block with desk-scale
//! defaults and returns a report that renders as CSV with 17 significant
//! digits. Runs over several `R` execute in parallel and are reported in
//! `R` order.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bem::{BoundaryMesh, Polygon};
use crate::error::{Error, Result};
use crate::expm::default_krylov_dim;
use crate::grid::{divergence, embed_source, l2_norm, restrict, Grid, ScalarField, Subdomain, VectorField};
use crate::hybrid::{box_mesh, demag_parts, demag_potential_polygon, regularized_on_box, SolverConfig};
use crate::laplace::{solve_dirichlet, DirichletProblem, DEFAULT_CG_MAX_ITER, DEFAULT_CG_TOL};
use crate::oracle::{truncated_dirichlet_solve, volume_integral_on_grid, IntegralOracle};
use crate::spectral::{dft_magnitude, estimate_gap, Spectrum};

/// Formats a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt17).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Least-squares line with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("a fit needs at least two paired samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Fit of `ln e` against `R`.
pub fn semilog_fit(r: &[f64], e: &[f64]) -> Result<LinearFit> {
    linear_fit(r, &e.iter().map(|v| v.ln()).collect::<Vec<_>>())
}

/// Fit of `ln e` against `ln R`.
pub fn loglog_fit(r: &[f64], e: &[f64]) -> Result<LinearFit> {
    linear_fit(
        &r.iter().map(|v| v.ln()).collect::<Vec<_>>(),
        &e.iter().map(|v| v.ln()).collect::<Vec<_>>(),
    )
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// `‖(a - mean a) - (b - mean b)‖ / ‖b - mean b‖` on `s`.
pub fn relative_l2_mean_removed(a: &ScalarField, b: &ScalarField, s: &Subdomain) -> Result<f64> {
    let a = a.mean_removed(s)?;
    let b = b.mean_removed(s)?;
    Ok(l2_norm(&a.combine(1.0, &b, -1.0)?, s)? / l2_norm(&b, s)?)
}

/// Periodic test solution `cos 2πx₁ + sin 2πx₂`.
pub fn periodic_solution(p: &[f64]) -> f64 {
    (2.0 * PI * p[0]).cos() + (2.0 * PI * p[1]).sin()
}

/// `-Δ` of [`periodic_solution`].
pub fn periodic_source(p: &[f64]) -> f64 {
    4.0 * PI * PI * periodic_solution(p)
}

/// Ratio making `scale · periodic_solution` the exact solution of the
/// infinite-lattice 5-point equation with source [`periodic_source`].
pub fn periodic_lattice_scale(n_per_unit: usize) -> f64 {
    let h = 1.0 / n_per_unit as f64;
    let lam = 4.0 / (h * h) * (PI * h).sin().powi(2);
    4.0 * PI * PI / lam
}

/// Smooth bump `exp(1/(|x| - 1))` supported in the unit ball.
pub fn bump(p: &[f64]) -> f64 {
    let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r < 1.0 {
        (1.0 / (r - 1.0)).exp()
    } else {
        0.0
    }
}

/// `∂₁η + ∂₂η` for the bump `η`; its transform vanishes at `ω = 0`.
pub fn bump_source(p: &[f64]) -> f64 {
    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if r >= 1.0 || r == 0.0 {
        return 0.0;
    }
    let d = (1.0 / (r - 1.0)).exp() * (-1.0 / ((r - 1.0) * (r - 1.0))) / r;
    d * (p[0] + p[1])
}

/// `M = (1/2π)(sin 2πx₁, -cos 2πx₂)`, whose source is `-cos 2πx₁ - sin 2πx₂`.
pub fn trig_magnetization(p: &[f64]) -> [f64; 3] {
    [
        (2.0 * PI * p[0]).sin() / (2.0 * PI),
        -(2.0 * PI * p[1]).cos() / (2.0 * PI),
        0.0,
    ]
}

fn check_r_values(r: &[f64], n: usize, min: f64) -> Result<()> {
    if r.len() < 2 {
        return Err(Error::invalid(
            "at least two R values are needed for the rate fit",
        ));
    }
    for &v in r {
        if !(v > min) {
            return Err(Error::invalid(format!("R = {v} must exceed {min}")));
        }
        Grid::new(2, v, n)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

/// Exponential convergence on the periodic test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicConfig {
    pub r_values: Vec<f64>,
    /// `T = t_factor · R`.
    pub t_factor: f64,
    pub n_per_unit: usize,
    pub k: Option<usize>,
    pub cg_tol: f64,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        Self {
            r_values: (2..=8).map(f64::from).collect(),
            t_factor: 0.18,
            n_per_unit: 25,
            k: None,
            cg_tol: DEFAULT_CG_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicRow {
    pub r: f64,
    pub t: f64,
    /// Against the exact solution of the infinite-lattice equation.
    pub error: f64,
    /// Against the continuum solution.
    pub error_continuum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicReport {
    pub rows: Vec<PeriodicRow>,
    pub fit: LinearFit,
    pub fit_continuum: LinearFit,
}

impl PeriodicReport {
    pub fn csv(&self) -> String {
        csv(
            &["R", "T", "error_L2_K", "error_continuum_L2_K"],
            self.rows
                .iter()
                .map(|r| vec![r.r, r.t, r.error, r.error_continuum]),
        )
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }
}

/// `[-1, 1]^d`: node-aligned at every resolution and holds `K` even when
/// `±1/2` falls between nodes. Norms over `K` clip the dual cells.
fn window() -> Subdomain {
    Subdomain::new(1.0)
}

/// `v_{T,R}` for the periodic source on `K_R`, restricted to `K`.
fn periodic_regularized(r: f64, t: f64, n: usize, k: Option<usize>, tol: f64) -> Result<ScalarField> {
    let outer = Grid::new(2, r, n)?;
    let f = ScalarField::from_fn(outer, periodic_source);
    let v = regularized_on_box(&f, t, k, tol, DEFAULT_CG_MAX_ITER)?;
    restrict(&v, &window())
}

fn periodic_truncated(r: f64, n: usize, tol: f64) -> Result<ScalarField> {
    let outer = Grid::new(2, r, n)?;
    let f = ScalarField::from_fn(outer, periodic_source);
    let w = solve_dirichlet(&DirichletProblem::homogeneous(f), tol, DEFAULT_CG_MAX_ITER)?;
    restrict(&w, &window())
}

/// Mean-removed `L²(K)` distances to the lattice and continuum solutions.
fn periodic_errors(v: &ScalarField, n: usize) -> Result<(f64, f64)> {
    let k = Subdomain::unit_cell();
    let exact = ScalarField::from_fn(*v.grid(), periodic_solution);
    let lattice = exact.scaled(periodic_lattice_scale(n));
    let err = |reference: &ScalarField| -> Result<f64> {
        l2_norm(&v.combine(1.0, reference, -1.0)?.mean_removed(&k)?, &k)
    };
    Ok((err(&lattice)?, err(&exact)?))
}

pub fn run_periodic_convergence(cfg: &PeriodicConfig) -> Result<PeriodicReport> {
    check_r_values(&cfg.r_values, cfg.n_per_unit, 1.0)?;
    let rows = cfg
        .r_values
        .par_iter()
        .map(|&r| {
            let t = cfg.t_factor * r;
            let v = periodic_regularized(r, t, cfg.n_per_unit, cfg.k, cfg.cg_tol)?;
            let (error, error_continuum) = periodic_errors(&v, cfg.n_per_unit)?;
            Ok(PeriodicRow {
                r,
                t,
                error,
                error_continuum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rs: Vec<f64> = rows.iter().map(|r| r.r).collect();
    let fit = semilog_fit(&rs, &rows.iter().map(|r| r.error).collect::<Vec<_>>())?;
    let fit_continuum = semilog_fit(&rs, &rows.iter().map(|r| r.error_continuum).collect::<Vec<_>>())?;
    Ok(PeriodicReport {
        rows,
        fit,
        fit_continuum,
    })
}

// ---------------------------------------------------------------------------

/// Convergence for a source with a low-frequency gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighfreqConfig {
    pub r_values: Vec<f64>,
    pub r_max: f64,
    pub n_per_unit: usize,
    /// Fixed gap; estimated from the spectrum when absent.
    pub omega0: Option<f64>,
    pub threshold: f64,
    pub freq_extent: f64,
    pub freq_resolution: f64,
    pub k: Option<usize>,
    pub cg_tol: f64,
}

impl Default for HighfreqConfig {
    fn default() -> Self {
        Self {
            r_values: (2..=6).map(f64::from).collect(),
            r_max: 8.0,
            n_per_unit: 10,
            omega0: None,
            threshold: 0.1,
            freq_extent: 8.0,
            freq_resolution: 0.125,
            k: None,
            cg_tol: DEFAULT_CG_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub r: f64,
    pub t: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighfreqReport {
    pub omega0: f64,
    pub rows: Vec<ConvergenceRow>,
    pub fit: LinearFit,
    #[serde(skip)]
    pub spectrum: Spectrum,
}

impl HighfreqReport {
    pub fn csv(&self) -> String {
        csv(
            &["R", "T", "error_L2_K"],
            self.rows.iter().map(|r| vec![r.r, r.t, r.error]),
        )
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }
}

/// The bump source sampled on `[-1, 1]²`.
pub fn bump_source_field(n_per_unit: usize) -> Result<ScalarField> {
    Ok(ScalarField::from_fn(Grid::new(2, 1.0, n_per_unit)?, bump_source))
}

pub fn run_highfreq_convergence(cfg: &HighfreqConfig) -> Result<HighfreqReport> {
    check_r_values(&cfg.r_values, cfg.n_per_unit, 1.0)?;
    if cfg.r_values.iter().any(|r| *r >= cfg.r_max) {
        return Err(Error::invalid("every R must be below r_max"));
    }
    let f = bump_source_field(cfg.n_per_unit)?;
    let spectrum = dft_magnitude(&f, cfg.freq_extent, cfg.freq_resolution)?;
    let omega0 = match cfg.omega0 {
        Some(w) => w,
        None => estimate_gap(&spectrum, cfg.threshold)?,
    };
    if !(omega0 > 0.0) {
        return Err(Error::invalid(
            "the estimated spectral gap is zero; T = R/ω₀ is undefined",
        ));
    }
    let k_set = Subdomain::unit_cell();
    let solve = |r: f64| -> Result<ScalarField> {
        let mut sc = SolverConfig::new(2, r, r / omega0, cfg.n_per_unit);
        sc.k = cfg.k;
        sc.cg_tol = cfg.cg_tol;
        let outer = sc.outer_grid()?;
        let v = regularized_on_box(
            &embed_source(&f, &outer)?,
            r / omega0,
            sc.k,
            sc.cg_tol,
            sc.cg_max_iter,
        )?;
        restrict(&v, &window())
    };
    let mut all: Vec<f64> = cfg.r_values.clone();
    all.push(cfg.r_max);
    let fields = all.par_iter().map(|&r| solve(r)).collect::<Result<Vec<_>>>()?;
    let reference = fields.last().expect("r_max appended");
    let rows = cfg
        .r_values
        .iter()
        .zip(&fields)
        .map(|(&r, v)| {
            Ok(ConvergenceRow {
                r,
                t: r / omega0,
                error: l2_norm(&v.combine(1.0, reference, -1.0)?, &k_set)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = semilog_fit(
        &rows.iter().map(|r| r.r).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.error).collect::<Vec<_>>(),
    )?;
    Ok(HighfreqReport {
        omega0,
        rows,
        fit,
        spectrum,
    })
}

// ---------------------------------------------------------------------------

/// Plain truncation against regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    pub dim: usize,
    pub r_values: Vec<f64>,
    pub n_per_unit: usize,
    pub t_factor: f64,
    pub k: Option<usize>,
    pub cg_tol: f64,
}

impl TruncationConfig {
    /// Periodic comparison in the plane.
    pub fn planar() -> Self {
        Self {
            dim: 2,
            r_values: (3..=6).map(f64::from).collect(),
            n_per_unit: 25,
            t_factor: 0.18,
            k: None,
            cg_tol: DEFAULT_CG_TOL,
        }
    }

    /// Unit-cube source in space.
    pub fn spatial() -> Self {
        Self {
            dim: 3,
            r_values: (2..=6).map(f64::from).collect(),
            n_per_unit: 8,
            t_factor: 0.18,
            k: None,
            cg_tol: DEFAULT_CG_TOL,
        }
    }
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self::planar()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub r: f64,
    pub truncated: f64,
    pub regularized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub dim: usize,
    pub rows: Vec<TruncationRow>,
    /// Log-log fit of the truncated error against `R`.
    pub truncated_fit: LinearFit,
}

impl TruncationReport {
    pub fn csv(&self) -> String {
        csv(
            &["R", "truncated_error_L2_K", "regularized_error_L2_K"],
            self.rows.iter().map(|r| vec![r.r, r.truncated, r.regularized]),
        )
    }
}

pub fn run_truncation_decay(cfg: &TruncationConfig) -> Result<TruncationReport> {
    check_r_values(
        &cfg.r_values,
        cfg.n_per_unit,
        if cfg.dim == 2 { 1.0 } else { 0.5 },
    )?;
    let k_set = Subdomain::unit_cell();
    let rows = match cfg.dim {
        2 => cfg
            .r_values
            .par_iter()
            .map(|&r| {
                let v = periodic_regularized(r, cfg.t_factor * r, cfg.n_per_unit, cfg.k, cfg.cg_tol)?;
                let w = periodic_truncated(r, cfg.n_per_unit, cfg.cg_tol)?;
                Ok(TruncationRow {
                    r,
                    truncated: periodic_errors(&w, cfg.n_per_unit)?.0,
                    regularized: periodic_errors(&v, cfg.n_per_unit)?.0,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        3 => {
            let f = ScalarField::from_fn(Grid::new(3, 0.5, cfg.n_per_unit)?, |_| 1.0);
            let oracle = volume_integral_on_grid(&f, f.grid())?;
            cfg.r_values
                .iter()
                .map(|&r| {
                    let w = restrict(
                        &truncated_dirichlet_solve(&f, r, cfg.cg_tol, DEFAULT_CG_MAX_ITER)?,
                        &k_set,
                    )?;
                    let outer = Grid::new(3, r, cfg.n_per_unit)?;
                    let rhs = embed_source(&f, &outer)?;
                    let k = cfg.k.or(Some(default_krylov_dim(outer.interior_count())));
                    let v = restrict(
                        &regularized_on_box(&rhs, cfg.t_factor * r, k, cfg.cg_tol, DEFAULT_CG_MAX_ITER)?,
                        &k_set,
                    )?;
                    Ok(TruncationRow {
                        r,
                        truncated: l2_norm(&w.combine(1.0, &oracle, -1.0)?, &k_set)?,
                        regularized: l2_norm(&v.combine(1.0, &oracle, -1.0)?, &k_set)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        d => return Err(Error::invalid(format!("dim must be 2 or 3, got {d}"))),
    };
    let truncated_fit = loglog_fit(
        &rows.iter().map(|r| r.r).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.truncated).collect::<Vec<_>>(),
    )?;
    Ok(TruncationReport {
        dim: cfg.dim,
        rows,
        truncated_fit,
    })
}

// ---------------------------------------------------------------------------

/// Hybrid solver against the direct integral representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualitativeConfig {
    /// Half-width of Ω.
    pub omega_half_width: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Regularization time; `R/ω₀` with the estimated gap when absent.
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub n_per_unit: usize,
    pub k: Option<usize>,
    pub cg_tol: f64,
    pub threshold: f64,
    pub freq_extent: f64,
    pub freq_resolution: f64,
    /// Extra diagnostic runs at `T = factor · R`.
    pub diagnostic_t_factors: Vec<f64>,
}

impl Default for QualitativeConfig {
    fn default() -> Self {
        Self {
            omega_half_width: 1.0,
            r: 10.0,
            t: None,
            n_per_unit: 25,
            k: None,
            cg_tol: DEFAULT_CG_TOL,
            threshold: 0.1,
            freq_extent: 8.0,
            freq_resolution: 0.125,
            diagnostic_t_factors: vec![0.18],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualitativeRow {
    pub t: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QualitativeReport {
    pub omega0: f64,
    /// Relative mean-removed `L²(Ω)` discrepancy at the main `T`.
    pub discrepancy: f64,
    pub t: f64,
    pub diagnostics: Vec<QualitativeRow>,
    #[serde(skip)]
    pub hybrid: ScalarField,
    #[serde(skip)]
    pub oracle: ScalarField,
}

impl QualitativeReport {
    pub fn csv(&self) -> String {
        let main = std::iter::once(vec![self.t, self.discrepancy]);
        let extra = self.diagnostics.iter().map(|d| vec![d.t, d.discrepancy]);
        csv(&["T", "relative_discrepancy_L2_Omega"], main.chain(extra))
    }
}

pub fn run_qualitative_compare(cfg: &QualitativeConfig) -> Result<QualitativeReport> {
    let omega_grid = Grid::new(2, cfg.omega_half_width, cfg.n_per_unit)?;
    let m = VectorField::from_fn(omega_grid, trig_magnetization);
    let f = divergence(&m)?;
    let spectrum = dft_magnitude(&f, cfg.freq_extent, cfg.freq_resolution)?;
    let omega0 = estimate_gap(&spectrum, cfg.threshold)?;
    let t = match cfg.t {
        Some(t) => t,
        None if omega0 > 0.0 => cfg.r / omega0,
        None => return Err(Error::invalid("spectral gap is zero; give T explicitly")),
    };
    let mesh = box_mesh(&m)?;
    let s = Subdomain::whole(&omega_grid);
    let oracle = IntegralOracle::new(&m, mesh.clone())?.potential_on_grid(&omega_grid)?;
    let solve = |t: f64| -> Result<ScalarField> {
        let mut sc = SolverConfig::new(2, cfg.r, t, cfg.n_per_unit);
        sc.k = cfg.k;
        sc.cg_tol = cfg.cg_tol;
        demag_parts(&m, &mesh, &sc)?.potential()
    };
    let hybrid = solve(t)?;
    let discrepancy = relative_l2_mean_removed(&hybrid, &oracle, &s)?;
    let diagnostics = cfg
        .diagnostic_t_factors
        .iter()
        .map(|fac| {
            let td = fac * cfg.r;
            Ok(QualitativeRow {
                t: td,
                discrepancy: relative_l2_mean_removed(&solve(td)?, &oracle, &s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualitativeReport {
        omega0,
        discrepancy,
        t,
        diagnostics,
        hybrid,
        oracle,
    })
}

// ---------------------------------------------------------------------------

/// Uniformly magnetized disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiskConfig {
    pub radius: f64,
    /// Half-width of the grid box holding the disk.
    pub box_half_width: f64,
    pub n_per_unit: usize,
    /// Number of polygon edges approximating the circle (a multiple of 4).
    pub panels: usize,
    pub m0: f64,
    /// Magnetization direction in degrees from the `x₁` axis.
    pub angle_deg: f64,
    pub cg_tol: f64,
}

impl Default for DiskConfig {
    fn default() -> Self {
        Self {
            radius: 0.9,
            box_half_width: 1.0,
            n_per_unit: 40,
            panels: 256,
            m0: 1.0,
            angle_deg: 0.0,
            cg_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiskReport {
    /// Relative `L²` error of the interior field.
    pub field_error: f64,
    /// Relative mean-removed `L²` error of the interior potential.
    pub potential_error: f64,
    pub nodes: usize,
    #[serde(skip)]
    pub potential: ScalarField,
    #[serde(skip)]
    pub mask: Vec<bool>,
    /// Computed field at the evaluation nodes, keyed by flat index.
    #[serde(skip)]
    pub field: Vec<(usize, [f64; 2])>,
}

impl DiskReport {
    pub fn csv(&self) -> String {
        csv(
            &["field_error_L2", "potential_error_L2", "nodes"],
            std::iter::once(vec![self.field_error, self.potential_error, self.nodes as f64]),
        )
    }
}

pub fn run_uniform_disk(cfg: &DiskConfig) -> Result<DiskReport> {
    if !(cfg.radius > 0.0 && cfg.radius < cfg.box_half_width) {
        return Err(Error::invalid("disk must fit strictly inside the box"));
    }
    if cfg.panels < 8 || !cfg.panels.is_multiple_of(4) {
        return Err(Error::invalid("panel count must be a multiple of 4, at least 8"));
    }
    let grid = Grid::new(2, cfg.box_half_width, cfg.n_per_unit)?;
    let polygon = Polygon::regular(cfg.panels, cfg.radius)?;
    let (sa, ca) = cfg.angle_deg.to_radians().sin_cos();
    let mvec = [cfg.m0 * ca, cfg.m0 * sa];
    let mesh: BoundaryMesh = polygon.mesh(|_| [mvec[0], mvec[1], 0.0])?;
    let mut sc = SolverConfig::new(2, cfg.box_half_width + 1.0, 1.0, cfg.n_per_unit);
    sc.cg_tol = cfg.cg_tol;
    let (u, mask) = demag_potential_polygon(None, &polygon, &mesh, &grid, &sc)?;

    let h = grid.spacing();
    let strides = grid.strides();
    let exact_field = [-0.5 * mvec[0], -0.5 * mvec[1]];
    let mut field = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..grid.node_count() {
        let stencil_inside = mask[i] && (0..2).all(|a| mask[i - strides[a]] && mask[i + strides[a]]);
        if !stencil_inside {
            continue;
        }
        let mut hv = [0.0; 2];
        for a in 0..2 {
            hv[a] = -(u.values()[i + strides[a]] - u.values()[i - strides[a]]) / (2.0 * h);
            num += (hv[a] - exact_field[a]).powi(2);
            den += exact_field[a].powi(2);
        }
        field.push((i, hv));
    }
    if field.is_empty() {
        return Err(Error::invalid("no interior evaluation nodes; refine the grid"));
    }

    // potential up to a constant: (M·x)/2
    let inside: Vec<usize> = (0..grid.node_count()).filter(|&i| mask[i]).collect();
    let exact_u: Vec<f64> = inside
        .iter()
        .map(|&i| {
            let p = grid.point(i);
            0.5 * (mvec[0] * p[0] + mvec[1] * p[1])
        })
        .collect();
    let diff: Vec<f64> = inside
        .iter()
        .zip(&exact_u)
        .map(|(&i, e)| u.values()[i] - e)
        .collect();
    let mean_diff = diff.iter().sum::<f64>() / diff.len() as f64;
    let mean_exact = exact_u.iter().sum::<f64>() / exact_u.len() as f64;
    let pe_num: f64 = diff.iter().map(|d| (d - mean_diff).powi(2)).sum();
    let pe_den: f64 = exact_u.iter().map(|e| (e - mean_exact).powi(2)).sum();

    Ok(DiskReport {
        field_error: (num / den).sqrt(),
        potential_error: (pe_num / pe_den).sqrt(),
        nodes: field.len(),
        potential: u,
        mask,
        field,
    })
}
