//! Node-centered tensor grids on origin-centered boxes, and the scalar and
//! vector fields sampled on them.
//!
//! A [`Grid`] covers `[-R, R]^d` with `n_per_unit` nodes per unit length, so
//! every axis holds `2 R n + 1` nodes including both walls. Fields are stored
//! flattened with axis 0 varying fastest.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

const MAX_DIM: usize = 3;

/// Uniform node-centered grid on `[-R, R]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    n_per_unit: usize,
    half_cells: usize,
}

impl Grid {
    /// Builds a grid whose half-width `R` must be a whole number of cells.
    pub fn new(dim: usize, half_width: f64, n_per_unit: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n_per_unit == 0 {
            return Err(Error::invalid("n_per_unit must be positive"));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        let cells = half_width * n_per_unit as f64;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * cells.max(1.0) || rounded < 1.0 {
            return Err(Error::Misaligned(format!(
                "half-width {half_width} is not a whole number of cells at {n_per_unit} nodes per unit"
            )));
        }
        Ok(Self::from_half_cells(dim, rounded as usize, n_per_unit))
    }

    /// Grid with `half_cells` cells on each side of the origin.
    pub fn from_half_cells(dim: usize, half_cells: usize, n_per_unit: usize) -> Self {
        assert!((2..=MAX_DIM).contains(&dim) && n_per_unit > 0 && half_cells > 0);
        Self {
            dim,
            n_per_unit,
            half_cells,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_unit(&self) -> usize {
        self.n_per_unit
    }

    pub fn half_cells(&self) -> usize {
        self.half_cells
    }

    pub fn half_width(&self) -> f64 {
        self.half_cells as f64 / self.n_per_unit as f64
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_per_unit as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        2 * self.half_cells + 1
    }

    /// Per-axis node counts, padded with 1 past `dim`.
    pub fn shape(&self) -> [usize; MAX_DIM] {
        let m = self.nodes_per_axis();
        let mut s = [1; MAX_DIM];
        s[..self.dim].fill(m);
        s
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    /// Number of nodes strictly inside the box.
    pub fn interior_count(&self) -> usize {
        (self.nodes_per_axis() - 2).pow(self.dim as u32)
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        let m = self.nodes_per_axis();
        [1, m, m * m]
    }

    /// Coordinate of node `i` along any axis; the end nodes land on `±R` exactly.
    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - self.half_cells as f64) / self.n_per_unit as f64
    }

    pub fn index(&self, idx: [usize; MAX_DIM]) -> usize {
        let m = self.nodes_per_axis();
        idx[0] + m * (idx[1] + m * idx[2])
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let m = self.nodes_per_axis();
        let mut idx = [0; MAX_DIM];
        let mut rest = flat;
        for slot in idx.iter_mut().take(self.dim) {
            *slot = rest % m;
            rest /= m;
        }
        idx
    }

    /// Physical position of a node; unused trailing coordinates are zero.
    pub fn point(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = self.coordinate(idx[a]);
        }
        p
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let last = self.nodes_per_axis() - 1;
        let idx = self.multi_index(flat);
        idx[..self.dim].iter().any(|&i| i == 0 || i == last)
    }

    pub(crate) fn require_nodes(&self, required: usize) -> Result<()> {
        let nodes = self.nodes_per_axis();
        if nodes < required {
            return Err(Error::GridTooSmall {
                axis: 0,
                nodes,
                required,
            });
        }
        Ok(())
    }
}

/// Origin-centered box `[-r, r]^d` selecting the grid nodes inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subdomain {
    pub half_width: f64,
}

impl Subdomain {
    pub fn new(half_width: f64) -> Self {
        Self { half_width }
    }

    /// The unit cube `[-1/2, 1/2]^d` on which errors are measured.
    pub fn unit_cell() -> Self {
        Self::new(0.5)
    }

    pub fn whole(grid: &Grid) -> Self {
        Self::new(grid.half_width())
    }

    /// Inclusive per-axis node index range `lo..=hi` covered by the box.
    pub fn index_range(&self, grid: &Grid) -> Result<(usize, usize)> {
        let r = self.half_width;
        let big = grid.half_width();
        if !(r.is_finite() && r > 0.0) || r > big * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "subdomain half-width {r} does not fit inside grid half-width {big}"
            )));
        }
        let inner = ((r * grid.n_per_unit() as f64) + 1e-9).floor() as usize;
        let inner = inner.min(grid.half_cells());
        Ok((grid.half_cells() - inner, grid.half_cells() + inner))
    }

    /// Length of each node's dual cell clipped to `[-r, r]`, per node index.
    fn axis_weights(&self, grid: &Grid) -> Result<Vec<f64>> {
        let (lo, hi) = self.index_range(grid)?;
        let h = grid.spacing();
        let r = self.half_width.min(grid.half_width());
        Ok((lo..=hi)
            .map(|i| {
                let x = grid.coordinate(i);
                let a = (x - 0.5 * h).max(-r);
                let b = (x + 0.5 * h).min(r);
                (b - a).max(0.0)
            })
            .collect())
    }
}

/// Real values at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::invalid(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Samples `f` at every node; `f` receives the first `dim` coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.node_count()).map(|i| f(&grid.point(i)[..d])).collect();
        Self { grid, values }
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_parts(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// Node-wise `a * self + b * other` on a shared grid.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Misaligned("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_parts(self.grid, values))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Weighted integral over `s` with clipped dual-cell weights.
    pub fn integral(&self, s: &Subdomain) -> Result<f64> {
        self.weighted_sum(s, |v| v)
    }

    /// Mean value over the box `s` (the integral divided by its measure).
    pub fn mean(&self, s: &Subdomain) -> Result<f64> {
        let measure = self.weighted_sum(s, |_| 1.0)?;
        Ok(self.integral(s)? / measure)
    }

    /// Copy with the mean over `s` subtracted everywhere.
    pub fn mean_removed(&self, s: &Subdomain) -> Result<Self> {
        let m = self.mean(s)?;
        Ok(Self::from_parts(
            self.grid,
            self.values.iter().map(|v| v - m).collect(),
        ))
    }

    fn weighted_sum(&self, s: &Subdomain, f: impl Fn(f64) -> f64) -> Result<f64> {
        let w = s.axis_weights(&self.grid)?;
        let (lo, _) = s.index_range(&self.grid)?;
        let n = w.len();
        let d = self.grid.dim();
        let mut total = 0.0;
        let outer = if d == 3 { n } else { 1 };
        for k in 0..outer {
            let wk = if d == 3 { w[k] } else { 1.0 };
            for j in 0..n {
                let row = self.grid.index([lo, lo + j, if d == 3 { lo + k } else { 0 }]);
                let mut acc = 0.0;
                for (i, wi) in w.iter().enumerate() {
                    acc += wi * f(self.values[row + i]);
                }
                total += wk * w[j] * acc;
            }
        }
        Ok(total)
    }
}

/// `dim` real components at every node, stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    data: Vec<f64>,
}

impl VectorField {
    /// Builds from one value vector per component.
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::invalid(format!(
                "expected {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        let n = grid.node_count();
        if components.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("component length does not match node count"));
        }
        let data: Vec<f64> = components.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector field"));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.dim() * grid.node_count()],
        }
    }

    /// Samples `f` at every node; only the first `dim` outputs are kept.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> [f64; 3]) -> Self {
        let d = grid.dim();
        let n = grid.node_count();
        let mut data = vec![0.0; d * n];
        for i in 0..n {
            let v = f(&grid.point(i)[..d]);
            for c in 0..d {
                data[c * n + i] = v[c];
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.data[c * n..(c + 1) * n]
    }

    /// Vector value at a node.
    pub fn at(&self, flat: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (c, slot) in v.iter_mut().enumerate().take(self.grid.dim()) {
            *slot = self.component(c)[flat];
        }
        v
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn combine(&self, a: f64, other: &VectorField, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Misaligned("fields live on different grids".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            grid: self.grid,
            data,
        })
    }
}

/// Second-order derivative along `axis`: central inside, one-sided at the walls.
fn partial(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let m = grid.nodes_per_axis();
    let stride = grid.strides()[axis];
    let inv2h = 0.5 * grid.n_per_unit() as f64;
    let mut out = vec![0.0; values.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        let i = grid.multi_index(flat)[axis];
        let at = |k: isize| values[(flat as isize + k * stride as isize) as usize];
        *slot = if i == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h
        } else if i == m - 1 {
            (3.0 * at(0) - 4.0 * at(-1) + at(-2)) * inv2h
        } else {
            (at(1) - at(-1)) * inv2h
        };
    }
    out
}

/// Magnetic charge density `F = -div M`.
pub fn divergence(m: &VectorField) -> Result<ScalarField> {
    let grid = *m.grid();
    grid.require_nodes(3)?;
    let mut f = vec![0.0; grid.node_count()];
    for axis in 0..grid.dim() {
        for (acc, d) in f.iter_mut().zip(partial(&grid, m.component(axis), axis)) {
            *acc -= d;
        }
    }
    Ok(ScalarField::from_parts(grid, f))
}

pub fn gradient(u: &ScalarField) -> Result<VectorField> {
    let grid = *u.grid();
    grid.require_nodes(3)?;
    let data = (0..grid.dim())
        .flat_map(|axis| partial(&grid, u.values(), axis))
        .collect();
    Ok(VectorField { grid, data })
}

/// Copies the nodes inside `s` onto the matching smaller grid.
pub fn restrict(f: &ScalarField, s: &Subdomain) -> Result<ScalarField> {
    let grid = f.grid();
    let (lo, hi) = s.index_range(grid)?;
    let sub = Grid::from_half_cells(grid.dim(), (hi - lo) / 2, grid.n_per_unit());
    let values = (0..sub.node_count())
        .map(|k| {
            let mut idx = sub.multi_index(k);
            for slot in idx.iter_mut().take(grid.dim()) {
                *slot += lo;
            }
            f.values()[grid.index(idx)]
        })
        .collect();
    Ok(ScalarField::from_parts(sub, values))
}

/// Places `f` inside the larger `target` grid, zero elsewhere.
pub fn embed_zero(f: &ScalarField, target: &Grid) -> Result<ScalarField> {
    let src = f.grid();
    if src.dim() != target.dim()
        || src.n_per_unit() != target.n_per_unit()
        || src.half_cells() > target.half_cells()
    {
        return Err(Error::Misaligned(format!(
            "cannot embed a {}-D grid (R={}, n={}) into (R={}, n={})",
            src.dim(),
            src.half_width(),
            src.n_per_unit(),
            target.half_width(),
            target.n_per_unit()
        )));
    }
    let offset = target.half_cells() - src.half_cells();
    let mut values = vec![0.0; target.node_count()];
    for (k, v) in f.values().iter().enumerate() {
        let mut idx = src.multi_index(k);
        for slot in idx.iter_mut().take(src.dim()) {
            *slot += offset;
        }
        values[target.index(idx)] = *v;
    }
    Ok(ScalarField::from_parts(*target, values))
}

/// Fraction of a node's dual cell lying inside its own grid's box: `1/2` per
/// wall the node sits on.
pub fn dual_cell_fraction(grid: &Grid, flat: usize) -> f64 {
    let idx = grid.multi_index(flat);
    let last = grid.nodes_per_axis() - 1;
    (0..grid.dim())
        .map(|a| if idx[a] == 0 || idx[a] == last { 0.5 } else { 1.0 })
        .product()
}

/// Zero-extension of a source supported on `f`'s box into `target`, with the
/// nodes on the box surface weighted by their dual-cell fraction. This is the
/// node value whose dual-cell integral matches the trapezoidal integral of
/// `f` over its box.
pub fn embed_source(f: &ScalarField, target: &Grid) -> Result<ScalarField> {
    let src = f.grid();
    let weighted: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| v * dual_cell_fraction(src, k))
        .collect();
    embed_zero(&ScalarField::from_parts(*src, weighted), target)
}

/// `L2(s)` norm with clipped dual-cell (trapezoidal) weights.
pub fn l2_norm(f: &ScalarField, s: &Subdomain) -> Result<f64> {
    Ok(f.weighted_sum(s, |v| v * v)?.sqrt())
}

/// Vector `L2(s)` norm: square root of the summed component norms squared.
pub fn l2_norm_vector(m: &VectorField, s: &Subdomain) -> Result<f64> {
    let mut total = 0.0;
    for c in 0..m.grid().dim() {
        let comp = ScalarField::from_parts(*m.grid(), m.component(c).to_vec());
        total += comp.weighted_sum(s, |v| v * v)?;
    }
    Ok(total.sqrt())
}

const FIELD_MAGIC: &str = "demagkit-field v1";

/// Writes the text field format: one header line, then one value per line.
pub fn write_field(mut w: impl Write, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    writeln!(
        w,
        "{FIELD_MAGIC} dim={} R={} n_per_unit={}",
        g.dim(),
        g.half_width(),
        g.n_per_unit()
    )?;
    for v in f.values() {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_field(r: impl BufRead) -> Result<ScalarField> {
    let bad = |reason: String| Error::Format {
        what: "field",
        reason,
    };
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty input".into()))??;
    let rest = header
        .strip_prefix(FIELD_MAGIC)
        .ok_or_else(|| bad(format!("unexpected header {header:?}")))?;
    let mut dim = None;
    let mut half = None;
    let mut n = None;
    for tok in rest.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header token {tok:?}")))?;
        let parse_err = |_| bad(format!("bad value in {tok:?}"));
        match key {
            "dim" => dim = Some(val.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
            "R" => half = Some(val.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
            "n_per_unit" => n = Some(val.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
            _ => return Err(bad(format!("unknown header key {key:?}"))),
        }
    }
    let (Some(dim), Some(half), Some(n)) = (dim, half, n) else {
        return Err(bad("header must carry dim, R and n_per_unit".into()));
    };
    let grid = Grid::new(dim, half, n)?;
    let mut values = Vec::with_capacity(grid.node_count());
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|e| bad(format!("bad value {t:?}: {e}")))?,
        );
    }
    ScalarField::new(grid, values)
}
