//! Semi-discrete Fourier transform of compactly supported sources, used to
//! measure the radius of the low-frequency gap of `F̂`.
//!
//! Convention: `F̂(ω) = ∫ F(x) e^{-i ω·x} dx` with angular frequencies.

use std::io::Write;

use nalgebra::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dual_cell_fraction, ScalarField};

/// `|F̂|` on a square frequency lattice `[-Ω, Ω]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    dim: usize,
    /// Frequencies along each axis (the same on every axis).
    omegas: Vec<f64>,
    /// Flattened with axis 0 fastest.
    magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis_frequencies(&self) -> &[f64] {
        &self.omegas
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Frequency vector of lattice node `k`.
    pub fn frequency(&self, k: usize) -> [f64; 3] {
        let m = self.omegas.len();
        let mut rest = k;
        let mut w = [0.0; 3];
        for slot in w.iter_mut().take(self.dim) {
            *slot = self.omegas[rest % m];
            rest /= m;
        }
        w
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `omega_1,...,omega_d,magnitude`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (1..=self.dim)
            .map(|a| format!("omega_{a}"))
            .chain(std::iter::once("magnitude".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, mag) in self.magnitudes.iter().enumerate() {
            let f = self.frequency(k);
            let row: Vec<String> = f[..self.dim]
                .iter()
                .chain(std::iter::once(mag))
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Direct trapezoidal evaluation of `|F̂|` on the lattice with spacing
/// `resolution` covering `[-extent, extent]` per axis.
pub fn dft_magnitude(f: &ScalarField, extent: f64, resolution: f64) -> Result<Spectrum> {
    if !(resolution > 0.0) || !(extent >= 0.0) || !extent.is_finite() {
        return Err(Error::invalid(format!(
            "empty frequency lattice (extent {extent}, resolution {resolution})"
        )));
    }
    let steps = (extent / resolution + 1e-9).floor() as usize;
    let omegas: Vec<f64> = (0..=2 * steps)
        .map(|i| (i as f64 - steps as f64) * resolution)
        .collect();
    let g = f.grid();
    let d = g.dim();
    let n = g.nodes_per_axis();
    let coords: Vec<f64> = (0..n).map(|i| g.coordinate(i)).collect();
    let cell = g.spacing().powi(d as i32);

    let mut data: Vec<Complex<f64>> = f
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| Complex::new(v * cell * dual_cell_fraction(g, k), 0.0))
        .collect();
    let mut shape = [1usize; 3];
    shape[..d].iter_mut().for_each(|s| *s = n);
    for axis in 0..d {
        data = transform_axis(&data, &mut shape, axis, &coords, &omegas);
    }
    Ok(Spectrum {
        dim: d,
        omegas,
        magnitudes: data.iter().map(|c| c.norm()).collect(),
    })
}

fn transform_axis(
    data: &[Complex<f64>],
    shape: &mut [usize; 3],
    axis: usize,
    coords: &[f64],
    omegas: &[f64],
) -> Vec<Complex<f64>> {
    let n = shape[axis];
    let m = omegas.len();
    let inner: usize = shape[..axis].iter().product();
    let outer: usize = shape[axis + 1..].iter().product();
    let phase: Vec<Complex<f64>> = omegas
        .iter()
        .flat_map(|w| coords.iter().map(move |x| Complex::from_polar(1.0, -w * x)))
        .collect();
    let mut out = vec![Complex::new(0.0, 0.0); inner * m * outer];
    out.par_chunks_mut(inner * m).enumerate().for_each(|(o, block)| {
        for (q, row) in phase.chunks(n).enumerate() {
            for i in 0..inner {
                let mut acc = Complex::new(0.0, 0.0);
                for (j, p) in row.iter().enumerate() {
                    acc += data[i + inner * (j + n * o)] * p;
                }
                block[i + inner * q] = acc;
            }
        }
    });
    shape[axis] = m;
    out
}

/// Largest lattice radius `ω₀` such that every node with `|ω| ≤ ω₀` has
/// `|F̂| < threshold · max|F̂|`; `0` if the origin already exceeds it.
pub fn estimate_gap(s: &Spectrum, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let radius = |k: usize| {
        let w = s.frequency(k);
        w[..s.dim].iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let mut order: Vec<(f64, f64)> = (0..s.len()).map(|k| (radius(k), s.magnitudes[k])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cut = threshold * s.max_magnitude();
    let mut gap = 0.0;
    let mut i = 0;
    while i < order.len() {
        // treat nodes on the same ring together
        let r = order[i].0;
        let mut j = i;
        let mut quiet = true;
        while j < order.len() && order[j].0 - r <= 1e-12 * r.max(1.0) {
            quiet &= order[j].1 < cut || cut == 0.0;
            j += 1;
        }
        if !quiet {
            return Ok(gap);
        }
        gap = r;
        i = j;
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{l2_norm, Grid, Subdomain};
    use std::f64::consts::PI;

    fn sinc(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            x.sin() / x
        }
    }

    #[test]
    fn rejects_empty_lattice_and_handles_zero() {
        let g = Grid::new(2, 0.5, 4).unwrap();
        assert!(dft_magnitude(&ScalarField::zeros(g), 1.0, 0.0).is_err());
        let s = dft_magnitude(&ScalarField::zeros(g), 1.0, 0.5).unwrap();
        assert!(s.magnitudes().iter().all(|m| *m == 0.0));
        assert!((estimate_gap(&s, 0.1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn box_indicator_is_a_sinc_product() {
        let mut errs = Vec::new();
        for n in [8, 16] {
            let g = Grid::new(2, 0.5, n).unwrap();
            let f = ScalarField::from_fn(g, |_| 1.0);
            let s = dft_magnitude(&f, 6.0, 1.5).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..s.len() {
                let w = s.frequency(k);
                let exact = (sinc(w[0] / 2.0) * sinc(w[1] / 2.0)).abs();
                worst = worst.max((s.magnitudes()[k] - exact).abs());
            }
            errs.push(worst);
        }
        assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
        assert!(errs[1] < 1e-2, "{errs:?}");
    }

    #[test]
    fn hermitian_magnitudes_and_parseval() {
        let g = Grid::new(2, 1.0, 12).unwrap();
        let f = ScalarField::from_fn(g, |p| (-8.0 * (p[0] * p[0] + p[1] * p[1])).exp() * (1.0 + p[0]));
        let s = dft_magnitude(&f, 16.0, 0.25).unwrap();
        let m = s.len();
        for k in 0..m {
            assert!((s.magnitudes()[k] - s.magnitudes()[m - 1 - k]).abs() < 1e-12);
        }
        let energy: f64 = s.magnitudes().iter().map(|v| v * v).sum::<f64>() * 0.25 * 0.25;
        let norm = l2_norm(&f, &Subdomain::whole(&g)).unwrap();
        let expect = (2.0 * PI).powi(2) * norm * norm;
        assert!((energy - expect).abs() < 0.05 * expect, "{energy} vs {expect}");
    }

    #[test]
    fn derivative_structure() {
        // F = ∂₁η for a Gaussian η: |F̂| = |ω₁| |η̂|
        let g = Grid::new(2, 2.0, 20).unwrap();
        let eta = |p: &[f64]| (-6.0 * (p[0] * p[0] + p[1] * p[1])).exp();
        let f = ScalarField::from_fn(g, |p| -12.0 * p[0] * eta(p));
        let e = ScalarField::from_fn(g, eta);
        let sf = dft_magnitude(&f, 6.0, 1.5).unwrap();
        let se = dft_magnitude(&e, 6.0, 1.5).unwrap();
        for k in 0..sf.len() {
            let w = sf.frequency(k);
            assert!((sf.magnitudes()[k] - w[0].abs() * se.magnitudes()[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn gap_of_windowed_cosine() {
        let g = Grid::new(2, 0.5, 24).unwrap();
        let f = ScalarField::from_fn(g, |p| (2.0 * PI * p[0]).cos());
        let s = dft_magnitude(&f, 12.0, 0.5).unwrap();
        let gap = estimate_gap(&s, 0.1).unwrap();
        assert!(gap > 0.0 && gap < 2.0 * PI, "{gap}");
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("omega_1,omega_2,magnitude\n"));
        assert_eq!(text.lines().count(), s.len() + 1);
        assert!(estimate_gap(&s, 0.0).is_err());
    }
}
