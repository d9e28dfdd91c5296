//! Dense vector kernels with a fixed reduction order, so results do not depend
//! on the number of worker threads.

use rayon::prelude::*;

const CHUNK: usize = 1 << 14;

fn dot_seq(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= CHUNK {
        return dot_seq(a, b);
    }
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| dot_seq(x, y))
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(CHUNK)
        .zip(x.par_chunks(CHUNK))
        .for_each(|(yc, xc)| {
            for (yi, xi) in yc.iter_mut().zip(xc) {
                *yi += alpha * xi;
            }
        });
}

/// `y = x + beta * y`
pub fn xpby(x: &[f64], beta: f64, y: &mut [f64]) {
    y.par_chunks_mut(CHUNK)
        .zip(x.par_chunks(CHUNK))
        .for_each(|(yc, xc)| {
            for (yi, xi) in yc.iter_mut().zip(xc) {
                *yi = xi + beta * *yi;
            }
        });
}

pub fn scale(alpha: f64, y: &mut [f64]) {
    y.par_chunks_mut(CHUNK).for_each(|yc| {
        for yi in yc {
            *yi *= alpha;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum_order_independent_of_threads() {
        let a: Vec<f64> = (0..100_003).map(|i| ((i * 37) % 101) as f64 * 0.01).collect();
        let b: Vec<f64> = (0..100_003).map(|i| ((i * 11) % 13) as f64 - 6.0).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let d = dot(&a, &b);
        assert!((d - naive).abs() <= 1e-9 * naive.abs().max(1.0));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let d1 = pool.install(|| dot(&a, &b));
        assert_eq!(d.to_bits(), d1.to_bits());
    }
}
