//! Krylov approximation of the heat semigroup action `e^{TΔ_h} f`.
//!
//! The generator is the symmetric positive definite interior operator
//! `A = T (-Δ_h)`, so the semigroup is `e^{-A}` and decays. A Krylov basis `Q`
//! and Hessenberg matrix `H` give `e^{-A} f ≈ β Q e^{-H} e_1`.
//!
//! Two drivers are provided. [`arnoldi`] keeps the whole basis and
//! reorthogonalizes once per step; it backs small problems and all the
//! validation checks. Large grids use a two-pass Lanczos recurrence that
//! stores only the tridiagonal coefficients and regenerates the basis on the
//! second pass.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::laplace::{BoxLaplacian, LinearOperator, ShiftedOperator};
use crate::vecops;

/// Krylov dimension used by the experiments unless overridden.
pub const DEFAULT_KRYLOV_DIM: usize = 700;
/// Largest matrix accepted by [`expm_small`].
pub const DENSE_CAP: usize = 2000;
/// Basis storage budget (in doubles) below which [`KrylovMethod::Auto`] keeps the basis.
pub const STORED_BASIS_BUDGET: usize = 1 << 21;

const BREAKDOWN_TOL: f64 = 1e-14;

/// Krylov dimension `min(DEFAULT_KRYLOV_DIM, unknowns)`.
pub fn default_krylov_dim(unknowns: usize) -> usize {
    DEFAULT_KRYLOV_DIM.min(unknowns).max(1)
}

// Padé coefficients and norm thresholds for scaling and squaring.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant (lower degrees when the norm is small).
pub fn expm_small(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("matrix exponential needs a square matrix"));
    }
    if n > DENSE_CAP {
        return Err(Error::invalid(format!(
            "dense exponential capped at {DENSE_CAP}, got {n}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dense matrix"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let nrm = norm1(a);
    for (m, theta) in THETA {
        if nrm <= theta {
            let b: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, b, &eye);
        }
    }
    let s = ((nrm / THETA13).log2().ceil()).max(0.0) as i32;
    let scaled = a * 2f64.powi(-s);
    let mut r = pade13(&scaled, &eye)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::invalid("singular Padé denominator"))
}

fn pade_low(a: &DMatrix<f64>, b: &[f64], eye: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a2 = a * a;
    let mut power = eye.clone();
    let mut odd = eye * b[1];
    let mut even = eye * b[0];
    let mut j = 2;
    while j < b.len() {
        power = &power * &a2;
        even += &power * b[j];
        if j + 1 < b.len() {
            odd += &power * b[j + 1];
        }
        j += 2;
    }
    solve_pade(a * odd, even)
}

fn pade13(a: &DMatrix<f64>, eye: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + eye * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + eye * b[0];
    solve_pade(u, v)
}

/// Orthonormal Krylov basis and projected upper-Hessenberg matrix.
#[derive(Debug, Clone)]
pub struct ArnoldiDecomposition {
    /// Basis vectors `q_1..q_k`.
    pub basis: Vec<Vec<f64>>,
    /// `k × k` projection `Qᵀ A Q`.
    pub hessenberg: DMatrix<f64>,
    /// Norm of the starting vector.
    pub beta: f64,
    /// Unnormalized next direction `h_{k+1,k} q_{k+1}`.
    pub remainder: Vec<f64>,
    /// The requested dimension exceeded the operator dimension.
    pub truncated: bool,
    /// The recurrence stopped early on an invariant subspace.
    pub breakdown: bool,
}

impl ArnoldiDecomposition {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Largest `|⟨q_i, q_j⟩ - δ_ij|`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, qi) in self.basis.iter().enumerate() {
            for (j, qj) in self.basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((vecops::dot(qi, qj) - target).abs());
            }
        }
        worst
    }

    /// `‖A Q - Q H - r e_kᵀ‖_F / ‖H‖_F`.
    pub fn relation_residual<A: LinearOperator + ?Sized>(&self, op: &A) -> f64 {
        let k = self.dim();
        let n = op.dim();
        let mut total = 0.0;
        let mut aq = vec![0.0; n];
        for j in 0..k {
            op.apply(&self.basis[j], &mut aq);
            for i in 0..k {
                vecops::axpy(-self.hessenberg[(i, j)], &self.basis[i], &mut aq);
            }
            if j + 1 == k {
                vecops::axpy(-1.0, &self.remainder, &mut aq);
            }
            total += vecops::dot(&aq, &aq);
        }
        total.sqrt() / self.hessenberg.norm().max(f64::MIN_POSITIVE)
    }

    /// `β Q e^{-H} e_1`.
    pub fn exp_neg_action(&self) -> Result<Vec<f64>> {
        let e = expm_small(&(-&self.hessenberg))?;
        let n = self.basis.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for (j, q) in self.basis.iter().enumerate() {
            vecops::axpy(self.beta * e[(j, 0)], q, &mut out);
        }
        Ok(out)
    }
}

/// Modified Gram–Schmidt Arnoldi with one reorthogonalization pass.
pub fn arnoldi<A: LinearOperator + ?Sized>(op: &A, f: &[f64], k: usize) -> Result<ArnoldiDecomposition> {
    if k == 0 {
        return Err(Error::invalid("Krylov dimension must be at least 1"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Krylov start vector"));
    }
    let beta = vecops::norm(f);
    if beta == 0.0 {
        return Err(Error::invalid("Krylov start vector is identically zero"));
    }
    let n = op.dim();
    let truncated = k > n;
    let k = k.min(n);
    let mut basis: Vec<Vec<f64>> = vec![f.iter().map(|v| v / beta).collect()];
    let mut h = DMatrix::<f64>::zeros(k, k);
    let mut norm_est: f64 = 0.0;
    let mut w = vec![0.0; n];
    let mut breakdown = false;
    for j in 0..k {
        op.apply(&basis[j], &mut w);
        norm_est = norm_est.max(vecops::norm(&w));
        for _pass in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = vecops::dot(q, &w);
                h[(i, j)] += c;
                vecops::axpy(-c, q, &mut w);
            }
        }
        let hn = vecops::norm(&w);
        if hn <= BREAKDOWN_TOL * norm_est {
            let m = j + 1;
            breakdown = m < k || hn == 0.0;
            return Ok(ArnoldiDecomposition {
                basis,
                hessenberg: h.view((0, 0), (m, m)).into_owned(),
                beta,
                remainder: vec![0.0; n],
                truncated,
                breakdown,
            });
        }
        if j + 1 == k {
            break;
        }
        h[(j + 1, j)] = hn;
        basis.push(w.iter().map(|v| v / hn).collect());
    }
    Ok(ArnoldiDecomposition {
        basis,
        hessenberg: h,
        beta,
        remainder: w,
        truncated,
        breakdown,
    })
}

/// Which Krylov driver computes the action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KrylovMethod {
    /// Stored, reorthogonalized Arnoldi basis.
    Arnoldi,
    /// Two-pass Lanczos without basis storage.
    Lanczos,
    /// Arnoldi while `unknowns × k` fits in [`STORED_BASIS_BUDGET`], Lanczos beyond.
    #[default]
    Auto,
}

/// Outcome of a Krylov exponential.
#[derive(Debug, Clone)]
pub struct KrylovAction {
    pub vector: Vec<f64>,
    /// Dimension actually reached (smaller than requested on breakdown).
    pub krylov_dim: usize,
    pub method: KrylovMethod,
}

/// `e^{-t A} f` for a symmetric positive (semi)definite `A`.
pub fn exp_neg_action<A: LinearOperator + ?Sized>(
    op: &A,
    t: f64,
    f: &[f64],
    k: usize,
    method: KrylovMethod,
) -> Result<KrylovAction> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!(
            "semigroup time must be nonnegative, got {t}"
        )));
    }
    if t == 0.0 || f.iter().all(|v| *v == 0.0) {
        return Ok(KrylovAction {
            vector: f.to_vec(),
            krylov_dim: 0,
            method,
        });
    }
    let scaled = ScaledRef { inner: op, scale: t };
    let method = match method {
        KrylovMethod::Auto if op.dim().saturating_mul(k) <= STORED_BASIS_BUDGET => KrylovMethod::Arnoldi,
        KrylovMethod::Auto => KrylovMethod::Lanczos,
        m => m,
    };
    match method {
        KrylovMethod::Arnoldi => {
            let dec = arnoldi(&scaled, f, k)?;
            Ok(KrylovAction {
                vector: dec.exp_neg_action()?,
                krylov_dim: dec.dim(),
                method,
            })
        }
        _ => two_pass_lanczos(&scaled, f, k),
    }
}

struct ScaledRef<'a, A: ?Sized> {
    inner: &'a A,
    scale: f64,
}

impl<A: LinearOperator + ?Sized> LinearOperator for ScaledRef<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply(x, y);
        vecops::scale(self.scale, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        self.inner
            .diagonal()
            .into_iter()
            .map(|d| d * self.scale)
            .collect()
    }
}

fn two_pass_lanczos<A: LinearOperator + ?Sized>(op: &A, f: &[f64], k: usize) -> Result<KrylovAction> {
    if k == 0 {
        return Err(Error::invalid("Krylov dimension must be at least 1"));
    }
    let n = op.dim();
    let k = k.min(n);
    let beta = vecops::norm(f);
    let inv_beta = 1.0 / beta;

    // first pass: tridiagonal coefficients only
    let mut alpha = Vec::with_capacity(k);
    let mut off = Vec::with_capacity(k);
    let mut q: Vec<f64> = f.iter().map(|v| v * inv_beta).collect();
    let mut q_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut norm_est: f64 = 0.0;
    for j in 0..k {
        lanczos_step(op, &q, &q_prev, off.last().copied(), &mut w);
        norm_est = norm_est.max(vecops::norm(&w));
        let a = vecops::dot(&q, &w);
        vecops::axpy(-a, &q, &mut w);
        alpha.push(a);
        let b = vecops::norm(&w);
        if j + 1 == k || b <= BREAKDOWN_TOL * norm_est {
            break;
        }
        off.push(b);
        std::mem::swap(&mut q_prev, &mut q);
        q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / b);
    }
    let m = alpha.len();
    let mut h = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        h[(j, j)] = -alpha[j];
        if j + 1 < m {
            h[(j + 1, j)] = -off[j];
            h[(j, j + 1)] = -off[j];
        }
    }
    let e = expm_small(&h)?;

    // second pass: regenerate the same vectors and accumulate
    let mut out = vec![0.0; n];
    q = f.iter().map(|v| v * inv_beta).collect();
    q_prev.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..m {
        vecops::axpy(beta * e[(j, 0)], &q, &mut out);
        if j + 1 == m {
            break;
        }
        lanczos_step(op, &q, &q_prev, (j > 0).then(|| off[j - 1]), &mut w);
        vecops::axpy(-alpha[j], &q, &mut w);
        let b = off[j];
        std::mem::swap(&mut q_prev, &mut q);
        q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / b);
    }
    Ok(KrylovAction {
        vector: out,
        krylov_dim: m,
        method: KrylovMethod::Lanczos,
    })
}

/// `w = A q - b_prev q_prev`.
fn lanczos_step<A: LinearOperator + ?Sized>(
    op: &A,
    q: &[f64],
    q_prev: &[f64],
    b_prev: Option<f64>,
    w: &mut [f64],
) {
    op.apply(q, w);
    if let Some(b) = b_prev {
        vecops::axpy(-b, q_prev, w);
    }
}

/// `e^{TΔ_h} f` on the box of `f`'s grid with zero walls; `f`'s wall values
/// are ignored and the result has zero walls. `T = 0` returns `f` unchanged.
pub fn expm_action(t: f64, f: &ScalarField, k: usize) -> Result<ScalarField> {
    expm_action_with(t, f, k, KrylovMethod::Auto)
}

pub fn expm_action_with(t: f64, f: &ScalarField, k: usize, method: KrylovMethod) -> Result<ScalarField> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!(
            "semigroup time must be nonnegative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let op = BoxLaplacian::new(*f.grid())?;
    let x = op.gather(f);
    let y = exp_neg_action(&op, t, &x, k, method)?;
    Ok(op.scatter(&y.vector, None))
}

/// Dense matrix of an operator, column by column.
pub fn assemble_dense<A: LinearOperator + ?Sized>(op: &A) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    m
}

/// The implicit-Euler-style operator `I + dt (-Δ_h)`, re-exported for oracles.
pub type HeatStepOperator<'a> = ShiftedOperator<'a, BoxLaplacian>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{RngExt, SeedableRng};
    use std::f64::consts::PI;

    fn eig_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
        // oracle for symmetric input
        let eig = a.clone().symmetric_eigen();
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
        &eig.eigenvectors * d * eig.eigenvectors.transpose()
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn expm_small_trivial_cases() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(expm_small(&z).unwrap(), DMatrix::identity(4, 4));
        for (a, b) in [(0.3, -2.0), (5.0, -40.0), (-700.0, 12.0)] {
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b]));
            let e = expm_small(&d).unwrap();
            for (got, x) in [(e[(0, 0)], a), (e[(1, 1)], b)] {
                let want: f64 = x.exp();
                assert!((got - want).abs() <= 1e-12 * want, "{x}: {got} vs {want}");
            }
            assert_eq!(e[(0, 1)], 0.0);
        }
        let bad = DMatrix::from_element(2, 2, f64::NAN);
        assert!(expm_small(&bad).is_err());
    }

    #[test]
    fn expm_small_matches_eigen_oracle() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for scale in [0.01, 0.5, 3.0, 40.0] {
            let m = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
            let s = (&m + m.transpose()) * (0.5 * scale);
            let e = expm_small(&s).unwrap();
            assert!(rel(&e, &eig_exp(&s)) < 1e-10, "scale {scale}");
        }
        // non-symmetric: compare with a complex eigendecomposition via squaring consistency
        let m = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let e = expm_small(&m).unwrap();
        let half = expm_small(&(&m * 0.5)).unwrap();
        assert!(rel(&(&half * &half), &e) < 1e-12);
        let inv = expm_small(&(-&m)).unwrap();
        assert!(rel(&(&e * &inv), &DMatrix::identity(8, 8)) < 1e-12);
    }

    fn tiny_op() -> BoxLaplacian {
        BoxLaplacian::new(Grid::new(2, 1.0, 3).unwrap()).unwrap()
    }

    #[test]
    fn full_arnoldi_reproduces_dense_operator() {
        let op = tiny_op();
        assert_eq!(op.dim(), 25);
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let f: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dec = arnoldi(&op, &f, 25).unwrap();
        // repeated eigenvalues cap the Krylov space below 25
        assert!(dec.dim() <= 25);
        assert!(dec.orthogonality_error() < 1e-10);
        assert!(dec.relation_residual(&op) < 1e-10);
        let q = DMatrix::from_fn(25, dec.dim(), |i, j| dec.basis[j][i]);
        let dense = assemble_dense(&op);
        let projected = q.transpose() * &dense * &q;
        assert!(rel(&projected, &dec.hessenberg) < 1e-10);
        let m = dec.dim();
        // upper Hessenberg
        for j in 0..m {
            for i in j + 2..m {
                assert_eq!(dec.hessenberg[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn eigenvector_start_breaks_down_immediately() {
        let g = Grid::new(2, 1.0, 4).unwrap();
        let op = BoxLaplacian::new(g).unwrap();
        let h = g.spacing();
        let r = 1.0;
        let f = op.gather(&ScalarField::from_fn(g, |p| {
            (PI * (p[0] + r) / (2.0 * r)).sin() * (PI * (p[1] + r) / (2.0 * r)).sin()
        }));
        let lam = 2.0 * (4.0 / (h * h)) * (PI * h / (4.0 * r)).sin().powi(2);
        let dec = arnoldi(&op, &f, 10).unwrap();
        assert_eq!(dec.dim(), 1);
        assert!(dec.breakdown);
        assert!((dec.hessenberg[(0, 0)] - lam).abs() < 1e-10 * lam);
    }

    #[test]
    fn arnoldi_relation_and_errors() {
        let g = Grid::new(2, 2.0, 6).unwrap();
        let op = BoxLaplacian::new(g).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let f: Vec<f64> = (0..op.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dec = arnoldi(&op, &f, 10).unwrap();
        assert_eq!(dec.dim(), 10);
        assert!(dec.relation_residual(&op) < 1e-8);
        assert!(dec.orthogonality_error() < 1e-10);
        assert!(arnoldi(&op, &vec![0.0; op.dim()], 3).is_err());
        let small = tiny_op();
        let dec = arnoldi(&small, &[1.0; 25], 100).unwrap();
        assert!(dec.truncated);
        assert!(dec.dim() <= 25);
    }

    #[test]
    fn action_matches_dense_exponential() {
        let g = Grid::new(2, 1.0, 5).unwrap();
        let op = BoxLaplacian::new(g).unwrap();
        let dense = assemble_dense(&op);
        let f: Vec<f64> = (0..op.dim()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        for t in [0.001, 0.1, 1.0] {
            let oracle = expm_small(&(&dense * -t)).unwrap() * nalgebra::DVector::from_vec(f.clone());
            for method in [KrylovMethod::Arnoldi, KrylovMethod::Lanczos] {
                let got = exp_neg_action(&op, t, &f, op.dim(), method).unwrap();
                let err = got
                    .vector
                    .iter()
                    .zip(oracle.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    err <= 1e-8 * oracle.norm().max(1e-300),
                    "t={t} {method:?} err={err}"
                );
            }
        }
    }

    #[test]
    fn zero_time_is_identity_and_negative_time_rejected() {
        let g = Grid::new(2, 1.0, 4).unwrap();
        let f = ScalarField::from_fn(g, |p| p[0] + 2.0);
        assert_eq!(expm_action(0.0, &f, 5).unwrap(), f);
        assert!(expm_action(-1.0, &f, 5).is_err());
    }

    #[test]
    fn lowest_mode_decays_exactly() {
        let r = 1.5;
        let g = Grid::new(2, r, 6).unwrap();
        let h = g.spacing();
        let f = ScalarField::from_fn(g, |p| {
            (PI * (p[0] + r) / (2.0 * r)).sin() * (PI * (p[1] + r) / (2.0 * r)).sin()
        });
        let lam = 2.0 * (4.0 / (h * h)) * (PI * h / (4.0 * r)).sin().powi(2);
        for t in [0.05, 0.5, 2.0] {
            let out = expm_action(t, &f, 30).unwrap();
            let expect = (-lam * t).exp();
            for (a, b) in out.values().iter().zip(f.values()) {
                assert!((a - expect * b).abs() <= 1e-8 * expect.max(1e-300));
            }
        }
    }

    #[test]
    fn lanczos_agrees_with_arnoldi_on_moderate_grid() {
        let g = Grid::new(2, 2.0, 10).unwrap();
        let f = ScalarField::from_fn(g, |p| {
            (-4.0 * (p[0] * p[0] + p[1] * p[1])).exp() * (3.0 * p[0]).cos()
        });
        let a = expm_action_with(0.3, &f, 120, KrylovMethod::Arnoldi).unwrap();
        let b = expm_action_with(0.3, &f, 120, KrylovMethod::Lanczos).unwrap();
        let diff = a.combine(1.0, &b, -1.0).unwrap().max_abs();
        assert!(diff < 1e-10 * a.max_abs(), "diff {diff}");
    }
}
