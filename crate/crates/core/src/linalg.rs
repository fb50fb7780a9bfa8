//! Dense linear-algebra helpers shared by the dynamics, group and conformal
//! modules: operator norms, matrix exponential and logarithm, symmetric
//! matrix functions and subspace utilities.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Ratio of extreme singular values. Infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Right singular vectors for the `k` smallest singular values of a square
/// matrix, together with the largest of those `k` singular values and the
/// smallest singular value outside the kernel (the spectral gap).
pub fn null_space(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, f64, f64) {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap()
    });
    let mut basis = DMatrix::zeros(n, k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        basis.set_column(j, &vt.row(idx).transpose());
    }
    let kernel_max = order
        .iter()
        .take(k)
        .map(|&i| svd.singular_values[i])
        .fold(0.0, f64::max);
    let gap = order
        .get(k)
        .map(|&i| svd.singular_values[i])
        .unwrap_or(f64::INFINITY);
    (basis, kernel_max, gap)
}

/// Complex kernel dimension of `m` at relative tolerance `tol`.
pub fn complex_nullity(m: &DMatrix<Complex<f64>>, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let scale = sv.iter().cloned().fold(1.0, f64::max);
    sv.iter().filter(|&&s| s <= tol * scale).count()
}

/// Right singular vectors of a complex matrix for its `k` smallest singular values.
pub fn complex_null_space(m: &DMatrix<Complex<f64>>, k: usize) -> DMatrix<Complex<f64>> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap()
    });
    let mut basis = DMatrix::zeros(n, k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        // rows of v_t are conjugated right singular vectors
        let col: DVector<Complex<f64>> = vt.row(idx).transpose().map(|c| c.conj());
        basis.set_column(j, &col);
    }
    basis
}

/// Orthonormal basis of the column span (thin QR).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let q = qr.q();
    q.columns(0, m.ncols()).into_owned()
}

/// Orthogonal projector onto the span of orthonormal columns.
pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

/// Distance between two subspaces given by orthonormal bases: the spectral
/// norm of the difference of the orthogonal projectors (sine of the largest
/// principal angle).
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    op_norm(&(projector(&qa) - projector(&qb)))
}

pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 2 {
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularInverse);
        }
        return Ok(DMatrix::from_row_slice(
            2,
            2,
            &[
                m[(1, 1)] / det,
                -m[(0, 1)] / det,
                -m[(1, 0)] / det,
                m[(0, 0)] / det,
            ],
        ));
    }
    m.clone().try_inverse().ok_or(Error::SingularInverse)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norm = x.norm();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = x / 2f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.norm() < 1e-18 * result.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Principal square root by the Denman–Beavers iteration.
pub fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = inverse(&y)?;
        let zi = inverse(&z)?;
        let y_next = (&y + &zi) * 0.5;
        let z_next = (&z + &yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            return Ok(y);
        }
    }
    Err(Error::LogBranchFailure(
        "square-root iteration did not converge".into(),
    ))
}

/// Checks that no eigenvalue lies within `margin` of the closed negative real axis.
pub fn check_log_domain(a: &DMatrix<f64>, margin: f64) -> Result<()> {
    let eig = a.clone().complex_eigenvalues();
    for z in eig.iter() {
        if z.norm() < margin || (z.re < 0.0 && z.im.abs() < margin) {
            return Err(Error::LogBranchFailure(format!(
                "eigenvalue {:+.3e}{:+.3e}i is on or near the branch cut",
                z.re, z.im
            )));
        }
    }
    Ok(())
}

/// Principal matrix logarithm by inverse scaling and squaring: repeated
/// square roots until the argument is close to the identity, then the
/// `atanh` series `log A = 2 Σ Z^{2j+1}/(2j+1)`, `Z = (A−I)(A+I)^{-1}`.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_log_domain(a, 1e-6)?;
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut m = a.clone();
    let mut roots = 0i32;
    while (&m - &eye).norm() > 0.25 {
        m = sqrtm(&m)?;
        roots += 1;
        if roots > 60 {
            return Err(Error::LogBranchFailure("too many square roots".into()));
        }
    }
    let z = (&m - &eye) * inverse(&(&m + &eye))?;
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = z.clone();
    for j in 1..60 {
        term = &term * &z2;
        let contrib = &term / (2 * j + 1) as f64;
        sum += &contrib;
        if contrib.norm() < 1e-18 * sum.norm().max(1e-300) {
            break;
        }
    }
    Ok(sum * 2.0 * 2f64.powi(roots))
}

fn sym_function(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_function(a, f64::sqrt)
}

pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_function(a, |v| 1.0 / v.sqrt())
}

pub fn sym_log(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_function(a, f64::ln)
}

pub fn sym_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_function(a, f64::exp)
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Affine-invariant distance `‖log(g₁^{-1/2} g₂ g₁^{-1/2})‖_F` on SPD matrices.
pub fn spd_distance(g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> f64 {
    let w = sym_inv_sqrt(g1);
    let inner = &w * g2 * &w;
    sym_log(&inner).norm()
}

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
