//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Left-continuous inverse of the empirical CDF, `min{x : F(x) >= level}`,
/// on an ascending-sorted sample.
pub(crate) fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    // F(x_(k)) = k/n; the 1e-12 guards level*n landing a hair above an integer.
    let k = (level * n as f64 - 1e-12).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}

pub(crate) fn sort_ascending(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Centered covariance with the 1/N divisor.
pub(crate) fn covariance<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut mu = vec![0.0; n];
    let mut count = 0usize;
    for row in rows.clone() {
        for (m, r) in mu.iter_mut().zip(row) {
            *m += r;
        }
        count += 1;
    }
    mu.iter_mut().for_each(|m| *m /= count as f64);
    let mut cov = DMatrix::zeros(n, n);
    for row in rows {
        let d = DVector::from_iterator(n, row.iter().zip(&mu).map(|(r, m)| r - m));
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= count as f64;
    symmetrize(&mut cov);
    (mu, cov)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition based factor `F` with `F Fᵀ = M`, negative eigenvalues
/// clipped to zero. Returns the factor and the smallest eigenvalue seen.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut f = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    (f, min)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. The flag is set
/// when any eigenvalue was treated as zero.
pub(crate) fn psd_pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let cut = max * n as f64 * f64::EPSILON * 16.0;
    let mut singular = false;
    let mut inv = DMatrix::zeros(n, n);
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= cut {
            singular = true;
            continue;
        }
        let v = eig.eigenvectors.column(j);
        inv += (v * v.transpose()) / lambda;
    }
    (inv, singular)
}

/// Spectral norm of a symmetric matrix.
pub(crate) fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
}
