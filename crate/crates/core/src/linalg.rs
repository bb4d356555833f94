//! Symmetric positive semidefinite square roots.

use nalgebra::{DMatrix, SymmetricEigen};

/// Result of [`psd_sqrt`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsdRoot {
    /// Row-major `n × n` square root.
    pub root: Vec<f64>,
    /// Largest magnitude of a negative eigenvalue that was clipped to 0.
    pub clipped: f64,
}

/// Replaces `a` (row-major `n × n`) by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition,
/// clipping negative eigenvalues at zero. For `n = 1` this is `√max(a, 0)`.
pub fn psd_sqrt(a: &[f64], n: usize) -> PsdRoot {
    assert_eq!(a.len(), n * n, "matrix must be n × n");
    if n == 1 {
        return PsdRoot {
            root: vec![a[0].max(0.0).sqrt()],
            clipped: (-a[0]).max(0.0),
        };
    }
    let mut sym = a.to_vec();
    symmetrize(&mut sym, n);
    let m = DMatrix::from_row_slice(n, n, &sym);
    let eig = SymmetricEigen::new(m);
    let mut clipped = 0.0f64;
    let roots: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < 0.0 {
                clipped = clipped.max(-l);
            }
            l.max(0.0).sqrt()
        })
        .collect();
    let q = &eig.eigenvectors;
    let mut root = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            root[i * n + j] = (0..n).map(|k| q[(i, k)] * roots[k] * q[(j, k)]).sum();
        }
    }
    PsdRoot { root, clipped }
}

/// `σ σᵀ` for a row-major `n × d` matrix.
pub fn outer_self(sigma: &[f64], n: usize, d: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..d).map(|k| sigma[i * d + k] * sigma[j * d + k]).sum();
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    if n == 1 {
        return a[0];
    }
    let mut sym = a.to_vec();
    symmetrize(&mut sym, n);
    SymmetricEigen::new(DMatrix::from_row_slice(n, n, &sym))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_roots() {
        assert_eq!(psd_sqrt(&[4.0], 1).root, vec![2.0]);
        assert_eq!(psd_sqrt(&[1.0], 1).root, vec![1.0]);
        let r = psd_sqrt(&[-1e-12], 1);
        assert_eq!(r.root, vec![0.0]);
        assert_eq!(r.clipped, 1e-12);
    }

    #[test]
    fn diagonal_root() {
        let r = psd_sqrt(&[4.0, 0.0, 0.0, 9.0], 2);
        let want = [2.0, 0.0, 0.0, 3.0];
        for (a, b) in r.root.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(r.clipped, 0.0);
    }

    #[test]
    fn root_squares_back() {
        let sigma = [1.0, 0.5, -0.3, 0.2, 2.0, 0.1, 0.0, -1.0, 0.7];
        let mut a = vec![0.0; 9];
        outer_self(&sigma, 3, 3, &mut a);
        let r = psd_sqrt(&a, 3);
        let mut back = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                back[i * 3 + j] = (0..3).map(|k| r.root[i * 3 + k] * r.root[k * 3 + j]).sum();
            }
        }
        for (u, v) in back.iter().zip(&a) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(min_eigenvalue(&a, 3) > 0.0);
    }
}
