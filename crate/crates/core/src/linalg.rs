use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Orthonormal basis of the complement of `u` (assumed unit length), built
/// from the Householder reflector that sends `u` to `-e_1`.
///
/// Returns an `n × (n-1)` matrix whose columns are orthonormal and orthogonal
/// to `u`.
pub(crate) fn householder_complement(u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut v = u.clone();
    // u has positive entries in every caller, so u_0 + 1 never cancels.
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vv = v.dot(&v);
    let mut h = DMatrix::<f64>::identity(n, n);
    if vv > 0.0 {
        h -= (&v * v.transpose()) * (2.0 / vv);
    }
    h.columns(1, n - 1).into_owned()
}

/// Eigenvalues of a symmetric matrix in ascending order, or `None` if the
/// QR iteration fails to converge.
pub(crate) fn sorted_symmetric_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100_000)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return None;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    Some(vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let raw = DVector::from_vec(vec![1.0, 2.0_f64.sqrt(), 0.5, 3.0]);
        let u = &raw / raw.norm();
        let y = householder_complement(&u);
        let gram = y.transpose() * &y;
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-14);
        assert!((y.transpose() * &u).abs().max() < 1e-14);
    }
}
