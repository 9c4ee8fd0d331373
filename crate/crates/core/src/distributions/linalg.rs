//! Closed-form helpers for symmetric 1×1 and 2×2 covariance matrices,
//! stored row-major.

/// Eigenvalues in ascending order.
pub(crate) fn sym_eigenvalues(cov: &[f64]) -> Vec<f64> {
    match cov.len() {
        1 => vec![cov[0]],
        4 => {
            let (a, b, c) = (cov[0], cov[1], cov[3]);
            let m = 0.5 * (a + c);
            let r = (0.5 * (a - c)).hypot(b);
            vec![m - r, m + r]
        }
        _ => unreachable!("only 1 and 2 dimensional covariances are supported"),
    }
}

/// Raises every eigenvalue below `floor` to `floor`. Returns true when any
/// eigenvalue was raised; untouched matrices are returned bit-for-bit.
pub(crate) fn floor_eigenvalues(cov: &mut [f64], floor: f64) -> bool {
    match cov.len() {
        1 => {
            if cov[0] < floor || cov[0].is_nan() {
                cov[0] = floor;
                true
            } else {
                false
            }
        }
        4 => {
            let (a, b, c) = (cov[0], 0.5 * (cov[1] + cov[2]), cov[3]);
            let eig = sym_eigenvalues(&[a, b, b, c]);
            if eig[0] >= floor {
                return false;
            }
            let lo = floor;
            let hi = eig[1].max(floor);
            // eigenvector of the larger eigenvalue is (cos t, sin t)
            let t = 0.5 * (2.0 * b).atan2(a - c);
            let (s, co) = t.sin_cos();
            cov[0] = hi * co * co + lo * s * s;
            cov[3] = hi * s * s + lo * co * co;
            let off = (hi - lo) * co * s;
            cov[1] = off;
            cov[2] = off;
            true
        }
        _ => unreachable!("only 1 and 2 dimensional covariances are supported"),
    }
}

/// Inverse and log-determinant of a positive-definite covariance.
pub(crate) fn inverse_logdet(cov: &[f64]) -> (Vec<f64>, f64) {
    match cov.len() {
        1 => (vec![1.0 / cov[0]], cov[0].ln()),
        4 => {
            let det = cov[0] * cov[3] - cov[1] * cov[2];
            (
                vec![cov[3] / det, -cov[1] / det, -cov[2] / det, cov[0] / det],
                det.ln(),
            )
        }
        _ => unreachable!("only 1 and 2 dimensional covariances are supported"),
    }
}

/// Lower Cholesky factor.
pub(crate) fn cholesky(cov: &[f64]) -> Vec<f64> {
    match cov.len() {
        1 => vec![cov[0].sqrt()],
        4 => {
            let l00 = cov[0].sqrt();
            let l10 = cov[2] / l00;
            let l11 = (cov[3] - l10 * l10).max(0.0).sqrt();
            vec![l00, 0.0, l10, l11]
        }
        _ => unreachable!("only 1 and 2 dimensional covariances are supported"),
    }
}

pub(crate) fn quad_form(inv: &[f64], diff: &[f64]) -> f64 {
    match diff.len() {
        1 => inv[0] * diff[0] * diff[0],
        2 => {
            inv[0] * diff[0] * diff[0]
                + (inv[1] + inv[2]) * diff[0] * diff[1]
                + inv[3] * diff[1] * diff[1]
        }
        _ => unreachable!("only 1 and 2 dimensional points are supported"),
    }
}
