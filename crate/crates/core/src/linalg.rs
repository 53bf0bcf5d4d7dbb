//! Small dense helpers on top of nalgebra's Householder QR.

use nalgebra::DMatrix;

use crate::matcore::C64;

fn unit_phase(z: C64) -> C64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Unitary QR factor with the diagonal of R made real positive.
///
/// This fixes the column-phase ambiguity of QR, so the factor is a
/// well-defined function of the input.
pub(crate) fn unitary_factor(m: DMatrix<C64>) -> DMatrix<C64> {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let ph = unit_phase(r[(j, j)]);
        for z in q.column_mut(j).iter_mut() {
            *z *= ph;
        }
    }
    q
}

/// Extends `r` orthonormal rows of length `n` to an n×n unitary whose first
/// `r` rows are exactly the given ones (up to rounding).
pub(crate) fn complete_to_unitary(rows: &DMatrix<C64>) -> DMatrix<C64> {
    let (r, n) = rows.shape();
    let mut aug = DMatrix::<C64>::zeros(n, r + n);
    aug.view_mut((0, 0), (n, r)).copy_from(&rows.adjoint());
    for i in 0..n {
        aug[(i, r + i)] = C64::new(1.0, 0.0);
    }
    let q = unitary_factor(aug);
    q.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::unitarity_defect;

    #[test]
    fn unitary_factor_has_positive_r() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 1.0), C64::new(0.0, 2.0), C64::new(-1.0, 0.5), C64::new(3.0, 0.0)],
        );
        let q = unitary_factor(m.clone());
        assert!(unitarity_defect(&q) < 1e-14);
        let r = q.adjoint() * m;
        for j in 0..2 {
            assert!(r[(j, j)].im.abs() < 1e-14 && r[(j, j)].re > 0.0);
        }
        assert!(r[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn completion_keeps_given_rows() {
        let h = 0.5f64.sqrt();
        let rows = DMatrix::from_row_slice(
            2,
            3,
            &[
                C64::new(h, 0.0),
                C64::new(0.0, h),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, -1.0),
            ],
        );
        let u = complete_to_unitary(&rows);
        assert!(unitarity_defect(&u) < 1e-14);
        assert!((u.rows(0, 2) - &rows).norm() < 1e-14);
    }
}
