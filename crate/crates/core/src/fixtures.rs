//! Small named matrices that recur in tests, benchmarks and the CLI docs.

use nalgebra::DMatrix;

use crate::matcore::{BistochasticMatrix, BlockUnitary, ComplexMatrix, Tolerance, C64};
use crate::perm::Permutation;

/// 4×4 anti-diagonal permutation; as a (2,2) block unitary it maps to the
/// 2×2 swap.
pub fn block_swap_4() -> BlockUnitary {
    let p = Permutation::from_images(vec![3, 2, 1, 0]).expect("valid permutation");
    BlockUnitary::trusted(ComplexMatrix::from_real(&p.matrix()).into_dmatrix(), 2, 2, &Tolerance::default())
}

/// 6×6 permutation matrix (a single 6-cycle) whose (3,2) block image is the
/// zero-diagonal circulant with off-diagonal ½.
pub fn derangement_6() -> BlockUnitary {
    // row i has its one in column image[i]
    let p = Permutation::from_images(vec![4, 3, 0, 5, 1, 2]).expect("valid permutation");
    BlockUnitary::trusted(ComplexMatrix::from_real(&p.matrix()).into_dmatrix(), 3, 2, &Tolerance::default())
}

/// Circulant `a·P_id + b·P_(123) + c·P_(132)`.
pub fn circulant3(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[a, b, c, c, a, b, b, c, a])
}

/// Zero-diagonal circulant with off-diagonal ½: 2-unistochastic, not unistochastic.
pub fn half_derangement_3() -> BistochasticMatrix {
    BistochasticMatrix::new(circulant3(0.0, 0.5, 0.5), &Tolerance::default()).expect("bistochastic")
}

/// Circulant (1/9, 4/9, 4/9), on the boundary of the unistochastic set.
pub fn hypocycloid_point() -> BistochasticMatrix {
    BistochasticMatrix::new(circulant3(1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0), &Tolerance::default())
        .expect("bistochastic")
}

/// Real orthogonal `I − (2/3)J` with squared moduli (1/9, 4/9, 4/9) circulant.
pub fn householder_3() -> BlockUnitary {
    let m = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 / 3.0 } else { -2.0 / 3.0 });
    BlockUnitary::trusted(ComplexMatrix::from_real(&m).into_dmatrix(), 3, 1, &Tolerance::default())
}

/// Circulant (1/27, 13/27, 13/27): the 2/3 ⊕ 1/3 blend of the two matrices above.
pub fn blended_point() -> BistochasticMatrix {
    BistochasticMatrix::new(
        circulant3(1.0 / 27.0, 13.0 / 27.0, 13.0 / 27.0),
        &Tolerance::default(),
    )
    .expect("bistochastic")
}

/// Unitary Fourier matrix `F_{jk} = ω^{jk}/√d`.
pub fn fourier(d: usize) -> ComplexMatrix {
    let norm = 1.0 / (d as f64).sqrt();
    let m = DMatrix::from_fn(d, d, |j, k| {
        let angle = 2.0 * std::f64::consts::PI * ((j * k) % d) as f64 / d as f64;
        C64::from_polar(norm, angle)
    });
    ComplexMatrix::from(m)
}
