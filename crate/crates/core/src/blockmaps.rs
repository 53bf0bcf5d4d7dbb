//! The block map φ_{d,s} and the constructions that build block unitaries
//! with prescribed images.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matcore::{BistochasticMatrix, BlockUnitary, Tolerance, C64};

/// `(1/s)·||U_ij||_F²` for every block, without validation.
pub(crate) fn phi_raw(m: &DMatrix<C64>, d: usize, s: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    let inv_s = 1.0 / s as f64;
    for c in 0..d * s {
        let bj = c / s;
        for r in 0..d * s {
            out[(r / s, bj)] += m[(r, c)].norm_sqr();
        }
    }
    out * inv_s
}

/// φ_{d,s}(U): the matrix of normalized squared Frobenius norms of the blocks.
pub fn phi(u: &BlockUnitary) -> BistochasticMatrix {
    let raw = phi_raw(u.dmatrix(), u.d(), u.s());
    let slack = u.tolerance().validation_eps * u.n() as f64;
    BistochasticMatrix::with_slack(raw, u.tolerance(), slack)
        .expect("image of a validated block unitary is bistochastic")
}

/// `U ⊗ I_s` for an ordinary d×d unitary (block size 1).
pub fn tensor_embed(u: &BlockUnitary, target_s: usize) -> Result<BlockUnitary> {
    if u.s() != 1 {
        return Err(Error::Parameter(format!(
            "tensor embedding expects block size 1, got {}",
            u.s()
        )));
    }
    if target_s < 1 {
        return Err(Error::Parameter("target block size must be >= 1".into()));
    }
    let id = DMatrix::<C64>::identity(target_s, target_s);
    let v = u.dmatrix().kronecker(&id);
    Ok(BlockUnitary::trusted(v, u.d(), target_s, u.tolerance()))
}

/// Block-diagonal blend: block (i,j) of the result is `diag(U_ij, W_ij)`.
///
/// φ of the result is `(s·φ(U) + t·φ(W)) / (s+t)`.
pub fn direct_sum_mix(u: &BlockUnitary, w: &BlockUnitary) -> Result<BlockUnitary> {
    direct_sum_mix_all(&[u, w])
}

/// Iterated [`direct_sum_mix`] over any number of summands, assembled in one pass.
pub fn direct_sum_mix_all(parts: &[&BlockUnitary]) -> Result<BlockUnitary> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Parameter("direct sum of zero summands".into()))?;
    let d = first.d();
    if let Some(bad) = parts.iter().find(|p| p.d() != d) {
        return Err(Error::Dimension(format!(
            "grid dimensions differ: {d} vs {}",
            bad.d()
        )));
    }
    let total: usize = parts.iter().map(|p| p.s()).sum();
    let mut m = DMatrix::<C64>::zeros(d * total, d * total);
    let mut offset = 0;
    for p in parts {
        let s = p.s();
        let src = p.dmatrix();
        for i in 0..d {
            for j in 0..d {
                for k in 0..s {
                    for l in 0..s {
                        m[(i * total + offset + k, j * total + offset + l)] = src[(i * s + k, j * s + l)];
                    }
                }
            }
        }
        offset += s;
    }
    Ok(BlockUnitary::trusted(m, d, total, first.tolerance()))
}

/// The two roots `w_± = ½(1 − q ± √(1 + 2q − 3q²))`.
pub fn u_q_weights(q: f64) -> (f64, f64) {
    let disc = (1.0 + 2.0 * q - 3.0 * q * q).max(0.0).sqrt();
    (0.5 * (1.0 - q + disc), 0.5 * (1.0 - q - disc))
}

/// Real orthogonal 6×6 family whose (3,2) image is the circulant with
/// diagonal q² and off-diagonal (1 − q²)/2.
///
/// Odd and even indices carry two interleaved 3×3 circulants.
pub fn u_q(q: f64) -> Result<BlockUnitary> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("q must lie in [0, 1], got {q}")));
    }
    let (wp, wm) = u_q_weights(q);
    #[rustfmt::skip]
    let rows = [
        q,   0.0, wm,  0.0, wp,  0.0,
        0.0, q,   0.0, wp,  0.0, wm,
        wp,  0.0, q,   0.0, wm,  0.0,
        0.0, wm,  0.0, q,   0.0, wp,
        wm,  0.0, wp,  0.0, q,   0.0,
        0.0, wp,  0.0, wm,  0.0, q,
    ];
    let m = DMatrix::from_row_slice(6, 6, &rows).map(|x| C64::new(x, 0.0));
    Ok(BlockUnitary::trusted(m, 3, 2, &Tolerance::default()))
}

/// Image of a block unitary under the real embedding U(n) ⊆ O(2n).
#[derive(Debug, Clone)]
pub struct OrthogonalEmbedding {
    pub source: BlockUnitary,
    /// Real orthogonal matrix with block size 2s (imaginary parts all zero).
    pub target: BlockUnitary,
}

impl OrthogonalEmbedding {
    pub fn target_real(&self) -> DMatrix<f64> {
        self.target.dmatrix().map(|z| z.re)
    }
}

/// Replaces each entry z by the 2×2 block `[[Re z, Im z], [−Im z, Re z]]`.
pub fn realify(u: &BlockUnitary) -> OrthogonalEmbedding {
    let n = u.n();
    let src = u.dmatrix();
    let mut m = DMatrix::<C64>::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let z = src[(r, c)];
            m[(2 * r, 2 * c)] = C64::new(z.re, 0.0);
            m[(2 * r, 2 * c + 1)] = C64::new(z.im, 0.0);
            m[(2 * r + 1, 2 * c)] = C64::new(-z.im, 0.0);
            m[(2 * r + 1, 2 * c + 1)] = C64::new(z.re, 0.0);
        }
    }
    OrthogonalEmbedding {
        source: u.clone(),
        target: BlockUnitary::trusted(m, u.d(), 2 * u.s(), u.tolerance()),
    }
}
