//! Validated numeric domain types shared by every other module.
//!
//! Complex matrices are dense `nalgebra` matrices of `Complex64`; real
//! bistochastic matrices are dense `DMatrix<f64>`. All types are immutable
//! once constructed and validate their invariants in their constructors.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, LineKind, Result};

pub type C64 = Complex<f64>;

/// Tolerance policy used by validation, certification and statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Slack for invariant checks (stochasticity, unitarity).
    pub validation_eps: f64,
    /// Residual threshold a solver certificate must reach.
    pub certificate_eps: f64,
    /// Monte-Carlo acceptance band, in standard errors.
    pub stats_sigma: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            validation_eps: 1e-10,
            certificate_eps: 1e-8,
            stats_sigma: 5.0,
        }
    }
}

impl Tolerance {
    pub fn new(validation_eps: f64, certificate_eps: f64, stats_sigma: f64) -> Result<Self> {
        let all_positive = [validation_eps, certificate_eps, stats_sigma]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(Error::Parameter(
                "tolerance fields must be finite and strictly positive".into(),
            ));
        }
        if validation_eps > certificate_eps {
            return Err(Error::Parameter(format!(
                "validation_eps ({validation_eps:e}) exceeds certificate_eps ({certificate_eps:e})"
            )));
        }
        Ok(Tolerance {
            validation_eps,
            certificate_eps,
            stats_sigma,
        })
    }
}

/// Dense complex matrix with explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{cols} matrix, found {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(ComplexMatrix(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    pub fn from_real(m: &DMatrix<f64>) -> Self {
        ComplexMatrix(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn identity(n: usize) -> Self {
        ComplexMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn row_major_entries(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self.0[(r, c)]);
            }
        }
        out
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }
}

impl From<DMatrix<C64>> for ComplexMatrix {
    fn from(m: DMatrix<C64>) -> Self {
        ComplexMatrix(m)
    }
}

/// Sum of squared moduli of all entries, i.e. `Tr(m m*)`.
pub fn frobenius_norm_sq(m: &ComplexMatrix) -> f64 {
    m.0.iter().map(|z| z.norm_sqr()).sum()
}

/// `||m* m - I||_F`. Callers must pass a square matrix.
pub(crate) fn unitarity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut gram = m.adjoint() * m;
    for i in 0..n {
        gram[(i, i)] -= C64::new(1.0, 0.0);
    }
    gram.norm()
}

pub fn is_unitary(m: &ComplexMatrix, tol: &Tolerance) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "unitarity needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(unitarity_defect(&m.0) <= tol.validation_eps * m.rows() as f64)
}

/// Validated d×d doubly stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BistochasticMatrix {
    entries: DMatrix<f64>,
    tol: Tolerance,
}

pub fn validate_bistochastic(entries: DMatrix<f64>, tol: &Tolerance) -> Result<BistochasticMatrix> {
    BistochasticMatrix::with_slack(entries, tol, tol.validation_eps)
}

impl BistochasticMatrix {
    pub fn new(entries: DMatrix<f64>, tol: &Tolerance) -> Result<Self> {
        validate_bistochastic(entries, tol)
    }

    /// Builds from nested rows.
    pub fn from_rows(rows: &[Vec<f64>], tol: &Tolerance) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("bistochastic matrix must be square".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        validate_bistochastic(DMatrix::from_row_slice(d, d, &flat), tol)
    }

    /// Validation with an explicit slack; used for images of block unitaries
    /// whose own unitarity was only checked up to `validation_eps * ds`.
    pub(crate) fn with_slack(mut entries: DMatrix<f64>, tol: &Tolerance, slack: f64) -> Result<Self> {
        let d = entries.nrows();
        if d != entries.ncols() {
            return Err(Error::Dimension(format!(
                "bistochastic matrix must be square, got {}x{}",
                d,
                entries.ncols()
            )));
        }
        if d == 0 {
            return Err(Error::Dimension("empty matrix".into()));
        }
        for r in 0..d {
            for c in 0..d {
                let v = entries[(r, c)];
                if !v.is_finite() || v < -slack {
                    return Err(Error::Negativity { row: r, col: c, value: v });
                }
                if v < 0.0 {
                    entries[(r, c)] = 0.0;
                }
            }
        }
        for i in 0..d {
            let row: f64 = entries.row(i).sum();
            if (row - 1.0).abs() > slack {
                return Err(Error::Stochasticity { line: LineKind::Row, index: i, sum: row });
            }
            let col: f64 = entries.column(i).sum();
            if (col - 1.0).abs() > slack {
                return Err(Error::Stochasticity { line: LineKind::Column, index: i, sum: col });
            }
        }
        Ok(BistochasticMatrix { entries, tol: *tol })
    }

    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.entries.row(i).iter().copied().collect()
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        self.entries.column(j).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d()).map(|i| self.row(i)).collect()
    }

    /// Frobenius distance to another matrix of the same size.
    pub fn distance(&self, other: &DMatrix<f64>) -> f64 {
        (&self.entries - other).norm()
    }

    /// The van der Waerden matrix `J_d / d`.
    pub fn flat(d: usize, tol: &Tolerance) -> Result<Self> {
        validate_bistochastic(DMatrix::from_element(d, d, 1.0 / d as f64), tol)
    }
}

/// A ds×ds unitary viewed as a d×d grid of s×s blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUnitary {
    d: usize,
    s: usize,
    matrix: ComplexMatrix,
    tol: Tolerance,
}

impl BlockUnitary {
    pub fn new(matrix: ComplexMatrix, d: usize, s: usize, tol: &Tolerance) -> Result<Self> {
        Self::check_shape(&matrix, d, s)?;
        let defect = unitarity_defect(&matrix.0);
        if defect > tol.validation_eps * (d * s) as f64 {
            return Err(Error::NotUnitary { defect });
        }
        Ok(BlockUnitary { d, s, matrix, tol: *tol })
    }

    /// Wraps a matrix that is unitary by construction (permutations, direct
    /// sums and tensor products of validated unitaries, QR factors).
    pub(crate) fn trusted(matrix: DMatrix<C64>, d: usize, s: usize, tol: &Tolerance) -> Self {
        debug_assert_eq!(matrix.nrows(), d * s);
        debug_assert_eq!(matrix.ncols(), d * s);
        BlockUnitary {
            d,
            s,
            matrix: ComplexMatrix(matrix),
            tol: *tol,
        }
    }

    fn check_shape(matrix: &ComplexMatrix, d: usize, s: usize) -> Result<()> {
        if d < 2 {
            return Err(Error::Dimension(format!("block grid dimension must be >= 2, got {d}")));
        }
        if s < 1 {
            return Err(Error::Dimension("block size must be >= 1".into()));
        }
        if matrix.rows() != d * s || matrix.cols() != d * s {
            return Err(Error::Dimension(format!(
                "expected a {n}x{n} matrix for (d, s) = ({d}, {s}), got {}x{}",
                matrix.rows(),
                matrix.cols(),
                n = d * s
            )));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Side length `ds`.
    pub fn n(&self) -> usize {
        self.d * self.s
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub(crate) fn dmatrix(&self) -> &DMatrix<C64> {
        &self.matrix.0
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    /// The (k, l)-th entry of block (i, j); all indices zero-based.
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        assert!(i < self.d && j < self.d && k < self.s && l < self.s, "block index out of range");
        self.matrix.0[(self.s * i + k, self.s * j + l)]
    }

    /// Copy of block (i, j).
    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        let s = self.s;
        ComplexMatrix(self.matrix.0.view((s * i, s * j), (s, s)).into_owned())
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.matrix.0)
    }
}

/// Probability vector in the simplex Δ_d.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>, tol: &Tolerance) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("probability vector must be non-empty".into()));
        }
        let mut weights = weights;
        for (i, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() || *w < -tol.validation_eps {
                return Err(Error::Negativity { row: 0, col: i, value: *w });
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol.validation_eps {
            return Err(Error::Stochasticity { line: LineKind::Row, index: 0, sum });
        }
        Ok(ProbabilityVector { weights })
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }
}
