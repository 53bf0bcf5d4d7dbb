//! Haar-random unitaries, the pushforward measure on bistochastic matrices,
//! Monte-Carlo moment estimators and spectra.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::blockmaps::phi;
use crate::error::{Error, Result};
use crate::fixtures::circulant3;
use crate::linalg::unitary_factor;
use crate::matcore::{BistochasticMatrix, BlockUnitary, ComplexMatrix, Tolerance, C64};
use crate::stats::{CoMoments, Estimate, Welford};

/// Generator for substream `stream` of `seed`; streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn haar_dmatrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    // QR of a Ginibre matrix, columns rephased so diag(R) > 0
    unitary_factor(g)
}

/// Haar-distributed n×n unitary.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    Ok(ComplexMatrix::from(haar_dmatrix(n, rng)))
}

/// Haar unitary on C^{ds} viewed as a (d, s) block unitary.
pub fn haar_block_unitary<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> Result<BlockUnitary> {
    check_ds(d, s)?;
    Ok(BlockUnitary::trusted(
        haar_dmatrix(d * s, rng),
        d,
        s,
        &Tolerance::default(),
    ))
}

/// A draw from μ_{d,s}: φ of a Haar unitary.
pub fn sample_mu<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> Result<BistochasticMatrix> {
    Ok(phi(&haar_block_unitary(d, s, rng)?))
}

fn check_ds(d: usize, s: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Parameter(format!("d must be >= 2, got {d}")));
    }
    if s < 1 {
        return Err(Error::Parameter("s must be >= 1".into()));
    }
    Ok(())
}

/// Samples per substream. Depends only on the total, so results do not
/// depend on how many threads run the substreams.
fn batch_size(samples: usize) -> usize {
    if samples >= 20_000 {
        1000
    } else {
        (samples / 20).max(5)
    }
}

fn batches(samples: usize) -> Vec<(u64, usize)> {
    let size = batch_size(samples);
    (0..samples.div_ceil(size))
        .map(|k| (k as u64, size.min(samples - k * size)))
        .collect()
}

/// Runs `per_draw` over `samples` draws of μ_{d,s}, one accumulator per
/// substream, returned in stream order.
fn run_batches<A, F>(d: usize, s: usize, samples: usize, seed: u64, per_draw: F) -> Vec<A>
where
    A: Default + Send,
    F: Fn(&mut A, &DMatrix<f64>) + Sync,
{
    batches(samples)
        .into_par_iter()
        .map(|(stream, count)| {
            let mut rng = stream_rng(seed, stream);
            let mut acc = A::default();
            for _ in 0..count {
                let u = haar_dmatrix(d * s, &mut rng);
                let b = crate::blockmaps::phi_raw(&u, d, s);
                per_draw(&mut acc, &b);
            }
            acc
        })
        .collect()
}

/// Monte-Carlo moments of a μ_{d,s} draw against the closed forms.
///
/// Indices are zero-based: `B₀₀` with `B₁₀` (same column), `B₀₁` (same row)
/// and `B₁₁` (neither).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub d: usize,
    pub s: usize,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub est_mean: Estimate,
    pub est_second: Estimate,
    pub est_cross_row: Estimate,
    pub est_cross_col: Estimate,
    pub est_cross_diag: Estimate,
    pub theory_mean: f64,
    pub theory_second: f64,
    pub theory_cross_samerow: f64,
    pub theory_cross_diag: f64,
}

impl MomentReport {
    /// Largest deviation from theory in standard errors.
    pub fn max_z(&self) -> f64 {
        [
            self.est_mean.z_score(self.theory_mean),
            self.est_second.z_score(self.theory_second),
            self.est_cross_row.z_score(self.theory_cross_samerow),
            self.est_cross_col.z_score(self.theory_cross_samerow),
            self.est_cross_diag.z_score(self.theory_cross_diag),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Closed-form moments `(E B, E B², E B_ij B_i'j, E B_ij B_i'j')`.
pub fn theory_moments(d: usize, s: usize) -> (f64, f64, f64, f64) {
    let (df, sf) = (d as f64, s as f64);
    let n = df * sf;
    let denom = n * n - 1.0;
    (
        1.0 / df,
        (df * (sf * sf + 1.0) - 2.0) / (df * denom),
        (df * sf * sf - 1.0) / (df * denom),
        sf * sf / denom,
    )
}

#[derive(Default)]
struct MomentAcc([Welford; 5]);

pub fn estimate_moments(d: usize, s: usize, samples: usize, seed: u64) -> Result<MomentReport> {
    check_ds(d, s)?;
    if samples < 100 {
        return Err(Error::Parameter(format!("need at least 100 samples, got {samples}")));
    }
    let parts = run_batches(d, s, samples, seed, |acc: &mut MomentAcc, b| {
        let x = b[(0, 0)];
        acc.0[0].push(x);
        acc.0[1].push(x * x);
        acc.0[2].push(x * b[(0, 1)]);
        acc.0[3].push(x * b[(1, 0)]);
        acc.0[4].push(x * b[(1, 1)]);
    });
    let mut total = MomentAcc::default();
    for p in &parts {
        for (t, w) in total.0.iter_mut().zip(&p.0) {
            t.merge(w);
        }
    }
    let (m1, m2, mrow, mdiag) = theory_moments(d, s);
    Ok(MomentReport {
        d,
        s,
        n: d * s,
        samples,
        seed,
        est_mean: Estimate::from(&total.0[0]),
        est_second: Estimate::from(&total.0[1]),
        est_cross_row: Estimate::from(&total.0[2]),
        est_cross_col: Estimate::from(&total.0[3]),
        est_cross_diag: Estimate::from(&total.0[4]),
        theory_mean: m1,
        theory_second: m2,
        theory_cross_samerow: mrow,
        theory_cross_diag: mdiag,
    })
}

/// Monte-Carlo `E|U₀₀|²` and `E|U₀₀|⁴` for Haar U on U(n).
pub fn estimate_entry_moments(n: usize, samples: usize, seed: u64) -> Result<(Estimate, Estimate)> {
    if n == 0 || samples < 2 {
        return Err(Error::Parameter("need n >= 1 and at least two samples".into()));
    }
    let parts: Vec<[Welford; 2]> = batches(samples)
        .into_par_iter()
        .map(|(stream, count)| {
            let mut rng = stream_rng(seed, stream);
            let mut acc: [Welford; 2] = Default::default();
            for _ in 0..count {
                let x = haar_dmatrix(n, &mut rng)[(0, 0)].norm_sqr();
                acc[0].push(x);
                acc[1].push(x * x);
            }
            acc
        })
        .collect();
    let mut total: [Welford; 2] = Default::default();
    for p in &parts {
        total[0].merge(&p[0]);
        total[1].merge(&p[1]);
    }
    Ok((Estimate::from(&total[0]), Estimate::from(&total[1])))
}

/// Closed-form second-order structure of a μ_{d,s} draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationTheory {
    pub var: f64,
    pub cov_line: f64,
    pub rho_line: f64,
    pub cov_diag: f64,
    pub rho_diag: f64,
}

impl CorrelationTheory {
    pub fn new(d: usize, s: usize) -> Self {
        let df = d as f64;
        let n = df * s as f64;
        let denom = df * df * (n * n - 1.0);
        CorrelationTheory {
            var: (df - 1.0) * (df - 1.0) / denom,
            cov_line: -(df - 1.0) / denom,
            rho_line: -1.0 / (df - 1.0),
            cov_diag: 1.0 / denom,
            rho_diag: 1.0 / ((df - 1.0) * (df - 1.0)),
        }
    }
}

/// Empirical variance, covariances and correlations with batch-means
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub d: usize,
    pub s: usize,
    pub samples: usize,
    pub seed: u64,
    pub batches: usize,
    pub var: Estimate,
    pub cov_row: Estimate,
    pub cov_col: Estimate,
    pub cov_diag: Estimate,
    pub rho_row: Estimate,
    pub rho_col: Estimate,
    pub rho_diag: Estimate,
    pub theory: CorrelationTheory,
}

impl CorrelationReport {
    pub fn max_z(&self) -> f64 {
        let t = &self.theory;
        [
            self.var.z_score(t.var),
            self.cov_row.z_score(t.cov_line),
            self.cov_col.z_score(t.cov_line),
            self.cov_diag.z_score(t.cov_diag),
            self.rho_row.z_score(t.rho_line),
            self.rho_col.z_score(t.rho_line),
            self.rho_diag.z_score(t.rho_diag),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Default)]
struct CorrAcc {
    row: CoMoments,
    col: CoMoments,
    diag: CoMoments,
}

impl CorrAcc {
    fn stats(&self) -> [f64; 7] {
        [
            self.row.var_x(),
            self.row.covariance(),
            self.col.covariance(),
            self.diag.covariance(),
            self.row.correlation(),
            self.col.correlation(),
            self.diag.correlation(),
        ]
    }
}

pub fn estimate_correlations(d: usize, s: usize, samples: usize, seed: u64) -> Result<CorrelationReport> {
    check_ds(d, s)?;
    if samples < 100 {
        return Err(Error::Parameter(format!("need at least 100 samples, got {samples}")));
    }
    let parts = run_batches(d, s, samples, seed, |acc: &mut CorrAcc, b| {
        let x = b[(0, 0)];
        acc.row.push(x, b[(0, 1)]);
        acc.col.push(x, b[(1, 0)]);
        acc.diag.push(x, b[(1, 1)]);
    });
    let mut total = CorrAcc::default();
    let mut spread: [Welford; 7] = Default::default();
    for p in &parts {
        total.row.merge(&p.row);
        total.col.merge(&p.col);
        total.diag.merge(&p.diag);
        for (w, v) in spread.iter_mut().zip(p.stats()) {
            w.push(v);
        }
    }
    let point = total.stats();
    let est = |k: usize| Estimate {
        value: point[k],
        se: spread[k].std_error(),
    };
    Ok(CorrelationReport {
        d,
        s,
        samples,
        seed,
        batches: parts.len(),
        var: est(0),
        cov_row: est(1),
        cov_col: est(2),
        cov_diag: est(3),
        rho_row: est(4),
        rho_col: est(5),
        rho_diag: est(6),
        theory: CorrelationTheory::new(d, s),
    })
}

/// Eigenvalues of `b` as a general real matrix, sorted by decreasing modulus.
pub fn spectrum(b: &BistochasticMatrix) -> Result<Vec<C64>> {
    let schur = nalgebra::Schur::try_new(b.matrix().clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric(format!("Schur iteration did not converge on {}", b.matrix())))?;
    let mut ev: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.re.total_cmp(&x.re)));
    Ok(ev)
}

/// Eigenvalues of `count` draws of μ_{d,s}, flattened in draw order.
pub fn sample_spectra(d: usize, s: usize, count: usize, seed: u64) -> Result<Vec<C64>> {
    check_ds(d, s)?;
    let tol = Tolerance::default();
    let parts: Vec<Result<Vec<C64>>> = batches(count.max(1))
        .into_par_iter()
        .map(|(stream, n)| {
            let mut rng = stream_rng(seed, stream);
            let mut out = Vec::with_capacity(n * d);
            for _ in 0..n {
                let u = haar_dmatrix(d * s, &mut rng);
                let b = BistochasticMatrix::with_slack(crate::blockmaps::phi_raw(&u, d, s), &tol, 1e-9)?;
                out.extend(spectrum(&b)?);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(count * d);
    for p in parts {
        all.extend(p?);
    }
    all.truncate(count * d);
    Ok(all)
}

/// Points `((d−1)e^{iθ} + e^{−i(d−1)θ})/d` at `points` equally spaced θ in [0, 2π).
pub fn hypocycloid(d: usize, points: usize) -> Result<Vec<C64>> {
    if d < 3 {
        return Err(Error::Parameter(format!("hypocycloid needs d >= 3, got {d}")));
    }
    Ok((0..points)
        .map(|k| hypocycloid_at(d, 2.0 * std::f64::consts::PI * k as f64 / points as f64))
        .collect())
}

pub fn hypocycloid_at(d: usize, theta: f64) -> C64 {
    let df = d as f64;
    ((df - 1.0) * C64::from_polar(1.0, theta) + C64::from_polar(1.0, -(df - 1.0) * theta)) / df
}

/// A point of the triangle spanned by `P_id`, `P_(123)`, `P_(132)`.
#[derive(Debug, Clone)]
pub struct SlicePoint {
    pub weights: [f64; 3],
    pub matrix: BistochasticMatrix,
}

pub fn slice_point(weights: [f64; 3]) -> Result<SlicePoint> {
    let matrix = BistochasticMatrix::new(circulant3(weights[0], weights[1], weights[2]), &Tolerance::default())?;
    Ok(SlicePoint { weights, matrix })
}

/// Uniform samples from the triangle, as circulant matrices.
pub fn sample_simplex_slice(samples: usize, seed: u64) -> Result<Vec<SlicePoint>> {
    if samples < 1 {
        return Err(Error::Parameter("samples must be >= 1".into()));
    }
    let dir = Dirichlet::new([1.0f64; 3]).map_err(|e| Error::Internal(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    (0..samples).map(|_| slice_point(dir.sample(&mut rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::matcore::unitarity_defect;

    #[test]
    fn one_by_one_is_a_phase() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..10 {
            let u = haar_unitary(1, &mut rng).unwrap();
            assert!((u.get(0, 0).norm() - 1.0).abs() < 1e-12);
        }
        assert!(haar_unitary(0, &mut rng).is_err());
    }

    #[test]
    fn draws_are_unitary_and_reproducible() {
        let a = haar_dmatrix(6, &mut stream_rng(9, 3));
        let b = haar_dmatrix(6, &mut stream_rng(9, 3));
        let c = haar_dmatrix(6, &mut stream_rng(9, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(unitarity_defect(&a) < 1e-13);
    }

    #[test]
    fn theory_values() {
        let (m, m2, _, _) = theory_moments(2, 1);
        assert_eq!(m, 0.5);
        assert!((m2 - 1.0 / 3.0).abs() < 1e-15);
        let (_, m2, _, diag) = theory_moments(3, 2);
        assert!((m2 - 13.0 / 105.0).abs() < 1e-15);
        assert!((diag - 4.0 / 35.0).abs() < 1e-15);
        let t = CorrelationTheory::new(3, 2);
        assert!((t.var - 4.0 / 315.0).abs() < 1e-15);
        assert!((t.cov_line + 2.0 / 315.0).abs() < 1e-15);
        assert_eq!(t.rho_line, -0.5);
        assert_eq!(t.rho_diag, 0.25);
    }

    #[test]
    fn variance_identity() {
        for d in 2..=6 {
            for s in 1..=4 {
                let (m, m2, _, _) = theory_moments(d, s);
                let t = CorrelationTheory::new(d, s);
                assert!((m2 - m * m - t.var).abs() < 1e-14, "d={d} s={s}");
                assert!((t.cov_line / t.var - t.rho_line).abs() < 1e-14);
                assert!((t.cov_diag / t.var - t.rho_diag).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn small_run_is_consistent_with_theory() {
        let r = estimate_moments(3, 2, 4000, 11).unwrap();
        assert!(r.max_z() < 5.0, "{r:?}");
        assert!(estimate_moments(3, 2, 99, 1).is_err());
        let c = estimate_correlations(3, 1, 4000, 5).unwrap();
        assert!(c.max_z() < 5.0, "{c:?}");
        assert!(c.var.se > 0.0);
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| estimate_correlations(2, 2, 3000, 42).unwrap());
        let b = four.install(|| estimate_correlations(2, 2, 3000, 42).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn spectra_of_known_matrices() {
        let t = Tolerance::default();
        let flat = BistochasticMatrix::flat(4, &t).unwrap();
        let ev = spectrum(&flat).unwrap();
        assert!((ev[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(ev[1..].iter().all(|z| z.norm() < 1e-12));

        let cyc = BistochasticMatrix::new(fixtures::circulant3(0.0, 1.0, 0.0), &t).unwrap();
        for z in spectrum(&cyc).unwrap() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.powu(3) - C64::new(1.0, 0.0)).norm() < 1e-12);
        }

        let ev = spectrum(&fixtures::half_derangement_3()).unwrap();
        assert!((ev[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        for z in &ev[1..] {
            assert!((z - C64::new(-0.5, 0.0)).norm() < 1e-7);
        }
    }

    #[test]
    fn hypocycloid_shape() {
        assert!((hypocycloid_at(3, 0.0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((hypocycloid_at(3, std::f64::consts::PI) - C64::new(-1.0 / 3.0, 0.0)).norm() < 1e-15);
        let rot = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 4.0);
        for k in 0..8 {
            let th = 0.37 * k as f64;
            let a = hypocycloid_at(4, th + 2.0 * std::f64::consts::PI / 4.0);
            assert!((a - rot * hypocycloid_at(4, th)).norm() < 1e-14);
        }
        let pts = hypocycloid(3, 12).unwrap();
        assert_eq!(pts.len(), 12);
        assert!((pts[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(hypocycloid(2, 5).is_err());
    }

    #[test]
    fn simplex_slice_points() {
        let p = slice_point([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.matrix.matrix(), &DMatrix::<f64>::identity(3, 3));
        let p = slice_point([1.0 / 3.0; 3]).unwrap();
        assert!((p.matrix.matrix() - DMatrix::from_element(3, 3, 1.0 / 3.0)).abs().max() < 1e-15);
        let pts = sample_simplex_slice(200, 3).unwrap();
        for p in &pts {
            let m = p.matrix.matrix();
            assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(m[(0, 0)], m[(1, 1)]);
            assert_eq!(m[(0, 1)], m[(1, 2)]);
        }
    }
}
