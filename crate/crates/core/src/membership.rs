//! Certifying membership in the image of φ_{d,s}.
//!
//! Closed-form constructions and analytic screens are tried first; whatever
//! they leave open goes to a multi-start damped Gauss–Newton search on the
//! unitary group. A `Member` verdict always carries a certificate unitary.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::birkhoff::{birkhoff_decompose, mixture_witness, round_counts};
use crate::blockmaps::{phi_raw, tensor_embed};
use crate::bracelet::{
    bracelet_witness_rows, is_bracelet_matrix, line_pairs, screen_pair, single_overlap, slice_witness_rows,
    PairConstruction, PairScreen, ProbabilityVectorPair, RejectionReason,
};
use crate::error::{Error, Result};
use crate::linalg::{complete_to_unitary, unitary_factor};
use crate::matcore::{unitarity_defect, BistochasticMatrix, BlockUnitary, ComplexMatrix, Tolerance, C64};
use crate::perm::Permutation;
use crate::randhaar::{haar_dmatrix, stream_rng};

/// Budget and seed for the numerical search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Initial Levenberg–Marquardt damping.
    pub step_init: f64,
    /// Stop a restart once the gradient norm falls below this.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            restarts: 20,
            max_iters: 2000,
            step_init: 0.1,
            grad_tol: 1e-10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 || self.max_iters < 1 {
            return Err(Error::Parameter("restarts and max_iters must be >= 1".into()));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(Error::Parameter(format!("step_init must be positive, got {}", self.step_init)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Parameter("grad_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Member,
    RejectedAnalytic,
    Unknown,
}

/// Which step of the pipeline produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Permutation,
    TwoByTwo,
    Screen,
    /// d = 3 bracelet matrix: two polygon rows and their cross product.
    CrossProduct,
    /// Birkhoff weights are exact multiples of 1/s.
    RationalMixture,
    PairConstruction,
    Solver,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipVerdict {
    pub status: Status,
    #[serde(skip)]
    pub certificate: Option<BlockUnitary>,
    /// Frobenius distance between the certificate's image and the target,
    /// or the best solver value when no certificate was found.
    pub residual: f64,
    pub rejection_reason: Option<RejectionReason>,
    pub method: Method,
    /// Restart that produced the solver result.
    pub restart: Option<usize>,
    pub iterations: usize,
    /// Largest `||U*U − I||_F` seen across the iterates of the chosen restart.
    pub max_unitarity_defect: f64,
}

impl MembershipVerdict {
    fn rejected(reason: RejectionReason) -> Self {
        MembershipVerdict {
            status: Status::RejectedAnalytic,
            certificate: None,
            residual: f64::NAN,
            rejection_reason: Some(reason),
            method: Method::Screen,
            restart: None,
            iterations: 0,
            max_unitarity_defect: 0.0,
        }
    }

    fn constructed(u: BlockUnitary, residual: f64, method: Method) -> Self {
        let defect = u.unitarity_defect();
        MembershipVerdict {
            status: Status::Member,
            certificate: Some(u),
            residual,
            rejection_reason: None,
            method,
            restart: None,
            iterations: 0,
            max_unitarity_defect: defect,
        }
    }
}

/// `f(U) = Σ (φ(U)_ij − b_ij)²` and its gradient with respect to the
/// conjugate entries of `U`: block (i,j) is `(2/s)(φ_ij − b_ij) U_ij`.
pub fn objective(u: &BlockUnitary, b: &BistochasticMatrix) -> Result<(f64, ComplexMatrix)> {
    if u.d() != b.d() {
        return Err(Error::Dimension(format!(
            "block grid is {}x{} but target is {}x{}",
            u.d(),
            u.d(),
            b.d(),
            b.d()
        )));
    }
    let (d, s) = (u.d(), u.s());
    let m = u.dmatrix();
    let diff = phi_raw(m, d, s) - b.matrix();
    let f = diff.norm_squared();
    let scale = 2.0 / s as f64;
    let grad = DMatrix::from_fn(d * s, d * s, |r, c| m[(r, c)] * (scale * diff[(r / s, c / s)]));
    Ok((f, ComplexMatrix::from(grad)))
}

/// Least-squares target: the listed block rows of `b`.
struct Target<'a> {
    d: usize,
    s: usize,
    rows: Vec<usize>,
    b: &'a DMatrix<f64>,
}

impl Target<'_> {
    fn residuals(&self, u: &DMatrix<C64>) -> Vec<f64> {
        let p = phi_raw(u, self.d, self.s);
        let mut r = Vec::with_capacity(self.rows.len() * self.d);
        for &i in &self.rows {
            for j in 0..self.d {
                r.push(p[(i, j)] - self.b[(i, j)]);
            }
        }
        r
    }

    fn value(&self, u: &DMatrix<C64>) -> f64 {
        self.residuals(u).iter().map(|x| x * x).sum()
    }

    /// Row pairs `(a, b)`, `a < b`, in different block rows, at least one of
    /// which is targeted. Rotations inside a block row leave φ unchanged.
    fn generator_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.d * self.s;
        let targeted = |a: usize| self.rows.contains(&(a / self.s));
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if a / self.s != b / self.s && (targeted(a) || targeted(b)) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Jacobian of the residuals along `(I + X)U` for the generators
    /// `(E_ab − E_ba)/√2` and `i(E_ab + E_ba)/√2`.
    fn jacobian(&self, u: &DMatrix<C64>, pairs: &[(usize, usize)]) -> DMatrix<f64> {
        let (d, s) = (self.d, self.s);
        let kappa = std::f64::consts::SQRT_2 / s as f64;
        let pos = |block: usize| self.rows.iter().position(|&r| r == block);
        let mut jac = DMatrix::zeros(self.rows.len() * d, 2 * pairs.len());
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let (pa, pb) = (pos(a / s), pos(b / s));
            for j in 0..d {
                let mut sum = C64::new(0.0, 0.0);
                for l in j * s..(j + 1) * s {
                    sum += u[(a, l)].conj() * u[(b, l)];
                }
                if let Some(p) = pa {
                    jac[(p * d + j, 2 * k)] += kappa * sum.re;
                    jac[(p * d + j, 2 * k + 1)] -= kappa * sum.im;
                }
                if let Some(p) = pb {
                    jac[(p * d + j, 2 * k)] -= kappa * sum.re;
                    jac[(p * d + j, 2 * k + 1)] += kappa * sum.im;
                }
            }
        }
        jac
    }
}

fn apply_step(u: &DMatrix<C64>, pairs: &[(usize, usize)], x: &[f64]) -> DMatrix<C64> {
    let n = u.nrows();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::<C64>::identity(n, n);
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let (re, im) = (x[2 * k] * h, x[2 * k + 1] * h);
        m[(a, b)] += C64::new(re, im);
        m[(b, a)] += C64::new(-re, im);
    }
    unitary_factor(m * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    Converged,
    SmallGradient,
    Stagnated,
    DampingExhausted,
    Budget,
}

struct RestartOutcome {
    restart: usize,
    u: DMatrix<C64>,
    value: f64,
    iterations: usize,
    max_defect: f64,
    #[allow(dead_code)]
    stop: Stop,
}

fn descend(target: &Target, start: DMatrix<C64>, cfg: &SolverConfig, goal: f64) -> (DMatrix<C64>, f64, usize, f64, Stop) {
    const WINDOW: usize = 50;
    let pairs = target.generator_pairs();
    let mut u = start;
    let mut f = target.value(&u);
    let mut lambda = cfg.step_init;
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    let mut max_defect = unitarity_defect(&u);
    history.push(f);
    for it in 0..cfg.max_iters {
        if f.sqrt() <= goal {
            return (u, f, it, max_defect, Stop::Converged);
        }
        let r = nalgebra::DVector::from_vec(target.residuals(&u));
        let jac = target.jacobian(&u, &pairs);
        let grad = jac.tr_mul(&r);
        if grad.norm() <= cfg.grad_tol {
            return (u, f, it, max_defect, Stop::SmallGradient);
        }
        let normal = &jac * jac.transpose();
        let m = normal.nrows();
        let sys = normal + DMatrix::identity(m, m) * lambda;
        let step = sys.cholesky().map(|c| -(jac.tr_mul(&c.solve(&r))));
        let accepted = match step {
            Some(x) => {
                let cand = apply_step(&u, &pairs, x.as_slice());
                let fc = target.value(&cand);
                if fc < f {
                    max_defect = max_defect.max(unitarity_defect(&cand));
                    u = cand;
                    f = fc;
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        if accepted {
            lambda = (lambda / 3.0).max(1e-15);
        } else {
            lambda *= 4.0;
            if lambda > 1e10 {
                return (u, f, it + 1, max_defect, Stop::DampingExhausted);
            }
        }
        history.push(f);
        if history.len() > WINDOW {
            let old = history[history.len() - 1 - WINDOW];
            if f > old * (1.0 - 1e-6) {
                return (u, f, it + 1, max_defect, Stop::Stagnated);
            }
        }
    }
    let stop = if f.sqrt() <= goal { Stop::Converged } else { Stop::Budget };
    (u, f, cfg.max_iters, max_defect, stop)
}

/// Nudges a start point off the (often critical) permutation-like witness.
fn perturb(u: &DMatrix<C64>, seed: u64) -> DMatrix<C64> {
    let n = u.nrows();
    let g = haar_dmatrix(n, &mut stream_rng(seed, u64::MAX));
    let skew = (&g - g.adjoint()) * C64::new(0.05, 0.0);
    unitary_factor((DMatrix::identity(n, n) + skew) * u)
}

/// Multi-start search; restarts run in parallel batches and the lowest
/// index success wins, so the result is independent of the thread count.
fn multistart(target: &Target, warm: Option<DMatrix<C64>>, cfg: &SolverConfig, tol: &Tolerance) -> RestartOutcome {
    let n = target.d * target.s;
    let goal = tol.certificate_eps * 1e-3;
    let run = |restart: usize| -> RestartOutcome {
        let start = match (&warm, restart) {
            (Some(w), 0) => w.clone(),
            _ => haar_dmatrix(n, &mut stream_rng(cfg.seed, restart as u64)),
        };
        let (u, value, iterations, max_defect, stop) = descend(target, start, cfg, goal);
        RestartOutcome {
            restart,
            u,
            value,
            iterations,
            max_defect,
            stop,
        }
    };
    let batch = rayon::current_num_threads().max(1);
    let mut best: Option<RestartOutcome> = None;
    let mut next = 0;
    while next < cfg.restarts {
        let end = (next + batch).min(cfg.restarts);
        let outcomes: Vec<RestartOutcome> = (next..end).into_par_iter().map(run).collect();
        if let Some(hit) = outcomes.iter().position(|o| o.value.sqrt() <= tol.certificate_eps) {
            return outcomes.into_iter().nth(hit).expect("index in range");
        }
        for o in outcomes {
            if best.as_ref().is_none_or(|b| o.value < b.value) {
                best = Some(o);
            }
        }
        next = end;
    }
    best.expect("at least one restart")
}

fn solver_verdict(
    outcome: RestartOutcome,
    d: usize,
    s: usize,
    residual_of: impl Fn(&DMatrix<C64>) -> f64,
    tol: &Tolerance,
) -> MembershipVerdict {
    let u = unitary_factor(outcome.u);
    let residual = residual_of(&u);
    let defect = unitarity_defect(&u);
    let member = residual <= tol.certificate_eps && defect <= tol.validation_eps * (d * s) as f64;
    MembershipVerdict {
        status: if member { Status::Member } else { Status::Unknown },
        certificate: member.then(|| BlockUnitary::trusted(u, d, s, tol)),
        residual,
        rejection_reason: None,
        method: Method::Solver,
        restart: Some(outcome.restart),
        iterations: outcome.iterations,
        max_unitarity_defect: outcome.max_defect.max(defect),
    }
}

fn full_residual(u: &DMatrix<C64>, b: &BistochasticMatrix, s: usize) -> f64 {
    (phi_raw(u, b.d(), s) - b.matrix()).norm()
}

fn check_s(s: usize) -> Result<()> {
    if s < 1 {
        return Err(Error::Parameter("s must be >= 1".into()));
    }
    Ok(())
}

/// Numerical search only, with no screens or closed forms. `start`, when
/// given, is used as restart 0; otherwise every restart is a Haar draw.
pub fn numerical_search(
    b: &BistochasticMatrix,
    s: usize,
    cfg: &SolverConfig,
    start: Option<&BlockUnitary>,
) -> Result<MembershipVerdict> {
    check_s(s)?;
    cfg.validate()?;
    if let Some(st) = start {
        if st.d() != b.d() || st.s() != s {
            return Err(Error::Dimension(format!(
                "start point has shape ({}, {}), expected ({}, {s})",
                st.d(),
                st.s(),
                b.d()
            )));
        }
    }
    let tol = *b.tolerance();
    let target = Target {
        d: b.d(),
        s,
        rows: (0..b.d()).collect(),
        b: b.matrix(),
    };
    let outcome = multistart(&target, start.map(|u| u.dmatrix().clone()), cfg, &tol);
    Ok(solver_verdict(outcome, b.d(), s, |u| full_residual(u, b, s), &tol))
}

/// `λP_π + (1−λ)P_σ` with `λ ≤ ½`, when `b` lies on such an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub pi: Permutation,
    pub sigma: Permutation,
    pub lambda: f64,
}

/// Recognizes matrices on an edge of the Birkhoff polytope by walking the
/// alternating cycles of the support graph.
pub fn edge_of(b: &BistochasticMatrix) -> Option<Edge> {
    let d = b.d();
    let eps = b.tolerance().validation_eps;
    let m = b.matrix();
    let support: Vec<Vec<usize>> = (0..d).map(|i| (0..d).filter(|&j| m[(i, j)] > eps).collect()).collect();
    if support.iter().any(|s| s.is_empty() || s.len() > 2) {
        return None;
    }
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); d];
    for (i, s) in support.iter().enumerate() {
        for &j in s {
            col_rows[j].push(i);
        }
    }
    let mut pi = vec![usize::MAX; d];
    let mut sigma = vec![usize::MAX; d];
    let mut lambda: Option<f64> = None;
    for start in 0..d {
        if pi[start] != usize::MAX {
            continue;
        }
        if support[start].len() == 1 {
            pi[start] = support[start][0];
            sigma[start] = support[start][0];
            continue;
        }
        // orient the component so π takes the lighter edge of the start row
        let (c0, c1) = (support[start][0], support[start][1]);
        let (light, heavy) = if m[(start, c0)] <= m[(start, c1)] { (c0, c1) } else { (c1, c0) };
        let x = m[(start, light)];
        match lambda {
            None => lambda = Some(x),
            Some(l) if (l - x).abs() <= eps => {}
            Some(_) => return None,
        }
        let mut row = start;
        let (mut p_col, mut s_col) = (light, heavy);
        loop {
            pi[row] = p_col;
            sigma[row] = s_col;
            let next_rows = &col_rows[s_col];
            let next = *next_rows.iter().find(|&&r| r != row)?;
            if next == start {
                break;
            }
            if pi[next] != usize::MAX || support[next].len() != 2 {
                return None;
            }
            p_col = s_col;
            s_col = *support[next].iter().find(|&&c| c != p_col)?;
            row = next;
        }
    }
    let lambda = lambda.unwrap_or(0.0);
    let pi = Permutation::from_images(pi).ok()?;
    let sigma = Permutation::from_images(sigma).ok()?;
    let rebuilt = pi.matrix() * lambda + sigma.matrix() * (1.0 - lambda);
    if (rebuilt - m).abs().max() > d as f64 * eps {
        return None;
    }
    Some(Edge { pi, sigma, lambda })
}

/// True when `x` is within `eps` of some k/s.
fn on_lattice(x: f64, s: usize, eps: f64) -> bool {
    let sf = s as f64;
    (x - (x * sf).round() / sf).abs() <= eps
}

fn cross_product_unitary(b: &BistochasticMatrix) -> DMatrix<C64> {
    let rows = bracelet_witness_rows(&b.row(0), &b.row(1));
    let a = |j: usize| rows[(0, j)];
    let c = |j: usize| rows[(1, j)];
    let mut u = DMatrix::<C64>::zeros(3, 3);
    for j in 0..3 {
        u[(0, j)] = a(j);
        u[(1, j)] = c(j);
    }
    let cross = [
        a(1) * c(2) - a(2) * c(1),
        a(2) * c(0) - a(0) * c(2),
        a(0) * c(1) - a(1) * c(0),
    ];
    for j in 0..3 {
        u[(2, j)] = cross[j].conj();
    }
    u
}

fn embed_small(u: DMatrix<C64>, d: usize, s: usize, tol: &Tolerance) -> Result<BlockUnitary> {
    tensor_embed(&BlockUnitary::trusted(u, d, 1, tol), s)
}

/// Full pipeline: closed forms, analytic screens, constructions, then the
/// numerical search (warm-started from `start` when given).
pub fn certify_membership_from(
    b: &BistochasticMatrix,
    s: usize,
    cfg: &SolverConfig,
    start: Option<&BlockUnitary>,
) -> Result<MembershipVerdict> {
    check_s(s)?;
    cfg.validate()?;
    let tol = *b.tolerance();
    let d = b.d();
    let accept = |u: BlockUnitary, method: Method| -> Option<MembershipVerdict> {
        let residual = full_residual(u.dmatrix(), b, s);
        (residual <= tol.certificate_eps).then(|| MembershipVerdict::constructed(u, residual, method))
    };

    if d == 1 {
        let u = BlockUnitary::trusted(DMatrix::identity(s, s), 1, s, &tol);
        return Ok(MembershipVerdict::constructed(u, 0.0, Method::Permutation));
    }
    if let Some(p) = Permutation::from_matrix(b.matrix(), tol.validation_eps) {
        let u = embed_small(ComplexMatrix::from_real(&p.matrix()).into_dmatrix(), d, s, &tol)?;
        if let Some(v) = accept(u, Method::Permutation) {
            return Ok(v);
        }
    }
    if d == 2 {
        let a = b.get(0, 0).clamp(0.0, 1.0);
        let (x, y) = (a.sqrt(), (1.0 - a).sqrt());
        let u = DMatrix::from_row_slice(2, 2, &[x, y, -y, x]).map(|v| C64::new(v, 0.0));
        if let Some(v) = accept(embed_small(u, 2, s, &tol)?, Method::TwoByTwo) {
            return Ok(v);
        }
    }
    if let Some(edge) = edge_of(b) {
        let long_cycle = edge.pi.inverse().compose(&edge.sigma).cycle_lengths().iter().any(|&l| l >= 3);
        if long_cycle && !on_lattice(edge.lambda, s, tol.validation_eps) {
            return Ok(MembershipVerdict::rejected(RejectionReason::Segment));
        }
    }
    for (_, pair) in line_pairs(b) {
        if let PairScreen::Rejected(reason) = screen_pair(&pair, s, &tol) {
            return Ok(MembershipVerdict::rejected(reason));
        }
    }
    if d == 3 && is_bracelet_matrix(b, &tol).satisfied {
        let u = embed_small(cross_product_unitary(b), 3, s, &tol)?;
        if let Some(v) = accept(u, Method::CrossProduct) {
            return Ok(v);
        }
    }
    let rational = birkhoff_decompose(b).ok().and_then(|dec| {
        let counts = round_counts(&dec, s);
        mixture_witness(d, &counts, &tol).ok()
    });
    if let Some(u) = &rational {
        if let Some(v) = accept(u.clone(), Method::RationalMixture) {
            return Ok(v);
        }
    }
    let warm = match start {
        Some(st) => {
            if st.d() != d || st.s() != s {
                return Err(Error::Dimension(format!(
                    "start point has shape ({}, {}), expected ({d}, {s})",
                    st.d(),
                    st.s()
                )));
            }
            Some(st.dmatrix().clone())
        }
        None => rational.map(|u| perturb(u.dmatrix(), cfg.seed)),
    };
    let target = Target {
        d,
        s,
        rows: (0..d).collect(),
        b: b.matrix(),
    };
    let outcome = multistart(&target, warm, cfg, &tol);
    Ok(solver_verdict(outcome, d, s, |u| full_residual(u, b, s), &tol))
}

/// Decides whether `b` is the image of a ds×ds unitary under φ_{d,s}.
///
/// `RejectedAnalytic` only comes from exact screens; a search that fails to
/// converge yields `Unknown`.
pub fn certify_membership(b: &BistochasticMatrix, s: usize, cfg: &SolverConfig) -> Result<MembershipVerdict> {
    certify_membership_from(b, s, cfg, None)
}

fn pair_residual(u: &DMatrix<C64>, pair: &ProbabilityVectorPair, s: usize) -> f64 {
    let p = phi_raw(u, pair.d(), s);
    let mut sum = 0.0;
    for j in 0..pair.d() {
        sum += (p[(0, j)] - pair.alpha()[j]).powi(2) + (p[(1, j)] - pair.beta()[j]).powi(2);
    }
    sum.sqrt()
}

/// Feasibility of the order-s bracelet condition for one pair, certified by
/// a ds×ds unitary whose first two block rows realize `(α, β)`.
pub fn pair_feasibility(
    pair: &ProbabilityVectorPair,
    s: usize,
    cfg: &SolverConfig,
    tol: &Tolerance,
) -> Result<MembershipVerdict> {
    check_s(s)?;
    cfg.validate()?;
    let d = pair.d();
    let (alpha, beta) = (pair.alpha(), pair.beta());
    let rows = match screen_pair(pair, s, tol) {
        PairScreen::Rejected(reason) => return Ok(MembershipVerdict::rejected(reason)),
        PairScreen::Certified(PairConstruction::TwoDim) => {
            let (x, y) = (alpha[0].sqrt(), alpha[1].sqrt());
            let small = DMatrix::from_row_slice(2, 2, &[x, y, y, -x]).map(|v| C64::new(v, 0.0));
            Some(small.kronecker(&DMatrix::<C64>::identity(s, s)))
        }
        PairScreen::Certified(PairConstruction::Bracelet) => {
            let small = complete_to_unitary(&bracelet_witness_rows(alpha, beta));
            Some(small.kronecker(&DMatrix::<C64>::identity(s, s)))
        }
        PairScreen::Certified(PairConstruction::Slice) => single_overlap(pair, tol.validation_eps)
            .and_then(|ov| slice_witness_rows(pair, s, ov, tol.validation_eps))
            .map(|r| complete_to_unitary(&r)),
        PairScreen::Undecided => None,
    };
    if let Some(u) = rows {
        let residual = pair_residual(&u, pair, s);
        if residual <= tol.certificate_eps {
            let mut v = MembershipVerdict::constructed(BlockUnitary::trusted(u, d, s, tol), residual, Method::PairConstruction);
            v.max_unitarity_defect = unitarity_defect(v.certificate.as_ref().unwrap().dmatrix());
            return Ok(v);
        }
    }
    let mut goal = DMatrix::zeros(d, d);
    for j in 0..d {
        goal[(0, j)] = alpha[j];
        goal[(1, j)] = beta[j];
    }
    let target = Target {
        d,
        s,
        rows: vec![0, 1],
        b: &goal,
    };
    let outcome = multistart(&target, None, cfg, tol);
    Ok(solver_verdict(outcome, d, s, |u| pair_residual(u, pair, s), tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmaps::{direct_sum_mix, phi};
    use crate::fixtures;
    use crate::randhaar::haar_block_unitary;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn bist(m: DMatrix<f64>) -> BistochasticMatrix {
        BistochasticMatrix::new(m, &tol()).unwrap()
    }

    fn assert_certified(v: &MembershipVerdict, b: &BistochasticMatrix) {
        assert_eq!(v.status, Status::Member, "{v:?}");
        let cert = v.certificate.as_ref().expect("member verdicts carry a certificate");
        assert!(cert.unitarity_defect() <= 1e-10 * cert.n() as f64);
        assert!(b.distance(phi(cert).matrix()) <= tol().certificate_eps);
    }

    #[test]
    fn objective_vanishes_at_a_preimage() {
        let u = fixtures::derangement_6();
        let (f, g) = objective(&u, &phi(&u)).unwrap();
        assert_eq!(f, 0.0);
        assert!(g.as_dmatrix().iter().all(|z| z.norm() == 0.0));
        let wrong = BistochasticMatrix::flat(2, &tol()).unwrap();
        assert!(matches!(objective(&u, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..50 {
            let u = haar_block_unitary(3, 2, &mut rng).unwrap();
            let b = phi(&haar_block_unitary(3, 2, &mut rng).unwrap());
            let (_, g) = objective(&u, &b).unwrap();
            let dir = haar_dmatrix(6, &mut rng);
            let h = 1e-6;
            let at = |t: f64| {
                let m = u.dmatrix() + &dir * C64::new(t, 0.0);
                (phi_raw(&m, 3, 2) - b.matrix()).norm_squared()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let analytic: f64 = 2.0 * g.as_dmatrix().iter().zip(dir.iter()).map(|(g, d)| (g.conj() * d).re).sum::<f64>();
            assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn objective_under_rank_one_perturbation() {
        let u = fixtures::derangement_6();
        let mut m = phi(&u).matrix().clone();
        let e = 1e-3;
        m[(0, 0)] += e;
        m[(1, 1)] += e;
        m[(0, 1)] -= e;
        m[(1, 0)] -= e;
        let b = bist(m);
        let (f, _) = objective(&u, &b).unwrap();
        assert!((f - 4e-6).abs() < 1e-18);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = stream_rng(8, 0);
        let u = haar_dmatrix(6, &mut rng);
        let b = fixtures::blended_point();
        let target = Target {
            d: 3,
            s: 2,
            rows: vec![0, 2],
            b: b.matrix(),
        };
        let pairs = target.generator_pairs();
        let jac = target.jacobian(&u, &pairs);
        let h = 1e-6;
        for k in 0..2 * pairs.len() {
            let mut x = vec![0.0; 2 * pairs.len()];
            x[k] = h;
            let plus = target.residuals(&apply_step(&u, &pairs, &x));
            x[k] = -h;
            let minus = target.residuals(&apply_step(&u, &pairs, &x));
            for r in 0..plus.len() {
                let fd = (plus[r] - minus[r]) / (2.0 * h);
                assert!((fd - jac[(r, k)]).abs() < 1e-6, "k={k} r={r}: {fd} vs {}", jac[(r, k)]);
            }
        }
    }

    #[test]
    fn example_matrix_at_both_orders() {
        let b = fixtures::half_derangement_3();
        let cfg = SolverConfig::default();
        let v2 = certify_membership(&b, 2, &cfg).unwrap();
        assert_certified(&v2, &b);
        let v1 = certify_membership(&b, 1, &cfg).unwrap();
        assert_eq!(v1.status, Status::RejectedAnalytic);
        assert!(v1.certificate.is_none());
        assert!(v1.rejection_reason.is_some());
    }

    #[test]
    fn closed_forms() {
        let cfg = SolverConfig::default();
        let b = bist(DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, 0.3]));
        for s in [1, 3] {
            let v = certify_membership(&b, s, &cfg).unwrap();
            assert_eq!(v.method, Method::TwoByTwo);
            assert_certified(&v, &b);
        }
        let p = Permutation::from_cycles("(14)(23)", 4).unwrap();
        let b = bist(p.matrix());
        let v = certify_membership(&b, 2, &cfg).unwrap();
        assert_eq!(v.method, Method::Permutation);
        assert_certified(&v, &b);
    }

    #[test]
    fn bracelet_matrices_get_cross_product_preimages() {
        let cfg = SolverConfig::default();
        for b in [fixtures::hypocycloid_point(), BistochasticMatrix::flat(3, &tol()).unwrap()] {
            for s in [1, 2] {
                let v = certify_membership(&b, s, &cfg).unwrap();
                assert_eq!(v.method, Method::CrossProduct);
                assert_certified(&v, &b);
            }
        }
    }

    #[test]
    fn edge_detection() {
        let b = bist(fixtures::circulant3(0.3, 0.7, 0.0));
        let e = edge_of(&b).unwrap();
        assert!((e.lambda - 0.3).abs() < 1e-15);
        assert!(e.pi.is_identity());
        assert_eq!(e.sigma.to_string(), "(123)");
        // two independent cycles with equal weights
        let p = Permutation::from_cycles("(12)(345)", 5).unwrap();
        let b = bist(DMatrix::identity(5, 5) * 0.4 + p.matrix() * 0.6);
        let e = edge_of(&b).unwrap();
        assert!((e.lambda - 0.4).abs() < 1e-15);
        assert_eq!(e.pi.inverse().compose(&e.sigma), p);
        // differing weights on the two cycles: not an edge
        let mut m = DMatrix::identity(5, 5) * 0.4 + p.matrix() * 0.6;
        m[(0, 0)] = 0.5;
        m[(1, 1)] = 0.5;
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        assert!(edge_of(&bist(m)).is_none());
        assert!(edge_of(&BistochasticMatrix::flat(3, &tol()).unwrap()).is_none());
    }

    #[test]
    fn segment_lattice_on_the_cyclic_edge() {
        let cfg = SolverConfig::default();
        for k in 0..=10 {
            let lam = k as f64 / 10.0;
            let b = bist(fixtures::circulant3(1.0 - lam, lam, 0.0));
            let v = certify_membership(&b, 2, &cfg).unwrap();
            if k % 5 == 0 {
                assert_certified(&v, &b);
            } else {
                assert_eq!(v.status, Status::RejectedAnalytic, "λ = {lam}");
                assert_eq!(v.rejection_reason, Some(RejectionReason::Segment));
            }
        }
    }

    #[test]
    fn blended_point_with_warm_start() {
        let start = direct_sum_mix(&fixtures::derangement_6(), &fixtures::householder_3()).unwrap();
        let b = fixtures::blended_point();
        let v = certify_membership_from(&b, 3, &SolverConfig::default(), Some(&start)).unwrap();
        assert_eq!(v.method, Method::Solver);
        assert_certified(&v, &b);
        assert!(v.residual <= 1e-8);
    }

    #[test]
    fn solver_recovers_random_images() {
        let mut rng = stream_rng(21, 0);
        let cfg = SolverConfig {
            restarts: 4,
            ..SolverConfig::default()
        };
        for (d, s) in [(3, 1), (3, 2), (4, 1), (4, 2)] {
            let b = phi(&haar_block_unitary(d, s, &mut rng).unwrap());
            let v = numerical_search(&b, s, &cfg, None).unwrap();
            assert_certified(&v, &b);
            assert!(v.max_unitarity_defect <= 1e-12, "{}", v.max_unitarity_defect);
        }
    }

    #[test]
    fn solver_never_certifies_outside_points() {
        let b = fixtures::half_derangement_3();
        let cfg = SolverConfig {
            restarts: 3,
            max_iters: 300,
            ..SolverConfig::default()
        };
        let v = numerical_search(&b, 1, &cfg, None).unwrap();
        assert_eq!(v.status, Status::Unknown);
        assert!(v.certificate.is_none());
        assert!(v.residual > 1e-3);
    }

    #[test]
    fn deterministic_under_thread_count() {
        let b = fixtures::hypocycloid_point();
        let cfg = SolverConfig {
            restarts: 6,
            seed: 17,
            ..SolverConfig::default()
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| numerical_search(&b, 2, &cfg, None).unwrap());
        let c = many.install(|| numerical_search(&b, 2, &cfg, None).unwrap());
        assert_eq!(a.residual.to_bits(), c.residual.to_bits());
        assert_eq!(a.restart, c.restart);
    }

    #[test]
    fn pair_examples() {
        let cfg = SolverConfig::default();
        let t = tol();
        let p = ProbabilityVectorPair::from_slices(&[0.5, 0.5, 0.0], &[0.5, 0.0, 0.5], &t).unwrap();
        let v = pair_feasibility(&p, 2, &cfg, &t).unwrap();
        assert_eq!(v.status, Status::Member);
        let cert = v.certificate.unwrap();
        assert!(pair_residual(cert.dmatrix(), &p, 2) <= 1e-8);
        assert!(cert.unitarity_defect() < 1e-12);

        let p = ProbabilityVectorPair::from_slices(&[0.6, 0.4, 0.0], &[0.6, 0.0, 0.4], &t).unwrap();
        let v = pair_feasibility(&p, 2, &cfg, &t).unwrap();
        assert_eq!(v.status, Status::RejectedAnalytic);
        assert_eq!(v.rejection_reason, Some(RejectionReason::Slice));

        let p = ProbabilityVectorPair::from_slices(&[0.3, 0.7], &[0.7, 0.3], &t).unwrap();
        let v = pair_feasibility(&p, 2, &cfg, &t).unwrap();
        assert_eq!(v.status, Status::Member);

        let p = ProbabilityVectorPair::from_slices(&[1.0], &[1.0], &t).unwrap();
        let v = pair_feasibility(&p, 3, &cfg, &t).unwrap();
        assert_eq!(v.rejection_reason, Some(RejectionReason::EmptyGrid));
    }

    #[test]
    fn pair_solver_handles_undecided_pairs() {
        // bracelet fails, yet no screen rejects at s = 2
        let t = tol();
        let p = ProbabilityVectorPair::from_slices(&[0.02, 0.49, 0.49], &[0.49, 0.02, 0.49], &t).unwrap();
        assert_eq!(screen_pair(&p, 2, &t), PairScreen::Undecided);
        let v = pair_feasibility(&p, 2, &SolverConfig::default(), &t).unwrap();
        assert_eq!(v.status, Status::Member, "{v:?}");
        assert!(pair_residual(v.certificate.unwrap().dmatrix(), &p, 2) <= 1e-8);
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            restarts: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            step_init: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let b = fixtures::hypocycloid_point();
        assert!(certify_membership(&b, 0, &SolverConfig::default()).is_err());
    }
}
