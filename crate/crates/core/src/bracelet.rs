//! Analytic membership screens: bracelet conditions, the order-s necessary
//! condition, the rank/ceiling test on single-overlap supports, and the
//! rational lattice on edges of the Birkhoff polytope.
//!
//! Every screen here is exact up to the tolerance policy. A pair that no
//! screen decides is left to the numerical search in [`crate::membership`].

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, LineKind, Result};
use crate::matcore::{BistochasticMatrix, ProbabilityVector, Tolerance, C64};
use crate::membership::{pair_feasibility, SolverConfig, Status};
use crate::perm::Permutation;

/// Two probability vectors of equal length, e.g. two rows of a bistochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVectorPair {
    alpha: ProbabilityVector,
    beta: ProbabilityVector,
}

impl ProbabilityVectorPair {
    pub fn new(alpha: ProbabilityVector, beta: ProbabilityVector) -> Result<Self> {
        if alpha.d() != beta.d() {
            return Err(Error::Dimension(format!(
                "pair dimensions differ: {} vs {}",
                alpha.d(),
                beta.d()
            )));
        }
        Ok(ProbabilityVectorPair { alpha, beta })
    }

    pub fn from_slices(alpha: &[f64], beta: &[f64], tol: &Tolerance) -> Result<Self> {
        Self::new(
            ProbabilityVector::new(alpha.to_vec(), tol)?,
            ProbabilityVector::new(beta.to_vec(), tol)?,
        )
    }

    pub fn d(&self) -> usize {
        self.alpha.d()
    }

    pub fn alpha(&self) -> &[f64] {
        self.alpha.weights()
    }

    pub fn beta(&self) -> &[f64] {
        self.beta.weights()
    }

    pub fn swapped(&self) -> Self {
        ProbabilityVectorPair {
            alpha: self.beta.clone(),
            beta: self.alpha.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BraceletReport {
    pub satisfied: bool,
    pub worst_index: usize,
    /// `min_i Σ_{j≠i} √(α_jβ_j) − √(α_iβ_i)`; negative means violated.
    pub margin: f64,
}

fn overlap_terms(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    alpha.iter().zip(beta).map(|(a, b)| (a * b).sqrt()).collect()
}

/// The classical bracelet condition `2·max_j √(α_jβ_j) ≤ Σ_j √(α_jβ_j)`.
pub fn bracelet_pair(pair: &ProbabilityVectorPair, tol: &Tolerance) -> BraceletReport {
    let terms = overlap_terms(pair.alpha(), pair.beta());
    let total: f64 = terms.iter().sum();
    let (worst_index, margin) = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (i, total - 2.0 * t))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    BraceletReport {
        satisfied: margin >= -tol.validation_eps,
        worst_index,
        margin,
    }
}

/// Which rows or columns a pair report refers to (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LinePair {
    pub line: LineKindTag,
    pub first: usize,
    pub second: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKindTag {
    Row,
    Column,
}

impl From<LineKind> for LineKindTag {
    fn from(k: LineKind) -> Self {
        match k {
            LineKind::Row => LineKindTag::Row,
            LineKind::Column => LineKindTag::Column,
        }
    }
}

/// All unordered row pairs followed by all unordered column pairs.
pub fn line_pairs(b: &BistochasticMatrix) -> Vec<(LinePair, ProbabilityVectorPair)> {
    let d = b.d();
    let tol = b.tolerance();
    let mut out = Vec::with_capacity(d * (d - 1));
    for (kind, get) in [
        (LineKindTag::Row, BistochasticMatrix::row as fn(&BistochasticMatrix, usize) -> Vec<f64>),
        (LineKindTag::Column, BistochasticMatrix::col),
    ] {
        for first in 0..d {
            for second in first + 1..d {
                let pair = ProbabilityVectorPair::from_slices(&get(b, first), &get(b, second), tol)
                    .expect("lines of a validated bistochastic matrix are probability vectors");
                out.push((LinePair { line: kind, first, second }, pair));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BraceletPairEntry {
    #[serde(flatten)]
    pub lines: LinePair,
    #[serde(flatten)]
    pub report: BraceletReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BraceletMatrixReport {
    pub satisfied: bool,
    pub pairs: Vec<BraceletPairEntry>,
}

/// Checks the bracelet condition on every pair of rows and every pair of columns.
pub fn is_bracelet_matrix(b: &BistochasticMatrix, tol: &Tolerance) -> BraceletMatrixReport {
    let pairs: Vec<BraceletPairEntry> = line_pairs(b)
        .into_iter()
        .map(|(lines, pair)| BraceletPairEntry {
            lines,
            report: bracelet_pair(&pair, tol),
        })
        .collect();
    BraceletMatrixReport {
        satisfied: pairs.iter().all(|p| p.report.satisfied),
        pairs,
    }
}

/// Exact unistochasticity test for 3×3 bistochastic matrices.
pub fn unistochastic3(b: &BistochasticMatrix) -> Result<bool> {
    if b.d() != 3 {
        return Err(Error::Dimension(format!("expected a 3x3 matrix, got d = {}", b.d())));
    }
    Ok(is_bracelet_matrix(b, b.tolerance()).satisfied)
}

fn necessary_one_way(alpha: &[f64], beta: &[f64], s: usize, eps: f64) -> bool {
    let sf = s as f64;
    let terms = overlap_terms(alpha, beta);
    let total: f64 = terms.iter().sum();
    for i in 0..alpha.len() {
        let excess = sf * beta[i] - (sf - 1.0);
        if excess < 0.0 {
            continue;
        }
        let lhs = alpha[i].sqrt() * excess.sqrt();
        let rhs = sf * (total - terms[i]);
        if lhs - rhs > eps {
            return false;
        }
    }
    true
}

/// Order-s necessary condition; `false` is a certified rejection.
///
/// Applied in both orientations of the pair, since the order-s condition is
/// symmetric in (α, β).
pub fn generalized_necessary(pair: &ProbabilityVectorPair, s: usize, tol: &Tolerance) -> bool {
    let eps = tol.validation_eps;
    necessary_one_way(pair.alpha(), pair.beta(), s, eps) && necessary_one_way(pair.beta(), pair.alpha(), s, eps)
}

/// `⌈x·s⌉`, after snapping x to k/s when it lies within `eps` of it.
pub(crate) fn snapped_ceil(x: f64, s: usize, eps: f64) -> i64 {
    let sf = s as f64;
    let k = (x * sf).round();
    if (x - k / sf).abs() <= eps {
        k as i64
    } else {
        (x * sf).ceil() as i64
    }
}

/// Membership of `((α₁, 1−α₁, 0), (β₁, 0, 1−β₁))` in the order-s bracelet set:
/// `⌈α₁s⌉ + ⌈β₁s⌉ ≤ s`.
pub fn slice_membership(alpha1: f64, beta1: f64, s: usize, tol: &Tolerance) -> bool {
    let eps = tol.validation_eps;
    snapped_ceil(alpha1, s, eps) + snapped_ceil(beta1, s, eps) <= s as i64
}

fn support(v: &[f64], eps: f64) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, x)| **x > eps).map(|(i, _)| i).collect()
}

/// Zero pattern of a pair whose supports share exactly one index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SingleOverlap {
    pub common: usize,
    /// The other support index of α and of β, when each support has size two.
    pub slice: Option<(usize, usize)>,
}

pub(crate) fn single_overlap(pair: &ProbabilityVectorPair, eps: f64) -> Option<SingleOverlap> {
    let sa = support(pair.alpha(), eps);
    let sb = support(pair.beta(), eps);
    let common: Vec<usize> = sa.iter().copied().filter(|i| sb.contains(i)).collect();
    if common.len() != 1 {
        return None;
    }
    let c = common[0];
    let slice = match (sa.len(), sb.len()) {
        (2, 2) => {
            let a2 = *sa.iter().find(|&&i| i != c).expect("two-element support");
            let b2 = *sb.iter().find(|&&i| i != c).expect("two-element support");
            Some((a2, b2))
        }
        _ => None,
    };
    Some(SingleOverlap { common: c, slice })
}

/// Rank test for supports sharing one index `c`: the blocks there must
/// satisfy `A_c B_c* = 0`, forcing `⌈α_c s⌉ + ⌈β_c s⌉ ≤ s`.
///
/// `None` when the supports do not share exactly one index. When both
/// supports have size two this is the exact slice characterization.
pub fn overlap_rank_test(pair: &ProbabilityVectorPair, s: usize, tol: &Tolerance) -> Option<bool> {
    let ov = single_overlap(pair, tol.validation_eps)?;
    let c = ov.common;
    Some(slice_membership(pair.alpha()[c], pair.beta()[c], s, tol))
}

/// Grid scan of the slice set E(s) over `[0,1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ESetScan {
    pub s: usize,
    pub grid: usize,
    /// `(alpha1, beta1, in_set)` in row-major order of (alpha index, beta index).
    pub points: Vec<(f64, f64, bool)>,
    /// Every point with `α+β ≤ 1 − 2/s` is in the set.
    pub inner_bound_holds: bool,
    /// No point with `α+β > 1` is in the set.
    pub outer_bound_holds: bool,
}

impl ESetScan {
    pub fn count_in(&self) -> usize {
        self.points.iter().filter(|p| p.2).count()
    }
}

pub fn emit_e_set(s: usize, grid: usize, tol: &Tolerance) -> Result<ESetScan> {
    if s < 1 {
        return Err(Error::Parameter("s must be >= 1".into()));
    }
    if grid < 2 {
        return Err(Error::Parameter("grid must be >= 2".into()));
    }
    let step = (grid - 1) as f64;
    let eps = tol.validation_eps;
    let inner = 1.0 - 2.0 / s as f64;
    let mut points = Vec::with_capacity(grid * grid);
    let mut inner_ok = true;
    let mut outer_ok = true;
    for i in 0..grid {
        let a = i as f64 / step;
        for j in 0..grid {
            let b = j as f64 / step;
            let inside = slice_membership(a, b, s, tol);
            if a + b <= inner + eps && !inside {
                inner_ok = false;
            }
            if inside && a + b > 1.0 + eps {
                outer_ok = false;
            }
            points.push((a, b, inside));
        }
    }
    Ok(ESetScan {
        s,
        grid,
        points,
        inner_bound_holds: inner_ok,
        outer_bound_holds: outer_ok,
    })
}

/// Admissible weights λ on the segment `(1−λ)P_π + λP_σ` at order s.
///
/// Requires π⁻¹σ to contain a cycle of length at least 3.
pub fn segment_lattice(d: usize, s: usize, pi: &Permutation, sigma: &Permutation) -> Result<Vec<f64>> {
    if pi.d() != d || sigma.d() != d {
        return Err(Error::Dimension(format!("permutations must act on {d} points")));
    }
    if s < 1 {
        return Err(Error::Parameter("s must be >= 1".into()));
    }
    let rel = pi.inverse().compose(sigma);
    if rel.cycle_lengths().iter().all(|&l| l < 3) {
        return Err(Error::NotApplicable(format!(
            "π⁻¹σ = {rel} has no cycle of length >= 3"
        )));
    }
    Ok((0..=s).map(|k| k as f64 / s as f64).collect())
}

/// Why an analytic screen rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    /// d = 1: no pair of blocks rows can be block-orthogonal.
    EmptyGrid,
    /// Classical bracelet condition (s = 1).
    Bracelet,
    /// Order-s necessary inequality.
    NecessaryCondition,
    /// Ceiling test on supports sharing exactly one index.
    Slice,
    /// Weight off the rational lattice of an edge.
    Segment,
    /// d = 2 pairs must be of the form ((p, 1−p), (1−p, p)).
    TwoDimRigidity,
}

/// How an analytic screen accepted a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairConstruction {
    /// d = 2 and β is the reversal of α.
    TwoDim,
    /// Classical bracelet condition holds; phases close the polygon.
    Bracelet,
    /// Two-column supports sharing one index, ceiling formula satisfied.
    Slice,
}

impl PairConstruction {
    /// Same spelling as the serialized form.
    pub fn tag(self) -> &'static str {
        match self {
            PairConstruction::TwoDim => "two_dim",
            PairConstruction::Bracelet => "bracelet",
            PairConstruction::Slice => "slice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairScreen {
    Rejected(RejectionReason),
    Certified(PairConstruction),
    Undecided,
}

/// Runs every analytic screen on a pair at order s.
pub fn screen_pair(pair: &ProbabilityVectorPair, s: usize, tol: &Tolerance) -> PairScreen {
    let d = pair.d();
    if d == 1 {
        return PairScreen::Rejected(RejectionReason::EmptyGrid);
    }
    if d == 2 {
        return if (pair.beta()[0] - pair.alpha()[1]).abs() <= tol.certificate_eps {
            PairScreen::Certified(PairConstruction::TwoDim)
        } else {
            PairScreen::Rejected(RejectionReason::TwoDimRigidity)
        };
    }
    if let Some(false) = overlap_rank_test(pair, s, tol) {
        return PairScreen::Rejected(RejectionReason::Slice);
    }
    if !generalized_necessary(pair, s, tol) {
        return PairScreen::Rejected(if s == 1 {
            RejectionReason::Bracelet
        } else {
            RejectionReason::NecessaryCondition
        });
    }
    if bracelet_pair(pair, tol).satisfied {
        return PairScreen::Certified(PairConstruction::Bracelet);
    }
    if let Some(SingleOverlap { slice: Some(_), .. }) = single_overlap(pair, tol.validation_eps) {
        // the rank test above already passed, and it is exact on this pattern
        return PairScreen::Certified(PairConstruction::Slice);
    }
    PairScreen::Undecided
}

/// Two orthonormal rows `a, b ∈ C^d` with `|a_j|² = α_j`, `|b_j|² = β_j`,
/// for a pair satisfying the classical bracelet condition.
///
/// Phases are chosen so the side lengths `√(α_jβ_j)` close a polygon: the
/// longest side against two collinear chains built greedily from the rest.
pub(crate) fn bracelet_witness_rows(alpha: &[f64], beta: &[f64]) -> DMatrix<C64> {
    let d = alpha.len();
    let lens = overlap_terms(alpha, beta);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| lens[y].total_cmp(&lens[x]).then(x.cmp(&y)));
    let longest = order[0];
    let (mut left, mut right) = (Vec::new(), Vec::new());
    let (mut p, mut q) = (0.0, 0.0);
    for &j in &order[1..] {
        if p <= q {
            left.push(j);
            p += lens[j];
        } else {
            right.push(j);
            q += lens[j];
        }
    }
    let l = lens[longest];
    // triangle with sides l (along +x), p and q closing it: l + p·e^{iθp} + q·e^{iθq} = 0
    let mut phases = vec![0.0f64; d];
    if l > 0.0 {
        let cos_at = |opp: f64, s1: f64, s2: f64| -> f64 {
            if s1 <= 0.0 || s2 <= 0.0 {
                1.0
            } else {
                ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0)
            }
        };
        // interior angle between sides l and p (opposite q), and between l and q
        let angle_lp = cos_at(q, l, p).acos();
        let angle_lq = cos_at(p, l, q).acos();
        let theta_p = std::f64::consts::PI - angle_lp;
        let theta_q = -(std::f64::consts::PI - angle_lq);
        for &j in &left {
            phases[j] = theta_p;
        }
        for &j in &right {
            phases[j] = theta_q;
        }
    }
    let mut rows = DMatrix::<C64>::zeros(2, d);
    for j in 0..d {
        rows[(0, j)] = C64::from_polar(alpha[j].sqrt(), phases[j]);
        rows[(1, j)] = C64::new(beta[j].sqrt(), 0.0);
    }
    rows
}

/// Block rows `[A_1 … A_d; B_1 … B_d]` (2s × ds) for the single-overlap
/// slice pattern, built from diagonal blocks with disjoint supports at the
/// shared index.
pub(crate) fn slice_witness_rows(
    pair: &ProbabilityVectorPair,
    s: usize,
    ov: SingleOverlap,
    eps: f64,
) -> Option<DMatrix<C64>> {
    let (a_other, b_other) = ov.slice?;
    let c = ov.common;
    let d = pair.d();
    let diag_profile = |x: f64| -> Vec<f64> {
        // s values in [0, 1] summing to x·s: ones, then the fractional part
        let k = snapped_ceil(x, s, eps) as usize;
        let total = x * s as f64;
        let full = total.floor().min(k as f64) as usize;
        let mut v = vec![0.0; s];
        for e in v.iter_mut().take(full) {
            *e = 1.0;
        }
        if k > full {
            v[full] = (total - full as f64).clamp(0.0, 1.0);
        }
        v
    };
    let a = diag_profile(pair.alpha()[c]);
    let b = diag_profile(pair.beta()[c]);
    // B_c occupies the last positions so the two supports are disjoint
    let b_rev: Vec<f64> = b.iter().rev().copied().collect();
    if a.iter().zip(&b_rev).any(|(x, y)| *x > 0.0 && *y > 0.0) {
        return None;
    }
    let mut rows = DMatrix::<C64>::zeros(2 * s, d * s);
    for k in 0..s {
        rows[(k, c * s + k)] = C64::new(a[k].sqrt(), 0.0);
        rows[(k, a_other * s + k)] = C64::new((1.0 - a[k]).max(0.0).sqrt(), 0.0);
        rows[(s + k, c * s + k)] = C64::new(b_rev[k].sqrt(), 0.0);
        rows[(s + k, b_other * s + k)] = C64::new((1.0 - b_rev[k]).max(0.0).sqrt(), 0.0);
    }
    Some(rows)
}

/// Three-valued verdict on membership in the order-s bracelet set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizedPairEntry {
    #[serde(flatten)]
    pub lines: LinePair,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection: Option<RejectionReason>,
    /// How a "yes" was certified: an analytic construction or the solver.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified_by: Option<String>,
    /// Best solver residual when the solver was consulted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizedBraceletReport {
    pub s: usize,
    pub verdict: Verdict,
    pub pairs: Vec<GeneralizedPairEntry>,
}

/// Decides (yes / no / unknown) whether every row pair and column pair of
/// `b` satisfies the order-s bracelet condition.
///
/// Analytic screens give certified "no" and constructive "yes"; pairs no
/// screen decides go to [`pair_feasibility`] under the given budget.
pub fn is_generalized_bracelet_matrix(
    b: &BistochasticMatrix,
    s: usize,
    cfg: &SolverConfig,
) -> Result<GeneralizedBraceletReport> {
    if s < 1 {
        return Err(Error::Parameter("s must be >= 1".into()));
    }
    let tol = *b.tolerance();
    let mut pairs = Vec::new();
    for (lines, pair) in line_pairs(b) {
        let entry = match screen_pair(&pair, s, &tol) {
            PairScreen::Rejected(reason) => GeneralizedPairEntry {
                lines,
                verdict: Verdict::No,
                rejection: Some(reason),
                certified_by: None,
                residual: None,
            },
            PairScreen::Certified(how) => GeneralizedPairEntry {
                lines,
                verdict: Verdict::Yes,
                rejection: None,
                certified_by: Some(how.tag().to_string()),
                residual: None,
            },
            PairScreen::Undecided => {
                let v = pair_feasibility(&pair, s, cfg, &tol)?;
                GeneralizedPairEntry {
                    lines,
                    verdict: match v.status {
                        Status::Member => Verdict::Yes,
                        Status::RejectedAnalytic => Verdict::No,
                        Status::Unknown => Verdict::Unknown,
                    },
                    rejection: v.rejection_reason,
                    certified_by: (v.status == Status::Member).then(|| "solver".to_string()),
                    residual: Some(v.residual),
                }
            }
        };
        pairs.push(entry);
    }
    let verdict = if pairs.iter().any(|p| p.verdict == Verdict::No) {
        Verdict::No
    } else if pairs.iter().all(|p| p.verdict == Verdict::Yes) {
        Verdict::Yes
    } else {
        Verdict::Unknown
    };
    Ok(GeneralizedBraceletReport { s, verdict, pairs })
}
