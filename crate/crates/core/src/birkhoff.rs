//! Birkhoff–von Neumann decomposition and rational approximation of
//! bistochastic matrices by images of block unitaries.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::blockmaps::{direct_sum_mix_all, phi, tensor_embed};
use crate::error::{Error, Result};
use crate::matcore::{BistochasticMatrix, BlockUnitary, ComplexMatrix, Tolerance};
use crate::perm::Permutation;

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffTerm {
    pub weight: f64,
    pub perm: Permutation,
}

/// Convex combination `Σ t_σ P_σ` of permutation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffDecomposition {
    d: usize,
    terms: Vec<BirkhoffTerm>,
}

impl BirkhoffDecomposition {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> &[BirkhoffTerm] {
        &self.terms
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        for t in &self.terms {
            for (i, &j) in t.perm.images().iter().enumerate() {
                m[(i, j)] += t.weight;
            }
        }
        m
    }
}

/// Perfect matching on the bipartite graph `row i -> column j` where
/// `mask(i, j)` holds, by augmenting paths in fixed vertex order.
fn perfect_matching(d: usize, mask: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    let adj: Vec<Vec<usize>> = (0..d).map(|i| (0..d).filter(|&j| mask(i, j)).collect()).collect();
    let mut col_owner: Vec<Option<usize>> = vec![None; d];

    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none() || augment(owner[j].unwrap(), adj, seen, owner) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }

    for i in 0..d {
        let mut seen = vec![false; d];
        if !augment(i, &adj, &mut seen, &mut col_owner) {
            return None;
        }
    }
    let mut image = vec![0; d];
    for (j, owner) in col_owner.iter().enumerate() {
        image[owner.expect("perfect matching covers every column")] = j;
    }
    Some(image)
}

/// Perfect matching on the positive entries maximizing the smallest matched
/// entry, by bisection over the distinct entry values.
fn bottleneck_matching(m: &DMatrix<f64>, eps: f64) -> Option<Vec<usize>> {
    let d = m.nrows();
    let mut levels: Vec<f64> = m.iter().copied().filter(|&x| x > eps).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let feasible = |t: f64| perfect_matching(d, |i, j| m[(i, j)] > eps && m[(i, j)] >= t);
    let mut best = feasible(*levels.first()?)?;
    let (mut lo, mut hi) = (0, levels.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        match feasible(levels[mid]) {
            Some(found) => {
                best = found;
                lo = mid;
            }
            None => hi = mid - 1,
        }
    }
    Some(best)
}

/// Greedy peeling: repeatedly subtract the largest multiple of a permutation
/// supported on the positive residual entries.
pub fn birkhoff_decompose(b: &BistochasticMatrix) -> Result<BirkhoffDecomposition> {
    let d = b.d();
    let eps = b.tolerance().validation_eps;
    let mut residual = b.matrix().clone();
    let mut terms = Vec::new();
    let cap = d * d;
    while residual.max() > eps {
        if terms.len() >= cap {
            return Err(Error::Internal(format!("peeling did not terminate within {cap} steps")));
        }
        let Some(image) = bottleneck_matching(&residual, eps) else {
            // leftover mass at the level of the input's own stochasticity slack
            if residual.max() <= d as f64 * eps {
                break;
            }
            return Err(Error::Internal(format!(
                "no perfect matching on a residual with max entry {:e}; input not bistochastic",
                residual.max()
            )));
        };
        let (argmin, weight) = image
            .iter()
            .enumerate()
            .map(|(i, &j)| ((i, j), residual[(i, j)]))
            .fold(((0, 0), f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        for (i, &j) in image.iter().enumerate() {
            residual[(i, j)] -= weight;
        }
        residual[argmin] = 0.0;
        terms.push(BirkhoffTerm {
            weight,
            perm: Permutation::from_images(image).expect("matching is a bijection"),
        });
    }
    Ok(BirkhoffDecomposition { d, terms })
}

/// A witness in the image of φ_{d,N} close to a target bistochastic matrix.
#[derive(Debug, Clone)]
pub struct RationalApproximation {
    pub n: usize,
    pub delta: f64,
    /// `(σ, k_σ)` with `Σ k_σ = N`, in decomposition order; zero counts kept.
    pub counts: Vec<(Permutation, usize)>,
    pub witness: BlockUnitary,
    /// `||B − φ(witness)||_F`.
    pub achieved_error: f64,
    pub decomposition: BirkhoffDecomposition,
}

/// Rounds decomposition weights to multiples of 1/N: floors, with the
/// largest-weight term absorbing the remainder.
pub(crate) fn round_counts(dec: &BirkhoffDecomposition, n: usize) -> Vec<(Permutation, usize)> {
    let mut counts: Vec<(Permutation, usize)> = dec
        .terms
        .iter()
        .map(|t| (t.perm.clone(), (n as f64 * t.weight).floor() as usize))
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    if let Some(largest) = dec
        .terms
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, t)| match best {
            Some((_, w)) if w >= t.weight => best,
            _ => Some((i, t.weight)),
        })
        .map(|(i, _)| i)
    {
        counts[largest].1 += n.saturating_sub(assigned);
    }
    counts
}

/// Block unitary of size dN whose φ image is `Σ (k_σ/N) P_σ`.
pub(crate) fn mixture_witness(d: usize, counts: &[(Permutation, usize)], tol: &Tolerance) -> Result<BlockUnitary> {
    let parts: Vec<BlockUnitary> = counts
        .iter()
        .filter(|(_, k)| *k > 0)
        .map(|(p, k)| {
            let pm = BlockUnitary::trusted(ComplexMatrix::from_real(&p.matrix()).into_dmatrix(), d, 1, tol);
            tensor_embed(&pm, *k)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&BlockUnitary> = parts.iter().collect();
    direct_sum_mix_all(&refs)
}

/// Step size used for a decomposition with `m` terms: `ε / (2·max(m−1, 1)·√d)`.
pub fn rounding_delta(eps: f64, terms: usize, d: usize) -> f64 {
    eps / (2.0 * terms.saturating_sub(1).max(1) as f64 * (d as f64).sqrt())
}

/// Approximates `b` within `eps` (Frobenius) by a generalized unistochastic
/// matrix of order `N = ⌈1/δ⌉`, with an explicit block-unitary witness.
pub fn approximate_by_generalized_unistochastic(b: &BistochasticMatrix, eps: f64) -> Result<RationalApproximation> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let decomposition = birkhoff_decompose(b)?;
    let d = b.d();
    let delta = rounding_delta(eps, decomposition.terms.len(), d);
    let n = (1.0 / delta).ceil() as usize;
    let counts = round_counts(&decomposition, n);
    let witness = mixture_witness(d, &counts, b.tolerance())?;
    let achieved_error = b.distance(phi(&witness).matrix());
    if achieved_error > eps {
        return Err(Error::Internal(format!(
            "rounding error {achieved_error:e} exceeds requested {eps:e}"
        )));
    }
    Ok(RationalApproximation {
        n,
        delta,
        counts,
        witness,
        achieved_error,
        decomposition,
    })
}

/// Serializable view of a decomposition term.
#[derive(Debug, Clone, Serialize)]
pub struct TermRecord {
    pub weight: f64,
    pub perm: String,
    pub image: Vec<usize>,
}

impl From<&BirkhoffTerm> for TermRecord {
    fn from(t: &BirkhoffTerm) -> Self {
        TermRecord {
            weight: t.weight,
            perm: t.perm.to_string(),
            image: t.perm.images().iter().map(|j| j + 1).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn permutation_is_a_single_term() {
        let p = Permutation::from_cycles("(1423)", 4).unwrap();
        let b = BistochasticMatrix::new(p.matrix(), &tol()).unwrap();
        let dec = birkhoff_decompose(&b).unwrap();
        assert_eq!(dec.terms().len(), 1);
        assert_eq!(dec.terms()[0].weight, 1.0);
        assert_eq!(dec.terms()[0].perm, p);
    }

    #[test]
    fn two_term_mixture() {
        let b = BistochasticMatrix::new(fixtures::circulant3(0.5, 0.5, 0.0), &tol()).unwrap();
        let dec = birkhoff_decompose(&b).unwrap();
        assert_eq!(dec.terms().len(), 2);
        let mut perms: Vec<String> = dec.terms().iter().map(|t| t.perm.to_string()).collect();
        perms.sort();
        assert_eq!(perms, vec!["(123)", "id"]);
        assert!(dec.terms().iter().all(|t| (t.weight - 0.5).abs() < 1e-15));
    }

    #[test]
    fn flat_matrix_reconstructs() {
        let b = BistochasticMatrix::flat(3, &tol()).unwrap();
        let dec = birkhoff_decompose(&b).unwrap();
        assert_eq!(dec.terms().len(), 3);
        assert!((dec.reconstruct() - b.matrix()).abs().max() < 1e-15);
        assert!((dec.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_bistochastic_residual() {
        // bypass validation to feed an inconsistent matrix
        let m = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.9]);
        let b = BistochasticMatrix::with_slack(m, &tol(), 0.2).unwrap();
        let dec = birkhoff_decompose(&b).unwrap();
        assert!((dec.total_weight() - 0.9).abs() < 1e-15);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.9]);
        let b = BistochasticMatrix::with_slack(m, &tol(), 0.2).unwrap();
        assert!(matches!(birkhoff_decompose(&b), Err(Error::Internal(_))));
    }

    #[test]
    fn approximation_of_a_permutation_is_exact() {
        let p = Permutation::from_cycles("(132)", 3).unwrap();
        let b = BistochasticMatrix::new(p.matrix(), &tol()).unwrap();
        let approx = approximate_by_generalized_unistochastic(&b, 0.3).unwrap();
        assert_eq!(approx.counts, vec![(p, approx.n)]);
        assert_eq!(approx.achieved_error, 0.0);
        // single term: δ = ε / (2√d)
        assert_eq!(approx.n, (2.0 * 3f64.sqrt() / 0.3).ceil() as usize);
    }

    #[test]
    fn approximation_of_flat_2x2() {
        let b = BistochasticMatrix::flat(2, &tol()).unwrap();
        let approx = approximate_by_generalized_unistochastic(&b, 0.1).unwrap();
        // δ = 0.1 / (2·√2), N = ⌈28.28…⌉ = 29 is odd, so the halves cannot be hit
        assert_eq!(approx.n, 29);
        assert!(approx.achieved_error > 0.0 && approx.achieved_error <= 0.1);
        // ε = 0.0959 gives N = ⌈29.49…⌉ = 30 and an exact witness
        let approx = approximate_by_generalized_unistochastic(&b, 0.0959).unwrap();
        assert_eq!(approx.n, 30);
        assert!(approx.achieved_error < 1e-15);
        assert_eq!(approx.witness.s(), 30);
    }

    #[test]
    fn approximation_rejects_bad_eps() {
        let b = BistochasticMatrix::flat(2, &tol()).unwrap();
        for eps in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                approximate_by_generalized_unistochastic(&b, eps),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn remainder_goes_to_largest_weight() {
        let b = BistochasticMatrix::new(fixtures::circulant3(0.2, 0.5, 0.3), &tol()).unwrap();
        let dec = birkhoff_decompose(&b).unwrap();
        let counts = round_counts(&dec, 7);
        // bottleneck peeling finds the three circulant terms, heaviest first;
        // floors 3.5 → 3, 2.1 → 2, 1.4 → 1 leave a remainder of 1 for the ½ term
        let perms: Vec<String> = dec.terms().iter().map(|t| t.perm.to_string()).collect();
        assert_eq!(perms, vec!["(123)", "(132)", "id"]);
        let k: Vec<usize> = counts.iter().map(|c| c.1).collect();
        assert_eq!(k, vec![4, 2, 1]);
    }
}
