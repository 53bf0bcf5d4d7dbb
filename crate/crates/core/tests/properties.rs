use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use unistoch::birkhoff::{approximate_by_generalized_unistochastic, birkhoff_decompose, rounding_delta};
use unistoch::blockmaps::{direct_sum_mix, phi, realify, tensor_embed};
use unistoch::bracelet::{
    bracelet_pair, emit_e_set, generalized_necessary, is_generalized_bracelet_matrix, slice_membership,
    ProbabilityVectorPair, Verdict,
};
use unistoch::membership::{pair_feasibility, SolverConfig, Status};
use unistoch::randhaar::{haar_block_unitary, haar_unitary, sample_mu, spectrum, stream_rng};
use unistoch::stats::{ks_two_sample, Welford};
use unistoch::{
    frobenius_norm_sq, is_unitary, validate_bistochastic, BistochasticMatrix, ComplexMatrix, Permutation, Tolerance,
    C64,
};

fn tol() -> Tolerance {
    Tolerance::default()
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn simplex(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn random_perm(rng: &mut impl Rng, d: usize) -> Permutation {
    let mut image: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        image.swap(i, rng.random_range(0..=i));
    }
    Permutation::from_images(image).unwrap()
}

fn random_mixture(rng: &mut impl Rng, d: usize) -> BistochasticMatrix {
    let terms = rng.random_range(1..=d * d);
    let w = simplex(rng, terms);
    let mut m = DMatrix::zeros(d, d);
    for wk in w {
        m += random_perm(rng, d).matrix() * wk;
    }
    BistochasticMatrix::new(m, &tol()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn images_are_bistochastic(seed in any::<u64>(), d in 2usize..5, s in 1usize..4) {
        let u = haar_block_unitary(d, s, &mut stream_rng(seed, 0)).unwrap();
        let b = phi(&u);
        prop_assert!(validate_bistochastic(b.matrix().clone(), &tol()).is_ok());
        for i in 0..d {
            prop_assert!((b.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!((b.col(i).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn frobenius_norm_is_unitarily_invariant(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = stream_rng(seed, 1);
        let m = ComplexMatrix::from(DMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>())));
        let u = haar_unitary(n, &mut rng).unwrap();
        let v = haar_unitary(n, &mut rng).unwrap();
        prop_assert!(is_unitary(&u, &tol()).unwrap());
        let before = frobenius_norm_sq(&m);
        let moved = ComplexMatrix::from(u.as_dmatrix() * m.as_dmatrix() * v.as_dmatrix());
        prop_assert!((frobenius_norm_sq(&moved) - before).abs() <= 1e-9 * before);
    }

    #[test]
    fn tensor_embedding_preserves_image(seed in any::<u64>(), d in 2usize..5, t in 1usize..5) {
        let u = haar_block_unitary(d, 1, &mut stream_rng(seed, 2)).unwrap();
        let v = tensor_embed(&u, t).unwrap();
        prop_assert!(max_diff(phi(&v).matrix(), phi(&u).matrix()) <= 1e-12);
    }

    #[test]
    fn realify_preserves_image(seed in any::<u64>(), d in 2usize..4, s in 1usize..3) {
        let u = haar_block_unitary(d, s, &mut stream_rng(seed, 3)).unwrap();
        let e = realify(&u);
        prop_assert!(e.target.matrix().is_real());
        prop_assert!(e.target.unitarity_defect() <= 1e-10 * e.target.n() as f64);
        prop_assert!(max_diff(phi(&e.target).matrix(), phi(&u).matrix()) <= 1e-10);
    }

    #[test]
    fn bracelet_is_symmetric(seed in any::<u64>(), d in 2usize..7) {
        let mut rng = stream_rng(seed, 4);
        let p = ProbabilityVectorPair::from_slices(&simplex(&mut rng, d), &simplex(&mut rng, d), &tol()).unwrap();
        let a = bracelet_pair(&p, &tol());
        let b = bracelet_pair(&p.swapped(), &tol());
        prop_assert_eq!(a.satisfied, b.satisfied);
        prop_assert!((a.margin - b.margin).abs() <= 1e-15);
    }

    #[test]
    fn slice_is_symmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, s in 1usize..9) {
        prop_assert_eq!(slice_membership(a, b, s, &tol()), slice_membership(b, a, s, &tol()));
    }

    #[test]
    fn permutation_algebra(seed in any::<u64>(), d in 1usize..9) {
        let mut rng = stream_rng(seed, 5);
        let p = random_perm(&mut rng, d);
        let q = random_perm(&mut rng, d);
        prop_assert!(p.compose(&p.inverse()).is_identity());
        prop_assert_eq!(Permutation::from_cycles(&p.to_string(), d).unwrap(), p.clone());
        // P_p · P_q = P_{q∘p}
        prop_assert_eq!(p.matrix() * q.matrix(), q.compose(&p).matrix());
    }

    #[test]
    fn welford_merge_is_order_free(xs in proptest::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
        let cut = cut.min(xs.len());
        let mut whole = Welford::new();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = Welford::new();
        let mut b = Welford::new();
        xs[..cut].iter().for_each(|&x| a.push(x));
        xs[cut..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        prop_assert!((a.mean() - whole.mean()).abs() <= 1e-9);
        prop_assert!((a.variance() - whole.variance()).abs() <= 1e-7 * whole.variance().max(1.0));
    }
}

#[test]
fn blending_identity() {
    let mut rng = stream_rng(31, 0);
    for (d, s, t) in [(2, 1, 1), (3, 1, 2), (3, 2, 2)] {
        for _ in 0..100 {
            let u = haar_block_unitary(d, s, &mut rng).unwrap();
            let w = haar_block_unitary(d, t, &mut rng).unwrap();
            let mixed = direct_sum_mix(&u, &w).unwrap();
            let expect = (phi(&u).matrix() * s as f64 + phi(&w).matrix() * t as f64) / (s + t) as f64;
            assert!(max_diff(phi(&mixed).matrix(), &expect) <= 1e-12);
        }
    }
}

#[test]
fn images_are_never_rejected_by_the_generalized_screens() {
    let cfg = SolverConfig {
        restarts: 1,
        max_iters: 100,
        ..SolverConfig::default()
    };
    let mut rng = stream_rng(32, 0);
    for (d, s) in [(3, 1), (3, 2), (4, 2)] {
        for _ in 0..1000 {
            let b = sample_mu(d, s, &mut rng).unwrap();
            let report = is_generalized_bracelet_matrix(&b, s, &cfg).unwrap();
            assert_ne!(report.verdict, Verdict::No, "(d,s)=({d},{s}): {b:?}");
        }
    }
}

#[test]
fn order_one_necessary_condition_is_the_bracelet_condition() {
    let mut rng = stream_rng(33, 0);
    let t = tol();
    let mut checked = 0;
    for _ in 0..10_000 {
        let d = rng.random_range(2..7);
        let p = ProbabilityVectorPair::from_slices(&simplex(&mut rng, d), &simplex(&mut rng, d), &t).unwrap();
        let r = bracelet_pair(&p, &t);
        if r.margin.abs() <= 1e-9 {
            continue;
        }
        checked += 1;
        assert_eq!(generalized_necessary(&p, 1, &t), r.satisfied, "{p:?}");
    }
    assert!(checked > 9000);
}

#[test]
fn two_dimensional_pairs_are_rigid() {
    let mut rng = stream_rng(34, 0);
    let t = tol();
    let cfg = SolverConfig::default();
    for k in 0..400 {
        let a: f64 = rng.random();
        let b = if k % 2 == 0 { 1.0 - a } else { rng.random() };
        let p = ProbabilityVectorPair::from_slices(&[a, 1.0 - a], &[b, 1.0 - b], &t).unwrap();
        let v = pair_feasibility(&p, 1 + k % 3, &cfg, &t).unwrap();
        let reversed = (b - (1.0 - a)).abs() <= t.certificate_eps;
        assert_eq!(v.status == Status::Member, reversed, "α₀={a} β₀={b}");
        if !reversed {
            assert_eq!(v.status, Status::RejectedAnalytic);
        }
    }
}

#[test]
fn e_set_sandwich_at_other_resolutions() {
    for s in 1..=8 {
        for grid in [2, 17, 64] {
            let scan = emit_e_set(s, grid, &tol()).unwrap();
            assert!(scan.inner_bound_holds && scan.outer_bound_holds, "s={s} grid={grid}");
        }
    }
}

#[test]
fn peeling_respects_the_term_bound() {
    let mut rng = stream_rng(35, 0);
    for k in 0..1000 {
        let d = 2 + k % 5;
        let b = random_mixture(&mut rng, d);
        let dec = birkhoff_decompose(&b).unwrap();
        assert!(dec.terms().len() <= d * d - 2 * d + 2, "d={d}: {} terms", dec.terms().len());
        assert!((dec.total_weight() - 1.0).abs() <= 1e-10);
        assert!(max_diff(&dec.reconstruct(), b.matrix()) <= 1e-10);
        assert!(dec.terms().iter().all(|t| t.weight > 0.0));
    }
}

#[test]
fn approximation_error_bounds() {
    let mut rng = stream_rng(36, 0);
    for k in 0..100 {
        let d = 2 + k % 3;
        let b = random_mixture(&mut rng, d);
        let eps = 0.05 + 0.1 * rng.random::<f64>();
        let a = approximate_by_generalized_unistochastic(&b, eps).unwrap();
        let m = a.decomposition.terms().len();
        assert_eq!(a.delta, rounding_delta(eps, m, d));
        assert!(a.achieved_error <= eps);
        assert!(a.achieved_error <= 2.0 * (m.max(2) - 1) as f64 * a.delta * (d as f64).sqrt() + 1e-15);
        assert_eq!(a.counts.iter().map(|c| c.1).sum::<usize>(), a.n);
    }
}

#[test]
fn spectra_of_random_images() {
    let mut rng = stream_rng(37, 0);
    for (d, s) in [(3, 1), (3, 2), (4, 1), (5, 2)] {
        for _ in 0..200 {
            let b = sample_mu(d, s, &mut rng).unwrap();
            let ev = spectrum(&b).unwrap();
            assert_eq!(ev.len(), d);
            assert!(ev.iter().any(|z| (z - C64::new(1.0, 0.0)).norm() <= 1e-10));
            assert!(ev.iter().all(|z| z.norm() <= 1.0 + 1e-10));
        }
    }
}

#[test]
fn haar_measure_is_left_invariant() {
    let mut rng = stream_rng(38, 0);
    let n = 4;
    let fixed = haar_unitary(n, &mut stream_rng(39, 0)).unwrap();
    let mut plain = Vec::with_capacity(10_000);
    let mut moved = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        plain.push(haar_unitary(n, &mut rng).unwrap().get(0, 0).norm_sqr());
        let u = haar_unitary(n, &mut rng).unwrap();
        moved.push((fixed.as_dmatrix() * u.as_dmatrix())[(0, 0)].norm_sqr());
    }
    let r = ks_two_sample(&plain, &moved);
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn variance_concentrates_as_blocks_grow() {
    let vars: Vec<f64> = [1, 2, 4, 8]
        .iter()
        .map(|&s| {
            let mut rng = stream_rng(40, s as u64);
            let mut w = Welford::new();
            for _ in 0..5000 {
                w.push(sample_mu(3, s, &mut rng).unwrap().get(0, 0));
            }
            w.variance()
        })
        .collect();
    assert!(vars.windows(2).all(|p| p[1] < p[0]), "{vars:?}");
}
