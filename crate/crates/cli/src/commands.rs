use std::path::{Path, PathBuf};

use serde::Serialize;
use unistoch::birkhoff::{approximate_by_generalized_unistochastic, birkhoff_decompose, TermRecord};
use unistoch::blockmaps::{phi, realify, u_q, u_q_weights};
use unistoch::bracelet::{
    emit_e_set, is_bracelet_matrix, is_generalized_bracelet_matrix, segment_lattice, BraceletPairEntry,
    GeneralizedPairEntry, ProbabilityVectorPair, Verdict,
};
use unistoch::fixtures;
use unistoch::formats::{ComplexMatrixFile, RealMatrixFile};
use unistoch::membership::{certify_membership, certify_membership_from, pair_feasibility, MembershipVerdict, SolverConfig};
use unistoch::randhaar::{
    estimate_correlations, estimate_moments, hypocycloid, sample_mu, sample_simplex_slice, sample_spectra, stream_rng,
};
use unistoch::{BistochasticMatrix, BlockUnitary, Permutation, Tolerance};

use crate::output::{write_csv, write_json, CliError, CliResult, Context};
use crate::{Command, SolverArgs};

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            step_init: self.step_init,
            grad_tol: self.grad_tol,
            seed: self.seed.seed,
        }
    }
}

fn fixture(name: &str) -> CliResult<BlockUnitary> {
    let tol = Tolerance::default();
    match name {
        "block-swap-4" => Ok(fixtures::block_swap_4()),
        "derangement-6" => Ok(fixtures::derangement_6()),
        "householder-3" => Ok(fixtures::householder_3()),
        other => match other.strip_prefix("fourier-").and_then(|d| d.parse::<usize>().ok()) {
            Some(d) => Ok(BlockUnitary::new(fixtures::fourier(d), d, 1, &tol)?),
            None => Err(CliError::parameter(format!("unknown fixture {other:?}"))),
        },
    }
}

fn load_unitary(
    ctx: &mut Context,
    path: Option<&PathBuf>,
    name: Option<&String>,
    d: Option<usize>,
    s: Option<usize>,
) -> CliResult<BlockUnitary> {
    match (path, name) {
        (Some(p), _) => {
            let file: ComplexMatrixFile = ctx.read_json(p)?;
            Ok(file.to_block_unitary(d, s, &Tolerance::default())?)
        }
        (None, Some(n)) => {
            let u = fixture(n)?;
            if d.is_none() && s.is_none() {
                return Ok(u);
            }
            let file = ComplexMatrixFile::from_complex(u.matrix());
            Ok(file.to_block_unitary(d, s, &Tolerance::default())?)
        }
        (None, None) => Err(CliError::parameter("give --unitary or --fixture")),
    }
}

fn load_matrix(ctx: &mut Context, path: &Path) -> CliResult<BistochasticMatrix> {
    let file: RealMatrixFile = ctx.read_json(path)?;
    Ok(file.to_bistochastic(&Tolerance::default())?)
}

#[derive(Serialize)]
struct MapReport {
    d: usize,
    s: usize,
    image: RealMatrixFile,
    unitarity_defect: f64,
}

#[derive(Serialize)]
struct UqReport {
    q: f64,
    w_plus: f64,
    w_minus: f64,
    image: RealMatrixFile,
    orthogonality_defect: f64,
}

#[derive(Serialize)]
struct RealifyReport {
    d: usize,
    s: usize,
    image: RealMatrixFile,
    /// Largest entrywise difference between the images before and after.
    image_drift: f64,
    orthogonality_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<ComplexMatrixFile>,
}

#[derive(Serialize)]
struct ClassicBraceletReport {
    verdict: Verdict,
    pair_reports: Vec<BraceletPairEntry>,
}

#[derive(Serialize)]
struct GeneralizedReport {
    s: usize,
    verdict: Verdict,
    pair_reports: Vec<GeneralizedPairEntry>,
}

#[derive(Serialize)]
struct ESetSummary {
    s: usize,
    grid: usize,
    points: usize,
    in_set: usize,
    inner_bound_holds: bool,
    outer_bound_holds: bool,
    out: String,
}

#[derive(Serialize)]
struct DecomposeReport {
    d: usize,
    terms: Vec<TermRecord>,
    reconstruction_error: f64,
}

#[derive(Serialize)]
struct CountRecord {
    perm: String,
    count: usize,
}

#[derive(Serialize)]
struct ApproximateReport {
    eps: f64,
    n: usize,
    delta: f64,
    counts: Vec<CountRecord>,
    achieved_error: f64,
    image: RealMatrixFile,
}

#[derive(Serialize)]
struct VerdictReport<'a> {
    #[serde(flatten)]
    verdict: &'a MembershipVerdict,
    s: usize,
    solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<ComplexMatrixFile>,
}

#[derive(Serialize)]
struct CsvSummary {
    rows: usize,
    out: String,
}

#[derive(Serialize)]
struct SpectraSummary {
    d: usize,
    s: usize,
    samples: usize,
    eigenvalues: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    hypocycloid: Option<String>,
}

#[derive(Serialize)]
struct Slice3Summary {
    s: usize,
    samples: usize,
    member: usize,
    rejected: usize,
    unknown: usize,
    out: String,
}

#[derive(Serialize)]
struct LatticeReport {
    d: usize,
    s: usize,
    pi: String,
    sigma: String,
    lambdas: Vec<f64>,
}

fn verdict_report<'a>(
    v: &'a MembershipVerdict,
    s: usize,
    cfg: SolverConfig,
    emit: Option<&PathBuf>,
) -> CliResult<VerdictReport<'a>> {
    let cert = v.certificate.as_ref().map(ComplexMatrixFile::from);
    if let (Some(path), Some(c)) = (emit, &cert) {
        write_json(path, c)?;
    }
    Ok(VerdictReport {
        verdict: v,
        s,
        solver: cfg,
        certificate: if emit.is_some() { None } else { cert },
    })
}

fn path_label(p: Option<&PathBuf>) -> String {
    p.map_or_else(|| "-".into(), |p| p.display().to_string())
}

pub fn run(command: &Command, ctx: &mut Context) -> CliResult<()> {
    match command {
        Command::Map { unitary, fixture, d, s } => {
            let u = load_unitary(ctx, unitary.as_ref(), fixture.as_ref(), *d, *s)?;
            ctx.finish(&MapReport {
                d: u.d(),
                s: u.s(),
                image: RealMatrixFile::from(&phi(&u)),
                unitarity_defect: u.unitarity_defect(),
            })
        }
        Command::Uq { q, emit_unitary } => {
            let u = u_q(*q)?;
            let (w_plus, w_minus) = u_q_weights(*q);
            if let Some(path) = emit_unitary {
                write_json(path, &ComplexMatrixFile::from(&u))?;
            }
            ctx.finish(&UqReport {
                q: *q,
                w_plus,
                w_minus,
                image: RealMatrixFile::from(&phi(&u)),
                orthogonality_defect: u.unitarity_defect(),
            })
        }
        Command::Realify {
            unitary,
            fixture,
            d,
            s,
            out,
        } => {
            let u = load_unitary(ctx, unitary.as_ref(), fixture.as_ref(), *d, *s)?;
            let e = realify(&u);
            let before = phi(&u);
            let after = phi(&e.target);
            let file = ComplexMatrixFile::from(&e.target);
            if let Some(path) = out {
                write_json(path, &file)?;
            }
            ctx.finish(&RealifyReport {
                d: e.target.d(),
                s: e.target.s(),
                image_drift: (after.matrix() - before.matrix()).abs().max(),
                image: RealMatrixFile::from(&after),
                orthogonality_defect: e.target.unitarity_defect(),
                matrix: if out.is_some() { None } else { Some(file) },
            })
        }
        Command::Bracelet { matrix, s, solver } => {
            let b = load_matrix(ctx, matrix)?;
            match s {
                None => {
                    let r = is_bracelet_matrix(&b, b.tolerance());
                    ctx.finish(&ClassicBraceletReport {
                        verdict: if r.satisfied { Verdict::Yes } else { Verdict::No },
                        pair_reports: r.pairs,
                    })
                }
                Some(s) => {
                    ctx.record_seed(solver.seed.seed);
                    let r = is_generalized_bracelet_matrix(&b, *s, &solver.config())?;
                    ctx.finish(&GeneralizedReport {
                        s: r.s,
                        verdict: r.verdict,
                        pair_reports: r.pairs,
                    })
                }
            }
        }
        Command::Eset { s, grid, out } => {
            let scan = emit_e_set(*s, *grid, &Tolerance::default())?;
            let lines = scan
                .points
                .iter()
                .map(|(a, b, inside)| format!("{a},{b},{}", *inside as u8));
            write_csv(out.as_deref(), "alpha1,beta1,in_set", lines)?;
            match out {
                Some(path) => ctx.finish(&ESetSummary {
                    s: *s,
                    grid: *grid,
                    points: scan.points.len(),
                    in_set: scan.count_in(),
                    inner_bound_holds: scan.inner_bound_holds,
                    outer_bound_holds: scan.outer_bound_holds,
                    out: path.display().to_string(),
                }),
                None => Ok(()),
            }
        }
        Command::Decompose { matrix } => {
            let b = load_matrix(ctx, matrix)?;
            let dec = birkhoff_decompose(&b)?;
            ctx.finish(&DecomposeReport {
                d: dec.d(),
                terms: dec.terms().iter().map(TermRecord::from).collect(),
                reconstruction_error: (dec.reconstruct() - b.matrix()).abs().max(),
            })
        }
        Command::Approximate {
            matrix,
            eps,
            emit_witness,
        } => {
            let b = load_matrix(ctx, matrix)?;
            let a = approximate_by_generalized_unistochastic(&b, *eps)?;
            if let Some(path) = emit_witness {
                write_json(path, &ComplexMatrixFile::from(&a.witness))?;
            }
            ctx.finish(&ApproximateReport {
                eps: *eps,
                n: a.n,
                delta: a.delta,
                counts: a
                    .counts
                    .iter()
                    .map(|(p, k)| CountRecord {
                        perm: p.to_string(),
                        count: *k,
                    })
                    .collect(),
                achieved_error: a.achieved_error,
                image: RealMatrixFile::from(&phi(&a.witness)),
            })
        }
        Command::Member {
            matrix,
            s,
            start,
            emit_certificate,
            solver,
        } => {
            let b = load_matrix(ctx, matrix)?;
            let cfg = solver.config();
            ctx.record_seed(cfg.seed);
            let v = match start {
                Some(path) => {
                    let file: ComplexMatrixFile = ctx.read_json(path)?;
                    let st = file.to_block_unitary(Some(b.d()), Some(*s), &Tolerance::default())?;
                    certify_membership_from(&b, *s, &cfg, Some(&st))?
                }
                None => certify_membership(&b, *s, &cfg)?,
            };
            ctx.finish(&verdict_report(&v, *s, cfg, emit_certificate.as_ref())?)
        }
        Command::Pair {
            alpha,
            beta,
            s,
            emit_certificate,
            solver,
        } => {
            let tol = Tolerance::default();
            let pair = ProbabilityVectorPair::from_slices(alpha, beta, &tol)?;
            let cfg = solver.config();
            ctx.record_seed(cfg.seed);
            let v = pair_feasibility(&pair, *s, &cfg, &tol)?;
            ctx.finish(&verdict_report(&v, *s, cfg, emit_certificate.as_ref())?)
        }
        Command::Sample { d, s, count, out, seed } => {
            ctx.record_seed(seed.seed);
            let mut rng = stream_rng(seed.seed, 0);
            let mut lines = Vec::with_capacity(*count);
            for k in 0..*count {
                let b = sample_mu(*d, *s, &mut rng)?;
                let flat: Vec<String> = b.rows().concat().iter().map(|x| x.to_string()).collect();
                lines.push(format!("{k},{}", flat.join(",")));
            }
            let header = std::iter::once("sample".to_string())
                .chain((1..=*d).flat_map(|i| (1..=*d).map(move |j| format!("b_{i}_{j}"))))
                .collect::<Vec<_>>()
                .join(",");
            write_csv(out.as_deref(), &header, lines.into_iter())?;
            match out {
                Some(p) => ctx.finish(&CsvSummary {
                    rows: *count,
                    out: p.display().to_string(),
                }),
                None => Ok(()),
            }
        }
        Command::Moments { d, s, samples, seed } => {
            ctx.record_seed(seed.seed);
            ctx.finish(&estimate_moments(*d, *s, *samples, seed.seed)?)
        }
        Command::Correlations { d, s, samples, seed } => {
            ctx.record_seed(seed.seed);
            ctx.finish(&estimate_correlations(*d, *s, *samples, seed.seed)?)
        }
        Command::Spectra {
            d,
            s,
            samples,
            out,
            hypocycloid: curve,
            points,
            seed,
        } => {
            ctx.record_seed(seed.seed);
            let ev = sample_spectra(*d, *s, *samples, seed.seed)?;
            if let Some(path) = curve {
                let pts = hypocycloid(*d, *points)?;
                write_csv(Some(path), "re,im", pts.iter().map(|z| format!("{},{}", z.re, z.im)))?;
            }
            write_csv(out.as_deref(), "re,im", ev.iter().map(|z| format!("{},{}", z.re, z.im)))?;
            match out {
                Some(p) => ctx.finish(&SpectraSummary {
                    d: *d,
                    s: *s,
                    samples: *samples,
                    eigenvalues: ev.len(),
                    out: p.display().to_string(),
                    hypocycloid: curve.as_ref().map(|c| c.display().to_string()),
                }),
                None => Ok(()),
            }
        }
        Command::Slice3 {
            samples,
            s,
            out,
            solver,
        } => {
            let cfg = solver.config();
            ctx.record_seed(cfg.seed);
            let points = sample_simplex_slice(*samples, cfg.seed)?;
            let mut counts = [0usize; 3];
            let mut lines = Vec::with_capacity(points.len());
            for p in &points {
                let v = certify_membership(&p.matrix, *s, &cfg)?;
                let tag = serde_json::to_value(v.status).expect("status serializes");
                counts[v.status as usize] += 1;
                let [l1, l2, l3] = p.weights;
                lines.push(format!("{l1},{l2},{l3},{}", tag.as_str().unwrap_or("?")));
            }
            write_csv(out.as_deref(), "lambda1,lambda2,lambda3,verdict", lines.into_iter())?;
            match out {
                Some(_) => ctx.finish(&Slice3Summary {
                    s: *s,
                    samples: *samples,
                    member: counts[0],
                    rejected: counts[1],
                    unknown: counts[2],
                    out: path_label(out.as_ref()),
                }),
                None => Ok(()),
            }
        }
        Command::Lattice { d, s, pi, sigma } => {
            let p = Permutation::from_cycles(pi, *d)?;
            let q = Permutation::from_cycles(sigma, *d)?;
            let lambdas = segment_lattice(*d, *s, &p, &q)?;
            ctx.finish(&LatticeReport {
                d: *d,
                s: *s,
                pi: p.to_string(),
                sigma: q.to_string(),
                lambdas,
            })
        }
    }
}
