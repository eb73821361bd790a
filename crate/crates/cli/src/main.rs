use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use llab::cdp::{bound_2d, verify_certificate, Bound2dConfig, Bound2dReport, CdpConfig, VerifyReport};
use llab::freiman::{
    bound_3d_via_embedding, canonical_embedding, canonical_with_base, verify_freiman_with_budget, Bound3dReport,
    FreimanCheck, FreimanMap, MapFile, Verification, DEFAULT_BRUTE_BUDGET,
};
use llab::lattice::{self, LatticeSet};
use llab::norms::{self, l1_estimate, L1Options, TraceEntry};
use llab::{grid, Error, Limits};

mod report;

const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "llab", version, about = "Exponential sums of lattice sets: norms and certified L1 lower bounds")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a set and write it as JSON.
    Gen {
        #[command(subcommand)]
        family: Family,
    },
    /// Measure a norm of F_A.
    Norm(NormArgs),
    /// Certify a lower bound for a planar set from its rows.
    Bound2d(Bound2dArgs),
    /// Freiman embeddings and the 3-D pipeline.
    Freiman {
        #[command(subcommand)]
        cmd: FreimanCmd,
    },
    /// Merge run reports into one table.
    Report(ReportArgs),
    /// Replay a certificate from a bound2d or bound3d report.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum Family {
    /// {1..n}^d
    Cube {
        #[arg(long)]
        n: i64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// {c + x q : 0 ≤ x < n}
    Ap {
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        c: i64,
        #[arg(long, allow_hyphen_values = true)]
        q: i64,
        #[arg(long)]
        n: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// {c + Σ x_i q_i : 0 ≤ x_i < N_i}
    Box {
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        c: i64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        steps: Vec<i64>,
        #[arg(long, value_delimiter = ',')]
        extents: Vec<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// {2, 4, …, 2^n}
    Lacunary {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integers in [1, N] congruent to 1 modulo a prime of the window starting at l.
    PrimeResidue {
        #[arg(long)]
        l: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random subset of {1..n}.
    Random {
        #[arg(long)]
        n: i64,
        #[arg(long)]
        density: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum NormKind {
    #[value(name = "1")]
    L1,
    #[value(name = "2")]
    L2,
    #[value(name = "inf")]
    Inf,
}

#[derive(Args)]
struct NormArgs {
    set: PathBuf,
    #[arg(long, value_enum, default_value = "1")]
    p: NormKind,
    /// Relative error target for p = 1.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// CSV file for the refinement trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Bound2dArgs {
    set: PathBuf,
    /// Free axis of the rows.
    #[arg(long, default_value_t = 0)]
    axis: usize,
    #[arg(long, default_value_t = llab::testfns::DEFAULT_EPS)]
    eps: f64,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, default_value_t = llab::cdp::bound2d::DEFAULT_MIN_GRID)]
    min_grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FreimanCmd {
    /// Write the canonical map of a box.
    Embed {
        #[arg(long, value_delimiter = ',')]
        extents: Vec<i64>,
        #[arg(long)]
        k: u32,
        /// Override the base; the map is then verified only if the base is large enough.
        #[arg(long)]
        base: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that a map preserves k-fold sums.
    Verify {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_BRUTE_BUDGET)]
        budget: u128,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-level certificate for a 3-D set through a Freiman map.
    Bound3d {
        set: PathBuf,
        /// Degree of the canonical map built from the set's bounding box.
        #[arg(long, required_unless_present = "map")]
        k: Option<u32>,
        /// Use this map instead; the set must lie in its domain.
        #[arg(long, conflicts_with = "k")]
        map: Option<PathBuf>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReportArgs {
    paths: Vec<PathBuf>,
    /// Emit JSON rows instead of CSV.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    report: PathBuf,
    /// Refine every grid axis by this odd factor before replaying.
    #[arg(long, default_value_t = 1)]
    refine: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub input_digest: Option<String>,
    pub seed: u64,
    pub chunk: usize,
    pub sample_budget: usize,
    pub budgets_hit: Vec<String>,
    pub output: Output,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Output {
    Gen {
        family: String,
        size: usize,
        path: String,
        details: serde_json::Value,
    },
    Norm {
        p: String,
        size: usize,
        value: f64,
        error_bound: f64,
        grid: Vec<usize>,
        target_met: bool,
        trace: Vec<TraceEntry>,
    },
    Bound2d {
        /// The translated set the certificate refers to.
        target: serde_json::Value,
        size: usize,
        verified: bool,
        report: Box<Bound2dReport>,
    },
    Bound3d {
        /// `θ(A)`, the target of the certificate.
        target: serde_json::Value,
        size: usize,
        shift: Vec<i64>,
        map: MapFile,
        verified: bool,
        report: Box<Bound3dReport>,
    },
    FreimanEmbed {
        map: MapFile,
        verified: Verification,
        path: String,
    },
    FreimanVerify {
        k: u32,
        check: FreimanCheck,
    },
    Verify {
        source: String,
        pass: bool,
        report: VerifyReport,
    },
    Report {
        rows: usize,
    },
}

/// Failure with an exit code.
struct Fail {
    code: u8,
    message: String,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SampleBudget { .. } | Error::FreimanBudget { .. } | Error::PrimeResidueTooLarge { .. } => {
                EXIT_BUDGET
            }
            _ => EXIT_VALIDATION,
        };
        Fail {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

fn invalid(message: impl Into<String>) -> Fail {
    Fail {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

struct Ctx {
    seed: u64,
    limits: Limits,
    command: Vec<String>,
}

impl Ctx {
    fn report(&self, digest: Option<String>, budgets_hit: Vec<String>, output: Output) -> RunReport {
        RunReport {
            command: self.command.clone(),
            input_digest: digest,
            seed: self.seed,
            chunk: self.limits.chunk,
            sample_budget: self.limits.sample_budget,
            budgets_hit,
            output,
        }
    }

    fn engine(&self, t: Option<usize>, rounds: Option<usize>) -> CdpConfig {
        CdpConfig {
            t_override: t,
            max_rounds: rounds,
            seed: self.seed,
            limits: self.limits,
            ..CdpConfig::default()
        }
    }
}

fn digest(paths: &[&Path]) -> Result<String, Fail> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(fs::read(p)?);
    }
    Ok(hex::encode(h.finalize()))
}

fn read_set(path: &Path) -> Result<LatticeSet, Fail> {
    Ok(LatticeSet::from_json(&fs::read_to_string(path)?)?)
}

fn write_set(set: &LatticeSet, path: &Path) -> Result<(), Fail> {
    let mut f = fs::File::create(path)?;
    set.write_json(&mut f)?;
    Ok(())
}

fn set_value(set: &LatticeSet) -> serde_json::Value {
    serde_json::from_str(&set.to_json()).expect("set JSON")
}

/// Writes `report` to `out`, or to stdout.
fn emit(report: &RunReport, out: Option<&Path>) -> Result<(), Fail> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli, ctx: &Ctx) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::Gen { family } => cmd_gen(family, ctx),
        Cmd::Norm(args) => cmd_norm(args, ctx),
        Cmd::Bound2d(args) => cmd_bound2d(args, ctx),
        Cmd::Freiman { cmd } => cmd_freiman(cmd, ctx),
        Cmd::Report(args) => report::cmd_report(args, ctx),
        Cmd::Verify(args) => cmd_verify(args, ctx),
    }
}

fn cmd_gen(family: Family, ctx: &Ctx) -> Result<(), Fail> {
    let (name, set, details, out) = match family {
        Family::Cube { n, d, out } => ("cube", lattice::gen_cube(n, d)?, serde_json::json!({"n": n, "d": d}), out),
        Family::Ap { c, q, n, out } => ("ap", lattice::gen_ap(c, q, n)?, serde_json::json!({"c": c, "q": q, "n": n}), out),
        Family::Box { c, steps, extents, out } => {
            let b = lattice::gen_box_progression(c, &steps, &extents)?;
            let details = serde_json::json!({"c": c, "steps": steps, "extents": extents, "proper": b.proper});
            ("box", b.set, details, out)
        }
        Family::Lacunary { n, out } => ("lacunary", lattice::gen_lacunary(n)?, serde_json::json!({"n": n}), out),
        Family::PrimeResidue { l, out } => {
            let (set, rep) = lattice::gen_prime_residue(l)?;
            let details = serde_json::json!({"l": l, "primes": rep.primes, "modulus": rep.modulus});
            ("prime_residue", set, details, out)
        }
        Family::Random { n, density, out } => {
            let r = lattice::gen_random_subset(n, density, ctx.seed)?;
            let details = serde_json::json!({"n": n, "density": density, "retries": r.retries});
            ("random", r.set, details, out)
        }
    };
    write_set(&set, &out)?;
    let output = Output::Gen {
        family: name.into(),
        size: set.len(),
        path: out.display().to_string(),
        details,
    };
    emit(&ctx.report(None, Vec::new(), output), None)
}

fn cmd_norm(args: NormArgs, ctx: &Ctx) -> Result<(), Fail> {
    let a = read_set(&args.set)?;
    let d = digest(&[&args.set])?;
    let mut budgets = Vec::new();
    let output = match args.p {
        NormKind::L1 => {
            if !(args.tol > 0.0) {
                return Err(invalid("tol must be positive"));
            }
            let opts = L1Options {
                chunk: ctx.limits.chunk,
                ..L1Options::default()
            }
            .with_target(args.tol)
            .with_max_samples(ctx.limits.sample_budget);
            let est = l1_estimate(&a, &opts)?;
            if !est.target_met {
                budgets.push(format!(
                    "sample budget {} reached before relative error {}",
                    ctx.limits.sample_budget, args.tol
                ));
            }
            if let Some(path) = &args.trace {
                est.write_trace_csv(fs::File::create(path)?)?;
            }
            Output::Norm {
                p: "1".into(),
                size: a.len(),
                value: est.value,
                error_bound: est.error_bound,
                grid: est.grid,
                target_met: est.target_met,
                trace: est.trace,
            }
        }
        NormKind::L2 | NormKind::Inf => {
            let (p, value) = match args.p {
                NormKind::L2 => ("2", norms::l2_exact(&a)),
                _ => ("inf", norms::linf_exact(&a)),
            };
            Output::Norm {
                p: p.into(),
                size: a.len(),
                value,
                error_bound: 0.0,
                grid: Vec::new(),
                target_met: true,
                trace: Vec::new(),
            }
        }
    };
    emit(&ctx.report(Some(d), budgets, output), args.out.as_deref())
}

fn cmd_bound2d(args: Bound2dArgs, ctx: &Ctx) -> Result<(), Fail> {
    let a = read_set(&args.set)?;
    let d = digest(&[&args.set])?;
    let cfg = Bound2dConfig {
        axis: args.axis,
        eps: args.eps,
        free_grid: None,
        min_grid: args.min_grid,
        engine: ctx.engine(args.t, args.rounds),
    };
    let rep = bound_2d(&a, &cfg)?;
    let target = a.translate(&rep.shift)?;
    let f = grid::evaluate_fft_with(&target, &rep.grid, &ctx.limits)?;
    let check = verify_certificate(&rep.certificate, &f, &cfg.engine);
    let output = Output::Bound2d {
        target: set_value(&target),
        size: a.len(),
        verified: check.pass,
        report: Box::new(rep),
    };
    emit(&ctx.report(Some(d), Vec::new(), output), args.out.as_deref())?;
    if !check.pass {
        return Err(Fail {
            code: EXIT_VERIFY,
            message: format!("certificate failed its replay: {:?}", check.failed()),
        });
    }
    Ok(())
}

fn cmd_freiman(cmd: FreimanCmd, ctx: &Ctx) -> Result<(), Fail> {
    match cmd {
        FreimanCmd::Embed { extents, k, base, out } => {
            let map = match base {
                Some(b) => canonical_with_base(&extents, k, b)?,
                None => canonical_embedding(&extents, k)?,
            };
            fs::write(&out, map.to_json()? + "\n")?;
            let output = Output::FreimanEmbed {
                map: map.to_file(),
                verified: map.verified,
                path: out.display().to_string(),
            };
            emit(&ctx.report(None, Vec::new(), output), None)
        }
        FreimanCmd::Verify { map, k, budget, out } => {
            let d = digest(&[&map])?;
            let m = FreimanMap::from_json(&fs::read_to_string(&map)?)?;
            let k = k.unwrap_or(m.k);
            let check = verify_freiman_with_budget(&m, k, budget)?;
            let pass = check.passed();
            emit(&ctx.report(Some(d), Vec::new(), Output::FreimanVerify { k, check }), out.as_deref())?;
            if pass {
                Ok(())
            } else {
                Err(Fail {
                    code: EXIT_VERIFY,
                    message: format!("map is not a Freiman isomorphism of degree {k}"),
                })
            }
        }
        FreimanCmd::Bound3d {
            set,
            k,
            map,
            t,
            rounds,
            out,
        } => {
            let a = read_set(&set)?;
            if a.dim() != 3 {
                return Err(invalid(format!("bound3d needs a 3-D set, got dimension {}", a.dim())));
            }
            let (a, shift, m, d) = match (&map, k) {
                (Some(path), _) => {
                    let m = FreimanMap::from_json(&fs::read_to_string(path)?)?;
                    (a, vec![0; 3], m, digest(&[&set, path])?)
                }
                (None, Some(k)) => {
                    let shift: Vec<i64> = a.lo().iter().map(|&v| -v).collect();
                    let a = a.translate(&shift)?;
                    let extents: Vec<i64> = a.hi().iter().map(|&h| h + 1).collect();
                    (a, shift, canonical_embedding(&extents, k)?, digest(&[&set])?)
                }
                (None, None) => return Err(invalid("either --k or --map is required")),
            };
            let cfg = ctx.engine(t, rounds);
            let rep = bound_3d_via_embedding(&a, &m, &cfg)?;
            let image = llab::freiman::image_set(&m, &a)?;
            let f = grid::evaluate_fft_with(&image, &rep.certificate.grid, &ctx.limits)?;
            let check = verify_certificate(&rep.certificate, &f, &cfg);
            let budgets = if rep.grid_exact {
                Vec::new()
            } else {
                vec![format!("grid {} does not resolve every product; inexact mode", rep.grid)]
            };
            let output = Output::Bound3d {
                target: set_value(&image),
                size: a.len(),
                shift,
                map: m.to_file(),
                verified: check.pass,
                report: Box::new(rep),
            };
            emit(&ctx.report(Some(d), budgets, output), out.as_deref())?;
            if !check.pass {
                return Err(Fail {
                    code: EXIT_VERIFY,
                    message: format!("certificate failed its replay: {:?}", check.failed()),
                });
            }
            Ok(())
        }
    }
}

fn cmd_verify(args: VerifyArgs, ctx: &Ctx) -> Result<(), Fail> {
    if args.refine == 0 || args.refine % 2 == 0 {
        return Err(invalid("refine must be an odd positive integer"));
    }
    let d = digest(&[&args.report])?;
    let run: RunReport = serde_json::from_str(&fs::read_to_string(&args.report)?)?;
    let (target, cert) = match run.output {
        Output::Bound2d { target, report, .. } => (target, report.certificate),
        Output::Bound3d { target, report, .. } => (target, report.certificate),
        _ => return Err(invalid("the report holds no certificate")),
    };
    let target = LatticeSet::from_json(&target.to_string())?;
    let dims: Vec<usize> = cert.grid.iter().map(|&g| g * args.refine).collect();
    let f = grid::evaluate_fft_with(&target, &dims, &ctx.limits)?;
    let cfg = ctx.engine(None, None);
    let report = verify_certificate(&cert, &f, &cfg);
    let pass = report.pass;
    let output = Output::Verify {
        source: args.report.display().to_string(),
        pass,
        report,
    };
    emit(&ctx.report(Some(d), Vec::new(), output), args.out.as_deref())?;
    if pass {
        Ok(())
    } else {
        Err(Fail {
            code: EXIT_VERIFY,
            message: "certificate verification failed".into(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("llab: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let ctx = Ctx {
        seed: cli.seed,
        limits: Limits::from_env(),
        command: std::env::args().skip(1).collect(),
    };
    let start = Instant::now();
    let result = run(cli, &ctx);
    eprintln!("llab: wall time {:.3} s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("llab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
