//! Command-line harness: instance generation, joint counting, the
//! heavy-chain pipeline, duality solves, and factorisation certificates.
//!
//! Exit codes: 0 success/pass, 1 mathematical failure (a witness was found
//! or a bound is violated), 2 input error, 3 solver nonconvergence.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::{One, ToPrimitive};

use multijoints::certificate::{
    factorise, multijoint_factorise, verify_certificate, FactorMode, Verdict, VerifyScope,
};
use multijoints::duality::{
    diag_offdiag_constants, map_tables_back, reduce_to_q1, solve, SolveMode, SolverOptions,
};
use multijoints::field::rational_string;
use multijoints::heavy::{
    build_s, derived_b, find_heavy_chain, main_estimate_ratio, verify_admissibility,
};
use multijoints::io::{
    certificate_from_json, certificate_to_json, multijoint_to_json, InstanceFile,
    LoadedCertificate,
};
use multijoints::joints::{joint_summary, zhang_report};
use multijoints::report::Report;
use multijoints::{Error, FieldSpec, Result};

#[derive(Parser)]
#[command(
    name = "multijoints",
    version,
    about = "Factorisation certificates for the joints and multijoints problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for enumeration-heavy verification.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Report rendering.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct InputArgs {
    /// Instance file; stdin when omitted.
    #[arg(long, short = 'i')]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Relative primal/dual gap demanded before a solve counts as converged.
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    /// Subgradient iteration budget.
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

impl SolveArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions { rel_tol: self.rel_tol, max_iterations: self.max_iter, ..Default::default() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance file.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Count the joints of the instance's line family.
    Joints(InputArgs),
    /// Joint-count inequality: sum_x N(x)^{1/(d-1)} against |L|^{d/(d-1)}.
    Zhang(InputArgs),
    /// Heavy-chain pipeline: chain, rho weights, admissibility, estimate.
    HeavyS(InputArgs),
    /// Solve the instance's generic duality problem: primal, dual, gap.
    Duality {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolveArgs,
    },
    /// Factorisation certificate for M against all lines.
    Factor {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolveArgs,
        /// Write the certificate here.
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Multijoint certificate for the instance's d line families.
    FactorMulti {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolveArgs,
        /// Write the certificate here.
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Re-check a stored certificate against the instance's M.
    Verify {
        #[command(flatten)]
        input: InputArgs,
        /// Certificate file to check.
        #[arg(long)]
        cert: PathBuf,
        /// Spot-check this many random tuples instead of everything.
        #[arg(long)]
        sampled: Option<usize>,
        /// Seed for sampled verification.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Diagonal and off-diagonal sharpness constants of the duality kernel.
    DiagOffdiag(InputArgs),
}

#[derive(Subcommand)]
enum GenKind {
    /// Axis-parallel lines of the n x ... x n grid with M = f = 1.
    Grid {
        #[arg(long)]
        n: u64,
        /// Ambient dimension.
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// Prime modulus; omit for the rationals.
        #[arg(long)]
        p: Option<u64>,
    },
    /// Uniform random lines over F_p (collisions become multiplicities).
    RandomLines {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long)]
        p: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Distinct random lines over F_p with weights uniform in 1..=100.
    RandomWeights {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long)]
        p: u64,
        #[arg(long)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // A second build_global in-process is harmless; keep the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonConvergence(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let report = match &cli.command {
        Command::Gen { kind } => {
            let inst = match kind {
                GenKind::Grid { n, d, p } => multijoints::gen::grid(field_of(*p)?, *d, *n)?,
                GenKind::RandomLines { count, d, p, seed } => {
                    multijoints::gen::random_lines(field_of(Some(*p))?, *d, *count, *seed)?
                }
                GenKind::RandomWeights { count, d, p, seed } => {
                    multijoints::gen::random_weights(field_of(Some(*p))?, *d, *count, *seed)?
                }
            };
            write_output(&cli.out, &(inst.to_json() + "\n"))?;
            return Ok(ExitCode::SUCCESS);
        }
        Command::Joints(input) => cmd_joints(input)?,
        Command::Zhang(input) => cmd_zhang(input)?,
        Command::HeavyS(input) => cmd_heavy_s(input)?,
        Command::Duality { input, solver } => cmd_duality(input, solver)?,
        Command::Factor { input, solver, cert } => cmd_factor(input, solver, cert.as_deref())?,
        Command::FactorMulti { input, solver, cert } => {
            cmd_factor_multi(input, solver, cert.as_deref())?
        }
        Command::Verify { input, cert, sampled, seed } => {
            cmd_verify(input, cert, *sampled, *seed)?
        }
        Command::DiagOffdiag(input) => cmd_diag_offdiag(input)?,
    };
    let rendered = match cli.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    write_output(&cli.out, &rendered)?;
    Ok(if report.pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn field_of(p: Option<u64>) -> Result<FieldSpec> {
    match p {
        Some(p) => FieldSpec::prime(p),
        None => Ok(FieldSpec::Rational),
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Reads and parses the instance, returning the raw text for digesting.
fn read_instance(input: &InputArgs) -> Result<(InstanceFile, String)> {
    let text = match &input.input {
        Some(path) => fs::read_to_string(path)?,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    Ok((InstanceFile::from_json(&text)?, text))
}

fn base_report(command: &str, inst: &InstanceFile, text: &str) -> Report {
    let p = match inst.field {
        FieldSpec::Fp(p) => Some(p),
        FieldSpec::Rational => None,
    };
    Report::new(command, inst.dim, p).with_digest(text)
}

fn cmd_joints(input: &InputArgs) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let summary = joint_summary(&inst.family()?);
    let mut report = base_report("joints", &inst, &text);
    report.push("lines", inst.lines.iter().map(|il| il.multiplicity).sum::<u64>());
    report.push("joints", summary.counts.len());
    report.push("n_min", summary.counts.values().min().copied().unwrap_or(0));
    report.push("n_max", summary.counts.values().max().copied().unwrap_or(0));
    Ok(report)
}

fn cmd_zhang(input: &InputArgs) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let z = zhang_report(&inst.family()?);
    let mut report = base_report("zhang", &inst, &text);
    report.push("joints", z.joints);
    report.push("lhs", z.lhs);
    report.push("rhs", z.rhs);
    report.push("ratio", z.ratio);
    Ok(report)
}

fn cmd_heavy_s(input: &InputArgs) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let f = inst.direction_weights()?;
    let chain = find_heavy_chain(&f)?;
    let s = build_s(&f)?;
    let adm = verify_admissibility(&s, &f)?;
    let ratio = main_estimate_ratio(&s, &f)?;
    let bound = derived_b(inst.dim)?;

    let mut report = base_report("heavy-s", &inst, &text);
    report.push("lines", f.len());
    report.push("mass", rational_string(&f.total()));
    report.push(
        "chain",
        chain.dims().iter().map(usize::to_string).collect::<Vec<_>>().join("<"),
    );
    report.push("all_in_hyperplane", s.all_in_hyperplane());
    let rho: Vec<String> = s
        .rho()
        .iter()
        .map(|r| {
            let (num, den) = r.exponent();
            format!("({})^({num}/{den})", rational_string(r.radicand()))
        })
        .collect();
    report.push("rho", rho.join(";"));
    report.push("checked", adm.checked);
    report.push("ratio", ratio);
    report.push("bound", bound.to_f64());
    let pass = adm.pass && ratio <= bound.to_f64() + 1e-9;
    if let Some(w) = &adm.witness {
        let lines: Vec<String> = w.lines.iter().map(|l| l.to_string()).collect();
        report.push("witness", format!("admissibility fails at {}", lines.join(" | ")));
    }
    report.set_pass(pass);
    Ok(report)
}

fn duality_instance(inst: &InstanceFile) -> Result<&multijoints::duality::DiscreteInstance> {
    inst.duality
        .as_ref()
        .ok_or_else(|| Error::Parse("instance file has no duality section".into()))
}

fn cmd_duality(input: &InputArgs, solver: &SolveArgs) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let problem = duality_instance(&inst)?;
    let opts = solver.options();
    let mode = if problem.is_symmetric() { SolveMode::Symmetric } else { SolveMode::Multilinear };

    let (tables, solve_report) = if problem.q().is_one() {
        solve(problem, mode, &opts)?
    } else {
        let reduction = reduce_to_q1(problem)?;
        let (tables, r) = solve(&reduction.instance, mode, &opts)?;
        (map_tables_back(problem, &reduction, &tables)?, r)
    };
    if !solve_report.gap.is_finite() || solve_report.gap > opts.rel_tol {
        return Err(Error::NonConvergence(format!(
            "gap {:.3e} above tolerance {:.1e} after {} iterations",
            solve_report.gap, opts.rel_tol, solve_report.iterations
        )));
    }
    tables.feasible_exact(problem)?;

    let mut report = Report::new("duality", problem.dim(), None).with_digest(&text);
    report.push("points", problem.points());
    report.push(
        "mode",
        match mode {
            SolveMode::Symmetric => "symmetric",
            SolveMode::Multilinear => "multilinear",
        },
    );
    report.push("primal", solve_report.primal);
    report.push("dual", solve_report.dual);
    report.push("gap", solve_report.gap);
    report.push("iterations", solve_report.iterations);
    report.push("value", rational_string(&tables.value));
    Ok(report)
}

fn cmd_factor(input: &InputArgs, solver: &SolveArgs, cert_out: Option<&Path>) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let fac = factorise(inst.field, inst.dim, &inst.m, FactorMode::AllLines, &solver.options())?;
    let cert = &fac.certificate;
    if let Some(path) = cert_out {
        fs::write(path, certificate_to_json(cert) + "\n")?;
    }
    let mut report = base_report("factor", &inst, &text);
    report.push("support", cert.support().len());
    report.push("lines", cert.lines().len());
    report.push("value", rational_string(cert.value()));
    report.push("norm_pow", rational_string(&cert.norm_pow()));
    report.push("constant_f64", cert.constant()?.to_f64());
    report.push("iterations", fac.report.iterations);
    Ok(report)
}

fn cmd_factor_multi(
    input: &InputArgs,
    solver: &SolveArgs,
    cert_out: Option<&Path>,
) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let multi = inst.multi_family(inst.dim)?;
    let out = multijoint_factorise(&inst.m, &multi, &solver.options())?;
    let cert = &out.certificate;
    if let Some(path) = cert_out {
        fs::write(path, multijoint_to_json(cert) + "\n")?;
    }
    let mut report = base_report("factor-multi", &inst, &text);
    report.push("support", cert.joint().support().len());
    report.push("lines", cert.joint().lines().len());
    report.push(
        "slots",
        cert.slots().iter().map(|s| s.len().to_string()).collect::<Vec<_>>().join(";"),
    );
    report.push("value", rational_string(cert.joint().value()));
    report.push("constant_f64", cert.joint().constant()?.to_f64());
    report.push("iterations", out.report.iterations);
    Ok(report)
}

fn cmd_verify(
    input: &InputArgs,
    cert_path: &Path,
    sampled: Option<usize>,
    seed: u64,
) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let loaded = certificate_from_json(&fs::read_to_string(cert_path)?)?;
    let scope = match sampled {
        Some(samples) => VerifyScope::Sampled { seed, samples },
        None => VerifyScope::Exhaustive,
    };
    let outcome = match &loaded {
        LoadedCertificate::Joints(cert) => verify_certificate(cert, &inst.m, &scope)?,
        LoadedCertificate::Multi(cert) => cert.verify(&inst.m, &scope)?,
    };
    let mut report = base_report("verify", &inst, &text);
    if sampled.is_some() {
        report = report.with_seed(seed);
    }
    report.push(
        "kind",
        match &loaded {
            LoadedCertificate::Joints(_) => "joints",
            LoadedCertificate::Multi(_) => "multijoint",
        },
    );
    report.push("value", rational_string(loaded.joint().value()));
    report.push("checks", outcome.checks);
    match &outcome.verdict {
        Verdict::Pass => report.set_pass(true),
        Verdict::Fail(witness) => {
            report.push("witness", witness);
            report.set_pass(false);
        }
    }
    Ok(report)
}

fn cmd_diag_offdiag(input: &InputArgs) -> Result<Report> {
    let (inst, text) = read_instance(input)?;
    let problem = duality_instance(&inst)?;
    let c = diag_offdiag_constants(problem)?;
    let mut report = Report::new("diag-offdiag", problem.dim(), None).with_digest(&text);
    report.push("diag", c.diag_root);
    report.push("offdiag", c.offdiag_root);
    report.push("diag_form", c.diag_form);
    report.push("offdiag_form", c.offdiag_form);
    if let Some(e) = &c.diag_form_exact {
        report.push("diag_form_exact", rational_string(e));
    }
    if let Some(e) = &c.offdiag_form_exact {
        report.push("offdiag_form_exact", rational_string(e));
    }
    let d = problem.dim().to_f64().unwrap_or(f64::MAX);
    report.set_pass(c.offdiag_root <= d * c.diag_root + 1e-6);
    Ok(report)
}
