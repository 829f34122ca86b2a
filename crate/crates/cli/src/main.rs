use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use num_rational::BigRational;
use pofin_core::cert::{
    certify_equal, certify_incomparable, certify_kappa, certify_reduce, check_text, parse_scale,
    report_cert, CertFile, KappaInputs, PairInputs, Rejection, SpecFile, Table,
};
use pofin_core::dyadic_fn::DyadicFunction;
use pofin_core::embedding::{
    antichain, classify_pair, eta_scales, incomparability_witness, inv_l_eta, sandwich_build,
    tower_eval, EtaSpec, TowerKind,
};
use pofin_core::numeric::{set_prec_cap, set_working_prec};
use pofin_core::relation::RelationSpec;
use pofin_core::scales::{block_partition, weight_seq, KSpec, ScaleSystem};
use pofin_core::subsets::{parse_branch, SubsetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const PASS: u8 = 0;
const FAIL: u8 = 2;
const UNKNOWN: u8 = 3;
const USAGE: u8 = 4;

const AFTER_HELP: &str = "\
EXIT CODES:
    0  verified
    2  a named inequality failed
    3  undecided at the precision cap
    4  usage, parse or schema error

EXAMPLES:
    $ pofin build --alpha 1 --set periodic:/10 --scale pow2 --delta 1/2 --out evens.json
    $ pofin certify reduce --u periodic:/10 --v periodic:/1 --depth 1024 --out red.json
    $ pofin check red.json
    $ pofin certify incomparable --u periodic:/10 --v periodic:/01 --levels 8 --out inc.json
    $ pofin report inc.json --csv

ENVIRONMENT:
    POFIN_PREC_CAP
        Largest precision in bits that comparisons may escalate to
        (default 16384).
";

#[derive(Parser, Debug)]
#[command(name = "pofin", version)]
#[command(about = "Finite-depth certificates for weighted l_p-like relations indexed by P(omega)/Fin")]
#[command(after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    run: RunConfig,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct RunConfig {
    /// Grid depth: samples at 1/2^n for n <= depth
    #[arg(long, global = true, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(16..))]
    depth: u64,

    /// Working precision in bits
    #[arg(long, global = true, default_value_t = 256, value_parser = clap::value_parser!(u64).range(64..))]
    prec: u64,

    /// Largest exponent tried when searching power-of-two constants
    #[arg(long = "cap-c", global = true, default_value_t = 64)]
    cap_c: u32,

    /// Levels of incomparability witnesses
    #[arg(long, global = true, default_value_t = 8)]
    levels: usize,

    /// Seed for randomized choices
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file; stdout when absent
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Emit CSV
    #[arg(long, global = true)]
    csv: bool,

    #[arg(long, env = "POFIN_PREC_CAP", default_value_t = 16384, hide = true)]
    prec_cap: u64,
}

#[derive(Args, Debug, Clone)]
struct SystemArgs {
    /// Exponent alpha >= 1
    #[arg(long, default_value = "1")]
    alpha: String,

    /// Scale indices: pow2, pow2shift:<s>, tower:<j> or a comma list
    #[arg(long, default_value = "pow2")]
    scale: String,

    /// delta as p/q, or a comma list of factors
    #[arg(long, default_value = "1/2")]
    delta: String,

    /// Envelope: const:<q>, idpow:<alpha> or inv_t:0
    #[arg(long, default_value = "const:1")]
    phi: String,
}

#[derive(Args, Debug, Clone)]
struct PairArgs {
    #[arg(long)]
    u: String,
    #[arg(long)]
    v: String,
    #[command(flatten)]
    sys: SystemArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a relation spec file
    Build {
        /// Subset of omega, e.g. periodic:/10
        #[arg(long, default_value = "periodic:/1")]
        set: String,
        /// Build the tower-scale system of an eta sequence instead
        #[arg(long)]
        eta: Option<String>,
        #[command(flatten)]
        sys: SystemArgs,
    },
    /// Build and self-check a certificate file
    Certify {
        #[arg(value_enum)]
        kind: CertKind,
        #[arg(long)]
        u: Option<String>,
        #[arg(long)]
        v: Option<String>,
        /// Target exponent for kappa
        #[arg(long, default_value = "2")]
        beta: String,
        #[command(flatten)]
        sys: SystemArgs,
    },
    /// Re-verify a certificate file
    Check { file: PathBuf },
    /// Tabulate a certificate or spec file
    Report { file: PathBuf },
    /// Decide the relation between two sets and print the evidence
    Classify(PairArgs),
    /// Incomparability witness for U against V
    Witness(PairArgs),
    /// Pairwise witnesses for tree branches
    Antichain {
        /// Branch codes such as 0110; repeat the flag
        #[arg(long = "branch")]
        branches: Vec<String>,
        /// Random distinct branches of full length, drawn with --seed
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 64)]
        tree_depth: usize,
        #[command(flatten)]
        sys: SystemArgs,
    },
    /// Scale factors of an eta sequence
    Eta {
        #[arg(long)]
        eta: String,
        #[arg(long, default_value_t = 20)]
        m_max: usize,
    },
    /// f_U between l_eta and l_eta'
    Sandwich {
        #[arg(long)]
        eta: String,
        #[arg(long = "eta2")]
        eta2: String,
        #[arg(long, default_value = "periodic:/1")]
        set: String,
        #[arg(long, default_value = "1")]
        alpha: String,
    },
    /// t_n, s_n at 1/2^arg, p_n, or k_n(arg)
    Tower {
        #[arg(value_enum)]
        kind: TowerArg,
        index: u32,
        #[arg(default_value = "0")]
        arg: String,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CertKind {
    Reduce,
    Incomparable,
    Equal,
    Kappa,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum TowerArg {
    T,
    S,
    P,
    K,
}

/// Outcome of one command.
enum Done {
    Fail(String),
    Unknown(String),
    Usage(String),
}

impl From<Rejection> for Done {
    fn from(r: Rejection) -> Self {
        match r {
            Rejection::Fail(s) => Done::Fail(s),
            Rejection::Unknown(s) => Done::Unknown(s),
            Rejection::Input(s) => Done::Usage(s),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Done {
    Done::Usage(e.to_string())
}

fn rational(s: &str) -> Result<BigRational, Done> {
    BigRational::from_str(s.trim()).map_err(|_| Done::Usage(format!("bad rational `{s}`")))
}

fn set(s: &str) -> Result<SubsetSpec, Done> {
    SubsetSpec::from_str(s).map_err(usage)
}

fn system(a: &SystemArgs) -> Result<ScaleSystem, Done> {
    parse_scale(&a.scale, &a.delta).map_err(Done::from)
}

/// Write to a sibling temp file then rename over the target.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn emit(run: &RunConfig, text: &str) -> Result<(), Done> {
    match &run.out {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(usage),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(usage),
    }
}

fn emit_json<T: Serialize>(run: &RunConfig, v: &T) -> Result<(), Done> {
    let mut s = serde_json::to_string_pretty(v).map_err(usage)?;
    s.push('\n');
    emit(run, &s)
}

fn emit_table(run: &RunConfig, t: &Table) -> Result<(), Done> {
    let text = if run.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&t.header).map_err(usage)?;
        for r in &t.rows {
            w.write_record(r).map_err(usage)?;
        }
        String::from_utf8(w.into_inner().map_err(usage)?).map_err(usage)?
    } else {
        let widths: Vec<usize> = (0..t.header.len())
            .map(|i| {
                t.rows
                    .iter()
                    .map(|r| r[i].len())
                    .chain([t.header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: Vec<&str>| -> String {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            parts.join("  ") + "\n"
        };
        let mut s = line(t.header.clone());
        for r in &t.rows {
            s += &line(r.iter().map(String::as_str).collect());
        }
        s
    };
    emit(run, &text)
}

fn pair_inputs(run: &RunConfig, u: &str, v: &str, sys: &SystemArgs) -> Result<PairInputs, Done> {
    set(u)?;
    set(v)?;
    Ok(PairInputs {
        u: u.into(),
        v: v.into(),
        scale: system(sys)?,
        alpha: rational(&sys.alpha)?,
        phi: sys.phi.clone(),
        depth: run.depth,
        cap: run.cap_c,
        levels: run.levels,
    })
}

fn run_build(run: &RunConfig, set_s: &str, eta: Option<&str>, sys: &SystemArgs) -> Result<(), Done> {
    let u = set(set_s)?;
    let alpha = rational(&sys.alpha)?;
    let (scale, env) = match eta {
        Some(e) => {
            let spec = EtaSpec::from_str(e).map_err(usage)?;
            let j0 = spec.j0.ok_or_else(|| usage("eta is identically zero"))?;
            let probe = ScaleSystem {
                k: KSpec::Tower(j0 as u32),
                ..ScaleSystem::standard()
            };
            let m_max = probe.ks_upto(run.depth).map_err(usage)?.len();
            let (s, _) = eta_scales(&spec, m_max).map_err(|e| Done::from(Rejection::from(e)))?;
            let env = inv_l_eta(&spec, run.depth).map_err(|e| Done::from(Rejection::from(e)))?;
            (s, env)
        }
        None => {
            let s = system(sys)?;
            let env = DyadicFunction::builtin(&sys.phi, run.depth).map_err(usage)?;
            (s, env)
        }
    };
    let w = weight_seq(&u, &scale, &mut block_partition(4), run.depth)
        .map_err(|e| Done::from(Rejection::from(e)))?;
    let r = RelationSpec::new(alpha, env, w, run.cap_c).map_err(|e| Done::from(Rejection::from(e)))?;
    let f = SpecFile::new(&u, scale, eta.map(String::from), r);
    emit_json(run, &f)
}

fn run_certify(
    run: &RunConfig,
    kind: CertKind,
    u: Option<&str>,
    v: Option<&str>,
    beta: &str,
    sys: &SystemArgs,
) -> Result<(), Done> {
    let file = match kind {
        CertKind::Kappa => certify_kappa(&KappaInputs {
            alpha: rational(&sys.alpha)?,
            beta: rational(beta)?,
            phi: sys.phi.clone(),
            depth: run.depth,
            cap: run.cap_c,
        })?,
        _ => {
            let (u, v) = match (u, v) {
                (Some(u), Some(v)) => (u, v),
                _ => return Err(usage("--u and --v are required")),
            };
            let inp = pair_inputs(run, u, v, sys)?;
            match kind {
                CertKind::Reduce => certify_reduce(&inp)?,
                CertKind::Equal => certify_equal(&inp)?,
                CertKind::Incomparable => certify_incomparable(&inp)?,
                CertKind::Kappa => unreachable!(),
            }
        }
    };
    emit(run, &file.to_json())?;
    eprintln!("certified {} ({})", file.body.kind(), &file.body_sha256[..16]);
    Ok(())
}

fn read(path: &Path) -> Result<String, Done> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run_check(path: &Path) -> Result<(), Done> {
    let text = read(path)?;
    check_text(&text).map_err(usage)??;
    let kind = CertFile::parse(&text).map_err(usage)?.body.kind();
    eprintln!("ok: {kind} certificate verified");
    Ok(())
}

fn run_report(run: &RunConfig, path: &Path) -> Result<(), Done> {
    let text = read(path)?;
    let table = match CertFile::parse(&text) {
        Ok(f) => report_cert(&f)?,
        Err(cert_err) => {
            let spec: SpecFile = serde_json::from_str(&text)
                .map_err(|_| usage(format!("neither certificate nor spec: {cert_err}")))?;
            if !spec.hash_ok() {
                return Err(Done::Fail("SpecHashMismatch".into()));
            }
            spec.report()?
        }
    };
    emit_table(run, &table)
}

fn random_branches(n: usize, depth: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<bool>> = Vec::with_capacity(n);
    while out.len() < n {
        let b: Vec<bool> = (0..depth).map(|_| rng.gen()).collect();
        if !out.contains(&b) {
            out.push(b);
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), Done> {
    let run = &cli.run;
    if run.prec > run.prec_cap {
        return Err(usage(format!("--prec {} exceeds the cap {}", run.prec, run.prec_cap)));
    }
    set_prec_cap(run.prec_cap);
    set_working_prec(run.prec);
    match &cli.cmd {
        Command::Build { set, eta, sys } => run_build(run, set, eta.as_deref(), sys),
        Command::Certify { kind, u, v, beta, sys } => {
            run_certify(run, *kind, u.as_deref(), v.as_deref(), beta, sys)
        }
        Command::Check { file } => run_check(file),
        Command::Report { file } => run_report(run, file),
        Command::Classify(p) => {
            let (u, v) = (set(&p.u)?, set(&p.v)?);
            let s = system(&p.sys)?;
            let phi = DyadicFunction::builtin(&p.sys.phi, run.depth).map_err(usage)?;
            let verdict = classify_pair(
                &u,
                &v,
                &s,
                &rational(&p.sys.alpha)?,
                &phi,
                run.depth,
                run.levels,
                run.cap_c,
            )
            .map_err(|e| Done::from(Rejection::from(e)))?;
            eprintln!("{}", verdict.name());
            emit_json(run, &verdict)
        }
        Command::Witness(p) => {
            let w = incomparability_witness(&set(&p.u)?, &set(&p.v)?, &system(&p.sys)?, run.levels)
                .map_err(|e| Done::from(Rejection::from(e)))?;
            emit_json(run, &w)
        }
        Command::Antichain {
            branches,
            count,
            tree_depth,
            sys,
        } => {
            let mut codes = branches
                .iter()
                .map(|b| parse_branch(b))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?;
            if let Some(n) = count {
                codes.extend(random_branches(*n, *tree_depth, run.seed));
            }
            let rep = antichain(&codes, &system(sys)?, *tree_depth, run.levels)
                .map_err(|e| Done::from(Rejection::from(e)))?;
            eprintln!(
                "{}/{} pairs incomparable within the window",
                rep.pairs.len(),
                codes.len() * (codes.len() - 1) / 2
            );
            emit_json(run, &rep)
        }
        Command::Eta { eta, m_max } => {
            let spec = EtaSpec::from_str(eta).map_err(usage)?;
            let (_, rep) = eta_scales(&spec, *m_max).map_err(|e| Done::from(Rejection::from(e)))?;
            emit_json(run, &rep)
        }
        Command::Sandwich {
            eta,
            eta2,
            set: s,
            alpha,
        } => {
            let (a, b) = (
                EtaSpec::from_str(eta).map_err(usage)?,
                EtaSpec::from_str(eta2).map_err(usage)?,
            );
            let rep = sandwich_build(&a, &b, &set(s)?, &rational(alpha)?, run.depth, run.cap_c)
                .map_err(|e| Done::from(Rejection::from(e)))?;
            eprintln!("delta = {}", rep.delta);
            emit_json(run, &rep)
        }
        Command::Tower { kind, index, arg } => {
            let kind = match kind {
                TowerArg::T => TowerKind::T,
                TowerArg::S => TowerKind::S,
                TowerArg::P => TowerKind::P,
                TowerArg::K => TowerKind::K,
            };
            let n: BigUint = arg.parse().map_err(|_| usage(format!("bad integer `{arg}`")))?;
            let v = tower_eval(kind, *index, &n).map_err(|e| Done::from(Rejection::from(e)))?;
            emit(run, &format!("{v}\n"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(PASS),
        Err(Done::Fail(r)) => {
            eprintln!("FAIL: {r}");
            ExitCode::from(FAIL)
        }
        Err(Done::Unknown(r)) => {
            eprintln!("UNKNOWN: {r}");
            ExitCode::from(UNKNOWN)
        }
        Err(Done::Usage(r)) => {
            eprintln!("error: {r}");
            ExitCode::from(USAGE)
        }
    }
}
