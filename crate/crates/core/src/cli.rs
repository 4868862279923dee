//! The `subtyp` command line.
//!
//! [`run`] takes the argument list and output streams, so it can be driven
//! in-process. Exit codes: 0 success, 2 usage or input error, 3 infeasible,
//! 4 numerical failure or failed reproduction check.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::covering::{self, ExponentMode, TypicalityKind, TypicalityParams};
use crate::error::{Error, Result};
use crate::gray_wyner::{self, GWRates};
use crate::instance::InstanceFile;
use crate::maxent::{self, Feasibility, MaxentOptions, MaxentStatus};
use crate::pmf::{binary_entropy, ConstraintSystem, JointPmf, SubsetConstraint};
use crate::regions::{self, InequalitySystem, MembershipStatus, MembershipVerdict, RatePoint, UnionOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Rstar,
    Ra,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionKind {
    Rstar,
    RaUnion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Montecarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Typicality {
    Absolute,
    Robust,
}

impl From<Typicality> for TypicalityKind {
    fn from(t: Typicality) -> Self {
        match t {
            Typicality::Absolute => TypicalityKind::Absolute,
            Typicality::Robust => TypicalityKind::Robust,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "subtyp", version, about = "Subset typicality, maximum entropy and rate regions")]
pub struct Cli {
    /// Instance file, or builtin:theorem2 / builtin:pair-covering.
    #[arg(long, global = true)]
    pub instance: Option<String>,
    /// Master seed; required by randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the output here (and a manifest next to it) instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum entropy over all variables or over a subset.
    Maxent {
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<usize>>,
        /// Include the maximizing distribution.
        #[arg(long)]
        dump: bool,
    },
    /// Whether any joint satisfies all constraints.
    Feasibility,
    /// Inequality system of a rate region.
    Region {
        #[arg(long, value_enum)]
        which: Which,
        /// Joint distribution file for `--which ra`.
        #[arg(long)]
        ptilde: Option<PathBuf>,
    },
    /// Membership of a rate point.
    Member {
        #[arg(long, value_delimiter = ',', required = true)]
        point: Vec<f64>,
        #[arg(long, value_enum)]
        region: RegionKind,
    },
    /// Covering probability by simulation.
    Cover {
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, value_enum, default_value = "absolute")]
        typicality: Typicality,
        /// Superposition parents, e.g. `1:0;2:0`.
        #[arg(long)]
        parents: Option<String>,
    },
    /// Typical-set exponent per block length.
    Exponent {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        nmin: usize,
        #[arg(long)]
        nmax: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = covering::MIN_MONTE_CARLO_BUDGET)]
        budget: u64,
        #[arg(long, value_enum, default_value = "absolute")]
        typicality: Typicality,
        #[arg(long)]
        parents: Option<String>,
    },
    /// Three-user Gray-Wyner region for a source and test channel.
    GrayWyner {
        /// `r1,r2,r3,r12,r13,r23,r123` to test against the region.
        #[arg(long, value_delimiter = ',')]
        point: Option<Vec<f64>>,
    },
    /// Rebuilds the four-variable counterexample end to end.
    ReproTheorem2,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Maxent { .. } => "maxent",
            Command::Feasibility => "feasibility",
            Command::Region { .. } => "region",
            Command::Member { .. } => "member",
            Command::Cover { .. } => "cover",
            Command::Exponent { .. } => "exponent",
            Command::GrayWyner { .. } => "gray-wyner",
            Command::ReproTheorem2 => "repro-theorem2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_seconds: f64,
    pub output_sha256: String,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Path of the manifest written next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

struct Output {
    text: String,
    code: i32,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::NotConverged { .. } | Error::Lp(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_system(cli: &Cli) -> Result<ConstraintSystem> {
    let location = cli
        .instance
        .as_deref()
        .ok_or_else(|| usage("--instance is required for this command"))?;
    InstanceFile::load(location)?.constraint_system()
}

fn require_seed(cli: &Cli, what: &str) -> Result<u64> {
    cli.seed
        .ok_or_else(|| usage(format!("{what} is randomized and needs an explicit --seed")))
}

fn parse_parents(text: Option<&str>) -> Result<Vec<(usize, Vec<usize>)>> {
    let Some(text) = text else {
        return Ok(Vec::new());
    };
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|entry| {
            let (child, parents) = entry
                .split_once(':')
                .ok_or_else(|| usage(format!("parent entry {entry:?} must look like child:p1,p2")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format!("bad index {s:?} in --parents")))
            };
            let mut ps = parents.split(',').map(parse).collect::<Result<Vec<_>>>()?;
            ps.sort_unstable();
            Ok((parse(child)?, ps))
        })
        .collect()
}

fn report_only(format: Option<Format>) -> Result<()> {
    match format {
        Some(Format::Csv) => Err(usage("this command only produces JSON")),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct MaxentReport {
    subset: Vec<usize>,
    entropy_bits: f64,
    status: MaxentStatus,
    iterations: usize,
    residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution: Option<JointPmf>,
}

fn cmd_maxent(cli: &Cli, subset: Option<&[usize]>, dump: bool) -> Result<Output> {
    report_only(cli.format)?;
    let cs = load_system(cli)?;
    let subset: Vec<usize> = subset.map_or_else(|| (0..cs.num_vars()).collect(), <[usize]>::to_vec);
    let local = cs.restrict(&subset)?.with_marginal_constraints();
    let r = maxent::maxent(&local, &MaxentOptions::default())?;
    let code = match r.status {
        MaxentStatus::Converged => EXIT_OK,
        MaxentStatus::InfeasibleDetected => EXIT_INFEASIBLE,
        MaxentStatus::IterationLimit => EXIT_NUMERICAL,
    };
    let report = MaxentReport {
        subset,
        entropy_bits: r.entropy_bits,
        status: r.status,
        iterations: r.iterations,
        residual: r.residual,
        distribution: dump.then_some(r.distribution),
    };
    Ok(Output {
        text: json(&report)?,
        code,
    })
}

fn cmd_feasibility(cli: &Cli) -> Result<Output> {
    report_only(cli.format)?;
    let cs = load_system(cli)?;
    let f = maxent::feasibility(&cs)?;
    let code = if f.is_feasible() { EXIT_OK } else { EXIT_INFEASIBLE };
    Ok(Output {
        text: json(&f)?,
        code,
    })
}

fn cmd_region(cli: &Cli, which: Which, ptilde: Option<&Path>) -> Result<Output> {
    let sys: InequalitySystem = match which {
        Which::Rstar => regions::build_rstar(&load_system(cli)?, &MaxentOptions::default())?,
        Which::Ra => {
            let path = ptilde.ok_or_else(|| usage("--which ra needs --ptilde"))?;
            let text = std::fs::read_to_string(path)?;
            let p: JointPmf = serde_json::from_str(&text)?;
            regions::build_ra_fixed(&p)
        }
    };
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => sys.to_csv(),
        Format::Json => json(&sys)?,
    };
    Ok(Output { text, code: EXIT_OK })
}

fn cmd_member(cli: &Cli, point: &[f64], region: RegionKind) -> Result<Output> {
    report_only(cli.format)?;
    let cs = load_system(cli)?;
    let r = RatePoint::new(point.to_vec())?;
    let verdict = match region {
        RegionKind::Rstar => {
            regions::point_in_system(&r, &regions::build_rstar(&cs, &MaxentOptions::default())?)?
        }
        RegionKind::RaUnion => regions::point_in_ra_union(&r, &cs, &UnionOptions::default())?,
    };
    Ok(Output {
        text: json(&verdict)?,
        code: EXIT_OK,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_cover(
    cli: &Cli,
    rates: &[f64],
    n: usize,
    eps: f64,
    trials: usize,
    typicality: Typicality,
    parents: Option<&str>,
) -> Result<Output> {
    report_only(cli.format)?;
    let seed = require_seed(cli, "cover")?;
    let cs = load_system(cli)?;
    let tp = TypicalityParams::with_kind(n, eps, typicality.into())?;
    let parents = parse_parents(parents)?;
    let report =
        covering::estimate_cover_prob(&cs, &RatePoint::new(rates.to_vec())?, &tp, &parents, trials, seed)?;
    Ok(Output {
        text: json(&report)?,
        code: EXIT_OK,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_exponent(
    cli: &Cli,
    mode: Mode,
    nmin: usize,
    nmax: usize,
    eps: f64,
    budget: u64,
    typicality: Typicality,
    parents: Option<&str>,
) -> Result<Output> {
    if nmin == 0 || nmin > nmax {
        return Err(usage("need 1 <= nmin <= nmax"));
    }
    let cs = load_system(cli)?;
    let mode = match mode {
        Mode::Exact => ExponentMode::Exact,
        Mode::Montecarlo => ExponentMode::MonteCarlo {
            budget,
            seed: require_seed(cli, "exponent --mode montecarlo")?,
        },
    };
    let ns: Vec<usize> = (nmin..=nmax).collect();
    let table = covering::exponent_probe(
        &cs,
        &ns,
        eps,
        typicality.into(),
        mode,
        &parse_parents(parents)?,
        &MaxentOptions::default(),
    )?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => table.to_csv(),
        Format::Json => json(&table)?,
    };
    Ok(Output { text, code: EXIT_OK })
}

fn cmd_gray_wyner(cli: &Cli, point: Option<&[f64]>) -> Result<Output> {
    let location = cli
        .instance
        .as_deref()
        .ok_or_else(|| usage("--instance is required for this command"))?;
    let inst = InstanceFile::load(location)?.gw_instance()?;
    let region = gray_wyner::evaluate_gw_region(&inst, &MaxentOptions::default())?;
    if let Some(point) = point {
        report_only(cli.format)?;
        let verdict = gray_wyner::gw_point_check(&region, &GWRates::from_slice(point)?);
        return Ok(Output {
            text: json(&verdict)?,
            code: EXIT_OK,
        });
    }
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => region.to_csv(),
        Format::Json => json(&region)?,
    };
    Ok(Output { text, code: EXIT_OK })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubsetEntropy {
    pub subset: Vec<usize>,
    pub h_star_bits: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReproChecks {
    pub corner_inside_rstar: bool,
    pub corner_outside_ra_union: bool,
    pub zero_rates_infeasible: bool,
}

/// Output of [`repro_theorem2`]. Variables are zero-based.
#[derive(Clone, Debug, Serialize)]
pub struct ReproReport {
    pub constraints: Vec<SubsetConstraint>,
    pub h_star: Vec<SubsetEntropy>,
    /// `c_J` for `J = {i, 3}`, `i = 0, 1, 2`.
    pub pair_bounds: Vec<f64>,
    /// `H_b(1/4) - 1/2`.
    pub pair_bound_expected: f64,
    pub rstar: InequalitySystem,
    pub corner: Vec<f64>,
    pub rstar_verdict: MembershipVerdict,
    pub ra_union_verdict: MembershipVerdict,
    pub zero_rate_certificate: Feasibility,
    pub checks: ReproChecks,
}

impl ReproReport {
    pub fn passed(&self) -> bool {
        self.checks.corner_inside_rstar
            && self.checks.corner_outside_ra_union
            && self.checks.zero_rates_infeasible
    }

    pub fn failed_steps(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.checks.corner_inside_rstar {
            out.push("(e) corner inside improved region");
        }
        if !self.checks.corner_outside_ra_union {
            out.push("(e) corner outside union of fixed-joint regions");
        }
        if !self.checks.zero_rates_infeasible {
            out.push("(f) zero-rate certificate");
        }
        out
    }
}

pub fn theorem2_system() -> ConstraintSystem {
    InstanceFile::parse(crate::instance::THEOREM2)
        .and_then(|f| f.constraint_system())
        .expect("built-in instance is valid")
}

pub fn repro_theorem2(opts: &MaxentOptions, union: &UnionOptions) -> Result<ReproReport> {
    let cs = theorem2_system();
    let table = regions::max_entropy_table(&cs, opts)?;
    let h = cs.marginal_entropies();
    let rstar = regions::build_rstar(&cs, opts)?;
    let pair_bounds = (0..3)
        .map(|i| rstar.bound(&[i, 3]).expect("pair present"))
        .collect();
    let corner_last = rstar.bound(&[0, 1, 2, 3]).expect("full set present");
    debug_assert!((corner_last - (h.iter().sum::<f64>() - table.last().expect("nonempty").1)).abs() < 1e-12);
    let corner = vec![0.0, 0.0, 0.0, corner_last];
    let point = RatePoint::new(corner.clone())?;
    let rstar_verdict = regions::point_in_system(&point, &rstar)?;
    let ra_union_verdict = regions::point_in_ra_union(&point, &cs, union)?;
    let zero_rate_certificate = regions::zero_rate_certificate(&cs, &[0, 1, 2])?;
    let checks = ReproChecks {
        corner_inside_rstar: rstar_verdict.status == MembershipStatus::Inside,
        corner_outside_ra_union: ra_union_verdict.status == MembershipStatus::Outside,
        zero_rates_infeasible: !zero_rate_certificate.is_feasible(),
    };
    Ok(ReproReport {
        constraints: cs.constraints().to_vec(),
        h_star: table
            .into_iter()
            .map(|(subset, h_star_bits)| SubsetEntropy { subset, h_star_bits })
            .collect(),
        pair_bounds,
        pair_bound_expected: binary_entropy(0.25)? - 0.5,
        rstar,
        corner,
        rstar_verdict,
        ra_union_verdict,
        zero_rate_certificate,
        checks,
    })
}

fn cmd_repro(cli: &Cli, err: &mut dyn Write) -> Result<Output> {
    report_only(cli.format)?;
    let report = repro_theorem2(&MaxentOptions::default(), &UnionOptions::default())?;
    let code = if report.passed() {
        EXIT_OK
    } else {
        for step in report.failed_steps() {
            let _ = writeln!(err, "repro-theorem2: step {step} failed");
        }
        EXIT_NUMERICAL
    };
    Ok(Output {
        text: json(&report)?,
        code,
    })
}

fn dispatch(cli: &Cli, err: &mut dyn Write) -> Result<Output> {
    match &cli.command {
        Command::Maxent { subset, dump } => cmd_maxent(cli, subset.as_deref(), *dump),
        Command::Feasibility => cmd_feasibility(cli),
        Command::Region { which, ptilde } => cmd_region(cli, *which, ptilde.as_deref()),
        Command::Member { point, region } => cmd_member(cli, point, *region),
        Command::Cover {
            rates,
            n,
            eps,
            trials,
            typicality,
            parents,
        } => cmd_cover(cli, rates, *n, *eps, *trials, *typicality, parents.as_deref()),
        Command::Exponent {
            mode,
            nmin,
            nmax,
            eps,
            budget,
            typicality,
            parents,
        } => cmd_exponent(cli, *mode, *nmin, *nmax, *eps, *budget, *typicality, parents.as_deref()),
        Command::GrayWyner { point } => cmd_gray_wyner(cli, point.as_deref()),
        Command::ReproTheorem2 => cmd_repro(cli, err),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let start = Instant::now();
    let output = match dispatch(&cli, err) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        args: args.iter().skip(1).cloned().collect(),
        seed: cli.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: start.elapsed().as_secs_f64(),
        output_sha256: digest(output.text.as_bytes()),
    };
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &output.text).and_then(|_| {
            let m = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
            std::fs::write(manifest_path(path), m + "\n")
        }),
        None => out.write_all(output.text.as_bytes()).and_then(|_| {
            let m = serde_json::to_string(&manifest).map_err(std::io::Error::other)?;
            writeln!(err, "{m}")
        }),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    output.code
}
