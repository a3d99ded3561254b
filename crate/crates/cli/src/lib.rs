//! Command-line front end: reads a JSON config, runs one pipeline and
//! writes `report.json` and `table.csv`.
//!
//! Exit codes: 0 when every check passed, 1 when a bound or check failed,
//! 2 on a malformed config or a violated precondition.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use suborbit::approx_l2n::{
    schedule_finite_support, schedule_sqrt2, verify_finite_support, Sqrt2Config,
};
use suborbit::approx_l2r::{
    branch_schedule, gabor_schedules, partition_frame, verify_gabor, verify_l2r, GaborSpec,
};
use suborbit::approx_localized::{schedule_localized, verify_localized, LocalizedParams};
use suborbit::construction::power_of_two_bound;
use suborbit::frame_algebra::empirical_frame_bounds;
use suborbit::operators::Branch;
use suborbit::schedule::PowerSchedule;
use suborbit::verify_suite::{scenario_suborbit_independence, scenario_two_orbit_example};
use suborbit::SampledFunction;

use config::{GaborConfig, L2nConfig, L2rConfig, LocalizedConfig};
use output::{float, generator_cells, residual_cells, Table, GENERATOR_COLUMNS, RESIDUAL_COLUMNS};

const TABLES_HELP: &str = "\
table.csv columns (floats printed with 17 significant digits):
  schedule            k,alpha,rule                 (one schedule)
                      k,alpha,alpha_rule,gamma,gamma_rule   (l2r, gabor)
  build               branch,n_terms,tail_bound,dropped_norm,min_lambda_exponent,
                      max_lambda_exponent,phi_ln_norm
  verify l2n          k,alpha,gap,measured,tail,bound_residual,budget,pass
  verify localized    k,alpha,gap,measured,measured_back,measured_forward,
                      truncation_charge,tail,bound_forward,bound_back,
                      bound_residual,budget,pass
  verify l2r, gabor   branch,m,n,k,alpha,gap,measured,tail,bound_residual,budget,pass
  scenario            name,measured,bound,pass
Squared norms are reported for l2n and l2r rows, norms for localized rows;
budget is always the squared-norm allowance eps*2^-k (halved per branch for l2r).

Exit status: 0 all checks passed, 1 a check failed, 2 bad config or precondition.";

#[derive(Debug, Parser)]
#[command(
    name = "suborbit",
    version,
    about = "Construct and verify suborbit approximations of frames",
    after_help = TABLES_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    L2n,
    Localized,
    L2r,
    Gabor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rule {
    FiniteSupport,
    Sqrt2,
    Localized,
    L2r,
    Gabor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scenario {
    TwoOrbit,
    SuborbitIndependence,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the powers α (and γ) produced by a schedule rule.
    Schedule(ScheduleArgs),
    /// Build the generator(s) and summarize them.
    Build {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full construction and check every bound.
    Verify {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The Gabor pipeline; same as `verify --kind gabor`.
    Gabor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named verification scenario.
    Scenario {
        #[arg(long, value_enum)]
        name: Scenario,
        /// Dimension for two-orbit (at least 4).
        #[arg(long = "D", default_value_t = 12)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random vectors reconstructed by two-orbit.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct ScheduleArgs {
    #[arg(long, value_enum)]
    rule: Rule,
    /// Use the restricted closed form (sqrt2 only).
    #[arg(long)]
    restricted: bool,
    /// B = 2^N (sqrt2, gabor).
    #[arg(long = "N")]
    n: Option<u32>,
    /// ε = 2^-j (sqrt2, gabor).
    #[arg(long)]
    j: Option<u32>,
    /// Support lengths m(1), m(2), … (finite-support, sqrt2).
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Upper frame bound B.
    #[arg(long)]
    upper: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of powers. Defaults to one more than the number of supports,
    /// and to 8 for localized and gabor.
    #[arg(long)]
    len: Option<usize>,
    /// Localization constant (localized) or window length (gabor).
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Time step (gabor).
    #[arg(long)]
    a: Option<f64>,
    /// Grid denominator (gabor).
    #[arg(long, default_value_t = 16)]
    q: u32,
    /// Family config (l2r).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// What a subcommand produced.
struct Outcome {
    pass: bool,
    report: String,
    table: String,
}

impl Outcome {
    fn new(pass: bool, report: &impl Serialize, table: Table) -> Result<Self> {
        let mut report = serde_json::to_string_pretty(report)?;
        report.push('\n');
        Ok(Self {
            pass,
            report,
            table: table.render(),
        })
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (out, result) = execute(cli.command);
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    match out {
        Some(dir) => {
            if let Err(e) = write_outputs(&dir, &outcome) {
                eprintln!("error: {e:#}");
                return 2;
            }
        }
        None => print!("{}", outcome.table),
    }
    eprintln!("{}", if outcome.pass { "PASS" } else { "FAIL" });
    if outcome.pass {
        0
    } else {
        1
    }
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("report.json"), &outcome.report)?;
    fs::write(dir.join("table.csv"), &outcome.table)?;
    Ok(())
}

fn execute(command: Command) -> (Option<PathBuf>, Result<Outcome>) {
    match command {
        Command::Schedule(args) => {
            let out = args.out.clone();
            (out, schedule(&args))
        }
        Command::Build { kind, config, out } => (out, build(kind, &config)),
        Command::Verify { kind, config, out } => (out, verify(kind, &config)),
        Command::Gabor { config, out } => (out, verify(Kind::Gabor, &config)),
        Command::Scenario {
            name,
            dim,
            seed,
            samples,
            out,
        } => (out, scenario(name, dim, seed, samples)),
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("the rule needs --{flag}"),
    }
}

#[derive(Serialize)]
struct ScheduleReport<'a> {
    rule: &'a str,
    alpha: Option<&'a PowerSchedule>,
    gamma: Option<&'a PowerSchedule>,
}

fn schedule_table(alpha: Option<&PowerSchedule>, gamma: Option<&PowerSchedule>) -> Table {
    let rule_name = |s: &PowerSchedule, k: usize| {
        serde_json::to_value(s.rule(k))
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    };
    match (alpha, gamma) {
        (Some(a), None) | (None, Some(a)) => {
            let mut t = Table::new(&["k", "alpha", "rule"]);
            for k in 1..=a.len() {
                t.push(vec![k.to_string(), float(a.alpha(k)), rule_name(a, k)]);
            }
            t
        }
        (a, g) => {
            let mut t = Table::new(&["k", "alpha", "alpha_rule", "gamma", "gamma_rule"]);
            let len = a.map_or(0, |s| s.len()).max(g.map_or(0, |s| s.len()));
            let cell = |s: Option<&PowerSchedule>, k: usize| match s {
                Some(s) if k <= s.len() => (float(s.alpha(k)), rule_name(s, k)),
                _ => (String::new(), String::new()),
            };
            for k in 1..=len {
                let (av, ar) = cell(a, k);
                let (gv, gr) = cell(g, k);
                t.push(vec![k.to_string(), av, ar, gv, gr]);
            }
            t
        }
    }
}

fn schedule(args: &ScheduleArgs) -> Result<Outcome> {
    let supports_len = args.m.len() + 1;
    let (name, alpha, gamma) = match args.rule {
        Rule::FiniteSupport => {
            let s = schedule_finite_support(
                &args.m,
                required(args.lambda, "lambda")?,
                required(args.upper, "upper")?,
                required(args.epsilon, "epsilon")?,
                args.len.unwrap_or(supports_len),
            )?;
            ("finite_support", Some(s), None)
        }
        Rule::Sqrt2 => {
            let cfg = Sqrt2Config::new(required(args.n, "N")?, required(args.j, "j")?)?;
            let len = args.len.unwrap_or(supports_len);
            let s = schedule_sqrt2(&args.m, cfg, args.restricted, len)?;
            (if args.restricted { "sqrt2_restricted" } else { "sqrt2" }, Some(s), None)
        }
        Rule::Localized => {
            let s = schedule_localized(
                required(args.c, "C")?,
                required(args.beta, "beta")?,
                required(args.lambda, "lambda")?,
                required(args.upper, "upper")?,
                required(args.epsilon, "epsilon")?,
                args.len.unwrap_or(8),
            )?;
            ("localized", Some(s), None)
        }
        Rule::Gabor => {
            let c = required(args.c, "C")?;
            let spec = GaborSpec {
                window: SampledFunction::indicator(args.q, 0.0, c)?,
                a: required(args.a, "a")?,
                b: 1.0,
                m_range: 0,
                n_range: 0,
            };
            let (a, g) = gabor_schedules(
                &spec,
                required(args.n, "N")?,
                required(args.j, "j")?,
                args.len.unwrap_or(8),
            )?;
            ("gabor", Some(a), Some(g))
        }
        Rule::L2r => {
            let cfg: L2rConfig = read_config(&required(args.config.clone(), "config")?)?;
            let partition = partition_frame(&cfg.functions)?;
            let upper = match cfg.upper_bound {
                Some(b) => b,
                None => {
                    power_of_two_bound(empirical_frame_bounds(&cfg.functions, cfg.rank_tol)?.upper)
                        .1
                }
            };
            let mut out = [None, None];
            for (slot, branch) in out.iter_mut().zip([Branch::Positive, Branch::Negative]) {
                let available = partition.profile.branch_len(branch);
                if available == 0 {
                    continue;
                }
                let len = args.len.unwrap_or(available + 1).min(available + 1);
                *slot = Some(branch_schedule(
                    &partition.profile,
                    branch,
                    cfg.lambda,
                    upper,
                    cfg.epsilon,
                    len,
                )?);
            }
            let [a, g] = out;
            ("l2r", a, g)
        }
    };
    let table = schedule_table(alpha.as_ref(), gamma.as_ref());
    let report = ScheduleReport {
        rule: name,
        alpha: alpha.as_ref(),
        gamma: gamma.as_ref(),
    };
    Outcome::new(true, &report, table)
}

fn build(kind: Kind, path: &Path) -> Result<Outcome> {
    let mut table = Table::new(GENERATOR_COLUMNS);
    let summaries = match kind {
        Kind::L2n => {
            let cfg: L2nConfig = read_config(path)?;
            let v = verify_finite_support(&cfg.family.elements()?, &cfg.params())?;
            vec![("single", v.generator)]
        }
        Kind::Localized => {
            let (family, params) = localized_inputs(path)?;
            let v = verify_localized(&family, &params)?;
            vec![("single", v.generator)]
        }
        Kind::L2r => {
            let cfg: L2rConfig = read_config(path)?;
            let v = verify_l2r(&cfg.functions, &cfg.params())?;
            branch_generators(v.positive, v.negative)
        }
        Kind::Gabor => {
            let cfg: GaborConfig = read_config(path)?;
            let v = verify_gabor(&cfg.spec(), &cfg.params())?;
            branch_generators(v.verification.positive, v.verification.negative)
        }
    };
    for (name, g) in &summaries {
        table.push(generator_cells(name, g));
    }
    let report: Vec<_> = summaries
        .iter()
        .map(|(name, g)| json!({ "branch": name, "generator": g }))
        .collect();
    Outcome::new(true, &report, table)
}

fn branch_generators(
    positive: Option<suborbit::approx_l2r::BranchVerification>,
    negative: Option<suborbit::approx_l2r::BranchVerification>,
) -> Vec<(&'static str, suborbit::construction::GeneratorSummary)> {
    positive
        .map(|b| ("positive", b.generator))
        .into_iter()
        .chain(negative.map(|b| ("negative", b.generator)))
        .collect()
}

fn localized_inputs(path: &Path) -> Result<(suborbit::approx_localized::LocalizedFamily, LocalizedParams)> {
    let cfg: LocalizedConfig = read_config(path)?;
    let family = cfg.family.localized()?;
    let params = LocalizedParams {
        lambda: cfg.lambda,
        c: cfg.c,
        beta: cfg.beta,
        epsilon: cfg.epsilon(&family)?,
        upper_bound: cfg.upper_bound,
        section: cfg.section,
        n_terms: cfg.n_terms,
        rank_tol: cfg.rank_tol,
    };
    Ok((family, params))
}

fn verify(kind: Kind, path: &Path) -> Result<Outcome> {
    match kind {
        Kind::L2n => {
            let cfg: L2nConfig = read_config(path)?;
            let v = verify_finite_support(&cfg.family.elements()?, &cfg.params())?;
            let mut table = Table::new(RESIDUAL_COLUMNS);
            for r in &v.rows {
                table.push(residual_cells(r));
            }
            Outcome::new(v.all_pass, &v, table)
        }
        Kind::Localized => {
            let (family, params) = localized_inputs(path)?;
            let v = verify_localized(&family, &params)?;
            let mut table = Table::new(&[
                "k",
                "alpha",
                "gap",
                "measured",
                "measured_back",
                "measured_forward",
                "truncation_charge",
                "tail",
                "bound_forward",
                "bound_back",
                "bound_residual",
                "budget",
                "pass",
            ]);
            for r in &v.rows {
                table.push(vec![
                    r.k.to_string(),
                    float(r.alpha_k),
                    float(r.gap),
                    float(r.measured),
                    float(r.measured_back),
                    float(r.measured_forward),
                    float(r.truncation_charge),
                    float(r.tail),
                    float(r.bound_forward),
                    float(r.bound_back),
                    float(r.bound),
                    float(r.budget),
                    r.pass.to_string(),
                ]);
            }
            Outcome::new(v.all_pass, &v, table)
        }
        Kind::L2r => {
            let cfg: L2rConfig = read_config(path)?;
            let v = verify_l2r(&cfg.functions, &cfg.params())?;
            let table = branch_table(v.positive.as_ref(), v.negative.as_ref(), None);
            Outcome::new(v.all_pass, &v, table)
        }
        Kind::Gabor => {
            let cfg: GaborConfig = read_config(path)?;
            let v = verify_gabor(&cfg.spec(), &cfg.params())?;
            let table = branch_table(
                v.verification.positive.as_ref(),
                v.verification.negative.as_ref(),
                Some((&v.positive_indices, &v.negative_indices)),
            );
            Outcome::new(v.all_pass, &v, table)
        }
    }
}

type IndexPair<'a> = (&'a [(i64, i64)], &'a [(i64, i64)]);

fn branch_table(
    positive: Option<&suborbit::approx_l2r::BranchVerification>,
    negative: Option<&suborbit::approx_l2r::BranchVerification>,
    indices: Option<IndexPair<'_>>,
) -> Table {
    let mut header = vec!["branch", "m", "n"];
    header.extend_from_slice(RESIDUAL_COLUMNS);
    let mut table = Table::new(&header);
    for (name, b, idx) in [
        ("positive", positive, indices.map(|i| i.0)),
        ("negative", negative, indices.map(|i| i.1)),
    ] {
        let Some(b) = b else { continue };
        for r in &b.rows {
            let (m, n) = idx
                .and_then(|i| i.get(r.k - 1))
                .map_or((String::new(), String::new()), |(m, n)| (m.to_string(), n.to_string()));
            let mut row = vec![name.to_string(), m, n];
            row.extend(residual_cells(r));
            table.push(row);
        }
    }
    table
}

fn scenario(name: Scenario, dim: usize, seed: u64, samples: usize) -> Result<Outcome> {
    let report = match name {
        Scenario::TwoOrbit => scenario_two_orbit_example(dim, seed, samples)?,
        Scenario::SuborbitIndependence => scenario_suborbit_independence()?,
    };
    let mut table = Table::new(&["name", "measured", "bound", "pass"]);
    for c in &report.checks {
        table.push(vec![
            c.name.clone(),
            float(c.measured),
            float(c.bound),
            c.pass.to_string(),
        ]);
    }
    Outcome::new(report.all_pass(), &report, table)
}
