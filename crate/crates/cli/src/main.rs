//! `clinch`: run clinching auctions, compute welfare benchmarks, audit
//! outcomes and generate instances.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 parse, 4 validation,
//! 5 guard exceeded, 6 an asserted audit check failed.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use clinch_core::audit::{self, AuditOptions, AuditReport, DeviationGrid};
use clinch_core::instances::{self, Family, GenParams};
use clinch_core::rational;
use clinch_core::welfare::{liquid_welfare, lw_optimal, social_welfare};
use clinch_core::{auction, AuctionInstance, AuctionOutcome, Error, Guards};
use serde::Serialize;

use report::{AuditSection, CheckReport, Header, LwOptReport, Number, RunReport, SweepReport, SweepRow};

#[derive(Parser)]
#[command(name = "clinch", version, about = "Clinching auctions for indivisible goods under polymatroid constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the auction on an instance and report the outcome.
    Run {
        #[command(flatten)]
        source: Source,
        /// Include the full event trace.
        #[arg(long)]
        trace: bool,
        /// Run every audit check; exits 6 if an asserted check fails.
        #[arg(long)]
        audit: bool,
        /// Compute the optimal liquid welfare and the ratio.
        #[arg(long)]
        lw_opt: bool,
        /// Seed for the randomized audit checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Tabulate mechanism vs optimal liquid welfare over a range of k.
    Sweep {
        #[arg(long, default_value = "prop54")]
        fixture: String,
        #[arg(long, default_value_t = 2)]
        k_min: i64,
        #[arg(long)]
        k_max: i64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Audit an instance, or a previously produced run report for it.
    Check {
        #[command(flatten)]
        source: Source,
        /// Run report (with trace) to audit instead of running the auction.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random orders tried by the order check, and the minimum number of
        /// misreports per buyer in the incentive check.
        #[arg(long, default_value_t = 24)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Generate a random instance document.
    Generate {
        #[arg(value_parser = parse_family)]
        family: Family,
        /// Number of buyers.
        #[arg(long)]
        n: usize,
        /// Upper bound on the total supply.
        #[arg(long, default_value_t = 4)]
        supply: i64,
        /// Make the supply exactly `--supply` (multi_unit only).
        #[arg(long)]
        exact_supply: bool,
        /// Upper bound on the number of goods (bipartite only).
        #[arg(long, default_value_t = 3)]
        goods: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the optimal liquid welfare via virtual buyers.
    LwOpt {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

/// Where the instance comes from: a document or a built-in fixture.
#[derive(Args)]
struct Source {
    /// Instance document.
    #[arg(required_unless_present = "fixture", conflicts_with = "fixture")]
    instance: Option<PathBuf>,
    /// Built-in fixture name (prop54, example62).
    #[arg(long)]
    fixture: Option<String>,
    /// Fixture parameter.
    #[arg(long, requires = "fixture", default_value_t = 3)]
    k: i64,
}

impl Source {
    fn load(&self, guards: &Guards) -> anyhow::Result<(AuctionInstance, String)> {
        match (&self.instance, &self.fixture) {
            (Some(path), _) => Ok((instances::load_path(path, guards)?, path.display().to_string())),
            (None, Some(name)) => Ok((instances::fixture(name, self.k)?, format!("fixture {name} k={}", self.k))),
            (None, None) => bail!("no instance given"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Ic,
    Po,
    Tight,
    Trading,
    Welfare,
    All,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|_| format!("unknown family `{s}` (expected multi_unit, bipartite or explicit)"))
}

/// Raised after the report is printed when an asserted check failed.
#[derive(Debug)]
struct AuditFailed;

impl std::fmt::Display for AuditFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("an asserted audit check failed")
    }
}

impl std::error::Error for AuditFailed {}

fn emit<T: Serialize>(value: &T, table: impl FnOnce(&T) -> String, format: Format) -> anyhow::Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value)?),
        Format::Table => print!("{}", table(value)),
    }
    Ok(())
}

fn cmd_run(source: &Source, trace: bool, audit: bool, lw_opt: bool, seed: u64, format: Format) -> anyhow::Result<()> {
    let guards = Guards::from_env();
    let (inst, name) = source.load(&guards)?;
    let out = auction::run_auction(&inst)?;
    let lw = liquid_welfare(&inst, &out.x_final)?;
    let lw_optimum = if lw_opt { Some(lw_optimal(&inst)?.lw_value) } else { None };
    let lw_ratio = lw_optimum.as_ref().map(|opt| &lw / opt);
    let audit = audit.then(|| AuditSection::from(audit::audit_all(&inst, &out, &AuditOptions { guards, seed, ..AuditOptions::default() })));
    let failed = audit.as_ref().is_some_and(|a| !a.passed);
    let report = RunReport {
        header: Header::new("run"),
        source: name,
        x_final: out.x_final.clone(),
        p_final: out.p_final.iter().map(rational::format).collect(),
        p_final_decimal: out.p_final.iter().map(|p| Number::from(p).decimal).collect(),
        iterations: out.iterations,
        total_payment: Number::from(&out.total_payment()),
        sw_mechanism: Number::from(&social_welfare(&inst, &out.x_final)?),
        lw_mechanism: Number::from(&lw),
        lw_optimum: lw_optimum.as_ref().map(Number::from),
        lw_ratio: lw_ratio.as_ref().map(Number::from),
        trace: trace.then_some(out.trace),
        audit,
    };
    emit(&report, RunReport::table, format)?;
    if failed {
        return Err(AuditFailed.into());
    }
    Ok(())
}

fn cmd_sweep(fixture: &str, k_min: i64, k_max: i64, format: Format) -> anyhow::Result<()> {
    if fixture != "prop54" {
        bail!(Error::UnknownFixture(format!("`{fixture}` has no ratio curve; sweep supports prop54")));
    }
    if k_max < k_min {
        bail!(Error::InvalidInstance(format!("empty range {k_min}..={k_max}")));
    }
    Guards::from_env().check_supply(k_max)?;
    let mut rows = Vec::new();
    for k in k_min..=k_max {
        let inst = instances::fixture(fixture, k)?;
        let out = auction::run_auction(&inst)?;
        let lw = liquid_welfare(&inst, &out.x_final)?;
        let opt = lw_optimal(&inst)?.lw_value;
        let ratio = &lw / &opt;
        rows.push(SweepRow {
            k,
            matches: ratio == rational::ratio(k, 2 * k - 1),
            lw_mechanism: Number::from(&lw),
            lw_optimum: Number::from(&opt),
            ratio: Number::from(&ratio),
        });
    }
    let passed = rows.iter().all(|r| r.matches);
    let report = SweepReport { header: Header::new("sweep"), fixture: fixture.to_string(), rows, passed };
    emit(&report, SweepReport::table, format)?;
    if !passed {
        return Err(AuditFailed.into());
    }
    Ok(())
}

/// Reads `x_final`, `p_final`, `trace` and `iterations` back out of a run
/// report; the remaining fields are ignored.
fn load_report(path: &Path) -> anyhow::Result<AuctionOutcome> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let field = |name: &str| value.get(name).cloned().ok_or_else(|| Error::Parse(format!("report has no `{name}` field")));
    if value.get("trace").is_none() {
        bail!(Error::MalformedTrace("report has no trace; produce it with `run --trace`".into()));
    }
    let outcome = serde_json::json!({
        "x_final": field("x_final")?,
        "p_final": field("p_final")?,
        "trace": field("trace")?,
        "iterations": field("iterations")?,
    });
    Ok(serde_json::from_value(outcome).map_err(|e| Error::Parse(e.to_string()))?)
}

fn cmd_check(source: &Source, report: Option<&Path>, suite: Suite, seed: u64, trials: usize, format: Format) -> anyhow::Result<()> {
    let guards = Guards::from_env();
    let (inst, name) = source.load(&guards)?;
    let out = match report {
        Some(path) => load_report(path)?,
        None => auction::run_auction(&inst)?,
    };
    if out.x_final.len() != inst.n() || out.p_final.len() != inst.n() {
        bail!(Error::InvalidInstance(format!("report covers {} buyers, instance has {}", out.x_final.len(), inst.n())));
    }
    let grid = DeviationGrid { min_per_buyer: trials, ..DeviationGrid::default() };
    let mut result = AuditReport::default();
    // every suite starts from a consistent trace
    result.extend(audit::check_trace(&inst, &out));
    let (suite_name, verdicts) = match suite {
        Suite::Ic => ("ic", audit::check_ic(&inst, &grid, seed)),
        Suite::Po => {
            guards.check_lattice(&inst.capacities())?;
            ("po", audit::check_pareto(&inst, &out, &guards))
        }
        Suite::Tight => ("tight", audit::check_tight_sets(&inst, &out)),
        Suite::Trading => ("trading", audit::check_trading_pairs(&inst, &out)),
        Suite::Welfare => ("welfare", audit::check_welfare_bounds(&inst, &out)),
        Suite::All => {
            let options = AuditOptions { guards, ic: Some(grid), permutations: trials, seed };
            let all = audit::audit_all(&inst, &out, &options);
            result = AuditReport::default();
            ("all", all.verdicts)
        }
    };
    result.extend(verdicts);
    let report = CheckReport {
        header: Header::new("check"),
        source: name,
        suite: suite_name.to_string(),
        seed,
        trials,
        audit: AuditSection::from(result),
    };
    emit(&report, CheckReport::table, format)?;
    if !report.audit.passed {
        return Err(AuditFailed.into());
    }
    Ok(())
}

fn cmd_generate(family: Family, params: GenParams, seed: u64, out: Option<&Path>) -> anyhow::Result<()> {
    let inst = instances::generate(family, params, seed)?;
    let text = instances::save(&inst);
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_lw_opt(source: &Source, format: Format) -> anyhow::Result<()> {
    let (inst, name) = source.load(&Guards::from_env())?;
    let result = lw_optimal(&inst)?;
    let report = LwOptReport {
        header: Header::new("lw-opt"),
        source: name,
        lw_value_decimal: Number::from(&result.lw_value).decimal,
        result,
    };
    emit(&report, LwOptReport::table, format)
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    if err.downcast_ref::<AuditFailed>().is_some() {
        return (6, "audit");
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Parse(_)) => (3, "parse"),
        Some(
            Error::InvalidInstance(_)
            | Error::Validation { .. }
            | Error::NotInPolymatroid(_)
            | Error::UnknownFixture(_)
            | Error::MalformedTrace(_),
        ) => (4, "validation"),
        Some(Error::GuardExceeded { .. } | Error::GroundSetTooLarge { .. } | Error::SubsetLimit { .. }) => (5, "guard"),
        _ => (1, "error"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { source, trace, audit, lw_opt, seed, format } => cmd_run(source, *trace, *audit, *lw_opt, *seed, *format),
        Command::Sweep { fixture, k_min, k_max, format } => cmd_sweep(fixture, *k_min, *k_max, *format),
        Command::Check { source, report, suite, seed, trials, format } => {
            cmd_check(source, report.as_deref(), *suite, *seed, *trials, *format)
        }
        Command::Generate { family, n, supply, exact_supply, goods, seed, out } => {
            let params = GenParams { n: *n, max_supply: *supply, goods: *goods, exact_supply: *exact_supply };
            cmd_generate(*family, params, *seed, out.as_deref())
        }
        Command::LwOpt { source, format } => cmd_lw_opt(source, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, class) = exit_code(&err);
            let message = format!("{err:#}");
            eprintln!("{}", serde_json::json!({ "error": { "class": class, "code": code, "message": message } }));
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_distinct_codes() {
        let code = |e: anyhow::Error| exit_code(&e).0;
        assert_eq!(code(Error::Parse("x".into()).into()), 3);
        assert_eq!(code(Error::UnknownFixture("x".into()).into()), 4);
        assert_eq!(code(Error::GuardExceeded { what: "buyers", value: 30, limit: 20 }.into()), 5);
        assert_eq!(code(AuditFailed.into()), 6);
        assert_eq!(code(anyhow::anyhow!("other")), 1);
    }

    #[test]
    fn command_line_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
