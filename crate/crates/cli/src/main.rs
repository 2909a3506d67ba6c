use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hetfl_core::audit::{approximation_ratio, audit_group_strategyproof, DeviationSpace};
use hetfl_core::corpus;
use hetfl_core::io::{
    audit_csv_row, audit_report_json, instance_from_json, lottery_json, ratio_report_json,
    AuditContext, EvalReportJson, InstanceFile, PlacementJson, SearchReportJson, AUDIT_CSV_HEADER, SCHEMA_VERSION,
};
use hetfl_core::reproduce::{reproduce, Reproduction};
use hetfl_core::search::{conjecture_scan, worst_case_search, SearchConfig};
use hetfl_core::{expected_welfare, optimal_choice, InformationSetting, Instance, Mechanism, UtilityClass};

#[derive(Parser, Debug)]
#[command(name = "hetfl", version, about = "Exact evaluation, audits and worst-case search for heterogeneous facility location")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Source {
    /// Instance JSON file or corpus name (e.g. `fig2`, `fig1:1/1000`, `km-nongsp:5:2`).
    #[arg(long)]
    instance: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TableFormat {
    Table,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lottery and expected welfare of a mechanism.
    Eval {
        #[arg(long)]
        mechanism: Mechanism,
        #[command(flatten)]
        source: Source,
    },
    /// Optimal placement and welfare.
    Opt {
        #[command(flatten)]
        source: Source,
    },
    /// Enumerate misreports; exit 1 when a profitable one exists.
    Audit {
        #[arg(long)]
        mechanism: Mechanism,
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "general")]
        setting: InformationSetting,
        /// Misreported positions range over {0, 1/q, ..., 1}.
        #[arg(long, default_value_t = 10)]
        grid: u32,
        /// Audit coalitions, not just single agents.
        #[arg(long)]
        group: bool,
        #[arg(long, default_value_t = 2)]
        max_coalition: usize,
        /// Refuse to enumerate more misreport profiles than this.
        #[arg(long, default_value_t = DeviationSpace::DEFAULT_CAP)]
        cap: u128,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Approximation ratio; exit 1 above the mechanism's proven bound.
    Ratio {
        #[arg(long)]
        mechanism: Mechanism,
        #[command(flatten)]
        source: Source,
    },
    /// Seeded hill-climbing search for a high approximation ratio.
    Search {
        #[arg(long)]
        mechanism: Mechanism,
        #[command(flatten)]
        params: SearchArgs,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "sum")]
        utility_class: UtilityClass,
    },
    /// Search Random Dictatorship with proportional tie-breaking.
    Conjecture {
        #[command(flatten)]
        params: SearchArgs,
    },
    /// Expected-versus-computed checks for a corpus construction.
    Reproduce {
        /// fig1, fig2, random-median-lb, fig3, prd, km-nongsp, km-lb, rd-worst-case (with optional `:` parameters).
        name: String,
        #[arg(long, value_enum, default_value_t = TableFormat::Table)]
        format: TableFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    seed: u64,
    /// Total ratio evaluations.
    #[arg(long, default_value_t = 10_000)]
    iters: u64,
    /// Agents per instance.
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    grid: u32,
    #[arg(long, default_value_t = 8)]
    restarts: u32,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl SearchArgs {
    fn config(&self, mechanism: Mechanism) -> SearchConfig {
        SearchConfig {
            restarts: self.restarts,
            ..SearchConfig::new(mechanism, self.n, self.grid, self.iters, self.seed)
        }
    }
}

/// Exit 2: bad input or usage.
struct Usage(String);

impl<E: Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn load(spec: &str) -> Result<Instance, Usage> {
    let path = Path::new(spec);
    if path.is_file() || spec.ends_with(".json") {
        let text = fs::read_to_string(path).map_err(|e| Usage(format!("{spec}: {e}")))?;
        return instance_from_json(&text).map_err(|e| Usage(format!("{spec}: {e}")));
    }
    corpus::resolve(spec).map_err(|e| Usage(format!("`{spec}` is neither a file nor a corpus instance: {e}")))
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), Usage> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Usage(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(Usage::from)
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct OptReportJson {
    schema_version: u32,
    instance_id: String,
    optimal_welfare: hetfl_core::Rational,
    placements: Vec<PlacementJson>,
}

#[derive(Serialize)]
struct ReferenceJson {
    name: String,
    ratio: String,
    ratio_decimal: f64,
    exceeds_three_halves: bool,
}

#[derive(Serialize)]
struct ConjectureReportJson {
    schema_version: u32,
    mechanism: String,
    seed: u64,
    iterations: u64,
    max_ratio: String,
    max_ratio_decimal: f64,
    exceeds_three_halves: bool,
    witness_instance: InstanceFile,
    references: Vec<ReferenceJson>,
}

#[derive(Serialize)]
struct CheckJson {
    quantity: String,
    relation: String,
    expected: String,
    computed: String,
    holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize)]
struct ReproductionJson {
    schema_version: u32,
    name: String,
    all_hold: bool,
    checks: Vec<CheckJson>,
}

fn reproduction_json(rep: &Reproduction) -> ReproductionJson {
    ReproductionJson {
        schema_version: SCHEMA_VERSION,
        name: rep.name.clone(),
        all_hold: rep.all_hold(),
        checks: rep
            .checks
            .iter()
            .map(|c| CheckJson {
                quantity: c.quantity.clone(),
                relation: c.relation.to_string(),
                expected: c.expected.to_string(),
                computed: c.computed.to_string(),
                holds: c.holds,
                note: c.note.clone(),
            })
            .collect(),
    }
}

fn reproduction_table(rep: &Reproduction) -> String {
    let width = rep.checks.iter().map(|c| c.quantity.len()).max().unwrap_or(0).max(8);
    let mut s = format!("{:width$}  {:>2}  {:>12}  {:>12}  match\n", "quantity", "", "expected", "computed");
    for c in &rep.checks {
        s.push_str(&format!(
            "{:width$}  {:>2}  {:>12}  {:>12}  {}\n",
            c.quantity,
            c.relation,
            c.expected.to_string(),
            c.computed.to_string(),
            if c.holds { "yes" } else { "NO" }
        ));
        if let Some(note) = &c.note {
            s.push_str(&format!("    note: {note}\n"));
        }
    }
    s
}

fn run(cli: Cli) -> Result<ExitCode, Usage> {
    match cli.command {
        Command::Eval { mechanism, source } => {
            let inst = load(&source.instance)?;
            let lottery = mechanism.apply(&inst)?;
            let welfare = expected_welfare(&inst, &lottery)?;
            let report = EvalReportJson {
                schema_version: SCHEMA_VERSION,
                mechanism: mechanism.to_string(),
                instance_id: source.instance.clone(),
                lottery: lottery_json(&lottery),
                expected_welfare: welfare,
                expected_welfare_decimal: welfare.to_f64(),
            };
            emit(&source.output, &json(&report))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Opt { source } => {
            let inst = load(&source.instance)?;
            let opt = optimal_choice(&inst);
            let report = OptReportJson {
                schema_version: SCHEMA_VERSION,
                instance_id: source.instance.clone(),
                optimal_welfare: opt.welfare,
                placements: opt
                    .outcome
                    .placements()
                    .iter()
                    .map(|&(facility, location)| PlacementJson { facility, location })
                    .collect(),
            };
            emit(&source.output, &json(&report))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { mechanism, source, setting, grid, group, max_coalition, cap, format } => {
            if grid == 0 {
                return Err(Usage("--grid must be positive".into()));
            }
            let coalition = if group { max_coalition } else { 1 };
            if coalition == 0 {
                return Err(Usage("--max-coalition must be positive".into()));
            }
            let inst = load(&source.instance)?;
            let space = DeviationSpace::new(setting, grid).with_cap(cap);
            let report = audit_group_strategyproof(&mechanism, &inst, &space, coalition)?;
            let (mech, setting) = (mechanism.to_string(), setting.to_string());
            let ctx = AuditContext {
                mechanism: &mech,
                instance_id: &source.instance,
                setting: &setting,
                grid,
                max_coalition: coalition,
            };
            let text = match format {
                Format::Json => json(&audit_report_json(&ctx, &report)),
                Format::Csv => format!("{AUDIT_CSV_HEADER}\n{}\n", audit_csv_row(&ctx, &report)),
            };
            emit(&source.output, &text)?;
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Ratio { mechanism, source } => {
            let inst = load(&source.instance)?;
            let report = approximation_ratio(&mechanism, &inst)?;
            let out = ratio_report_json(&mechanism, &source.instance, &report);
            let exceeded = out.within_bound == Some(false);
            emit(&source.output, &json(&out))?;
            Ok(if exceeded { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Search { mechanism, params, m, k, utility_class } => {
            let config = SearchConfig { m, k, utility_class, ..params.config(mechanism) };
            if m < 2 || k == 0 || k > m || m > hetfl_core::model::MAX_FACILITIES {
                return Err(Usage(format!("need 2 <= m <= {} and 1 <= k <= m", hetfl_core::model::MAX_FACILITIES)));
            }
            let found = worst_case_search(&config)?;
            let bound = mechanism.proven_bound();
            let exceeds = bound.map(|b| !found.report.within(b));
            let report = SearchReportJson {
                schema_version: SCHEMA_VERSION,
                mechanism: mechanism.to_string(),
                seed: params.seed,
                iterations: found.evaluations,
                max_ratio: found.report.ratio.to_string(),
                max_ratio_decimal: found.report.ratio.to_f64(),
                proven_bound: bound.map(|b| b.to_string()),
                exceeds_bound: exceeds,
                witness_instance: InstanceFile::from(&found.instance),
            };
            emit(&params.output, &json(&report))?;
            Ok(if exceeds == Some(true) { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Conjecture { params } => {
            let rd = Mechanism::RandomDictatorship(hetfl_core::TieRule::Proportional);
            let scan = conjecture_scan(&params.config(rd))?;
            let report = ConjectureReportJson {
                schema_version: SCHEMA_VERSION,
                mechanism: rd.to_string(),
                seed: params.seed,
                iterations: scan.evaluations,
                max_ratio: scan.max_ratio.to_string(),
                max_ratio_decimal: scan.max_ratio.to_f64(),
                exceeds_three_halves: scan.exceeds_three_halves,
                witness_instance: InstanceFile::from(&scan.witness),
                references: scan
                    .references
                    .iter()
                    .map(|r| ReferenceJson {
                        name: r.name.to_string(),
                        ratio: r.ratio.to_string(),
                        ratio_decimal: r.ratio.to_f64(),
                        exceeds_three_halves: r.exceeds_three_halves,
                    })
                    .collect(),
            };
            emit(&params.output, &json(&report))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { name, format, output } => {
            let rep = reproduce(&name)?;
            let text = match format {
                TableFormat::Table => reproduction_table(&rep),
                TableFormat::Json => json(&reproduction_json(&rep)),
            };
            emit(&output, &text)?;
            Ok(if rep.all_hold() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn configure_threads() -> Result<(), Usage> {
    if let Ok(raw) = std::env::var("FM_THREADS") {
        let n: usize = raw.parse().map_err(|_| Usage(format!("FM_THREADS must be a positive integer, got `{raw}`")))?;
        if n == 0 {
            return Err(Usage("FM_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Usage::from)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
