//! Command-line front end: generate instances, solve them with any of the
//! bundled methods, evaluate schemes (optionally in exact arithmetic), and
//! compare methods side by side.

mod io;

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use persuasion_core::exact::{
    solve_exact_with, ExactError, ExactOptions, ExclusionDirection, SolveStrategy, SolverResult,
};
use persuasion_core::instances::{self, GeneratorError, SubsetSumInput};
use persuasion_core::model::{robust_utility_with, PersuasionInstance, SignalingScheme};
use persuasion_core::oracle::{grid_search_optimum, OracleError};
use persuasion_core::qptas::{solve_qptas_with, LogBase, QptasError, QptasOptions};
use persuasion_core::smallstate::{
    solve_small_states_with, ExploreOptions, SmallStateError, SmallStateOptions,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_SIZE_GUARD: u8 = 4;

#[derive(Parser)]
#[command(
    name = "persuasion",
    about = "Optimal and near-optimal signaling against approximately best-responding receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    SmallStates,
    Qptas,
    GridOracle,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::SmallStates => "small-states",
            Method::Qptas => "qptas",
            Method::GridOracle => "grid-oracle",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LogBaseArg {
    E,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    Explicit,
    Decomposed,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file with the chosen method.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        method: Method,
        /// Override the instance's robustness level.
        #[arg(long)]
        delta: Option<f64>,
        /// Additive accuracy target (qptas).
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        /// Grid denominator (grid-oracle).
        #[arg(long, default_value_t = 100)]
        grid_k: usize,
        /// Write the optimal scheme to this path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit the full run report as JSON on stdout.
        #[arg(long)]
        json: bool,
        /// Cross-check feasible-tuple discovery against brute force
        /// (small-states, small action counts).
        #[arg(long)]
        paranoid: bool,
        /// Flip the exclusion constraint family (exact; for experiments).
        #[arg(long)]
        flipped_exclusion: bool,
        /// Logarithm base in the qptas grid-size formula.
        #[arg(long, value_enum, default_value = "e")]
        log_base: LogBaseArg,
        /// Force the explicit program or the column driver.
        #[arg(long, value_enum, default_value = "auto")]
        strategy: StrategyArg,
    },
    /// Evaluate a scheme's worst-case value on an instance.
    Eval {
        instance: PathBuf,
        scheme: PathBuf,
        /// Also evaluate in exact rational arithmetic.
        #[arg(long)]
        rational: bool,
        /// Widen the BR-set comparison (robustness experiments).
        #[arg(long, default_value_t = 0.0)]
        tie_tolerance: f64,
        #[arg(long)]
        json: bool,
    },
    /// Write an instance file.
    Generate {
        #[arg(value_parser = ["apples", "direct-fail", "subset-sum", "random"])]
        kind: String,
        #[arg(long)]
        delta: Option<f64>,
        /// Prior mass of the zero state (direct-fail).
        #[arg(long)]
        eps: Option<f64>,
        /// Comma-separated zero-sum integers (subset-sum).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<i64>>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several methods on one instance and flag disagreements.
    Compare {
        instance: PathBuf,
        #[arg(
            long,
            value_enum,
            value_delimiter = ',',
            default_values_t = vec![Method::Exact, Method::SmallStates, Method::Qptas]
        )]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        grid_k: usize,
        #[arg(long)]
        json: bool,
    },
}

struct CliError {
    code: u8,
    kind: String,
    message: String,
}

impl CliError {
    fn new(code: u8, kind: &str, message: impl ToString) -> Self {
        CliError {
            code,
            kind: kind.to_string(),
            message: message.to_string(),
        }
    }
}

fn classify_exact(e: ExactError) -> CliError {
    match e {
        ExactError::SizeGuard { .. } => CliError::new(EXIT_SIZE_GUARD, "size-guard", e),
        _ => CliError::new(EXIT_SOLVER, "solver", e),
    }
}

fn classify_qptas(e: QptasError) -> CliError {
    match e {
        QptasError::SizeGuard { .. } => CliError::new(EXIT_SIZE_GUARD, "size-guard", e),
        QptasError::BadEps(_) => CliError::new(EXIT_VALIDATION, "parameter", e),
        QptasError::Exact(inner) => classify_exact(inner),
        _ => CliError::new(EXIT_SOLVER, "solver", e),
    }
}

fn classify_small(e: SmallStateError) -> CliError {
    match e {
        SmallStateError::Exact(inner) => classify_exact(inner),
        _ => CliError::new(EXIT_SOLVER, "solver", e),
    }
}

fn classify_oracle(e: OracleError) -> CliError {
    match e {
        OracleError::SizeGuard { .. } => CliError::new(EXIT_SIZE_GUARD, "size-guard", e),
        OracleError::Qptas(inner) => classify_qptas(inner),
        OracleError::Exact(inner) => classify_exact(inner),
        _ => CliError::new(EXIT_SOLVER, "solver", e),
    }
}

fn classify_generator(e: GeneratorError) -> CliError {
    CliError::new(EXIT_VALIDATION, "generator", e)
}

fn read_instance(path: &Path) -> Result<(PersuasionInstance, io::InstanceFile), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_VALIDATION, "io", format!("{}: {e}", path.display())))?;
    let file: io::InstanceFile = serde_json::from_str(&text)
        .map_err(|e| CliError::new(EXIT_VALIDATION, "parse", format!("{}: {e}", path.display())))?;
    let instance = file
        .clone()
        .into_instance()
        .map_err(|e| CliError::new(EXIT_VALIDATION, "validation", e))?;
    Ok((instance, file))
}

fn read_scheme(path: &Path) -> Result<(SignalingScheme, io::SchemeFile), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_VALIDATION, "io", format!("{}: {e}", path.display())))?;
    let file: io::SchemeFile = serde_json::from_str(&text)
        .map_err(|e| CliError::new(EXIT_VALIDATION, "parse", format!("{}: {e}", path.display())))?;
    let scheme = file
        .clone()
        .into_scheme()
        .map_err(|e| CliError::new(EXIT_VALIDATION, "validation", e))?;
    Ok((scheme, file))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::new(EXIT_VALIDATION, "io", format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SignalReportJson {
    label: String,
    marginal: f64,
    posterior: Vec<f64>,
    br_set: Vec<String>,
    worst_action: String,
    worst_value: f64,
}

#[derive(Serialize)]
struct RunReportJson {
    method: String,
    /// For exact and small-states: the emitted scheme's worst-case value
    /// (eval on the written files reproduces it). For qptas and the grid
    /// oracle this is the program optimum itself.
    value: f64,
    /// The underlying program optimum.
    program_value: f64,
    wall_ms: f64,
    lp_num_vars: usize,
    lp_num_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme_path: Option<String>,
    per_signal: Vec<SignalReportJson>,
}

fn signal_rows(instance: &PersuasionInstance, result: &SolverResult) -> Vec<SignalReportJson> {
    result
        .per_signal
        .iter()
        .map(|s| SignalReportJson {
            label: s.label.clone(),
            marginal: io::sig12(s.marginal),
            posterior: s.posterior.iter().map(|&v| io::sig12(v)).collect(),
            br_set: s
                .realized_br
                .iter()
                .map(|&a| instance.actions()[a].clone())
                .collect(),
            worst_action: instance.actions()[s.worst_action].clone(),
            worst_value: io::sig12(s.worst_value),
        })
        .collect()
}

fn print_report(report: &RunReportJson, json: bool) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(report).expect("serializable")
        );
        return;
    }
    println!("method:   {}", report.method);
    println!("value:    {:.9}", report.value);
    if (report.program_value - report.value).abs() > 1e-12 {
        println!("optimum:  {:.9} (underlying program)", report.program_value);
    }
    println!("time:     {:.1} ms", report.wall_ms);
    println!(
        "program:  {} vars, {} rows",
        report.lp_num_vars, report.lp_num_rows
    );
    if let Some(path) = &report.scheme_path {
        println!("scheme:   {path}");
    }
    println!("signals ({}):", report.per_signal.len());
    for s in &report.per_signal {
        println!(
            "  {:<28} p={:<8.5} posterior=[{}] br={{{}}} worst={} ({:.5})",
            s.label,
            s.marginal,
            s.posterior
                .iter()
                .map(|v| format!("{v:.5}"))
                .collect::<Vec<_>>()
                .join(", "),
            s.br_set.join(","),
            s.worst_action,
            s.worst_value
        );
    }
}

fn run_method(
    instance: &PersuasionInstance,
    method: Method,
    eps: f64,
    grid_k: usize,
    paranoid: bool,
    flipped: bool,
    log_base: LogBaseArg,
    strategy: StrategyArg,
) -> Result<SolverResult, CliError> {
    let strategy = match strategy {
        StrategyArg::Auto => SolveStrategy::Auto,
        StrategyArg::Explicit => SolveStrategy::Explicit,
        StrategyArg::Decomposed => SolveStrategy::Decomposed,
    };
    let exact_options = ExactOptions {
        exclusion: if flipped {
            ExclusionDirection::AsWritten
        } else {
            ExclusionDirection::GapAtLeastDelta
        },
        strategy,
        ..ExactOptions::default()
    };
    match method {
        Method::Exact => solve_exact_with(instance, &exact_options).map_err(classify_exact),
        Method::SmallStates => solve_small_states_with(
            instance,
            &SmallStateOptions {
                explore: ExploreOptions {
                    paranoid,
                    ..ExploreOptions::default()
                },
                solve: exact_options,
            },
        )
        .map_err(classify_small),
        Method::Qptas => solve_qptas_with(
            instance,
            eps,
            &QptasOptions {
                log_base: match log_base {
                    LogBaseArg::E => LogBase::Natural,
                    LogBaseArg::Two => LogBase::Two,
                },
                strategy,
                ..QptasOptions::default()
            },
        )
        .map_err(classify_qptas),
        Method::GridOracle => grid_search_optimum(instance, grid_k).map_err(classify_oracle),
    }
}

fn cmd_solve(
    instance_path: &Path,
    method: Method,
    delta: Option<f64>,
    eps: f64,
    grid_k: usize,
    out: Option<&Path>,
    json: bool,
    paranoid: bool,
    flipped: bool,
    log_base: LogBaseArg,
    strategy: StrategyArg,
) -> Result<(), CliError> {
    let (mut instance, _) = read_instance(instance_path)?;
    if let Some(d) = delta {
        instance = instance
            .with_delta(d)
            .map_err(|e| CliError::new(EXIT_VALIDATION, "validation", e))?;
    }
    let start = Instant::now();
    let result = run_method(
        &instance, method, eps, grid_k, paranoid, flipped, log_base, strategy,
    )?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let scheme_path = match out {
        Some(p) => {
            let file = io::SchemeFile::from_scheme(&result.scheme);
            let text = serde_json::to_string_pretty(&file).expect("serializable");
            write_text(Some(p), &text)?;
            Some(p.display().to_string())
        }
        None => None,
    };
    // exact and small-states emit schemes achieving their optimum; report
    // the scheme's own worst-case value so an eval round trip reproduces it
    let value = match method {
        Method::Exact | Method::SmallStates => {
            robust_utility_with(&instance, &result.scheme, 0.0)
                .map_err(|e| CliError::new(EXIT_SOLVER, "evaluation", e))?
                .value
        }
        Method::Qptas | Method::GridOracle => result.value,
    };
    let report = RunReportJson {
        method: method.name().to_string(),
        value: io::sig12(value),
        program_value: io::sig12(result.value),
        wall_ms,
        lp_num_vars: result.lp_num_vars,
        lp_num_rows: result.lp_num_rows,
        scheme_path,
        per_signal: signal_rows(&instance, &result),
    };
    print_report(&report, json);
    Ok(())
}

#[derive(Serialize)]
struct EvalReportJson {
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    value_exact: Option<String>,
    per_signal: Vec<SignalReportJson>,
}

fn cmd_eval(
    instance_path: &Path,
    scheme_path: &Path,
    rational: bool,
    tie_tolerance: f64,
    json: bool,
) -> Result<(), CliError> {
    let (instance, instance_file) = read_instance(instance_path)?;
    let (scheme, scheme_file) = read_scheme(scheme_path)?;
    if scheme.num_states() != instance.num_states() {
        return Err(CliError::new(
            EXIT_VALIDATION,
            "dimension-mismatch",
            format!(
                "scheme has {} state rows, instance has {} states",
                scheme.num_states(),
                instance.num_states()
            ),
        ));
    }
    let eval = robust_utility_with(&instance, &scheme, tie_tolerance)
        .map_err(|e| CliError::new(EXIT_VALIDATION, "dimension-mismatch", e))?;
    let value_exact = if rational {
        let rational_instance = instance_file
            .to_rational()
            .map_err(|e| CliError::new(EXIT_VALIDATION, "rational", e))?;
        let rational_scheme = scheme_file
            .to_rational()
            .map_err(|e| CliError::new(EXIT_VALIDATION, "rational", e))?;
        Some(rational_instance.robust_utility(&rational_scheme))
    } else {
        None
    };
    let rows: Vec<SignalReportJson> = eval
        .per_signal
        .iter()
        .map(|s| SignalReportJson {
            label: s.label.clone(),
            marginal: io::sig12(s.marginal),
            posterior: s.posterior.iter().map(|&v| io::sig12(v)).collect(),
            br_set: s
                .br_set
                .iter()
                .map(|&a| instance.actions()[a].clone())
                .collect(),
            worst_action: instance.actions()[s.worst_action].clone(),
            worst_value: io::sig12(s.sender_value),
        })
        .collect();
    let report = EvalReportJson {
        value: io::sig12(eval.value),
        value_exact: value_exact.as_ref().map(|v| v.to_string()),
        per_signal: rows,
    };
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("serializable")
        );
    } else {
        println!("robust utility: {:.9}", report.value);
        if let Some(v) = &value_exact {
            println!(
                "exact:          {} (= {:.12})",
                v,
                v.to_f64().unwrap_or(f64::NAN)
            );
        }
        for s in &report.per_signal {
            println!(
                "  {:<28} p={:<8.5} posterior=[{}] br={{{}}} worst={} ({:.5})",
                s.label,
                s.marginal,
                s.posterior
                    .iter()
                    .map(|v| format!("{v:.5}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                s.br_set.join(","),
                s.worst_action,
                s.worst_value
            );
        }
    }
    Ok(())
}

fn cmd_generate(
    kind: &str,
    delta: Option<f64>,
    eps: Option<f64>,
    values: Option<Vec<i64>>,
    m: Option<usize>,
    n: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let file = match kind {
        "apples" => {
            let delta = delta.unwrap_or(0.1);
            let instance = instances::apples_instance(delta)
                .map_err(|e| CliError::new(EXIT_VALIDATION, "validation", e))?;
            io::InstanceFile::from_instance(&instance, None)
        }
        "direct-fail" => {
            let eps = eps.ok_or_else(|| {
                CliError::new(EXIT_VALIDATION, "parameter", "direct-fail requires --eps")
            })?;
            let instance = instances::direct_revelation_example(eps).map_err(classify_generator)?;
            io::InstanceFile::from_instance(&instance, None)
        }
        "subset-sum" => {
            let values = values.ok_or_else(|| {
                CliError::new(EXIT_VALIDATION, "parameter", "subset-sum requires --values")
            })?;
            let delta = delta.ok_or_else(|| {
                CliError::new(EXIT_VALIDATION, "parameter", "subset-sum requires --delta")
            })?;
            let input = SubsetSumInput::new(values.clone()).map_err(classify_generator)?;
            let (instance, _meta) =
                instances::subset_sum_instance(&input, delta).map_err(classify_generator)?;
            io::InstanceFile::from_instance(
                &instance,
                Some(io::GeneratorInfo {
                    kind: "subset-sum".to_string(),
                    values: Some(values),
                    delta_paper: Some(delta),
                }),
            )
        }
        "random" => {
            let (m, n) = (m.unwrap_or(3), n.unwrap_or(3));
            if m == 0 || n == 0 {
                return Err(CliError::new(
                    EXIT_VALIDATION,
                    "parameter",
                    "random requires m >= 1 and n >= 1",
                ));
            }
            let instance = instances::random_instance(m, n, delta.unwrap_or(0.1), seed);
            io::InstanceFile::from_instance(&instance, None)
        }
        other => {
            return Err(CliError::new(
                EXIT_VALIDATION,
                "parameter",
                format!("unknown generator kind {other}"),
            ))
        }
    };
    let text = serde_json::to_string_pretty(&file).expect("serializable");
    write_text(out, &text)
}

#[derive(Serialize)]
struct CompareRowJson {
    method: String,
    value: f64,
    wall_ms: f64,
    scheme_value: f64,
}

#[derive(Serialize)]
struct CompareReportJson {
    rows: Vec<CompareRowJson>,
    flags: Vec<String>,
}

fn cmd_compare(
    instance_path: &Path,
    methods: &[Method],
    eps: f64,
    grid_k: usize,
    json: bool,
) -> Result<(), CliError> {
    let (instance, _) = read_instance(instance_path)?;
    let mut rows = Vec::new();
    let mut values = std::collections::BTreeMap::new();
    let mut scheme_values = std::collections::BTreeMap::new();
    for &method in methods {
        let start = Instant::now();
        let result = run_method(
            &instance,
            method,
            eps,
            grid_k,
            false,
            false,
            LogBaseArg::E,
            StrategyArg::Auto,
        )?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let eval = robust_utility_with(&instance, &result.scheme, 0.0)
            .map_err(|e| CliError::new(EXIT_SOLVER, "evaluation", e))?;
        values.insert(method.name(), result.value);
        scheme_values.insert(method.name(), eval.value);
        rows.push(CompareRowJson {
            method: method.name().to_string(),
            value: io::sig12(result.value),
            wall_ms,
            scheme_value: io::sig12(eval.value),
        });
    }
    let mut flags = Vec::new();
    if let (Some(&e), Some(&s)) = (values.get("exact"), values.get("small-states")) {
        if (e - s).abs() > 1e-6 {
            flags.push(format!("exact/small-states disagreement: {e} vs {s}"));
        }
    }
    if let (Some(&e), Some(&q)) = (values.get("exact"), scheme_values.get("qptas")) {
        if q < e - eps {
            flags.push(format!(
                "qptas shortfall: scheme value {q} below exact {e} - eps {eps}"
            ));
        }
    }
    if let (Some(&e), Some(&g)) = (values.get("exact"), values.get("grid-oracle")) {
        if g > e + 1e-6 {
            flags.push(format!("grid-oracle bound {g} above exact {e}"));
        }
    }
    let report = CompareReportJson { rows, flags };
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("serializable")
        );
    } else {
        println!(
            "{:<14} {:>14} {:>14} {:>10}",
            "method", "value", "scheme value", "time (ms)"
        );
        for r in &report.rows {
            println!(
                "{:<14} {:>14.9} {:>14.9} {:>10.1}",
                r.method, r.value, r.scheme_value, r.wall_ms
            );
        }
        if report.flags.is_empty() {
            println!("agreement: ok");
        } else {
            for f in &report.flags {
                println!("FLAG: {f}");
            }
        }
    }
    if report.flags.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_SOLVER,
            "disagreement",
            report.flags.join("; "),
        ))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            instance,
            method,
            delta,
            eps,
            grid_k,
            out,
            json,
            paranoid,
            flipped_exclusion,
            log_base,
            strategy,
        } => cmd_solve(
            &instance,
            method,
            delta,
            eps,
            grid_k,
            out.as_deref(),
            json,
            paranoid,
            flipped_exclusion,
            log_base,
            strategy,
        ),
        Command::Eval {
            instance,
            scheme,
            rational,
            tie_tolerance,
            json,
        } => cmd_eval(&instance, &scheme, rational, tie_tolerance, json),
        Command::Generate {
            kind,
            delta,
            eps,
            values,
            m,
            n,
            seed,
            out,
        } => cmd_generate(&kind, delta, eps, values, m, n, seed, out.as_deref()),
        Command::Compare {
            instance,
            methods,
            eps,
            grid_k,
            json,
        } => cmd_compare(&instance, &methods, eps, grid_k, json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let obj = serde_json::json!({
                "error": { "code": e.code, "kind": e.kind, "message": e.message }
            });
            eprintln!("{obj}");
            ExitCode::from(e.code)
        }
    }
}
