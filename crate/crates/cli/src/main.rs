//! Command-line interface: price single contracts, emit Greek curves, and
//! run table-reproduction studies from JSON configuration files.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rbf_pide::bench::{builtin_descriptor, builtin_names, run_table, EvaluationGrid, ExperimentDescriptor};
use rbf_pide::collocation::ReactionSign;
use rbf_pide::config::{ModelConfig, OutputFormat, RunConfig};
use rbf_pide::error::Error;
use rbf_pide::models::{JumpModel, ModelKind};
use rbf_pide::reference::{
    black_scholes_greeks, black_scholes_price, fst_price_american, fst_price_european,
    merton_series_price, FstGrid,
};
use rbf_pide::stepper::{
    greeks, solve_american, solve_european, ContractSpec, ExerciseStyle, PricingSolution,
};

#[derive(Parser)]
#[command(
    name = "rbf-pide",
    about = "European/American option pricing under Merton and Kou jump-diffusion by cubic-spline RBF collocation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration (model, contract, numerics, output)
    #[arg(long)]
    config: PathBuf,
    /// Override the number of collocation nodes
    #[arg(long)]
    n: Option<usize>,
    /// Override the number of time steps
    #[arg(long)]
    m0: Option<usize>,
    /// Override the model block: a built-in descriptor name or a JSON file
    /// containing a model object
    #[arg(long)]
    model: Option<String>,
    /// Output format (overrides the config's output block)
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Output file path (overrides the config's output block)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Assemble the ODE operator with the +(r+lambda) reaction sign exactly
    /// as printed in the reduced system (forensic comparisons only)
    #[arg(long)]
    sign_as_printed: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Price the configured contract and compare against the matching
    /// reference pricer
    Price {
        #[command(flatten)]
        run: RunArgs,
        /// Spot price(s) to report (defaults to the strike)
        #[arg(long)]
        spot: Vec<f64>,
    },
    /// Emit (s, delta, gamma) over the region of interest with a
    /// gamma-smoothness diagnostic at the strike
    Greeks {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a convergence-table descriptor (built-in name or JSON file)
    Table {
        /// Built-in descriptor name or path to a descriptor JSON file
        descriptor: String,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Assemble with the printed +(r+lambda) sign
        #[arg(long)]
        sign_as_printed: bool,
        /// List built-in descriptor names and exit
        #[arg(long)]
        list: bool,
    },
}

fn main() -> ExitCode {
    // honor the thread-count environment variable before any rayon use
    if let Ok(threads) = std::env::var("RBF_PIDE_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Price { run, spot } => cmd_price(run, spot),
        Command::Greeks { run } => cmd_greeks(run),
        Command::Table {
            descriptor,
            format,
            out,
            sign_as_printed,
            list,
        } => cmd_table(descriptor, format, out, sign_as_printed, list),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

struct LoadedRun {
    config: RunConfig,
    model: JumpModel,
    contract: ContractSpec,
    sign: ReactionSign,
    format: OutputFormat,
    out: Option<PathBuf>,
}

fn load_run(args: &RunArgs) -> Result<LoadedRun, Error> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(spec) = &args.model {
        config.model = resolve_model(spec)?;
    }
    if let Some(n) = args.n {
        config.numerics.n = n;
    }
    if let Some(m0) = args.m0 {
        config.numerics.m0 = Some(m0);
    }
    config.validate()?;
    let model = config.model.build()?;
    let contract = config.contract.build()?;
    let format = match args.format {
        Some(FormatArg::Csv) => OutputFormat::Csv,
        Some(FormatArg::Json) => OutputFormat::Json,
        None => config.output.format,
    };
    let out = args
        .out
        .clone()
        .or_else(|| config.output.path.clone().map(PathBuf::from));
    let sign = if args.sign_as_printed {
        ReactionSign::AsPrinted
    } else {
        ReactionSign::Discounting
    };
    Ok(LoadedRun {
        config,
        model,
        contract,
        sign,
        format,
        out,
    })
}

/// `--model` accepts a built-in descriptor name (its model block) or a path
/// to a JSON file holding a model object.
fn resolve_model(spec: &str) -> Result<ModelConfig, Error> {
    if let Some(d) = builtin_descriptor(spec) {
        return Ok(d.model);
    }
    let path = PathBuf::from(spec);
    if path.exists() {
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        return serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("model parse error: {e}")));
    }
    Err(Error::InvalidConfig(format!(
        "--model '{spec}' is neither a built-in descriptor ({}) nor a readable file",
        builtin_names().join(", ")
    )))
}

fn solve(run: &LoadedRun) -> Result<PricingSolution, Error> {
    let num = &run.config.numerics;
    let domain = num.domain_for(run.contract.strike_log());
    let (system, theta) = rbf_pide::bench::build_operator(
        &run.model,
        &run.contract,
        num.n,
        domain,
        num.epsilon,
        num.quad_tol,
        run.sign,
    )?;
    match run.contract.exercise {
        ExerciseStyle::European => solve_european(&theta, &system, &run.contract, num.m0_or_default()),
        ExerciseStyle::American => solve_american(&theta, &system, &run.contract, num.m0_or_default()),
    }
}

enum Oracle {
    BlackScholes,
    MertonSeries,
    FstEuropean(rbf_pide::reference::FstCurve),
    FstAmerican(rbf_pide::reference::FstCurve),
}

impl Oracle {
    fn label(&self) -> &'static str {
        match self {
            Oracle::BlackScholes => "black-scholes",
            Oracle::MertonSeries => "merton-series",
            Oracle::FstEuropean(_) => "fst-european",
            Oracle::FstAmerican(_) => "fst-american",
        }
    }

    fn value(&self, run: &LoadedRun, s: f64) -> Option<f64> {
        let tau = run.contract.maturity;
        match self {
            Oracle::BlackScholes => Some(black_scholes_price(
                run.model.r,
                run.model.q,
                run.model.sigma,
                &run.contract,
                s,
                tau,
            )),
            Oracle::MertonSeries => {
                merton_series_price(&run.model, &run.contract, s, tau, 1e-12, 120).ok()
            }
            Oracle::FstEuropean(curve) | Oracle::FstAmerican(curve) => Some(curve.value_at(s.ln())),
        }
    }
}

fn pick_oracle(run: &LoadedRun) -> Result<Oracle, Error> {
    let num = &run.config.numerics;
    let lk = run.contract.strike_log();
    Ok(match (run.contract.exercise, run.model.kind()) {
        (ExerciseStyle::European, ModelKind::PureDiffusion) => Oracle::BlackScholes,
        (ExerciseStyle::European, ModelKind::Merton) => Oracle::MertonSeries,
        (ExerciseStyle::European, ModelKind::Kou) => {
            let grid = FstGrid::new(num.fst_size, lk - 10.0, lk + 10.0)?;
            Oracle::FstEuropean(fst_price_european(&run.model, &run.contract, &grid)?)
        }
        (ExerciseStyle::American, _) => {
            let grid = FstGrid::new(num.fst_size, lk - 10.0, lk + 10.0)?;
            Oracle::FstAmerican(fst_price_american(
                &run.model,
                &run.contract,
                &grid,
                num.fst_steps,
            )?)
        }
    })
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| {
            Error::InvalidConfig(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_price(args: RunArgs, spots: Vec<f64>) -> Result<(), Error> {
    let run = load_run(&args)?;
    let spots = if spots.is_empty() {
        vec![run.contract.strike]
    } else {
        spots
    };
    for &s in &spots {
        if !(s > 0.0) {
            return Err(Error::InvalidConfig(format!("spot must be > 0, got {s}")));
        }
    }
    let solution = solve(&run)?;
    let oracle = pick_oracle(&run)?;

    let mut rows = Vec::new();
    for &s in &spots {
        let price = solution.value(s.ln());
        let reference = oracle.value(&run, s);
        let rel = reference.map(|v| (price - v).abs() / v.abs().max(1e-300));
        rows.push((s, price, reference, rel, solution.is_extrapolating(s.ln())));
    }

    for (s, price, reference, rel, extrap) in &rows {
        let extra = if *extrap { " [extrapolated]" } else { "" };
        match (reference, rel) {
            (Some(v), Some(e)) => println!(
                "spot {s:.6}: price {price:.6} | {} {v:.6} | rel err {e:.3e}{extra}",
                oracle.label()
            ),
            _ => println!("spot {s:.6}: price {price:.6}{extra}"),
        }
    }

    if run.out.is_some() {
        let content = match run.format {
            OutputFormat::Csv => {
                let mut c = String::from("spot,price,oracle,oracle_kind,rel_err\n");
                for (s, price, reference, rel, _) in &rows {
                    c.push_str(&format!(
                        "{s:.6},{price:.9e},{},{},{}\n",
                        reference.map(|v| format!("{v:.9e}")).unwrap_or_default(),
                        oracle.label(),
                        rel.map(|e| format!("{e:.3e}")).unwrap_or_default()
                    ));
                }
                c
            }
            OutputFormat::Json => {
                let items: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|(s, price, reference, rel, extrap)| {
                        serde_json::json!({
                            "spot": s,
                            "price": price,
                            "oracle": reference,
                            "oracle_kind": oracle.label(),
                            "rel_err": rel,
                            "extrapolated": extrap,
                        })
                    })
                    .collect();
                let mut text = serde_json::to_string_pretty(&serde_json::json!({
                    "config": run.config,
                    "results": items,
                }))
                .expect("serializable");
                text.push('\n');
                text
            }
        };
        write_or_print(&run.out, &content)?;
    }
    Ok(())
}

fn cmd_greeks(args: RunArgs) -> Result<(), Error> {
    let run = load_run(&args)?;
    let solution = solve(&run)?;
    let eval = EvaluationGrid::new(run.contract.strike, run.config.numerics.n_eval)?;

    let mut rows = Vec::with_capacity(eval.len());
    for &x in eval.points() {
        let s = x.exp();
        let (delta, gamma) = greeks(&solution, s)?;
        rows.push((s, delta, gamma));
    }

    // gamma smoothness: max second difference near the strike should not
    // spike above 10x the grid-wide median
    let second_diff: Vec<f64> = rows
        .windows(3)
        .map(|w| (w[2].2 - 2.0 * w[1].2 + w[0].2).abs())
        .collect();
    let mut sorted = second_diff.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let lk = run.contract.strike_log();
    let near_strike_max = rows
        .windows(3)
        .zip(&second_diff)
        .filter(|(w, _)| (w[1].0.ln() - lk).abs() <= 0.05)
        .map(|(_, d)| *d)
        .fold(0.0f64, f64::max);
    let smooth_ok = near_strike_max.is_finite() && near_strike_max <= 10.0 * median.max(1e-300);
    println!(
        "gamma smoothness at strike: {} (max second difference {near_strike_max:.3e}, grid median {median:.3e})",
        if smooth_ok { "PASS" } else { "FAIL" }
    );

    // closed-form comparison when the model reduces to Black-Scholes
    if run.model.kind() == ModelKind::PureDiffusion
        && run.contract.exercise == ExerciseStyle::European
    {
        let (mut wd, mut wg) = (0.0f64, 0.0f64);
        for (s, delta, gamma) in &rows {
            let (bd, bg) = black_scholes_greeks(
                run.model.r,
                run.model.q,
                run.model.sigma,
                run.contract.side,
                run.contract.strike,
                *s,
                run.contract.maturity,
            );
            wd = wd.max((delta - bd).abs());
            wg = wg.max((gamma - bg).abs());
        }
        println!("closed-form deviation: delta {wd:.3e}, gamma {wg:.3e}");
    }

    let content = match run.format {
        OutputFormat::Csv => {
            let mut c = String::from("s,delta,gamma\n");
            for (s, delta, gamma) in &rows {
                c.push_str(&format!("{s:.9e},{delta:.9e},{gamma:.9e}\n"));
            }
            c
        }
        OutputFormat::Json => {
            let items: Vec<serde_json::Value> = rows
                .iter()
                .map(|(s, d, g)| serde_json::json!({"s": s, "delta": d, "gamma": g}))
                .collect();
            let mut text = serde_json::to_string_pretty(&serde_json::json!({
                "config": run.config,
                "gamma_second_diff_near_strike": near_strike_max,
                "gamma_second_diff_median": median,
                "rows": items,
            }))
            .expect("serializable");
            text.push('\n');
            text
        }
    };
    write_or_print(&run.out, &content)?;
    Ok(())
}

fn cmd_table(
    descriptor: String,
    format: Option<FormatArg>,
    out: Option<PathBuf>,
    sign_as_printed: bool,
    list: bool,
) -> Result<(), Error> {
    if list {
        for name in builtin_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut desc: ExperimentDescriptor = match builtin_descriptor(&descriptor) {
        Some(d) => d,
        None => {
            let path = PathBuf::from(&descriptor);
            if !path.exists() {
                return Err(Error::InvalidConfig(format!(
                    "unknown descriptor '{descriptor}'; built-ins: {}",
                    builtin_names().join(", ")
                )));
            }
            let text = fs::read_to_string(&path).map_err(|e| {
                Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
            })?;
            ExperimentDescriptor::from_json(&text)?
        }
    };
    if sign_as_printed {
        desc.sign_as_printed = true;
    }

    let result = run_table(&desc)?;
    print!("{}", result.to_csv());
    for gate in &result.gates {
        println!(
            "gate {}: {} ({})",
            gate.name,
            if gate.passed { "PASS" } else { "FAIL" },
            gate.detail
        );
    }
    if !result.gates.is_empty() {
        println!(
            "table {}: {}",
            desc.name,
            if result.passed() { "PASS" } else { "FAIL" }
        );
    }

    if let Some(path) = out {
        let content = match format.unwrap_or(FormatArg::Csv) {
            FormatArg::Csv => result.to_csv(),
            FormatArg::Json => result.to_json(),
        };
        fs::write(&path, content)
            .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
