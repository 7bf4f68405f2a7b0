use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use qfim::bench::{run_bench, to_csv, BenchConfig};
use qfim::format::{parse_problem, ResolvedProblem, ResultFile, FORMAT_VERSION};
use qfim::metrology::cramer_rao;
use qfim::solvers::{
    bures_infinitesimal, compare_methods, quadratic_form, rows, ComparisonReport, MethodChoice,
    Strategy,
};

#[derive(Parser, Debug)]
#[command(
    name = "qfim",
    version,
    about = "Quantum Fisher information matrices from JSON problem files"
)]
struct Cli {
    /// auto, vectorized, eigen, eigen-matrix, integral, regularized or pseudoinverse
    #[arg(long, global = true, default_value = "auto")]
    method: Strategy,
    /// Convergence tolerance for the regularized limit and the integral route
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// First regularization strength
    #[arg(long, global = true)]
    nu0: Option<f64>,
    /// Ratio between successive regularization strengths
    #[arg(long, global = true)]
    nu_ratio: Option<f64>,
    /// Maximum number of regularization strengths
    #[arg(long, global = true)]
    nu_steps: Option<usize>,
    /// Gauss-Legendre nodes per panel for the integral route
    #[arg(long, global = true)]
    quad_nodes: Option<usize>,
    /// Include the symmetric logarithmic derivatives in the result
    #[arg(long, global = true)]
    sld: bool,
    /// Append the Cramér-Rao report
    #[arg(long, global = true)]
    crb: bool,
    /// Write output here instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for the benchmark ensemble
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the QFIM and write a result file
    Compute { input: PathBuf },
    /// Like compute, always including the SLDs
    Sld { input: PathBuf },
    /// Run every method and compare them pairwise
    Compare {
        input: PathBuf,
        /// Print JSON instead of the table
        #[arg(long)]
        json: bool,
    },
    /// Time every method on random full-rank states, as CSV
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Parameters per instance
        #[arg(long, default_value_t = 2)]
        params: usize,
    },
    /// Squared Bures distance for a small parameter displacement
    Bures {
        input: PathBuf,
        /// Displacement, one entry per parameter
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        deps: Vec<f64>,
    },
}

enum Failure {
    Usage(String),
    Math(String),
    Disagreement,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Math(_) => 3,
            Failure::Disagreement => 4,
        }
    }
}

fn math(e: qfim::QfimError) -> Failure {
    Failure::Math(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Math(m) => eprintln!("error: {m}"),
                Failure::Disagreement => eprintln!("methods disagree"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn choice(cli: &Cli) -> Result<MethodChoice, Failure> {
    let mut ch = MethodChoice {
        strategy: cli.method,
        ..Default::default()
    };
    if let Some(t) = cli.tol {
        ch.nu_schedule.tol_limit = t;
        ch.quadrature.tol = t;
    }
    if let Some(v) = cli.nu0 {
        ch.nu_schedule.nu0 = v;
    }
    if let Some(v) = cli.nu_ratio {
        ch.nu_schedule.ratio = v;
    }
    if let Some(v) = cli.nu_steps {
        ch.nu_schedule.max_steps = v;
    }
    if let Some(v) = cli.quad_nodes {
        ch.quadrature.nodes = v;
    }
    ch.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(ch)
}

fn load(path: &Path) -> Result<ResolvedProblem, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_problem(&text)
        .and_then(|p| p.resolve())
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.output {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let ch = choice(cli)?;
    match &cli.command {
        Command::Compute { input } => compute(cli, &ch, input, cli.sld),
        Command::Sld { input } => compute(cli, &ch, input, true),
        Command::Compare { input, json } => compare(cli, &ch, input, *json),
        Command::Bench {
            dims,
            trials,
            params,
        } => {
            let config = BenchConfig {
                dims: dims.clone(),
                trials: *trials,
                seed: cli.seed,
                n_params: *params,
            };
            config
                .validate()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let rows = run_bench(&config, &ch).map_err(math)?;
            emit(cli, &to_csv(&rows))
        }
        Command::Bures { input, deps } => bures(cli, input, deps),
    }
}

fn compute(cli: &Cli, ch: &MethodChoice, input: &Path, with_slds: bool) -> Result<(), Failure> {
    let problem = load(input)?;
    let result = problem.compute(ch).map_err(math)?;
    let crb = if cli.crb {
        Some(cramer_rao(&result, &problem.names).map_err(math)?)
    } else {
        None
    };
    let file = ResultFile::new(&result, &problem.names, with_slds, crb);
    emit(cli, &(file.to_json() + "\n"))
}

fn compare(cli: &Cli, ch: &MethodChoice, input: &Path, as_json: bool) -> Result<(), Failure> {
    let problem = load(input)?;
    let (rho, d) = problem.state().map_err(math)?;
    let report = compare_methods(&rho, &d, ch);
    let json_text =
        serde_json::to_string_pretty(&comparison_json(&report)).expect("serializable") + "\n";
    match (&cli.output, as_json) {
        (Some(_), _) => {
            emit(cli, &json_text)?;
            print!("{}", comparison_table(&report));
        }
        (None, true) => print!("{json_text}"),
        (None, false) => print!("{}", comparison_table(&report)),
    }
    if report.passes() {
        Ok(())
    } else {
        Err(Failure::Disagreement)
    }
}

fn comparison_json(report: &ComparisonReport) -> serde_json::Value {
    let methods: Vec<_> = report
        .outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(r) => json!({
                "method": o.method,
                "ok": true,
                "qfim": rows(&r.h),
                "elapsed_seconds": o.elapsed.as_secs_f64(),
                "warnings": r.diagnostics.warnings,
            }),
            Err(e) => json!({
                "method": o.method,
                "ok": false,
                "error": e,
                "elapsed_seconds": o.elapsed.as_secs_f64(),
            }),
        })
        .collect();
    json!({
        "version": FORMAT_VERSION,
        "rank_deficient": report.rank_deficient,
        "all_agree": report.all_agree(),
        "passes": report.passes(),
        "unexpected_failures": report.unexpected_failures(),
        "methods": methods,
        "deviations": report.deviations,
    })
}

fn comparison_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let state = if report.rank_deficient {
        "rank-deficient"
    } else {
        "full rank"
    };
    let _ = writeln!(out, "state: {state}\n");
    let _ = writeln!(out, "{:<18} {:>10}  result", "method", "time [ms]");
    for o in &report.outcomes {
        let ms = o.elapsed.as_secs_f64() * 1e3;
        let text = match &o.result {
            Ok(r) => format!("{:?}", rows(&r.h)),
            Err(e) => format!("refused: {e}"),
        };
        let _ = writeln!(out, "{:<18} {ms:>10.3}  {text}", o.method.name());
    }
    let _ = writeln!(
        out,
        "\n{:<18} {:<18} {:>12} {:>12}",
        "a", "b", "abs dev", "rel dev"
    );
    for p in &report.deviations {
        let _ = writeln!(
            out,
            "{:<18} {:<18} {:>12.3e} {:>12.3e}{}",
            p.a.name(),
            p.b.name(),
            p.absolute,
            p.relative,
            if p.flagged { "  FLAGGED" } else { "" }
        );
    }
    let verdict = if report.passes() { "agree" } else { "DISAGREE" };
    let _ = writeln!(out, "\nverdict: {verdict}");
    out
}

fn bures(cli: &Cli, input: &Path, deps: &[f64]) -> Result<(), Failure> {
    let problem = load(input)?;
    let (rho, d) = problem.state().map_err(math)?;
    if deps.len() != d.len() {
        return Err(Failure::Usage(format!(
            "--deps has {} entries, the problem has {} parameters",
            deps.len(),
            d.len()
        )));
    }
    let drho = d.combine(deps).map_err(math)?;
    let ds2 = bures_infinitesimal(&rho, &drho).map_err(math)?;
    let h =
        qfim::solvers::compute_with(qfim::Method::Vectorized, &rho, &d, &MethodChoice::default())
            .map_err(math)?
            .h;
    let out = json!({
        "version": FORMAT_VERSION,
        "parameter_names": problem.names,
        "deps": deps,
        "bures_squared": ds2,
        "quarter_qfim_form": 0.25 * quadratic_form(&h, deps),
    });
    emit(
        cli,
        &(serde_json::to_string_pretty(&out).expect("serializable") + "\n"),
    )
}
