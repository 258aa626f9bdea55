use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fractrack::cli::{prepare, run_forward, run_optimize, run_verify, show_example, ExportOptions};
use fractrack::optimize::Method;
use fractrack::verify::Suite;

#[derive(Parser)]
#[command(name = "fractrack", version, about = "Optimal regional tracking control of time-fractional diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    FixedPoint,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Direct => Method::Direct,
            MethodArg::FixedPoint => Method::FixedPoint,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Ml,
    Calculus,
    Duality,
    Gradient,
    Convergence,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Ml => Suite::Ml,
            SuiteArg::Calculus => Suite::Calculus,
            SuiteArg::Duality => Suite::Duality,
            SuiteArg::Gradient => Suite::Gradient,
            SuiteArg::Convergence => Suite::Convergence,
        }
    }
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario JSON file; the shipped example when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the number of modes.
    #[arg(long)]
    modes: Option<usize>,
    /// Override the number of time steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal control problem and export the results.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Export desired.csv on the whole domain with the flank extension.
        #[arg(long)]
        full_domain_desired: bool,
    },
    /// Simulate the state under a modal control file (zero control when omitted).
    Forward {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// control_modal.csv from a previous optimize run.
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Run self-check suites; all of them when none is given.
    Verify {
        #[arg(long = "suite", value_enum)]
        suites: Vec<SuiteArg>,
        /// Directory for verify.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the shipped example scenario.
    ShowExample,
}

fn fail(e: fractrack::Error) -> ExitCode {
    let diag = serde_json::json!({ "status": "failed", "error": e.to_string() });
    eprintln!("{diag}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Optimize {
            scenario,
            out,
            method,
            full_domain_desired,
        } => {
            let sc = match prepare(scenario.scenario.as_deref(), scenario.modes, scenario.steps, method.map(Into::into)) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match run_optimize(&sc, &out, ExportOptions { full_domain_desired }) {
                Ok(o) => {
                    println!("{}", serde_json::to_string_pretty(&o.summary).expect("summary serializes"));
                    if o.success() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("solver did not reach its tolerance: {}", o.summary.diagnostics.message);
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Forward { scenario, out, control } => {
            let sc = match prepare(scenario.scenario.as_deref(), scenario.modes, scenario.steps, None) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match run_forward(&sc, control.as_deref(), &out) {
                Ok(s) => {
                    println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Verify { suites, out } => {
            let suites: Vec<Suite> = suites.into_iter().map(Into::into).collect();
            match run_verify(&suites, out.as_deref()) {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
                    if r.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::ShowExample => {
            print!("{}", show_example());
            ExitCode::SUCCESS
        }
    }
}
