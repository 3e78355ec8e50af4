use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mona::scenario::{FormulationChoice, SchemeChoice};
use mona::{
    cmd_analyze, cmd_compare, cmd_run, parse_scenario, CliError, CompareOptions, Scenario,
    ScenarioSettings,
};

/// Index analysis and transient simulation of RLC circuits in the
/// conventional and the magnetic-oriented nodal formulation.
#[derive(Parser)]
#[command(name = "mona", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the topological conditions and predict the DAE index.
    Analyze {
        #[arg(long)]
        netlist: PathBuf,
    },
    /// Simulate and write one CSV per formulation.
    Run {
        /// key = value file; flags given here override its entries.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        netlist: Option<PathBuf>,
        #[arg(long, value_enum)]
        formulation: Option<FormulationChoice>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeChoice>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        startup_ie_steps: Option<usize>,
        /// CSV path; with both formulations `_mna` / `_mona` is appended to the stem.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Initial capacitor voltage or inductor current, as NAME=VALUE.
        #[arg(long, value_parser = parse_init)]
        init: Vec<(String, f64)>,
    },
    /// Run both formulations over a list of step sizes and compare them.
    Compare {
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long, value_enum, default_value = "tr")]
        scheme: SchemeChoice,
        /// Descending, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        dt_list: Vec<f64>,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0)]
        startup_ie_steps: usize,
        /// Comma separated, e.g. e_1,i_V1; all electric observables by default.
        #[arg(long, value_delimiter = ',')]
        observables: Vec<String>,
        /// Directory for differences.csv and oscillation.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_init(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let value = mona_core::netlist::parse_number(0, value.trim()).map_err(|e| e.to_string())?;
    Ok((name.trim().to_string(), value))
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Analyze { netlist } => {
            let analysis = cmd_analyze(&netlist)?;
            print!("{}", analysis.text);
            Ok(analysis.exit_code())
        }
        Command::Run {
            scenario,
            netlist,
            formulation,
            scheme,
            dt,
            t_end,
            startup_ie_steps,
            out,
            init,
        } => {
            let file = match scenario {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Read {
                        path: path.clone(),
                        source,
                    })?;
                    let base = path.parent().unwrap_or(std::path::Path::new("."));
                    parse_scenario(&text, base)
                        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
                }
                None => ScenarioSettings::default(),
            };
            let flags = ScenarioSettings {
                netlist,
                formulation,
                scheme,
                dt,
                t_end,
                startup_ie_steps,
                out,
                init,
            };
            let summary = cmd_run(&Scenario::resolve(file.overridden_by(flags))?)?;
            print!("{}", summary.text());
            Ok(summary.exit_code())
        }
        Command::Compare {
            netlist,
            scheme,
            dt_list,
            t_end,
            startup_ie_steps,
            observables,
            out,
        } => {
            let report = cmd_compare(&CompareOptions {
                netlist,
                scheme,
                dt_list,
                t_end,
                startup_ie_steps,
                observables,
                out,
            })?;
            print!("{}", report.text);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
