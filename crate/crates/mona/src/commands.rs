//! The three subcommands as library functions returning printable reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mona_core::diagnostics::{
    compare_trajectories, electric_observables, observed_order, oscillation_metric,
    windowed_alternation, OscillationMetric,
};
use mona_core::netlist::{BranchClass, ElementKind, Netlist};
use mona_core::solver::{numerical_index, SimulationError};
use mona_core::topology::{check_conditions, ConditionReport, Defect};
use mona_core::*;
use nalgebra::DVector;

use crate::error::CliError;
use crate::output::{trajectory_table, Table};
use crate::scenario::{FormulationChoice, Scenario, SchemeChoice};

/// Alternation above this over a whole series marks it oscillatory.
pub const ALTERNATION_FLAG: f64 = 0.5;
/// Alternation above this right after source jumps marks it oscillatory.
pub const WINDOWED_FLAG: f64 = 0.3;
/// Steps after each source jump inspected by the windowed check.
pub const JUMP_WINDOW: usize = 5;

pub struct Circuit {
    pub netlist: Netlist,
    pub graph: CircuitGraph,
    pub incidence: IncidenceDecomposition,
    pub models: DeviceModels,
}

impl Circuit {
    pub fn assemble(&self, formulation: Formulation) -> Result<ImplicitDae, CliError> {
        let dae = match formulation {
            Formulation::Mna => assemble_mna(&self.incidence, &self.models),
            Formulation::Mona => assemble_mona(&self.incidence, &self.models),
        };
        dae.map_err(|e| CliError::Input(format!("{} assembly: {e}", formulation.label())))
    }

    pub fn is_linear(&self) -> bool {
        !self
            .netlist
            .elements
            .iter()
            .any(|e| e.kind == ElementKind::Diode)
    }

    /// Source jump times in `(t0, t_end]`.
    pub fn discontinuities(&self, t0: f64, t_end: f64) -> Vec<f64> {
        let mut events: Vec<f64> = self
            .models
            .voltage_sources
            .iter()
            .chain(&self.models.current_sources)
            .flat_map(|w| w.discontinuities(t0, t_end))
            .collect();
        events.sort_by(f64::total_cmp);
        events.dedup();
        events
    }
}

pub fn load_circuit(path: &Path) -> Result<Circuit, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let at = |e: &dyn std::fmt::Display| CliError::Input(format!("{}: {e}", path.display()));
    let netlist = parse_netlist(&text).map_err(|e| at(&e))?;
    let graph = build_graph(&netlist).map_err(|e| at(&e))?;
    let incidence = build_incidence(&graph);
    let models = DeviceModels::from_graph(&graph).map_err(|e| at(&e))?;
    Ok(Circuit {
        netlist,
        graph,
        incidence,
        models,
    })
}

/// Result of `mona analyze`.
pub struct Analysis {
    pub conditions: ConditionReport,
    /// `(MNA, MONA)`; `None` when A1 fails.
    pub predicted: Option<(usize, usize)>,
    /// Shuffle-algorithm index of the pencil at the zero state, `(MNA, MONA)`.
    pub oracle: (Result<usize, String>, Result<usize, String>),
    pub text: String,
}

impl Analysis {
    pub fn exit_code(&self) -> i32 {
        if self.conditions.a1_holds {
            0
        } else {
            2
        }
    }
}

fn witness_labels(defect: Defect, inc: &IncidenceDecomposition) -> Vec<String> {
    use BranchClass::*;
    let branches = |classes: &[BranchClass]| {
        classes
            .iter()
            .flat_map(|&c| inc.names(c).iter().cloned())
            .collect()
    };
    match defect {
        Defect::CurrentSourceCutset | Defect::InductorCurrentSourceCutset => {
            inc.nodes.iter().map(|n| format!("n{n}")).collect()
        }
        Defect::VoltageSourceLoop => branches(&[VoltageSource]),
        Defect::CapacitorVoltageSourceLoop => branches(&[Capacitor, VoltageSource]),
    }
}

fn format_witness(w: &DVector<f64>, labels: &[String]) -> String {
    // sign-normalize so the largest entry is positive
    let pivot = w
        .iter()
        .copied()
        .fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
    let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
    let parts: Vec<String> = w
        .iter()
        .zip(labels)
        .filter(|(v, _)| v.abs() > 1e-9)
        .map(|(v, l)| format!("{l}={:+.4}", sign * v))
        .collect();
    parts.join(" ")
}

fn oracle_index(circuit: &Circuit, formulation: Formulation) -> Result<usize, String> {
    let dae = circuit.assemble(formulation).map_err(|e| e.to_string())?;
    let zero = DVector::zeros(dae.layout.dim());
    let (e, a) = dae
        .linear_pencil(0.0, &zero, &zero)
        .map_err(|e| e.to_string())?;
    numerical_index(&e, &a).map_err(|e| e.to_string())
}

pub fn cmd_analyze(path: &Path) -> Result<Analysis, CliError> {
    let circuit = load_circuit(path)?;
    let inc = &circuit.incidence;
    let conditions = check_conditions(inc).map_err(|e| CliError::Input(e.to_string()))?;
    let mut text = String::new();
    let _ = writeln!(text, "circuit: {}", path.display());
    let _ = writeln!(text, "nodes: {} (ground excluded)", inc.node_count());
    let counts: Vec<String> = [
        ("C", BranchClass::Capacitor),
        ("L", BranchClass::Inductor),
        ("R", BranchClass::Resistor),
        ("V", BranchClass::VoltageSource),
        ("I", BranchClass::CurrentSource),
    ]
    .iter()
    .map(|(l, c)| format!("A_{l} {}x{}", inc.node_count(), inc.count(*c)))
    .collect();
    let _ = writeln!(text, "incidence: {}", counts.join(", "));
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "{:<4} {:<10} {:<22} {:>4} {:>4}",
        "cond", "defect", "matrix", "rank", "null"
    );
    for check in &conditions.checks {
        let _ = writeln!(
            text,
            "{:<4} {:<10} {:<22} {:>4} {:>4}",
            format!("{:?}", check.defect.condition()),
            check.defect.short_name(),
            check.defect.matrix_label(),
            check.rank,
            check.null_dim
        );
    }
    for check in conditions.checks.iter().filter(|c| !c.holds()) {
        if let Some(w) = &check.witness {
            let labels = witness_labels(check.defect, inc);
            let _ = writeln!(
                text,
                "witness {}: {}",
                check.defect,
                format_witness(w, &labels)
            );
        }
    }
    let _ = writeln!(text);

    let verdict = |holds: bool, cond| {
        if holds {
            "holds".to_string()
        } else {
            let names: Vec<&str> = conditions
                .failures(cond)
                .map(|c| c.defect.short_name())
                .collect();
            format!("FAILS ({})", names.join(", "))
        }
    };
    let a1 = verdict(conditions.a1_holds, topology::Condition::A1);
    let a2 = verdict(conditions.a2_holds, topology::Condition::A2);
    let predicted = match (
        predict_index(&conditions, Formulation::Mna),
        predict_index(&conditions, Formulation::Mona),
    ) {
        (Ok(m), Ok(o)) => Some((m.index, o.index)),
        _ => None,
    };
    let oracle = (
        oracle_index(&circuit, Formulation::Mna),
        oracle_index(&circuit, Formulation::Mona),
    );
    let show = |r: &Result<usize, String>| match r {
        Ok(i) => i.to_string(),
        Err(_) => "-".to_string(),
    };
    let mut summary = format!("A1: {a1}; A2: {a2}");
    match predicted {
        Some((m, o)) => {
            let _ = write!(summary, "; index MNA={m}, MONA={o}");
        }
        None => summary.push_str("; ill-posed topology, no index prediction"),
    }
    let _ = write!(summary, "; oracle: {}/{}", show(&oracle.0), show(&oracle.1));
    if !circuit.is_linear() {
        summary.push_str(" (linearized at the zero state)");
    }
    for (label, r) in [("MNA", &oracle.0), ("MONA", &oracle.1)] {
        if let Err(e) = r {
            let _ = writeln!(text, "oracle {label}: {e}");
        }
    }
    let _ = writeln!(text, "{summary}");
    Ok(Analysis {
        conditions,
        predicted,
        oracle,
        text,
    })
}

/// One formulation's run within `mona run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub formulation: Formulation,
    pub path: PathBuf,
    /// Samples written, including the initial one.
    pub samples: usize,
    pub max_iterations: usize,
    pub total_iterations: usize,
    pub initially_consistent: bool,
    pub initial_residual: f64,
    pub saturated_samples: usize,
    /// Error message when the run stopped early.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub warnings: Vec<String>,
    pub runs: Vec<RunOutcome>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.runs.iter().any(|r| r.aborted.is_some()) {
            3
        } else {
            0
        }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{}: {} samples -> {}",
                r.formulation.label(),
                r.samples,
                r.path.display()
            );
            let _ = writeln!(
                out,
                "  newton iterations: max {}, total {}",
                r.max_iterations, r.total_iterations
            );
            let _ = writeln!(
                out,
                "  initial state: {} (residual {:.3e})",
                if r.initially_consistent {
                    "consistent"
                } else {
                    "inconsistent"
                },
                r.initial_residual
            );
            if r.saturated_samples > 0 {
                let _ = writeln!(
                    out,
                    "  diode exponent clamp active at {} samples",
                    r.saturated_samples
                );
            }
            if let Some(e) = &r.aborted {
                let _ = writeln!(out, "  ABORTED: {e}");
            }
        }
        out
    }
}

/// Output file for one formulation: `out` itself for a single formulation,
/// `<stem>_mna.csv` / `<stem>_mona.csv` beside it for both.
pub fn output_path(scenario: &Scenario, formulation: Formulation) -> PathBuf {
    let base = scenario.out.clone().unwrap_or_else(|| {
        let stem = scenario.netlist.file_stem().unwrap_or_default();
        PathBuf::from(stem).with_extension("csv")
    });
    if scenario.formulation != FormulationChoice::Both {
        return base;
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let ext = base.extension().map(|e| e.to_string_lossy().into_owned());
    let name = format!(
        "{stem}_{}.{}",
        formulation.label().to_lowercase(),
        ext.as_deref().unwrap_or("csv")
    );
    base.with_file_name(name)
}

fn config(
    scheme: SchemeChoice,
    dt: f64,
    t_end: f64,
    startup_ie_steps: usize,
) -> Result<IntegratorConfig, CliError> {
    let mut config = IntegratorConfig::new(scheme.into(), dt, t_end);
    config.startup_ie_steps = startup_ie_steps;
    config.validate().map_err(CliError::input)?;
    Ok(config)
}

pub fn cmd_run(scenario: &Scenario) -> Result<RunSummary, CliError> {
    let circuit = load_circuit(&scenario.netlist)?;
    scenario.check_overrides(&circuit.netlist)?;
    let config = config(
        scenario.scheme,
        scenario.dt,
        scenario.t_end,
        scenario.startup_ie_steps,
    )?;
    let conditions = check_conditions(&circuit.incidence).map_err(CliError::input)?;
    let mut warnings = Vec::new();
    if !conditions.a1_holds {
        let names: Vec<&str> = conditions
            .failures(topology::Condition::A1)
            .map(|c| c.defect.short_name())
            .collect();
        warnings.push(format!(
            "condition A1 fails ({}); the DAE is not regular",
            names.join(", ")
        ));
    }
    let mut runs = Vec::new();
    for &formulation in scenario.formulation.formulations() {
        let dae = circuit.assemble(formulation)?;
        let x0 = dae.initial_state(&scenario.init).map_err(CliError::input)?;
        let (traj, aborted) = match simulate(&dae, &config, &x0, None) {
            Ok(traj) => (traj, None),
            Err(SimulationError::Step { error, partial }) => (*partial, Some(error)),
            Err(e) => return Err(CliError::Solver(format!("{}: {e}", formulation.label()))),
        };
        let mut table = trajectory_table(&dae, &traj).map_err(CliError::input)?;
        table.comments = vec![
            format!("netlist: {}", scenario.netlist.display()),
            format!(
                "formulation: {}, scheme: {}, dt: {}, t_end: {}, startup_ie_steps: {}",
                formulation.label(),
                Scheme::from(scenario.scheme).label(),
                scenario.dt,
                scenario.t_end,
                scenario.startup_ie_steps
            ),
            format!(
                "initial state {} (residual {:e})",
                if traj.initially_consistent {
                    "consistent"
                } else {
                    "inconsistent"
                },
                traj.initial_residual
            ),
        ];
        table.trailer = aborted
            .as_ref()
            .map(|e| format!("ABORTED at t={}: {}", e.t, e.source));
        let path = output_path(scenario, formulation);
        table.write_file(&path)?;
        runs.push(RunOutcome {
            formulation,
            path,
            samples: traj.len(),
            max_iterations: traj.max_iterations(),
            total_iterations: traj.iterations.iter().sum(),
            initially_consistent: traj.initially_consistent,
            initial_residual: traj.initial_residual,
            saturated_samples: traj.saturated.len(),
            aborted: aborted.map(|e| e.to_string()),
        });
    }
    Ok(RunSummary { warnings, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub netlist: PathBuf,
    pub scheme: SchemeChoice,
    /// Descending step sizes.
    pub dt_list: Vec<f64>,
    pub t_end: f64,
    pub startup_ie_steps: usize,
    /// Observables to report; all electric observables when empty.
    pub observables: Vec<String>,
    pub out: Option<PathBuf>,
}

/// Oscillation measures of one observable from one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub metric: OscillationMetric,
    /// Alternation right after source jumps; `None` without jumps.
    pub near_jumps: Option<f64>,
}

impl Oscillation {
    pub fn flagged(&self) -> bool {
        self.metric.alternation_fraction > ALTERNATION_FLAG
            || self.near_jumps.is_some_and(|w| w > WINDOWED_FLAG)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableComparison {
    pub name: String,
    /// Max-norm difference over the solved samples `t_1 .. t_N`.
    pub difference: f64,
    /// Difference of the initial samples.
    pub initial_difference: f64,
    pub mna: Oscillation,
    pub mona: Oscillation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepComparison {
    pub dt: f64,
    pub observables: Vec<ObservableComparison>,
    pub max_iterations: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub steps: Vec<StepComparison>,
    /// Per observable; `None` with fewer than two step sizes or a zero error.
    pub orders: Vec<(String, Option<f64>)>,
    pub text: String,
}

impl CompareReport {
    pub fn observable(&self, dt_index: usize, name: &str) -> Option<&ObservableComparison> {
        self.steps
            .get(dt_index)?
            .observables
            .iter()
            .find(|o| o.name == name)
    }
}

fn oscillation(times: &[f64], series: &[f64], events: &[f64]) -> Result<Oscillation, CliError> {
    Ok(Oscillation {
        metric: oscillation_metric(series).map_err(CliError::input)?,
        near_jumps: (!events.is_empty())
            .then(|| windowed_alternation(times, series, events, JUMP_WINDOW)),
    })
}

pub fn cmd_compare(options: &CompareOptions) -> Result<CompareReport, CliError> {
    if options.dt_list.is_empty() {
        return Err(CliError::Input("empty step list".into()));
    }
    if options.dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Input(
            "step list must be strictly descending".into(),
        ));
    }
    let circuit = load_circuit(&options.netlist)?;
    let mna = circuit.assemble(Formulation::Mna)?;
    let mona = circuit.assemble(Formulation::Mona)?;
    let events = circuit.discontinuities(0.0, options.t_end);

    let mut steps = Vec::new();
    for &dt in &options.dt_list {
        let config = config(options.scheme, dt, options.t_end, options.startup_ie_steps)?;
        let run = |dae: &ImplicitDae| {
            simulate(dae, &config, &DVector::zeros(dae.layout.dim()), None).map_err(|e| {
                CliError::Solver(format!("{} at dt={dt}: {e}", dae.formulation.label()))
            })
        };
        let (ta, tb) = (run(&mna)?, run(&mona)?);
        let (oa, ob) = (
            electric_observables(&mna, &ta),
            electric_observables(&mona, &tb),
        );
        let names: Vec<String> = if options.observables.is_empty() {
            oa.columns.iter().map(|(n, _)| n.clone()).collect()
        } else {
            options.observables.clone()
        };
        let solved = compare_trajectories(&oa.skip(1), &ob.skip(1)).map_err(CliError::input)?;
        let mut observables = Vec::new();
        for name in names {
            let (Some(sa), Some(sb)) = (oa.column(&name), ob.column(&name)) else {
                return Err(CliError::Input(format!("unknown observable `{name}`")));
            };
            observables.push(ObservableComparison {
                difference: solved.difference(&name).unwrap_or(0.0),
                initial_difference: (sa[0] - sb[0]).abs(),
                mna: oscillation(&oa.times, sa, &events)?,
                mona: oscillation(&ob.times, sb, &events)?,
                name,
            });
        }
        steps.push(StepComparison {
            dt,
            observables,
            max_iterations: (ta.max_iterations(), tb.max_iterations()),
        });
    }

    let orders: Vec<(String, Option<f64>)> = steps[0]
        .observables
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let errors: Vec<f64> = steps.iter().map(|s| s.observables[k].difference).collect();
            let order = (errors.len() >= 2 && errors.iter().all(|&e| e > 0.0))
                .then(|| observed_order(&options.dt_list, &errors).ok())
                .flatten();
            (o.name.clone(), order)
        })
        .collect();

    let text = render_comparison(options, &steps, &orders, &events);
    let report = CompareReport {
        steps,
        orders,
        text,
    };
    if let Some(dir) = &options.out {
        write_comparison(dir, &report)?;
    }
    Ok(report)
}

fn render_comparison(
    options: &CompareOptions,
    steps: &[StepComparison],
    orders: &[(String, Option<f64>)],
    events: &[f64],
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "circuit: {}  scheme: {}  t_end: {}  startup_ie_steps: {}",
        options.netlist.display(),
        Scheme::from(options.scheme).label(),
        options.t_end,
        options.startup_ie_steps
    );
    if !events.is_empty() {
        let _ = writeln!(
            out,
            "source jumps: {}; windowed alternation over {JUMP_WINDOW} steps after each",
            events.len()
        );
    }
    for s in steps {
        let _ = writeln!(
            out,
            "\ndt = {}  (newton max iterations MNA {}, MONA {})",
            s.dt, s.max_iterations.0, s.max_iterations.1
        );
        let _ = writeln!(
            out,
            "  {:<10} {:>12} {:>12}   {:>6} {:>11} {:>6}   {:>6} {:>11} {:>6}",
            "observable",
            "max diff",
            "initial",
            "MNA alt",
            "amplitude",
            "jumps",
            "MONA alt",
            "amplitude",
            "jumps"
        );
        for o in &s.observables {
            let jumps = |w: Option<f64>| w.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            let flag = |osc: &Oscillation| if osc.flagged() { "*" } else { " " };
            let _ = writeln!(
                out,
                "  {:<10} {:>12.4e} {:>12.4e}   {:>6.3}{} {:>11.4e} {:>6}   {:>6.3}{} {:>11.4e} {:>6}",
                o.name,
                o.difference,
                o.initial_difference,
                o.mna.metric.alternation_fraction,
                flag(&o.mna),
                o.mna.metric.amplitude,
                jumps(o.mna.near_jumps),
                o.mona.metric.alternation_fraction,
                flag(&o.mona),
                o.mona.metric.amplitude,
                jumps(o.mona.near_jumps),
            );
        }
    }
    if steps.len() >= 2 {
        let _ = writeln!(out, "\nobserved order of the MNA/MONA difference:");
        for (name, order) in orders {
            match order {
                Some(p) => {
                    let _ = writeln!(out, "  {name:<10} {p:.3}");
                }
                None => {
                    let _ = writeln!(out, "  {name:<10} n/a");
                }
            }
        }
    }
    let _ = writeln!(
        out,
        "\n* oscillatory: alternation > {ALTERNATION_FLAG} or > {WINDOWED_FLAG} right after source jumps"
    );
    out
}

fn write_comparison(dir: &Path, report: &CompareReport) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let names: Vec<String> = report.orders.iter().map(|(n, _)| n.clone()).collect();

    let mut header = vec!["dt".to_string()];
    header.extend(names.iter().cloned());
    let differences = Table {
        comments: vec!["max-norm MNA/MONA differences over the solved samples".into()],
        header,
        rows: report
            .steps
            .iter()
            .map(|s| {
                std::iter::once(s.dt)
                    .chain(s.observables.iter().map(|o| o.difference))
                    .collect()
            })
            .collect(),
        trailer: Some(
            report
                .orders
                .iter()
                .map(|(n, p)| {
                    format!(
                        "order {n}={}",
                        p.map(|v| format!("{v:.6}")).unwrap_or("n/a".into())
                    )
                })
                .collect::<Vec<_>>()
                .join(" "),
        ),
    };
    differences.write_file(&dir.join("differences.csv"))?;

    let mut header = vec!["dt".to_string()];
    for n in &names {
        for f in ["mna", "mona"] {
            header.push(format!("{f}_alternation_{n}"));
            header.push(format!("{f}_amplitude_{n}"));
            header.push(format!("{f}_near_jumps_{n}"));
        }
    }
    let rows = report
        .steps
        .iter()
        .map(|s| {
            let mut row = vec![s.dt];
            for o in &s.observables {
                for osc in [&o.mna, &o.mona] {
                    row.push(osc.metric.alternation_fraction);
                    row.push(osc.metric.amplitude);
                    row.push(osc.near_jumps.unwrap_or(f64::NAN));
                }
            }
            row
        })
        .collect();
    let oscillation = Table {
        comments: vec!["near_jumps is NaN when the sources have no jumps".into()],
        header,
        rows,
        trailer: None,
    };
    oscillation.write_file(&dir.join("oscillation.csv"))
}
