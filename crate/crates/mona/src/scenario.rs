//! Run settings from a `key = value` file, overridden by command-line flags.
//!
//! ```text
//! # comment
//! netlist = example1_cvloop.cir
//! formulation = both
//! scheme = tr
//! dt = 0.1
//! t_end = 10
//! startup_ie_steps = 0
//! out = run.csv
//! init.C1 = 0.5        capacitor voltage
//! init.L1 = 1e-3       inductor current
//! ```
//!
//! Relative paths in a file are resolved against the file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mona_core::netlist::{parse_number, ElementKind, Netlist};
use mona_core::{Formulation, Scheme};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormulationChoice {
    Mna,
    Mona,
    Both,
}

impl FormulationChoice {
    pub fn formulations(self) -> &'static [Formulation] {
        match self {
            FormulationChoice::Mna => &[Formulation::Mna],
            FormulationChoice::Mona => &[Formulation::Mona],
            FormulationChoice::Both => &[Formulation::Mna, Formulation::Mona],
        }
    }
}

impl FromStr for FormulationChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mna" => Ok(FormulationChoice::Mna),
            "mona" => Ok(FormulationChoice::Mona),
            "both" => Ok(FormulationChoice::Both),
            _ => Err(format!(
                "unknown formulation `{s}` (expected mna, mona or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SchemeChoice {
    Ie,
    Tr,
}

impl From<SchemeChoice> for Scheme {
    fn from(s: SchemeChoice) -> Scheme {
        match s {
            SchemeChoice::Ie => Scheme::ImplicitEuler,
            SchemeChoice::Tr => Scheme::Trapezoidal,
        }
    }
}

impl FromStr for SchemeChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ie" => Ok(SchemeChoice::Ie),
            "tr" => Ok(SchemeChoice::Tr),
            _ => Err(format!("unknown scheme `{s}` (expected ie or tr)")),
        }
    }
}

/// Every setting optional; produced by a scenario file or by flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioSettings {
    pub netlist: Option<PathBuf>,
    pub formulation: Option<FormulationChoice>,
    pub scheme: Option<SchemeChoice>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub startup_ie_steps: Option<usize>,
    pub out: Option<PathBuf>,
    /// `init.<element>` entries in file order.
    pub init: Vec<(String, f64)>,
}

impl ScenarioSettings {
    /// Values set in `flags` win; initial overrides are merged by name.
    pub fn overridden_by(mut self, flags: ScenarioSettings) -> ScenarioSettings {
        self.netlist = flags.netlist.or(self.netlist);
        self.formulation = flags.formulation.or(self.formulation);
        self.scheme = flags.scheme.or(self.scheme);
        self.dt = flags.dt.or(self.dt);
        self.t_end = flags.t_end.or(self.t_end);
        self.startup_ie_steps = flags.startup_ie_steps.or(self.startup_ie_steps);
        self.out = flags.out.or(self.out);
        for (name, value) in flags.init {
            match self.init.iter_mut().find(|(n, _)| *n == name) {
                Some(entry) => entry.1 = value,
                None => self.init.push((name, value)),
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario line {}: {}", self.line, self.message)
    }
}

/// Parse scenario text. `base` is the directory relative paths refer to.
pub fn parse_scenario(text: &str, base: &Path) -> Result<ScenarioSettings, ScenarioError> {
    let mut s = ScenarioSettings::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let err = |message: String| ScenarioError { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(err(format!("`{key}` has no value")));
        }
        let number = |v: &str| parse_number(line, v).map_err(|e| err(e.to_string()));
        match key {
            "netlist" => s.netlist = Some(base.join(value)),
            "out" => s.out = Some(base.join(value)),
            "formulation" => s.formulation = Some(value.parse().map_err(err)?),
            "scheme" => s.scheme = Some(value.parse().map_err(err)?),
            "dt" => s.dt = Some(number(value)?),
            "t_end" => s.t_end = Some(number(value)?),
            "startup_ie_steps" => {
                s.startup_ie_steps = Some(value.parse().map_err(|_| {
                    err(format!(
                        "startup_ie_steps must be a non-negative integer, found `{value}`"
                    ))
                })?)
            }
            _ => match key.strip_prefix("init.") {
                Some(name) if !name.is_empty() => {
                    let v = number(value)?;
                    match s.init.iter_mut().find(|(n, _)| n == name) {
                        Some(entry) => entry.1 = v,
                        None => s.init.push((name.to_string(), v)),
                    }
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            },
        }
    }
    Ok(s)
}

/// Validated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub netlist: PathBuf,
    pub formulation: FormulationChoice,
    pub scheme: SchemeChoice,
    pub dt: f64,
    pub t_end: f64,
    pub startup_ie_steps: usize,
    pub init: Vec<(String, f64)>,
    pub out: Option<PathBuf>,
}

impl Scenario {
    /// Fill defaults (`both`, `tr`, no start-up steps) and check the required
    /// fields and value ranges.
    pub fn resolve(settings: ScenarioSettings) -> Result<Scenario, CliError> {
        let netlist = settings
            .netlist
            .ok_or_else(|| CliError::Input("no netlist given".into()))?;
        let dt = settings
            .dt
            .ok_or_else(|| CliError::Input("no time step (dt) given".into()))?;
        let t_end = settings
            .t_end
            .ok_or_else(|| CliError::Input("no end time (t_end) given".into()))?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Input(format!("dt must be positive, got {dt}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(CliError::Input(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        Ok(Scenario {
            netlist,
            formulation: settings.formulation.unwrap_or(FormulationChoice::Both),
            scheme: settings.scheme.unwrap_or(SchemeChoice::Tr),
            dt,
            t_end,
            startup_ie_steps: settings.startup_ie_steps.unwrap_or(0),
            init: settings.init,
            out: settings.out,
        })
    }

    /// Initial overrides must name capacitors or inductors of the netlist.
    pub fn check_overrides(&self, netlist: &Netlist) -> Result<(), CliError> {
        for (name, _) in &self.init {
            match netlist.element(name).map(|e| e.kind) {
                Some(ElementKind::Capacitor | ElementKind::Inductor) => {}
                Some(_) => {
                    return Err(CliError::Input(format!(
                        "init.{name}: only capacitors and inductors take initial values"
                    )))
                }
                None => return Err(CliError::Input(format!("init.{name}: no such element"))),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text =
            "# run\nnetlist = a.cir\nformulation = mona\nscheme = ie\ndt = 1e-2\nt_end = pi\n\
                    startup_ie_steps = 2\nout = o.csv\ninit.C1 = 0.5\n";
        let s = parse_scenario(text, Path::new("/d")).unwrap();
        assert_eq!(s.netlist, Some(PathBuf::from("/d/a.cir")));
        assert_eq!(s.formulation, Some(FormulationChoice::Mona));
        assert_eq!(s.scheme, Some(SchemeChoice::Ie));
        assert_eq!(s.dt, Some(0.01));
        assert_eq!(s.t_end, Some(std::f64::consts::PI));
        assert_eq!(s.startup_ie_steps, Some(2));
        assert_eq!(s.out, Some(PathBuf::from("/d/o.csv")));
        assert_eq!(s.init, vec![("C1".to_string(), 0.5)]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(
            parse_scenario("dt 0.1", Path::new(".")).unwrap_err().line,
            1
        );
        assert!(parse_scenario("\nspeed = 3", Path::new("."))
            .unwrap_err()
            .message
            .contains("unknown key"));
        assert!(parse_scenario("scheme = rk4", Path::new(".")).is_err());
        assert!(parse_scenario("dt = fast", Path::new(".")).is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = parse_scenario(
            "dt = 0.1\nt_end = 10\ninit.C1 = 1\ninit.C2 = 2",
            Path::new("."),
        )
        .unwrap();
        let flags = ScenarioSettings {
            dt: Some(0.05),
            init: vec![("C2".into(), 3.0)],
            ..Default::default()
        };
        let merged = file.overridden_by(flags);
        assert_eq!(merged.dt, Some(0.05));
        assert_eq!(merged.t_end, Some(10.0));
        assert_eq!(merged.init, vec![("C1".into(), 1.0), ("C2".into(), 3.0)]);
    }

    #[test]
    fn resolve_checks_ranges() {
        let base = ScenarioSettings {
            netlist: Some("x.cir".into()),
            dt: Some(0.1),
            t_end: Some(0.0),
            ..Default::default()
        };
        assert_eq!(Scenario::resolve(base.clone()).unwrap_err().exit_code(), 1);
        let ok = Scenario::resolve(ScenarioSettings {
            t_end: Some(1.0),
            ..base
        })
        .unwrap();
        assert_eq!(ok.formulation, FormulationChoice::Both);
        assert_eq!(ok.scheme, SchemeChoice::Tr);
    }
}
