//! Energy balance, passivity and trajectory comparison.

use alloc::string::String;
use alloc::vec::Vec;

use crate::formulations::{FormulationError, ImplicitDae};
use crate::netlist::BranchClass;
use crate::solver::{Scheme, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error("trajectories are on different grids")]
    GridMismatch,
    #[error("need at least {needed} samples, got {found}")]
    TooShort { needed: usize, found: usize },
}

/// Per-sample energy terms and the per-step balance residual.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyReport {
    /// `eps_L + eps_C` at each sample.
    pub stored: Vec<f64>,
    /// `<g(v_R), v_R>` at each sample.
    pub dissipation: Vec<f64>,
    /// `<A_I^T e, i_src> + <i_V, v_src>` at each sample.
    pub source_power: Vec<f64>,
    /// `eps_{n+1} - eps_n + integral of (dissipation + source power)` over
    /// step `n`, with the quadrature of the scheme that took the step.
    pub balance: Vec<f64>,
}

impl EnergyReport {
    pub fn max_abs_balance(&self) -> f64 {
        self.balance.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// Largest `eps_{n+1} - eps_n`.
    pub fn max_energy_increase(&self) -> f64 {
        self.stored
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Discrete energy identity along a trajectory.
///
/// The power terms use the electric sample of each grid point: `e = psi'`
/// and `i_V = q_V'` for MONA, the native unknowns for MNA. Steps taken by
/// implicit Euler use the right endpoint, trapezoidal steps the trapezoid.
pub fn energy_balance(
    dae: &ImplicitDae,
    traj: &Trajectory,
) -> Result<EnergyReport, DiagnosticsError> {
    if traj.derivatives.len() != traj.states.len() {
        return Err(FormulationError::MissingDerivatives {
            states: traj.states.len(),
            derivatives: traj.derivatives.len(),
        }
        .into());
    }
    let mut report = EnergyReport::default();
    for ((t, x), xdot) in traj.times.iter().zip(&traj.states).zip(&traj.derivatives) {
        report.stored.push(dae.stored_energy(x)?);
        let (dissipation, source) = dae.power_terms(*t, x, xdot);
        report.dissipation.push(dissipation);
        report.source_power.push(source);
    }
    for n in 0..traj.len().saturating_sub(1) {
        let tau = traj.times[n + 1] - traj.times[n];
        let power = |k: usize| report.dissipation[k] + report.source_power[k];
        let integral = match traj
            .step_schemes
            .get(n)
            .copied()
            .unwrap_or(Scheme::Trapezoidal)
        {
            Scheme::ImplicitEuler => tau * power(n + 1),
            Scheme::Trapezoidal => 0.5 * tau * (power(n) + power(n + 1)),
        };
        report
            .balance
            .push(report.stored[n + 1] - report.stored[n] + integral);
    }
    Ok(report)
}

/// Named electric series on a time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observables {
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Observables {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Drop the first `n` samples.
    pub fn skip(&self, n: usize) -> Observables {
        Observables {
            times: self.times.iter().skip(n).copied().collect(),
            columns: self
                .columns
                .iter()
                .map(|(name, v)| (name.clone(), v.iter().skip(n).copied().collect()))
                .collect(),
        }
    }
}

/// Node potentials `e_<node>`, inductor currents `i_<L>` and voltage-source
/// currents `i_<V>`, computed the same way for both formulations.
pub fn electric_observables(dae: &ImplicitDae, traj: &Trajectory) -> Observables {
    let inc = &dae.incidence;
    let mut names: Vec<String> = inc.nodes.iter().map(|n| alloc::format!("e_{n}")).collect();
    names.extend(
        inc.names(BranchClass::Inductor)
            .iter()
            .map(|n| alloc::format!("i_{n}")),
    );
    names.extend(
        inc.names(BranchClass::VoltageSource)
            .iter()
            .map(|n| alloc::format!("i_{n}")),
    );
    let mut columns: Vec<(String, Vec<f64>)> = names.into_iter().map(|n| (n, Vec::new())).collect();
    for (x, xdot) in traj.states.iter().zip(&traj.derivatives) {
        let s = dae.electric_sample(x, xdot);
        let values = s
            .potentials
            .iter()
            .chain(s.inductor_currents.iter())
            .chain(s.source_currents.iter());
        for (col, v) in columns.iter_mut().zip(values) {
            col.1.push(*v);
        }
    }
    Observables {
        times: traj.times.clone(),
        columns,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    /// Max-norm difference per shared observable.
    pub differences: Vec<(String, f64)>,
}

impl ComparisonReport {
    pub fn max_difference(&self) -> f64 {
        self.differences.iter().fold(0.0, |m, (_, d)| m.max(*d))
    }

    pub fn difference(&self, name: &str) -> Option<f64> {
        self.differences
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| *d)
    }

    /// Largest difference among observables whose name starts with `prefix`.
    pub fn max_with_prefix(&self, prefix: &str) -> f64 {
        self.differences
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .fold(0.0, |m, (_, d)| m.max(*d))
    }
}

/// Max-norm differences of the observables present in both inputs.
pub fn compare_trajectories(
    a: &Observables,
    b: &Observables,
) -> Result<ComparisonReport, DiagnosticsError> {
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(x, y)| (x - y).abs() > 1e-12 * (1.0 + x.abs()))
    {
        return Err(DiagnosticsError::GridMismatch);
    }
    let mut differences = Vec::new();
    for (name, series) in &a.columns {
        if let Some(other) = b.column(name) {
            let d = series
                .iter()
                .zip(other)
                .fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
            differences.push((name.clone(), d));
        }
    }
    Ok(ComparisonReport { differences })
}

/// Least-squares slope of `log(error)` against `log(step)`.
pub fn observed_order(steps: &[f64], errors: &[f64]) -> Result<f64, DiagnosticsError> {
    let found = steps.len().min(errors.len());
    if found < 2 {
        return Err(DiagnosticsError::TooShort { needed: 2, found });
    }
    let xs: Vec<f64> = steps[..found].iter().map(|s| libm::log(*s)).collect();
    let ys: Vec<f64> = errors[..found].iter().map(|e| libm::log(*e)).collect();
    let mx = xs.iter().sum::<f64>() / found as f64;
    let my = ys.iter().sum::<f64>() / found as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationMetric {
    /// Fraction of consecutive first-difference pairs with opposite signs.
    pub alternation_fraction: f64,
    /// Median `|first difference|` over the second half of the series.
    pub amplitude: f64,
}

/// Relative size below which a first difference counts as zero.
pub const FLAT_FRACTION: f64 = 1e-6;

/// First differences with entries below `FLAT_FRACTION * max |difference|`
/// set to zero, so roundoff on a flat stretch does not count as alternation.
fn significant_differences(series: &[f64]) -> Vec<f64> {
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = diffs.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
    diffs
        .into_iter()
        .map(|d| {
            if d.abs() <= FLAT_FRACTION * scale {
                0.0
            } else {
                d
            }
        })
        .collect()
}

fn alternations(diffs: &[f64]) -> usize {
    diffs.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// Step-to-step sign alternation and amplitude of a series.
pub fn oscillation_metric(series: &[f64]) -> Result<OscillationMetric, DiagnosticsError> {
    if series.len() < 3 {
        return Err(DiagnosticsError::TooShort {
            needed: 3,
            found: series.len(),
        });
    }
    let diffs = significant_differences(series);
    let alternation_fraction = alternations(&diffs) as f64 / (diffs.len() - 1) as f64;
    let second_half = &series[series.len() / 2..];
    let mut magnitudes: Vec<f64> = second_half
        .windows(2)
        .map(|w| libm::fabs(w[1] - w[0]))
        .collect();
    magnitudes.sort_by(f64::total_cmp);
    let amplitude = match magnitudes.len() {
        0 => 0.0,
        m if m % 2 == 1 => magnitudes[m / 2],
        m => 0.5 * (magnitudes[m / 2 - 1] + magnitudes[m / 2]),
    };
    Ok(OscillationMetric {
        alternation_fraction,
        amplitude,
    })
}

/// Alternation fraction restricted to the steps right after each event.
///
/// For an event at time `s`, let `k` be the first sample with `t_k >= s`.
/// The window holds the differences of samples `k-1 ..= k+window`, i.e. the
/// step across the event and the `window` steps after it. Pairs are pooled
/// over all events.
pub fn windowed_alternation(times: &[f64], series: &[f64], events: &[f64], window: usize) -> f64 {
    let diffs = significant_differences(series);
    let mut pairs = 0;
    let mut flips = 0;
    for &s in events {
        let Some(k) = times.iter().position(|&t| t >= s - 1e-12 * (1.0 + s.abs())) else {
            continue;
        };
        let first = k.saturating_sub(1);
        let last = (k + window).min(diffs.len());
        if last <= first + 1 {
            continue;
        }
        let slice = &diffs[first..last];
        pairs += slice.len() - 1;
        flips += alternations(slice);
    }
    if pairs == 0 {
        0.0
    } else {
        flips as f64 / pairs as f64
    }
}
