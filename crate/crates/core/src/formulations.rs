//! MNA and MONA as fully implicit DAEs `F(t, x, x') = 0`.
//!
//! MNA unknowns are `(e, i_L, i_V)`:
//!
//! ```text
//! A_C C A_C^T e' + A_R g(A_R^T e) + A_L i_L + A_V i_V + A_I i_src(t) = 0
//! L i_L' - A_L^T e                                                   = 0
//! -A_V^T e + v_src(t)                                                = 0
//! ```
//!
//! MONA unknowns are `(psi, q_C, q_V)` with `e = psi'`:
//!
//! ```text
//! A_R g(A_R^T psi') + A_C q_C' + A_V q_V' + A_L grad eps_L(A_L^T psi) + A_I i_src(t) = 0
//! -A_C^T psi' + grad eps_C(q_C)                                                      = 0
//! -A_V^T psi' + v_src(t)                                                             = 0
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::devices::{DeviceError, DeviceModels};
use crate::linalg::{left_null_space, lstsq, null_space, LinalgError};
use crate::netlist::BranchClass;
use crate::solver::Trajectory;
pub use crate::topology::Formulation;
use crate::topology::IncidenceDecomposition;
use crate::RANK_TOL;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("non-finite value in residual/Jacobian row {row}")]
    NonFinite { row: usize },
    #[error("expected a vector of length {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormulationError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("{model} model has {found} entries but the incidence has {expected} {class} branches")]
    ModelMismatch {
        model: &'static str,
        class: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("MNA requires linear capacitors and inductors")]
    UnsupportedModel,
    #[error("no capacitor or inductor named `{0}`")]
    UnknownStorageElement(String),
    #[error("reconstruction needs a MONA trajectory with derivative samples")]
    NotMona,
    #[error("trajectory has {states} states but {derivatives} derivative samples")]
    MissingDerivatives { states: usize, derivatives: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("least-squares solve failed: {0}")]
    Linalg(#[from] LinalgError),
}

/// A fully implicit system `F(t, x, x') = 0`.
pub trait ImplicitSystem {
    fn dim(&self) -> usize;
    fn residual(
        &self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<DVector<f64>, EvalError>;
    /// `(dF/dx, dF/dx')`.
    fn jacobians(
        &self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), EvalError>;
    /// Explicit time derivative `dF/dt`.
    fn time_derivative(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64>;
    /// Whether evaluating at this point hits a device clamp.
    fn saturated(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> bool {
        false
    }
}

/// Unknown layout: three consecutive blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    /// Node potentials (electric or magnetic).
    pub nodes: usize,
    /// Inductor currents (MNA) or capacitor charges (MONA).
    pub storage: usize,
    /// Voltage-source currents (MNA) or charges (MONA).
    pub sources: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.nodes + self.storage + self.sources
    }
    pub fn storage_offset(&self) -> usize {
        self.nodes
    }
    pub fn source_offset(&self) -> usize {
        self.nodes + self.storage
    }
}

#[derive(Debug, Clone)]
pub struct ImplicitDae {
    pub formulation: Formulation,
    pub incidence: IncidenceDecomposition,
    pub models: DeviceModels,
    pub layout: Layout,
    /// `A_C C A_C^T`, MNA only.
    capacitive_stamp: DMatrix<f64>,
}

fn check_models(
    inc: &IncidenceDecomposition,
    models: &DeviceModels,
) -> Result<(), FormulationError> {
    let checks = [
        (
            "conductance",
            BranchClass::Resistor,
            models.conductors.len(),
        ),
        ("inductive", BranchClass::Inductor, models.inductive.dim()),
        (
            "capacitive",
            BranchClass::Capacitor,
            models.capacitive.dim(),
        ),
        (
            "voltage source",
            BranchClass::VoltageSource,
            models.voltage_sources.len(),
        ),
        (
            "current source",
            BranchClass::CurrentSource,
            models.current_sources.len(),
        ),
    ];
    for (model, class, found) in checks {
        let expected = inc.count(class);
        if expected != found {
            return Err(FormulationError::ModelMismatch {
                model,
                class: class.label(),
                expected,
                found,
            });
        }
    }
    Ok(())
}

pub fn assemble_mna(
    inc: &IncidenceDecomposition,
    models: &DeviceModels,
) -> Result<ImplicitDae, FormulationError> {
    check_models(inc, models)?;
    let c = models
        .capacitance()
        .map_err(|_| FormulationError::UnsupportedModel)?;
    models
        .inductance()
        .map_err(|_| FormulationError::UnsupportedModel)?;
    let capacitive_stamp = &inc.capacitive * c * inc.capacitive.transpose();
    Ok(ImplicitDae {
        formulation: Formulation::Mna,
        incidence: inc.clone(),
        models: models.clone(),
        layout: Layout {
            nodes: inc.node_count(),
            storage: inc.count(BranchClass::Inductor),
            sources: inc.count(BranchClass::VoltageSource),
        },
        capacitive_stamp,
    })
}

pub fn assemble_mona(
    inc: &IncidenceDecomposition,
    models: &DeviceModels,
) -> Result<ImplicitDae, FormulationError> {
    check_models(inc, models)?;
    Ok(ImplicitDae {
        formulation: Formulation::Mona,
        incidence: inc.clone(),
        models: models.clone(),
        layout: Layout {
            nodes: inc.node_count(),
            storage: inc.count(BranchClass::Capacitor),
            sources: inc.count(BranchClass::VoltageSource),
        },
        capacitive_stamp: DMatrix::zeros(0, 0),
    })
}

fn check_finite(v: &DVector<f64>) -> Result<(), EvalError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(row) => Err(EvalError::NonFinite { row }),
        None => Ok(()),
    }
}

fn check_finite_rows(m: &DMatrix<f64>) -> Result<(), EvalError> {
    for i in 0..m.nrows() {
        if m.row(i).iter().any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite { row: i });
        }
    }
    Ok(())
}

impl ImplicitDae {
    /// Column names of the unknowns, in layout order.
    pub fn variable_names(&self) -> Vec<String> {
        let inc = &self.incidence;
        let (node_prefix, storage_class, storage_prefix, source_prefix) = match self.formulation {
            Formulation::Mna => ("e", BranchClass::Inductor, "i", "i"),
            Formulation::Mona => ("psi", BranchClass::Capacitor, "q", "q"),
        };
        let mut names: Vec<String> = inc
            .nodes
            .iter()
            .map(|n| format!("{node_prefix}_{n}"))
            .collect();
        names.extend(
            inc.names(storage_class)
                .iter()
                .map(|n| format!("{storage_prefix}_{n}")),
        );
        names.extend(
            inc.names(BranchClass::VoltageSource)
                .iter()
                .map(|n| format!("{source_prefix}_{n}")),
        );
        names
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let l = self.layout;
        (
            x.rows(0, l.nodes).into_owned(),
            x.rows(l.storage_offset(), l.storage).into_owned(),
            x.rows(l.source_offset(), l.sources).into_owned(),
        )
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<(), EvalError> {
        let expected = self.layout.dim();
        if v.len() != expected {
            return Err(EvalError::Dimension {
                expected,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Voltage across resistive branches for a state and derivative.
    fn resistive_voltage(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
        let potentials = match self.formulation {
            Formulation::Mna => x.rows(0, self.layout.nodes),
            Formulation::Mona => xdot.rows(0, self.layout.nodes),
        };
        self.incidence.resistive.transpose() * potentials
    }

    fn stack(
        &self,
        first: DVector<f64>,
        second: DVector<f64>,
        third: DVector<f64>,
    ) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.dim());
        out.rows_mut(0, self.layout.nodes).copy_from(&first);
        out.rows_mut(self.layout.storage_offset(), self.layout.storage)
            .copy_from(&second);
        out.rows_mut(self.layout.source_offset(), self.layout.sources)
            .copy_from(&third);
        out
    }

    /// Linear pencil `(E, A) = (dF/dx', dF/dx)` at a point.
    pub fn linear_pencil(
        &self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), EvalError> {
        let (j_x, j_xdot) = self.jacobians(t, x, xdot)?;
        Ok((j_xdot, j_x))
    }

    /// Initial state from element overrides: capacitor voltages and inductor
    /// currents, zero otherwise.
    ///
    /// MNA imposes capacitor voltages through the minimum-norm potentials with
    /// `A_C^T e = v_C`. MONA sets `q_C = C v_C` and, for inductor currents, the
    /// minimum-norm `psi` with `A_L^T psi = L i_L`; without inductor overrides
    /// `psi = 0`.
    pub fn initial_state(
        &self,
        overrides: &[(String, f64)],
    ) -> Result<DVector<f64>, FormulationError> {
        let inc = &self.incidence;
        let mut v_c = DVector::zeros(inc.count(BranchClass::Capacitor));
        let mut i_l = DVector::zeros(inc.count(BranchClass::Inductor));
        for (name, value) in overrides {
            if let Some(k) = inc
                .names(BranchClass::Capacitor)
                .iter()
                .position(|n| n == name)
            {
                v_c[k] = *value;
            } else if let Some(k) = inc
                .names(BranchClass::Inductor)
                .iter()
                .position(|n| n == name)
            {
                i_l[k] = *value;
            } else {
                return Err(FormulationError::UnknownStorageElement(name.clone()));
            }
        }
        let l = self.layout;
        let mut x = DVector::zeros(l.dim());
        match self.formulation {
            Formulation::Mna => {
                if v_c.iter().any(|&v| v != 0.0) {
                    let (e, _) = lstsq(&inc.capacitive.transpose(), &v_c, RANK_TOL)?;
                    x.rows_mut(0, l.nodes).copy_from(&e);
                }
                x.rows_mut(l.storage_offset(), l.storage).copy_from(&i_l);
            }
            Formulation::Mona => {
                if v_c.iter().any(|&v| v != 0.0) {
                    let c = self
                        .models
                        .capacitance()
                        .map_err(|_| FormulationError::UnsupportedModel)?;
                    x.rows_mut(l.storage_offset(), l.storage)
                        .copy_from(&(c * v_c));
                }
                if i_l.iter().any(|&v| v != 0.0) {
                    let ind = self
                        .models
                        .inductance()
                        .map_err(|_| FormulationError::UnsupportedModel)?;
                    let (psi, _) = lstsq(&inc.inductive.transpose(), &(ind * i_l), RANK_TOL)?;
                    x.rows_mut(0, l.nodes).copy_from(&psi);
                }
            }
        }
        Ok(x)
    }

    /// Stored energy at a state.
    pub fn stored_energy(&self, x: &DVector<f64>) -> Result<f64, FormulationError> {
        let inc = &self.incidence;
        let (nodes, storage, _) = self.split(x);
        Ok(match self.formulation {
            Formulation::Mna => {
                let c = self.models.capacitance()?;
                let l = self.models.inductance()?;
                let charge = c * (inc.capacitive.transpose() * nodes);
                let flux = l * storage;
                self.models.energy(&flux, &charge)
            }
            Formulation::Mona => self
                .models
                .energy(&(inc.inductive.transpose() * nodes), &storage),
        })
    }

    /// Node potentials `e`, inductor currents and voltage-source currents at a
    /// sample, common to both formulations.
    pub fn electric_sample(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> ElectricSample {
        let inc = &self.incidence;
        let (nodes, storage, sources) = self.split(x);
        match self.formulation {
            Formulation::Mna => ElectricSample {
                potentials: nodes,
                inductor_currents: storage,
                source_currents: sources,
            },
            Formulation::Mona => {
                let (_, _, source_rate) = self.split(xdot);
                let flux = inc.inductive.transpose() * nodes;
                ElectricSample {
                    potentials: xdot.rows(0, self.layout.nodes).into_owned(),
                    inductor_currents: self.models.inductive.gradient(&flux),
                    source_currents: source_rate,
                }
            }
        }
    }

    /// Instantaneous power drawn out of storage: resistive dissipation
    /// `<g(v_R), v_R>` plus `<A_I^T e, i_src> + <i_V, v_src>`.
    pub fn power_terms(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> (f64, f64) {
        let s = self.electric_sample(x, xdot);
        let v_r = self.incidence.resistive.transpose() * &s.potentials;
        let (i_r, _) = self.models.conductance_current(&v_r);
        let dissipation = i_r.dot(&v_r);
        let source = (self.incidence.current.transpose() * &s.potentials)
            .dot(&self.models.current_source_values(t))
            + s.source_currents.dot(&self.models.voltage_source_values(t));
        (dissipation, source)
    }
}

/// Electric observables at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectricSample {
    pub potentials: DVector<f64>,
    pub inductor_currents: DVector<f64>,
    pub source_currents: DVector<f64>,
}

impl ImplicitSystem for ImplicitDae {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn residual(
        &self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<DVector<f64>, EvalError> {
        self.check_len(x)?;
        self.check_len(xdot)?;
        let inc = &self.incidence;
        let m = &self.models;
        let (nodes, storage, sources) = self.split(x);
        let (nodes_dot, storage_dot, sources_dot) = self.split(xdot);
        let (i_r, _) = m.conductance_current(&self.resistive_voltage(x, xdot));
        let i_src = inc.current.clone() * m.current_source_values(t);
        let v_src = m.voltage_source_values(t);
        let f = match self.formulation {
            Formulation::Mna => {
                let l = m.inductance().expect("checked at assembly");
                let kcl = &self.capacitive_stamp * &nodes_dot
                    + &inc.resistive * i_r
                    + &inc.inductive * &storage
                    + &inc.voltage * &sources
                    + i_src;
                let inductor = l * storage_dot - inc.inductive.transpose() * &nodes;
                let source = -(inc.voltage.transpose() * &nodes) + v_src;
                self.stack(kcl, inductor, source)
            }
            Formulation::Mona => {
                let flux = inc.inductive.transpose() * &nodes;
                let kcl = &inc.resistive * i_r
                    + &inc.capacitive * storage_dot
                    + &inc.voltage * sources_dot
                    + &inc.inductive * m.inductive.gradient(&flux)
                    + i_src;
                let capacitor =
                    -(inc.capacitive.transpose() * &nodes_dot) + m.capacitive.gradient(&storage);
                let source = -(inc.voltage.transpose() * &nodes_dot) + v_src;
                self.stack(kcl, capacitor, source)
            }
        };
        check_finite(&f)?;
        Ok(f)
    }

    fn jacobians(
        &self,
        _t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), EvalError> {
        self.check_len(x)?;
        self.check_len(xdot)?;
        let inc = &self.incidence;
        let l = self.layout;
        let n = l.dim();
        let (g, _) = self
            .models
            .conductance_matrix(&self.resistive_voltage(x, xdot));
        let resistive_stamp = &inc.resistive * g * inc.resistive.transpose();
        let mut j_x = DMatrix::zeros(n, n);
        let mut j_xdot = DMatrix::zeros(n, n);
        let (so, vo) = (l.storage_offset(), l.source_offset());
        match self.formulation {
            Formulation::Mna => {
                let ind = self.models.inductance().expect("checked at assembly");
                j_x.view_mut((0, 0), (l.nodes, l.nodes))
                    .copy_from(&resistive_stamp);
                j_x.view_mut((0, so), (l.nodes, l.storage))
                    .copy_from(&inc.inductive);
                j_x.view_mut((0, vo), (l.nodes, l.sources))
                    .copy_from(&inc.voltage);
                j_x.view_mut((so, 0), (l.storage, l.nodes))
                    .copy_from(&-inc.inductive.transpose());
                j_x.view_mut((vo, 0), (l.sources, l.nodes))
                    .copy_from(&-inc.voltage.transpose());
                j_xdot
                    .view_mut((0, 0), (l.nodes, l.nodes))
                    .copy_from(&self.capacitive_stamp);
                j_xdot
                    .view_mut((so, so), (l.storage, l.storage))
                    .copy_from(ind);
            }
            Formulation::Mona => {
                let (nodes, storage, _) = self.split(x);
                let flux = inc.inductive.transpose() * &nodes;
                let (h_l, h_c) = self.models.energy_hessian(&flux, &storage);
                let inductive_stamp = &inc.inductive * h_l * inc.inductive.transpose();
                j_x.view_mut((0, 0), (l.nodes, l.nodes))
                    .copy_from(&inductive_stamp);
                j_x.view_mut((so, so), (l.storage, l.storage))
                    .copy_from(&h_c);
                j_xdot
                    .view_mut((0, 0), (l.nodes, l.nodes))
                    .copy_from(&resistive_stamp);
                j_xdot
                    .view_mut((0, so), (l.nodes, l.storage))
                    .copy_from(&inc.capacitive);
                j_xdot
                    .view_mut((0, vo), (l.nodes, l.sources))
                    .copy_from(&inc.voltage);
                j_xdot
                    .view_mut((so, 0), (l.storage, l.nodes))
                    .copy_from(&-inc.capacitive.transpose());
                j_xdot
                    .view_mut((vo, 0), (l.sources, l.nodes))
                    .copy_from(&-inc.voltage.transpose());
            }
        }
        check_finite_rows(&j_x)?;
        check_finite_rows(&j_xdot)?;
        Ok((j_x, j_xdot))
    }

    fn time_derivative(&self, t: f64, _x: &DVector<f64>, _xdot: &DVector<f64>) -> DVector<f64> {
        let kcl = &self.incidence.current * self.models.current_source_derivatives(t);
        let storage = DVector::zeros(self.layout.storage);
        self.stack(kcl, storage, self.models.voltage_source_derivatives(t))
    }

    fn saturated(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> bool {
        self.models
            .conductance_current(&self.resistive_voltage(x, xdot))
            .1
    }
}

/// Outcome of the initial-derivative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Consistency {
    pub consistent: bool,
    /// `||F(t0, x0, x'0)||` at the returned derivative.
    pub residual_norm: f64,
    pub xdot0: DVector<f64>,
    /// Numerical rank of `dF/dx'` at the solution.
    pub rank: usize,
}

/// Find `x'0` minimizing `||F(t0, x0, x'0)||` and classify `x0`.
///
/// The residual is minimized by Gauss-Newton over `x'`. When `dF/dx'` is
/// singular the minimizer is not unique; the free directions are then fixed
/// by requiring the time derivative of the algebraic rows to vanish, which
/// gives the derivative of the algebraic variables a trajectory would have.
/// Directions left free after that stay at minimum norm.
pub fn check_consistency<S: ImplicitSystem + ?Sized>(
    dae: &S,
    t0: f64,
    x0: &DVector<f64>,
) -> Result<Consistency, FormulationError> {
    let n = dae.dim();
    let mut xdot = DVector::zeros(n);
    let mut rank = 0;
    for _ in 0..50 {
        let r = dae.residual(t0, x0, &xdot)?;
        let (_, j_xdot) = dae.jacobians(t0, x0, &xdot)?;
        let (delta, r_used) = lstsq(&j_xdot, &(-r), RANK_TOL)?;
        rank = r_used;
        xdot += &delta;
        if delta.norm() <= 1e-14 * (1.0 + xdot.norm()) {
            break;
        }
    }
    let stage_one = xdot.clone();
    let stage_one_norm = dae.residual(t0, x0, &xdot)?.norm();

    let (j_x, j_xdot) = dae.jacobians(t0, x0, &xdot)?;
    let free = null_space(&j_xdot, RANK_TOL)?;
    if free.dim() > 0 {
        let algebraic = left_null_space(&j_xdot, RANK_TOL)?;
        if algebraic.dim() > 0 {
            let w_t = algebraic.basis.transpose();
            let lhs = &w_t * &j_x * &free.basis;
            let rhs = -(&w_t * (dae.time_derivative(t0, x0, &xdot) + &j_x * &xdot));
            let (z, _) = lstsq(&lhs, &rhs, RANK_TOL)?;
            xdot += &free.basis * z;
        }
    }
    let mut residual_norm = dae.residual(t0, x0, &xdot)?.norm();
    let tol = 1e-10 * (1.0 + x0.norm());
    if residual_norm > stage_one_norm.max(tol) {
        // nonlinear leading term: the correction left the minimizer set
        xdot = stage_one;
        residual_norm = stage_one_norm;
    }
    Ok(Consistency {
        consistent: residual_norm <= tol,
        residual_norm,
        xdot0: xdot,
        rank,
    })
}

/// Electric quantities recovered from a MONA trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectricReconstruction {
    /// `e_n = psi'_n`.
    pub potentials: Vec<DVector<f64>>,
    /// `phi_L = A_L^T psi_n`.
    pub fluxes: Vec<DVector<f64>>,
    /// `v_C = A_C^T psi'_n`.
    pub capacitor_voltages: Vec<DVector<f64>>,
    /// `i_C = q_C'_n`.
    pub capacitor_currents: Vec<DVector<f64>>,
    /// `i_V = q_V'_n`.
    pub source_currents: Vec<DVector<f64>>,
    /// `i_L = grad eps_L(phi_L)`.
    pub inductor_currents: Vec<DVector<f64>>,
}

pub fn reconstruct_electric(
    dae: &ImplicitDae,
    traj: &Trajectory,
) -> Result<ElectricReconstruction, FormulationError> {
    if dae.formulation != Formulation::Mona {
        return Err(FormulationError::NotMona);
    }
    if traj.derivatives.len() != traj.states.len() {
        return Err(FormulationError::MissingDerivatives {
            states: traj.states.len(),
            derivatives: traj.derivatives.len(),
        });
    }
    let inc = &dae.incidence;
    let mut out = ElectricReconstruction {
        potentials: Vec::new(),
        fluxes: Vec::new(),
        capacitor_voltages: Vec::new(),
        capacitor_currents: Vec::new(),
        source_currents: Vec::new(),
        inductor_currents: Vec::new(),
    };
    for (x, xdot) in traj.states.iter().zip(&traj.derivatives) {
        let (psi, _, _) = dae.split(x);
        let (e, q_c_dot, q_v_dot) = dae.split(xdot);
        let flux = inc.inductive.transpose() * psi;
        out.capacitor_voltages.push(inc.capacitive.transpose() * &e);
        out.inductor_currents
            .push(dae.models.inductive.gradient(&flux));
        out.potentials.push(e);
        out.fluxes.push(flux);
        out.capacitor_currents.push(q_c_dot);
        out.source_currents.push(q_v_dot);
    }
    Ok(out)
}
