//! Constitutive laws: resistive current maps and the stored-energy functionals
//! of inductors and capacitors.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::linalg::min_symmetric_eigenvalue;
use crate::netlist::{BranchClass, BranchModel, CircuitGraph, Waveform};

/// Largest argument passed to `exp` in the diode law.
pub const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("{block} matrix is not symmetric positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        block: &'static str,
        min_eigenvalue: f64,
    },
    #[error("{block} model has dimension {found}, expected {expected}")]
    DimensionMismatch {
        block: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(
        "{block} storage model is nonlinear; a forward map is only available for linear models"
    )]
    NonlinearStorage { block: &'static str },
}

/// Current law of one resistive branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conductor {
    Linear {
        conductance: f64,
    },
    /// `i = saturation * (exp(exponent * v) + 1)`
    Diode {
        saturation: f64,
        exponent: f64,
    },
}

impl Conductor {
    /// Branch current and whether the exponential was clamped.
    pub fn current(&self, v: f64) -> (f64, bool) {
        match *self {
            Conductor::Linear { conductance } => (conductance * v, false),
            Conductor::Diode {
                saturation,
                exponent,
            } => {
                let (ex, clamped) = clamped_exp(exponent * v);
                (saturation * (ex + 1.0), clamped)
            }
        }
    }

    /// `di/dv`, strictly positive.
    pub fn slope(&self, v: f64) -> (f64, bool) {
        match *self {
            Conductor::Linear { conductance } => (conductance, false),
            Conductor::Diode {
                saturation,
                exponent,
            } => {
                let (ex, clamped) = clamped_exp(exponent * v);
                (saturation * exponent * ex, clamped)
            }
        }
    }
}

fn clamped_exp(arg: f64) -> (f64, bool) {
    if arg > EXP_CLAMP {
        (libm::exp(EXP_CLAMP), true)
    } else {
        (libm::exp(arg), false)
    }
}

/// A strictly convex stored-energy functional, e.g. `eps_L(phi)` or `eps_C(q)`.
///
/// The gradient maps flux to current (inductors) or charge to voltage
/// (capacitors); the Hessian is the inverse differential inductance or
/// capacitance.
pub trait StorageEnergy: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn energy(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// For linear storage, the matrix `M` with `x = M * gradient(x)`
    /// (the inductance or capacitance matrix).
    fn linear_matrix(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

/// `eps(x) = 1/2 x^T M^{-1} x` for a constant SPD matrix `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStorage {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl LinearStorage {
    pub fn new(matrix: DMatrix<f64>, block: &'static str) -> Result<Self, DeviceError> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(DeviceError::DimensionMismatch {
                block,
                expected: n,
                found: matrix.ncols(),
            });
        }
        let spd_error = || DeviceError::NotPositiveDefinite {
            block,
            min_eigenvalue: min_symmetric_eigenvalue(&matrix),
        };
        if n > 0 && (&matrix - matrix.transpose()).amax() > 0.0 {
            return Err(spd_error());
        }
        let chol = matrix.clone().cholesky().ok_or_else(spd_error)?;
        let mut inverse = chol.inverse();
        // symmetrize away roundoff so the Hessian is exactly symmetric
        inverse = (&inverse + inverse.transpose()) * 0.5;
        Ok(Self { matrix, inverse })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

impl StorageEnergy for LinearStorage {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.inverse * x))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.inverse * x
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.inverse.clone()
    }

    fn linear_matrix(&self) -> Option<&DMatrix<f64>> {
        Some(&self.matrix)
    }
}

/// All constitutive data of one circuit, in incidence-block order.
#[derive(Debug, Clone)]
pub struct DeviceModels {
    pub conductors: Vec<Conductor>,
    pub inductive: Arc<dyn StorageEnergy>,
    pub capacitive: Arc<dyn StorageEnergy>,
    pub current_sources: Vec<Waveform>,
    pub voltage_sources: Vec<Waveform>,
}

impl DeviceModels {
    /// Linear storage and the resistive laws read off the graph. Mutual
    /// couplings fill the off-diagonal inductance entries symmetrically.
    pub fn from_graph(graph: &CircuitGraph) -> Result<Self, DeviceError> {
        let mut conductors = Vec::new();
        let mut capacitances = Vec::new();
        let mut inductances = Vec::new();
        let mut current_sources = Vec::new();
        let mut voltage_sources = Vec::new();
        for class in BranchClass::ALL {
            for b in graph.branches_of(class) {
                match b.model {
                    BranchModel::Resistor { resistance } => conductors.push(Conductor::Linear {
                        conductance: 1.0 / resistance,
                    }),
                    BranchModel::Diode {
                        saturation,
                        exponent,
                    } => conductors.push(Conductor::Diode {
                        saturation,
                        exponent,
                    }),
                    BranchModel::Capacitor { capacitance } => capacitances.push(capacitance),
                    BranchModel::Inductor { inductance } => inductances.push(inductance),
                    BranchModel::VoltageSource(w) => voltage_sources.push(w),
                    BranchModel::CurrentSource(w) => current_sources.push(w),
                }
            }
        }
        let capacitance = DMatrix::from_diagonal(&DVector::from_vec(capacitances));
        let mut inductance = DMatrix::from_diagonal(&DVector::from_vec(inductances));
        for k in &graph.couplings {
            inductance[(k.first, k.second)] += k.mutual;
            inductance[(k.second, k.first)] += k.mutual;
        }
        Ok(Self {
            conductors,
            inductive: Arc::new(LinearStorage::new(inductance, "inductance")?),
            capacitive: Arc::new(LinearStorage::new(capacitance, "capacitance")?),
            current_sources,
            voltage_sources,
        })
    }

    /// Replace the inductor energy, e.g. with a nonlinear model.
    pub fn with_inductive(mut self, model: Box<dyn StorageEnergy>) -> Result<Self, DeviceError> {
        check_dim("inductive", self.inductive.dim(), model.dim())?;
        self.inductive = Arc::from(model);
        Ok(self)
    }

    /// Replace the capacitor energy.
    pub fn with_capacitive(mut self, model: Box<dyn StorageEnergy>) -> Result<Self, DeviceError> {
        check_dim("capacitive", self.capacitive.dim(), model.dim())?;
        self.capacitive = Arc::from(model);
        Ok(self)
    }

    /// Resistive branch currents `g(v_R)` and whether any diode was clamped.
    pub fn conductance_current(&self, v: &DVector<f64>) -> (DVector<f64>, bool) {
        let mut clamped = false;
        let i = DVector::from_iterator(
            v.len(),
            self.conductors.iter().zip(v.iter()).map(|(c, &vk)| {
                let (i, flag) = c.current(vk);
                clamped |= flag;
                i
            }),
        );
        (i, clamped)
    }

    /// Diagonal derivative `G(v_R)`.
    pub fn conductance_matrix(&self, v: &DVector<f64>) -> (DMatrix<f64>, bool) {
        let mut clamped = false;
        let d = DVector::from_iterator(
            v.len(),
            self.conductors.iter().zip(v.iter()).map(|(c, &vk)| {
                let (s, flag) = c.slope(vk);
                clamped |= flag;
                s
            }),
        );
        (DMatrix::from_diagonal(&d), clamped)
    }

    /// `eps_L(phi) + eps_C(q)`.
    pub fn energy(&self, flux: &DVector<f64>, charge: &DVector<f64>) -> f64 {
        self.inductive.energy(flux) + self.capacitive.energy(charge)
    }

    /// `(i_L, v_C)`.
    pub fn energy_gradient(
        &self,
        flux: &DVector<f64>,
        charge: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        (
            self.inductive.gradient(flux),
            self.capacitive.gradient(charge),
        )
    }

    /// `(L^{-1}, C^{-1})` at the given point.
    pub fn energy_hessian(
        &self,
        flux: &DVector<f64>,
        charge: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            self.inductive.hessian(flux),
            self.capacitive.hessian(charge),
        )
    }

    /// Constant inductance matrix, if the inductor model is linear.
    pub fn inductance(&self) -> Result<&DMatrix<f64>, DeviceError> {
        self.inductive
            .linear_matrix()
            .ok_or(DeviceError::NonlinearStorage { block: "inductive" })
    }

    pub fn capacitance(&self) -> Result<&DMatrix<f64>, DeviceError> {
        self.capacitive
            .linear_matrix()
            .ok_or(DeviceError::NonlinearStorage {
                block: "capacitive",
            })
    }

    /// Positive-definiteness of both Hessians and of `G` at a point.
    pub fn validate_at(
        &self,
        flux: &DVector<f64>,
        charge: &DVector<f64>,
        v_r: &DVector<f64>,
    ) -> Result<(), DeviceError> {
        let (h_l, h_c) = self.energy_hessian(flux, charge);
        let (g, _) = self.conductance_matrix(v_r);
        for (block, m) in [
            ("inverse inductance", h_l),
            ("inverse capacitance", h_c),
            ("conductance", g),
        ] {
            let min_eigenvalue = min_symmetric_eigenvalue(&m);
            if min_eigenvalue <= 0.0 {
                return Err(DeviceError::NotPositiveDefinite {
                    block,
                    min_eigenvalue,
                });
            }
        }
        Ok(())
    }

    pub fn current_source_values(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.current_sources.len(),
            self.current_sources.iter().map(|w| w.value(t)),
        )
    }

    pub fn voltage_source_values(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.voltage_sources.len(),
            self.voltage_sources.iter().map(|w| w.value(t)),
        )
    }

    pub fn current_source_derivatives(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.current_sources.len(),
            self.current_sources.iter().map(|w| w.derivative(t)),
        )
    }

    pub fn voltage_source_derivatives(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.voltage_sources.len(),
            self.voltage_sources.iter().map(|w| w.derivative(t)),
        )
    }
}

fn check_dim(block: &'static str, expected: usize, found: usize) -> Result<(), DeviceError> {
    if expected == found {
        Ok(())
    } else {
        Err(DeviceError::DimensionMismatch {
            block,
            expected,
            found,
        })
    }
}
