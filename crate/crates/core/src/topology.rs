//! Partial incidence matrices and the algebraic index conditions.
//!
//! Two conditions on the reduced incidence matrix `A = [A_C, A_L, A_R, A_V, A_I]`
//! decide the structural index of both formulations:
//!
//! * **A1**: `N([A_R, A_C, A_V, A_L]^T) = 0` (no cutset of current sources) and
//!   `N(A_V) = 0` (no loop of voltage sources).
//! * **A2**: `N([A_R, A_C, A_V]^T) = 0` (no cutset of inductors and current
//!   sources) and `N([A_C, A_V]) = 0` (no loop of capacitors and voltage
//!   sources).
//!
//! Under A1 the MNA has index at most 2 and the MONA index 1; with A2 as well
//! these drop to 1 and 0.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{hcat, null_space, LinalgError};
use crate::netlist::{BranchClass, CircuitGraph};
use crate::RANK_TOL;

/// Reduced incidence matrix split by branch class. Entries are exactly
/// `-1.0`, `0.0` or `1.0`; rows are the non-ground nodes in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceDecomposition {
    pub capacitive: DMatrix<f64>,
    pub inductive: DMatrix<f64>,
    pub resistive: DMatrix<f64>,
    pub voltage: DMatrix<f64>,
    pub current: DMatrix<f64>,
    /// Non-ground node names, one per row.
    pub nodes: Vec<String>,
    /// Branch names per class, one per column of the matching block.
    pub branch_names: [Vec<String>; 5],
}

impl IncidenceDecomposition {
    pub fn block(&self, class: BranchClass) -> &DMatrix<f64> {
        match class {
            BranchClass::Capacitor => &self.capacitive,
            BranchClass::Inductor => &self.inductive,
            BranchClass::Resistor => &self.resistive,
            BranchClass::VoltageSource => &self.voltage,
            BranchClass::CurrentSource => &self.current,
        }
    }

    pub fn names(&self, class: BranchClass) -> &[String] {
        &self.branch_names[class_slot(class)]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn count(&self, class: BranchClass) -> usize {
        self.block(class).ncols()
    }

    /// `[A_C, A_L, A_R, A_V, A_I]`.
    pub fn reduced(&self) -> DMatrix<f64> {
        self.concat(&BranchClass::ALL)
    }

    /// Horizontal concatenation of the given class blocks.
    pub fn concat(&self, classes: &[BranchClass]) -> DMatrix<f64> {
        let blocks: Vec<&DMatrix<f64>> = classes.iter().map(|&c| self.block(c)).collect();
        hcat(self.node_count(), &blocks)
    }
}

fn class_slot(class: BranchClass) -> usize {
    match class {
        BranchClass::Capacitor => 0,
        BranchClass::Inductor => 1,
        BranchClass::Resistor => 2,
        BranchClass::VoltageSource => 3,
        BranchClass::CurrentSource => 4,
    }
}

/// Column `j` of class `x` has `+1` in the row of the node the branch leaves,
/// `-1` in the row it enters; the ground row is dropped.
pub fn build_incidence(graph: &CircuitGraph) -> IncidenceDecomposition {
    let rows = graph.node_count();
    let build = |class: BranchClass| {
        let branches: Vec<_> = graph.branches_of(class).collect();
        let mut m = DMatrix::zeros(rows, branches.len());
        for (j, b) in branches.iter().enumerate() {
            if b.plus != 0 {
                m[(b.plus - 1, j)] = 1.0;
            }
            if b.minus != 0 {
                m[(b.minus - 1, j)] = -1.0;
            }
        }
        let names = branches.iter().map(|b| b.name.clone()).collect::<Vec<_>>();
        (m, names)
    };
    let (capacitive, c_names) = build(BranchClass::Capacitor);
    let (inductive, l_names) = build(BranchClass::Inductor);
    let (resistive, r_names) = build(BranchClass::Resistor);
    let (voltage, v_names) = build(BranchClass::VoltageSource);
    let (current, i_names) = build(BranchClass::CurrentSource);
    IncidenceDecomposition {
        capacitive,
        inductive,
        resistive,
        voltage,
        current,
        nodes: graph.nodes[1..].to_vec(),
        branch_names: [c_names, l_names, r_names, v_names, i_names],
    }
}

/// Null-space dimension and orthonormal basis of `m`; singular values at or
/// below `tol * sigma_max` count as zero.
pub fn null_space_dim(m: &DMatrix<f64>, tol: f64) -> Result<(usize, DMatrix<f64>), LinalgError> {
    let ns = null_space(m, tol)?;
    Ok((ns.dim(), ns.basis))
}

/// Which of the two index hypotheses a check belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    A1,
    A2,
}

/// Topological defect detected by a non-trivial null space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Defect {
    /// `N([A_R, A_C, A_V, A_L]^T) != 0`
    CurrentSourceCutset,
    /// `N(A_V) != 0`
    VoltageSourceLoop,
    /// `N([A_R, A_C, A_V]^T) != 0`
    InductorCurrentSourceCutset,
    /// `N([A_C, A_V]) != 0`
    CapacitorVoltageSourceLoop,
}

impl Defect {
    pub fn condition(self) -> Condition {
        match self {
            Defect::CurrentSourceCutset | Defect::VoltageSourceLoop => Condition::A1,
            Defect::InductorCurrentSourceCutset | Defect::CapacitorVoltageSourceLoop => {
                Condition::A2
            }
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Defect::CurrentSourceCutset => "I-cutset",
            Defect::VoltageSourceLoop => "V-loop",
            Defect::InductorCurrentSourceCutset => "LI-cutset",
            Defect::CapacitorVoltageSourceLoop => "CV-loop",
        }
    }

    /// The matrix whose null space is tested, as text.
    pub fn matrix_label(self) -> &'static str {
        match self {
            Defect::CurrentSourceCutset => "[A_R,A_C,A_V,A_L]^T",
            Defect::VoltageSourceLoop => "A_V",
            Defect::InductorCurrentSourceCutset => "[A_R,A_C,A_V]^T",
            Defect::CapacitorVoltageSourceLoop => "[A_C,A_V]",
        }
    }

    pub const ALL: [Defect; 4] = [
        Defect::CurrentSourceCutset,
        Defect::VoltageSourceLoop,
        Defect::InductorCurrentSourceCutset,
        Defect::CapacitorVoltageSourceLoop,
    ];

    /// The tested matrix for this defect.
    pub fn matrix(self, inc: &IncidenceDecomposition) -> DMatrix<f64> {
        use BranchClass::*;
        match self {
            Defect::CurrentSourceCutset => inc
                .concat(&[Resistor, Capacitor, VoltageSource, Inductor])
                .transpose(),
            Defect::VoltageSourceLoop => inc.voltage.clone(),
            Defect::InductorCurrentSourceCutset => inc
                .concat(&[Resistor, Capacitor, VoltageSource])
                .transpose(),
            Defect::CapacitorVoltageSourceLoop => inc.concat(&[Capacitor, VoltageSource]),
        }
    }
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Result of one null-space test.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceCheck {
    pub defect: Defect,
    pub rank: usize,
    pub null_dim: usize,
    /// A unit null vector when `null_dim > 0`.
    pub witness: Option<DVector<f64>>,
}

impl NullSpaceCheck {
    pub fn holds(&self) -> bool {
        self.null_dim == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub a1_holds: bool,
    pub a2_holds: bool,
    /// One entry per [`Defect`], in [`Defect::ALL`] order.
    pub checks: Vec<NullSpaceCheck>,
    pub tol: f64,
}

impl ConditionReport {
    pub fn check(&self, defect: Defect) -> &NullSpaceCheck {
        self.checks
            .iter()
            .find(|c| c.defect == defect)
            .expect("every defect is checked")
    }

    pub fn failures(&self, condition: Condition) -> impl Iterator<Item = &NullSpaceCheck> + '_ {
        self.checks
            .iter()
            .filter(move |c| c.defect.condition() == condition && !c.holds())
    }
}

/// Evaluate A1 and A2 with the default rank tolerance.
pub fn check_conditions(inc: &IncidenceDecomposition) -> Result<ConditionReport, LinalgError> {
    check_conditions_with(inc, RANK_TOL)
}

pub fn check_conditions_with(
    inc: &IncidenceDecomposition,
    tol: f64,
) -> Result<ConditionReport, LinalgError> {
    let mut checks = Vec::with_capacity(4);
    for defect in Defect::ALL {
        let ns = null_space(&defect.matrix(inc), tol)?;
        let witness = (ns.dim() > 0).then(|| ns.basis.column(0).into_owned());
        checks.push(NullSpaceCheck {
            defect,
            rank: ns.rank,
            null_dim: ns.dim(),
            witness,
        });
    }
    let holds = |cond: Condition| {
        checks
            .iter()
            .filter(|c| c.defect.condition() == cond)
            .all(|c| c.holds())
    };
    Ok(ConditionReport {
        a1_holds: holds(Condition::A1),
        a2_holds: holds(Condition::A2),
        checks,
        tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// Electric node potentials, inductor and voltage-source currents.
    Mna,
    /// Magnetic node potentials, capacitor and voltage-source charges.
    Mona,
}

impl Formulation {
    pub fn label(self) -> &'static str {
        match self {
            Formulation::Mna => "MNA",
            Formulation::Mona => "MONA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexPrediction {
    pub formulation: Formulation,
    pub index: usize,
    pub a2_holds: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("ill-posed topology: condition A1 violated by {} ({} has a null vector)", .defect, .defect.matrix_label())]
pub struct IllPosedTopology {
    pub defect: Defect,
    pub witness: DVector<f64>,
}

/// Structural index from the condition report.
///
/// | | A1 and A2 | A1 only |
/// |------|---|---|
/// | MNA  | 1 | 2 |
/// | MONA | 0 | 1 |
///
/// Without A1 there is no prediction.
pub fn predict_index(
    report: &ConditionReport,
    formulation: Formulation,
) -> Result<IndexPrediction, IllPosedTopology> {
    if let Some(failed) = report.failures(Condition::A1).next() {
        return Err(IllPosedTopology {
            defect: failed.defect,
            witness: failed.witness.clone().unwrap_or_else(|| DVector::zeros(0)),
        });
    }
    let index = match (formulation, report.a2_holds) {
        (Formulation::Mna, true) => 1,
        (Formulation::Mna, false) => 2,
        (Formulation::Mona, true) => 0,
        (Formulation::Mona, false) => 1,
    };
    Ok(IndexPrediction {
        formulation,
        index,
        a2_holds: report.a2_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{build_graph, parse_netlist};

    fn incidence(text: &str) -> IncidenceDecomposition {
        build_incidence(&build_graph(&parse_netlist(text).unwrap()).unwrap())
    }

    #[test]
    fn single_resistor() {
        let inc = incidence("R1 1 0 5");
        assert_eq!(inc.resistive, DMatrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(inc.capacitive.shape(), (1, 0));
    }

    #[test]
    fn parallel_voltage_sources_violate_a1() {
        let inc = incidence("V1 1 0 dc 1\nV2 1 0 dc 1\nR1 1 0 1");
        let report = check_conditions(&inc).unwrap();
        assert!(!report.a1_holds);
        let check = report.check(Defect::VoltageSourceLoop);
        let w = check.witness.as_ref().unwrap();
        assert!((&inc.voltage * w).norm() <= 10.0 * RANK_TOL * w.norm());
        let err = predict_index(&report, Formulation::Mna).unwrap_err();
        assert_eq!(err.defect, Defect::VoltageSourceLoop);
    }

    #[test]
    fn current_source_cutset() {
        // node 2 only touched by a current source and an inductor
        let inc = incidence("I1 1 2 dc 1\nR1 1 0 1\nL1 2 0 1");
        let report = check_conditions(&inc).unwrap();
        assert!(report.a1_holds);
        assert!(!report.a2_holds);
        assert_eq!(
            report.failures(Condition::A2).next().unwrap().defect,
            Defect::InductorCurrentSourceCutset
        );

        let inc = incidence("I1 1 0 dc 1\nR1 1 2 1\nI2 2 0 dc 1\nR2 1 0 1");
        // node 2 is cut from the rest by I2 alone together with R1; still no pure I-cutset
        assert!(check_conditions(&inc).unwrap().a1_holds);
        let inc = incidence("I1 1 0 dc 1\nR1 1 0 1\nI2 2 1 dc 1");
        let report = check_conditions(&inc).unwrap();
        assert!(!report.a1_holds);
        assert!(!report.check(Defect::CurrentSourceCutset).holds());
    }

    #[test]
    fn null_space_dims() {
        let (d, b) = null_space_dim(&DMatrix::identity(3, 3), RANK_TOL).unwrap();
        assert_eq!((d, b.ncols()), (0, 0));
        let (d, b) = null_space_dim(&DMatrix::zeros(2, 3), RANK_TOL).unwrap();
        assert_eq!(d, 3);
        assert!((b.transpose() * &b - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn index_table() {
        let inc = incidence("V1 1 0 sin 1 pi\nR1 1 2 1\nC1 2 0 1");
        let report = check_conditions(&inc).unwrap();
        assert!(report.a1_holds && report.a2_holds);
        assert_eq!(predict_index(&report, Formulation::Mna).unwrap().index, 1);
        assert_eq!(predict_index(&report, Formulation::Mona).unwrap().index, 0);
    }
}
