//! Conventional modified nodal analysis (MNA) and magnetic oriented nodal
//! analysis (MONA) of lumped RLC circuits.
//!
//! Both formulations are assembled as fully implicit DAEs `F(t, x, x') = 0`
//! and share one implicit integrator. The crate is `no_std` and only needs an
//! allocator; file IO and the command-line front end live in the `mona` crate.
//!
//! Pipeline:
//!
//! 1. [`netlist::parse_netlist`] turns netlist text into [`netlist::Netlist`].
//! 2. [`netlist::build_graph`] validates it into a [`netlist::CircuitGraph`].
//! 3. [`topology::build_incidence`] splits the reduced incidence matrix by
//!    element class, and [`topology::check_conditions`] /
//!    [`topology::predict_index`] give the structural index.
//! 4. [`formulations::assemble_mna`] / [`formulations::assemble_mona`] build the
//!    DAE, [`solver::simulate`] integrates it.
//! 5. [`diagnostics`] checks energy balance, passivity and cross-formulation
//!    agreement.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod devices;
pub mod diagnostics;
pub mod formulations;
pub mod linalg;
pub mod netlist;
pub mod solver;
pub mod topology;

pub use devices::DeviceModels;
pub use formulations::{assemble_mna, assemble_mona, Formulation, ImplicitDae, ImplicitSystem};
pub use netlist::{build_graph, parse_netlist, CircuitGraph, Netlist, Waveform};
pub use solver::{simulate, IntegratorConfig, Scheme, Trajectory};
pub use topology::{build_incidence, check_conditions, predict_index, IncidenceDecomposition};

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;
