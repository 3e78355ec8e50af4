#![allow(dead_code)]

use mona_core::*;

pub const CV_LOOP: &str = "\
V1 1 0 sin 1 pi
R1 1 0 1
C1 1 2 1
R2 2 0 1
C2 2 0 1
R3 2 3 1
C3 3 0 1
";

pub const RECTIFIER: &str = "\
V1 1 0 sin 1 pi
L1 1 0 27.46e-6
L2 2 3 27.75e-6
K1 L1 L2 27.57e-6
D1 0 2 2.5 4
D2 2 4 2.5 4
D3 0 3 2.5 4
D4 3 4 2.5 4
R1 4 0 1
";

/// Every element class, for derivative checks.
pub const MIXED: &str = "\
V1 1 0 sin 1 pi
R1 1 2 1
C1 2 0 1
L1 2 3 0.5
L2 3 0 0.8
K1 L1 L2 0.3
D1 3 4 0.01 2
C2 4 0 2
I1 4 0 cos 0.5 2
R2 4 1 3
";

pub fn incidence(text: &str) -> IncidenceDecomposition {
    build_incidence(&build_graph(&parse_netlist(text).unwrap()).unwrap())
}

pub fn models(text: &str) -> (IncidenceDecomposition, DeviceModels) {
    let graph = build_graph(&parse_netlist(text).unwrap()).unwrap();
    (
        build_incidence(&graph),
        DeviceModels::from_graph(&graph).unwrap(),
    )
}

pub fn mna(text: &str) -> ImplicitDae {
    let (inc, m) = models(text);
    assemble_mna(&inc, &m).unwrap()
}

pub fn mona(text: &str) -> ImplicitDae {
    let (inc, m) = models(text);
    assemble_mona(&inc, &m).unwrap()
}
