use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{ElementKind, Netlist, Params, Waveform};

/// Branch class as used by the incidence decomposition. Diodes are resistive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BranchClass {
    Capacitor,
    Inductor,
    Resistor,
    VoltageSource,
    CurrentSource,
}

impl BranchClass {
    /// Column-block order of the reduced incidence matrix `[A_C, A_L, A_R, A_V, A_I]`.
    pub const ALL: [BranchClass; 5] = [
        BranchClass::Capacitor,
        BranchClass::Inductor,
        BranchClass::Resistor,
        BranchClass::VoltageSource,
        BranchClass::CurrentSource,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BranchClass::Capacitor => "C",
            BranchClass::Inductor => "L",
            BranchClass::Resistor => "R",
            BranchClass::VoltageSource => "V",
            BranchClass::CurrentSource => "I",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchModel {
    Resistor { resistance: f64 },
    Diode { saturation: f64, exponent: f64 },
    Capacitor { capacitance: f64 },
    Inductor { inductance: f64 },
    VoltageSource(Waveform),
    CurrentSource(Waveform),
}

impl BranchModel {
    pub fn class(&self) -> BranchClass {
        match self {
            BranchModel::Resistor { .. } | BranchModel::Diode { .. } => BranchClass::Resistor,
            BranchModel::Capacitor { .. } => BranchClass::Capacitor,
            BranchModel::Inductor { .. } => BranchClass::Inductor,
            BranchModel::VoltageSource(_) => BranchClass::VoltageSource,
            BranchModel::CurrentSource(_) => BranchClass::CurrentSource,
        }
    }
}

/// A directed branch from `plus` to `minus`. Node index 0 is ground.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub model: BranchModel,
    pub plus: usize,
    pub minus: usize,
}

impl Branch {
    pub fn class(&self) -> BranchClass {
        self.model.class()
    }
}

/// Mutual inductance between two entries of the inductor block.
#[derive(Debug, Clone, PartialEq)]
pub struct MutualCoupling {
    pub name: String,
    /// Positions within the inductor block, in netlist order.
    pub first: usize,
    pub second: usize,
    pub mutual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGraph {
    /// `nodes[0]` is ground `"0"`, the rest in order of first appearance.
    pub nodes: Vec<String>,
    /// Netlist order.
    pub branches: Vec<Branch>,
    pub couplings: Vec<MutualCoupling>,
}

impl CircuitGraph {
    /// Non-ground node count, i.e. `N_n - 1`.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn branches_of(&self, class: BranchClass) -> impl Iterator<Item = &Branch> + '_ {
        self.branches.iter().filter(move |b| b.class() == class)
    }

    pub fn count(&self, class: BranchClass) -> usize {
        self.branches_of(class).count()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("ground node \"0\" is missing")]
    MissingGround,
    #[error("branch `{name}` connects node `{node}` to itself")]
    SelfLoop { name: String, node: String },
    #[error("circuit is not connected; unreachable from ground: {}", .unreachable.join(", "))]
    Disconnected { unreachable: Vec<String> },
}

pub fn build_graph(netlist: &Netlist) -> Result<CircuitGraph, GraphError> {
    let mut nodes: Vec<String> = vec!["0".to_string()];
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    index.insert("0".to_string(), 0);
    let mut has_ground = false;

    let mut branches = Vec::new();
    let mut inductors: Vec<&str> = Vec::new();
    let mut couplings = Vec::new();

    for element in &netlist.elements {
        let model = match (&element.kind, &element.params) {
            (
                ElementKind::Coupling,
                Params::Coupling {
                    first,
                    second,
                    mutual,
                },
            ) => {
                let pos = |name: &str| inductors.iter().position(|l| *l == name);
                // the parser guarantees both inductors precede the coupling
                if let (Some(first), Some(second)) = (pos(first), pos(second)) {
                    couplings.push(MutualCoupling {
                        name: element.name.clone(),
                        first,
                        second,
                        mutual: *mutual,
                    });
                }
                continue;
            }
            (ElementKind::Resistor, Params::Value(r)) => BranchModel::Resistor { resistance: *r },
            (ElementKind::Capacitor, Params::Value(c)) => {
                BranchModel::Capacitor { capacitance: *c }
            }
            (ElementKind::Inductor, Params::Value(l)) => BranchModel::Inductor { inductance: *l },
            (
                ElementKind::Diode,
                Params::Diode {
                    saturation,
                    exponent,
                },
            ) => BranchModel::Diode {
                saturation: *saturation,
                exponent: *exponent,
            },
            (ElementKind::VoltageSource, Params::Source(w)) => BranchModel::VoltageSource(*w),
            (ElementKind::CurrentSource, Params::Source(w)) => BranchModel::CurrentSource(*w),
            _ => unreachable!("parser pairs element kinds with matching params"),
        };
        if element.node_plus == element.node_minus {
            return Err(GraphError::SelfLoop {
                name: element.name.clone(),
                node: element.node_plus.clone(),
            });
        }
        let mut node_id = |name: &str| {
            if name == "0" {
                has_ground = true;
            }
            *index.entry(name.to_string()).or_insert_with(|| {
                nodes.push(name.to_string());
                nodes.len() - 1
            })
        };
        let plus = node_id(&element.node_plus);
        let minus = node_id(&element.node_minus);
        if element.kind == ElementKind::Inductor {
            inductors.push(&element.name);
        }
        branches.push(Branch {
            name: element.name.clone(),
            model,
            plus,
            minus,
        });
    }

    if !has_ground {
        return Err(GraphError::MissingGround);
    }

    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for b in &branches {
        let (a, c) = (find(&mut parent, b.plus), find(&mut parent, b.minus));
        parent[a] = c;
    }
    let root = find(&mut parent, 0);
    let unreachable: Vec<String> = (1..nodes.len())
        .filter(|&i| find(&mut parent, i) != root)
        .map(|i| nodes[i].clone())
        .collect();
    if !unreachable.is_empty() {
        return Err(GraphError::Disconnected { unreachable });
    }

    Ok(CircuitGraph {
        nodes,
        branches,
        couplings,
    })
}
