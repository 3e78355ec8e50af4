//! Netlist text format and the validated circuit graph built from it.
//!
//! One element per line, whitespace separated:
//!
//! ```text
//! * comment
//! R1 n+ n- value
//! C1 n+ n- value
//! L1 n+ n- value
//! D1 n+ n- is k          i = is * (exp(k v) + 1)
//! V1 n+ n- waveform
//! I1 n+ n- waveform
//! K1 L1 L2 value         mutual inductance entry
//!
//! waveform := dc A | sin A omega | cos A omega | square A omega
//! ```
//!
//! Numbers use Rust float syntax (scientific notation allowed) or the literal
//! `pi`. Node `0` is ground.

mod graph;
mod waveform;

pub use graph::{
    build_graph, Branch, BranchClass, BranchModel, CircuitGraph, GraphError, MutualCoupling,
};
pub use waveform::Waveform;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Resistor,
    Capacitor,
    Inductor,
    Diode,
    VoltageSource,
    CurrentSource,
    Coupling,
}

impl ElementKind {
    fn from_name(name: &str) -> Option<Self> {
        let kind = match name.chars().next()?.to_ascii_uppercase() {
            'R' => ElementKind::Resistor,
            'C' => ElementKind::Capacitor,
            'L' => ElementKind::Inductor,
            'D' => ElementKind::Diode,
            'V' => ElementKind::VoltageSource,
            'I' => ElementKind::CurrentSource,
            'K' => ElementKind::Coupling,
            _ => return None,
        };
        Some(kind)
    }

    pub fn letter(self) -> char {
        match self {
            ElementKind::Resistor => 'R',
            ElementKind::Capacitor => 'C',
            ElementKind::Inductor => 'L',
            ElementKind::Diode => 'D',
            ElementKind::VoltageSource => 'V',
            ElementKind::CurrentSource => 'I',
            ElementKind::Coupling => 'K',
        }
    }
}

/// Element parameters; the variant must agree with the element kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    /// Resistance, capacitance or inductance.
    Value(f64),
    Diode {
        saturation: f64,
        exponent: f64,
    },
    Source(Waveform),
    /// Mutual inductance between two previously declared inductors.
    Coupling {
        first: String,
        second: String,
        mutual: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub name: String,
    /// Empty for couplings, which reference inductors instead of nodes.
    pub node_plus: String,
    pub node_minus: String,
    pub params: Params,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Netlist {
    pub elements: Vec<Element>,
}

impl Netlist {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetlistError {
    #[error("line {line}: syntax error at `{token}`: {message}")]
    Syntax {
        line: usize,
        token: String,
        message: &'static str,
    },
    #[error("line {line}: `{name}` expects {expected} fields, found {found}")]
    Arity {
        line: usize,
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate element name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: coupling `{name}` references unknown inductor `{inductor}`")]
    UnknownInductor {
        line: usize,
        name: String,
        inductor: String,
    },
    #[error("line {line}: coupling `{name}` must reference two distinct inductors")]
    SelfCoupling { line: usize, name: String },
    #[error("line {line}: `{name}` has invalid value {value}")]
    InvalidValue {
        line: usize,
        name: String,
        value: f64,
    },
}

/// Parse netlist text. Element order in the result is file order.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut elements: Vec<Element> = Vec::new();
    let mut names = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let element = parse_element(line, &tokens, &elements)?;
        if !names.insert(element.name.clone()) {
            return Err(NetlistError::DuplicateName {
                line,
                name: element.name,
            });
        }
        elements.push(element);
    }
    Ok(Netlist { elements })
}

fn parse_element(
    line: usize,
    tokens: &[&str],
    previous: &[Element],
) -> Result<Element, NetlistError> {
    let name = tokens[0];
    let kind = ElementKind::from_name(name).ok_or_else(|| NetlistError::Syntax {
        line,
        token: name.to_string(),
        message: "unknown element type",
    })?;
    let arity = |expected: usize| {
        if tokens.len() == expected {
            Ok(())
        } else {
            Err(NetlistError::Arity {
                line,
                name: name.to_string(),
                expected,
                found: tokens.len(),
            })
        }
    };
    let positive = |value: f64| {
        if value > 0.0 {
            Ok(value)
        } else {
            Err(NetlistError::InvalidValue {
                line,
                name: name.to_string(),
                value,
            })
        }
    };

    let (node_plus, node_minus, params) = match kind {
        ElementKind::Resistor | ElementKind::Capacitor | ElementKind::Inductor => {
            arity(4)?;
            let value = positive(parse_number(line, tokens[3])?)?;
            (tokens[1], tokens[2], Params::Value(value))
        }
        ElementKind::Diode => {
            arity(5)?;
            let saturation = positive(parse_number(line, tokens[3])?)?;
            let exponent = positive(parse_number(line, tokens[4])?)?;
            (
                tokens[1],
                tokens[2],
                Params::Diode {
                    saturation,
                    exponent,
                },
            )
        }
        ElementKind::VoltageSource | ElementKind::CurrentSource => {
            if tokens.len() < 4 {
                arity(5)?;
            }
            let waveform = parse_waveform(line, name, &tokens[3..])?;
            (tokens[1], tokens[2], Params::Source(waveform))
        }
        ElementKind::Coupling => {
            arity(4)?;
            let mutual = parse_number(line, tokens[3])?;
            for inductor in &tokens[1..3] {
                let known = previous
                    .iter()
                    .any(|e| e.kind == ElementKind::Inductor && e.name == *inductor);
                if !known {
                    return Err(NetlistError::UnknownInductor {
                        line,
                        name: name.to_string(),
                        inductor: inductor.to_string(),
                    });
                }
            }
            if tokens[1] == tokens[2] {
                return Err(NetlistError::SelfCoupling {
                    line,
                    name: name.to_string(),
                });
            }
            let params = Params::Coupling {
                first: tokens[1].to_string(),
                second: tokens[2].to_string(),
                mutual,
            };
            ("", "", params)
        }
    };
    Ok(Element {
        kind,
        name: name.to_string(),
        node_plus: node_plus.to_string(),
        node_minus: node_minus.to_string(),
        params,
    })
}

fn parse_waveform(line: usize, name: &str, tokens: &[&str]) -> Result<Waveform, NetlistError> {
    let shape = tokens[0].to_ascii_lowercase();
    let expected = if shape == "dc" { 2 } else { 3 };
    if !matches!(shape.as_str(), "dc" | "sin" | "cos" | "square") {
        return Err(NetlistError::Syntax {
            line,
            token: tokens[0].to_string(),
            message: "expected waveform `dc`, `sin`, `cos` or `square`",
        });
    }
    if tokens.len() != expected {
        return Err(NetlistError::Arity {
            line,
            name: name.to_string(),
            expected: expected + 3,
            found: tokens.len() + 3,
        });
    }
    let amplitude = parse_number(line, tokens[1])?;
    if shape == "dc" {
        return Ok(Waveform::Dc { amplitude });
    }
    let omega = parse_number(line, tokens[2])?;
    Ok(match shape.as_str() {
        "sin" => Waveform::Sin { amplitude, omega },
        "cos" => Waveform::Cos { amplitude, omega },
        _ => Waveform::Square { amplitude, omega },
    })
}

/// A finite float, or `pi` / `-pi`.
pub fn parse_number(line: usize, token: &str) -> Result<f64, NetlistError> {
    let value = match token.to_ascii_lowercase().as_str() {
        "pi" | "+pi" => PI,
        "-pi" => -PI,
        other => other.parse::<f64>().map_err(|_| NetlistError::Syntax {
            line,
            token: token.to_string(),
            message: "expected a number",
        })?,
    };
    if !value.is_finite() {
        return Err(NetlistError::Syntax {
            line,
            token: token.to_string(),
            message: "number must be finite",
        });
    }
    Ok(value)
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.params {
            Params::Value(v) => write!(
                f,
                "{} {} {} {}",
                self.name, self.node_plus, self.node_minus, v
            ),
            Params::Diode {
                saturation,
                exponent,
            } => write!(
                f,
                "{} {} {} {} {}",
                self.name, self.node_plus, self.node_minus, saturation, exponent
            ),
            Params::Source(w) => write!(
                f,
                "{} {} {} {}",
                self.name, self.node_plus, self.node_minus, w
            ),
            Params::Coupling {
                first,
                second,
                mutual,
            } => write!(f, "{} {} {} {}", self.name, first, second, mutual),
        }
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.elements {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}
