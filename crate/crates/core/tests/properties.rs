mod common;

use mona_core::diagnostics::oscillation_metric;
use mona_core::linalg::rank;
use mona_core::netlist::BranchClass;
use mona_core::topology::{check_conditions, Defect};
use mona_core::*;
use nalgebra::DVector;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Line {
    letter: char,
    a: usize,
    b: usize,
    value: f64,
}

/// A connected netlist: a random spanning tree plus extra branches.
fn circuit() -> impl Strategy<Value = Vec<Line>> {
    let letters = prop::sample::select(vec!['R', 'C', 'L', 'V', 'I', 'D']);
    (1usize..6)
        .prop_flat_map(move |nodes| {
            let tree = prop::collection::vec(
                (letters.clone(), any::<prop::sample::Index>(), 0.1..10.0f64),
                nodes,
            );
            let extra =
                prop::collection::vec((letters.clone(), 0..=nodes, 0..=nodes, 0.1..10.0f64), 0..6);
            (tree, extra)
        })
        .prop_map(|(tree, extra)| {
            let mut lines = Vec::new();
            for (i, (letter, parent, value)) in tree.into_iter().enumerate() {
                let node = i + 1;
                lines.push(Line {
                    letter,
                    a: node,
                    b: parent.index(node),
                    value,
                });
            }
            for (letter, a, b, value) in extra {
                if a != b {
                    lines.push(Line {
                        letter,
                        a,
                        b,
                        value,
                    });
                }
            }
            lines
        })
}

fn render(lines: &[Line]) -> String {
    let mut out = String::new();
    for (k, l) in lines.iter().enumerate() {
        let params = match l.letter {
            'V' | 'I' => format!("sin {} pi", l.value),
            'D' => format!("{} 2", l.value),
            _ => format!("{}", l.value),
        };
        out.push_str(&format!("{}{k} {} {} {params}\n", l.letter, l.a, l.b));
    }
    out
}

fn graph(text: &str) -> CircuitGraph {
    build_graph(&parse_netlist(text).unwrap()).unwrap()
}

fn null_dims(text: &str) -> (bool, bool, Vec<usize>) {
    let report = check_conditions(&build_incidence(&graph(text))).unwrap();
    let dims = Defect::ALL
        .iter()
        .map(|&d| report.check(d).null_dim)
        .collect();
    (report.a1_holds, report.a2_holds, dims)
}

proptest! {
    #[test]
    fn netlist_round_trips_through_text(lines in circuit(), couple in any::<bool>()) {
        let mut text = render(&lines);
        let inductors: Vec<String> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.letter == 'L')
            .map(|(k, _)| format!("L{k}"))
            .collect();
        if couple && inductors.len() >= 2 {
            text.push_str(&format!("K1 {} {} 0.01\n", inductors[0], inductors[1]));
        }
        let parsed = parse_netlist(&text).unwrap();
        let again = parse_netlist(&parsed.to_string()).unwrap();
        prop_assert_eq!(parsed, again);
    }

    #[test]
    fn node_order_is_deterministic(lines in circuit()) {
        let text = render(&lines);
        let first = graph(&text);
        prop_assert_eq!(&first, &graph(&text));
        // ground first, then first appearance
        let mut expected = vec!["0".to_string()];
        for l in &lines {
            for n in [l.a, l.b] {
                let name = n.to_string();
                if !expected.contains(&name) {
                    expected.push(name);
                }
            }
        }
        prop_assert_eq!(first.nodes, expected);
    }

    #[test]
    fn incidence_blocks_partition_the_branches(lines in circuit()) {
        let g = graph(&render(&lines));
        let inc = build_incidence(&g);
        let total: usize = BranchClass::ALL.iter().map(|&c| inc.count(c)).sum();
        prop_assert_eq!(total, lines.len());
        let mut names: Vec<&String> = BranchClass::ALL.iter().flat_map(|&c| inc.names(c)).collect();
        names.sort();
        names.dedup();
        prop_assert_eq!(names.len(), lines.len());

        let reduced = inc.reduced();
        for col in reduced.column_iter() {
            let plus = col.iter().filter(|&&v| v == 1.0).count();
            let minus = col.iter().filter(|&&v| v == -1.0).count();
            let zero = col.iter().filter(|&&v| v == 0.0).count();
            prop_assert!(plus <= 1 && minus <= 1 && plus + minus >= 1);
            prop_assert_eq!(plus + minus + zero, col.len());
            let sum: f64 = col.iter().sum();
            prop_assert!(sum == 0.0 || sum.abs() == 1.0);
        }
    }

    #[test]
    fn conditions_ignore_branch_order_and_orientation(
        (lines, shuffled) in circuit().prop_flat_map(|l| (Just(l.clone()), Just(l).prop_shuffle())),
        flips in prop::collection::vec(any::<bool>(), 12),
    ) {
        let reference = null_dims(&render(&lines));
        let transformed: Vec<Line> = shuffled
            .iter()
            .zip(flips.iter().cycle())
            .map(|(l, &flip)| if flip { Line { a: l.b, b: l.a, ..l.clone() } } else { l.clone() })
            .collect();
        prop_assert_eq!(reference, null_dims(&render(&transformed)));
    }

    #[test]
    fn witnesses_lie_in_the_null_space(lines in circuit()) {
        let inc = build_incidence(&graph(&render(&lines)));
        let report = check_conditions(&inc).unwrap();
        for check in &report.checks {
            if let Some(w) = &check.witness {
                let m = check.defect.matrix(&inc);
                prop_assert!((m * w).norm() <= 10.0 * report.tol * w.norm());
            }
        }
    }

    #[test]
    fn mona_leading_matrix_is_regular_under_a2(lines in circuit()) {
        let g = graph(&render(&lines));
        let inc = build_incidence(&g);
        let report = check_conditions(&inc).unwrap();
        let models = DeviceModels::from_graph(&g).unwrap();
        if report.a1_holds && report.a2_holds {
            let dae = assemble_mona(&inc, &models).unwrap();
            let z = DVector::zeros(dae.layout.dim());
            let (_, j_xdot) = dae.jacobians(0.0, &z, &z).unwrap();
            prop_assert_eq!(rank(&j_xdot, RANK_TOL).unwrap(), dae.layout.dim());
        }
        let dae = assemble_mna(&inc, &models).unwrap();
        if dae.layout.sources > 0 {
            let z = DVector::zeros(dae.layout.dim());
            let (_, j_xdot) = dae.jacobians(0.0, &z, &z).unwrap();
            let cap = &inc.capacitive * inc.capacitive.transpose();
            let expected = rank(&cap, RANK_TOL).unwrap() + dae.layout.storage;
            prop_assert_eq!(rank(&j_xdot, RANK_TOL).unwrap(), expected);
            prop_assert!(expected < dae.layout.dim());
        }
    }

    #[test]
    fn oscillation_metric_shift_and_scale(values in prop::collection::vec(-50i32..50, 3..40), shift in -100i32..100, power in -4i32..4) {
        let series: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let base = oscillation_metric(&series).unwrap();
        let shifted: Vec<f64> = series.iter().map(|v| v + shift as f64).collect();
        prop_assert_eq!(oscillation_metric(&shifted).unwrap(), base);
        let factor = 2f64.powi(power);
        let scaled: Vec<f64> = series.iter().map(|v| v * factor).collect();
        let m = oscillation_metric(&scaled).unwrap();
        prop_assert_eq!(m.alternation_fraction, base.alternation_fraction);
        prop_assert_eq!(m.amplitude, base.amplitude * factor);
    }
}

#[test]
fn every_element_class_has_its_own_block() {
    let g = graph(common::MIXED);
    let inc = build_incidence(&g);
    assert_eq!(inc.names(BranchClass::Resistor), ["R1", "D1", "R2"]);
    assert_eq!(inc.names(BranchClass::Inductor), ["L1", "L2"]);
    assert_eq!(inc.names(BranchClass::Capacitor), ["C1", "C2"]);
    assert_eq!(inc.names(BranchClass::VoltageSource), ["V1"]);
    assert_eq!(inc.names(BranchClass::CurrentSource), ["I1"]);
}
