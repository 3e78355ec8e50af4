mod common;

use common::*;
use mona_core::formulations::{check_consistency, reconstruct_electric};
use mona_core::solver::numerical_index;
use mona_core::topology::{null_space_dim, Defect};
use mona_core::*;
use nalgebra::{DMatrix, DVector};

fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn zeros(dae: &ImplicitDae) -> DVector<f64> {
    DVector::zeros(dae.layout.dim())
}

#[test]
fn cv_loop_incidence_matches_printed_matrices() {
    let inc = incidence(CV_LOOP);
    assert_eq!(
        inc.capacitive,
        m(3, 3, &[1., 0., 0., -1., 1., 0., 0., 0., 1.])
    );
    assert_eq!(
        inc.resistive,
        m(3, 3, &[1., 0., 0., 0., 1., 1., 0., 0., -1.])
    );
    assert_eq!(inc.voltage, m(3, 1, &[1., 0., 0.]));
    assert_eq!(inc.inductive.shape(), (3, 0));
}

#[test]
fn rectifier_incidence_matches_printed_matrices() {
    let inc = incidence(RECTIFIER);
    assert_eq!(inc.inductive, m(4, 2, &[1., 0., 0., 1., 0., -1., 0., 0.]));
    #[rustfmt::skip]
    let a_r = m(4, 5, &[
        0., 0., 0., 0., 0.,
        -1., 1., 0., 0., 0.,
        0., 0., -1., 1., 0.,
        0., -1., 0., -1., 1.,
    ]);
    assert_eq!(inc.resistive, a_r);
    assert_eq!(inc.voltage, m(4, 1, &[1., 0., 0., 0.]));
}

#[test]
fn cv_loop_null_space_has_dimension_one() {
    let inc = incidence(CV_LOOP);
    let mat = inc.concat(&[
        netlist::BranchClass::Capacitor,
        netlist::BranchClass::VoltageSource,
    ]);
    let (dim, basis) = null_space_dim(&mat, RANK_TOL).unwrap();
    assert_eq!(dim, 1);
    assert!((&mat * basis).norm() < 1e-12);
}

#[test]
fn conditions_of_both_examples() {
    let report = check_conditions(&incidence(CV_LOOP)).unwrap();
    assert!(report.a1_holds);
    assert!(!report.a2_holds);
    let check = report.check(Defect::CapacitorVoltageSourceLoop);
    assert_eq!(check.null_dim, 1);
    let w = check.witness.as_ref().unwrap();
    let inc = incidence(CV_LOOP);
    assert!((Defect::CapacitorVoltageSourceLoop.matrix(&inc) * w).norm() <= 1e-9 * w.norm());

    let report = check_conditions(&incidence(RECTIFIER)).unwrap();
    assert!(report.a1_holds && report.a2_holds);
}

#[test]
fn predicted_index_agrees_with_shuffle_oracle() {
    let cases = [
        (CV_LOOP, Formulation::Mna, 2),
        (CV_LOOP, Formulation::Mona, 1),
        (RECTIFIER, Formulation::Mna, 1),
        (RECTIFIER, Formulation::Mona, 0),
    ];
    for (text, formulation, expected) in cases {
        let report = check_conditions(&incidence(text)).unwrap();
        assert_eq!(predict_index(&report, formulation).unwrap().index, expected);
        let dae = match formulation {
            Formulation::Mna => mna(text),
            Formulation::Mona => mona(text),
        };
        let z = zeros(&dae);
        let (e, a) = dae.linear_pencil(0.0, &z, &z).unwrap();
        assert_eq!(
            numerical_index(&e, &a).unwrap(),
            expected,
            "{formulation:?}"
        );
    }
}

#[test]
fn cv_loop_mna_pencil_matches_printed_system() {
    let dae = mna(CV_LOOP);
    let z = zeros(&dae);
    let (e, a) = dae.linear_pencil(0.0, &z, &z).unwrap();
    let inc = &dae.incidence;
    let mut e_ref = DMatrix::zeros(4, 4);
    e_ref
        .view_mut((0, 0), (3, 3))
        .copy_from(&(&inc.capacitive * inc.capacitive.transpose()));
    let mut a_ref = DMatrix::zeros(4, 4);
    a_ref
        .view_mut((0, 0), (3, 3))
        .copy_from(&(&inc.resistive * inc.resistive.transpose()));
    a_ref.view_mut((0, 3), (3, 1)).copy_from(&inc.voltage);
    a_ref
        .view_mut((3, 0), (1, 3))
        .copy_from(&-inc.voltage.transpose());
    assert_eq!(e, e_ref);
    assert_eq!(a, a_ref);
}

#[test]
fn cv_loop_mona_pencil_matches_printed_system() {
    let dae = mona(CV_LOOP);
    let z = zeros(&dae);
    let (e, a) = dae.linear_pencil(0.0, &z, &z).unwrap();
    let inc = &dae.incidence;
    let mut e_ref = DMatrix::zeros(7, 7);
    e_ref
        .view_mut((0, 0), (3, 3))
        .copy_from(&(&inc.resistive * inc.resistive.transpose()));
    e_ref.view_mut((0, 3), (3, 3)).copy_from(&inc.capacitive);
    e_ref.view_mut((0, 6), (3, 1)).copy_from(&inc.voltage);
    e_ref
        .view_mut((3, 0), (3, 3))
        .copy_from(&-inc.capacitive.transpose());
    e_ref
        .view_mut((6, 0), (1, 3))
        .copy_from(&-inc.voltage.transpose());
    let mut a_ref = DMatrix::zeros(7, 7);
    a_ref
        .view_mut((3, 3), (3, 3))
        .copy_from(&DMatrix::identity(3, 3));
    assert_eq!(e, e_ref);
    assert_eq!(a, a_ref);
}

#[test]
fn rectifier_leading_matrices() {
    let l = m(2, 2, &[27.46e-6, 27.57e-6, 27.57e-6, 27.75e-6]);

    let dae = mna(RECTIFIER);
    let z = zeros(&dae);
    let (e, _) = dae.linear_pencil(0.0, &z, &z).unwrap();
    let mut e_ref = DMatrix::zeros(7, 7);
    e_ref.view_mut((4, 4), (2, 2)).copy_from(&l);
    assert_eq!(e, e_ref);

    let dae = mona(RECTIFIER);
    let z = zeros(&dae);
    let (e, a) = dae.linear_pencil(0.0, &z, &z).unwrap();
    let inc = &dae.incidence;
    // diode slope is * k = 10 at zero voltage, linear resistor 1
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 10.0, 10.0, 1.0]));
    let top = &inc.resistive * g * inc.resistive.transpose();
    assert!((e.view((0, 0), (4, 4)) - &top).amax() < 1e-12);
    assert_eq!(e.view((0, 4), (4, 1)), inc.voltage);
    assert_eq!(e.view((4, 0), (1, 4)), -inc.voltage.transpose());
    let stiffness = &inc.inductive * l.try_inverse().unwrap() * inc.inductive.transpose();
    let rel = (a.view((0, 0), (4, 4)) - &stiffness).amax() / stiffness.amax();
    assert!(rel < 1e-12, "{rel}");
}

#[test]
fn consistency_of_trivial_initial_state() {
    let dae = mna(CV_LOOP);
    assert!(
        check_consistency(&dae, 0.0, &zeros(&dae))
            .unwrap()
            .consistent
    );
    let dae = mona(CV_LOOP);
    assert!(
        check_consistency(&dae, 0.0, &zeros(&dae))
            .unwrap()
            .consistent
    );

    let cos = CV_LOOP.replace("sin 1 pi", "cos 1 1");
    let dae = mna(&cos);
    let c = check_consistency(&dae, 0.0, &zeros(&dae)).unwrap();
    assert!(!c.consistent);
    assert!((c.residual_norm - 1.0).abs() < 1e-12);

    // regular leading matrix: every state is consistent
    let dae = mona(RECTIFIER);
    let x0 = DVector::from_fn(dae.layout.dim(), |i, _| 1e-6 * (i as f64 - 2.0));
    assert!(check_consistency(&dae, 0.3, &x0).unwrap().consistent);
}

#[test]
fn mona_first_step_enforces_source_on_potential() {
    let dae = mona(CV_LOOP);
    let config = IntegratorConfig::new(Scheme::Trapezoidal, 0.1, 0.1);
    let traj = simulate(&dae, &config, &zeros(&dae), None).unwrap();
    assert_eq!(traj.len(), 2);
    assert!((traj.derivatives[1][0] - (std::f64::consts::PI * 0.1).sin()).abs() < 1e-12);
}

#[test]
fn reconstructed_input_potential_follows_source() {
    let dae = mona(CV_LOOP);
    let config = IntegratorConfig::new(Scheme::Trapezoidal, 0.1, 10.0);
    let traj = simulate(&dae, &config, &zeros(&dae), None).unwrap();
    let rec = reconstruct_electric(&dae, &traj).unwrap();
    for (t, e) in traj.times.iter().zip(&rec.potentials) {
        assert!(
            (e[0] - (std::f64::consts::PI * t).sin()).abs() <= 1e-9,
            "t = {t}"
        );
    }
}

#[test]
fn mna_and_mona_agree_on_smooth_rectifier() {
    let config = IntegratorConfig::new(Scheme::Trapezoidal, 0.1, 10.0);
    let a = mna(RECTIFIER);
    let b = mona(RECTIFIER);
    let ta = simulate(&a, &config, &zeros(&a), None).unwrap();
    let tb = simulate(&b, &config, &zeros(&b), None).unwrap();
    assert!(ta.max_iterations() <= 10 && tb.max_iterations() <= 10);
    let oa = diagnostics::electric_observables(&a, &ta).skip(1);
    let ob = diagnostics::electric_observables(&b, &tb).skip(1);
    let report = diagnostics::compare_trajectories(&oa, &ob).unwrap();
    assert!(report.difference("e_1").unwrap() <= 0.05);
    assert!(report.difference("e_4").unwrap() <= 0.05);
}
