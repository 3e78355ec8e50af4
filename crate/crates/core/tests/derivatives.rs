mod common;

use common::*;
use mona_core::devices::{Conductor, StorageEnergy};
use mona_core::linalg::min_symmetric_eigenvalue;
use mona_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `1/2 x^T M x + 1/4 sum x_i^4`, strictly convex for SPD `M`.
#[derive(Debug)]
struct Quartic {
    stiffness: DMatrix<f64>,
}

impl StorageEnergy for Quartic {
    fn dim(&self) -> usize {
        self.stiffness.nrows()
    }
    fn energy(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.stiffness * x)) + 0.25 * x.iter().map(|v| v.powi(4)).sum::<f64>()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.stiffness * x + x.map(|v| v.powi(3))
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        &self.stiffness + DMatrix::from_diagonal(&x.map(|v| 3.0 * v * v))
    }
}

fn quartic(dim: usize) -> Box<Quartic> {
    let b = DMatrix::from_fn(dim, dim, |i, j| 1.0 / (1.0 + i as f64 + 2.0 * j as f64));
    Box::new(Quartic {
        stiffness: &b * b.transpose() + DMatrix::identity(dim, dim),
    })
}

fn nonlinear_mona() -> ImplicitDae {
    let (inc, m) = models(MIXED);
    let m = m
        .with_inductive(quartic(2))
        .unwrap()
        .with_capacitive(quartic(2))
        .unwrap();
    assemble_mona(&inc, &m).unwrap()
}

fn fd_step(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

/// Max entry error of the analytic Jacobians against central differences,
/// relative to the largest Jacobian entry.
fn jacobian_error(
    dae: &dyn ImplicitSystem,
    t: f64,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
) -> (f64, f64) {
    let (j_x, j_xdot) = dae.jacobians(t, x, xdot).unwrap();
    let n = dae.dim();
    let mut fd_x = DMatrix::zeros(n, n);
    let mut fd_xdot = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = fd_step(x[k]);
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[k] += h;
        xm[k] -= h;
        let col =
            (dae.residual(t, &xp, xdot).unwrap() - dae.residual(t, &xm, xdot).unwrap()) / (2.0 * h);
        fd_x.set_column(k, &col);

        let h = fd_step(xdot[k]);
        let (mut vp, mut vm) = (xdot.clone(), xdot.clone());
        vp[k] += h;
        vm[k] -= h;
        let col = (dae.residual(t, x, &vp).unwrap() - dae.residual(t, x, &vm).unwrap()) / (2.0 * h);
        fd_xdot.set_column(k, &col);
    }
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / a.amax().max(1.0);
    (rel(&j_x, &fd_x), rel(&j_xdot, &fd_xdot))
}

fn point(n: usize, seed: &[f64], scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| scale * seed[i])
}

fn seeds() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (
        prop::collection::vec(-1.0..1.0f64, 12),
        prop::collection::vec(-1.0..1.0f64, 12),
        0.0..10.0f64,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn mna_jacobians_match_finite_differences((sx, sv, t) in seeds()) {
        for text in [MIXED, CV_LOOP] {
            let dae = mna(text);
            let n = dae.layout.dim();
            let (ex, exd) = jacobian_error(&dae, t, &point(n, &sx, 1.0), &point(n, &sv, 1.0));
            prop_assert!(ex < 1e-6 && exd < 1e-6, "{ex} {exd}");
        }
    }

    #[test]
    fn mona_jacobians_match_finite_differences((sx, sv, t) in seeds()) {
        for text in [MIXED, CV_LOOP] {
            let dae = mona(text);
            let n = dae.layout.dim();
            let (ex, exd) = jacobian_error(&dae, t, &point(n, &sx, 1.0), &point(n, &sv, 1.0));
            prop_assert!(ex < 1e-6 && exd < 1e-6, "{ex} {exd}");
        }
        // rectifier states at circuit scale: fluxes of order L * 1 A
        let dae = mona(RECTIFIER);
        let n = dae.layout.dim();
        let (ex, exd) = jacobian_error(&dae, t, &point(n, &sx, 1e-5), &point(n, &sv, 0.5));
        prop_assert!(ex < 1e-6 && exd < 1e-6, "{ex} {exd}");
    }

    #[test]
    fn nonlinear_storage_jacobians_match_finite_differences((sx, sv, t) in seeds()) {
        let dae = nonlinear_mona();
        let n = dae.layout.dim();
        let (ex, exd) = jacobian_error(&dae, t, &point(n, &sx, 1.0), &point(n, &sv, 1.0));
        prop_assert!(ex < 1e-6 && exd < 1e-6, "{ex} {exd}");
    }

    #[test]
    fn energy_gradient_and_hessian_match_finite_differences(sf in prop::collection::vec(-1.5..1.5f64, 2), sq in prop::collection::vec(-1.5..1.5f64, 2)) {
        let (_, m) = models(MIXED);
        let m = m.with_inductive(quartic(2)).unwrap().with_capacitive(quartic(2)).unwrap();
        let flux = DVector::from_vec(sf);
        let charge = DVector::from_vec(sq);
        let (g_flux, g_charge) = m.energy_gradient(&flux, &charge);
        let (h_flux, h_charge) = m.energy_hessian(&flux, &charge);
        let grad = |f: &DVector<f64>, c: &DVector<f64>| m.energy_gradient(f, c);
        for k in 0..2 {
            let h = fd_step(flux[k]);
            let (mut fp, mut fm) = (flux.clone(), flux.clone());
            fp[k] += h;
            fm[k] -= h;
            let d = (m.energy(&fp, &charge) - m.energy(&fm, &charge)) / (2.0 * h);
            prop_assert!((d - g_flux[k]).abs() / g_flux.amax().max(1.0) < 1e-6);
            let col = (grad(&fp, &charge).0 - grad(&fm, &charge).0) / (2.0 * h);
            prop_assert!((col - h_flux.column(k)).amax() / h_flux.amax() < 1e-5);

            let h = fd_step(charge[k]);
            let (mut cp, mut cm) = (charge.clone(), charge.clone());
            cp[k] += h;
            cm[k] -= h;
            let d = (m.energy(&flux, &cp) - m.energy(&flux, &cm)) / (2.0 * h);
            prop_assert!((d - g_charge[k]).abs() / g_charge.amax().max(1.0) < 1e-6);
            let col = (grad(&flux, &cp).1 - grad(&flux, &cm).1) / (2.0 * h);
            prop_assert!((col - h_charge.column(k)).amax() / h_charge.amax() < 1e-5);
        }
        prop_assert_eq!(&h_flux, &h_flux.transpose());
        prop_assert!(min_symmetric_eigenvalue(&h_flux) > 0.0);
        prop_assert!(min_symmetric_eigenvalue(&h_charge) > 0.0);
    }

    #[test]
    fn gradient_error_is_second_order(s in prop::collection::vec(0.2..1.0f64, 2), d in prop::collection::vec(-1.0..1.0f64, 2)) {
        prop_assume!(d.iter().map(|v| v * v).sum::<f64>() > 0.1);
        let model = quartic(2);
        let x = DVector::from_vec(s);
        let dir = DVector::from_vec(d).normalize();
        let err = |scale: f64| {
            let h = &dir * scale;
            let central = (model.energy(&(&x + &h)) - model.energy(&(&x - &h))) / 2.0;
            (model.gradient(&x).dot(&h) - central).abs() / h.norm()
        };
        let order = (err(2e-2) / err(1e-2)).log2();
        prop_assert!(order >= 1.9, "{order}");
    }

    #[test]
    fn conductances_are_positive_and_diodes_monotone(v in -3.0..3.0f64, dv in 1e-3..1.0f64) {
        let (_, m) = models(RECTIFIER);
        let volts = DVector::from_element(m.conductors.len(), v);
        let (g, clamped) = m.conductance_matrix(&volts);
        prop_assert!(!clamped);
        prop_assert!(min_symmetric_eigenvalue(&g) > 0.0);
        let diode = Conductor::Diode { saturation: 2.5, exponent: 4.0 };
        prop_assert!(diode.current(v + dv).0 > diode.current(v).0);
    }
}

#[test]
fn linear_storage_matrices_are_spd() {
    let (_, m) = models(RECTIFIER);
    let (h_flux, h_charge) = m.energy_hessian(&DVector::zeros(2), &DVector::zeros(0));
    assert_eq!(h_flux, h_flux.transpose());
    assert!(min_symmetric_eigenvalue(&h_flux) > 0.0);
    assert_eq!(h_charge.shape(), (0, 0));
    let l = m.inductance().unwrap();
    assert!(min_symmetric_eigenvalue(l) > 0.0);
    // inverse of the coupled inductance by the 2x2 formula
    let det = 27.46e-6 * 27.75e-6 - 27.57e-6 * 27.57e-6;
    let inv = DMatrix::from_row_slice(2, 2, &[27.75e-6, -27.57e-6, -27.57e-6, 27.46e-6]) / det;
    assert!((h_flux - &inv).amax() / inv.amax() < 1e-9);

    let (_, m) = models(CV_LOOP);
    let (_, h_charge) = m.energy_hessian(&DVector::zeros(0), &DVector::zeros(3));
    assert_eq!(h_charge, DMatrix::identity(3, 3));
}
