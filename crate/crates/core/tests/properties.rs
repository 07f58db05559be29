use proptest::prelude::*;

use spinpoint::device::{total_transfer, Device, Element};
use spinpoint::extension::{
    compose, conserves_currents, defect_matrix, flux_phase, sigma_forms, CurrentComponent, DEFAULT_CURRENT_TOL,
};
use spinpoint::scattering::{
    channel_probabilities, closed_form_s_r, propagation, transfer_to_scattering, Channel, DEFAULT_SIGMA_X_TOL,
};
use spinpoint::DefectSpec;

fn any_generator() -> impl Strategy<Value = DefectSpec> {
    prop_oneof![
        (-10.0..10.0f64).prop_map(|x1| DefectSpec::Delta { x1 }),
        (-10.0..10.0f64).prop_map(|x4| DefectSpec::DeltaPrime { x4 }),
        (0.1..10.0f64).prop_map(|mu| DefectSpec::MassJump { mu }),
        (-10.0..10.0f64).prop_map(|phi| DefectSpec::Flux { phi }),
        (-10.0..10.0f64).prop_map(|r| DefectSpec::RFlip { r }),
        (-10.0..10.0f64).prop_map(|r_tilde| DefectSpec::RTildeFlip { r_tilde }),
    ]
}

/// Generators that conserve all three currents, with moderate parameters.
fn spin_conserving_generator() -> impl Strategy<Value = DefectSpec> {
    prop_oneof![
        (0.5..2.0f64).prop_map(|mu| DefectSpec::MassJump { mu }),
        (-2.0..2.0f64).prop_map(|phi| DefectSpec::Flux { phi }),
        (-2.0..2.0f64).prop_map(|r| DefectSpec::RFlip { r }),
        (-2.0..2.0f64).prop_map(|r_tilde| DefectSpec::RTildeFlip { r_tilde }),
    ]
}

/// Parity-invariant generators with real parameters.
fn parity_generator() -> impl Strategy<Value = DefectSpec> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(|x1| DefectSpec::Delta { x1 }),
        (-1.0..1.0f64).prop_map(|x4| DefectSpec::DeltaPrime { x4 }),
        (-1.0..1.0f64).prop_map(|r| DefectSpec::RFlip { r }),
        (-2.0..2.0f64).prop_map(|r_tilde| DefectSpec::RTildeFlip { r_tilde }),
    ]
}

fn element(defects: BoxedStrategy<DefectSpec>) -> impl Strategy<Value = Element> {
    prop_oneof![
        defects.prop_map(Element::Defect),
        (0.05..2.0f64).prop_map(Element::free)
    ]
}

fn device(defects: BoxedStrategy<DefectSpec>, max_len: usize) -> impl Strategy<Value = Device> {
    prop::collection::vec(element(defects), 0..=max_len).prop_map(|els| Device::new(els).unwrap())
}

proptest! {
    #[test]
    fn every_generator_conserves_probability_current(spec in any_generator()) {
        let report = conserves_currents(&defect_matrix(&spec).unwrap(), DEFAULT_CURRENT_TOL);
        prop_assert!(report.x);
        prop_assert!(report.residual(CurrentComponent::X) < 1e-13, "{spec}: {report:?}");
    }

    #[test]
    fn spin_conserving_products_pass_all_forms(factors in prop::collection::vec(spin_conserving_generator(), 1..5)) {
        let spec = DefectSpec::Product { factors };
        let report = conserves_currents(&defect_matrix(&spec).unwrap(), DEFAULT_CURRENT_TOL);
        prop_assert!(report.all(), "{spec}: {report:?}");
    }

    #[test]
    fn rflip_group_law(r1 in -10.0..10.0f64, r2 in -10.0..10.0f64) {
        let m1 = defect_matrix(&DefectSpec::RFlip { r: r1 }).unwrap();
        let m2 = defect_matrix(&DefectSpec::RFlip { r: r2 }).unwrap();
        let m12 = defect_matrix(&DefectSpec::RFlip { r: r1 + r2 }).unwrap();
        prop_assert_eq!(m1 * m2, m12);
    }

    #[test]
    fn flux_decouples_from_rflip(r in -10.0..10.0f64, phi in -4.0..4.0f64) {
        let mr = defect_matrix(&DefectSpec::RFlip { r }).unwrap();
        let flux = defect_matrix(&DefectSpec::Flux { phi }).unwrap();
        let lhs = compose(&[mr, flux]).unwrap();
        prop_assert!(lhs.max_abs_diff(&mr.scaled(flux_phase(phi))) < 1e-14);
    }

    #[test]
    fn propagation_composes(k in 0.01..50.0f64, l1 in 0.0..3.0f64, l2 in 0.0..3.0f64) {
        let lhs = propagation(k, l1).unwrap() * propagation(k, l2).unwrap();
        let rhs = propagation(k, l1 + l2).unwrap();
        // entries scale like k; compare relative to that
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12 * k.max(1.0));
    }

    #[test]
    fn device_scattering_is_unitary(
        dev in device(any_generator().boxed(), 6),
        k in 0.01..50.0f64,
    ) {
        let s = dev.scattering(k, DEFAULT_SIGMA_X_TOL).unwrap();
        prop_assert!(s.unitarity_residual() < 1e-10, "k={} residual={:e}", k, s.unitarity_residual());
        for &c in &Channel::ALL {
            let total: f64 = channel_probabilities(&s, c).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn transfer_is_associative(
        a in device(spin_conserving_generator().boxed(), 3),
        b in device(spin_conserving_generator().boxed(), 3),
        k in 0.05..20.0f64,
    ) {
        let joined = total_transfer(&a.then(&b), k).unwrap();
        let product = total_transfer(&b, k).unwrap() * total_transfer(&a, k).unwrap();
        let scale = joined.matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
        prop_assert!(joined.max_abs_diff(&product) < 1e-11 * scale);
    }

    #[test]
    fn mirrored_device_swaps_sides(dev in device(parity_generator().boxed(), 5), k in 0.05..20.0f64) {
        let s = dev.scattering(k, DEFAULT_SIGMA_X_TOL).unwrap();
        let s_rev = dev.reversed().scattering(k, DEFAULT_SIGMA_X_TOL).unwrap();
        let diff = (s_rev.entries() - s.mirrored().entries()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-10, "diff = {:e}", diff);
    }

    #[test]
    fn rflip_probabilities_invariant_under_sign_and_spin_swap(k in 0.01..50.0f64, r in -5.0..5.0f64) {
        let s = closed_form_s_r(k, r);
        let s_neg = closed_form_s_r(k, -r);
        for &inc in &Channel::ALL {
            let p = channel_probabilities(&s, inc);
            let p_neg = channel_probabilities(&s_neg, inc.spin_flipped());
            for &out in &Channel::ALL {
                prop_assert!((p[out.index()] - p_neg[out.spin_flipped().index()]).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn sigma_forms_are_hermitian_and_sigma_x_invertible() {
    let (sx, sy, sz) = sigma_forms();
    for f in [sx, sy, sz] {
        assert!(f.is_hermitian());
    }
    let inv = sx.matrix.try_inverse().unwrap();
    assert!((inv * sx.matrix - spinpoint::extension::Mat4::identity())
        .iter()
        .all(|z| z.norm() < 1e-15));
}

#[test]
fn free_propagation_breaks_spin_currents() {
    // Σx is conserved by free propagation, Σy and Σz are not.
    let p = propagation(1.3, 0.7).unwrap();
    let report = conserves_currents(&p, DEFAULT_CURRENT_TOL);
    assert!(report.x);
    assert!(!report.y && !report.z);
}

#[test]
fn transfer_of_closed_form_defect_matches_at_phase_level() {
    let t = defect_matrix(&DefectSpec::RFlip { r: 1.5 }).unwrap();
    let s = transfer_to_scattering(&t, 0.9, DEFAULT_SIGMA_X_TOL).unwrap();
    let c = closed_form_s_r(0.9, 1.5);
    for i in 0..4 {
        for j in 0..4 {
            assert!((s.entries()[(i, j)] - c.entries()[(i, j)]).norm() < 1e-14);
        }
    }
}
