use std::sync::Arc;

use approx::assert_relative_eq;
use asdglue::algebra::{GroupValue, LieValue};
use asdglue::bundle::Bundle;
use asdglue::calculus::{curvature_summary, self_dual_curvature};
use asdglue::geometry::{build_lattice, ChartSpec};
use asdglue::instanton::{bpst, InstantonParams, ENERGY_QUANTUM};
use asdglue::io::{load_field, save_field};
use asdglue::splice::{splice, validate_gluing_data, GluingData, GluingSite, Violation};
use asdglue::walls::{enumerate_walls, IntersectionForm, Kappa};
use asdglue::{Bundle32, Bundle64, ConnectionField32, ConnectionField64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn open_bundle64(n: usize, half: f64) -> Arc<Bundle64> {
    Bundle::trivial(Arc::new(build_lattice(&ChartSpec::open(n, half)).unwrap()))
}

fn torus_bundle64(n: usize, length: f64) -> Arc<Bundle64> {
    Bundle::trivial(Arc::new(build_lattice(&ChartSpec::torus(n, length)).unwrap()))
}

#[test]
fn single_precision_tracks_double() {
    let b64 = open_bundle64(16, 4.0);
    let b32: Arc<Bundle32> = Bundle::trivial(Arc::new(build_lattice(&ChartSpec::open(16, 4.0f32)).unwrap()));
    let a64: ConnectionField64 = bpst(&InstantonParams::standard(0.8).unwrap(), &b64).unwrap();
    let a32: ConnectionField32 = bpst(&InstantonParams::standard(0.8f32).unwrap(), &b32).unwrap();
    let e64 = curvature_summary(&a64).energy;
    let e32 = f64::from(curvature_summary(&a32).energy);
    assert_relative_eq!(e32, e64, max_relative = 1e-4);
    assert!(e64 / ENERGY_QUANTUM > 0.5);
}

#[test]
fn dump_round_trip_and_bundle_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.asdf");
    let b = torus_bundle64(6, 3.0);
    let a = ConnectionField64::random(&b, &mut ChaCha8Rng::seed_from_u64(3));
    save_field(&a, &path).unwrap();
    let back: ConnectionField64 = load_field(&b, &path).unwrap();
    assert_eq!(a.data(), back.data());
    let other = torus_bundle64(8, 3.0);
    let wrong: asdglue::Result<ConnectionField64> = load_field(&other, &path);
    assert!(wrong.is_err());
}

#[test]
fn splice_validation_and_coarse_flatness() {
    let b = torus_bundle64(16, 4.0);
    let good = GluingData {
        background: ConnectionField64::zeros(&b),
        sites: vec![GluingSite::new([2.0; 4], 0.04, GroupValue::identity())],
        lambda0: 0.1,
    };
    assert!(validate_gluing_data(&good).is_empty());
    // The instanton core is below grid resolution, so only pure gauge remains.
    let a = splice(&good).unwrap();
    assert!(self_dual_curvature(&a).norm_l2() < 1e-12);

    let bad = GluingData {
        sites: vec![
            GluingSite::new([2.0; 4], 0.2, GroupValue::identity()),
            GluingSite::new([2.1, 2.0, 2.0, 2.0], 0.04, GroupValue::identity()),
        ],
        ..good
    };
    let v = validate_gluing_data(&bad);
    assert!(v.iter().any(|x| matches!(x, Violation::Scale { i: 0, .. })));
    assert!(v.iter().any(|x| matches!(x, Violation::Separation { .. })));
    assert!(splice(&bad).is_err());
}

fn unit_quaternion() -> impl Strategy<Value = GroupValue<f64>> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("nonzero", |q| q.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|q| GroupValue(q).normalized())
}

fn lie_value() -> impl Strategy<Value = LieValue<f64>> {
    prop::array::uniform3(-2.0f64..2.0).prop_map(LieValue)
}

proptest! {
    #[test]
    fn group_product_is_unitary_and_associative(p in unit_quaternion(), q in unit_quaternion(), r in unit_quaternion()) {
        prop_assert!(p.mul(&q).is_unit(1e-12));
        let lhs = p.mul(&q).mul(&r);
        let rhs = p.mul(&q.mul(&r));
        for k in 0..4 {
            prop_assert!((lhs.0[k] - rhs.0[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_action_preserves_bracket(g in unit_quaternion(), x in lie_value(), y in lie_value()) {
        let lhs = g.ad(x.bracket(y));
        let rhs = g.ad(x).bracket(g.ad(y));
        prop_assert!((lhs - rhs).norm() < 1e-10);
        prop_assert!((g.ad(x).norm() - x.norm()).abs() < 1e-10);
    }

    #[test]
    fn exponential_lands_in_the_group(x in lie_value()) {
        prop_assert!(GroupValue::exp(x).is_unit(1e-12));
    }

    #[test]
    fn walls_are_closed_under_negation(signs in prop::collection::vec(any::<bool>(), 2..=3), w in prop::collection::vec(0i64..2, 3), k in 1i64..12) {
        let r = signs.len();
        let mut entries: Vec<i64> = signs.iter().map(|&s| if s { 1 } else { -1 }).collect();
        entries[0] = 1;
        let form = IntersectionForm::diagonal(&entries, 0).unwrap();
        let w = &w[..r];
        let kappa = Kappa::new(k, 4);
        let Ok(walls) = enumerate_walls(&form, w, kappa, 3) else { return Ok(()); };
        for wall in &walls {
            prop_assert!(wall.xi_sq < 0);
            prop_assert!(wall.level >= 0 && Kappa::from_integer(wall.level) < kappa);
            let neg: Vec<i64> = wall.xi.iter().map(|x| -x).collect();
            prop_assert!(walls.iter().any(|o| o.xi == neg));
            for (x, wi) in wall.xi.iter().zip(w) {
                prop_assert_eq!((x - wi).rem_euclid(2), 0);
            }
        }
    }
}
