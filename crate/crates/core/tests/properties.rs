use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use semireg::bump::{partition_of_unity, Partition};
use semireg::cells::lip_to_l;
use semireg::field::{fd_partial, FieldRef, JetFn, Polynomial, ScalarField};
use semireg::grid::{BoundingBox, GridSpec};
use semireg::jet::{multi_index_enumerate, Jet};
use semireg::oracle::{g_eta_compose_bound, g_eta_contains, hausdorff_distance, OracleRef, Point, PointSet, Segment, Union, Verdict};
use semireg::regular::{smoothstep_p, RegularityCertificate};
use semireg::strat::{half_line_scene, Stratification};

fn negative_axis() -> OracleRef {
    Arc::new(Segment::half_line(vec![0.0, 0.0], vec![-1.0, 0.0]))
}

fn planar() -> impl Strategy<Value = Point> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

fn cloud() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(planar(), 1..12)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn half_line_partition() -> &'static (Stratification, Partition) {
    static CELL: OnceLock<(Stratification, Partition)> = OnceLock::new();
    CELL.get_or_init(|| {
        let bbox = BoundingBox::cube(2, 1.0);
        let s = half_line_scene(bbox.clone()).unwrap();
        let cover: Vec<Vec<usize>> = (0..s.len()).map(|i| vec![i]).collect();
        let part = partition_of_unity(&s, &cover, 0.5, 2, &GridSpec::new(bbox, 41)).unwrap();
        (s, part)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn relative_neighbourhoods_grow_with_eta(z in planar(), x in planar(), eta in 0.01..2.0f64, grow in 1.0..3.0f64) {
        let w = negative_axis();
        prop_assume!(w.distance(&x) > 1e-6);
        let zs = PointSet { z };
        let small = g_eta_contains(&zs, w.as_ref(), eta, &x).unwrap();
        let large = g_eta_contains(&zs, w.as_ref(), eta * grow, &x).unwrap();
        if small == Verdict::In {
            prop_assert_eq!(large, Verdict::In);
        }
        if large == Verdict::Out {
            prop_assert_eq!(small, Verdict::Out);
        }
    }

    #[test]
    fn neighbourhood_of_union_is_union_of_neighbourhoods(a in planar(), b in planar(), x in planar(), eta in 0.01..2.0f64) {
        let w = negative_axis();
        prop_assume!(w.distance(&x) > 1e-6);
        let (za, zb): (OracleRef, OracleRef) = (Arc::new(PointSet { z: a }), Arc::new(PointSet { z: b }));
        let both = Union { n: 2, parts: vec![za.clone(), zb.clone()] };
        let in_union = g_eta_contains(&both, w.as_ref(), eta, &x).unwrap() == Verdict::In;
        let in_a = g_eta_contains(za.as_ref(), w.as_ref(), eta, &x).unwrap() == Verdict::In;
        let in_b = g_eta_contains(zb.as_ref(), w.as_ref(), eta, &x).unwrap() == Verdict::In;
        prop_assert_eq!(in_union, in_a || in_b);
    }

    #[test]
    fn nested_neighbourhoods_stay_inside_the_composed_scale(
        y in planar(),
        zdir in 0.0..std::f64::consts::TAU,
        zt in 0.0..1.0f64,
        dir in 0.0..std::f64::consts::TAU,
        eta in 0.05..0.5f64,
        eps in 0.05..0.5f64,
        t in 0.0..1.0f64,
    ) {
        let w = negative_axis();
        let dy = w.distance(&y);
        prop_assume!(dy > 1e-3);
        let z = vec![y[0] + zt * eta * dy * zdir.cos(), y[1] + zt * eta * dy * zdir.sin()];
        // A point x with |x - y| < ε d(x, W) lies within ε/(1-ε) d(y, W) of y.
        let r = t * eps / (1.0 + eps) * dy;
        let x = vec![y[0] + r * dir.cos(), y[1] + r * dir.sin()];
        let dx = w.distance(&x);
        prop_assume!(dist(&x, &y) < eps * dx);
        let bound = g_eta_compose_bound(eps, eta);
        prop_assert!(dist(&x, &z) < bound * dx + 1e-12);
    }

    #[test]
    fn hausdorff_triangle_inequality(a in cloud(), b in cloud(), c in cloud()) {
        let ab = hausdorff_distance(&a, &b).unwrap();
        let bc = hausdorff_distance(&b, &c).unwrap();
        let ac = hausdorff_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
    }

    #[test]
    fn finite_differences_match_polynomial_jets(coeffs in prop::collection::vec(-2.0..2.0f64, 10), x in planar()) {
        let q = Polynomial::from_graded_coeffs(2, &coeffs).unwrap();
        let jet = q.jet_at(&x, 2);
        for alpha in multi_index_enumerate(2, 2).into_iter().filter(|a| a.order() >= 1) {
            let exact = jet.derivative(&alpha).unwrap();
            let fd = fd_partial(&q, &x, &alpha, 1e-3).unwrap();
            prop_assert!((exact - fd).abs() <= 1e-4 * (1.0 + exact.abs()), "{alpha:?}: {exact} vs {fd}");
        }
    }

    #[test]
    fn lipschitz_factor_decreases(m in 0.0..100.0f64, dm in 1e-3..10.0f64) {
        let l = lip_to_l(m).unwrap();
        prop_assert!(l > 0.0 && l <= 1.0);
        prop_assert!(lip_to_l(m + dm).unwrap() < l);
    }

    #[test]
    fn plateau_is_monotone_in_unit_range(p in 1usize..5, s in -0.5..1.5f64, ds in 0.0..0.5f64) {
        let step = smoothstep_p(p);
        let (a, b) = (step.value(&[s]), step.value(&[s + ds]));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-15);
    }

    #[test]
    fn certificate_product_is_symmetric(
        f_orders in prop::collection::vec(0.0..10.0f64, 3),
        g_orders in prop::collection::vec(0.0..10.0f64, 3),
        f_sup in 0.0..5.0f64,
        g_sup in 0.0..5.0f64,
        f_k in 0i32..3,
        g_k in 0i32..3,
    ) {
        let w: OracleRef = Arc::new(PointSet { z: vec![0.0] });
        let mut fo = f_orders.clone();
        fo.insert(0, 0.0);
        let mut go = g_orders.clone();
        go.insert(0, 0.0);
        let f = RegularityCertificate::from_orders(w.clone(), f_k, fo).with_sup(f_sup);
        let g = RegularityCertificate::from_orders(w, g_k, go).with_sup(g_sup);
        let fg = f.product(&g).unwrap();
        let gf = g.product(&f).unwrap();
        prop_assert_eq!(fg.k, gf.k);
        for (a, b) in fg.orders.iter().zip(&gf.orders) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn partition_sums_to_one(x in prop::collection::vec(-1.0..1.0f64, 2)) {
        let (s, part) = half_line_partition();
        prop_assume!(s.w.distance(&x) > 1e-4);
        let values = part.values(&x);
        prop_assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn jet_closure_matches_fd_on_a_cubic() {
    let f: FieldRef = Arc::new(JetFn::new(1, |x: &[Jet]| x[0].powi(3)));
    let x = [0.7];
    let jet = f.jet_at(&x, 3);
    for alpha in multi_index_enumerate(1, 3).into_iter().filter(|a| a.order() >= 1) {
        let fd = fd_partial(f.as_ref(), &x, &alpha, 1e-3).unwrap();
        assert!((jet.derivative(&alpha).unwrap() - fd).abs() < 1e-4);
    }
}
