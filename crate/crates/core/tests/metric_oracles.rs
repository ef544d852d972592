//! Literal, slow transcriptions of each measure checked against the library
//! on every 3×3 binary ground truth and a suite of soft predictions.

mod oracles;

use basnet::metrics::{
    e_measure_curve, e_measure_max, e_measure_mean, mae, relaxed_boundary_fbeta, s_measure,
    weighted_fbeta, BoundaryParams, StructureParams,
};
use basnet::types::{BinaryMask, Mask};
use oracles::*;
use proptest::prelude::*;

// ---- exhaustive checks ----------------------------------------------------

#[test]
fn weighted_fbeta_matches_oracle_on_every_3x3_ground_truth() {
    let suite = soft_suite(3, 3, 20, 11);
    for g in all_grids() {
        for s in &suite {
            let got = weighted_fbeta(s, &g).unwrap().unwrap();
            let want = oracle_weighted_fbeta(s, &g).unwrap();
            assert!((got - want).abs() < 1e-9, "{got} vs {want} for {g:?}");
        }
    }
}

#[test]
fn relaxed_boundary_matches_oracle_on_every_3x3_ground_truth() {
    let suite = soft_suite(3, 3, 20, 12);
    for g in all_grids() {
        for s in &suite {
            for rho in [0, 1, 3] {
                let p = BoundaryParams {
                    rho,
                    threshold: 0.5,
                };
                let got = relaxed_boundary_fbeta(s, &g, &p).unwrap();
                let want = oracle_relaxed(s, &g, rho as f64, 0.5);
                assert!((got - want).abs() < 1e-9, "rho {rho}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn s_measure_matches_oracle_on_every_3x3_ground_truth() {
    let suite = soft_suite(3, 3, 20, 13);
    for lambda in [0.5, 1.0] {
        let params = StructureParams { alpha: 0.5, lambda };
        for g in all_grids() {
            for s in &suite {
                let got = s_measure(s, &g, &params).unwrap();
                let want = oracle_s_measure(s, &g, lambda);
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
        }
    }
}

#[test]
fn e_measure_matches_oracle_on_every_3x3_ground_truth() {
    let suite = soft_suite(3, 3, 20, 14);
    for g in all_grids() {
        for s in &suite {
            let got = e_measure_mean(s, &g).unwrap();
            let want = oracle_e_measure(s, &g);
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn degenerate_ground_truths_follow_conventions() {
    let zeros = grid(3, 3, 0);
    let ones = grid(3, 3, 0x1ff);
    let s = soft_suite(3, 3, 5, 15).pop().unwrap();
    let sp = StructureParams::default();
    assert_eq!(weighted_fbeta(&s, &zeros).unwrap(), None);
    assert!(
        (s_measure(&s, &zeros, &sp).unwrap() - oracle_s_measure(&s, &zeros, sp.lambda)).abs()
            < 1e-12
    );
    assert!((s_measure(&s, &ones, &sp).unwrap() - s.mean()).abs() < 1e-12);
    assert!((e_measure_mean(&s, &zeros).unwrap() - oracle_e_measure(&s, &zeros)).abs() < 1e-12);
    assert!((e_measure_mean(&s, &ones).unwrap() - oracle_e_measure(&s, &ones)).abs() < 1e-12);
    let empty = Mask::filled(3, 3, 0.0);
    assert_eq!(s_measure(&empty, &zeros, &sp).unwrap(), 1.0);
    assert_eq!(
        relaxed_boundary_fbeta(&empty, &zeros, &BoundaryParams::default()).unwrap(),
        1.0
    );
    assert_eq!(
        relaxed_boundary_fbeta(&empty, &ones, &BoundaryParams::default()).unwrap(),
        0.0
    );
}

#[test]
fn ideal_prediction_scores_ideal_values() {
    for g in all_grids() {
        let s = g.to_mask();
        assert_eq!(mae(&s, &s).unwrap(), 0.0);
        assert!((weighted_fbeta(&s, &g).unwrap().unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(
            relaxed_boundary_fbeta(&s, &g, &BoundaryParams::default()).unwrap(),
            1.0
        );
        assert!((s_measure(&s, &g, &StructureParams::default()).unwrap() - 1.0).abs() < 1e-9);
        let curve = e_measure_curve(&s, &g).unwrap();
        assert!(
            curve[1..].iter().all(|e| (e - 1.0).abs() < 1e-12),
            "E(t) = 1 wherever S ≥ t reproduces G"
        );
        let e = e_measure_mean(&s, &g).unwrap();
        assert!((e - e_measure_max(&g)).abs() < 1e-12);
        assert!((e - oracle_e_measure(&s, &g)).abs() < 1e-12);
    }
}

#[test]
fn no_prediction_beats_the_ground_truth_on_e_measure() {
    let suite = soft_suite(3, 3, 20, 99);
    for g in all_grids() {
        let best = e_measure_max(&g);
        for s in &suite {
            assert!(e_measure_mean(s, &g).unwrap() <= best + 1e-12);
        }
    }
}

#[test]
fn inverted_prediction_has_zero_weighted_f_and_unit_mae() {
    for g in all_grids() {
        let s = g.to_mask().complement();
        assert!(weighted_fbeta(&s, &g).unwrap().unwrap().abs() < 1e-9);
        assert_eq!(mae(&s, &g.to_mask()).unwrap(), 1.0);
    }
}

#[test]
fn shifted_square_is_within_tolerance() {
    let g = BinaryMask::new(
        16,
        16,
        (0..256)
            .map(|i| (4..10).contains(&(i / 16)) && (4..10).contains(&(i % 16)))
            .collect(),
    )
    .unwrap();
    let s = Mask::from_fn(16, 16, |r, c| {
        if (5..11).contains(&r) && (4..10).contains(&c) {
            1.0
        } else {
            0.0
        }
    });
    assert_eq!(
        relaxed_boundary_fbeta(&s, &g, &BoundaryParams::default()).unwrap(),
        1.0
    );
}

fn larger_case() -> impl Strategy<Value = (BinaryMask, Mask)> {
    (3usize..12, 3usize..12).prop_flat_map(|(h, w)| {
        (
            proptest::collection::vec(any::<bool>(), h * w),
            proptest::collection::vec(0.0f64..=1.0, h * w),
        )
            .prop_map(move |(g, s)| {
                (
                    BinaryMask::new(h, w, g).unwrap(),
                    Mask::new(h, w, s).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn all_measures_match_oracles_on_random_rectangles((g, s) in larger_case()) {
        let got = weighted_fbeta(&s, &g).unwrap();
        let want = oracle_weighted_fbeta(&s, &g);
        match (got, want) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
            (a, b) => prop_assert_eq!(a, b),
        }
        let p = BoundaryParams::default();
        prop_assert!((relaxed_boundary_fbeta(&s, &g, &p).unwrap() - oracle_relaxed(&s, &g, 3.0, 0.5)).abs() < 1e-9);
        let sp = StructureParams::default();
        prop_assert!((s_measure(&s, &g, &sp).unwrap() - oracle_s_measure(&s, &g, sp.lambda)).abs() < 1e-9);
        prop_assert!((e_measure_mean(&s, &g).unwrap() - oracle_e_measure(&s, &g)).abs() < 1e-9);
    }

    #[test]
    fn mae_is_complement_symmetric((g, s) in larger_case()) {
        let gm = g.to_mask();
        prop_assert!((mae(&s, &gm).unwrap() - mae(&s.complement(), &gm.complement()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn boundary_f_is_monotone_in_radius((g, s) in larger_case()) {
        let mut last = 0.0;
        for rho in 0..6 {
            let f = relaxed_boundary_fbeta(&s, &g, &BoundaryParams { rho, threshold: 0.5 }).unwrap();
            prop_assert!(f + 1e-12 >= last);
            last = f;
        }
    }
}
