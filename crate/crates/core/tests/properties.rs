//! Randomized invariants of the assembled quadratic forms: the energy is a
//! translation-invariant quadratic functional, and scaling the coefficient
//! field scales minima by the square.

use convhom::cell::cell_minimum;
use convhom::env::{sample_environment, EnvKind, EnvironmentSpec};
use convhom::kernel::{Kernel, KernelFamily};
use convhom::lattice::{build_problem, energy, KernelQuadrature, Pair, QuadraticForm, Variant};
use convhom::solver::SolveOptions;
use proptest::prelude::*;

fn arb_form_and_field() -> impl Strategy<Value = (QuadraticForm, Vec<f64>)> {
    (2usize..24).prop_flat_map(|n| {
        let pairs = proptest::collection::vec((0..n as u32, 0..n as u32, 0.0f64..4.0), 1..50)
            .prop_map(move |raw| {
                let mut pairs: Vec<Pair> = raw
                    .into_iter()
                    .filter(|(i, j, _)| i != j)
                    .map(|(i, j, w)| Pair {
                        i: i.min(j),
                        j: i.max(j),
                        w,
                    })
                    .collect();
                pairs.sort_by_key(|p| (p.i, p.j));
                QuadraticForm {
                    n_sites: n,
                    variant: Variant::RestrictedFull,
                    pairs,
                }
            });
        let field = proptest::collection::vec(-3.0f64..3.0, n);
        (pairs, field)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn energy_shift_invariant_and_two_homogeneous(
        (form, u) in arb_form_and_field(),
        shift in -5.0f64..5.0,
        scale in 0.0f64..3.0,
    ) {
        let base = energy(&form, &u).unwrap();
        let shifted: Vec<f64> = u.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = u.iter().map(|v| v * scale).collect();
        let e_shift = energy(&form, &shifted).unwrap();
        let e_scale = energy(&form, &scaled).unwrap();
        prop_assert!((e_shift - base).abs() <= 1e-9 * (1.0 + base.abs()));
        prop_assert!(
            (e_scale - scale * scale * base).abs() <= 1e-9 * (1.0 + base.abs())
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn cell_minimum_scales_quadratically_in_the_levels(
        seed in 0u64..1_000,
        t in 0.2f64..3.0,
    ) {
        let kernel =
            Kernel::new(KernelFamily::Ball, 1, 1.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        let problem = build_problem(1, 8.0, 0.5, 2.0).unwrap();
        let board = |lam: f64| EnvironmentSpec {
            d: 1,
            kind: EnvKind::Checkerboard {
                lambda1: lam,
                lambda2: 2.0 * lam,
                p: 0.5,
                cell_size: 1.0,
            },
        };
        let opts = SolveOptions::default();
        let value_at = |lam: f64| {
            let real = sample_environment(&board(lam), seed, &[-12.0], &[12.0]).unwrap();
            cell_minimum(
                &problem,
                &real,
                &kernel,
                &[1.0],
                Variant::RestrictedTruncated,
                KernelQuadrature::CellMoment,
                &opts,
            )
            .unwrap()
            .value
        };
        let base = value_at(1.0);
        let scaled = value_at(t);
        prop_assert!(
            (scaled - t * t * base).abs() <= 1e-9 * (1.0 + base.abs()),
            "base {base}, scaled {scaled}, t {t}"
        );
    }
}
