use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lagom::czd::decompose;
use lagom::geometry::{enclosing_cube, rdist_bounds, Cube, DyadicCube};
use lagom::grid::{GridFunction, GridSpec};
use lagom::kernel::{compact_1d, discretize, DiagonalPolicy};
use lagom::operator::GridOperator;
use lagom::paraproduct::{Paraproduct, ParaproductSymbol};
use lagom::wavelet::{analyze, synthesize, HaarCoefficients, LagomProjector};
use lagom::{Dyadic, Rational};

fn random_fn(spec: GridSpec, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..spec.cell_count())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    GridFunction::from_values(spec, v).unwrap()
}

fn cube_strategy(d: usize) -> impl Strategy<Value = Cube> {
    (prop::collection::vec(-200i128..200, d), 1i128..16, -4i32..4).prop_map(|(c, m, e)| {
        Cube::new(c.into_iter().map(|k| Dyadic::new(k, -3)).collect(), Dyadic::new(m, e)).unwrap()
    })
}

fn grid() -> impl Strategy<Value = GridSpec> {
    prop_oneof![Just(GridSpec::new(1, 3, 3).unwrap()), Just(GridSpec::new(2, 3, 1).unwrap())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_geometry_ranges((i, j) in (1usize..4).prop_flat_map(|d| (cube_strategy(d), cube_strategy(d)))) {
        let g = enclosing_cube(&i, &j).unwrap();
        let h = enclosing_cube(&j, &i).unwrap();
        let one = Rational::from_integer(1);
        prop_assert!(g.rdist >= one);
        prop_assert!(g.ecc <= one && g.ecc > Rational::from_integer(0));
        prop_assert_eq!(g.rdist, h.rdist);
        prop_assert_eq!(g.ecc, h.ecc);
        prop_assert!(g.enclosing.contains_cube(&i) && g.enclosing.contains_cube(&j));
        let (lo, hi) = rdist_bounds(&i, &j).unwrap();
        prop_assert!(lo <= g.rdist && g.rdist <= hi);
    }

    #[test]
    fn lagom_families_are_nested(j in -6i32..6, k in -40i64..40, m in 1u32..6) {
        let c = DyadicCube::new(j, vec![k]);
        if c.is_lagom(m) {
            prop_assert!(c.is_lagom(m + 1));
        }
    }

    #[test]
    fn haar_round_trip_and_parseval(spec in grid(), seed in 0u64..10_000) {
        let f = random_fn(spec, seed);
        let c = analyze(&f);
        prop_assert!((c.energy() - f.l2().powi(2)).abs() <= 1e-10 * f.l2().powi(2));
        prop_assert!(synthesize(&c).sub(&f).unwrap().l2() <= 1e-12 * f.l2());
    }

    #[test]
    fn lagom_projection_splits_energy(spec in grid(), seed in 0u64..10_000, m in 1u32..3) {
        let f = random_fn(spec, seed);
        let p = LagomProjector::new(spec, m).unwrap();
        let (a, b) = (p.project(&f).unwrap(), p.complement(&f).unwrap());
        let total = f.l2().powi(2);
        prop_assert!((a.l2().powi(2) + b.l2().powi(2) - total).abs() <= 1e-10 * total);
        prop_assert!(p.complement(&a).unwrap().l2() <= 1e-12 * f.l2());
        // D_M grows with M, so P_M f can only gain energy
        let next = LagomProjector::new(spec, m + 1).unwrap().project(&f).unwrap();
        prop_assert!(next.l2() >= a.l2() * (1.0 - 1e-12));
    }

    #[test]
    fn czd_invariants(seed in 0u64..10_000, d in 1usize..3, t in 1.0f64..8.0) {
        let spec = GridSpec::new(d, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..spec.cell_count())
            .map(|_| if rng.gen_bool(0.25) { rng.gen_range(0..128) as f64 / 8.0 } else { 0.0 })
            .collect();
        let f = GridFunction::from_real(spec, vals).unwrap();
        let t = t.max(1.01 * f.l1() / 4f64.powi(d as i32));
        let dec = decompose(&f, t).unwrap();
        prop_assert_eq!(&dec.good().add(dec.bad()).unwrap(), &f);
        prop_assert!(dec.good().linf() <= 2f64.powi(d as i32) * t);
        prop_assert!(dec.measure_e() <= f.l1() / t);
        prop_assert!(dec.measure_e_tilde() <= 10f64.powi(d as i32) * dec.measure_e());
        let cubes = dec.cubes();
        for (a, p) in cubes.iter().enumerate() {
            for q in &cubes[a + 1..] {
                prop_assert!(!p.contains(q) && !q.contains(p));
            }
        }
    }

    #[test]
    fn discretized_adjoint(seed in 0u64..10_000) {
        let spec = GridSpec::new(1, 3, 3).unwrap();
        let t = discretize(&compact_1d(), spec, DiagonalPolicy::Zero).unwrap();
        let (f, g) = (random_fn(spec, seed), random_fn(spec, seed + 1));
        let lhs = t.apply(&f).unwrap().inner_product(&g).unwrap();
        let rhs = f.inner_product(&t.apply_adjoint(&g).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn paraproduct_is_linear_in_symbol(seed in 0u64..10_000, s in -2.0f64..2.0) {
        let spec = GridSpec::new(1, 2, 2).unwrap();
        let f = random_fn(spec, seed);
        let b = analyze(&random_fn(spec, seed + 7));
        let mut scaled = HaarCoefficients::zeros(spec);
        for (c, i, v) in b.entries() {
            scaled.set(&c, i, v * s).unwrap();
        }
        let t1 = Paraproduct::new(ParaproductSymbol::indicator(b)).unwrap();
        let t2 = Paraproduct::new(ParaproductSymbol::indicator(scaled)).unwrap();
        let diff = t1.apply(&f).unwrap().scale(Complex64::new(s, 0.0)).sub(&t2.apply(&f).unwrap()).unwrap();
        prop_assert!(diff.l2() <= 1e-12 * (1.0 + t1.apply(&f).unwrap().l2()));
    }
}
