use hetero_core::extremes::{block_indicators_ball, block_indicators_phi};
use hetero_core::micro::{aggregated_variance, MicroState};
use hetero_core::multifractal::dq_reference;
use hetero_core::noise::{self, KernelValue, NoiseLaw};
use hetero_core::orbit::stream_rng;
use hetero_core::quad::integrate_adaptive;
use hetero_core::{BumpKind, Chain, Histogram, LeverageMap, MapParams, NoiseSpec, SigmaMode, UlamOperator};
use proptest::prelude::*;

fn map_with(c: f64) -> Option<LeverageMap> {
    LeverageMap::new(MapParams::reference().with_c(c)).ok()
}

fn mode() -> impl Strategy<Value = SigmaMode> {
    prop_oneof![Just(SigmaMode::Paper), Just(SigmaMode::FirstOrder)]
}

fn bump() -> impl Strategy<Value = BumpKind> {
    prop_oneof![Just(BumpKind::Mollifier), Just(BumpKind::Plateau)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn a_is_v_at_zero_noise(c in -0.3f64..1.0, u in 0.0f64..0.95) {
        let p = MapParams::reference().with_c(c);
        let (a, v) = (p.eval_a(u).unwrap(), p.eval_v(u, 0.0).unwrap());
        prop_assert!((a - v).abs() <= 1e-12 * v.max(1.0));
    }

    #[test]
    fn map_stays_below_its_maximum(c in -0.3f64..1.0, s in 0.0f64..=1.0) {
        let Some(m) = map_with(c) else { return Ok(()) };
        let g = m.geometry;
        let y = m.t(s * g.b).unwrap();
        prop_assert!(y <= g.delta + 1e-12);
    }

    #[test]
    fn upper_tail_is_trapped(c in -0.3f64..1.0, s in 0.0f64..=1.0) {
        let Some(m) = map_with(c) else { return Ok(()) };
        let g = m.geometry;
        let y = m.t(g.delta + s * (g.b - g.delta)).unwrap();
        prop_assert!(y >= -1e-12 && y <= g.delta);
    }

    #[test]
    fn derivative_agrees_with_central_differences(c in -0.3f64..1.0, x in 0.01f64..0.9) {
        let p = MapParams::reference().with_c(c);
        let h = 1e-6;
        let fd = (p.raw_t(x + h) - p.raw_t(x - h)) / (2.0 * h);
        prop_assert!((p.raw_t_prime(x) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn bump_density_integrates_to_one(a in 0.05f64..3.0, kind in bump()) {
        let law = NoiseLaw::new(a, kind).unwrap();
        let mass = integrate_adaptive(|y| law.density(y), -a, a, 1e-12).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-8);
        prop_assert!((law.cdf(a) - 1.0).abs() < 1e-8 && law.cdf(-a).abs() < 1e-12);
    }

    #[test]
    fn kernel_integrates_to_one(
        log_n in 1.0f64..4.0,
        frac in 0.1f64..=1.0,
        s in 0.0f64..=1.0,
        mode in mode(),
        kind in bump(),
    ) {
        let map = map_with(0.0).unwrap();
        let n = 10f64.powf(log_n);
        let a = frac * noise::admissible_a(&map, n, mode).unwrap();
        let law = NoiseLaw::new(a, kind).unwrap();
        let (lo, hi) = map.geometry.support_interval(&map.params);
        let x = lo + s * (hi - lo);
        let t = map.t(x).unwrap();
        let half = a * map.params.sigma_n(x, n, mode).unwrap();
        let p = |z: f64| match noise::kernel_density(&map, &law, n, mode, x, z) {
            Ok(KernelValue::Density(d)) => d,
            _ => f64::NAN,
        };
        let mass = integrate_adaptive(p, t - half, t + half, 1e-12).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn one_step_stays_in_the_support_interval(
        log_n in 1.0f64..4.0,
        s in 0.0f64..=1.0,
        seed in any::<u64>(),
        mode in mode(),
    ) {
        let map = map_with(0.0).unwrap();
        let spec = NoiseSpec::at_bound(&map, 10f64.powf(log_n), BumpKind::Mollifier, mode).unwrap();
        let chain = Chain::random(map, spec, mode).unwrap();
        let (lo, hi) = map.geometry.support_interval(&map.params);
        let x = lo + s * (hi - lo);
        let mut rng = stream_rng(seed, 0);
        let end = chain.walk(x, 20, &mut rng, |_, y| assert!(y >= lo && y <= hi, "{y} left [{lo}, {hi}]")).unwrap();
        prop_assert!(end >= lo && end <= hi);
    }

    #[test]
    fn orbits_are_pure_functions_of_the_seed(seed in any::<u64>(), x0 in 0.1f64..0.7) {
        let map = map_with(0.0).unwrap();
        let spec = NoiseSpec::at_bound(&map, 1000.0, BumpKind::Mollifier, SigmaMode::Paper).unwrap();
        let chain = Chain::random(map, spec, SigmaMode::Paper).unwrap();
        let a = chain.orbit(x0, 500, seed).unwrap();
        let b = chain.orbit(x0, 500, seed).unwrap();
        prop_assert!(a.states.iter().zip(&b.states).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn histogram_merge_is_associative(xs in prop::collection::vec(-0.5f64..1.5, 0..300), cut in 0usize..300) {
        let cut = cut.min(xs.len());
        let fill = |v: &[f64]| {
            let mut h = Histogram::new(0.0, 1.0, 17).unwrap();
            v.iter().for_each(|&x| h.add(x));
            h
        };
        let whole = fill(&xs);
        let mut parts = fill(&xs[cut..]);
        parts.merge(&fill(&xs[..cut])).unwrap();
        prop_assert_eq!(&whole, &parts);
        prop_assert_eq!(whole.total(), xs.len() as u64);
    }

    #[test]
    fn aggregated_variance_matches_the_double_sum(phi in -0.95f64..0.95, s2 in 1e-8f64..1e-2, n in 1usize..200) {
        let formula = aggregated_variance(phi, s2, n).unwrap();
        let gamma = |k: usize| s2 / (1.0 - phi * phi) * phi.powi(k as i32);
        let direct: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| gamma(i.abs_diff(j))).sum();
        prop_assert!((formula - direct).abs() <= 1e-9 * direct.abs());
        prop_assert!(formula > 0.0);
        prop_assert_eq!(aggregated_variance(0.0, s2, n).unwrap(), n as f64 * s2);
    }

    #[test]
    fn micro_state_round_trips(phi in 0.0f64..0.95, c in -0.3f64..1.0) {
        let p = MapParams::reference().with_c(c);
        let st = MicroState::from_phi(&p, phi).unwrap();
        prop_assert!((st.phi - phi).abs() < 1e-12);
        prop_assert!(st.gamma > 0.0 && st.sigma2_e > 0.0);
        let back = MicroState::from_lambda(&p, st.lambda).unwrap();
        prop_assert_eq!(back, st);
    }

    #[test]
    fn reference_dimensions_are_monotone_and_bounded(q in -5.0f64..5.0, dq in 0.01f64..1.0) {
        let (a, b) = (dq_reference(q), dq_reference(q + dq));
        prop_assert!(b <= a + 1e-15);
        prop_assert!(a <= 1.0);
    }

    #[test]
    fn maxima_and_ball_events_coincide(dist in prop::collection::vec(1e-6f64..1.0, 1..400), u in 0.0f64..12.0, t in 1usize..40) {
        prop_assert_eq!(block_indicators_phi(&dist, t, u), block_indicators_ball(&dist, t, u));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ulam_matrix_is_stochastic(log_n in 1.0f64..4.0, m in 32usize..128, mode in mode()) {
        let map = map_with(0.0).unwrap();
        let spec = NoiseSpec::at_bound(&map, 10f64.powf(log_n), BumpKind::Mollifier, mode).unwrap();
        let op = UlamOperator::build(&Chain::random(map, spec, mode).unwrap(), m).unwrap();
        prop_assert_eq!(op.size(), m);
        for i in 0..m {
            let row: Vec<f64> = (0..m).map(|j| op.get(i, j)).collect();
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let st = op.stationary(1).unwrap();
        prop_assert!((st.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut next = vec![0.0; m];
        op.apply_left(&st.masses, &mut next);
        prop_assert!(next.iter().zip(&st.masses).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
