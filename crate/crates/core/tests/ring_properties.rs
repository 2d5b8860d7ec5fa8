use firma::ring::{
    blend, calibrated_retention, coverage_check, fib_weights, gate_and_interpolate, has_improving_move, ring_cost,
    two_opt, BlendWeights, GateConfig, MixingMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn all_rings(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for c in 1..used.len() {
            if !used[c] {
                used[c] = true;
                prefix.push(c);
                rec(prefix, used, out);
                prefix.pop();
                used[c] = false;
            }
        }
    }
    let mut used = vec![false; n];
    used[0] = true;
    let mut out = Vec::new();
    rec(&mut vec![0], &mut used, &mut out);
    out
}

fn histograms(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3..=max_n, 2usize..6).prop_flat_map(|(n, c)| prop::collection::vec(prop::collection::vec(0.0f64..1.0, c), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn gated_weights_are_normalized_and_bounded(a_l in 0.0f64..=1.0, a_r in 0.0f64..=1.0, tau in 0.0f64..=1.0) {
        let cfg = GateConfig { tau, ..GateConfig::default() };
        let g = gate_and_interpolate(a_l, a_r, cfg);
        if !g.self_retention_used {
            let w = fib_weights();
            prop_assert!((g.a_left + g.a_right - 1.0).abs() <= 1e-12);
            prop_assert!(g.a_left >= w.alpha / 2.0 - 1e-15 && g.a_left <= (w.alpha + 1.0) / 2.0 + 1e-15);
            prop_assert!(g.a_right >= w.beta / 2.0 - 1e-15 && g.a_right <= (w.beta + 1.0) / 2.0 + 1e-15);
            if g.w_left >= g.w_right {
                prop_assert!(g.a_left > g.a_right);
            }
        } else {
            prop_assert!(g.g_left + g.g_right < cfg.epsilon);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn two_opt_is_monotone_and_locally_optimal(h in histograms(12)) {
        let o = two_opt(&h);
        let mut sorted = o.sigma.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..h.len()).collect::<Vec<_>>());
        for w in o.trace.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        prop_assert!((o.cost - ring_cost(&o.sigma, &h)).abs() < 1e-9);
        prop_assert!(!has_improving_move(&o.sigma, &h));
        prop_assert!(o.cost >= 0.0 && o.cost <= h.len() as f64 + 1e-9);
    }

    #[test]
    fn two_opt_never_beats_the_exhaustive_optimum(h in histograms(8)) {
        let best = all_rings(h.len())
            .iter()
            .map(|s| ring_cost(s, &h))
            .fold(f64::INFINITY, f64::min);
        let o = two_opt(&h);
        let gap = o.cost - best;
        prop_assert!(gap >= -1e-12, "gap {}", gap);
    }

    #[test]
    fn closed_form_spectrum_matches_dense_eigensolver(n in 2usize..20, gamma in 0.05f64..0.95, a in 0.05f64..0.95) {
        let mix = MixingMatrix::new(n, gamma, a, 1.0 - a).unwrap();
        let dense = mix.dense();
        let m = DMatrix::from_row_iterator(n, n, dense.iter().copied());
        let mut oracle: Vec<_> = m.complex_eigenvalues().iter().copied().collect();
        for l in mix.eigenvalues() {
            let (idx, dist) = oracle
                .iter()
                .enumerate()
                .map(|(i, o)| (i, (o - l).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            prop_assert!(dist < 1e-10, "eigenvalue {} unmatched (dist {})", l, dist);
            oracle.swap_remove(idx);
        }
    }

    #[test]
    fn compounded_retention_equals_round_retention(gamma_r in 0.001f64..=1.0, k in 1usize..12, l in -5.0f64..5.0, r in -5.0f64..5.0) {
        let g_in = calibrated_retention(gamma_r, k).unwrap();
        prop_assert!((g_in.powi(k as i32) - gamma_r).abs() <= 1e-12);
        let mut own = vec![1.0];
        let mut ext = vec![0.0];
        for _ in 0..k {
            own = blend(&own, &[0.0], &[0.0], BlendWeights::Fibonacci, g_in).unwrap();
            ext = blend(&ext, &[l], &[r], BlendWeights::Fibonacci, g_in).unwrap();
        }
        prop_assert!((own[0] - gamma_r).abs() <= 1e-12);
        let w = fib_weights();
        let expected = (1.0 - gamma_r) * (w.alpha * l + w.beta * r);
        prop_assert!((ext[0] - expected).abs() <= 1e-12 * (1.0 + l.abs() + r.abs()));
    }
}

#[test]
fn spectral_radius_below_one_on_grid() {
    for n in 3..=32 {
        for g in 1..=19 {
            let gamma = g as f64 * 0.05;
            let mix = MixingMatrix::fibonacci(n, gamma).unwrap();
            let lambda = mix.eigenvalues();
            assert_eq!(lambda[0].re, 1.0);
            assert_eq!(lambda[0].im, 0.0);
            let rho = mix.spectral_radius_excluding_one();
            assert!(rho < 1.0, "N={n} gamma={gamma} rho={rho}");
        }
    }
}

#[test]
fn half_ring_passes_cover_every_client() {
    for n in 2..=32 {
        for g in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let mix = MixingMatrix::fibonacci(n, g).unwrap();
            assert!(coverage_check(&mix, n.div_ceil(2)), "N={n} gamma={g}");
        }
    }
}

#[test]
fn coverage_at_four_passes_for_ten_clients() {
    // Four passes reach at most four hops each way, which covers 9 = N-1 others.
    let mix = MixingMatrix::fibonacci(10, 0.5).unwrap();
    let m = DMatrix::from_row_iterator(10, 10, mix.dense().iter().copied());
    let p = m.pow(4);
    assert_eq!(coverage_check(&mix, 4), p.iter().all(|&x| x > 0.0));
}

#[test]
fn strong_skew_fixture_saves_most_of_the_cost() {
    // Ten near-one-hot clients in five pairs sharing a dominant class, listed
    // so that the identity ring places each pair side by side.
    let h: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            let mut v = vec![0.003; 10];
            v[i / 2] = 0.97;
            v
        })
        .collect();
    let o = two_opt(&h);
    let savings = o.savings_fraction().unwrap();
    assert!(savings > 0.9, "savings {savings}");
}
