mod common;

use common::{game_and_point, max_gap, table_game};
use proptest::prelude::*;
use varindex_core::multilinear::conditional_weights;
use varindex_core::valuation::{
    banzhaf, kstep_variational, probabilistic_value, shapley_exact, shapley_line_integral,
    variational_index, BanzhafMode,
};
use varindex_core::{Coalition, Game, GradientMode, Init, TabulatedGame, VotingGame};

/// Average marginal contribution over all arrival orders.
fn permutation_shapley(g: &TabulatedGame) -> Vec<f64> {
    fn visit(perm: &mut [usize], k: usize, g: &TabulatedGame, acc: &mut [f64], count: &mut f64) {
        if k == perm.len() {
            let mut s = Coalition::EMPTY;
            for &p in perm.iter() {
                acc[p] += g.value(s.with(p)) - g.value(s);
                s = s.with(p);
            }
            *count += 1.0;
            return;
        }
        for j in k..perm.len() {
            perm.swap(k, j);
            visit(perm, k + 1, g, acc, count);
            perm.swap(k, j);
        }
    }
    let n = g.n();
    let mut acc = vec![0.0; n];
    let mut count = 0.0;
    visit(&mut (0..n).collect::<Vec<_>>(), 0, g, &mut acc, &mut count);
    acc.iter().map(|a| a / count).collect()
}

proptest! {
    #[test]
    fn shapley_routes_agree(g in table_game(1, 7)) {
        let exact = shapley_exact(&g).unwrap().values;
        let line = shapley_line_integral(&g, g.n().div_ceil(2)).unwrap().values;
        let perms = permutation_shapley(&g);
        prop_assert!(max_gap(&exact, &perms) <= 1e-10);
        prop_assert!(max_gap(&line, &perms) <= 1e-10);
    }

    #[test]
    fn shapley_is_efficient(g in table_game(1, 10)) {
        let total: f64 = shapley_exact(&g).unwrap().values.iter().sum();
        let want = g.value(g.players().grand()) - g.value(Coalition::EMPTY);
        prop_assert!((total - want).abs() <= 1e-10);
    }

    #[test]
    fn banzhaf_is_the_one_step_value(g in table_game(1, 10), t in prop_oneof![Just(0.1), Just(0.5), Just(1.0), Just(2.0)]) {
        let bz = banzhaf(&g, BanzhafMode::Exact).unwrap().values;
        let ks = kstep_variational(&g, t, Init::Uniform(0.5), 1, GradientMode::Exact).unwrap().values;
        prop_assert!(max_gap(&bz, &ks) <= 1e-12);
    }

    #[test]
    fn one_step_value_is_additive(f in table_game(3, 3), h in table_game(3, 3)) {
        let sum = TabulatedGame::new(3, f.table().iter().zip(h.table()).map(|(a, b)| a + b).collect()).unwrap();
        let v = |g: &TabulatedGame| kstep_variational(g, 1.0, Init::Uniform(0.5), 1, GradientMode::Exact).unwrap().values;
        let parts: Vec<f64> = v(&f).iter().zip(v(&h)).map(|(a, b)| a + b).collect();
        prop_assert!(max_gap(&v(&sum), &parts) <= 1e-10);
    }

    #[test]
    fn probabilistic_weights_form_distributions((g, x) in game_and_point(1, 8)) {
        for i in 0..g.n() {
            let w = conditional_weights(&x, i).unwrap();
            prop_assert!(w.iter().all(|(s, p)| !s.contains(i) && *p >= 0.0));
            prop_assert!((w.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let pv = probabilistic_value(&g, &x).unwrap().values;
        let direct: Vec<f64> = (0..g.n())
            .map(|i| {
                conditional_weights(&x, i)
                    .unwrap()
                    .iter()
                    .map(|(s, p)| p * (g.value(s.with(i)) - g.value(*s)))
                    .sum()
            })
            .collect();
        prop_assert!(max_gap(&pv, &direct) <= 1e-12);
    }

    #[test]
    fn values_are_temperature_equivariant_for_one_step(g in table_game(1, 8), t in 0.1f64..5.0) {
        // T·σ⁻¹(σ(∇f/T)) = ∇f for any T.
        let a = kstep_variational(&g, t, Init::Uniform(0.5), 1, GradientMode::Exact).unwrap().values;
        let b = kstep_variational(&g, 1.0, Init::Uniform(0.5), 1, GradientMode::Exact).unwrap().values;
        prop_assert!(max_gap(&a, &b) <= 1e-12);
    }
}

#[test]
fn voting_game_argmax_is_stable() {
    let g = VotingGame::new(vec![2.0, 1.0, 1.0], 3.0).unwrap();
    let argmax = |v: &[f64]| {
        (0..v.len())
            .max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a)))
            .unwrap()
    };
    assert_eq!(argmax(&shapley_exact(&g).unwrap().values), 0);
    assert_eq!(argmax(&banzhaf(&g, BanzhafMode::Exact).unwrap().values), 0);
    for k in 1..=10 {
        let v = kstep_variational(&g, 1.0, Init::Uniform(0.5), k, GradientMode::Exact).unwrap();
        assert_eq!(argmax(&v.values), 0, "K={k}");
    }
    let v = variational_index(&g, 1.0, Init::Uniform(0.5), 1e-12, 50, GradientMode::Exact).unwrap();
    assert_eq!(argmax(&v.values), 0);
}
