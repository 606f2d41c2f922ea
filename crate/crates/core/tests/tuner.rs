mod common;

use common::{rng, Mvn};
use dimv::missing::mcar_mask;
use dimv::tuner::{tune_alpha, AlphaGrid};
use dimv::{ImputationConfig, MaskedMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grid(c: &[f64]) -> AlphaGrid {
    AlphaGrid::new(c.to_vec(), None, 0).unwrap()
}

fn mvn_train(seed: u64) -> MaskedMatrix {
    mcar_mask(400, 5, 0.2, seed)
        .unwrap()
        .apply(&Mvn::five().sample(400, &mut rng(seed)))
        .unwrap()
}

#[test]
fn duplicated_column_selects_ridge() {
    let base = Mvn::five().sample(200, &mut rng(1));
    let data = DMatrix::from_fn(200, 4, |i, j| if j == 3 { base[(i, 0)] } else { base[(i, j)] });
    let x = mcar_mask(200, 4, 0.1, 1).unwrap().apply(&data).unwrap();
    let out = tune_alpha(&x, &ImputationConfig::default(), &grid(&[0.0, 1.0])).unwrap();
    assert_eq!(out.alpha, 1.0);
    let (s0, s1) = (out.scores[0].1, out.scores[1].1);
    assert!(s0.is_infinite() || s0 > s1, "{s0} vs {s1}");
}

#[test]
fn heavy_shrinkage_loses_on_well_conditioned_data() {
    let out = tune_alpha(&mvn_train(2), &ImputationConfig::default(), &grid(&[0.0, 100.0])).unwrap();
    assert_eq!(out.alpha, 0.0);
    assert!(out.scores[0].1 < out.scores[1].1);
}

#[test]
fn chosen_alpha_attains_the_minimum() {
    let out = tune_alpha(&mvn_train(3), &ImputationConfig::default(), &AlphaGrid::default()).unwrap();
    let best = out.scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let chosen = out.scores.iter().find(|s| s.0 == out.alpha).unwrap().1;
    assert_eq!(chosen, best);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scores_do_not_depend_on_grid_order(seed in 0u64..1000, rot in 0usize..6) {
        let x = mvn_train(seed);
        let mut c = vec![0.0, 0.01, 0.1, 1.0, 10.0, 100.0];
        let a = tune_alpha(&x, &ImputationConfig::default(), &grid(&c)).unwrap();
        c.rotate_left(rot);
        let b = tune_alpha(&x, &ImputationConfig::default(), &grid(&c)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn subsampled_tuning_is_deterministic(seed in 0u64..1000, rows in 10usize..300) {
        let x = mvn_train(seed);
        let g = AlphaGrid::new(vec![0.0, 1.0, 10.0], Some(rows), seed).unwrap();
        let a = tune_alpha(&x, &ImputationConfig::default(), &g).unwrap();
        let b = tune_alpha(&x, &ImputationConfig::default(), &g).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(g.candidates().contains(&a.alpha));
    }
}
