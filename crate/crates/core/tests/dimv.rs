mod common;

use common::{cov, random_spd, rng, Mvn};
use dimv::dimv::{coefficients, conditional_ridge_mean, select_features, DimvModel, ImputationConfig};
use dimv::evaluation::{mean_impute, rmse_masked};
use dimv::missing::{mcar_mask, MissingMask};
use dimv::{impute, Error, MaskedMatrix, Standardizer};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn cfg(alpha: f64) -> ImputationConfig {
    ImputationConfig {
        alpha,
        ..ImputationConfig::default()
    }
}

#[test]
fn ridge_coefficients_shrink_with_alpha() {
    let mut r = rng(7);
    for _ in 0..100 {
        let p = r.random_range(2..8);
        let sigma = cov(random_spd(p, &mut r));
        let preds: Vec<usize> = (1..p).collect();
        let mut last = f64::INFINITY;
        for alpha in [0.0, 0.1, 1.0, 10.0] {
            let b = coefficients(&sigma, 0, &preds, alpha).unwrap().beta;
            let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= last * (1.0 + 1e-12), "{norm} > {last}");
            last = norm;
        }
    }
}

#[test]
fn coefficients_agree_with_block_mean() {
    let mut r = rng(8);
    for _ in 0..50 {
        let p = r.random_range(2..7);
        let sigma = cov(random_spd(p, &mut r));
        let preds: Vec<usize> = (1..p).collect();
        let z = DMatrix::from_fn(4, p - 1, |_, _| r.random_range(-2.0..2.0));
        let alpha = r.random_range(0.0..1.0);
        let beta = coefficients(&sigma, 0, &preds, alpha).unwrap().beta;
        let mean = conditional_ridge_mean(&sigma, &preds, 0, &z, alpha).unwrap();
        for i in 0..4 {
            let direct: f64 = (0..p - 1).map(|j| beta[j] * z[(i, j)]).sum();
            assert!((direct - mean[i]).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }
}

#[test]
fn conditional_mean_is_linear() {
    let mut r = rng(9);
    let sigma = cov(random_spd(5, &mut r));
    let z = DMatrix::from_fn(3, 3, |_, _| r.random_range(-2.0..2.0));
    let once = conditional_ridge_mean(&sigma, &[1, 2, 4], 0, &z, 0.3).unwrap();
    let twice = conditional_ridge_mean(&sigma, &[1, 2, 4], 0, &(&z * 2.0), 0.3).unwrap();
    for i in 0..3 {
        assert!((twice[i] - 2.0 * once[i]).abs() < 1e-12 * once[i].abs().max(1.0));
    }
}

#[test]
fn identical_rows_impute_like_single_rows() {
    let data = Mvn::five().sample(200, &mut rng(10));
    let train = MaskedMatrix::complete(data.clone()).unwrap();
    let model = DimvModel::fit(&train, &cfg(0.0)).unwrap();
    let row = vec![Some(0.3), None, Some(-2.5), None, Some(1.2)];
    let single = model.impute(&MaskedMatrix::from_rows(&[row.clone()], 5).unwrap()).unwrap();
    let stacked = model
        .impute(&MaskedMatrix::from_rows(&vec![row; 6], 5).unwrap())
        .unwrap();
    assert!(stacked.blocks.iter().all(|b| b.rows.len() == 6));
    for i in 0..6 {
        for j in 0..5 {
            assert_eq!(stacked.imputed[(i, j)].to_bits(), single.imputed[(0, j)].to_bits());
        }
    }
}

#[test]
fn zero_init_agrees_when_one_feature_is_missing() {
    let data = Mvn::five().sample(300, &mut rng(11));
    let train = mcar_mask(300, 5, 0.2, 11).unwrap().apply(&data).unwrap();
    let mut bits = DMatrix::from_element(40, 5, false);
    for i in (0..40).step_by(3) {
        bits[(i, 2)] = true;
    }
    let test = MissingMask::new(bits).apply(&Mvn::five().sample(40, &mut rng(12))).unwrap();
    let a = impute(&train, &test, &cfg(0.0)).unwrap();
    let zero = ImputationConfig {
        init_with_zero: true,
        ..cfg(0.0)
    };
    let b = impute(&train, &test, &zero).unwrap();
    assert_eq!(a.imputed, b.imputed);
}

#[test]
fn dimv_beats_mean_imputation_on_correlated_data() {
    let mvn = Mvn::five();
    let train = mcar_mask(1000, 5, 0.2, 1).unwrap().apply(&mvn.sample(1000, &mut rng(20))).unwrap();
    let truth = mvn.sample(300, &mut rng(21));
    let mask = mcar_mask(300, 5, 0.2, 2).unwrap();
    let test = mask.apply(&truth).unwrap();
    let dimv = rmse_masked(&truth, &impute(&train, &test, &cfg(0.0)).unwrap().imputed, &mask).unwrap();
    let mean = rmse_masked(&truth, &mean_impute(&train, &test).unwrap(), &mask).unwrap();
    assert!(dimv <= mean, "dimv {dimv} vs mean {mean}");
}

#[test]
fn duplicated_predictors_need_ridge() {
    let base = Mvn::five().sample(100, &mut rng(30));
    let data = DMatrix::from_fn(100, 3, |i, j| if j == 2 { base[(i, 0)] } else { base[(i, j)] });
    let mut bits = DMatrix::from_element(100, 3, false);
    bits[(0, 1)] = true;
    let x = MissingMask::new(bits).apply(&data).unwrap();
    let k2 = ImputationConfig { k: 3, ..cfg(0.0) };
    assert!(matches!(impute(&x, &x, &k2), Err(Error::Singular { .. })));
    let ridge = ImputationConfig { alpha: 0.1, ..k2 };
    let out = impute(&x, &x, &ridge).unwrap();
    assert!(out.imputed.iter().all(|v| v.is_finite()));
}

/// The worked example used to illustrate block stacking: six features, the
/// second one missing in the first three samples.
fn worked_example() -> MaskedMatrix {
    let n = None;
    let v = |x: f64| Some(x);
    MaskedMatrix::from_rows(
        &[
            vec![v(2.0), n, v(1.0), v(4.0), n, n],
            vec![n, n, v(4.0), v(7.0), n, n],
            vec![v(3.0), n, v(0.0), v(3.0), v(7.0), n],
            vec![v(5.0), v(3.0), v(6.0), n, v(9.0), v(7.0)],
            vec![n, v(1.0), v(4.0), v(7.0), v(5.0), v(2.0)],
        ],
        6,
    )
    .unwrap()
}

#[test]
fn worked_example_blocks_follow_the_subset_rule() {
    // feature 1 correlates most with features 2 and 3 among those observed
    // in the first sample; no correlation passes tau
    let mut s = DMatrix::identity(6, 6);
    for (j, r) in [(0, 0.05), (2, 0.4), (3, 0.3), (4, 0.1), (5, 0.1)] {
        s[(1, j)] = r;
        s[(j, 1)] = r;
    }
    let config = ImputationConfig {
        tau: 0.9,
        k: 2,
        ..ImputationConfig::default()
    };
    let model = DimvModel::from_parts(Standardizer::identity(6), cov(s), config).unwrap();
    let x = worked_example();
    let blocks = model.plan_blocks(&x, 1).unwrap();

    // sample 2's missing set {1, 5} lies inside sample 0's {1, 4, 5} and it
    // observes both selected predictors, so it joins sample 0; sample 1 also
    // misses feature 0 and gets its own block
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[0].predictors, vec![2, 3]);
    assert_eq!(blocks[0].row_ids, vec![0, 2]);
    assert_eq!(blocks[1].row_ids, vec![1]);
    assert_eq!(blocks[1].predictors, vec![2, 3]);

    let zero = DimvModel::from_parts(
        Standardizer::identity(6),
        model.sigma().clone(),
        ImputationConfig {
            init_with_zero: true,
            ..model.config().clone()
        },
    )
    .unwrap();
    let blocks = zero.plan_blocks(&x, 1).unwrap();
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].row_ids, vec![0, 1, 2]);
    assert_eq!(blocks[0].predictors, vec![2, 3]);
    assert_eq!(blocks[0].z_obs.row(1).iter().copied().collect::<Vec<_>>(), vec![4.0, 7.0]);
}

#[test]
fn raising_tau_never_adds_predictors() {
    let mut r = rng(40);
    for _ in 0..100 {
        let p = r.random_range(3..9);
        let sigma = cov(random_spd(p, &mut r));
        let observed: Vec<usize> = (1..p).collect();
        let mut last: Option<Vec<usize>> = None;
        for tau in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9] {
            let c = ImputationConfig {
                tau,
                k: 1,
                ..ImputationConfig::default()
            };
            let sel = select_features(&sigma, 0, &observed, &c).unwrap();
            if let Some(prev) = &last {
                assert!(sel.len() <= prev.len(), "{sel:?} after {prev:?}");
            }
            last = Some(sel);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn observed_entries_are_copied_bit_for_bit(
        seed in 0u64..10_000,
        rate in 0.0f64..0.5,
        zero in any::<bool>(),
        alpha in prop_oneof![Just(0.0), Just(0.5)],
    ) {
        let mvn = Mvn::five();
        let train = mcar_mask(60, 5, 0.2, seed).unwrap().apply(&mvn.sample(60, &mut rng(seed))).unwrap();
        let test = mcar_mask(25, 5, rate, seed + 1).unwrap().apply(&mvn.sample(25, &mut rng(seed + 7))).unwrap();
        let c = ImputationConfig { alpha, init_with_zero: zero, ..ImputationConfig::default() };
        let out = impute(&train, &test, &c).unwrap().imputed;
        for i in 0..25 {
            for j in 0..5 {
                match test.get(i, j) {
                    Some(v) => prop_assert_eq!(out[(i, j)].to_bits(), v.to_bits()),
                    None => prop_assert!(out[(i, j)].is_finite()),
                }
            }
        }
    }
}
