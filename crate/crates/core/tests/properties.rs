mod common;

use chrono::Duration;
use coinforecast::ensemble::{fit_linear, LinearModel, VoteModel};
use coinforecast::gbt::{fit_gbt, GbtParams};
use coinforecast::knn::{fit_knn, forecast_knn, Weighting};
use coinforecast::learner::ConstantModel;
use coinforecast::market_data::Attribute;
use coinforecast::metrics::performance_vector;
use coinforecast::mlp::{fit_mlp, MlpParams};
use coinforecast::windowing::{window, window_count};
use coinforecast::{Matrix, Regressor, TrainedModel};
use common::*;
use proptest::prelude::*;

fn triples(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2..max).prop_flat_map(|n| {
        (
            prop::collection::vec(1.0f64..1e4, n),
            prop::collection::vec(1.0f64..1e4, n),
            prop::collection::vec(1.0f64..1e4, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn metrics_agree_with_loops((a, p, q) in triples(200)) {
        let pv = performance_vector(&a, &p, &q).unwrap();
        prop_assert!(matches_oracle(&pv, &naive_metrics(&a, &p, &q), 1e-12).is_ok());
        prop_assert!((0.0..=1.0).contains(&pv.trend_accuracy));
        prop_assert!(close(pv.rmse * pv.rmse, pv.squared_error.mean, 1e-12));
    }

    #[test]
    fn scale_equivariance((a, p, q) in triples(80), c in 0.01f64..100.0) {
        let base = performance_vector(&a, &p, &q).unwrap();
        let s = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let scaled = performance_vector(&s(&a), &s(&p), &s(&q)).unwrap();
        prop_assert!(close(scaled.rmse, base.rmse * c, 1e-9));
        prop_assert!(close(scaled.absolute_error.mean, base.absolute_error.mean * c, 1e-9));
        prop_assert!(close(scaled.squared_error.mean, base.squared_error.mean * c * c, 1e-9));
        prop_assert!(close(scaled.relative_error.unwrap().mean, base.relative_error.unwrap().mean, 1e-9));
        prop_assert!(close_opt(scaled.correlation, base.correlation, 1e-9));
        prop_assert_eq!(scaled.trend_accuracy, base.trend_accuracy);
    }

    #[test]
    fn correlation_shift_invariant((a, p, q) in triples(80), shift in -1e3f64..1e3) {
        let base = performance_vector(&a, &p, &q).unwrap();
        let s = |v: &[f64]| v.iter().map(|x| x + shift).collect::<Vec<_>>();
        let moved = performance_vector(&s(&a), &s(&p), &s(&q)).unwrap();
        prop_assert!(close_opt(moved.correlation, base.correlation, 1e-9));
    }

    #[test]
    fn window_count_matches_enumeration(n in 1usize..40, w in 1usize..6, s in 1usize..6, h in 1usize..6) {
        let expect = enumerate_windows(n, w, s, h);
        prop_assert_eq!(window_count(n, w, s, h), expect.len());
        let closes: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let series = series_from_closes("x", day(2021, 1, 1), &closes);
        if let Ok(set) = window(&series, &[Attribute::Close, Attribute::Open], w, s, h, Attribute::Close) {
            prop_assert_eq!(set.n_features(), 2 * w);
            for (i, (idx, label)) in expect.iter().enumerate() {
                prop_assert_eq!(set.labels[i], closes[*label]);
                prop_assert_eq!(set.label_dates[i], day(2021, 1, 1) + Duration::days(*label as i64));
                // every feature comes from inside the window, before the label
                prop_assert!(set.features.row(i)[..w].iter().all(|v| idx.contains(&(*v as usize - 1))));
            }
        } else {
            prop_assert!(expect.is_empty());
        }
    }

    #[test]
    fn gbt_ignores_row_order(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rand::Rng::gen_range(&mut r, 0.0..10.0), rand::Rng::gen_range(&mut r, 0.0..10.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|v| v[0] * 2.0 - v[1]).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
        let params = GbtParams { n_trees: 20, min_leaf: 3, ..GbtParams::default() };
        let names = vec!["a".to_string(), "b".to_string()];
        let m1 = fit_gbt(&Matrix::from_rows(&rows).unwrap(), &y, &names, params).unwrap();
        let rows2: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let y2: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let m2 = fit_gbt(&Matrix::from_rows(&rows2).unwrap(), &y2, &names, params).unwrap();
        prop_assert_eq!(&m1.trees, &m2.trees);
        for pair in m1.stage_sse.windows(2) {
            prop_assert!(pair[1] <= pair[0]);
        }
        for row in &rows {
            let oracle = m1.init_value + m1.trees.iter().map(|t| params.shrinkage * walk(t, row)).sum::<f64>();
            prop_assert!(close(m1.predict_row(row).unwrap(), oracle, 1e-12));
        }
    }

    #[test]
    fn vote_within_member_range(values in prop::collection::vec(-1e3f64..1e3, 1..8)) {
        let members: Vec<TrainedModel> = values.iter().map(|v| TrainedModel::Constant(ConstantModel::new(*v, 1))).collect();
        let vote = VoteModel::new(members).unwrap();
        let out = vote.predict_row(&[0.0]).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out >= lo - 1e-9 && out <= hi + 1e-9);
    }

    #[test]
    fn knn_saturates_and_interpolates(closes in prop::collection::vec(1.0f64..1e4, 1..60), k_pick in 0usize..100, ahead in 1i64..400) {
        let k = 1 + k_pick % closes.len();
        let series = series_from_closes("x", day(2017, 6, 1), &closes);
        let model = fit_knn(&series, k, Weighting::Uniform).unwrap();
        let last = series.last_date();
        let f = forecast_knn(&model, &[last + Duration::days(ahead), last + Duration::days(ahead + 17)]).unwrap();
        let n = closes.len();
        prop_assert_eq!(f[0], closes[n - k..].iter().sum::<f64>() / k as f64);
        prop_assert_eq!(f[0], f[1]);
        let lo = closes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = closes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inner = forecast_knn(&model, &[day(2017, 6, 1) + Duration::days(ahead % (n as i64))]).unwrap();
        prop_assert!(inner[0] >= lo - 1e-9 && inner[0] <= hi + 1e-9);
        let inv = fit_knn(&series, k, Weighting::InverseDistance).unwrap();
        let g = forecast_knn(&inv, &[last + Duration::days(ahead)]).unwrap();
        prop_assert!(g[0] >= lo - 1e-9 && g[0] <= hi + 1e-9);
    }

    #[test]
    fn least_squares_residuals_orthogonal(seed in 0u64..10_000, n in 8usize..40, p in 1usize..4) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rand::Rng::gen_range(&mut r, -2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut r, -2.0..2.0)).collect();
        let m: LinearModel = fit_linear(&Matrix::from_rows(&rows).unwrap(), &y).unwrap();
        let res: Vec<f64> = (0..n).map(|i| y[i] - m.predict_row(&rows[i]).unwrap()).collect();
        prop_assert!(res.iter().sum::<f64>().abs() < 1e-8);
        for j in 0..p {
            prop_assert!((0..n).map(|i| rows[i][j] * res[i]).sum::<f64>().abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn network_is_deterministic_and_bounded(seed in 0u64..1000, cycles in 1usize..40) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rand::Rng::gen_range(&mut r, 0.0..5.0), rand::Rng::gen_range(&mut r, 0.0..5.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|v| 10.0 + v[0] - v[1]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = MlpParams { cycles, seed, ..MlpParams::default() };
        let a = fit_mlp(&x, &y, &params).unwrap();
        let b = fit_mlp(&x, &y, &params).unwrap();
        prop_assert_eq!(&a, &b);
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for row in [vec![-100.0, 100.0], vec![100.0, -100.0], vec![2.0, 2.0]] {
            let v = a.predict_row(&row).unwrap();
            prop_assert!(v >= lo && v <= hi);
        }
    }
}
