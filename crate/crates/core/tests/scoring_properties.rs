mod common;

use proptest::prelude::*;
use qaprune::pruner::TokenScore;
use qaprune::{
    fuse_scores, group_quant_error, hybrid_sensitivity, metric_score, minmax_normalize, outlier_intensity, prune,
    select_topk, MetricId, PruneConfig, QuantConfig, ScoreKind, ScoreVector, TokenMatrix,
};

fn tokens_strategy(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..max_n, 1..max_d).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-50.0f64..50.0, d), n))
}

fn normalized(values: Vec<f64>) -> ScoreVector {
    ScoreVector { normalized: true, ..ScoreVector::raw(values, ScoreKind::SemanticSp) }
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

proptest! {
    #[test]
    fn permutation_equivariance(rows in tokens_strategy(10, 12), seed in any::<u64>()) {
        let n = rows.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = common::rng(seed);
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut r);
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let a = TokenMatrix::from_rows(&rows).unwrap();
        let b = TokenMatrix::from_rows(&permuted).unwrap();
        let cfg = QuantConfig::symmetric(4, 4, 1e-8);
        for m in MetricId::ALL {
            let sa = metric_score(&a, m, &cfg).unwrap();
            let sb = metric_score(&b, m, &cfg).unwrap();
            let na = minmax_normalize(&sa);
            let nb = minmax_normalize(&sb);
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(sb.values[k], sa.values[i], "{}", m);
                prop_assert_eq!(nb.values[k], na.values[i], "{}", m);
            }
        }
    }

    #[test]
    fn hybrid_is_power_of_two_scale_invariant(rows in tokens_strategy(10, 12), c in prop::sample::select(vec![0.5, 2.0, 4.0])) {
        let t = TokenMatrix::from_rows(&rows).unwrap();
        let cfg = QuantConfig::symmetric(4, 4, 0.0);
        let e = group_quant_error(&t, &cfg).unwrap().values;
        let r = outlier_intensity(&t).values;
        let spans = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > v.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spans(&e) && spans(&r));
        let base = hybrid_sensitivity(&t, &cfg).unwrap();
        let scaled = hybrid_sensitivity(&t.scaled(c).unwrap(), &cfg).unwrap();
        prop_assert_eq!(base.values, scaled.values);
    }

    #[test]
    fn normalized_scores_are_in_unit_interval(rows in tokens_strategy(10, 12)) {
        let t = TokenMatrix::from_rows(&rows).unwrap();
        let cfg = QuantConfig::default();
        for m in MetricId::ALL {
            let s = metric_score(&t, m, &cfg).unwrap();
            prop_assert_eq!(s.len(), t.n_tokens());
            let n = s.into_normalized();
            prop_assert!(n.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn hybrid_matches_oracle(rows in tokens_strategy(8, 10)) {
        let t = TokenMatrix::from_rows(&rows).unwrap();
        let cfg = QuantConfig::symmetric(4, 3, 0.0);
        let e: Vec<f64> = rows.iter().map(|r| common::sym_error(r, 3, 4, 0.0)).collect();
        let r: Vec<f64> = rows.iter().map(|r| common::spread(r)).collect();
        let (ne, nr) = (common::minmax(&e), common::minmax(&r));
        let sq = hybrid_sensitivity(&t, &cfg).unwrap();
        for i in 0..rows.len() {
            prop_assert!((sq.values[i] - (0.5 * ne[i] + 0.5 * nr[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_bounds_and_affinity((p, q) in (1usize..20).prop_flat_map(|n| (unit_vec(n), unit_vec(n)))) {
        let sp = normalized(p.clone());
        let sq = normalized(q.clone());
        let at = |a: f64| fuse_scores(&sp, &sq, a).unwrap().values;
        let (f0, f1) = (at(0.0), at(1.0));
        prop_assert_eq!(&f0, &q);
        prop_assert_eq!(&f1, &p);
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let f = at(alpha);
            for i in 0..p.len() {
                prop_assert!(f[i] >= p[i].min(q[i]) && f[i] <= p[i].max(q[i]));
                let affine = f0[i] + alpha * (p[i] - q[i]);
                prop_assert!((f[i] - affine).abs() <= 4.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn selection_dominance(scores in prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]), 1..30), k in 1usize..35) {
        let s = select_topk(&scores, k).unwrap();
        prop_assert_eq!(s.selected_indices.len(), k.min(scores.len()));
        prop_assert!(s.selected_indices.windows(2).all(|w| w[0] < w[1]));
        let mut ranked = s.rank_order.clone();
        ranked.sort_unstable();
        prop_assert_eq!(&ranked, &s.selected_indices);
        let unselected: Vec<usize> = (0..scores.len()).filter(|i| !s.selected_indices.contains(i)).collect();
        for &i in &s.selected_indices {
            for &j in &unselected {
                prop_assert!(scores[i] > scores[j] || (scores[i] == scores[j] && i < j));
            }
        }
    }

    #[test]
    fn permutation_consistency(rows in tokens_strategy(12, 8), sp in prop::collection::vec(0.0f64..1.0, 12), seed in any::<u64>(), k in 1usize..6) {
        let n = rows.len();
        let sp = sp[..n].to_vec();
        let t = TokenMatrix::from_rows(&rows).unwrap();
        let cfg = PruneConfig::new(0.5, k).with_quant(QuantConfig::symmetric(4, 4, 1e-8));
        let base = prune(&t, &ScoreVector::raw(sp.clone(), ScoreKind::SemanticSp), &cfg).unwrap();
        let fused = base.fused();
        let mut sorted = fused.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] < w[1]));

        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut common::rng(seed));
        let t2 = TokenMatrix::from_rows(&perm.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()).unwrap();
        let sp2: Vec<f64> = perm.iter().map(|&i| sp[i]).collect();
        let moved = prune(&t2, &ScoreVector::raw(sp2, ScoreKind::SemanticSp), &cfg).unwrap();
        let mut mapped: Vec<usize> = moved.selected_indices.iter().map(|&k| perm[k]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, base.selected_indices);
    }
}

#[test]
fn prune_is_deterministic() {
    let mut r = common::rng(11);
    let rows = common::random_rows(&mut r, 40, 32);
    let t = TokenMatrix::from_rows(&rows).unwrap();
    let sp = ScoreVector::raw((0..40).map(|i| ((i * 37) % 40) as f64).collect(), ScoreKind::SemanticSp);
    let cfg = PruneConfig::new(0.4, 10).with_quant(QuantConfig::symmetric(4, 8, 1e-8));
    let a = serde_json::to_string(&prune(&t, &sp, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&prune(&t, &sp, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_token_is_global_minimum() {
    let mut r = common::rng(5);
    let mut rows = common::random_rows(&mut r, 6, 16);
    rows[3] = vec![0.0; 16];
    let t = TokenMatrix::from_rows(&rows).unwrap();
    let cfg = QuantConfig::symmetric(4, 4, 1e-8);
    for m in MetricId::ALL.into_iter().filter(|&m| m != MetricId::Combine) {
        let s = metric_score(&t, m, &cfg).unwrap().values;
        assert_eq!(s[3], 0.0, "{m}");
        assert!(s.iter().all(|&v| v >= 0.0), "{m}");
    }
}

#[test]
fn registry_is_complete() {
    let t = TokenMatrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.1, 0.2, 0.3], vec![4.0, 0.0, -4.0]]).unwrap();
    let names: Vec<&str> = MetricId::ALL.iter().map(|m| m.as_str()).collect();
    assert_eq!(
        names,
        [
            "linf_norm",
            "l1_norm",
            "l2_norm",
            "variance",
            "tokenwise_absmax",
            "clip_absmax",
            "groupwise_absmax",
            "outlier_intensity",
            "combine"
        ]
    );
    for m in MetricId::ALL {
        let s = metric_score(&t, m, &QuantConfig::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.normalized, m == MetricId::Combine);
    }
}

#[test]
fn co_monotone_components_give_common_ranking() {
    // Larger spread and larger error together, token by token.
    let rows: Vec<Vec<f64>> = [0.3, 1.1, 2.9, 0.7].iter().map(|&a| vec![a, -a * 0.61, a * 0.29, 0.0]).collect();
    let t = TokenMatrix::from_rows(&rows).unwrap();
    let cfg = QuantConfig::symmetric(4, 4, 0.0);
    let e = group_quant_error(&t, &cfg).unwrap().values;
    let r = outlier_intensity(&t).values;
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        idx
    };
    assert_eq!(order(&e), order(&r));
    let sq = hybrid_sensitivity(&t, &cfg).unwrap().values;
    assert_eq!(order(&sq), order(&r));
}

#[test]
fn prune_records_full_breakdown() {
    let t = TokenMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![5.0, -5.0]]).unwrap();
    let sp = ScoreVector::raw(vec![3.0, 1.0, 2.0], ScoreKind::SemanticSp);
    let r = prune(&t, &sp, &PruneConfig::new(0.5, 2).with_quant(QuantConfig::symmetric(4, 2, 0.0))).unwrap();
    assert_eq!(r.scores.len(), 3);
    let TokenScore { semantic_raw, semantic, .. } = r.scores[0];
    assert_eq!((semantic_raw, semantic), (3.0, 1.0));
    assert_eq!(r.config.keep, 2);
}
