mod common;

use common::*;
use proptest::prelude::*;
use reshare_core::features::{generate_features, numeric_header_for, six_point_summary, FeatureConfig};
use reshare_core::simulation::generate_series;
use reshare_core::{Cascade, CascadeGroup, FitConfig, Horizon, KernelParams, ModelType, SimConfig};

fn user(id: &str, theta: f64, n: usize, seed: u64) -> CascadeGroup {
    let p = KernelParams::exp(0.7, theta);
    let cascades = (0..n as u64)
        .map(|i| {
            let cfg = SimConfig::default().with_seed(seed + i).with_horizon(Horizon::Until(500.0));
            let mut c = generate_series(ModelType::Exp, &p, &cfg, None).unwrap().cascade;
            c.cascade_id = format!("{id}-{i}");
            c
        })
        .collect();
    CascadeGroup::new(id, cascades).unwrap()
}

#[test]
fn summary_matches_rank_oracle() {
    let mut rng = test_rng(40);
    for _ in 0..500 {
        let n = rand::Rng::gen_range(&mut rng, 1..60);
        let v: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, -1e3..1e3)).collect();
        let s = six_point_summary(&v).unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        for (got, want) in [
            (s.min, oracle_quantile(&v, 0.0)),
            (s.q1, oracle_quantile(&v, 0.25)),
            (s.median, oracle_quantile(&v, 0.5)),
            (s.mean, mean),
            (s.q3, oracle_quantile(&v, 0.75)),
            (s.max, oracle_quantile(&v, 1.0)),
        ] {
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn populations_with_different_decay_separate() {
    let mut groups = Vec::new();
    let mut truth = Vec::new();
    for u in 0..20u64 {
        groups.push(user(&format!("slow{u}"), 0.1, 15, 10_000 * u));
        truth.push(0);
        groups.push(user(&format!("fast{u}"), 10.0, 15, 10_000 * u + 5_000));
        truth.push(1);
    }
    let table = generate_features(&groups, ModelType::Exp, &FeatureConfig::default()).unwrap();
    assert_eq!(table.rows.len(), groups.len());
    let x = standardize(&table.numeric_matrix());
    let labels = two_means(&x, 20, 1);
    let p = purity(&labels, &truth);
    assert!(p >= 0.95, "purity {p}");
}

#[test]
fn failed_groups_keep_their_row() {
    let marked = CascadeGroup::new(
        "marked",
        vec![
            Cascade::from_marked("a", &[0.0, 1.0, 2.5], &[10.0, 3.0, 40.0], 5.0).unwrap(),
            Cascade::from_marked("b", &[0.0, 0.2], &[2.0, 7.0], 3.0).unwrap(),
        ],
    )
    .unwrap();
    let plain = user("plain", 1.0, 5, 1);
    let table = generate_features(&[plain.clone(), marked], ModelType::MExp, &FeatureConfig::default()).unwrap();
    assert_eq!(table.rows[0].status.label(), "failed");
    assert!(table.rows[0].numeric().iter().all(|v| v.is_finite()));
    assert_ne!(table.rows[1].status.label(), "failed");
    let width = numeric_header_for(ModelType::MExp).len();
    assert!(table.numeric_matrix().iter().all(|r| r.len() == width));
    assert!(generate_features(&[plain], ModelType::MExp, &FeatureConfig::default()).is_err());
}

#[test]
fn permuting_users_permutes_rows() {
    let groups: Vec<CascadeGroup> = (0..4).map(|u| user(&format!("u{u}"), 0.5 + u as f64, 4, 100 * u)).collect();
    let cfg = FeatureConfig {
        fit: FitConfig { n_restarts: 3, ..FitConfig::default() },
        ..FeatureConfig::default()
    };
    let a = generate_features(&groups, ModelType::Exp, &cfg).unwrap();
    let mut rev = groups.clone();
    rev.reverse();
    let b = generate_features(&rev, ModelType::Exp, &cfg).unwrap();
    let mut back = b.rows.clone();
    back.reverse();
    assert_eq!(a.rows, back);
}

proptest! {
    #[test]
    fn summary_is_ordered(v in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
        let s = six_point_summary(&v).unwrap();
        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
    }
}
