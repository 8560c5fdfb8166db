mod support;

use bace_rul::data::{compute_rul_labels, label_with_final_rul, CycleRecord, Normalizer, Stage};
use bace_rul::metrics::{mape, phm_score, phm_term, rmse};
use bace_rul::model::{read_checkpoint, write_checkpoint, Variant};
use proptest::prelude::*;
use support::*;

fn records(lengths: &[u32], width: usize) -> Vec<CycleRecord> {
    let mut out = Vec::new();
    for (u, &len) in lengths.iter().enumerate() {
        for c in 1..=len {
            out.push(CycleRecord {
                unit_id: u as u32 + 1,
                cycle: c,
                op_settings: vec![],
                sensors: (0..width).map(|k| (c as f64) * 0.1 + k as f64).collect(),
            });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalizer_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..30)) {
        let norm = Normalizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        for r in &rows {
            let back = norm.invert(&norm.apply(r).unwrap()).unwrap();
            for (a, b) in back.iter().zip(r) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn run_to_failure_labels(lengths in prop::collection::vec(1u32..300, 1..6), cap in 1u32..200) {
        let recs = records(&lengths, 2);
        let labels = compute_rul_labels(&recs, cap).unwrap();
        prop_assert_eq!(labels.len(), recs.len());
        for (u, &len) in lengths.iter().enumerate() {
            let rows: Vec<_> = labels.iter().filter(|s| s.unit_id == u as u32 + 1).collect();
            prop_assert_eq!(rows.last().unwrap().t, 1);
            let normal = rows.iter().filter(|s| s.stage == Stage::Normal).count() as u32;
            prop_assert_eq!(normal, len.saturating_sub(cap));
            for s in &rows {
                prop_assert_eq!(s.t_raw, len - s.cycle + 1);
                prop_assert_eq!(s.t, s.t_raw.min(cap));
                prop_assert!(s.t >= 1 && s.t <= cap);
                prop_assert_eq!(s.stage == Stage::Normal, s.t_raw > cap);
            }
        }
    }

    #[test]
    fn truncated_test_labels(lengths in prop::collection::vec(1u32..100, 1..5), finals in prop::collection::vec(0u32..150, 5)) {
        let recs = records(&lengths, 1);
        let ruls = &finals[..lengths.len()];
        let labels = label_with_final_rul(&recs, ruls, 125).unwrap();
        for (u, &len) in lengths.iter().enumerate() {
            let rows: Vec<_> = labels.iter().filter(|s| s.unit_id == u as u32 + 1).collect();
            let r = ruls[u].max(1);
            prop_assert_eq!(rows.last().unwrap().t_raw, r);
            prop_assert_eq!(rows[0].t_raw, r + len - 1);
        }
    }

    #[test]
    fn score_terms_are_monotone(a in 0.0f64..200.0, b in 0.0f64..200.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(phm_term(hi) >= phm_term(lo));
        prop_assert!(phm_term(-hi) >= phm_term(-lo));
        prop_assert!(phm_term(a) >= phm_term(-a));
    }

    #[test]
    fn score_is_continuous_at_zero(eps in 1e-12f64..1e-6) {
        prop_assert!(phm_term(eps) < eps);
        prop_assert!(phm_term(-eps) < eps);
    }

    #[test]
    fn metrics_match_direct_formulas(pairs in prop::collection::vec((0.0f64..200.0, 1.0f64..200.0), 1..50)) {
        let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let n = pairs.len() as f64;
        let mse = pairs.iter().map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
        let score: f64 = pairs
            .iter()
            .map(|(p, t)| if p < t { ((t - p) / 13.0).exp() - 1.0 } else { ((p - t) / 10.0).exp() - 1.0 })
            .sum();
        let pct = pairs.iter().map(|(p, t)| ((t - p) / t).abs()).sum::<f64>() / n * 100.0;
        let tol = |x: f64| 1e-12 * x.abs().max(1.0);
        prop_assert!((rmse(&pred, &truth).unwrap() - mse.sqrt()).abs() <= tol(mse.sqrt()));
        prop_assert!((phm_score(&pred, &truth).unwrap() - score).abs() <= tol(score));
        prop_assert!((mape(&pred, &truth).unwrap() - pct).abs() <= tol(pct));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn predictions_are_nonnegative_summaries(seed in 0u64..1000, samples in 1usize..40) {
        let model = tiny_model(Variant::Full, seed);
        let x = random_rows(seed, 1, 3, -5.0, 5.0);
        let p = model.predict(x.row(0), &mut rng(seed), samples).unwrap();
        prop_assert_eq!(p.samples.len(), samples);
        prop_assert!(p.samples.iter().all(|&s| s >= 0.0));
        let mean = p.samples.iter().sum::<f64>() / samples as f64;
        prop_assert!((p.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        prop_assert!(p.std >= 0.0);
        let again = model.predict(x.row(0), &mut rng(seed), samples).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..1000, v in 0usize..3) {
        let variant = [Variant::Full, Variant::NoEncoderE2, Variant::NoConditionalSpace][v];
        let model = tiny_model(variant, seed);
        let text = write_checkpoint(&model);
        let back = read_checkpoint(&text).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(write_checkpoint(&back), text);
    }
}
