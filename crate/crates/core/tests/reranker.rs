//! Reranking properties over randomized profiles and result lists.

use std::collections::HashMap;

use proptest::prelude::*;
use userprof::domain::DomainLabel;
use userprof::profile::{personalized_score, rerank, ConceptScores, FeedbackEvent, FeedbackUpdater, UserProfile};

const CASES: u32 = 10_000;

fn profile_from(weights: &[f64]) -> UserProfile {
    let mut p = UserProfile::new("p");
    for (l, &u) in DomainLabel::ALL.iter().zip(weights) {
        p.weights.insert(l.name().to_string(), u);
    }
    p
}

fn normalize(raw: &[f64]) -> ConceptScores {
    let total: f64 = raw.iter().sum();
    DomainLabel::ALL
        .iter()
        .zip(raw)
        .map(|(l, &r)| (l.name().to_string(), r / total))
        .collect()
}

fn arb_results() -> impl Strategy<Value = (Vec<(String, f64)>, HashMap<String, ConceptScores>)> {
    prop::collection::vec((0.0..10.0f64, prop::collection::vec(0.01..1.0f64, 5)), 1..12).prop_map(|rows| {
        let mut results = Vec::new();
        let mut scores = HashMap::new();
        for (i, (wt, raw)) in rows.into_iter().enumerate() {
            let id = format!("d{i}");
            scores.insert(id.clone(), normalize(&raw));
            results.push((id, wt));
        }
        (results, scores)
    })
}

fn lookup(scores: &HashMap<String, ConceptScores>) -> impl Fn(&str) -> Option<ConceptScores> + '_ {
    move |doc| scores.get(doc).cloned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn score_ratio_is_bounded(
        (results, scores) in arb_results(),
        weights in prop::collection::vec(0.0..=1.0f64, 5),
    ) {
        let ranked = rerank(&results, &profile_from(&weights), &lookup(&scores)).unwrap();
        for r in &ranked {
            prop_assert!(r.score >= 0.5 * r.baseline_score - 1e-12);
            prop_assert!(r.score <= 1.5 * r.baseline_score + 1e-12);
            prop_assert!(r.concepts.len() <= 4);
        }
        for w in ranked.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn uniform_profile_keeps_baseline_order(
        (mut results, scores) in arb_results(),
        u in 0.0..=1.0f64,
    ) {
        results.sort_by(|a, b| b.1.total_cmp(&a.1));
        let ranked = rerank(&results, &profile_from(&[u; 5]), &lookup(&scores)).unwrap();
        let before: Vec<&str> = results.iter().map(|r| r.0.as_str()).collect();
        let after: Vec<&str> = ranked.iter().map(|r| r.document_id.as_str()).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn raising_a_weight_never_lowers_a_score(
        (results, scores) in arb_results(),
        weights in prop::collection::vec(0.0..=1.0f64, 5),
        which in 0usize..5,
        bump in 0.0..=1.0f64,
    ) {
        let mut higher = weights.clone();
        higher[which] = (higher[which] + bump).min(1.0);
        let c = lookup(&scores);
        let before = rerank(&results, &profile_from(&weights), &c).unwrap();
        let after = rerank(&results, &profile_from(&higher), &c).unwrap();
        let by_doc: HashMap<_, _> = before.iter().map(|r| (r.document_id.clone(), r.score)).collect();
        for r in &after {
            prop_assert!(r.score >= by_doc[&r.document_id]);
        }
    }

    #[test]
    fn rerank_is_a_permutation(
        (results, scores) in arb_results(),
        weights in prop::collection::vec(0.0..=1.0f64, 5),
    ) {
        let ranked = rerank(&results, &profile_from(&weights), &lookup(&scores)).unwrap();
        let mut a: Vec<&str> = results.iter().map(|r| r.0.as_str()).collect();
        let mut b: Vec<&str> = ranked.iter().map(|r| r.document_id.as_str()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn feedback_keeps_weights_in_unit_interval(
        events in prop::collection::vec((any::<bool>(), 0.0..120.0f64, 0usize..5), 0..60),
    ) {
        let mut up = FeedbackUpdater::default();
        let mut p = UserProfile::new("p");
        for (clicked, secs, concept) in events {
            let mut raw = [0.1; 5];
            raw[concept] = 1.0;
            let scores = normalize(&raw);
            let c = move |_: &str| Some(scores.clone());
            let e = FeedbackEvent {
                user_id: "p".into(),
                document_id: "d".into(),
                clicked,
                reading_time_secs: secs,
                timestamp: 0,
            };
            up.record(&mut p, &e, &c).unwrap();
            prop_assert!(p.weights.values().all(|u| (0.0..=1.0).contains(u)));
        }
    }
}

#[test]
fn hand_examples() {
    assert!((personalized_score(1.0, [0.0; 4]) - 0.5).abs() < 1e-9);
    assert!((personalized_score(1.0, [1.0; 4]) - 1.5).abs() < 1e-9);
    assert!((personalized_score(0.8, [0.5, 0.25, 0.75, 0.5]) - 0.8).abs() < 1e-9);
}
