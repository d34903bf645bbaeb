mod common;

use std::collections::BTreeMap;

use factmix::anno::{fleiss_kappa, majority, Question, Response};
use factmix::eval::{f1, format_delta, map_prediction, round2, Averaging};
use factmix::explain::build_prompt;
use factmix::mixture::{build, MixtureSpec, Sampling};
use factmix::schema::{parse, serialize, ternary_space, DatasetStore, Split, VeracityLabel};
use factmix::verifier::VeracityPrediction;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn label() -> impl Strategy<Value = VeracityLabel> {
    (0u8..3).prop_map(|c| VeracityLabel::from_code(c).unwrap())
}

proptest! {
    #[test]
    fn jsonl_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = common::random_example(&mut rng, 0);
        let line = serialize(&ex);
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(parse(&line).unwrap(), ex);
    }

    #[test]
    fn f1_is_a_bounded_permutation_invariant(pairs in prop::collection::vec((label(), label()), 1..60), rot in 0usize..60) {
        let (preds, golds): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        for avg in [Averaging::Macro, Averaging::Micro, Averaging::Weighted] {
            let a = f1(&preds, &golds, avg).unwrap();
            prop_assert!((0.0..=100.0).contains(&a));
            let mut shuffled = pairs.clone();
            shuffled.rotate_left(rot % pairs.len());
            shuffled.reverse();
            let (p2, g2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            prop_assert!((a - f1(&p2, &g2, avg).unwrap()).abs() < 1e-9);
            prop_assert!((f1(&golds, &golds, avg).unwrap() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn in_space_predictions_pass_through(l in label(), p in prop::collection::vec(0.0f64..1.0, 3)) {
        let pred = VeracityPrediction { probs: p, label: l };
        prop_assert_eq!(map_prediction(&pred, &ternary_space()).unwrap(), l);
    }

    #[test]
    fn kappa_ignores_item_order(rows in prop::collection::vec(prop::collection::vec(0u32..6, 3), 2..20), rot in 0usize..20) {
        let raters = 5u32;
        let matrix: Vec<Vec<u32>> = rows
            .iter()
            .map(|r| {
                let a = r[0] % (raters + 1);
                let b = r[1] % (raters - a + 1);
                vec![a, b, raters - a - b]
            })
            .collect();
        let mut permuted = matrix.clone();
        permuted.rotate_left(rot % matrix.len());
        permuted.reverse();
        match (fleiss_kappa(&matrix), fleiss_kappa(&permuted)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!(a <= 1.0 + 1e-12);
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "inconsistent: {:?}", other),
        }
    }

    #[test]
    fn delta_rendering_round_trips(x in -100.0f64..100.0) {
        let r = round2(x);
        let s = format_delta(r);
        prop_assert!(s == "0.00" || s.starts_with('+') || s.starts_with('-'));
        prop_assert!((s.parse::<f64>().unwrap() - r).abs() < 1e-9);
    }

    #[test]
    fn prompt_mentions_every_substitution(claim in "[a-z]{1,12}( [a-z]{1,12}){0,4}", evidence in "[a-z ]{0,40}", l in label()) {
        let p = build_prompt(&claim, &evidence, l).unwrap();
        prop_assert!(p.user.contains(&claim));
        prop_assert!(p.user.contains(&evidence));
        prop_assert!(p.user.contains(l.word()));
    }

    #[test]
    fn concat_mixture_is_the_union(na in 1usize..30, nb in 1usize..30, seed in any::<u64>()) {
        let mut store = DatasetStore::new();
        for i in 0..na {
            store.insert(common::simple(&format!("a{i}"), "moc", Split::Train, VeracityLabel::ALL[i % 3]));
        }
        for i in 0..nb {
            store.insert(common::simple(&format!("b{i}"), "ph", Split::Train, VeracityLabel::ALL[i % 3]));
        }
        let spec = MixtureSpec::new(&["moc", "ph"], Sampling::Concat, seed).unwrap();
        let stream = build(&spec, &store, Split::Train).unwrap();
        prop_assert_eq!(stream.len(), na + nb);
        let mut ids: Vec<_> = stream.iter().map(|e| e.id.clone()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), na + nb);
        prop_assert_eq!(build(&spec, &store, Split::Train).unwrap(), stream);
    }
}

/// Modal answer with ties settled by a fixed preference list.
fn brute_majority(answers: &[Response], preference: &[Response]) -> Option<Response> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(preference.iter().position(|p| p == a).unwrap()).or_default() += 1;
    }
    let top = *counts.values().max()?;
    counts.iter().find(|(_, &c)| c == top).map(|(&i, _)| preference[i])
}

#[test]
fn majority_matches_brute_force() {
    use rand::Rng;
    use Response::*;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let prefs: [(Question, Vec<Response>); 3] = [
        (Question::Q1, vec![No, Yes]),
        (Question::Q5, vec![LabelTrue, LabelFalse, LabelUnprovable, No]),
        (Question::Q6, vec![Score(1), Score(2), Score(3), Score(4), Score(5)]),
    ];
    for case in 0..10_000 {
        let (q, pref) = &prefs[case % 3];
        let n = rng.random_range(0..8);
        let answers: Vec<Response> = (0..n).map(|_| pref[rng.random_range(0..pref.len())]).collect();
        assert_eq!(majority(*q, &answers), brute_majority(&answers, pref), "{q:?} {answers:?}");
    }
}
