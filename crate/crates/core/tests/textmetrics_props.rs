use proptest::prelude::*;

use synthaug::corpus::{Domain, Origin, Utterance};
use synthaug::textmetrics::{align, filter_by_wer, wer, words};

fn seq(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..max)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn counts_are_consistent(r in seq(12), h in seq(12)) {
        let a = align(&r, &h);
        prop_assert_eq!(a.hits + a.substitutions + a.deletions, r.len());
        prop_assert_eq!(a.hits + a.substitutions + a.insertions, h.len());
        prop_assert_eq!(a.deletions as i64 - a.insertions as i64, r.len() as i64 - h.len() as i64);
        let rebuilt_r: Vec<String> = a.pairs.iter().filter_map(|p| p.0.clone()).collect();
        let rebuilt_h: Vec<String> = a.pairs.iter().filter_map(|p| p.1.clone()).collect();
        prop_assert_eq!(rebuilt_r, r.clone());
        prop_assert_eq!(rebuilt_h, h.clone());
    }

    #[test]
    fn distance_is_a_metric(a in seq(9), b in seq(9), c in seq(9)) {
        let d = |x: &[String], y: &[String]| align(x, y).errors();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) >= a.len().abs_diff(b.len()));
        prop_assert!(d(&a, &b) <= a.len().max(b.len()));
    }

    #[test]
    fn swapping_sides_swaps_deletions_and_insertions(r in seq(10), h in seq(10)) {
        let ab = align(&r, &h);
        let ba = align(&h, &r);
        prop_assert_eq!(ab.errors(), ba.errors());
        prop_assert_eq!(ab.deletions as i64 - ab.insertions as i64,
                        ba.insertions as i64 - ba.deletions as i64);
    }

    #[test]
    fn wer_is_errors_over_reference(r in seq(10), h in seq(10)) {
        match wer(&r, &h) {
            Ok(w) => prop_assert_eq!(w, align(&r, &h).errors() as f64 / r.len() as f64),
            Err(_) => prop_assert!(r.is_empty()),
        }
    }

    #[test]
    fn filter_partitions_its_input(
        rows in prop::collection::vec((seq(6), seq(6)), 1..30),
        threshold in 0.0f64..1.5,
    ) {
        let pairs: Vec<(Utterance, String)> = rows
            .iter()
            .enumerate()
            .map(|(i, (r, h))| {
                (
                    Utterance {
                        id: format!("u{i:03}"),
                        text: r.join(" "),
                        speaker_id: "s".into(),
                        domain: Domain::A,
                        origin: Origin::Synthetic,
                        embedding_ref: None,
                        audio: None,
                    },
                    h.join(" "),
                )
            })
            .collect();
        let rep = filter_by_wer(&pairs, threshold);
        prop_assert_eq!(rep.kept.len() + rep.rejected.len(), pairs.len());
        for u in rep.kept.iter() {
            prop_assert!(!rep.rejected.contains(&u.id));
            prop_assert!(rep.wer[&u.id] <= threshold);
        }
        for u in rep.rejected.iter() {
            prop_assert!(rep.invalid.contains(&u.id) || rep.wer[&u.id] > threshold);
        }
        let expected = rep.rejected.len() as f64 / pairs.len() as f64;
        prop_assert!((rep.rejection_fraction - expected).abs() < 1e-12);
        let ids: Vec<&str> = rep.kept.iter().map(|u| u.id.as_str()).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn words_split_on_whitespace() {
    assert_eq!(words("  the  cat\tsat "), vec!["the", "cat", "sat"]);
}

#[test]
fn hand_counted_example() {
    let r = words("the cat sat on the mat");
    let h = words("the cat sit on mat");
    let a = align(&r, &h);
    assert_eq!((a.substitutions, a.deletions, a.insertions), (1, 1, 0));
    assert!((wer(&r, &h).unwrap() - 2.0 / 6.0).abs() < 1e-15);
}
