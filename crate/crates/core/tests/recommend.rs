mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use tagshield::attackgen::{self, AttackConfig, AttackKind};
use tagshield::recommend::{self, EntityVectors, TopKList};
use tagshield::synth::{self, SynthConfig};
use tagshield::vectorize;

#[test]
fn tfidf_topk_matches_brute_force_on_fixture() {
    let r = common::check_tfidf_topk(&common::fixture(), 15);
    assert_eq!(r.lists, 40);
    assert_eq!(r.rank_mismatches, 0, "{r:?}");
    assert!(r.max_tfidf_err <= 1e-12 && r.max_score_err <= 1e-12, "{r:?}");
}

#[test]
fn tfidf_topk_matches_brute_force_on_synthetic() {
    let c = synth::synthetic_corpus(&SynthConfig {
        n_posts: 600,
        n_users: 60,
        n_resources: 200,
        vocab_size: 400,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(c.resources().len() <= 200);
    let r = common::check_tfidf_topk(&c, 15);
    assert_eq!(r.rank_mismatches, 0, "{r:?}");
    assert!(r.max_tfidf_err <= 1e-12 && r.max_score_err <= 1e-12, "{r:?}");
}

#[test]
fn embedding_vectors_are_means_of_post_vectors() {
    let c = common::fixture();
    let table = vectorize::fallback_embeddings(&vectorize::build_vocab(&c, None), 16, 3).unwrap();
    let v = recommend::entity_vectors(&c, &table).unwrap();
    for u in c.users() {
        let posts: Vec<Vec<f64>> = c
            .posts()
            .iter()
            .filter(|p| p.user_id() == u)
            .map(|p| {
                let vs: Vec<Vec<f64>> = p.tags().iter().map(|t| table.get(t).unwrap().to_vec()).collect();
                common::mean(&vs, 16)
            })
            .collect();
        let want = common::mean(&posts, 16);
        for (a, b) in v.user(u).unwrap().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn list(user: &str, ids: &[&str]) -> TopKList {
    TopKList {
        user_id: user.into(),
        entries: ids.iter().enumerate().map(|(i, r)| (r.to_string(), 1.0 - i as f64 * 0.01)).collect(),
    }
}

#[test]
fn overload_impact_recount() {
    let lists = vec![
        list("a", &["x", "bogus", "y"]),
        list("b", &["x", "y", "z"]),
        list("c", &["bogus", "x", "y"]),
        list("d", &["x", "y", "bogus"]),
        TopKList::empty("e"),
    ];
    let m = recommend::overload_impact(&lists, "bogus", 2);
    assert_eq!(m.users, 5);
    assert_eq!(m.affected_count, 2);
    assert_eq!(m.affected_fraction, 0.4);
    assert_eq!(m.avg_bogus_rank, Some(1.5));
    let m3 = recommend::overload_impact(&lists, "bogus", 3);
    assert_eq!(m3.affected_count, 3);
    assert_eq!(m3.avg_bogus_rank, Some(2.0));
}

#[test]
fn piggyback_impact_recount() {
    let lists = vec![
        list("a", &["bogus", "t", "y"]),
        list("b", &["t", "y", "bogus"]),
        list("c", &["y", "bogus", "t"]),
        TopKList::empty("d"),
    ];
    let m = recommend::piggyback_impact(&lists, "bogus", "t", 2).unwrap();
    assert_eq!(m.users, 4);
    assert_eq!(m.affected_count, 2);
    assert_eq!(m.affected_fraction, 0.5);
    assert_eq!(m.avg_bogus_rank, Some(1.5));
    assert!(recommend::piggyback_impact(&lists, "bogus", "missing", 2).is_err());
}

#[test]
fn injected_overload_reaches_some_users() {
    let c = common::fixture();
    let s = attackgen::generate(&c, &AttackConfig::new(AttackKind::Overload, 0.1, 2)).unwrap();
    let attacked = attackgen::inject(&c, &s).unwrap();
    let table = vectorize::fallback_embeddings(&vectorize::build_vocab(&attacked, None), 32, 0).unwrap();
    let v = recommend::entity_vectors(&attacked, &table).unwrap();
    let legit: BTreeSet<String> = c.users().clone();
    let lists: Vec<TopKList> = recommend::topk_all(&attacked, &v, 15)
        .unwrap()
        .into_iter()
        .filter(|l| legit.contains(&l.user_id))
        .collect();
    let m = recommend::overload_impact(&lists, s.bogus_resource_id(), 15);
    assert_eq!(m.users, legit.len());
    assert!(m.affected_count > 0);
}

proptest! {
    #[test]
    fn ranking_is_invariant_to_positive_scaling(
        user in prop::collection::vec(-1.0f64..1.0, 4),
        res in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..12),
        scale in 0.01f64..100.0,
    ) {
        let resources: BTreeMap<String, Vec<f64>> =
            res.iter().enumerate().map(|(i, v)| (format!("r{i:02}"), v.clone())).collect();
        let scaled: BTreeMap<String, Vec<f64>> =
            resources.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x * scale).collect())).collect();
        let users = BTreeMap::from([("u".to_string(), user.clone())]);
        let a = recommend::full_ranking("u", &EntityVectors::new(4, users.clone(), resources.clone()).unwrap(), &BTreeSet::new()).unwrap();
        let b = recommend::full_ranking("u", &EntityVectors::new(4, users, scaled).unwrap(), &BTreeSet::new()).unwrap();
        for ((_, x), (_, y)) in a.entries.iter().zip(&b.entries) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let want = common::topk_oracle(&user, &resources, &BTreeSet::new(), res.len());
        for ((_, x), (_, y)) in a.entries.iter().zip(&want) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn topk_is_a_prefix_of_the_full_ranking(k in 1usize..20, seed in 0u64..1000) {
        let c = common::fixture();
        let table = vectorize::fallback_embeddings(&vectorize::build_vocab(&c, None), 8, seed).unwrap();
        let v = recommend::entity_vectors(&c, &table).unwrap();
        let u = c.users().iter().next().unwrap();
        let full = recommend::full_ranking(u, &v, &BTreeSet::new()).unwrap();
        let top = recommend::topk(u, &v, k, &BTreeSet::new()).unwrap();
        prop_assert_eq!(&top.entries[..], &full.entries[..k.min(full.entries.len())]);
        prop_assert!(top.entries.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
