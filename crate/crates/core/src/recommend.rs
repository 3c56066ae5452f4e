//! Vector-space recommender: users and resources are the mean of their
//! posts' averaged tag embeddings, and a user's top-k list ranks unseen
//! resources by cosine similarity. Also the attack-impact metrics computed
//! over those lists.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vectorize::{self, EmbeddingTable};

pub const DEFAULT_K: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct EntityVectors {
    dim: usize,
    users: BTreeMap<String, Vec<f64>>,
    resources: BTreeMap<String, Vec<f64>>,
    /// Resource ids in ascending order with unit-normalized vectors
    /// (`None` for zero vectors).
    unit_resources: Vec<(String, Option<Vec<f64>>)>,
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

impl EntityVectors {
    pub fn new(dim: usize, users: BTreeMap<String, Vec<f64>>, resources: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        for v in users.values().chain(resources.values()) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
        }
        let unit_resources = resources.iter().map(|(r, v)| (r.clone(), unit(v))).collect();
        Ok(EntityVectors {
            dim,
            users,
            resources,
            unit_resources,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user(&self, id: &str) -> Option<&[f64]> {
        self.users.get(id).map(Vec::as_slice)
    }

    pub fn resource(&self, id: &str) -> Option<&[f64]> {
        self.resources.get(id).map(Vec::as_slice)
    }

    pub fn users(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.users
    }

    pub fn resources(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.resources
    }

    /// Entities whose vector is all zeros.
    pub fn zero_entities(&self) -> Vec<&str> {
        self.users
            .iter()
            .chain(&self.resources)
            .filter(|(_, v)| v.iter().all(|&x| x == 0.0))
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// Mean post vector per user and per resource.
pub fn entity_vectors(corpus: &Corpus, table: &EmbeddingTable) -> Result<EntityVectors> {
    if corpus.is_empty() {
        return Err(Error::Empty);
    }
    let dim = table.dim();
    let mut users: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    let mut resources: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for p in corpus.posts() {
        let pv = vectorize::post_vector(p, table);
        for (map, key) in [(&mut users, p.user_id()), (&mut resources, p.resource_id())] {
            let (sum, n) = map.entry(key.to_string()).or_insert_with(|| (vec![0.0; dim], 0));
            for (s, x) in sum.iter_mut().zip(&pv) {
                *s += x;
            }
            *n += 1;
        }
    }
    let mean = |m: BTreeMap<String, (Vec<f64>, usize)>| {
        m.into_iter()
            .map(|(k, (sum, n))| (k, sum.into_iter().map(|s| s / n as f64).collect()))
            .collect()
    };
    EntityVectors::new(dim, mean(users), mean(resources))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKList {
    pub user_id: String,
    /// `(resource_id, cosine)`; scores non-increasing, ties by ascending id.
    pub entries: Vec<(String, f64)>,
}

impl TopKList {
    pub fn empty(user_id: &str) -> Self {
        TopKList {
            user_id: user_id.to_string(),
            entries: Vec::new(),
        }
    }

    /// 1-based rank of `resource`, if listed.
    pub fn rank_of(&self, resource: &str) -> Option<usize> {
        self.entries.iter().position(|(r, _)| r == resource).map(|i| i + 1)
    }
}

fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

/// All non-excluded resources ranked by cosine to the user's vector.
pub fn full_ranking(user_id: &str, vectors: &EntityVectors, exclude: &BTreeSet<&str>) -> Result<TopKList> {
    let u = vectors
        .user(user_id)
        .ok_or_else(|| Error::UnknownUser(user_id.to_string()))?;
    let u_unit = unit(u);
    let mut scored: Vec<(String, f64)> = vectors
        .unit_resources
        .iter()
        .filter(|(r, _)| !exclude.contains(r.as_str()))
        .map(|(r, rv)| {
            let s = match (&u_unit, rv) {
                (Some(a), Some(b)) => dot(a, b),
                _ => 0.0,
            };
            (r.clone(), s)
        })
        .collect();
    scored.sort_by(by_score_then_id);
    Ok(TopKList {
        user_id: user_id.to_string(),
        entries: scored,
    })
}

pub fn topk(user_id: &str, vectors: &EntityVectors, k: usize, exclude: &BTreeSet<&str>) -> Result<TopKList> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut list = full_ranking(user_id, vectors, exclude)?;
    list.entries.truncate(k);
    Ok(list)
}

/// Top-k for every user, excluding resources the user already annotated.
pub fn topk_all(corpus: &Corpus, vectors: &EntityVectors, k: usize) -> Result<Vec<TopKList>> {
    let seen = corpus.resources_by_user();
    corpus
        .users()
        .iter()
        .map(|u| topk(u, vectors, k, seen.get(u.as_str()).unwrap_or(&BTreeSet::new())))
        .collect()
}

pub fn write_topk_tsv<W: Write>(lists: &[TopKList], mut out: W) -> std::io::Result<()> {
    for l in lists {
        for (i, (r, s)) in l.entries.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", l.user_id, i + 1, r, s)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactMetrics {
    pub users: usize,
    pub affected_count: usize,
    pub affected_fraction: f64,
    /// Mean 1-based rank among users whose top-k lists the bogus resource.
    pub avg_bogus_rank: Option<f64>,
    /// Fraction of users whose top-k lists the bogus resource.
    pub coverage: f64,
}

impl ImpactMetrics {
    pub fn unaffected(users: usize) -> Self {
        ImpactMetrics {
            users,
            affected_count: 0,
            affected_fraction: 0.0,
            avg_bogus_rank: None,
            coverage: 0.0,
        }
    }
}

fn fraction(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn rank_stats(lists: &[TopKList], bogus: &str, k: usize) -> (usize, Option<f64>) {
    let ranks: Vec<usize> = lists
        .iter()
        .filter_map(|l| l.rank_of(bogus))
        .filter(|&r| r <= k)
        .collect();
    let avg = (!ranks.is_empty()).then(|| ranks.iter().sum::<usize>() as f64 / ranks.len() as f64);
    (ranks.len(), avg)
}

/// Users are affected when their top-k contains the bogus resource.
/// `lists` must hold one entry per user in the evaluated population.
pub fn overload_impact(lists: &[TopKList], bogus_resource_id: &str, k: usize) -> ImpactMetrics {
    let (hits, avg) = rank_stats(lists, bogus_resource_id, k);
    ImpactMetrics {
        users: lists.len(),
        affected_count: hits,
        affected_fraction: fraction(hits, lists.len()),
        avg_bogus_rank: avg,
        coverage: fraction(hits, lists.len()),
    }
}

/// Users are affected when their full ranking puts the bogus resource
/// strictly ahead of the target. Rank and coverage use the first `k`
/// entries of the same rankings. An empty ranking (a user with nothing
/// left to rank) counts as unaffected.
pub fn piggyback_impact(rankings: &[TopKList], bogus_resource_id: &str, target_resource_id: &str, k: usize) -> Result<ImpactMetrics> {
    let mut affected = 0;
    for r in rankings.iter().filter(|r| !r.entries.is_empty()) {
        let b = r
            .rank_of(bogus_resource_id)
            .ok_or_else(|| Error::UnknownResource(format!("{bogus_resource_id} (ranking of {})", r.user_id)))?;
        let t = r
            .rank_of(target_resource_id)
            .ok_or_else(|| Error::UnknownResource(format!("{target_resource_id} (ranking of {})", r.user_id)))?;
        if b < t {
            affected += 1;
        }
    }
    let (hits, avg) = rank_stats(rankings, bogus_resource_id, k);
    Ok(ImpactMetrics {
        users: rankings.len(),
        affected_count: affected,
        affected_fraction: fraction(affected, rankings.len()),
        avg_bogus_rank: avg,
        coverage: fraction(hits, rankings.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(users: &[(&str, Vec<f64>)], resources: &[(&str, Vec<f64>)]) -> EntityVectors {
        let dim = users.first().map_or(2, |u| u.1.len());
        EntityVectors::new(
            dim,
            users.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            resources.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn nearest_first() {
        let v = vecs(&[("u", vec![1.0, 0.0])], &[("r1", vec![2.0, 0.0]), ("r2", vec![0.0, 1.0])]);
        let l = topk("u", &v, 5, &BTreeSet::new()).unwrap();
        assert_eq!(l.entries[0].0, "r1");
        assert_eq!(l.entries.len(), 2);
        assert!(topk("nobody", &v, 5, &BTreeSet::new()).is_err());
        assert!(topk("u", &v, 0, &BTreeSet::new()).is_err());
    }

    #[test]
    fn zero_user_orders_by_id() {
        let v = vecs(
            &[("u", vec![0.0, 0.0])],
            &[("c", vec![1.0, 0.0]), ("a", vec![0.0, 1.0]), ("b", vec![1.0, 1.0])],
        );
        let l = topk("u", &v, 3, &BTreeSet::new()).unwrap();
        let ids: Vec<&str> = l.entries.iter().map(|(r, _)| r.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(l.entries.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn exclusion_applies() {
        let v = vecs(&[("u", vec![1.0, 0.0])], &[("r1", vec![1.0, 0.0]), ("r2", vec![0.0, 1.0])]);
        let ex: BTreeSet<&str> = ["r1"].into();
        let l = topk("u", &v, 5, &ex).unwrap();
        assert_eq!(l.entries.len(), 1);
        assert_eq!(l.entries[0].0, "r2");
    }

    #[test]
    fn overload_metric_edges() {
        let lists = vec![
            TopKList {
                user_id: "a".into(),
                entries: vec![("x".into(), 0.9)],
            },
            TopKList::empty("b"),
        ];
        let m = overload_impact(&lists, "bogus", 15);
        assert_eq!(m.affected_count, 0);
        assert_eq!(m.avg_bogus_rank, None);

        let lists: Vec<TopKList> = (0..4)
            .map(|i| TopKList {
                user_id: format!("u{i}"),
                entries: vec![("bogus".into(), 0.9), ("x".into(), 0.5)],
            })
            .collect();
        let m = overload_impact(&lists, "bogus", 15);
        assert_eq!(m.avg_bogus_rank, Some(1.0));
        assert_eq!(m.affected_fraction, 1.0);
    }

    #[test]
    fn piggyback_ties_favor_smaller_id() {
        let same = vec![0.3, 0.7];
        let v = vecs(&[("u", vec![1.0, 0.2])], &[("zbogus", same.clone()), ("target", same)]);
        let r = full_ranking("u", &v, &BTreeSet::new()).unwrap();
        let m = piggyback_impact(&[r], "zbogus", "target", 15).unwrap();
        assert_eq!(m.affected_count, 0);
        assert_eq!(m.coverage, 1.0);
        assert_eq!(m.avg_bogus_rank, Some(2.0));

        let r = full_ranking("u", &v, &BTreeSet::new()).unwrap();
        assert!(piggyback_impact(&[r], "missing", "target", 15).is_err());
    }

    #[test]
    fn piggyback_all_users_when_bogus_matches_them() {
        let users: Vec<(String, Vec<f64>)> = (0..5).map(|i| (format!("u{i}"), vec![1.0, 0.0])).collect();
        let users: Vec<(&str, Vec<f64>)> = users.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        let v = vecs(&users, &[("bogus", vec![3.0, 0.0]), ("target", vec![1.0, 1.0])]);
        let rankings: Vec<TopKList> = v
            .users()
            .keys()
            .map(|u| full_ranking(u, &v, &BTreeSet::new()).unwrap())
            .collect();
        let m = piggyback_impact(&rankings, "bogus", "target", 15).unwrap();
        assert_eq!(m.affected_fraction, 1.0);
    }
}
