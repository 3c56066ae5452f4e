//! Hermetic synthetic folksonomies with Zipf-distributed tags, used when no
//! real dump is at hand.
//!
//! Each resource carries a short list of characteristic tags drawn from the
//! global Zipf law; each user has a few habitual tags. A post mixes the
//! two with occasional tags drawn straight from the global law, so popular
//! tags appear everywhere while most of the vocabulary stays in the tail.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FolksonomyPost, Label, Tag};
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_posts: usize,
    pub n_users: usize,
    pub n_resources: usize,
    pub vocab_size: usize,
    /// Zipf exponent of global tag popularity.
    pub tag_exponent: f64,
    /// Zipf exponent of resource popularity and user activity.
    pub activity_exponent: f64,
    pub tags_per_resource: usize,
    pub tags_per_user: usize,
    /// Post size is `1 + Poisson(mean_extra_tags)`, capped at `max_tags`.
    pub mean_extra_tags: f64,
    pub max_tags: usize,
    /// Probabilities of drawing a tag from the resource's list and from the
    /// user's habits; the remainder comes from the global law.
    pub resource_tag_prob: f64,
    pub user_tag_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_posts: 2000,
            n_users: 200,
            n_resources: 400,
            vocab_size: 3000,
            tag_exponent: 1.0,
            activity_exponent: 0.8,
            tags_per_resource: 10,
            tags_per_user: 4,
            mean_extra_tags: 2.0,
            max_tags: 50,
            resource_tag_prob: 0.6,
            user_tag_prob: 0.25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_posts", self.n_posts),
            ("n_users", self.n_users),
            ("n_resources", self.n_resources),
            ("vocab_size", self.vocab_size),
            ("tags_per_resource", self.tags_per_resource),
            ("tags_per_user", self.tags_per_user),
            ("max_tags", self.max_tags),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("synthetic.{name} must be >= 1")));
            }
        }
        if self.n_posts > self.n_users.saturating_mul(self.n_resources) / 2 {
            return Err(Error::invalid("synthetic.n_posts is too large for n_users x n_resources"));
        }
        if self.tags_per_resource > self.vocab_size || self.tags_per_user > self.vocab_size {
            return Err(Error::invalid("synthetic tag lists exceed the vocabulary"));
        }
        let probs = [self.resource_tag_prob, self.user_tag_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || probs.iter().sum::<f64>() > 1.0 {
            return Err(Error::invalid("synthetic tag probabilities must lie in [0,1] and sum to <= 1"));
        }
        for (name, v) in [
            ("tag_exponent", self.tag_exponent),
            ("activity_exponent", self.activity_exponent),
            ("mean_extra_tags", self.mean_extra_tags),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("synthetic.{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

pub fn tag_name(rank: usize) -> String {
    format!("t{rank:04}")
}

/// Zero-based rank drawn from a Zipf law over `n` items.
fn zipf_rank<R: rand::Rng>(z: &Zipf<f64>, rng: &mut R) -> usize {
    z.sample(rng) as usize - 1
}

fn distinct_ranks<R: rand::Rng>(z: &Zipf<f64>, n: usize, rng: &mut R) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r = zipf_rank(z, rng);
        if seen.insert(r) {
            out.push(r);
        }
    }
    out
}

pub fn synthetic_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let zipf = |n: usize, s: f64| Zipf::new(n as f64, s).map_err(|e| Error::invalid(format!("zipf: {e}")));
    let tags = zipf(cfg.vocab_size, cfg.tag_exponent)?;
    let resources = zipf(cfg.n_resources, cfg.activity_exponent)?;
    let users = zipf(cfg.n_users, cfg.activity_exponent)?;
    let resource_pick = zipf(cfg.tags_per_resource, 1.0)?;
    let extra = if cfg.mean_extra_tags > 0.0 {
        Some(Poisson::new(cfg.mean_extra_tags).map_err(|e| Error::invalid(format!("poisson: {e}")))?)
    } else {
        None
    };

    let mut rng = seeds::stream(cfg.seed, "synthetic", &[]);
    let resource_tags: Vec<Vec<usize>> = (0..cfg.n_resources)
        .map(|_| distinct_ranks(&tags, cfg.tags_per_resource, &mut rng))
        .collect();
    let user_tags: Vec<Vec<usize>> = (0..cfg.n_users)
        .map(|_| distinct_ranks(&tags, cfg.tags_per_user, &mut rng))
        .collect();

    let mut pairs = BTreeSet::new();
    let mut posts = Vec::with_capacity(cfg.n_posts);
    while posts.len() < cfg.n_posts {
        let u = zipf_rank(&users, &mut rng);
        let r = zipf_rank(&resources, &mut rng);
        if !pairs.insert((u, r)) {
            continue;
        }
        let size = extra
            .as_ref()
            .map_or(1, |p| 1 + p.sample(&mut rng) as usize)
            .min(cfg.max_tags);
        let mut chosen = BTreeSet::new();
        // Bounded retries: short resource and user lists can saturate.
        for _ in 0..size * 20 {
            if chosen.len() == size {
                break;
            }
            let x: f64 = rng.random();
            let t = if x < cfg.resource_tag_prob {
                resource_tags[r][zipf_rank(&resource_pick, &mut rng)]
            } else if x < cfg.resource_tag_prob + cfg.user_tag_prob {
                user_tags[u][rng.random_range(0..cfg.tags_per_user)]
            } else {
                zipf_rank(&tags, &mut rng)
            };
            chosen.insert(t);
        }
        let post_tags = chosen.into_iter().map(|t| Tag::new(&tag_name(t)).expect("generated tag is valid"));
        posts.push(FolksonomyPost::new(
            format!("user{u:04}"),
            format!("res{r:04}"),
            post_tags,
            Label::Legitimate,
        )?);
    }
    Ok(Corpus::new(posts))
}
