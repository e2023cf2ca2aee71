use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::error::Error;

/// Image vectors per post id and tag vectors per tag, all unit-normalized.
struct Fixed {
    images: HashMap<String, EmbeddingVector>,
    tags: HashMap<String, EmbeddingVector>,
    scale: f64,
}

impl Fixed {
    fn new() -> Self {
        Self {
            images: HashMap::new(),
            tags: HashMap::new(),
            scale: 1.0,
        }
    }
    fn image(mut self, id: &str, v: Vec<f64>) -> Self {
        self.images.insert(id.into(), EmbeddingVector::normalized(v).unwrap());
        self
    }
    fn tag(mut self, t: &str, v: Vec<f64>) -> Self {
        self.tags.insert(t.into(), EmbeddingVector::normalized(v).unwrap());
        self
    }
}

impl SimilaritySource for Fixed {
    fn image_similarity(&self, q: &PostRecord, c: &PostRecord) -> Result<f64> {
        Ok(self.scale * self.images[&q.id].cosine(&self.images[&c.id]))
    }
    fn tag_similarity(&self, q: &[String], c: &[String]) -> Result<f64> {
        Ok(self.scale * tag_set_similarity(q, c, |t| Ok(self.tags[t].clone()))?)
    }
}

fn post(id: &str, tags: &[&str], split: Option<Split>) -> PostRecord {
    let mut p = PostRecord::new(id, format!("{id}.png"));
    p.tags = tags.iter().map(|t| t.to_string()).collect();
    p.split = split;
    p
}

fn unit(i: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

#[test]
fn tag_similarity_orthonormal_fixture() {
    let emb: HashMap<&str, Vec<f64>> = [
        ("t1", unit(1, 4)),
        ("t2", unit(3, 4)),
        ("e1", unit(0, 4)),
        ("e2", unit(1, 4)),
        ("e3", unit(2, 4)),
    ]
    .into();
    let embed = |t: &str| EmbeddingVector::normalized(emb[t].clone()).map_err(Error::from);
    let got = tag_set_similarity(&s(&["t1", "t2"]), &s(&["e1", "e2", "e3"]), embed).unwrap();
    assert!((got - 0.5).abs() < 1e-12);
    let reordered = tag_set_similarity(&s(&["t1", "t2"]), &s(&["e3", "e1", "e2"]), embed).unwrap();
    assert_eq!(got, reordered);
    assert!((tag_set_similarity(&s(&["e1"]), &s(&["e1"]), embed).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(tag_set_similarity(&[], &s(&["e1"]), embed).unwrap(), 0.0);
}

fn three_candidate_fixture() -> (PostRecord, Vec<PostRecord>, Fixed) {
    let q = post("q", &["a"], Some(Split::Test));
    let pool = vec![
        post("c1", &["a"], Some(Split::Train)),
        post("c2", &["b"], Some(Split::Train)),
        post("c3", &["a", "b"], Some(Split::Train)),
    ];
    let sim = Fixed::new()
        .image("q", vec![1.0, 0.0])
        .image("c1", vec![0.0, 1.0])
        .image("c2", vec![1.0, 0.2])
        .image("c3", vec![1.0, 1.0])
        .tag("a", vec![1.0, 0.0, 0.0])
        .tag("b", vec![0.6, 0.8, 0.0]);
    (q, pool, sim)
}

#[test]
fn top2_matches_brute_force() {
    let (q, pool, sim) = three_candidate_fixture();
    let refs: Vec<&PostRecord> = pool.iter().collect();
    for alpha in [0.0, 0.25, 0.5, 0.8, 1.0] {
        let strategy = SelectionStrategy::new(StrategyKind::ImageGtCombined, 2).with_alpha(alpha);
        let got: Vec<String> = select_exemplars(&q, &refs, &strategy, &sim, None)
            .unwrap()
            .into_iter()
            .map(|c| c.post_id)
            .collect();
        // brute force with hand-derived similarities
        let img = |id: &str| -> f64 {
            let v: [f64; 2] = match id {
                "c1" => [0.0, 1.0],
                "c2" => [1.0, 0.2],
                _ => [1.0, 1.0],
            };
            v[0] / (v[0] * v[0] + v[1] * v[1]).sqrt()
        };
        let tag = |id: &str| -> f64 {
            match id {
                "c1" | "c3" => 1.0,
                _ => 0.6,
            }
        };
        let mut all: Vec<(f64, &str)> =
            ["c1", "c2", "c3"].iter().map(|&id| (alpha * img(id) + (1.0 - alpha) * tag(id), id)).collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let expected: Vec<String> = all.iter().take(2).map(|x| x.1.to_string()).collect();
        assert_eq!(got, expected, "alpha {alpha}");
    }
}

#[test]
fn excludes_query_and_test_posts() {
    let (q, mut pool, sim) = three_candidate_fixture();
    pool.push(q.clone());
    let mut t = post("t", &["a"], Some(Split::Test));
    t.id = "c0".into();
    let sim = sim.image("c0", vec![1.0, 0.0]);
    pool.push(t);
    let refs: Vec<&PostRecord> = pool.iter().collect();
    let got = select_exemplars(&q, &refs, &SelectionStrategy::new(StrategyKind::Image, 3), &sim, None).unwrap();
    assert!(got.iter().all(|c| c.post_id != "q" && c.post_id != "c0"));
    assert!(select_exemplars(&q, &refs, &SelectionStrategy::new(StrategyKind::Image, 4), &sim, None).is_err());
}

#[test]
fn strategy_validation() {
    assert!(SelectionStrategy::new(StrategyKind::ImageGtCombined, 2).validate().is_err());
    assert!(SelectionStrategy::new(StrategyKind::Image, 2).with_alpha(0.5).validate().is_err());
    assert!(SelectionStrategy::new(StrategyKind::Image, 0).validate().is_err());
    assert!(SelectionStrategy::new(StrategyKind::Random, 2).validate().is_err());
    assert!(SelectionStrategy::new(StrategyKind::ImagePredCombined, 2).with_alpha(1.5).validate().is_err());
    assert_eq!("I_im".parse::<StrategyKind>().unwrap(), StrategyKind::Image);
    assert_eq!("image-gt-combined".parse::<StrategyKind>().unwrap(), StrategyKind::ImageGtCombined);
}

#[test]
fn predicted_tags_required() {
    let (q, pool, sim) = three_candidate_fixture();
    let refs: Vec<&PostRecord> = pool.iter().collect();
    let strategy = SelectionStrategy::new(StrategyKind::PredTags, 1);
    let mut predicted = PredictedTags::new();
    predicted.insert("q".into(), s(&["a"]));
    predicted.insert("c1".into(), s(&["b"]));
    predicted.insert("c2".into(), s(&["a"]));
    let err = select_exemplars(&q, &refs, &strategy, &sim, Some(&predicted)).unwrap_err();
    assert!(err.to_string().contains("c3"), "{err}");
    predicted.insert("c3".into(), vec![]);
    let got = select_exemplars(&q, &refs, &strategy, &sim, Some(&predicted)).unwrap();
    assert_eq!(got[0].post_id, "c2");
}

#[test]
fn tagless_pool_is_rejected_for_tag_kinds() {
    let (q, mut pool, sim) = three_candidate_fixture();
    for p in &mut pool {
        p.tags.clear();
    }
    let refs: Vec<&PostRecord> = pool.iter().collect();
    assert!(select_exemplars(&q, &refs, &SelectionStrategy::new(StrategyKind::GtTags, 1), &sim, None).is_err());
}

#[test]
fn random_is_seeded_per_query() {
    let pool: Vec<PostRecord> = (0..150).map(|i| post(&format!("p{i:03}"), &[], Some(Split::Train))).collect();
    let refs: Vec<&PostRecord> = pool.iter().collect();
    let q = post("q", &[], Some(Split::Test));
    let sim = Fixed::new();
    let pick = |seed: u64, refs: &[&PostRecord]| -> Vec<String> {
        let st = SelectionStrategy::new(StrategyKind::Random, 4).with_seed(seed);
        select_exemplars(&q, refs, &st, &sim, None).unwrap().into_iter().map(|c| c.post_id).collect()
    };
    let a = pick(7, &refs);
    assert_eq!(a, pick(7, &refs));
    let mut reversed = refs.clone();
    reversed.reverse();
    assert_eq!(a, pick(7, &reversed), "pool order must not matter");
    assert_eq!(a.iter().collect::<std::collections::BTreeSet<_>>().len(), 4);
    let distinct = (0..20u64).filter(|&s| pick(s, &refs) != a).count();
    assert!(distinct >= 19);
}

#[test]
fn alpha_search() {
    let (best, rows) = tune_alpha(|_| Ok((50.0, 10))).unwrap();
    assert_eq!(best, 0.0);
    assert_eq!(rows.len(), 11);
    let (best, _) = tune_alpha(|a| Ok((100.0 - (a - 0.3f64).abs() * 10.0, 10))).unwrap();
    assert!((best - 0.3).abs() < 1e-12);
    let (best, rows) = tune_alpha(|a| if a < 0.5 { Err(Error::invalid("boom")) } else { Ok((a, 1)) }).unwrap();
    assert_eq!(best, 1.0);
    assert!(rows[0].macro_f1.is_none() && rows[0].error.is_some());
    assert!(tune_alpha(|_| Err(Error::invalid("x"))).is_err());
    assert_eq!(alpha_grid(), [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
}

fn random_pool(seed: u64, n: usize) -> (PostRecord, Vec<PostRecord>, Fixed) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..8).map(|i| format!("tag{i}")).collect();
    let mut sim = Fixed::new();
    for t in &vocab {
        sim = sim.tag(t, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let mk = |id: String, rng: &mut rand_chacha::ChaCha8Rng, split| {
        let k = rng.random_range(1..4);
        let tags: Vec<&str> = (0..k).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        post(&id, &tags, split)
    };
    let q = mk("query".into(), &mut rng, Some(Split::Test));
    sim = sim.image("query", (0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
    let mut pool = Vec::new();
    for i in 0..n {
        let split = if i % 5 == 0 { Some(Split::Test) } else { Some(Split::Train) };
        let p = mk(format!("p{i}"), &mut rng, split);
        sim = sim.image(&p.id, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
        pool.push(p);
    }
    (q, pool, sim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn endpoints_and_convexity(seed in any::<u64>(), alpha in 0.0f64..=1.0, k in 1usize..5) {
        let (q, pool, sim) = random_pool(seed, 24);
        let refs: Vec<&PostRecord> = pool.iter().collect();
        let ids = |st: SelectionStrategy| -> Vec<String> {
            select_exemplars(&q, &refs, &st, &sim, None).unwrap().into_iter().map(|c| c.post_id).collect()
        };
        let combined = |a| SelectionStrategy::new(StrategyKind::ImageGtCombined, k).with_alpha(a);
        prop_assert_eq!(ids(combined(1.0)), ids(SelectionStrategy::new(StrategyKind::Image, k)));
        prop_assert_eq!(ids(combined(0.0)), ids(SelectionStrategy::new(StrategyKind::GtTags, k)));

        for c in score_candidates(&q, &refs, &combined(alpha), &sim, None).unwrap() {
            let (i, t) = (c.image_sim.unwrap(), c.tag_sim.unwrap());
            prop_assert!((c.combined - (alpha * i + (1.0 - alpha) * t)).abs() <= 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&i));
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&t));
            prop_assert!(c.post_id != "query");
            prop_assert!(pool.iter().find(|p| p.id == c.post_id).unwrap().split != Some(Split::Test));
        }
    }

    #[test]
    fn positive_scaling_keeps_selection(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let (q, pool, mut sim) = random_pool(seed, 20);
        let refs: Vec<&PostRecord> = pool.iter().collect();
        let st = SelectionStrategy::new(StrategyKind::ImageGtCombined, 3).with_alpha(0.4);
        let base: Vec<String> =
            select_exemplars(&q, &refs, &st, &sim, None).unwrap().into_iter().map(|c| c.post_id).collect();
        sim.scale = scale;
        let scaled: Vec<String> =
            select_exemplars(&q, &refs, &st, &sim, None).unwrap().into_iter().map(|c| c.post_id).collect();
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn self_similarity_is_one(seed in any::<u64>()) {
        let (q, _, sim) = random_pool(seed, 1);
        let v = sim.tag_similarity(&q.tags, &q.tags).unwrap();
        prop_assert!((v - 1.0).abs() < 1e-6);
    }
}
