use std::path::Path;
use std::sync::Arc;

use memeguard::corpus::{Corpus, PostRecord, Split};
use memeguard::detect::{
    build_prompt, gold_label, read_predictions, score_records, DetectionConfig, Harness, PredictionStatus,
    PromptTags, Shot, UnparsedPolicy,
};
use memeguard::exemplar::{SelectionStrategy, SimilaritySource, StrategyKind};
use memeguard::gateway::stub::{ChatRule, StubBackend, StubSpec};
use memeguard::gateway::{Gateway, Role};
use memeguard::labels::{LabelSpace, Stage1Label, Stage2Label};
use memeguard::metrics::macro_f1;
use memeguard::templates::TemplateSet;
use memeguard::Result;

/// Similarity from the numeric suffix of the id, so rankings are fixed and easy to reason about.
struct ByNumber;

fn number(id: &str) -> f64 {
    id.trim_start_matches(|c: char| !c.is_ascii_digit()).parse().unwrap_or(0.0)
}

impl SimilaritySource for ByNumber {
    fn image_similarity(&self, q: &PostRecord, c: &PostRecord) -> Result<f64> {
        Ok(1.0 / (1.0 + (number(&q.id) - number(&c.id)).abs()))
    }
    fn tag_similarity(&self, q: &[String], c: &[String]) -> Result<f64> {
        Ok(if q == c { 1.0 } else { 0.5 })
    }
}

fn post(dir: &Path, id: &str, split: Split, s1: Stage1Label, s2: Option<Stage2Label>) -> PostRecord {
    let image = format!("{id}.png");
    std::fs::write(dir.join(&image), id.as_bytes()).unwrap();
    let mut p = PostRecord::new(id, image);
    p.title = format!("marker {id} end");
    p.ocr_text = "some words".into();
    p.tags = vec![format!("tag-{id}")];
    p.split = Some(split);
    p.stage1_label = Some(s1);
    p.stage2_label = s2;
    p
}

/// 6 toxic + 6 normal test posts, 4 labeled train posts.
fn stage1_corpus(dir: &Path) -> Corpus {
    let mut records = Vec::new();
    for i in 1..=6 {
        records.push(post(dir, &format!("t{i}"), Split::Test, Stage1Label::Toxic, Some(Stage2Label::Hateful)));
        records.push(post(dir, &format!("n{i}"), Split::Test, Stage1Label::Normal, None));
    }
    for i in 1..=2 {
        records.push(post(dir, &format!("pt{i}"), Split::Train, Stage1Label::Toxic, Some(Stage2Label::Offensive)));
        records.push(post(dir, &format!("pn{i}"), Split::Train, Stage1Label::Normal, None));
    }
    Corpus::new(dir, records)
}

fn stub_gateway(rules: Vec<(String, &str)>, default: Option<&str>) -> Gateway {
    let spec = StubSpec {
        chat_rules: rules
            .into_iter()
            .map(|(contains, reply)| ChatRule {
                model: None,
                contains,
                reply: reply.to_string(),
            })
            .collect(),
        chat_default: default.map(str::to_string),
        ..StubSpec::default()
    };
    Gateway::builder().chat_arc(Arc::new(StubBackend::new(spec))).parallelism(4).build()
}

fn oracle_gateway(corpus: &Corpus, space: &LabelSpace) -> Gateway {
    let rules = corpus
        .records
        .iter()
        .filter_map(|p| Some((format!("marker {} end", p.id), gold_label(space, p)?)))
        .map(|(k, v)| (k, Box::leak(v.into_boxed_str()) as &str))
        .collect();
    stub_gateway(rules, None)
}

fn config(space: LabelSpace) -> DetectionConfig {
    DetectionConfig::new(space, SelectionStrategy::new(StrategyKind::Image, 2), "detector")
}

#[test]
fn oracle_endpoint_scores_one_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    let space = LabelSpace::stage1();
    let gw = oracle_gateway(&corpus, &space);
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let out = harness.run_benchmark(&config(space)).unwrap();
    assert_eq!(out.records.len(), 12);
    assert!(!out.invalid);
    assert!((out.report.macro_f1() - 100.0).abs() < 1e-9);
    for r in &out.records {
        assert_eq!(r.status, PredictionStatus::Ok);
        assert_eq!(r.exemplar_ids.len(), 2);
        assert!(!r.exemplar_ids.contains(&r.post_id));
        assert!(r.exemplar_ids.iter().all(|id| id.starts_with('p')));
    }
}

#[test]
fn hand_built_confusion_matches_hand_computed_f1() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    // toxic: t1..t4 right, t5 t6 called normal; normal: n1..n5 right, n6 called toxic
    let mut rules: Vec<(String, &str)> = Vec::new();
    for i in 1..=6 {
        rules.push((format!("marker t{i} end"), if i <= 4 { "Toxic." } else { "normal" }));
        rules.push((format!("marker n{i} end"), if i <= 5 { "It is normal" } else { "toxic" }));
    }
    let gw = stub_gateway(rules, None);
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let out = harness.run_benchmark(&config(LabelSpace::stage1())).unwrap();
    // toxic: tp 4, fp 1, fn 2 -> 8/11; normal: tp 5, fp 2, fn 1 -> 10/13
    let expected = (8.0 / 11.0 + 10.0 / 13.0) / 2.0 * 100.0;
    assert!((out.report.macro_f1() - expected).abs() < 1e-9, "{}", out.report.macro_f1());
    assert!((out.report.per_class["toxic"].f1 - 8.0 / 11.0).abs() < 1e-12);
    assert!((out.report.per_class["normal"].f1 - 10.0 / 13.0).abs() < 1e-12);
}

#[test]
fn prediction_file_rescored_gives_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    let gw = stub_gateway(vec![("marker t".into(), "toxic")], Some("toxic"));
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let cfg = config(LabelSpace::stage1());
    let out = harness.run_benchmark(&cfg).unwrap();
    let path = dir.path().join("predictions.jsonl");
    out.write_predictions(&path).unwrap();

    let (header, records) = read_predictions(&path).unwrap();
    assert_eq!(header.config, cfg);
    assert_eq!(header.config_digest, cfg.digest(&templates));
    assert_eq!(header.n_queries, 12);
    assert_eq!(records, out.records);
    let ids: Vec<_> = records.iter().map(|r| r.post_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    let (again, invalid) = score_records(&header.config, &records, &header.config_digest).unwrap();
    assert!(!invalid);
    assert_eq!(again, out.report);
    // and the plain metric over the persisted pairs agrees
    let pairs: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.gold.clone(), r.predicted.clone().unwrap()))
        .collect();
    let direct = macro_f1(&pairs, &["toxic", "normal"]).unwrap();
    assert_eq!(direct.macro_f1(), out.report.macro_f1());
}

#[test]
fn reruns_produce_identical_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    let space = LabelSpace::stage1();
    let gw = oracle_gateway(&corpus, &space);
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let cfg = config(space);
    let a = harness.run_benchmark(&cfg).unwrap();
    let b = harness.run_benchmark(&cfg).unwrap();
    let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
    a.write_report(&pa).unwrap();
    b.write_report(&pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
}

#[test]
fn unparseable_answers_follow_the_policy() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    // n6 gets an ambiguous answer on both attempts; everything else is right
    let mut rules = vec![("marker n6 end".to_string(), "toxic or normal")];
    rules.push(("marker t".into(), "toxic"));
    let gw = stub_gateway(rules, Some("normal"));
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };

    let strict = harness.run_benchmark(&config(LabelSpace::stage1())).unwrap();
    let bad = strict.records.iter().find(|r| r.post_id == "n6").unwrap();
    assert_eq!(bad.status, PredictionStatus::Unparsed);
    assert_eq!(bad.raw, "toxic or normal");
    // normal: tp 5, fn 1 -> 10/11; toxic: tp 6 -> 1
    let expected = (1.0 + 10.0 / 11.0) / 2.0 * 100.0;
    assert!((strict.report.macro_f1() - expected).abs() < 1e-9);
    assert!(!strict.invalid, "1 of 12 is under the 10% bar? {}", strict.report.metrics["failure_rate"]);

    let mut cfg = config(LabelSpace::stage1());
    cfg.policy = UnparsedPolicy::Drop;
    let dropped = harness.run_benchmark(&cfg).unwrap();
    assert!((dropped.report.macro_f1() - 100.0).abs() < 1e-9);
    assert_eq!(dropped.report.metrics["n"], 11.0);
}

#[test]
fn too_many_failures_mark_the_run_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    let rules = vec![
        ("marker n5 end".to_string(), "no idea"),
        ("marker n6 end".to_string(), "no idea"),
    ];
    let gw = stub_gateway(rules, Some("toxic"));
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let out = harness.run_benchmark(&config(LabelSpace::stage1())).unwrap();
    assert!(out.invalid);
    assert_eq!(out.report.metrics["invalid"], 1.0);
    assert!(out.report.warnings.iter().any(|w| w.contains("2 of 12")));
}

#[test]
fn endpoint_errors_are_recorded_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    // no default reply: anything unmatched is a 404 from the stub
    let gw = stub_gateway(vec![("marker t".into(), "toxic")], None);
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let out = harness.run_benchmark(&config(LabelSpace::stage1())).unwrap();
    assert_eq!(out.records.len(), 12);
    let failed = out.records.iter().filter(|r| r.status == PredictionStatus::Failed).count();
    assert_eq!(failed, 6);
    assert!(out.records.iter().filter(|r| r.error.is_some()).all(|r| r.post_id.starts_with('n')));
    assert!(out.invalid);
}

#[test]
fn stage2_population_excludes_normal_and_undecided() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let records = vec![
        post(d, "a1", Split::Test, Stage1Label::Toxic, Some(Stage2Label::Hateful)),
        post(d, "a2", Split::Test, Stage1Label::Toxic, Some(Stage2Label::Dangerous)),
        post(d, "a3", Split::Test, Stage1Label::Toxic, Some(Stage2Label::Undecided)),
        post(d, "a4", Split::Test, Stage1Label::Normal, None),
        post(d, "a5", Split::Test, Stage1Label::Toxic, Some(Stage2Label::Offensive)),
        post(d, "b1", Split::Train, Stage1Label::Toxic, Some(Stage2Label::Offensive)),
        post(d, "b2", Split::Train, Stage1Label::Toxic, Some(Stage2Label::Undecided)),
        post(d, "b3", Split::Train, Stage1Label::Normal, None),
    ];
    let corpus = Corpus::new(d, records);
    let space = LabelSpace::stage2();
    let gw = oracle_gateway(&corpus, &space);
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let ids = |v: Vec<&PostRecord>| v.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(harness.eligible_queries(&space)), ["a1", "a2", "a5"]);
    assert_eq!(ids(harness.exemplar_pool(&space)), ["b1"]);

    let mut cfg = config(space);
    cfg.strategy.k = 1;
    let out = harness.run_benchmark(&cfg).unwrap();
    assert_eq!(out.records.len(), 3);
    assert!((out.report.macro_f1() - 100.0).abs() < 1e-9);
    assert!(out.records.iter().all(|r| r.exemplar_ids == ["b1"]));
}

#[test]
fn fhm_labels_read_as_hateful_and_not_hateful() {
    let space = LabelSpace::fhm();
    let mut p = PostRecord::new("x", "x.png");
    p.stage1_label = Some(Stage1Label::Toxic);
    p.stage2_label = Some(Stage2Label::Hateful);
    assert_eq!(gold_label(&space, &p).as_deref(), Some("hateful"));
    p.stage2_label = Some(Stage2Label::Offensive);
    assert_eq!(gold_label(&space, &p), None);
    p.stage1_label = Some(Stage1Label::Normal);
    p.stage2_label = None;
    assert_eq!(gold_label(&space, &p).as_deref(), Some("not-hateful"));
}

#[test]
fn prompt_layout() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    let templates = TemplateSet::default();
    let space = LabelSpace::stage1();
    let q = corpus.get("t1").unwrap();
    let e1 = corpus.get("pt1").unwrap();
    let e2 = corpus.get("pn1").unwrap();
    let tags = vec!["nazi".to_string(), "ww2".to_string()];
    let shots = [
        Shot { post: e1, tags: Some(&tags), label: Some("toxic") },
        Shot { post: e2, tags: Some(&[]), label: Some("normal") },
    ];
    let query = Shot { post: q, tags: None, label: None };
    let req = build_prompt(&templates, &space, "detector", &corpus, &query, &shots, false).unwrap();

    assert_eq!(req.temperature, 0.001);
    assert_eq!(req.max_new_tokens, 30);
    let roles: Vec<Role> = req.messages.iter().map(|m| m.role).collect();
    assert_eq!(
        roles,
        [Role::System, Role::User, Role::Assistant, Role::User, Role::Assistant, Role::User]
    );
    let system = &req.messages[0].text;
    assert!(system.contains("rude, disrespectful, or unreasonable comment"));
    assert!(system.contains("toxic or normal"));
    assert_eq!(req.messages[2].text, "toxic");
    assert_eq!(req.messages[4].text, "normal");
    assert!(req.messages[1].text.contains("nazi, ww2"));
    assert!(req.messages[1].text.contains("marker pt1 end"));
    let last = req.messages.last().unwrap();
    assert!(last.text.contains("marker t1 end"));
    assert!(!last.text.contains("toxic"));
    assert_eq!(last.images.len(), 1);
    assert!(req.messages.iter().filter(|m| m.role == Role::User).all(|m| m.images.len() == 1));

    let stage2 = build_prompt(&templates, &LabelSpace::stage2(), "detector", &corpus, &query, &[], false).unwrap();
    assert!(stage2.messages[0].text.contains("hateful, dangerous or offensive"));

    let strict = build_prompt(&templates, &space, "detector", &corpus, &query, &shots, true).unwrap();
    assert_eq!(strict.messages.last(), req.messages.last());
    assert!(strict.messages[0].text.len() > system.len());

    let unlabeled = [Shot { post: e1, tags: None, label: None }];
    let err = build_prompt(&templates, &space, "detector", &corpus, &query, &unlabeled, false).unwrap_err();
    assert!(err.to_string().contains("pt1"));
}

#[test]
fn prompt_tags_follow_the_strategy() {
    let s = |k| SelectionStrategy::new(k, 2);
    assert_eq!(PromptTags::for_strategy(&s(StrategyKind::Random)), PromptTags::None);
    assert_eq!(PromptTags::for_strategy(&s(StrategyKind::Image)), PromptTags::None);
    assert_eq!(PromptTags::for_strategy(&s(StrategyKind::GtTags)), PromptTags::GroundTruth);
    assert_eq!(PromptTags::for_strategy(&s(StrategyKind::ImagePredCombined)), PromptTags::Predicted);
}

#[test]
fn alpha_tuning_walks_the_grid_on_validation_posts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = stage1_corpus(dir.path());
    let space = LabelSpace::stage1();
    let gw = oracle_gateway(&corpus, &space);
    let templates = TemplateSet::default();
    let harness = Harness {
        gateway: &gw,
        templates: &templates,
        corpus: &corpus,
        similarity: &ByNumber,
        predicted: None,
    };
    let pool = harness.exemplar_pool(&space);
    let validation: Vec<&PostRecord> = harness
        .eligible_queries(&space)
        .into_iter()
        .filter(|p| number(&p.id) <= 3.0)
        .collect();
    let base = DetectionConfig::new(
        space.clone(),
        SelectionStrategy::new(StrategyKind::ImageGtCombined, 2),
        "detector",
    );
    let (alpha, rows) = harness.tune_alpha(&base, &validation, &pool).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(alpha, 0.0, "all grid points tie, smallest wins");
    assert!(rows.iter().all(|r| r.macro_f1 == Some(100.0) && r.n_eval == 6));

    assert!(harness.tune_alpha(&config(space.clone()), &validation, &pool).is_err());
    let overlapping: Vec<&PostRecord> = pool.iter().take(1).copied().collect();
    assert!(harness.tune_alpha(&base, &overlapping, &pool).is_err());
}
