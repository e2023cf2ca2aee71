use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{Duration, FixedOffset, TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use memeguard::corpus::{Corpus, PostRecord};
use memeguard::labels::{Stage, Stage1Label};
use memeguard::metrics::fleiss_kappa;
use memeguard_annotation::{router, ManualClock, Service, ServiceConfig};

const TOKEN: &str = "test-admin-token";

fn corpus(dir: &Path, n: usize) -> Corpus {
    let records = (1..=n)
        .map(|i| {
            let id = format!("s{i:03}");
            std::fs::write(dir.join(format!("{id}.png")), format!("png-{id}")).unwrap();
            let mut p = PostRecord::new(&id, format!("{id}.png"));
            p.title = format!("title {id}");
            p.tags = vec!["tag".into()];
            p.ocr_text = "text".into();
            p
        })
        .collect();
    Corpus::new(dir, records)
}

fn start() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()
}

struct Harness {
    app: Router,
    clock: Arc<ManualClock>,
}

impl Harness {
    fn new(corpus: Corpus, config: ServiceConfig) -> Self {
        let clock = Arc::new(ManualClock::new(start()));
        let service = Arc::new(Service::in_memory(corpus, config, clock.clone()));
        Self {
            app: router(service, Some(TOKEN.into())),
            clock,
        }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, value)
    }

    async fn admin(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        self.call(method, uri, body, Some(TOKEN)).await
    }

    async fn next(&self, who: &str) -> Value {
        let (s, v) = self.call("GET", &format!("/api/tasks/next?annotator={who}"), None, None).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v
    }

    async fn submit(&self, who: &str, sample: &str, stage: &str, label: &str) -> StatusCode {
        self.call(
            "POST",
            "/api/annotations",
            Some(json!({"annotator": who, "sample": sample, "stage": stage, "label": label})),
            None,
        )
        .await
        .0
    }
}

fn ids(range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    range.map(|i| format!("s{i:03}")).collect()
}

/// Stage I votes per sample for annotators a, b, c.
fn stage1_votes(i: usize) -> [&'static str; 3] {
    match i % 3 {
        0 => ["toxic", "toxic", "toxic"],
        1 => ["toxic", "normal", "toxic"],
        _ => ["normal", "normal", "toxic"],
    }
}

fn stage2_votes(i: usize) -> [&'static str; 3] {
    match i % 3 {
        0 => ["hateful", "hateful", "offensive"],
        1 => ["hateful", "dangerous", "offensive"],
        _ => ["dangerous", "dangerous", "dangerous"],
    }
}

fn majority(v: [&str; 3]) -> &str {
    if v[0] == v[1] || v[0] == v[2] {
        v[0]
    } else if v[1] == v[2] {
        v[1]
    } else {
        "undecided"
    }
}

#[tokio::test]
async fn two_stage_walkthrough_matches_majority_vote() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(corpus(dir.path(), 9), ServiceConfig::default());
    let people = ["a", "b", "c"];
    let all = ids(1..=9);

    let (s, receipt) = h
        .admin(
            "POST",
            "/api/admin/batches",
            Some(json!({"stage": "I", "samples": all, "annotators": people})),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED, "{receipt}");
    assert_eq!(receipt["tasks_per_annotator"]["a"], 9);
    assert_eq!(receipt["load_spread"], 0);

    // every annotator works their queue through the API
    for (k, who) in people.iter().enumerate() {
        loop {
            let next = h.next(who).await;
            let Some(task) = next["task"].as_object() else {
                assert_eq!(next["reason"], "no pending tasks");
                break;
            };
            assert_eq!(task["allowed_labels"], json!(["toxic", "normal"]));
            assert!(task["definitions"]["toxic"].as_str().unwrap().contains("rude"));
            let sample = task["sample"].as_str().unwrap().to_string();
            let i: usize = sample[1..].parse().unwrap();
            assert_eq!(h.submit(who, &sample, "I", stage1_votes(i)[k]).await, StatusCode::CREATED);
        }
    }

    let (s, fin1) = h.admin("POST", "/api/admin/finalize?stage=I", None).await;
    assert_eq!(s, StatusCode::OK, "{fin1}");
    let mut toxic = Vec::new();
    for i in 1..=9 {
        let expected = majority(stage1_votes(i));
        assert_eq!(fin1["labels"][format!("s{i:03}")], expected);
        if expected == "toxic" {
            toxic.push(format!("s{i:03}"));
        }
    }
    assert_eq!(fin1["undecided"], json!([]));
    // finalize twice: same answer
    assert_eq!(h.admin("POST", "/api/admin/finalize?stage=I", None).await.1, fin1);

    // stage II cannot include stage-I-normal samples
    let normal: Vec<String> = ids(1..=9).into_iter().filter(|s| !toxic.contains(s)).collect();
    let (s, _) = h
        .admin(
            "POST",
            "/api/admin/batches",
            Some(json!({"stage": "II", "samples": [normal[0]], "annotators": people})),
        )
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = h
        .admin(
            "POST",
            "/api/admin/batches",
            Some(json!({"stage": "II", "samples": toxic, "annotators": people})),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
    for (k, who) in people.iter().enumerate() {
        while let Some(task) = h.next(who).await["task"].as_object().cloned() {
            assert_eq!(task["stage"], "II");
            let sample = task["sample"].as_str().unwrap().to_string();
            let i: usize = sample[1..].parse().unwrap();
            assert_eq!(h.submit(who, &sample, "II", stage2_votes(i)[k]).await, StatusCode::CREATED);
        }
    }
    let (s, fin2) = h.admin("POST", "/api/admin/finalize?stage=II", None).await;
    assert_eq!(s, StatusCode::OK);
    let mut undecided = Vec::new();
    for sample in &toxic {
        let i: usize = sample[1..].parse().unwrap();
        let expected = majority(stage2_votes(i));
        assert_eq!(fin2["labels"][sample], expected);
        if expected == "undecided" {
            undecided.push(sample.clone());
        }
    }
    assert!(!undecided.is_empty());
    assert_eq!(fin2["undecided"], json!(undecided));

    // agreement delegates to Fleiss over the same count matrix
    let (s, agreement) = h.admin("GET", "/api/admin/agreement?stage=I", None).await;
    assert_eq!(s, StatusCode::OK);
    let matrix: Vec<Vec<u32>> = (1..=9)
        .map(|i| {
            let v = stage1_votes(i);
            let t = v.iter().filter(|l| **l == "toxic").count() as u32;
            vec![t, 3 - t]
        })
        .collect();
    let oracle = fleiss_kappa(&matrix, &[]).unwrap();
    assert!((agreement["kappa"].as_f64().unwrap() - oracle.kappa).abs() < 1e-12);
    assert_eq!(agreement["n_items"], 9);
}

#[tokio::test]
async fn cap_is_enforced_at_the_fiftieth_submission_of_a_day() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        utc_offset: FixedOffset::east_opt(5 * 3600 + 1800).unwrap(),
        ..ServiceConfig::default()
    };
    let h = Harness::new(corpus(dir.path(), 52), config);
    let (s, _) = h
        .admin(
            "POST",
            "/api/admin/batches",
            Some(json!({"stage": "I", "samples": ids(1..=52), "annotators": ["a", "b", "c"]})),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
    // 18:00 local; the day ends in six hours
    h.clock.set(Utc.with_ymd_and_hms(2024, 3, 1, 12, 30, 0).unwrap());

    for i in 1..=49 {
        assert_eq!(h.submit("a", &format!("s{i:03}"), "I", "normal").await, StatusCode::CREATED);
    }
    let (_, p) = h.call("GET", "/api/progress?annotator=a", None, None).await;
    assert_eq!(p, json!({"annotator": "a", "submitted_today": 49, "cap": 50, "remaining_total": 3}));
    // 49 submitted: a task is still handed out
    assert_eq!(h.next("a").await["task"]["sample"], "s050");
    assert_eq!(h.submit("a", "s050", "I", "normal").await, StatusCode::CREATED);
    // the 50th closed the day
    let next = h.next("a").await;
    assert_eq!(next["task"], Value::Null);
    assert_eq!(next["reason"], "cap reached");
    assert_eq!(h.submit("a", "s051", "I", "normal").await, StatusCode::TOO_MANY_REQUESTS);
    // other annotators are unaffected
    assert_eq!(h.submit("b", "s001", "I", "toxic").await, StatusCode::CREATED);

    // 23:59 local is still the same day
    h.clock.advance(Duration::minutes(5 * 60 + 59));
    assert_eq!(h.submit("a", "s051", "I", "normal").await, StatusCode::TOO_MANY_REQUESTS);
    // local midnight rolls the counter over
    h.clock.advance(Duration::minutes(1));
    assert_eq!(h.next("a").await["task"]["sample"], "s051");
    assert_eq!(h.submit("a", "s051", "I", "normal").await, StatusCode::CREATED);
    let (_, p) = h.call("GET", "/api/progress?annotator=a", None, None).await;
    assert_eq!(p["submitted_today"], 1);
}

#[tokio::test]
async fn submissions_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = corpus(dir.path(), 4);
    c.records[3].stage1_label = Some(Stage1Label::Toxic);
    let h = Harness::new(c, ServiceConfig::default());
    let (s, _) = h
        .admin(
            "POST",
            "/api/admin/batches",
            Some(json!({"stage": "I", "assignments": [{"sample": "s001", "annotators": ["a", "b", "c"]}]})),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);

    assert_eq!(h.submit("a", "s001", "I", "toxic").await, StatusCode::CREATED);
    assert_eq!(h.submit("a", "s001", "I", "normal").await, StatusCode::CONFLICT);
    assert_eq!(h.submit("b", "s001", "I", "undecided").await, StatusCode::BAD_REQUEST);
    assert_eq!(h.submit("b", "s001", "I", "hateful").await, StatusCode::BAD_REQUEST);
    assert_eq!(h.submit("b", "s002", "I", "toxic").await, StatusCode::BAD_REQUEST);
    assert_eq!(h.submit("b", "nope", "I", "toxic").await, StatusCode::NOT_FOUND);
    assert_eq!(h.submit("zed", "s001", "I", "toxic").await, StatusCode::NOT_FOUND);
    let (s, _) = h.call("GET", "/api/tasks/next?annotator=zed", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.call("GET", "/api/tasks/next", None, None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = h
        .call("POST", "/api/annotations", Some(json!({"annotator": "a"})), None)
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    // finalization is blocked until every sample has three records
    let (s, v) = h.admin("POST", "/api/admin/finalize?stage=I", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["samples"], json!(["s001"]));

    // batch constraints
    let dup = json!({"stage": "I", "assignments": [{"sample": "s002", "annotators": ["a", "a", "b"]}]});
    assert_eq!(h.admin("POST", "/api/admin/batches", Some(dup)).await.0, StatusCode::BAD_REQUEST);
    let two = json!({"stage": "I", "assignments": [{"sample": "s002", "annotators": ["a", "b"]}]});
    assert_eq!(h.admin("POST", "/api/admin/batches", Some(two)).await.0, StatusCode::BAD_REQUEST);
    let again = json!({"stage": "I", "samples": ["s001"], "annotators": ["a", "b", "c"]});
    assert_eq!(h.admin("POST", "/api/admin/batches", Some(again)).await.0, StatusCode::CONFLICT);
    let unknown = json!({"stage": "I", "samples": ["zz"], "annotators": ["a", "b", "c"]});
    assert_eq!(h.admin("POST", "/api/admin/batches", Some(unknown)).await.0, StatusCode::NOT_FOUND);
    // a corpus that already carries stage I toxic can go straight to stage II
    let pre = json!({"stage": "II", "samples": ["s004"], "annotators": ["a", "b", "c"]});
    assert_eq!(h.admin("POST", "/api/admin/batches", Some(pre)).await.0, StatusCode::CREATED);
    assert_eq!(h.submit("c", "s004", "II", "offensive").await, StatusCode::CREATED);
    assert_eq!(h.submit("c", "s004", "II", "hateful").await, StatusCode::CONFLICT);
    assert_eq!(h.submit("b", "s004", "II", "toxic").await, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn admin_endpoints_need_the_bearer_token() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(corpus(dir.path(), 3), ServiceConfig::default());
    let body = json!({"stage": "I", "samples": ["s001"], "annotators": ["a", "b", "c"]});
    let (s, _) = h.call("POST", "/api/admin/batches", Some(body.clone()), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.call("POST", "/api/admin/batches", Some(body), Some("wrong")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.call("GET", "/api/admin/agreement?stage=I", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.call("POST", "/api/admin/finalize?stage=I", None, Some("x")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.admin("POST", "/api/admin/finalize?stage=III", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    // no token configured: admin surface closed even to a matching-looking header
    let clock = Arc::new(ManualClock::new(start()));
    let closed = router(
        Arc::new(Service::in_memory(corpus(dir.path(), 1), ServiceConfig::default(), clock)),
        None,
    );
    let req = Request::builder()
        .method("GET")
        .uri("/api/admin/ratings")
        .header("authorization", "Bearer ")
        .body(Body::empty())
        .unwrap();
    assert_eq!(closed.oneshot(req).await.unwrap().status(), StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn ratings_are_range_checked_and_averaged() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        rateable: Some(["s001".to_string(), "s002".to_string()].into()),
        ..ServiceConfig::default()
    };
    let h = Harness::new(corpus(dir.path(), 3), config);
    for who in ["a", "b", "c"] {
        let (s, _) = h
            .admin("POST", "/api/admin/annotators", Some(json!({"id": who, "handle": who, "daily_cap": 50, "active": true})))
            .await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let rate = |who: &'static str, sample: &'static str, c: i64, f: i64, g: i64| {
        json!({"annotator": who, "sample": sample, "completeness": c, "fluency": f, "grammar": g})
    };
    for (who, (c, f, g)) in [("a", (7, 8, 9)), ("b", (9, 9, 9)), ("c", (8, 8, 9))] {
        let (s, _) = h.call("POST", "/api/ratings", Some(rate(who, "s001", c, f, g)), None).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    assert_eq!(
        h.call("POST", "/api/ratings", Some(rate("a", "s001", 5, 5, 5)), None).await.0,
        StatusCode::CONFLICT
    );
    assert_eq!(
        h.call("POST", "/api/ratings", Some(rate("a", "s002", 0, 5, 5)), None).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        h.call("POST", "/api/ratings", Some(rate("a", "s002", 5, 11, 5)), None).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        h.call("POST", "/api/ratings", Some(rate("a", "s003", 5, 5, 5)), None).await.0,
        StatusCode::BAD_REQUEST
    );
    let (_, report) = h.admin("GET", "/api/admin/ratings", None).await;
    assert_eq!(report["n_ratings"], 3);
    assert!((report["completeness"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    assert!((report["fluency"].as_f64().unwrap() - 25.0 / 3.0).abs() < 1e-12);
    assert!((report["grammar"].as_f64().unwrap() - 9.0).abs() < 1e-12);

    let bad_handle = json!({"id": "d", "handle": "u/somebody", "daily_cap": 50, "active": true});
    assert_eq!(h.admin("POST", "/api/admin/annotators", Some(bad_handle)).await.0, StatusCode::BAD_REQUEST);
    let zero_cap = json!({"id": "d", "handle": "d", "daily_cap": 0, "active": true});
    assert_eq!(h.admin("POST", "/api/admin/annotators", Some(zero_cap)).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn media_and_payload_privacy() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(corpus(dir.path(), 3), ServiceConfig::default());
    let req = Request::builder().uri("/api/samples/s002/media").body(Body::empty()).unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"png-s002");
    let (s, _) = h.call("GET", "/api/samples/nope/media", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    h.admin(
        "POST",
        "/api/admin/batches",
        Some(json!({"stage": "I", "samples": ["s001"], "annotators": ["a", "b", "c"]})),
    )
    .await;
    let task = h.next("a").await["task"].clone();
    let keys: Vec<&str> = task.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["allowed_labels", "definitions", "image_url", "ocr_text", "sample", "stage", "tags", "title"]
    );
    assert_eq!(task["image_url"], "/api/samples/s001/media");
}

#[test]
fn even_load_six_samples_three_people() {
    let samples: Vec<String> = (1..=6).map(|i| format!("s{i}")).collect();
    let pool: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let assignments = memeguard_annotation::round_robin(&samples, &pool).unwrap();
    for who in &pool {
        assert_eq!(assignments.iter().filter(|a| a.annotators.contains(who)).count(), 6);
    }
    let pool5: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
    let many: Vec<String> = (0..7).map(|i| format!("s{i}")).collect();
    let a = memeguard_annotation::round_robin(&many, &pool5).unwrap();
    let loads: Vec<usize> = pool5
        .iter()
        .map(|p| a.iter().filter(|x| x.annotators.contains(p)).count())
        .collect();
    assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1);
    assert!(a.iter().all(|x| {
        let mut v = x.annotators.clone();
        v.sort();
        v.dedup();
        v.len() == 3
    }));
}

#[test]
fn journal_replay_restores_state() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 3);
    let path = dir.path().join("journal.jsonl");
    let clock = Arc::new(ManualClock::new(start()));
    {
        let svc = Service::open(c.clone(), ServiceConfig::default(), clock.clone(), path.clone()).unwrap();
        let batch: memeguard_annotation::BatchRequest = serde_json::from_value(
            json!({"stage": "I", "samples": ["s001", "s002", "s003"], "annotators": ["a", "b", "c"]}),
        )
        .unwrap();
        svc.create_batch(batch).unwrap();
        for sample in ["s001", "s002", "s003"] {
            for who in ["a", "b", "c"] {
                let input = serde_json::from_value(
                    json!({"annotator": who, "sample": sample, "stage": "I", "label": "toxic"}),
                )
                .unwrap();
                svc.submit_annotation(input).unwrap();
            }
        }
        svc.finalize(Stage::One).unwrap();
    }
    // simulate a crash halfway through an append
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"event\":\"annot");
    std::fs::write(&path, text).unwrap();

    let svc = Service::open(c, ServiceConfig::default(), clock, path.clone()).unwrap();
    assert_eq!(svc.records().len(), 9);
    assert_eq!(svc.progress("a").unwrap().submitted_today, 3);
    let labeled = svc.labeled_corpus();
    assert!(labeled.records.iter().all(|p| p.stage1_label == Some(Stage1Label::Toxic)));
    assert!((svc.agreement(Stage::One).unwrap().kappa - 1.0).abs() < 1e-12);
    // finalizing the unchanged stage again writes nothing new
    let before = std::fs::read_to_string(&path).unwrap().lines().count();
    svc.finalize(Stage::One).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), before);

    // a corrupt line in the middle is not silently skipped
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines.insert(1, "garbage".into());
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    assert!(Service::open(corpus(dir.path(), 3), ServiceConfig::default(), clock, path).is_err());
}
