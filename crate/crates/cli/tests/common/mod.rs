//! Fixture corpora, stub endpoint files and a runner for the `memeguard` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub const ENV_VARS: [&str; 9] = [
    "MEMEGUARD_CONFIG",
    "MEMEGUARD_BACKEND",
    "MEMEGUARD_STUB_FILE",
    "MEMEGUARD_CACHE_DIR",
    "MEMEGUARD_CACHE_MODE",
    "MEMEGUARD_PARALLELISM",
    "MEMEGUARD_TEMPLATES",
    "MEMEGUARD_SEED",
    "MEMEGUARD_ADMIN_TOKEN",
];

pub fn command() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memeguard"));
    for v in ENV_VARS {
        cmd.env_remove(v);
    }
    cmd
}

pub fn memeguard(args: &[&str]) -> Output {
    command().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Path as a `&str` argument. Leaked so argument vectors can mix paths built inline.
pub fn s(p: &Path) -> &'static str {
    Box::leak(p.to_str().expect("utf-8 path").to_owned().into_boxed_str())
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .expect("json")
}

pub fn read_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

/// One post of a fixture corpus.
pub struct Post {
    pub id: String,
    pub split: &'static str,
    pub stage1: &'static str,
    pub stage2: Option<&'static str>,
    pub tags: Vec<String>,
}

pub fn post(id: &str, split: &'static str, stage1: &'static str, stage2: Option<&'static str>) -> Post {
    Post {
        id: id.to_string(),
        split,
        stage1,
        stage2,
        tags: vec![format!("tag-{id}"), "shared".to_string()],
    }
}

/// Write a manifest plus one small distinct image file per post; returns the manifest path.
/// Titles read "marker {id} end" so stub rules can key on them.
pub fn write_corpus(dir: &Path, posts: &[Post]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut text = String::new();
    for p in posts {
        let image = format!("{}.png", p.id);
        std::fs::write(dir.join(&image), format!("image bytes of {}", p.id)).unwrap();
        let mut rec = json!({
            "id": p.id,
            "image_path": image,
            "title": format!("marker {} end", p.id),
            "ocr_text": "some overlaid words",
            "tags": p.tags,
            "comment_count": 3,
            "split": p.split,
            "stage1_label": p.stage1,
        });
        if let Some(l) = p.stage2 {
            rec["stage2_label"] = json!(l);
        }
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, text).unwrap();
    path
}

/// 6 toxic and 6 normal test posts, 3 toxic and 3 normal train posts.
pub fn stage1_posts() -> Vec<Post> {
    let mut v = Vec::new();
    for i in 1..=6 {
        v.push(post(&format!("t{i}"), "test", "toxic", Some("hateful")));
        v.push(post(&format!("n{i}"), "test", "normal", None));
    }
    for i in 1..=3 {
        v.push(post(&format!("pt{i}"), "train", "toxic", Some("offensive")));
        v.push(post(&format!("pn{i}"), "train", "normal", None));
    }
    v
}

/// Stub endpoint file answering every detection query with the gold stage I label.
pub fn oracle_stub(path: &Path, posts: &[Post]) {
    let rules: Vec<Value> = posts
        .iter()
        .map(|p| json!({"contains": format!("marker {} end", p.id), "reply": p.stage1}))
        .collect();
    write_stub(path, rules, None);
}

pub fn write_stub(path: &Path, rules: Vec<Value>, default: Option<&str>) {
    let spec = json!({"chat_rules": rules, "chat_default": default});
    std::fs::write(path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
}

/// Global flags selecting the stub backend with an on-disk cache.
pub fn stub_flags(stub: &Path, cache: &Path) -> Vec<&'static str> {
    vec!["--backend", "stub", "--stub-file", s(stub), "--cache-dir", s(cache)]
}
