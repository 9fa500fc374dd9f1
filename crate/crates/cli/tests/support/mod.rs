//! Helpers shared by the CLI integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/tweets.jsonl");

pub fn reshare<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_reshare")).args(args).output().expect("run reshare")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn timestamp(t: i64) -> String {
    chrono::DateTime::from_timestamp(t, 0).unwrap().format("%a %b %d %H:%M:%S +0000 %Y").to_string()
}

pub fn original(id: &str, t: i64, user: &str, followers: u64) -> String {
    json!({"id_str": id, "created_at": timestamp(t), "user": {"id_str": user, "followers_count": followers}}).to_string()
}

pub fn retweet(id: &str, t: i64, user: &str, followers: u64, source: &str, source_user: &str) -> String {
    json!({
        "id_str": id,
        "created_at": timestamp(t),
        "user": {"id_str": user, "followers_count": followers},
        "retweeted_status": {"id_str": source, "user": {"id_str": source_user}},
    })
    .to_string()
}

/// A shuffled dump of `lines` records: originals, their retweets and a few
/// retweets of sources missing from the dump.
pub fn synthetic_dump(lines: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(lines);
    let mut sources: Vec<(String, i64, String)> = Vec::new();
    let mut next_id = 10_000u64;
    while out.len() < lines {
        next_id += 1;
        let id = next_id.to_string();
        let roll: f64 = rng.gen();
        if sources.is_empty() || roll < 0.1 {
            let user = format!("{}", rng.gen_range(1..40));
            let t = 1_600_000_000 + rng.gen_range(0..1_000_000);
            out.push(original(&id, t, &user, rng.gen_range(1..10_000)));
            sources.push((id, t, user));
        } else if roll < 0.13 {
            let src = format!("missing{}", rng.gen_range(0..5));
            let t = 1_600_000_000 + rng.gen_range(0..1_000_000);
            out.push(retweet(&id, t, &format!("r{}", rng.gen_range(0..500)), rng.gen_range(0..1000), &src, "0"));
        } else {
            let (src, t0, user) = sources[rng.gen_range(0..sources.len())].clone();
            let t = t0 + rng.gen_range(0..100_000);
            out.push(retweet(&id, t, &format!("r{}", rng.gen_range(0..500)), rng.gen_range(0..1000), &src, &user));
        }
    }
    out.shuffle(&mut rng);
    out
}

/// Brute-force group-by on the source-id field: cascade key -> size.
pub fn group_by_source(lines: &[String]) -> BTreeMap<String, usize> {
    let mut sizes = BTreeMap::new();
    for line in lines {
        let Ok(v) = serde_json::from_str::<Value>(line) else { continue };
        let key = match v.pointer("/retweeted_status/id_str") {
            Some(Value::String(s)) => s.clone(),
            _ => v["id_str"].as_str().unwrap().to_string(),
        };
        *sizes.entry(key).or_insert(0) += 1;
    }
    sizes
}

/// Rows per `cascade_id` counted straight from CSV text.
pub fn rows_per_id(csv_text: &str) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for line in csv_text.lines().skip(1) {
        let id = line.split(',').next().unwrap().to_string();
        *counts.entry(id).or_insert(0) += 1;
    }
    counts
}
