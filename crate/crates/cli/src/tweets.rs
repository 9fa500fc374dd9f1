//! Raw tweet dumps (one JSON object per line) to reshare cascades.
//!
//! Retweets are grouped under the id of their source tweet. A group whose
//! source record is in the dump starts at the source's timestamp with the
//! source author's follower count as its first mark. A group whose source is
//! missing is kept as an orphan cascade anchored at its earliest retweet.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use reshare_core::{Cascade, Error, MarkedEvent};

use crate::compare_ids;
use crate::error::{CliError, Result};

/// Dotted JSON paths of the fields read from each record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMapping {
    pub tweet_id: String,
    pub created_at: String,
    pub followers: String,
    pub user_id: String,
    /// Id of the retweeted source; absent or null for original posts.
    pub source_id: String,
    /// Author of the retweeted source; used as the initiator of orphans.
    pub source_user_id: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            tweet_id: "id_str".into(),
            created_at: "created_at".into(),
            followers: "user.followers_count".into(),
            user_id: "user.id_str".into(),
            source_id: "retweeted_status.id_str".into(),
            source_user_id: "retweeted_status.user.id_str".into(),
        }
    }
}

impl FieldMapping {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::from_json(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tweet {
    pub id: String,
    /// Seconds since the Unix epoch.
    pub time: f64,
    pub user_id: String,
    pub followers: f64,
    pub source_id: Option<String>,
    pub source_user_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseSummary {
    /// Non-blank input lines.
    pub lines: usize,
    /// Unique parsed tweets.
    pub tweets: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub originals: usize,
    pub retweets: usize,
    pub users: usize,
    pub cascades: usize,
    pub orphan_cascades: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    /// Largest follower count seen on the user's tweets.
    pub followers_count: f64,
    pub tweets: usize,
    /// Non-orphan cascades the user started.
    pub cascades_initiated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTweets {
    pub cascades: Vec<Cascade>,
    pub users: Vec<UserRecord>,
    pub summary: ParseSummary,
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |node, key| node.get(key)).filter(|x| !x.is_null())
}

fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) if n.is_u64() || n.is_i64() => Some(n.to_string()),
        _ => None,
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Twitter's `Wed Oct 10 20:19:24 +0000 2018`, RFC 3339, or epoch seconds.
pub fn parse_timestamp(v: &Value) -> Option<f64> {
    let s = match v {
        Value::Number(n) => return n.as_f64().filter(|t| t.is_finite()),
        Value::String(s) => s.trim(),
        _ => return None,
    };
    let dt = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y")
        .or_else(|_| DateTime::parse_from_rfc3339(s))
        .ok();
    match dt {
        Some(dt) => Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9),
        None => s.parse::<f64>().ok().filter(|t| t.is_finite()),
    }
}

/// One record, or `None` when a required field is missing or invalid.
pub fn parse_record(line: &str, mapping: &FieldMapping) -> Option<Tweet> {
    let v: Value = serde_json::from_str(line).ok()?;
    if !v.is_object() {
        return None;
    }
    let followers = as_number(lookup(&v, &mapping.followers)?)?;
    if !(followers >= 0.0 && followers.is_finite()) {
        return None;
    }
    Some(Tweet {
        id: as_id(lookup(&v, &mapping.tweet_id)?)?,
        time: parse_timestamp(lookup(&v, &mapping.created_at)?)?,
        user_id: as_id(lookup(&v, &mapping.user_id)?)?,
        followers,
        source_id: lookup(&v, &mapping.source_id).and_then(as_id),
        source_user_id: lookup(&v, &mapping.source_user_id).and_then(as_id),
    })
}

/// Delay given to reshares stamped at or before their cascade's first
/// event: half of Twitter's one-second timestamp resolution.
pub const TIED_RESHARE_DELAY: f64 = 0.5;

fn event(t: &Tweet, time: f64) -> MarkedEvent {
    MarkedEvent::new(time, t.followers).with_user(t.user_id.clone())
}

fn build_cascade(source: Option<&Tweet>, mut retweets: Vec<&Tweet>, id: &str) -> Result<Cascade> {
    retweets.sort_by(|a, b| a.time.total_cmp(&b.time).then_with(|| compare_ids(&a.id, &b.id)));
    let (origin, mut events, rest) = match source {
        Some(s) => (s.time, vec![event(s, 0.0)], &retweets[..]),
        None => (retweets[0].time, vec![event(retweets[0], 0.0)], &retweets[1..]),
    };
    // a reshare tied with (or stamped before) the first event cannot have
    // been excited by it; place it between the first event and the next one
    let first_gap = rest.iter().map(|t| t.time - origin).find(|&dt| dt > 0.0);
    let tied = first_gap.map_or(TIED_RESHARE_DELAY, |g| (g / 2.0).min(TIED_RESHARE_DELAY));
    events.extend(rest.iter().map(|t| {
        let dt = t.time - origin;
        event(t, if dt > 0.0 { dt } else { tied })
    }));
    let mut cascade = Cascade::new(id, events, None)?;
    if source.is_none() {
        cascade.orphan = true;
        cascade.initiator_user_id = retweets.iter().find_map(|t| t.source_user_id.clone());
    }
    Ok(cascade)
}

/// Groups parsed tweets into cascades. Input order does not matter.
pub fn cascades_from_tweets(tweets: &[Tweet]) -> Result<(Vec<Cascade>, Vec<UserRecord>)> {
    let mut sources: HashMap<&str, &Tweet> = HashMap::new();
    let mut groups: HashMap<&str, Vec<&Tweet>> = HashMap::new();
    for t in tweets {
        match &t.source_id {
            Some(s) => groups.entry(s.as_str()).or_default().push(t),
            None => {
                sources.insert(t.id.as_str(), t);
            }
        }
    }
    let mut ids: Vec<&str> = sources.keys().chain(groups.keys()).copied().collect();
    ids.sort_by(|a, b| compare_ids(a, b));
    ids.dedup();
    let mut cascades = Vec::with_capacity(ids.len());
    let mut initiated: HashMap<&str, usize> = HashMap::new();
    for id in ids {
        let source = sources.get(id).copied();
        let retweets = groups.remove(id).unwrap_or_default();
        if let Some(s) = source {
            *initiated.entry(s.user_id.as_str()).or_default() += 1;
        }
        cascades.push(build_cascade(source, retweets, id)?);
    }
    let mut users: HashMap<&str, UserRecord> = HashMap::new();
    for t in tweets {
        let u = users.entry(t.user_id.as_str()).or_insert_with(|| UserRecord {
            user_id: t.user_id.clone(),
            followers_count: 0.0,
            tweets: 0,
            cascades_initiated: initiated.get(t.user_id.as_str()).copied().unwrap_or(0),
        });
        u.followers_count = u.followers_count.max(t.followers);
        u.tweets += 1;
    }
    let mut users: Vec<UserRecord> = users.into_values().collect();
    users.sort_by(|a, b| compare_ids(&a.user_id, &b.user_id));
    Ok((cascades, users))
}

/// Parses newline-delimited tweet records. Malformed lines are skipped and
/// counted; repeated tweet ids keep their first record.
pub fn parse_tweet_lines<R: BufRead>(reader: R, mapping: &FieldMapping, source: &str) -> Result<ParsedTweets> {
    let mut summary = ParseSummary::default();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut tweets = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| CliError::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        summary.lines += 1;
        match parse_record(&line, mapping) {
            None => summary.malformed += 1,
            Some(t) => {
                if seen.insert(t.id.clone(), ()).is_some() {
                    summary.duplicates += 1;
                    continue;
                }
                if t.source_id.is_some() {
                    summary.retweets += 1;
                } else {
                    summary.originals += 1;
                }
                tweets.push(t);
            }
        }
    }
    if tweets.is_empty() {
        return Err(Error::EmptyInput(String::from("no parseable records")).into());
    }
    let (cascades, users) = cascades_from_tweets(&tweets)?;
    summary.tweets = tweets.len();
    summary.users = users.len();
    summary.cascades = cascades.len();
    summary.orphan_cascades = cascades.iter().filter(|c| c.orphan).count();
    Ok(ParsedTweets {
        cascades,
        users,
        summary,
    })
}

pub fn parse_raw_tweets(path: &Path, mapping: &FieldMapping) -> Result<ParsedTweets> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_tweet_lines(BufReader::new(file), mapping, &path.display().to_string())
}

pub fn write_users_csv(path: &Path, users: &[UserRecord]) -> Result<()> {
    let file = crate::create_file(path)?;
    let mut w = csv::Writer::from_writer(file);
    let write = |w: &mut csv::Writer<File>| -> csv::Result<()> {
        w.write_record(["user_id", "followers_count", "tweets", "cascades_initiated"])?;
        for u in users {
            w.write_record([
                u.user_id.clone(),
                crate::csv_io::fmt_f64(u.followers_count),
                u.tweets.to_string(),
                u.cascades_initiated.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| CliError::from_csv(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, t: &str, user: &str, followers: u64, source: Option<(&str, &str)>) -> String {
        let mut v = serde_json::json!({
            "id_str": id,
            "created_at": t,
            "user": {"id_str": user, "followers_count": followers},
        });
        if let Some((sid, suser)) = source {
            v["retweeted_status"] = serde_json::json!({"id_str": sid, "user": {"id_str": suser}});
        }
        v.to_string()
    }

    fn parse(lines: &[String]) -> Result<ParsedTweets> {
        parse_tweet_lines(lines.join("\n").as_bytes(), &FieldMapping::default(), "test")
    }

    #[test]
    fn three_line_fixture() {
        let lines = vec![
            line("1", "Wed Oct 10 20:19:24 +0000 2018", "a", 50, None),
            line("2", "Wed Oct 10 20:19:34 +0000 2018", "b", 5, Some(("1", "a"))),
            line("3", "Wed Oct 10 20:20:34 +0000 2018", "c", 7, Some(("1", "a"))),
        ];
        let p = parse(&lines).unwrap();
        assert_eq!(p.summary.tweets, 3);
        assert_eq!(p.summary.cascades, 1);
        let c = &p.cascades[0];
        assert_eq!(c.times().collect::<Vec<_>>(), vec![0.0, 10.0, 70.0]);
        assert_eq!(c.magnitudes().collect::<Vec<_>>(), vec![50.0, 5.0, 7.0]);
        assert_eq!(c.initiator_user_id.as_deref(), Some("a"));
        assert!(!c.orphan);
        assert_eq!(p.users.iter().map(|u| u.cascades_initiated).collect::<Vec<_>>(), vec![1, 0, 0]);
    }

    #[test]
    fn orphan_is_anchored_at_earliest_retweet() {
        let lines = vec![
            line("8", "2020-03-01T00:01:40Z", "y", 3, Some(("99", "src"))),
            line("7", "2020-03-01T00:00:10Z", "x", 2, Some(("99", "src"))),
        ];
        let p = parse(&lines).unwrap();
        let c = &p.cascades[0];
        assert!(c.orphan);
        assert_eq!(c.times().collect::<Vec<_>>(), vec![0.0, 90.0]);
        assert_eq!(c.initiator_user_id.as_deref(), Some("src"));
        assert_eq!(p.summary.orphan_cascades, 1);
    }

    #[test]
    fn reshares_tied_with_the_first_event_follow_it() {
        let lines = vec![
            line("1", "2020-03-01T00:00:10Z", "a", 50, None),
            line("2", "2020-03-01T00:00:10Z", "b", 5, Some(("1", "a"))),
            line("3", "2020-03-01T00:00:09Z", "c", 5, Some(("1", "a"))),
            line("4", "2020-03-01T00:00:10.2Z", "d", 5, Some(("1", "a"))),
            line("5", "2020-03-01T00:00:40Z", "e", 5, Some(("1", "a"))),
            line("6", "2020-03-01T00:00:00Z", "f", 5, Some(("9", "z"))),
            line("7", "2020-03-01T00:00:00Z", "g", 5, Some(("9", "z"))),
        ];
        let p = parse(&lines).unwrap();
        let times: Vec<f64> = p.cascades[0].times().collect();
        assert_eq!(times.len(), 5);
        assert_eq!(times[0], 0.0);
        assert_eq!(times[1], times[2]);
        for (got, want) in times.iter().zip([0.0, 0.1, 0.1, 0.2, 30.0]) {
            assert!((got - want).abs() < 1e-6, "{times:?}");
        }
        assert_eq!(p.cascades[1].times().collect::<Vec<_>>(), vec![0.0, TIED_RESHARE_DELAY]);
    }

    #[test]
    fn malformed_lines_are_counted() {
        let lines = vec![
            "not json".to_string(),
            "{\"id_str\": \"1\"}".to_string(),
            "[1, 2]".to_string(),
            line("1", "1583020800", "a", 1, None),
        ];
        let p = parse(&lines).unwrap();
        assert_eq!(p.summary.malformed, 3);
        assert_eq!(p.summary.tweets, 1);
        let e = parse(&["garbage".to_string()]).unwrap_err();
        assert!(e.to_string().contains("no parseable records"));
    }

    #[test]
    fn duplicates_and_numeric_ids() {
        let mut v: Value = serde_json::from_str(&line("x", "100", "u", 4, None)).unwrap();
        v["id_str"] = serde_json::json!(12);
        let lines = vec![v.to_string(), v.to_string()];
        let p = parse(&lines).unwrap();
        assert_eq!(p.summary.duplicates, 1);
        assert_eq!(p.cascades[0].cascade_id, "12");
    }

    #[test]
    fn custom_mapping() {
        let mapping = FieldMapping {
            tweet_id: "tid".into(),
            created_at: "ts".into(),
            followers: "f".into(),
            user_id: "uid".into(),
            source_id: "src".into(),
            source_user_id: "src_uid".into(),
        };
        let text = "{\"tid\":\"1\",\"ts\":0,\"f\":9,\"uid\":\"a\"}\n{\"tid\":\"2\",\"ts\":4.5,\"f\":1,\"uid\":\"b\",\"src\":\"1\"}\n";
        let p = parse_tweet_lines(text.as_bytes(), &mapping, "t").unwrap();
        assert_eq!(p.cascades[0].times().collect::<Vec<_>>(), vec![0.0, 4.5]);
        let m: FieldMapping = serde_json::from_str("{\"tweet_id\": \"id\"}").unwrap();
        assert_eq!(m.tweet_id, "id");
        assert_eq!(m.created_at, "created_at");
    }
}
