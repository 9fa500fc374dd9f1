//! Marked reshare cascades and their grouping by initiating user.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Group key used for cascades that carry no initiator.
pub const UNKNOWN_INITIATOR: &str = "<unknown>";

/// One event of a cascade: time relative to the initial post, plus a mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedEvent {
    pub time: f64,
    pub magnitude: f64,
    pub user_id: Option<String>,
}

impl MarkedEvent {
    pub fn new(time: f64, magnitude: f64) -> Self {
        Self {
            time,
            magnitude,
            user_id: None,
        }
    }

    /// Unmarked event; magnitude is materialized as 1.
    pub fn unmarked(time: f64) -> Self {
        Self::new(time, 1.0)
    }

    pub fn with_user(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = Some(user_id.into());
        self
    }
}

/// A reshare cascade observed on `[0, observation_time]`.
///
/// Events are sorted by time (ties keep their input order) and the first
/// event sits at exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub cascade_id: String,
    events: Vec<MarkedEvent>,
    observation_time: f64,
    pub initiator_user_id: Option<String>,
    /// Set when the source post was not observed and the cascade is anchored
    /// at its earliest reshare.
    pub orphan: bool,
}

impl Cascade {
    /// Builds a cascade from events already expressed in relative time.
    ///
    /// `observation_time` defaults to the last event time.
    pub fn new(
        cascade_id: impl Into<String>,
        events: Vec<MarkedEvent>,
        observation_time: Option<f64>,
    ) -> Result<Self> {
        let cascade_id = cascade_id.into();
        let first = events
            .first()
            .ok_or_else(|| Error::EmptyInput(format!("cascade `{cascade_id}` has no events")))?;
        if first.time != 0.0 {
            return Err(Error::Validation(format!(
                "cascade `{cascade_id}`: first event must be at time 0, got {}",
                first.time
            )));
        }
        let mut prev = 0.0;
        for (i, e) in events.iter().enumerate() {
            if !(e.time.is_finite() && e.time >= 0.0) {
                return Err(Error::Validation(format!(
                    "cascade `{cascade_id}`: event {i} has invalid time {}",
                    e.time
                )));
            }
            if !(e.magnitude.is_finite() && e.magnitude >= 0.0) {
                return Err(Error::Validation(format!(
                    "cascade `{cascade_id}`: event {i} has invalid magnitude {}",
                    e.magnitude
                )));
            }
            if e.time < prev {
                return Err(Error::Validation(format!(
                    "cascade `{cascade_id}`: events not sorted at index {i}"
                )));
            }
            prev = e.time;
        }
        let observation_time = observation_time.unwrap_or(prev);
        if !(observation_time.is_finite() && observation_time >= prev) {
            return Err(Error::Validation(format!(
                "cascade `{cascade_id}`: observation time {observation_time} precedes last event {prev}"
            )));
        }
        let initiator_user_id = first.user_id.clone();
        Ok(Self {
            cascade_id,
            events,
            observation_time,
            initiator_user_id,
            orphan: false,
        })
    }

    /// Builds a cascade from events with absolute timestamps: events are
    /// stably sorted and shifted so the earliest one is at 0.
    pub fn from_absolute(
        cascade_id: impl Into<String>,
        mut events: Vec<MarkedEvent>,
        observation_time: Option<f64>,
    ) -> Result<Self> {
        let cascade_id = cascade_id.into();
        if events.iter().any(|e| !e.time.is_finite()) {
            return Err(Error::Validation(format!(
                "cascade `{cascade_id}`: non-finite timestamp"
            )));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let origin = match events.first() {
            Some(e) => e.time,
            None => {
                return Err(Error::EmptyInput(format!(
                    "cascade `{cascade_id}` has no events"
                )))
            }
        };
        for e in &mut events {
            e.time -= origin;
        }
        Self::new(cascade_id, events, observation_time.map(|t| t - origin))
    }

    /// Unmarked cascade from relative times.
    pub fn from_times(cascade_id: impl Into<String>, times: &[f64], observation_time: f64) -> Result<Self> {
        let events = times.iter().map(|&t| MarkedEvent::unmarked(t)).collect();
        Self::new(cascade_id, events, Some(observation_time))
    }

    /// Marked cascade from parallel time and magnitude slices.
    pub fn from_marked(
        cascade_id: impl Into<String>,
        times: &[f64],
        magnitudes: &[f64],
        observation_time: f64,
    ) -> Result<Self> {
        if times.len() != magnitudes.len() {
            return Err(Error::Validation(format!(
                "{} times but {} magnitudes",
                times.len(),
                magnitudes.len()
            )));
        }
        let events = times
            .iter()
            .zip(magnitudes)
            .map(|(&t, &m)| MarkedEvent::new(t, m))
            .collect();
        Self::new(cascade_id, events, Some(observation_time))
    }

    pub fn events(&self) -> &[MarkedEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Always false for a constructed cascade; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn observation_time(&self) -> f64 {
        self.observation_time
    }

    pub fn last_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    pub fn times(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.time)
    }

    pub fn magnitudes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.magnitude)
    }

    /// Moves the observation horizon; it may not cut off observed events.
    pub fn with_observation_time(mut self, observation_time: f64) -> Result<Self> {
        if !(observation_time.is_finite() && observation_time >= self.last_time()) {
            return Err(Error::Domain(format!(
                "observation time {observation_time} precedes last event {}",
                self.last_time()
            )));
        }
        self.observation_time = observation_time;
        Ok(self)
    }

    /// The prefix of the cascade observed up to `t` (inclusive), with
    /// observation time `t`.
    pub fn truncated(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("cannot truncate at {t}")));
        }
        let kept = self.events.iter().take_while(|e| e.time <= t).count();
        Ok(Self {
            cascade_id: self.cascade_id.clone(),
            events: self.events[..kept].to_vec(),
            observation_time: t,
            initiator_user_id: self.initiator_user_id.clone(),
            orphan: self.orphan,
        })
    }

    /// Gaps between consecutive events of this cascade.
    pub fn inter_event_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.windows(2).map(|w| w[1].time - w[0].time)
    }
}

/// Cascades modeled jointly under one parameter set, e.g. all cascades
/// started by the same user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeGroup {
    pub group_key: String,
    cascades: Vec<Cascade>,
}

impl CascadeGroup {
    pub fn new(group_key: impl Into<String>, cascades: Vec<Cascade>) -> Result<Self> {
        let group_key = group_key.into();
        if cascades.is_empty() {
            return Err(Error::EmptyInput(format!("group `{group_key}` has no cascades")));
        }
        let mut seen = BTreeMap::new();
        for c in &cascades {
            if seen.insert(c.cascade_id.as_str(), ()).is_some() {
                return Err(Error::Validation(format!(
                    "group `{group_key}`: duplicate cascade id `{}`",
                    c.cascade_id
                )));
            }
        }
        Ok(Self {
            group_key,
            cascades,
        })
    }

    pub fn single(cascade: Cascade) -> Self {
        Self {
            group_key: cascade.cascade_id.clone(),
            cascades: alloc::vec![cascade],
        }
    }

    pub fn cascades(&self) -> &[Cascade] {
        &self.cascades
    }

    pub fn len(&self) -> usize {
        self.cascades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cascades.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.cascades.iter().map(Cascade::len).sum()
    }

    pub fn max_cascade_size(&self) -> usize {
        self.cascades.iter().map(Cascade::len).max().unwrap_or(0)
    }

    /// Every magnitude in the group, initial posts included.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.cascades.iter().flat_map(|c| c.magnitudes()).collect()
    }
}

impl From<Cascade> for CascadeGroup {
    fn from(c: Cascade) -> Self {
        Self::single(c)
    }
}

/// Groups cascades by initiating user, in order of first appearance.
///
/// Cascades without an initiator go to the [`UNKNOWN_INITIATOR`] group.
pub fn group_by_initiator(cascades: Vec<Cascade>) -> Vec<CascadeGroup> {
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut groups: Vec<CascadeGroup> = Vec::new();
    for c in cascades {
        let key = c
            .initiator_user_id
            .clone()
            .unwrap_or_else(|| String::from(UNKNOWN_INITIATOR));
        match index.get(&key) {
            Some(&i) => groups[i].cascades.push(c),
            None => {
                index.insert(key.clone(), groups.len());
                groups.push(CascadeGroup {
                    group_key: key,
                    cascades: alloc::vec![c],
                });
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn with_initiator(id: &str, user: Option<&str>) -> Cascade {
        let mut e = MarkedEvent::unmarked(0.0);
        e.user_id = user.map(|u| u.to_string());
        Cascade::new(id, vec![e], None).unwrap()
    }

    #[test]
    fn relative_times_and_default_horizon() {
        let c = Cascade::from_times("c1", &[0.0, 3.0, 10.0], 10.0).unwrap();
        assert_eq!(c.times().collect::<Vec<_>>(), vec![0.0, 3.0, 10.0]);
        assert!(c.magnitudes().all(|m| m == 1.0));
        let d = Cascade::new("c1", c.events().to_vec(), None).unwrap();
        assert_eq!(d.observation_time(), 10.0);
    }

    #[test]
    fn absolute_times_are_shifted() {
        let c = Cascade::from_absolute(
            "c1",
            vec![MarkedEvent::unmarked(103.0), MarkedEvent::unmarked(100.0)],
            None,
        )
        .unwrap();
        assert_eq!(c.times().collect::<Vec<_>>(), vec![0.0, 3.0]);
    }

    #[test]
    fn rejects_bad_events() {
        assert!(matches!(Cascade::new("x", vec![], None), Err(Error::EmptyInput(_))));
        assert!(Cascade::from_times("x", &[1.0], 2.0).is_err());
        assert!(Cascade::from_times("x", &[0.0, 2.0, 1.0], 2.0).is_err());
        assert!(Cascade::from_times("x", &[0.0, 2.0], 1.0).is_err());
        assert!(Cascade::from_marked("x", &[0.0], &[-1.0], 1.0).is_err());
    }

    #[test]
    fn ties_are_kept_in_input_order() {
        let events = vec![
            MarkedEvent::new(5.0, 1.0),
            MarkedEvent::new(0.0, 2.0),
            MarkedEvent::new(5.0, 3.0),
        ];
        let c = Cascade::from_absolute("t", events, None).unwrap();
        assert_eq!(c.magnitudes().collect::<Vec<_>>(), vec![2.0, 1.0, 3.0]);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let c = Cascade::from_times("c", &[0.0, 1.0, 2.0, 5.0], 6.0).unwrap();
        let p = c.truncated(2.0).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.observation_time(), 2.0);
        assert_eq!(c.inter_event_times().collect::<Vec<_>>(), vec![1.0, 1.0, 3.0]);
    }

    #[test]
    fn grouping_by_initiator() {
        let cs = vec![
            with_initiator("a", Some("u1")),
            with_initiator("b", Some("u1")),
            with_initiator("c", Some("u2")),
            with_initiator("d", None),
        ];
        let groups = group_by_initiator(cs);
        let sizes: Vec<_> = groups.iter().map(|g| (g.group_key.as_str(), g.len())).collect();
        assert_eq!(sizes, vec![("u1", 2), ("u2", 1), (UNKNOWN_INITIATOR, 1)]);
        assert!(group_by_initiator(Vec::new()).is_empty());
    }

    #[test]
    fn group_rejects_duplicates() {
        let c = with_initiator("a", None);
        assert!(CascadeGroup::new("g", vec![c.clone(), c]).is_err());
        assert!(CascadeGroup::new("g", vec![]).is_err());
    }
}
