use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::synthetic::Streams;
use crate::am::KeyValuePair;
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
pub const SLOT_MINUTES: i64 = 10;
pub const SLOTS_PER_HOUR: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficRecord {
    pub ap_id: String,
    pub timestamp: NaiveDateTime,
    pub volume: f64,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    ap_id: String,
    timestamp: String,
    volume: String,
}

pub fn load_traffic(path: &Path) -> Result<Vec<TrafficRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?;
    if headers.iter().map(str::trim).ne(["ap_id", "timestamp", "volume"]) {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "expected header `ap_id,timestamp,volume`".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        let line = i + 2;
        let parse = |msg: String| Error::Parse {
            path: path.into(),
            line,
            msg,
        };
        let raw = row.map_err(|e| parse(e.to_string()))?;
        let timestamp = NaiveDateTime::parse_from_str(raw.timestamp.trim(), TIMESTAMP_FORMAT)
            .map_err(|e| parse(format!("bad timestamp `{}`: {e}", raw.timestamp)))?;
        if timestamp.minute() as i64 % SLOT_MINUTES != 0 || timestamp.second() != 0 || timestamp.nanosecond() != 0 {
            return Err(parse(format!("timestamp {timestamp} is not on the 10-minute grid")));
        }
        let volume: f64 = raw
            .volume
            .trim()
            .parse()
            .map_err(|_| parse(format!("bad volume `{}`", raw.volume)))?;
        if !(volume.is_finite() && volume >= 0.0) {
            return Err(parse(format!("volume {volume} must be finite and nonnegative")));
        }
        out.push(TrafficRecord {
            ap_id: raw.ap_id.trim().to_string(),
            timestamp,
            volume,
        });
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        line: e.position().map_or(0, |p| p.line() as usize),
        msg: e.to_string(),
    }
}

pub fn traffic_to_csv(records: &[TrafficRecord]) -> String {
    let mut out = String::from("ap_id,timestamp,volume\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.ap_id,
            r.timestamp.format(TIMESTAMP_FORMAT),
            r.volume
        ));
    }
    out
}

/// Transformer-style positional embedding: dimension `i` uses frequency
/// `10000^(-2⌊i/2⌋/d)`, cosine on even and sine on odd indices.
pub fn sinusoidal_embedding(position: f64, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| {
        let freq = 10000f64.powf(-2.0 * (i / 2) as f64 / dim as f64);
        if i % 2 == 0 {
            (position * freq).cos()
        } else {
            (position * freq).sin()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    pub d_ap: usize,
    pub d_time: usize,
    /// Access points to keep, in agent order. All APs, sorted, when absent.
    #[serde(default)]
    pub aps: Option<Vec<String>>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            d_ap: 24,
            d_time: 10,
            aps: None,
        }
    }
}

/// One-hot of the AP index (dropped beyond `d_ap`) plus its sinusoidal
/// embedding.
pub fn ap_embedding(index: usize, d_ap: usize) -> DVector<f64> {
    let mut e = sinusoidal_embedding(index as f64, d_ap);
    if index < d_ap {
        e[index] += 1.0;
    }
    e
}

pub fn hour_embedding(hour_of_day: u32, d_time: usize) -> DVector<f64> {
    sinusoidal_embedding(f64::from(hour_of_day % 24), d_time)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficStreams {
    pub aps: Vec<String>,
    pub start: NaiveDateTime,
    pub streams: Streams,
}

/// Groups 10-minute records into hourly samples: the value is the six
/// `log(1+volume)` readings of the hour and the key is the AP embedding
/// followed by the hour-of-day embedding.
pub fn build_kv(records: &[TrafficRecord], cfg: &EmbedConfig) -> Result<TrafficStreams> {
    if records.is_empty() {
        return Err(Error::Data("no traffic records".into()));
    }
    let aps: Vec<String> = match &cfg.aps {
        Some(list) => list.clone(),
        None => records
            .iter()
            .map(|r| r.ap_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if aps.is_empty() {
        return Err(Error::Config("no access points selected".into()));
    }
    let index: BTreeMap<&str, usize> = aps.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut by_ap: Vec<BTreeMap<NaiveDateTime, f64>> = vec![BTreeMap::new(); aps.len()];
    for r in records {
        let Some(&i) = index.get(r.ap_id.as_str()) else {
            continue;
        };
        if by_ap[i].insert(r.timestamp, r.volume).is_some() {
            return Err(Error::Data(format!(
                "duplicate record for {} at {}",
                r.ap_id,
                r.timestamp.format(TIMESTAMP_FORMAT)
            )));
        }
    }
    let floor_hour = |t: NaiveDateTime| t.with_minute(0).and_then(|t| t.with_second(0)).expect("valid time");
    let first = by_ap.iter().filter_map(|m| m.keys().next()).min().copied();
    let last = by_ap.iter().filter_map(|m| m.keys().next_back()).max().copied();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::Data("selected access points have no records".into()));
    };
    let start = floor_hour(first);
    let hours = ((floor_hour(last) - start).num_hours() + 1) as usize;

    for (i, series) in by_ap.iter().enumerate() {
        let missing: Vec<String> = (0..hours * SLOTS_PER_HOUR)
            .map(|s| start + Duration::minutes(SLOT_MINUTES * s as i64))
            .filter(|ts| !series.contains_key(ts))
            .map(|ts| ts.format(TIMESTAMP_FORMAT).to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Gap {
                ap: aps[i].clone(),
                missing,
            });
        }
    }

    let mut per_agent = Vec::with_capacity(aps.len());
    for (n, series) in by_ap.iter().enumerate() {
        let ap_part = ap_embedding(n, cfg.d_ap);
        let mut samples = Vec::with_capacity(hours);
        for h in 0..hours {
            let hour_start = start + Duration::hours(h as i64);
            let value = DVector::from_fn(SLOTS_PER_HOUR, |s, _| {
                series[&(hour_start + Duration::minutes(SLOT_MINUTES * s as i64))].ln_1p()
            });
            let time_part = hour_embedding(hour_start.hour(), cfg.d_time);
            let key = DVector::from_iterator(
                cfg.d_ap + cfg.d_time,
                ap_part.iter().chain(time_part.iter()).copied(),
            );
            samples.push(KeyValuePair::new(key, value, n, h + 1)?);
        }
        per_agent.push(samples);
    }
    Ok(TrafficStreams {
        aps,
        start,
        streams: Streams::new(per_agent)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn grid(ap: &str, hours: usize, volume: f64) -> Vec<TrafficRecord> {
        (0..hours * 6)
            .map(|s| TrafficRecord {
                ap_id: ap.into(),
                timestamp: t0() + Duration::minutes(10 * s as i64),
                volume,
            })
            .collect()
    }

    #[test]
    fn zero_volume_maps_to_zero() {
        let kv = build_kv(&grid("a", 2, 0.0), &EmbedConfig::default()).unwrap();
        assert_eq!(kv.streams.horizon(), 2);
        assert!(kv.streams.sample(0, 1).unwrap().value.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dimensions() {
        let kv = build_kv(&grid("a", 1, 5.0), &EmbedConfig::default()).unwrap();
        assert_eq!(kv.streams.key_dim(), 34);
        assert_eq!(kv.streams.value_dim(), 6);
    }

    #[test]
    fn hour_embedding_is_daily_periodic() {
        let mut recs = grid("a", 30, 1.0);
        recs.extend(grid("b", 30, 2.0));
        let kv = build_kv(&recs, &EmbedConfig::default()).unwrap();
        let k1 = &kv.streams.sample(1, 3).unwrap().key;
        let k2 = &kv.streams.sample(1, 27).unwrap().key;
        assert_eq!(k1, k2);
        assert_ne!(k1, &kv.streams.sample(0, 3).unwrap().key);
    }

    #[test]
    fn sinusoid_frequencies() {
        let e = sinusoidal_embedding(2.0, 4);
        assert!((e[0] - 2f64.cos()).abs() < 1e-15);
        assert!((e[1] - 2f64.sin()).abs() < 1e-15);
        assert!((e[2] - (2.0 / 100.0f64).cos()).abs() < 1e-15);
        assert!((e[3] - (2.0 / 100.0f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn gaps_are_listed() {
        let mut recs = grid("a", 2, 1.0);
        recs.remove(7);
        match build_kv(&recs, &EmbedConfig::default()) {
            Err(Error::Gap { ap, missing }) => {
                assert_eq!(ap, "a");
                assert_eq!(missing, vec!["2020-01-01 01:10:00".to_string()]);
            }
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let recs = grid("ap1", 1, 3.5);
        std::fs::write(&p, traffic_to_csv(&recs)).unwrap();
        assert_eq!(load_traffic(&p).unwrap(), recs);

        std::fs::write(&p, "ap_id,timestamp,volume\na,2020-01-01 00:00:00,1\na,2020-01-01 00:10:00,x\n").unwrap();
        assert!(matches!(load_traffic(&p), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&p, "ap_id,timestamp,volume\na,2020-01-01 00:05:00,1\n").unwrap();
        assert!(matches!(load_traffic(&p), Err(Error::Parse { line: 2, .. })));
    }
}
