//! File formats: series, events and kernel-spec inputs, network and weight
//! documents.
//!
//! | file         | format                                                    |
//! |--------------|-----------------------------------------------------------|
//! | series       | CSV `user_id,kernel,opinion`, kernel 0-based, absent row = missing |
//! | events       | CSV `user_id,timestamp,value`, RFC 3339 timestamps        |
//! | network      | JSON `{"recipients":[{"id":..,"influencers":[..]}]}`      |
//! | kernel spec  | JSON `{"epoch_start":"YYYY-MM-DD","kernel_days":10,"num_kernels":70}` |
//! | weights      | JSON `{"weights":[{"recipient":..,"self_weight":..,"influence_weights":{..}}]}` |
//!
//! JSON documents may carry an extra top-level `meta` object, which readers
//! ignore.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{InfluenceNetwork, InfluenceWeights, OpinionSeries, UserId};
use crate::error::{Error, Result};
use crate::kernelize::{KernelSpec, ObservationEvent};

#[derive(Debug, Deserialize, Serialize)]
struct SeriesRow {
    user_id: String,
    kernel: i64,
    opinion: f64,
}

/// Reads a series CSV. `num_kernels` fixes the series length; when `None`
/// it is one past the largest kernel index in the file.
pub fn read_series<R: Read>(
    reader: R,
    num_kernels: Option<usize>,
    origin: &str,
) -> Result<BTreeMap<UserId, OpinionSeries>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers().map_err(|e| Error::parse(origin, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["user_id", "kernel", "opinion"] {
        return Err(Error::parse(
            origin,
            format!(
                "expected header `user_id,kernel,opinion`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut cells: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for (line, row) in csv.deserialize::<SeriesRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(origin, e))?;
        let at = || format!("data row {}", line + 1);
        if row.kernel < 0 {
            return Err(Error::parse(
                origin,
                format!("{}: negative kernel {}", at(), row.kernel),
            ));
        }
        if !row.opinion.is_finite() {
            return Err(Error::parse(origin, format!("{}: non-finite opinion", at())));
        }
        if row.user_id.is_empty() {
            return Err(Error::parse(origin, format!("{}: empty user_id", at())));
        }
        let k = row.kernel as usize;
        if num_kernels.is_some_and(|n| k >= n) {
            return Err(Error::parse(
                origin,
                format!("{}: kernel {k} outside 0..{}", at(), num_kernels.unwrap_or(0)),
            ));
        }
        if cells
            .entry(row.user_id.clone())
            .or_default()
            .insert(k, row.opinion)
            .is_some()
        {
            return Err(Error::parse(
                origin,
                format!("{}: duplicate entry for `{}` kernel {k}", at(), row.user_id),
            ));
        }
    }

    let t = match num_kernels {
        Some(n) => n,
        None => cells
            .values()
            .filter_map(|m| m.keys().next_back())
            .max()
            .map_or(0, |k| k + 1),
    };
    cells
        .into_iter()
        .map(|(user, m)| {
            let mut values = vec![f64::NAN; t];
            let mut observed = vec![false; t];
            for (k, v) in m {
                values[k] = v;
                observed[k] = true;
            }
            let s = OpinionSeries::with_mask(user.clone(), values, observed).map_err(|e| Error::parse(origin, e))?;
            Ok((user, s))
        })
        .collect()
}

pub fn read_series_file(path: &Path, num_kernels: Option<usize>) -> Result<BTreeMap<UserId, OpinionSeries>> {
    let f = fs::File::open(path)?;
    read_series(f, num_kernels, &path.display().to_string())
}

/// Writes observed kernels only, users in id order.
pub fn write_series<W: Write>(writer: W, series: &BTreeMap<UserId, OpinionSeries>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["user_id", "kernel", "opinion"]).map_err(csv_io)?;
    for (user, s) in series {
        for (k, (v, seen)) in s.values().iter().zip(s.observed_mask()).enumerate() {
            if *seen {
                csv.write_record([user.as_str(), &k.to_string(), &v.to_string()])
                    .map_err(csv_io)?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Deserialize, Serialize)]
struct EventRow {
    user_id: String,
    timestamp: String,
    value: f64,
}

pub fn read_events<R: Read>(reader: R, origin: &str) -> Result<Vec<ObservationEvent>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (line, row) in csv.deserialize::<EventRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(origin, e))?;
        let ts = DateTime::parse_from_rfc3339(&row.timestamp)
            .map_err(|e| Error::parse(origin, format!("data row {}: {e}", line + 1)))?
            .with_timezone(&Utc);
        out.push(ObservationEvent {
            user_id: row.user_id,
            timestamp: ts,
            value: row.value,
        });
    }
    Ok(out)
}

pub fn read_events_file(path: &Path) -> Result<Vec<ObservationEvent>> {
    let f = fs::File::open(path)?;
    read_events(f, &path.display().to_string())
}

pub fn write_events<W: Write>(writer: W, events: &[ObservationEvent]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for e in events {
        csv.serialize(EventRow {
            user_id: e.user_id.clone(),
            timestamp: e.timestamp.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            value: e.value,
        })
        .map_err(csv_io)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

pub fn read_network(path: &Path) -> Result<InfluenceNetwork> {
    read_json(path)
}

pub fn read_kernel_spec(path: &Path) -> Result<KernelSpec> {
    let spec: KernelSpec = read_json(path)?;
    spec.validate()
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    Ok(spec)
}

/// Serializes `body` (which must be a JSON object) with `meta` merged in
/// as a top-level key. Keys come out sorted, so output is byte-stable.
pub fn to_json_with_meta<M: Serialize, T: Serialize>(meta: &M, body: &T) -> Result<String> {
    let mut value = serde_json::to_value(body).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let Value::Object(map) = &mut value else {
        return Err(Error::Config("document body must be a JSON object".into()));
    };
    map.insert(
        "meta".into(),
        serde_json::to_value(meta).map_err(|e| Error::Io(std::io::Error::other(e)))?,
    );
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    Ok(text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsRecord {
    pub recipient: UserId,
    pub self_weight: f64,
    pub influence_weights: BTreeMap<UserId, f64>,
    #[serde(default, skip_deserializing)]
    pub self_beta: f64,
}

impl From<&InfluenceWeights> for WeightsRecord {
    fn from(w: &InfluenceWeights) -> Self {
        WeightsRecord {
            recipient: w.recipient_id.clone(),
            self_weight: w.self_weight,
            influence_weights: w.influence.iter().cloned().collect(),
            self_beta: w.betas().self_beta,
        }
    }
}

impl From<WeightsRecord> for InfluenceWeights {
    fn from(r: WeightsRecord) -> Self {
        InfluenceWeights::new(r.recipient, r.self_weight, r.influence_weights.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsDocument {
    pub weights: Vec<WeightsRecord>,
}

impl WeightsDocument {
    pub fn from_map(weights: &BTreeMap<UserId, InfluenceWeights>) -> Self {
        WeightsDocument {
            weights: weights.values().map(WeightsRecord::from).collect(),
        }
    }

    pub fn into_map(self) -> Result<BTreeMap<UserId, InfluenceWeights>> {
        let mut out = BTreeMap::new();
        for r in self.weights {
            let id = r.recipient.clone();
            if out.insert(id.clone(), r.into()).is_some() {
                return Err(Error::Config(format!("weights listed twice for `{id}`")));
            }
        }
        Ok(out)
    }
}

pub fn read_weights(path: &Path) -> Result<BTreeMap<UserId, InfluenceWeights>> {
    let doc: WeightsDocument = read_json(path)?;
    doc.into_map().map_err(|e| Error::parse(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_with_gaps() {
        let text = "user_id,kernel,opinion\nb,2,0.5\na,0,1\na,3,2.5\n";
        let s = read_series(text.as_bytes(), None, "mem").unwrap();
        assert_eq!(s["a"].len(), 4);
        assert_eq!(s["a"].observed_mask(), [true, false, false, true]);
        assert_eq!(s["b"].first_observed(), Some(2));
        let mut out = Vec::new();
        write_series(&mut out, &s).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "user_id,kernel,opinion\na,0,1\na,3,2.5\nb,2,0.5\n"
        );
    }

    #[test]
    fn series_rejects_bad_rows() {
        for text in [
            "user,kernel,opinion\na,0,1\n",
            "user_id,kernel,opinion\na,-1,1\n",
            "user_id,kernel,opinion\na,0,1\na,0,2\n",
            "user_id,kernel,opinion\na,x,1\n",
            "user_id,kernel,opinion\na,0,NaN\n",
        ] {
            assert!(
                matches!(read_series(text.as_bytes(), None, "mem"), Err(Error::Parse { .. })),
                "{text}"
            );
        }
        let text = "user_id,kernel,opinion\na,5,1\n";
        assert!(read_series(text.as_bytes(), Some(5), "mem").is_err());
    }

    #[test]
    fn empty_series_file() {
        let s = read_series("user_id,kernel,opinion\n".as_bytes(), None, "mem").unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn events_parse_offsets_to_utc() {
        let text = "user_id,timestamp,value\nu,2020-03-11T01:00:00+02:00,0.25\n";
        let ev = read_events(text.as_bytes(), "mem").unwrap();
        assert_eq!(ev[0].timestamp.to_rfc3339(), "2020-03-10T23:00:00+00:00");
        let bad = "user_id,timestamp,value\nu,yesterday,0.25\n";
        assert!(read_events(bad.as_bytes(), "mem").is_err());
    }

    #[test]
    fn kernel_spec_json() {
        let spec: KernelSpec =
            serde_json::from_str(r#"{"epoch_start":"2020-03-01","kernel_days":10,"num_kernels":70}"#).unwrap();
        assert_eq!(spec, KernelSpec::default());
    }

    #[test]
    fn meta_is_merged_and_ignored_on_read() {
        let net = InfluenceNetwork::new(vec![crate::dynamics::RecipientLinks {
            id: "r".into(),
            influencers: vec!["a".into()],
        }])
        .unwrap();
        let text = to_json_with_meta(&serde_json::json!({"command": "synth"}), &net).unwrap();
        assert!(text.contains("\"meta\""));
        let back: InfluenceNetwork = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn weights_document_round_trip() {
        let w = InfluenceWeights::new("r", 0.4, vec![("a".into(), 0.1), ("b".into(), -0.2)]);
        let map = BTreeMap::from([("r".to_string(), w.clone())]);
        let text = serde_json::to_string(&WeightsDocument::from_map(&map)).unwrap();
        let back: WeightsDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_map().unwrap()["r"], w);
    }
}
