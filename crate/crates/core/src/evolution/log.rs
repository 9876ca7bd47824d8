//! JSON-lines event logs.
//!
//! The first record (`t = 0`) carries the preparation shape and a single
//! fill event with the preparation observations; each later record is one
//! step.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Entry, EvolutionEvent, EvolutionStep, EvolvingState, Stream};
use crate::error::{Error, Result};
use crate::tensor::{CooTensor, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
    pub events: Vec<EvolutionEvent>,
}

pub fn write_event_log<W: Write>(writer: W, stream: &Stream) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let prep = stream.initial.observed();
    let entries: Vec<Entry> = prep.iter().map(|(i, v)| Entry::new(i.to_vec(), v)).collect();
    let head = LogRecord {
        t: 0,
        shape: Some(prep.shape().clone()),
        events: if entries.is_empty() {
            Vec::new()
        } else {
            vec![EvolutionEvent::Fill { entries }]
        },
    };
    serde_json::to_writer(&mut w, &head)?;
    writeln!(w)?;
    for (k, step) in stream.steps.iter().enumerate() {
        let rec = LogRecord {
            t: k + 1,
            shape: None,
            events: step.events.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_event_log<R: Read>(reader: R) -> Result<Stream> {
    let mut initial = None;
    let mut steps = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        match initial {
            None => {
                let shape = rec
                    .shape
                    .ok_or_else(|| parse_err("first record must carry `shape`".into()))?;
                let mut prep = CooTensor::empty(shape);
                for ev in &rec.events {
                    match ev {
                        EvolutionEvent::Fill { entries } => {
                            for e in entries {
                                prep.insert(e.index.clone(), e.value)
                                    .map_err(|e| parse_err(e.to_string()))?;
                            }
                        }
                        _ => return Err(parse_err("first record may only contain fills".into())),
                    }
                }
                initial = Some(EvolvingState::new(prep));
            }
            Some(_) => {
                if rec.t != steps.len() + 1 {
                    return Err(parse_err(format!("expected t = {}, found {}", steps.len() + 1, rec.t)));
                }
                steps.push(EvolutionStep::new(rec.events));
            }
        }
    }
    let initial = initial.ok_or(Error::Parse {
        line: 1,
        msg: "empty event log".into(),
    })?;
    Ok(Stream { initial, steps })
}

pub fn write_event_log_file(path: impl AsRef<Path>, stream: &Stream) -> Result<()> {
    write_event_log(File::create(path)?, stream)
}

pub fn read_event_log_file(path: impl AsRef<Path>) -> Result<Stream> {
    read_event_log(File::open(path)?)
}
