use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::population::{Individual, Population};
use super::SearchError;
use crate::search_space::{FieldId, FieldValue, Genome};

/// A changed field in a child relative to its parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    pub field: usize,
    pub name: String,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    /// An initial-population member finished its evaluation.
    Init {
        model_id: u64,
        genome: Genome,
        steps: u64,
        fitness: f64,
    },
    EvalStart {
        model_id: u64,
        parent_id: u64,
        mutations: Vec<FieldChange>,
        hurdles: Vec<f64>,
    },
    HurdleGate {
        model_id: u64,
        gate: usize,
        steps: u64,
        fitness: f64,
        hurdle: Option<f64>,
        passed: bool,
    },
    EvalDone {
        model_id: u64,
        parent_id: Option<u64>,
        steps: u64,
        fitness: f64,
    },
    EvalFailed {
        model_id: u64,
        parent_id: Option<u64>,
        steps: u64,
        message: String,
    },
    HurdleCreated {
        hurdle_index: usize,
        value: f64,
        models_counted: usize,
    },
    Kill {
        model_id: u64,
        slot: usize,
        fitness: f64,
    },
    Insert {
        model_id: u64,
        slot: usize,
    },
    ConfigSwitch {
        at_model: u64,
        mutation_rate: f64,
        allow_no_normalization: bool,
    },
}

/// One line of `events.jsonl`; `index` is the position in the total order of
/// state changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Append-only event log, mirrored to a file when one is attached.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<Event>,
    writer: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Starts a fresh log file at `path`, replacing any previous content.
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(EventLog {
            events: Vec::new(),
            writer: Some(BufWriter::new(File::create(path)?)),
        })
    }

    /// Reopens `path`, keeping its first `keep` events and discarding any
    /// written after them.
    pub fn reopen(path: &Path, keep: u64) -> Result<Self, SearchError> {
        let reader = BufReader::new(File::open(path)?);
        let mut events = Vec::new();
        let mut bytes = 0u64;
        for line in reader.lines() {
            if events.len() as u64 == keep {
                break;
            }
            let line = line?;
            bytes += line.len() as u64 + 1;
            events.push(serde_json::from_str::<Event>(&line)?);
        }
        if (events.len() as u64) < keep {
            return Err(SearchError::Replay(format!(
                "event log has {} events, checkpoint expects {keep}",
                events.len()
            )));
        }
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(bytes)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(EventLog {
            events,
            writer: Some(BufWriter::new(file)),
        })
    }

    pub fn push(&mut self, kind: EventKind) -> Result<(), SearchError> {
        let event = Event {
            index: self.events.len() as u64,
            kind,
        };
        if let Some(w) = self.writer.as_mut() {
            serde_json::to_writer(&mut *w, &event)?;
            w.write_all(b"\n")?;
        }
        self.events.push(event);
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.writer.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(mut self) -> Vec<Event> {
        let _ = self.flush();
        std::mem::take(&mut self.events)
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, SearchError> {
    let reader = BufReader::new(File::open(path)?);
    reader.lines().map(|line| Ok(serde_json::from_str(&line?)?)).collect()
}

/// State reconstructed by folding an event log.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    /// Population in slot order.
    pub population: Vec<Individual>,
    /// Every successfully evaluated model by id.
    pub evaluated: BTreeMap<u64, Individual>,
    pub hurdles: Vec<f64>,
}

impl Replay {
    pub fn into_population(self, capacity: usize) -> Population {
        Population {
            members: self.population,
            capacity,
        }
    }
}

fn replay_error(event: &Event, message: &str) -> SearchError {
    SearchError::Replay(format!("event {}: {message}", event.index))
}

pub fn replay(events: &[Event]) -> Result<Replay, SearchError> {
    let mut genomes: BTreeMap<u64, Genome> = BTreeMap::new();
    let mut evaluated = BTreeMap::new();
    let mut population: Vec<Individual> = Vec::new();
    let mut hurdles = Vec::new();
    let mut killed_slot = None;
    for event in events {
        match &event.kind {
            EventKind::Init {
                model_id,
                genome,
                steps,
                fitness,
            } => {
                let ind = Individual {
                    created_index: *model_id,
                    parent_id: None,
                    genome: genome.clone(),
                    fitness: *fitness,
                    steps_trained: *steps,
                };
                genomes.insert(*model_id, genome.clone());
                evaluated.insert(*model_id, ind.clone());
                population.push(ind);
            }
            EventKind::EvalStart {
                model_id,
                parent_id,
                mutations,
                ..
            } => {
                let mut genome = genomes
                    .get(parent_id)
                    .cloned()
                    .ok_or_else(|| replay_error(event, "unknown parent"))?;
                for change in mutations {
                    let id = FieldId::new(change.field).ok_or_else(|| replay_error(event, "bad field index"))?;
                    let value = FieldValue::parse_for(id.addr(), &change.to)
                        .ok_or_else(|| replay_error(event, "bad field value"))?;
                    genome.set(id, value).map_err(|e| replay_error(event, &e.to_string()))?;
                }
                genomes.insert(*model_id, genome);
            }
            EventKind::EvalDone {
                model_id,
                parent_id,
                steps,
                fitness,
            } => {
                let genome = genomes
                    .get(model_id)
                    .cloned()
                    .ok_or_else(|| replay_error(event, "evaluation of an unknown model"))?;
                evaluated.insert(
                    *model_id,
                    Individual {
                        created_index: *model_id,
                        parent_id: *parent_id,
                        genome,
                        fitness: *fitness,
                        steps_trained: *steps,
                    },
                );
            }
            EventKind::Kill { model_id, slot, .. } => {
                if population.get(*slot).map(|m| m.created_index) != Some(*model_id) {
                    return Err(replay_error(event, "killed model is not in that slot"));
                }
                killed_slot = Some(*slot);
            }
            EventKind::Insert { model_id, slot } => {
                if killed_slot.take() != Some(*slot) {
                    return Err(replay_error(event, "insert without a matching kill"));
                }
                population[*slot] = evaluated
                    .get(model_id)
                    .cloned()
                    .ok_or_else(|| replay_error(event, "inserted model was never evaluated"))?;
            }
            EventKind::HurdleCreated { value, .. } => hurdles.push(*value),
            EventKind::HurdleGate { .. } | EventKind::EvalFailed { .. } | EventKind::ConfigSwitch { .. } => {}
        }
    }
    Ok(Replay {
        population,
        evaluated,
        hurdles,
    })
}

/// `(stopped, faced)`: children that failed their first hurdle, out of
/// those evaluated while at least one hurdle existed.
pub fn first_gate_stats(events: &[Event]) -> (usize, usize) {
    let mut stopped = 0;
    let mut faced = 0;
    for e in events {
        if let EventKind::HurdleGate {
            gate: 0,
            hurdle: Some(_),
            passed,
            ..
        } = e.kind
        {
            faced += 1;
            stopped += (!passed) as usize;
        }
    }
    (stopped, faced)
}
