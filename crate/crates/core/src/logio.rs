//! Episode log records and JSON-lines serialization.
//!
//! Each line is one step. Ground-truth quantities live in a separate `eval`
//! section; the training-mode reader never deserializes it, so trainer code
//! paths cannot see hidden state by construction.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::InteractionEvent;

/// One step as visible to training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedStep {
    pub context_id: usize,
    pub item_id: usize,
    /// Behavior-policy propensity of the logged action, in (0, 1].
    pub propensity: f64,
    pub completion_ratio: f64,
    pub time_spent_sec: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survey_rating: Option<u8>,
}

impl LoggedStep {
    pub fn to_event(&self) -> InteractionEvent {
        InteractionEvent {
            item_id: self.item_id,
            engagement: self.completion_ratio,
            time_spent_sec: self.time_spent_sec,
            context_id: self.context_id,
        }
    }
}

/// Training view of one episode (one simulated user session).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: u64,
    pub steps: Vec<LoggedStep>,
}

/// Ground truth recorded alongside a step, for evaluation only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub true_sat_prob: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub like: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dislike: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalStep {
    pub step: LoggedStep,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalEpisode {
    pub episode_id: u64,
    pub steps: Vec<EvalStep>,
}

impl EvalEpisode {
    pub fn training_view(&self) -> Episode {
        Episode {
            episode_id: self.episode_id,
            steps: self.steps.iter().map(|s| s.step.clone()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReaderMode {
    Training,
    Evaluation,
}

pub enum LogData {
    Training(Vec<Episode>),
    Evaluation(Vec<EvalEpisode>),
}

/// On-disk line layout. The training reader uses `TrainRecord`, which has no
/// eval field at all.
#[derive(Serialize, Deserialize)]
struct FullRecord {
    episode_id: u64,
    step: usize,
    context_id: usize,
    item_id: usize,
    propensity: f64,
    completion_ratio: f64,
    time_spent_sec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    survey_rating: Option<u8>,
    eval: EvalSection,
}

#[derive(Deserialize)]
struct TrainRecord {
    episode_id: u64,
    context_id: usize,
    item_id: usize,
    propensity: f64,
    completion_ratio: f64,
    time_spent_sec: f64,
    #[serde(default)]
    survey_rating: Option<u8>,
}

pub fn write_log<P: AsRef<Path>>(path: P, episodes: &[EvalEpisode]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ep in episodes {
        for (i, s) in ep.steps.iter().enumerate() {
            let rec = FullRecord {
                episode_id: ep.episode_id,
                step: i,
                context_id: s.step.context_id,
                item_id: s.step.item_id,
                propensity: s.step.propensity,
                completion_ratio: s.step.completion_ratio,
                time_spent_sec: s.step.time_spent_sec,
                survey_rating: s.step.survey_rating,
                eval: s.eval.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_log<P: AsRef<Path>>(path: P, mode: ReaderMode) -> Result<LogData> {
    let reader = BufReader::new(File::open(path)?);
    match mode {
        ReaderMode::Training => {
            let mut episodes: Vec<Episode> = Vec::new();
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TrainRecord = serde_json::from_str(&line)?;
                let step = LoggedStep {
                    context_id: rec.context_id,
                    item_id: rec.item_id,
                    propensity: rec.propensity,
                    completion_ratio: rec.completion_ratio,
                    time_spent_sec: rec.time_spent_sec,
                    survey_rating: rec.survey_rating,
                };
                match episodes.last_mut() {
                    Some(ep) if ep.episode_id == rec.episode_id => ep.steps.push(step),
                    _ => episodes.push(Episode {
                        episode_id: rec.episode_id,
                        steps: vec![step],
                    }),
                }
            }
            Ok(LogData::Training(episodes))
        }
        ReaderMode::Evaluation => {
            let mut episodes: Vec<EvalEpisode> = Vec::new();
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: FullRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::Eval(format!("missing or malformed eval section: {e}")))?;
                let step = EvalStep {
                    step: LoggedStep {
                        context_id: rec.context_id,
                        item_id: rec.item_id,
                        propensity: rec.propensity,
                        completion_ratio: rec.completion_ratio,
                        time_spent_sec: rec.time_spent_sec,
                        survey_rating: rec.survey_rating,
                    },
                    eval: rec.eval,
                };
                match episodes.last_mut() {
                    Some(ep) if ep.episode_id == rec.episode_id => ep.steps.push(step),
                    _ => episodes.push(EvalEpisode {
                        episode_id: rec.episode_id,
                        steps: vec![step],
                    }),
                }
            }
            Ok(LogData::Evaluation(episodes))
        }
    }
}

pub fn read_training<P: AsRef<Path>>(path: P) -> Result<Vec<Episode>> {
    match read_log(path, ReaderMode::Training)? {
        LogData::Training(eps) => Ok(eps),
        LogData::Evaluation(_) => unreachable!(),
    }
}

pub fn read_evaluation<P: AsRef<Path>>(path: P) -> Result<Vec<EvalEpisode>> {
    match read_log(path, ReaderMode::Evaluation)? {
        LogData::Evaluation(eps) => Ok(eps),
        LogData::Training(_) => unreachable!(),
    }
}
