//! Review sessions: fuse, rank, fetch slices in order, refine them from
//! scribbles, and log every transition so the result can be replayed.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::RefineConfig;
use crate::error::{Error, Result};
use crate::metrics::dice;
use crate::refine::{refine_slice, Refinement};
use crate::scribble::ScribbleSet;
use crate::uncertainty::{fuse_predictions, next_slice, rank_slices, FusedResult, Next, ScoreMode, SliceQueue, Visit};
use crate::volume::{BinaryMask, ProbabilityGroup, Stack};

use super::simulate::{simulate_scribbles, MIN_COMPONENT};

/// Order in which slices are fetched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Queue order with the `M'` cutoff and early stop.
    Guided(ScoreMode),
    /// Every slice in index order, no early stop.
    Exhaustive,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Guided(ScoreMode::Normalized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Fetched {
        slice: usize,
        score: f64,
    },
    /// One scribble submission. An empty set leaves the slice unedited and
    /// runs no refinement, so the optional fields stay empty.
    Scribbled {
        slice: usize,
        round: usize,
        scribbles: ScribbleSet,
        accepted: bool,
        dice_before: Option<f64>,
        dice_after: Option<f64>,
        energy_before: Option<f64>,
        energy_after: Option<f64>,
    },
    Done,
}

/// Wall time of one stage. Kept apart from the events so that two runs of
/// the same session produce identical event lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    /// Index of the event the stage produced, if any.
    pub event: Option<usize>,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub schedule: Schedule,
    pub config: RefineConfig,
    pub dims: (usize, usize, usize),
    pub events: Vec<SessionEvent>,
    #[serde(default)]
    pub timings: Vec<StageTiming>,
}

impl SessionLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session log serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidData(format!("session log: {e}")))
    }

    pub fn fetched(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match e {
                SessionEvent::Fetched { slice, .. } => Some(*slice),
                _ => None,
            })
            .collect()
    }

    /// Slices with at least one non-empty scribble submission.
    pub fn edited(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .events
            .iter()
            .filter_map(|e| match e {
                SessionEvent::Scribbled { slice, scribbles, .. } if !scribbles.is_empty() => Some(*slice),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// The reviewer's verdict on a proposed refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Review {
    pub accepted: bool,
    pub dice_before: Option<f64>,
    pub dice_after: Option<f64>,
}

impl Review {
    pub fn accept() -> Self {
        Self {
            accepted: true,
            dice_before: None,
            dice_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub slice: usize,
    pub round: usize,
    pub accepted: bool,
    /// `None` for an empty scribble set.
    pub refinement: Option<Refinement>,
}

/// Mutable state of one review session.
#[derive(Debug, Clone)]
pub struct SessionState {
    stack: Stack,
    fused: FusedResult,
    queue: SliceQueue,
    initial: BinaryMask,
    mask: BinaryMask,
    history: Vec<Visit>,
    rounds: HashMap<usize, usize>,
    finished: bool,
    log: SessionLog,
}

impl SessionState {
    /// Fuse `probs`, rank the slices and open a session with no slice fetched.
    pub fn new(stack: Stack, probs: &ProbabilityGroup, cfg: RefineConfig, schedule: Schedule) -> Result<Self> {
        cfg.validate()?;
        if probs.spatial_dim() != stack.dim() {
            return Err(Error::Shape(format!(
                "stack is {:?} but probability group is {:?}",
                stack.dim(),
                probs.spatial_dim()
            )));
        }
        let t = Instant::now();
        let fused = fuse_predictions(probs, cfg.threshold)?;
        let fuse_seconds = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let mode = match schedule {
            Schedule::Guided(mode) => mode,
            Schedule::Exhaustive => ScoreMode::Normalized,
        };
        let queue = rank_slices(&fused, &cfg, mode);
        let rank_seconds = t.elapsed().as_secs_f64();
        let log = SessionLog {
            schedule,
            config: cfg,
            dims: stack.dim(),
            events: Vec::new(),
            timings: vec![
                StageTiming {
                    event: None,
                    stage: "fuse".into(),
                    seconds: fuse_seconds,
                },
                StageTiming {
                    event: None,
                    stage: "rank".into(),
                    seconds: rank_seconds,
                },
            ],
        };
        Ok(Self {
            stack,
            initial: fused.mask.clone(),
            mask: fused.mask.clone(),
            fused,
            queue,
            history: Vec::new(),
            rounds: HashMap::new(),
            finished: false,
            log,
        })
    }

    pub fn stack(&self) -> &Stack {
        &self.stack
    }

    pub fn fused(&self) -> &FusedResult {
        &self.fused
    }

    pub fn queue(&self) -> &SliceQueue {
        &self.queue
    }

    pub fn config(&self) -> &RefineConfig {
        &self.log.config
    }

    pub fn initial_mask(&self) -> &BinaryMask {
        &self.initial
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn into_mask(self) -> BinaryMask {
        self.mask
    }

    pub fn history(&self) -> &[Visit] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    /// Most recently fetched slice.
    pub fn current(&self) -> Option<usize> {
        self.history.last().map(|v| v.slice)
    }

    pub fn is_fetched(&self, slice: usize) -> bool {
        self.history.iter().any(|v| v.slice == slice)
    }

    /// Score of `slice` under the session's ranking.
    pub fn score(&self, slice: usize) -> Option<f64> {
        self.queue.score_of(slice)
    }

    fn peek(&self) -> Next {
        match self.log.schedule {
            Schedule::Guided(_) => next_slice(&self.queue, &self.history, self.log.config.early_stop_count),
            Schedule::Exhaustive => (0..self.stack.num_slices())
                .find(|k| !self.is_fetched(*k))
                .map_or(Next::Done, Next::Slice),
        }
    }

    /// Fetch the next slice. `Done` finishes the session.
    pub fn advance(&mut self) -> Result<Next> {
        if self.finished {
            return Err(Error::SessionFinished);
        }
        let next = self.peek();
        match next {
            Next::Slice(k) => {
                self.history.push(Visit { slice: k, edited: false });
                let score = self.queue.score_of(k).unwrap_or(0.0);
                self.log.events.push(SessionEvent::Fetched { slice: k, score });
            }
            Next::Done => {
                self.finished = true;
                self.log.events.push(SessionEvent::Done);
            }
        }
        Ok(next)
    }

    /// Refine a fetched slice from its current mask. The refinement replaces
    /// the slice only if `review` accepts it. An empty scribble set is
    /// logged and changes nothing.
    pub fn submit(
        &mut self,
        slice: usize,
        scribbles: &ScribbleSet,
        review: impl FnOnce(ArrayView2<'_, u8>, ArrayView2<'_, u8>) -> Review,
    ) -> Result<Submission> {
        if self.finished {
            return Err(Error::SessionFinished);
        }
        let m = self.stack.num_slices();
        if slice >= m {
            return Err(Error::SliceOutOfRange { slice, num_slices: m });
        }
        if !self.is_fetched(slice) {
            return Err(Error::SliceNotFetched(slice));
        }
        if scribbles.slice != slice {
            return Err(Error::InvalidData(format!(
                "scribbles are for slice {} but were submitted to slice {slice}",
                scribbles.slice
            )));
        }
        let round = *self.rounds.get(&slice).unwrap_or(&0);

        if scribbles.is_empty() {
            self.log.events.push(SessionEvent::Scribbled {
                slice,
                round,
                scribbles: scribbles.clone(),
                accepted: false,
                dice_before: None,
                dice_after: None,
                energy_before: None,
                energy_after: None,
            });
            return Ok(Submission {
                slice,
                round,
                accepted: false,
                refinement: None,
            });
        }

        let t = Instant::now();
        let intensity = self.stack.normalized_slice(slice);
        let prob = self.fused.mean.index_axis(Axis(0), slice);
        let current = self.mask.slice(slice);
        let refinement = refine_slice(intensity.view(), prob, current, scribbles, &self.log.config)
            .map_err(|e| e.at_slice(slice))?;
        let seconds = t.elapsed().as_secs_f64();
        let verdict = review(current, refinement.mask.view());

        if verdict.accepted {
            self.mask.set_slice(slice, refinement.mask.view())?;
        }
        if let Some(v) = self.history.iter_mut().find(|v| v.slice == slice) {
            v.edited = true;
        }
        self.rounds.insert(slice, round + 1);
        self.log.events.push(SessionEvent::Scribbled {
            slice,
            round,
            scribbles: scribbles.clone(),
            accepted: verdict.accepted,
            dice_before: verdict.dice_before,
            dice_after: verdict.dice_after,
            energy_before: Some(refinement.stats.energy_before.e_total),
            energy_after: Some(refinement.stats.energy_after.e_total),
        });
        self.log.timings.push(StageTiming {
            event: Some(self.log.events.len() - 1),
            stage: "refine".into(),
            seconds,
        });
        Ok(Submission {
            slice,
            round,
            accepted: verdict.accepted,
            refinement: Some(refinement),
        })
    }
}

/// Something that draws scribbles on fetched slices and judges the results.
pub trait ScribbleSource {
    /// Upper bound on submissions per slice.
    fn max_rounds(&self) -> usize;

    /// Scribbles for `slice` given its current mask. An empty set means the
    /// user leaves the slice as it is.
    fn scribbles(&mut self, slice: usize, current: ArrayView2<'_, u8>) -> Result<ScribbleSet>;

    fn review(&mut self, slice: usize, before: ArrayView2<'_, u8>, after: ArrayView2<'_, u8>) -> Review;
}

/// A user who knows the ground truth, scribbles every sufficiently large
/// error component and keeps a refinement only if it raises the slice Dice.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    pub gt: BinaryMask,
    pub min_component: usize,
    pub max_rounds: usize,
}

impl SimulatedUser {
    pub fn new(gt: BinaryMask) -> Self {
        Self {
            gt,
            min_component: MIN_COMPONENT,
            max_rounds: 2,
        }
    }
}

impl ScribbleSource for SimulatedUser {
    fn max_rounds(&self) -> usize {
        self.max_rounds
    }

    fn scribbles(&mut self, slice: usize, current: ArrayView2<'_, u8>) -> Result<ScribbleSet> {
        if slice >= self.gt.num_slices() {
            return Err(Error::SliceOutOfRange {
                slice,
                num_slices: self.gt.num_slices(),
            });
        }
        simulate_scribbles(current, self.gt.slice(slice), self.min_component, slice)
    }

    fn review(&mut self, slice: usize, before: ArrayView2<'_, u8>, after: ArrayView2<'_, u8>) -> Review {
        let gt = self.gt.slice(slice);
        let dice_before = dice(before, gt).ok();
        let dice_after = dice(after, gt).ok();
        let accepted = matches!((dice_before, dice_after), (Some(b), Some(a)) if a > b);
        Review {
            accepted,
            dice_before,
            dice_after,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub initial: BinaryMask,
    pub mask: BinaryMask,
    pub log: SessionLog,
}

/// Run a whole session: fetch slices until the schedule is done, letting
/// `source` scribble on each one for up to its round limit. A round that is
/// empty or rejected ends the slice.
pub fn run_session(
    stack: &Stack,
    probs: &ProbabilityGroup,
    source: &mut dyn ScribbleSource,
    cfg: &RefineConfig,
    schedule: Schedule,
) -> Result<SessionOutcome> {
    let mut state = SessionState::new(stack.clone(), probs, *cfg, schedule)?;
    while let Next::Slice(k) = state.advance()? {
        for _ in 0..source.max_rounds() {
            let current: Array2<u8> = state.mask().slice(k).to_owned();
            let set = source.scribbles(k, current.view()).map_err(|e| e.at_slice(k))?;
            let empty = set.is_empty();
            let sub = state.submit(k, &set, |before, after| source.review(k, before, after))?;
            if empty || !sub.accepted {
                break;
            }
        }
    }
    Ok(SessionOutcome {
        initial: state.initial_mask().clone(),
        mask: state.mask().clone(),
        log: state.log().clone(),
    })
}

/// Re-run the events of `log` on the same inputs and return the final mask.
/// Fails if the fetch order no longer matches the schedule.
pub fn replay_session(stack: &Stack, probs: &ProbabilityGroup, log: &SessionLog) -> Result<BinaryMask> {
    Ok(SessionState::replay(stack.clone(), probs, log)?.into_mask())
}

impl SessionState {
    /// Rebuild a session by re-running the events of `log`. The result holds
    /// the same log, timings included.
    pub fn replay(stack: Stack, probs: &ProbabilityGroup, log: &SessionLog) -> Result<Self> {
        if stack.dim() != log.dims {
            return Err(Error::Shape(format!("log is for {:?}, stack is {:?}", log.dims, stack.dim())));
        }
        let mut state = SessionState::new(stack, probs, log.config, log.schedule)?;
        for (i, event) in log.events.iter().enumerate() {
            match event {
                SessionEvent::Fetched { slice, .. } => match state.advance()? {
                    Next::Slice(k) if k == *slice => {}
                    other => {
                        return Err(Error::Replay(format!(
                            "event {i} fetched slice {slice} but the schedule gives {other:?}"
                        )))
                    }
                },
                SessionEvent::Scribbled {
                    slice,
                    scribbles,
                    accepted,
                    ..
                } => {
                    let accepted = *accepted;
                    state.submit(*slice, scribbles, |_, _| Review {
                        accepted,
                        dice_before: None,
                        dice_after: None,
                    })?;
                }
                SessionEvent::Done => {
                    let next = state.advance()?;
                    if next != Next::Done {
                        return Err(Error::Replay(format!("event {i} is done but the schedule gives {next:?}")));
                    }
                }
            }
        }
        state.log = log.clone();
        Ok(state)
    }
}
