//! Plan execution simulator.
//!
//! Walks a plan as a chain of pick + attach skills. Each step is gated
//! by a precondition (the physical state equals the expected prefix)
//! and a postcondition (the target landed where designed and nothing
//! else moved). Skill outcomes are drawn from a per-encoding success
//! model with three failure modes: misalignment (brick lands one stud
//! off, or is dropped), collision (brick never placed), and deformation
//! (brick not placed and one previously placed brick pops off). Trials
//! are seeded individually, so serial and parallel runs of the same
//! base seed produce identical reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Brick, Structure, TaskEncoding};
use crate::planner::{Plan, PlanStep};

/// Pick attempts per step before the trial aborts.
pub const PICK_ATTEMPTS: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("invalid skill model: {0}")]
    BadModel(String),
    #[error("skill model has no entry for encoding {0}")]
    MissingSkill(TaskEncoding),
    #[error("bad argument: {0}")]
    BadArgument(&'static str),
}

/// How an attach attempt fails, as probabilities over the three modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureMix {
    pub misalignment: f64,
    pub collision: f64,
    pub deformation: f64,
}

impl FailureMix {
    pub fn thirds() -> Self {
        FailureMix { misalignment: 1.0 / 3.0, collision: 1.0 / 3.0, deformation: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub tau: TaskEncoding,
    pub p_success: f64,
    pub failure_mix: FailureMix,
}

/// Stochastic outcome model: one entry per task encoding plus a shared
/// pick success probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillModel {
    #[serde(default = "certain")]
    pub pick_p_success: f64,
    pub skills: Vec<SkillSpec>,
}

fn certain() -> f64 {
    1.0
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p) && p.is_finite()
}

impl SkillModel {
    /// Same success probability and an even failure mix for every skill.
    pub fn uniform(taus: &[TaskEncoding], p_success: f64) -> SkillModel {
        SkillModel {
            pick_p_success: 1.0,
            skills: taus
                .iter()
                .map(|&tau| SkillSpec { tau, p_success, failure_mix: FailureMix::thirds() })
                .collect(),
        }
    }

    pub fn spec(&self, tau: TaskEncoding) -> Option<&SkillSpec> {
        self.skills.iter().find(|s| s.tau == tau)
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if !is_probability(self.pick_p_success) {
            return Err(ExecError::BadModel("pick_p_success outside [0, 1]".into()));
        }
        for s in &self.skills {
            if !is_probability(s.p_success) {
                return Err(ExecError::BadModel(format!(
                    "p_success for {} outside [0, 1]",
                    s.tau
                )));
            }
            let m = s.failure_mix;
            if !(is_probability(m.misalignment)
                && is_probability(m.collision)
                && is_probability(m.deformation))
            {
                return Err(ExecError::BadModel(format!("failure mix for {} out of range", s.tau)));
            }
            let sum = m.misalignment + m.collision + m.deformation;
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ExecError::BadModel(format!(
                    "failure mix for {} sums to {sum}, not 1",
                    s.tau
                )));
            }
        }
        Ok(())
    }

    /// Every step's encoding must have a model entry.
    pub fn covers(&self, steps: &[PlanStep]) -> Result<(), ExecError> {
        for st in steps {
            if self.spec(st.tau).is_none() {
                return Err(ExecError::MissingSkill(st.tau));
            }
        }
        Ok(())
    }
}

pub fn skill_model_to_json(model: &SkillModel) -> String {
    serde_json::to_string_pretty(model).expect("skill model serializes")
}

pub fn skill_model_from_json(text: &str) -> Result<SkillModel, crate::Error> {
    let model: SkillModel = serde_json::from_str(text)?;
    model.validate()?;
    Ok(model)
}

/// What to do when a pre- or postcondition fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Abort,
    Skip,
}

/// Physical state mid-trial.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub placed: Structure,
    /// Design index of each placed brick, parallel to `placed.bricks()`.
    pub design_of: Vec<usize>,
    /// Design index of the brick currently in the gripper.
    pub held: Option<usize>,
    pub aborted: bool,
    pub step_cursor: usize,
}

impl WorldState {
    pub fn new(design: &Structure) -> WorldState {
        let placed = Structure::new(design.workspace, design.types().to_vec())
            .expect("type table comes from a valid design");
        WorldState { placed, design_of: Vec::new(), held: None, aborted: false, step_cursor: 0 }
    }

    /// Bricks currently at their designed pose.
    pub fn correct_count(&self, design: &Structure) -> usize {
        self.placed
            .bricks()
            .iter()
            .zip(&self.design_of)
            .filter(|(b, &di)| design.brick(di) == Some(*b))
            .count()
    }
}

/// True iff the physical state is exactly the prefix the plan expects
/// before step `k` (0-based): the first `k` targets at their designed
/// poses and nothing else on the plate.
pub fn precondition_check(state: &WorldState, plan: &Plan, k: usize) -> bool {
    if state.placed.len() != k {
        return false;
    }
    let mut expected: Vec<usize> = plan.steps[..k].iter().map(|s| s.tgt_index).collect();
    expected.sort_unstable();
    let mut actual = state.design_of.clone();
    actual.sort_unstable();
    expected == actual && state.correct_count(&plan.design) == k
}

/// True iff step `k`'s target is at its designed pose and the expected
/// prefix is still intact afterwards.
pub fn postcondition_check(state: &WorldState, plan: &Plan, k: usize) -> bool {
    precondition_check(state, plan, k + 1)
}

/// Per-step trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    /// Step satisfied without simulation (manually placed first brick).
    Presatisfied,
    Success,
    Misalignment,
    Collision,
    Deformation,
    PickExhausted,
    PreconditionFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: usize,
    pub event: StepEvent,
}

/// Simulate one pick + attach. Draw order is fixed: pick attempts,
/// assembly success, failure mode, then any placement/victim choice.
pub fn execute_step(
    state: &mut WorldState,
    design: &Structure,
    step: &PlanStep,
    model: &SkillModel,
    rng: &mut impl Rng,
) -> StepEvent {
    let spec = model.spec(step.tau).expect("model covers the plan");
    let mut picked = false;
    for _ in 0..PICK_ATTEMPTS {
        if rng.gen::<f64>() < model.pick_p_success {
            picked = true;
            break;
        }
    }
    if !picked {
        return StepEvent::PickExhausted;
    }
    state.held = Some(step.tgt_index);
    let designed = *design.brick(step.tgt_index).expect("plan step targets a design brick");

    let event = if rng.gen::<f64>() < spec.p_success {
        // A success draw can still be physically blocked when earlier
        // failures left debris on the target cells (skip policy only).
        if state.placed.collides(&designed) {
            StepEvent::Collision
        } else {
            state.placed.add_brick(designed).expect("target cells are free");
            state.design_of.push(step.tgt_index);
            StepEvent::Success
        }
    } else {
        let m = spec.failure_mix;
        let u = rng.gen::<f64>();
        if u < m.misalignment {
            let neighbors = [(1, 0), (-1, 0), (0, 1), (0, -1)];
            let candidates: Vec<Brick> = neighbors
                .iter()
                .map(|(dx, dy)| {
                    Brick::new(
                        designed.type_idx,
                        [designed.pos[0] + dx, designed.pos[1] + dy, designed.pos[2]],
                        designed.rot,
                    )
                })
                .filter(|b| state.placed.in_workspace(b) && !state.placed.collides(b))
                .collect();
            if !candidates.is_empty() {
                let b = candidates[rng.gen_range(0..candidates.len())];
                state.placed.add_brick(b).expect("candidate checked collision-free");
                state.design_of.push(step.tgt_index);
            }
            StepEvent::Misalignment
        } else if u < m.misalignment + m.collision {
            StepEvent::Collision
        } else {
            let victims: Vec<usize> = (0..state.placed.len())
                .filter(|&i| state.placed.bricks()[i].pos[2] > 0)
                .collect();
            if !victims.is_empty() {
                let v = victims[rng.gen_range(0..victims.len())];
                state.placed.remove_brick(v).expect("victim index in range");
                state.design_of.remove(v);
            }
            StepEvent::Deformation
        }
    };
    state.held = None;
    event
}

/// One full trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub trace: Vec<StepRecord>,
    /// Running maximum of correctly placed bricks.
    pub max_correct: usize,
    /// max_correct / brick count.
    pub completion: f64,
}

fn run_trial_inner(
    plan: &Plan,
    model: &SkillModel,
    policy: Policy,
    first_placed: bool,
    seed: u64,
) -> TrialResult {
    let n = plan.steps.len();
    let mut state = WorldState::new(&plan.design);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(n);
    let mut max_correct = 0usize;
    let mut start = 0usize;

    if first_placed && n > 0 {
        let designed = *plan.design.brick(plan.steps[0].tgt_index).expect("valid plan");
        state.placed.add_brick(designed).expect("empty plate");
        state.design_of.push(plan.steps[0].tgt_index);
        trace.push(StepRecord { step: 1, event: StepEvent::Presatisfied });
        max_correct = state.correct_count(&plan.design);
        start = 1;
    }

    for k in start..n {
        state.step_cursor = k;
        if !precondition_check(&state, plan, k) {
            trace.push(StepRecord { step: k + 1, event: StepEvent::PreconditionFailed });
            match policy {
                Policy::Abort => {
                    state.aborted = true;
                    break;
                }
                Policy::Skip => continue,
            }
        }
        let event = execute_step(&mut state, &plan.design, &plan.steps[k], model, &mut rng);
        trace.push(StepRecord { step: k + 1, event });
        max_correct = max_correct.max(state.correct_count(&plan.design));
        if event == StepEvent::PickExhausted {
            // Pick retries are already exhausted; no policy applies.
            state.aborted = true;
            break;
        }
        if !postcondition_check(&state, plan, k) && policy == Policy::Abort {
            state.aborted = true;
            break;
        }
    }

    let completion = if n == 0 { 1.0 } else { max_correct as f64 / n as f64 };
    TrialResult { seed, trace, max_correct, completion }
}

/// Simulate the plan once with a private RNG stream.
pub fn run_trial(
    plan: &Plan,
    model: &SkillModel,
    policy: Policy,
    first_placed: bool,
    seed: u64,
) -> Result<TrialResult, ExecError> {
    model.validate()?;
    model.covers(&plan.steps)?;
    Ok(run_trial_inner(plan, model, policy, first_placed, seed))
}

/// Counts of each failure event across all trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureHistogram {
    pub misalignment: u64,
    pub collision: u64,
    pub deformation: u64,
    pub pick_exhausted: u64,
    pub precondition_failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: usize,
    pub mean_completion: f64,
    pub std_completion: f64,
    pub failure_histogram: FailureHistogram,
    pub results: Vec<TrialResult>,
}

/// Derive the seed of trial `index` from the base seed (splitmix64 over
/// a golden-ratio stride).
pub fn trial_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Run `trials` independent trials. Per-trial seeds depend only on the
/// base seed and the trial index, and aggregation runs over the ordered
/// result list, so serial and parallel execution produce byte-identical
/// reports.
pub fn monte_carlo(
    plan: &Plan,
    model: &SkillModel,
    trials: usize,
    policy: Policy,
    first_placed: bool,
    base_seed: u64,
    parallel: bool,
) -> Result<SimReport, ExecError> {
    if trials == 0 {
        return Err(ExecError::BadArgument("trials must be >= 1"));
    }
    model.validate()?;
    model.covers(&plan.steps)?;
    let seeds: Vec<u64> = (0..trials as u64).map(|i| trial_seed(base_seed, i)).collect();
    let results: Vec<TrialResult> = if parallel {
        seeds
            .par_iter()
            .map(|&s| run_trial_inner(plan, model, policy, first_placed, s))
            .collect()
    } else {
        seeds
            .iter()
            .map(|&s| run_trial_inner(plan, model, policy, first_placed, s))
            .collect()
    };

    let completions: Vec<f64> = results.iter().map(|r| r.completion).collect();
    let mean = pairwise_sum(&completions) / trials as f64;
    let std = if trials < 2 {
        0.0
    } else {
        let sq: Vec<f64> = completions.iter().map(|c| (c - mean) * (c - mean)).collect();
        (pairwise_sum(&sq) / (trials as f64 - 1.0)).sqrt()
    };

    let mut hist = FailureHistogram::default();
    for r in &results {
        for rec in &r.trace {
            match rec.event {
                StepEvent::Misalignment => hist.misalignment += 1,
                StepEvent::Collision => hist.collision += 1,
                StepEvent::Deformation => hist.deformation += 1,
                StepEvent::PickExhausted => hist.pick_exhausted += 1,
                StepEvent::PreconditionFailed => hist.precondition_failed += 1,
                StepEvent::Presatisfied | StepEvent::Success => {}
            }
        }
    }

    Ok(SimReport {
        trials,
        mean_completion: mean,
        std_completion: std,
        failure_histogram: hist,
        results,
    })
}

pub fn report_to_json(report: &SimReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}
