//! The measurement-encoded random walk and its sequential KS decision rule.
//!
//! The code is split along the privacy boundary. [`Inspector`] owns the only
//! state the robot keeps: the list of commanded step lengths, the running
//! minimum P-value and the step counter. It sees each count transiently to
//! pick a step bound and never stores it. [`World`] holds the map, the pose
//! and the physics; anything it knows reaches the harness only through an
//! [`Observer`], never the inspector.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MapSpec, Pose, SourceSpec, Vec2};
use crate::sensing::{self, DetectorModel, InspectorSpec};
use crate::stats::{ks_one_sample, ks_two_sample, KsResult, ReferenceCdf};

/// Redirect budget for a single commanded motion.
pub const MAX_REDIRECTS: usize = 100;

/// Source-free step law the realized steps are tested against. Values are
/// normalized by `c_U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    Analytic(ReferenceCdf),
    Empirical { sample: Vec<f64> },
}

impl Reference {
    pub fn test(&self, normalized_steps: &[f64]) -> Result<KsResult> {
        match self {
            Reference::Analytic(cdf) => ks_one_sample(normalized_steps, |s| cdf.cdf(s)),
            Reference::Empirical { sample } => ks_two_sample(normalized_steps, sample),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    /// Background estimate `B`.
    pub background: f64,
    pub l_x: f64,
    pub l_y: f64,
    pub p_star: f64,
    /// Run length `T`.
    pub max_steps: usize,
    /// Number of KS tests `n`; must divide `T`.
    pub tests: usize,
    pub z: f64,
    pub c_l: f64,
    pub c_u: f64,
    pub reference: Reference,
}

impl AlgoParams {
    /// Parameters with the analytic reference implied by `B`, `z` and the
    /// step bounds.
    #[allow(clippy::too_many_arguments)]
    pub fn analytic(
        background: f64,
        (l_x, l_y): (f64, f64),
        p_star: f64,
        max_steps: usize,
        tests: usize,
        z: f64,
        c_l: f64,
        c_u: f64,
    ) -> Result<Self> {
        let params = Self {
            background,
            l_x,
            l_y,
            p_star,
            max_steps,
            tests,
            z,
            c_l,
            c_u,
            reference: Reference::Analytic(ReferenceCdf::from_params(c_l, c_u, background, z)?),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParams(m));
        if !(self.c_l >= 0.0 && self.c_u > self.c_l && self.c_u.is_finite()) {
            return fail(format!("need 0 <= c_L < c_U, got {} and {}", self.c_l, self.c_u));
        }
        if !(self.p_star > 0.0 && self.p_star < 1.0) {
            return fail(format!("p* must lie in (0, 1), got {}", self.p_star));
        }
        if self.tests == 0 {
            return fail("test count n must be >= 1".into());
        }
        if self.max_steps > 0 && (self.max_steps < self.tests || self.max_steps % self.tests != 0) {
            return fail(format!(
                "n = {} must divide T = {} with T >= n",
                self.tests, self.max_steps
            ));
        }
        if !(self.background >= 0.0 && self.z >= 0.0) {
            return fail("background and z must be non-negative".into());
        }
        if let Reference::Empirical { sample } = &self.reference {
            if sample.is_empty() {
                return fail("empirical reference sample is empty".into());
            }
        }
        Ok(())
    }

    /// Steps between KS tests, `T / n`.
    pub fn test_interval(&self) -> usize {
        (self.max_steps / self.tests).max(1)
    }

    /// Per-test significance `p* / n`.
    pub fn trigger(&self) -> f64 {
        self.p_star / self.tests as f64
    }
}

/// Everything the inspector retains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectorMemory {
    /// Commanded step lengths `ds`, meters, in order.
    pub steps: Vec<f64>,
    pub p_min: f64,
}

impl Default for InspectorMemory {
    fn default() -> Self {
        Self {
            steps: Vec::new(),
            p_min: 1.0,
        }
    }
}

impl InspectorMemory {
    pub fn t(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    AbsenceConfirmed,
    AnomalyDetected,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Continue => "continue",
            Decision::AbsenceConfirmed => "absence_confirmed",
            Decision::AnomalyDetected => "anomaly_detected",
        }
    }
}

/// The decision rule. Its only inputs are the inspector's memory and the
/// algorithm parameters.
pub fn decide(memory: &InspectorMemory, params: &AlgoParams) -> Decision {
    if memory.p_min <= params.trigger() {
        Decision::AnomalyDetected
    } else if memory.t() >= params.max_steps {
        Decision::AbsenceConfirmed
    } else {
        Decision::Continue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValuePoint {
    pub t: usize,
    pub p_value: f64,
    pub p_min: f64,
}

/// A commanded motion: rotate by `dtheta`, then move `ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub ds: f64,
    pub dtheta: f64,
}

/// The robot's decision-making side.
#[derive(Debug, Clone)]
pub struct Inspector {
    params: AlgoParams,
    memory: InspectorMemory,
    rng: ChaCha8Rng,
    testing: bool,
}

impl Inspector {
    pub fn new(params: AlgoParams, rng: ChaCha8Rng) -> Self {
        Self {
            params,
            memory: InspectorMemory::default(),
            rng,
            testing: true,
        }
    }

    /// Disables KS testing (pure exploration, used for coverage studies).
    pub fn without_testing(mut self) -> Self {
        self.testing = false;
        self
    }

    pub fn params(&self) -> &AlgoParams {
        &self.params
    }

    pub fn memory(&self) -> &InspectorMemory {
        &self.memory
    }

    pub fn into_memory(self) -> InspectorMemory {
        self.memory
    }

    /// Picks the next motion from the current count. The count is not kept.
    pub fn plan(&mut self, counts: u64) -> Command {
        let exceeded = sensing::threshold_exceeded(counts, self.params.background, self.params.z);
        let c = if exceeded { self.params.c_l } else { self.params.c_u };
        let ds = c * self.rng.gen::<f64>();
        let dtheta = TAU * self.rng.gen::<f64>();
        Command { ds, dtheta }
    }

    /// Appends the commanded step, runs the scheduled KS test, and returns
    /// the decision along with the test result when one ran.
    pub fn commit(&mut self, ds: f64) -> Result<(Decision, Option<PValuePoint>)> {
        self.memory.steps.push(ds);
        let t = self.memory.t();
        let mut point = None;
        if self.testing && t % self.params.test_interval() == 0 {
            let normalized: Vec<f64> = self.memory.steps.iter().map(|d| d / self.params.c_u).collect();
            let ks = self.params.reference.test(&normalized)?;
            self.memory.p_min = self.memory.p_min.min(ks.p_value);
            point = Some(PValuePoint {
                t,
                p_value: ks.p_value,
                p_min: self.memory.p_min,
            });
        }
        Ok((decide(&self.memory, &self.params), point))
    }
}

/// Outcome of one commanded motion including redirects.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionOutcome {
    pub pose: Pose,
    pub redirects: usize,
    /// Realized path length, equal to `ds` unless truncated.
    pub realized: f64,
    pub truncated: bool,
    /// Straight segment lengths between heading changes.
    pub segments: Vec<f64>,
}

/// Rotates by `dtheta`, then travels `ds`, redirecting to a fresh uniform
/// heading each time the disc is blocked.
pub fn execute_motion<R: Rng + ?Sized>(
    map: &MapSpec,
    pose: Pose,
    ds: f64,
    dtheta: f64,
    r_i: f64,
    rng: &mut R,
) -> Result<MotionOutcome> {
    let mut pose = pose.rotated(dtheta);
    let mut remaining = ds.max(0.0);
    let mut segments = Vec::with_capacity(1);
    let mut redirects = 0;
    let mut truncated = false;
    loop {
        let out = map.travel(pose, remaining, r_i)?;
        segments.push(out.traveled);
        pose = out.end;
        if !out.blocked {
            remaining = 0.0;
            break;
        }
        remaining -= out.traveled;
        if redirects == MAX_REDIRECTS {
            truncated = true;
            break;
        }
        redirects += 1;
        pose = Pose::new(pose.position, rng.gen_range(0.0..TAU));
    }
    Ok(MotionOutcome {
        pose,
        redirects,
        realized: ds.max(0.0) - remaining,
        truncated,
        segments,
    })
}

/// Harness-side hooks into the omniscient state. Nothing flows back.
pub trait Observer {
    fn on_start(&mut self, _pose: Pose) {}
    /// Called before each measurement; `motions` is the number of completed
    /// motions so far.
    fn on_measure(&mut self, _motions: usize, _position: Vec2) {}
    fn on_motion(&mut self, _motions: usize, _outcome: &MotionOutcome) {}
}

impl Observer for () {}

/// The physical side: map, detector and the robot's true pose.
#[derive(Debug, Clone)]
pub struct World<'a> {
    pub map: &'a MapSpec,
    pub detector: &'a DetectorModel,
    pub spec: &'a InspectorSpec,
    pub pose: Pose,
    rng: ChaCha8Rng,
}

impl<'a> World<'a> {
    /// Places the robot uniformly over the collision-free placements.
    pub fn new(
        map: &'a MapSpec,
        detector: &'a DetectorModel,
        spec: &'a InspectorSpec,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        let pose = map.sample_free_pose(&mut rng, spec.r_i)?;
        Ok(Self {
            map,
            detector,
            spec,
            pose,
            rng,
        })
    }

    /// Places the robot at a given pose, which must be collision free.
    pub fn at(
        map: &'a MapSpec,
        detector: &'a DetectorModel,
        spec: &'a InspectorSpec,
        pose: Pose,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if !map.is_free(pose.position, spec.r_i) {
            return Err(Error::StartInCollision);
        }
        Ok(Self {
            map,
            detector,
            spec,
            pose,
            rng,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn measure(&mut self) -> u64 {
        sensing::measure(&mut self.rng, self.detector, self.map, self.pose.position).counts
    }

    pub fn execute(&mut self, cmd: Command) -> Result<MotionOutcome> {
        let out = execute_motion(self.map, self.pose, cmd.ds, cmd.dtheta, self.spec.r_i, &mut self.rng)?;
        self.pose = out.pose;
        Ok(out)
    }
}

/// Derives the two independent streams of a trial: physics and inspector.
pub fn trial_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let world = ChaCha8Rng::seed_from_u64(seed);
    let mut inspector = ChaCha8Rng::seed_from_u64(seed);
    inspector.set_stream(1);
    (world, inspector)
}

/// Omniscient view of a trial, kept apart from the inspector's memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OmniscientRecord {
    pub initial_pose: Option<Pose>,
    pub source: Option<SourceSpec>,
    /// Position of every measurement, index = completed motions.
    pub positions: Vec<Vec2>,
    /// Realized path length of every motion.
    pub realized: Vec<f64>,
    pub redirects: usize,
    pub truncated_motions: usize,
}

impl Observer for OmniscientRecord {
    fn on_start(&mut self, pose: Pose) {
        self.initial_pose = Some(pose);
    }

    fn on_measure(&mut self, _motions: usize, position: Vec2) {
        self.positions.push(position);
    }

    fn on_motion(&mut self, _motions: usize, outcome: &MotionOutcome) {
        self.realized.push(outcome.realized);
        self.redirects += outcome.redirects;
        self.truncated_motions += usize::from(outcome.truncated);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub decision: Decision,
    pub steps: usize,
    pub memory: InspectorMemory,
    pub p_trace: Vec<PValuePoint>,
    #[serde(skip)]
    pub omniscient: Option<OmniscientRecord>,
}

/// Runs the full algorithm once, recording the omniscient view.
pub fn run_trial(
    params: &AlgoParams,
    map: &MapSpec,
    detector: &DetectorModel,
    inspector: &InspectorSpec,
    seed: u64,
) -> Result<TrialResult> {
    let mut record = OmniscientRecord::default();
    let mut result = run_trial_with(params, map, detector, inspector, seed, &mut record)?;
    record.source = map.active_source().copied();
    result.omniscient = Some(record);
    Ok(result)
}

/// Runs the full algorithm once, reporting omniscient events to `observer`.
pub fn run_trial_with<O: Observer + ?Sized>(
    params: &AlgoParams,
    map: &MapSpec,
    detector: &DetectorModel,
    spec: &InspectorSpec,
    seed: u64,
    observer: &mut O,
) -> Result<TrialResult> {
    params.validate()?;
    let (world_rng, inspector_rng) = trial_streams(seed);
    let mut world = World::new(map, detector, spec, world_rng)?;
    let mut inspector = Inspector::new(params.clone(), inspector_rng);
    let mut p_trace = Vec::with_capacity(params.tests);
    observer.on_start(world.pose);

    let mut decision = decide(inspector.memory(), params);
    while decision == Decision::Continue {
        let motions = inspector.memory().t();
        observer.on_measure(motions, world.pose.position);
        let counts = world.measure();
        let cmd = inspector.plan(counts);
        let outcome = world.execute(cmd)?;
        observer.on_motion(motions, &outcome);
        let (d, point) = inspector.commit(cmd.ds)?;
        p_trace.extend(point);
        decision = d;
    }
    let memory = inspector.into_memory();
    Ok(TrialResult {
        decision,
        steps: memory.t(),
        memory,
        p_trace,
        omniscient: None,
    })
}
