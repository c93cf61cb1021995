//! The boosting outer loop.
//!
//! Each outer iteration runs `ell` baseline steps from `x0` to `x`, pushes
//! the cumulative step `x - x0` into the direction buffer, refreshes anchors,
//! minimizes the loss over `x + P alpha` on a freshly drawn subspace batch,
//! and finally overwrites the newest buffer entry with the realized outer
//! step `x_next - x0`.
//!
//! Baseline batches and subspace batches come from two independently seeded
//! generators, so switching boosting off leaves the baseline batch sequence,
//! and therefore the whole baseline trajectory, bit-for-bit unchanged.

use std::time::{Duration, Instant};

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::{Baseline, BaselineConfig, BaselineError};
use crate::data::Dataset;
use crate::linalg::sub;
use crate::objective::{Batch, Objective, ObjectiveError};
use crate::subspace::{self, Anchor, DirectionBuffer, Enrichments, MomentumDirection, PushOutcome, SubspaceError};
use crate::subspace_opt::{cg_minimize, CgConfig, CgError, CgResult, SubspaceProblem};

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("invalid boost configuration: {field} {reason}")]
    Config { field: &'static str, reason: String },
    #[error("batch of {requested} rows requested from a dataset of {available}")]
    BatchTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error(transparent)]
    Cg(#[from] CgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    /// Baseline steps between subspace optimizations.
    pub ell: usize,
    /// Capacity `M` of the direction buffer.
    pub max_directions: usize,
    pub cg: CgConfig,
    pub subspace_batch_size: usize,
    pub baseline_batch_size: usize,
    pub enrich_gradient: bool,
    /// Decay `mu` of the momentum direction, if enabled.
    pub enrich_momentum: Option<f64>,
    pub anchor_periods: Vec<usize>,
    pub seed: u64,
    pub boosting_enabled: bool,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            ell: 200,
            max_directions: 10,
            cg: CgConfig::default(),
            subspace_batch_size: 1000,
            baseline_batch_size: 100,
            enrich_gradient: false,
            enrich_momentum: None,
            anchor_periods: Vec::new(),
            seed: 0,
            boosting_enabled: true,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self, train_len: usize) -> Result<(), BoostError> {
        let bad = |field, reason: String| Err(BoostError::Config { field, reason });
        if self.ell == 0 {
            return bad("ell", "must be at least 1".into());
        }
        if self.max_directions == 0 {
            return bad("M", "must be at least 1".into());
        }
        for (field, size) in [
            ("subspace_batch_size", self.subspace_batch_size),
            ("baseline_batch_size", self.baseline_batch_size),
        ] {
            if size == 0 || size > train_len {
                return bad(field, format!("must be in 1..={train_len}, got {size}"));
            }
        }
        if let Some(mu) = self.enrich_momentum {
            if !(0.0..1.0).contains(&mu) {
                return bad("enrich_momentum", format!("must lie in [0, 1), got {mu}"));
            }
        }
        if self.anchor_periods.contains(&0) {
            return bad("anchor_periods", "entries must be at least 1".into());
        }
        self.cg.validate()?;
        Ok(())
    }
}

/// One row of experiment output.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub outer_step: usize,
    pub baseline_steps: usize,
    /// Optimization time so far; loss evaluation for the trace is excluded.
    pub wall_ms: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub boost_applied: bool,
    pub phi0: Option<f64>,
    pub phi_star: Option<f64>,
    pub evals_used: usize,
}

/// Index source for mini-batches.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            order: (0..len).collect(),
            cursor: len,
        }
    }

    fn check(&self, size: usize) -> Result<(), BoostError> {
        if size == 0 || size > self.order.len() {
            return Err(BoostError::BatchTooLarge {
                requested: size,
                available: self.order.len(),
            });
        }
        Ok(())
    }

    /// Next consecutive slice of the current epoch's shuffled order; the
    /// order is reshuffled once fewer than `size` indices remain.
    pub fn next_epoch_batch(&mut self, size: usize) -> Result<Vec<usize>, BoostError> {
        self.check(size)?;
        if self.cursor + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let rows = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        Ok(rows)
    }

    /// Independent uniform sample without replacement.
    pub fn sample(&mut self, size: usize) -> Result<Vec<usize>, BoostError> {
        self.check(size)?;
        Ok(index::sample(&mut self.rng, self.order.len(), size).into_vec())
    }
}

/// What happened during one boosting step.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostOutcome {
    pub boost_index: usize,
    pub push: PushOutcome,
    pub anchors_reset: usize,
    pub columns: usize,
    /// `None` when the assembled subspace was empty and the step was skipped.
    pub cg: Option<CgResult>,
}

/// Boosted training run state.
pub struct Seboost<O: Objective> {
    objective: O,
    baseline: Baseline,
    cfg: BoostConfig,
    train: Dataset,
    test: Dataset,
    train_full: Batch,
    test_full: Batch,
    x: Vec<f64>,
    /// `x_0^k`, the point where the current outer iteration started.
    outer_start: Vec<f64>,
    buffer: DirectionBuffer,
    anchors: Vec<Anchor>,
    momentum: Option<MomentumDirection>,
    baseline_batches: BatchSampler,
    subspace_batches: BatchSampler,
    boosts: usize,
    baseline_steps: usize,
    outer_steps: usize,
    elapsed: Duration,
}

impl<O: Objective> Seboost<O> {
    pub fn new(
        objective: O,
        baseline: BaselineConfig,
        cfg: BoostConfig,
        x0: Vec<f64>,
        train: Dataset,
        test: Dataset,
    ) -> Result<Self, BoostError> {
        cfg.validate(train.len())?;
        let n = objective.dim();
        if x0.len() != n {
            return Err(ObjectiveError::ParamLength {
                expected: n,
                got: x0.len(),
            }
            .into());
        }
        let anchors = cfg
            .anchor_periods
            .iter()
            .map(|&r| Anchor::new(x0.clone(), r))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            baseline: Baseline::new(baseline, n)?,
            buffer: DirectionBuffer::new(cfg.max_directions, n)?,
            anchors,
            momentum: cfg.enrich_momentum.map(|mu| MomentumDirection::new(n, mu)),
            baseline_batches: BatchSampler::new(train.len(), cfg.seed, 0),
            subspace_batches: BatchSampler::new(train.len(), cfg.seed, 1),
            train_full: train.full_batch(),
            test_full: test.full_batch(),
            outer_start: x0.clone(),
            x: x0,
            objective,
            cfg,
            train,
            test,
            boosts: 0,
            baseline_steps: 0,
            outer_steps: 0,
            elapsed: Duration::ZERO,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.x
    }

    pub fn outer_start(&self) -> &[f64] {
        &self.outer_start
    }

    pub fn buffer(&self) -> &DirectionBuffer {
        &self.buffer
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn momentum(&self) -> Option<&MomentumDirection> {
        self.momentum.as_ref()
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn config(&self) -> &BoostConfig {
        &self.cfg
    }

    pub fn objective(&self) -> &O {
        &self.objective
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn test(&self) -> &Dataset {
        &self.test
    }

    pub fn boosts_done(&self) -> usize {
        self.boosts
    }

    pub fn baseline_steps(&self) -> usize {
        self.baseline_steps
    }

    /// Epochs of baseline data consumed so far.
    pub fn epochs(&self) -> f64 {
        (self.baseline_steps * self.cfg.baseline_batch_size) as f64 / self.train.len() as f64
    }

    /// One baseline step on the next mini-batch.
    pub fn baseline_step(&mut self) -> Result<(), BoostError> {
        let rows = self.baseline_batches.next_epoch_batch(self.cfg.baseline_batch_size)?;
        let batch = self.train.batch(&rows);
        let objective = &self.objective;
        self.baseline
            .step(&mut self.x, |p| objective.grad(p, &batch).map_err(BoostError::from))?;
        self.baseline_steps += 1;
        Ok(())
    }

    /// Subspace optimization closing the current outer iteration.
    pub fn boost_step(&mut self) -> Result<BoostOutcome, BoostError> {
        let cumulative = sub(&self.x, &self.outer_start);
        let push = self.buffer.push(cumulative)?;
        self.boosts += 1;
        let k = self.boosts;
        let anchors_reset = subspace::update_anchors(&mut self.anchors, k, &self.x);

        let rows = self.subspace_batches.sample(self.cfg.subspace_batch_size)?;
        let batch = self.train.batch(&rows);
        let gradient = if self.cfg.enrich_gradient {
            Some(self.objective.grad(&self.x, &batch)?)
        } else {
            None
        };
        let p = subspace::assemble(
            &self.buffer,
            push != PushOutcome::SkippedZero,
            &self.x,
            Enrichments {
                anchors: &self.anchors,
                momentum: self.momentum.as_ref(),
                gradient: gradient.as_deref(),
            },
        );

        let cg = if p.is_empty() {
            warn!("boost step {k}: empty subspace, skipping");
            None
        } else {
            let problem = SubspaceProblem::new(&self.x, &p, &self.objective, &batch)?;
            let result = cg_minimize(&problem, &self.cfg.cg)?;
            self.x = problem.apply(&result);
            Some(result)
        };

        let realized = sub(&self.x, &self.outer_start);
        if push == PushOutcome::SkippedZero {
            self.buffer.push(realized.clone())?;
        } else {
            self.buffer.replace_newest(realized.clone())?;
        }
        if let Some(md) = self.momentum.as_mut() {
            md.update(&realized);
        }
        self.outer_start.clone_from(&self.x);

        Ok(BoostOutcome {
            boost_index: k,
            push,
            anchors_reset,
            columns: p.ncols(),
            cg,
        })
    }

    /// Full-dataset train and test losses at the current parameters.
    pub fn evaluate(&self) -> Result<(f64, f64), BoostError> {
        Ok((
            self.objective.loss(&self.x, &self.train_full)?,
            self.objective.loss(&self.x, &self.test_full)?,
        ))
    }

    fn record(&self, outcome: Option<&BoostOutcome>) -> Result<TraceRecord, BoostError> {
        let (train_loss, test_loss) = self.evaluate()?;
        let cg = outcome.and_then(|o| o.cg.as_ref());
        Ok(TraceRecord {
            outer_step: self.outer_steps,
            baseline_steps: self.baseline_steps,
            wall_ms: self.elapsed.as_secs_f64() * 1e3,
            train_loss,
            test_loss,
            boost_applied: cg.is_some(),
            phi0: cg.map(|r| r.phi0),
            phi_star: cg.map(|r| r.phi_star),
            evals_used: cg.map_or(0, |r| r.evals_used),
        })
    }

    /// Trace record for the current state without stepping.
    pub fn initial_record(&self) -> Result<TraceRecord, BoostError> {
        self.record(None)
    }

    /// Up to `ell` baseline steps (fewer if `max_steps` is smaller), then a
    /// boosting step if a full `ell` steps were taken and boosting is on.
    pub fn outer_step(&mut self, max_steps: usize) -> Result<(TraceRecord, Option<BoostOutcome>), BoostError> {
        let steps = self.cfg.ell.min(max_steps);
        let start = Instant::now();
        for _ in 0..steps {
            self.baseline_step()?;
        }
        let outcome = if steps == self.cfg.ell && self.cfg.boosting_enabled {
            Some(self.boost_step()?)
        } else {
            self.outer_start.clone_from(&self.x);
            None
        };
        self.elapsed += start.elapsed();
        self.outer_steps += 1;
        Ok((self.record(outcome.as_ref())?, outcome))
    }

    /// A full run of `total_steps` baseline steps. The first record describes
    /// the starting point.
    pub fn run(&mut self, total_steps: usize) -> Result<Vec<TraceRecord>, BoostError> {
        let mut trace = vec![self.initial_record()?];
        while self.baseline_steps < total_steps {
            let (rec, _) = self.outer_step(total_steps - self.baseline_steps)?;
            trace.push(rec);
        }
        Ok(trace)
    }
}
