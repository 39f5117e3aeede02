use crate::scene::GraspDirection;

/// One (object, direction) classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Prediction {
    pub object: usize,
    pub direction: GraspDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateConfig {
    /// Consecutive identical predictions required to commit (`t`).
    pub consecutive_required: usize,
    /// Leading steps whose predictions are discarded (`k`).
    pub warmup_steps: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig { consecutive_required: 80, warmup_steps: 300 }
    }
}

impl GateConfig {
    /// First step at which a commit is possible.
    pub fn earliest_commit_step(&self) -> usize {
        self.warmup_steps + self.consecutive_required
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commitment {
    pub prediction: Prediction,
    pub step: usize,
}

/// Commitment gate. Steps are 1-based; the first `warmup_steps` predictions
/// are dropped, after which a goal is committed once the same prediction
/// has been seen `consecutive_required` times in a row. A commitment is
/// final.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateState {
    pub config: GateConfig,
    pub candidate: Option<Prediction>,
    pub run_length: usize,
    pub step: usize,
    pub committed: Option<Commitment>,
}

impl GateState {
    pub fn new(config: GateConfig) -> Self {
        GateState { config, candidate: None, run_length: 0, step: 0, committed: None }
    }

    /// Returns the state after observing `prediction`; committed states are
    /// returned unchanged.
    pub fn update(&self, prediction: Prediction) -> GateState {
        let mut next = *self;
        next.observe(prediction);
        next
    }

    /// In-place form of [`GateState::update`]. Returns the commitment made
    /// by this call, if any.
    pub fn observe(&mut self, prediction: Prediction) -> Option<Commitment> {
        if self.committed.is_some() {
            return None;
        }
        self.step += 1;
        if self.step <= self.config.warmup_steps {
            return None;
        }
        if self.candidate == Some(prediction) {
            self.run_length += 1;
        } else {
            self.candidate = Some(prediction);
            self.run_length = 1;
        }
        if self.run_length >= self.config.consecutive_required {
            self.run_length = self.config.consecutive_required;
            let c = Commitment { prediction, step: self.step };
            self.committed = Some(c);
            return Some(c);
        }
        None
    }

    /// Progress of the current run toward commitment, in `[0, 1]`.
    pub fn progress(&self) -> f64 {
        if self.committed.is_some() {
            return 1.0;
        }
        self.run_length as f64 / self.config.consecutive_required.max(1) as f64
    }
}
