//! Per-phase wall-clock accounting.
//!
//! Every actor owns a [`PhaseClock`]; clocks merge at the end of a run into
//! a [`TimeBreakdown`]. Queue waiting is never measured — only the work a
//! phase actually performs — so shares reflect computation, not scheduling.

use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Encryption,
    Decryption,
    BlockManagement,
    RepresentationTransfer,
    GradientCompute,
    UpdateApply,
    Evaluation,
}

pub const ALL_PHASES: [Phase; 7] = [
    Phase::Encryption,
    Phase::Decryption,
    Phase::BlockManagement,
    Phase::RepresentationTransfer,
    Phase::GradientCompute,
    Phase::UpdateApply,
    Phase::Evaluation,
];

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Encryption => "encryption",
            Phase::Decryption => "decryption",
            Phase::BlockManagement => "block_management",
            Phase::RepresentationTransfer => "representation_transfer",
            Phase::GradientCompute => "gradient_compute",
            Phase::UpdateApply => "update_apply",
            Phase::Evaluation => "evaluation",
        }
    }

    fn index(self) -> usize {
        ALL_PHASES.iter().position(|p| *p == self).unwrap()
    }
}

/// Accumulated durations per phase.
#[derive(Debug, Clone, Default)]
pub struct PhaseClock {
    totals: [Duration; 7],
}

impl PhaseClock {
    pub fn measure<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.totals[phase.index()] += start.elapsed();
        out
    }

    pub fn add(&mut self, phase: Phase, d: Duration) {
        self.totals[phase.index()] += d;
    }

    pub fn merge(&mut self, other: &PhaseClock) {
        for (mine, theirs) in self.totals.iter_mut().zip(&other.totals) {
            *mine += *theirs;
        }
    }

    pub fn breakdown(&self) -> TimeBreakdown {
        TimeBreakdown {
            durations: self.totals,
        }
    }
}

/// Final per-phase durations of a run. The measured total is the sum over
/// all phases, so shares always add up to at most 100%.
#[derive(Debug, Clone, Default)]
pub struct TimeBreakdown {
    durations: [Duration; 7],
}

impl TimeBreakdown {
    pub fn duration(&self, phase: Phase) -> Duration {
        self.durations[phase.index()]
    }

    pub fn total(&self) -> Duration {
        self.durations.iter().sum()
    }

    /// Sum over the six training phases (everything except evaluation).
    pub fn training_total(&self) -> Duration {
        self.total() - self.duration(Phase::Evaluation)
    }

    /// Fraction of the measured total spent in `phase`; zero when nothing
    /// was measured.
    pub fn share(&self, phase: Phase) -> f64 {
        let total = self.total().as_secs_f64();
        if total == 0.0 {
            0.0
        } else {
            self.duration(phase).as_secs_f64() / total
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, Duration)> + '_ {
        ALL_PHASES.iter().map(|&p| (p, self.duration(p)))
    }
}
