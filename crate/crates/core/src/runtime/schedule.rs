use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::rng;

/// Duration assigned to trace entries whose task never completed.
pub const NEVER: u64 = u64::MAX / 4;

/// Task durations of the simulated scheduler, in integer ticks.
///
/// A task on scenario `s` takes `base_ticks` (or `scenario_ticks[s]`), plus
/// `slow_extra_ticks` when `s` is in `slow_scenarios`, plus a jitter drawn
/// uniformly from `0..=jitter_ticks` on the executing worker's stream. When
/// `trace` is set, the `k`-th dispatched task takes `trace[k]` ticks instead
/// (`null` entries never complete); dispatches beyond the trace fall back to
/// the model above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSchedule {
    pub seed: u64,
    pub base_ticks: u64,
    pub scenario_ticks: Option<Vec<u64>>,
    pub slow_scenarios: Vec<usize>,
    pub slow_extra_ticks: u64,
    pub jitter_ticks: u64,
    /// Seconds per tick, used for reported times and the time limit.
    pub tick_seconds: f64,
    pub trace: Option<Vec<Option<u64>>>,
    /// Dispatch sequence numbers whose task fails on the worker.
    pub faults: Vec<u64>,
}

impl Default for SimSchedule {
    fn default() -> Self {
        Self {
            seed: 0,
            base_ticks: 10,
            scenario_ticks: None,
            slow_scenarios: Vec::new(),
            slow_extra_ticks: 0,
            jitter_ticks: 0,
            tick_seconds: 1e-3,
            trace: None,
            faults: Vec::new(),
        }
    }
}

impl SimSchedule {
    pub fn constant(ticks: u64) -> Self {
        Self { base_ticks: ticks, ..Self::default() }
    }

    /// Fast/slow two-point model: scenarios in `slow` take `extra` more ticks.
    pub fn two_point(base: u64, slow: Vec<usize>, extra: u64, seed: u64) -> Self {
        Self { base_ticks: base, slow_scenarios: slow, slow_extra_ticks: extra, seed, ..Self::default() }
    }

    /// Replays recorded per-task durations (nanosecond ticks).
    pub fn from_trace(trace: Vec<Option<u64>>) -> Self {
        Self { trace: Some(trace), tick_seconds: 1e-9, ..Self::default() }
    }

    pub fn validate(&self, num_scenarios: usize) -> Result<(), SolveError> {
        if !(self.tick_seconds > 0.0 && self.tick_seconds.is_finite()) {
            return Err(SolveError::Config(format!("tick length must be positive, got {}", self.tick_seconds)));
        }
        if let Some(ticks) = &self.scenario_ticks {
            if ticks.len() != num_scenarios {
                return Err(SolveError::Config(format!(
                    "{} per-scenario durations for {num_scenarios} scenarios",
                    ticks.len()
                )));
            }
        }
        if let Some(&s) = self.slow_scenarios.iter().find(|&&s| s >= num_scenarios) {
            return Err(SolveError::Config(format!("slow scenario {s} out of range")));
        }
        Ok(())
    }

    pub fn worker_rng(&self, worker: usize) -> ChaCha8Rng {
        rng::worker_stream(self.seed, worker)
    }

    /// Duration of dispatch number `sequence` on `scenario`.
    pub fn duration(&self, sequence: u64, scenario: usize, rng: &mut ChaCha8Rng) -> u64 {
        if let Some(trace) = &self.trace {
            if let Some(entry) = trace.get(sequence as usize) {
                return entry.unwrap_or(NEVER);
            }
        }
        let base = self.scenario_ticks.as_ref().map_or(self.base_ticks, |t| t[scenario]);
        let slow = if self.slow_scenarios.contains(&scenario) { self.slow_extra_ticks } else { 0 };
        let jitter = if self.jitter_ticks > 0 { rng.gen_range(0..=self.jitter_ticks) } else { 0 };
        base + slow + jitter
    }

    pub fn is_fault(&self, sequence: u64) -> bool {
        self.faults.contains(&sequence)
    }
}

/// Simulated clock for the sequential algorithms: every subproblem runs on
/// a single virtual worker (worker 0's jitter stream).
#[derive(Debug, Clone)]
pub struct SimClock {
    schedule: SimSchedule,
    rng: ChaCha8Rng,
    now: u64,
    sequence: u64,
}

impl SimClock {
    pub fn new(schedule: SimSchedule) -> Self {
        let rng = schedule.worker_rng(0);
        Self { schedule, rng, now: 0, sequence: 0 }
    }

    /// Charges one subproblem on `scenario` and returns its duration.
    pub fn charge(&mut self, scenario: usize) -> u64 {
        let d = self.schedule.duration(self.sequence, scenario, &mut self.rng);
        self.sequence += 1;
        self.now = self.now.saturating_add(d);
        d
    }

    pub fn ticks(&self) -> u64 {
        self.now
    }

    pub fn seconds(&self) -> f64 {
        self.now as f64 * self.schedule.tick_seconds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_durations() {
        let schedule = SimSchedule::two_point(2, vec![1, 3], 20, 0);
        let mut rng = schedule.worker_rng(0);
        assert_eq!(schedule.duration(0, 0, &mut rng), 2);
        assert_eq!(schedule.duration(1, 1, &mut rng), 22);
        assert!(schedule.validate(4).is_ok());
        assert!(schedule.validate(2).is_err());
    }

    #[test]
    fn jitter_is_seeded() {
        let schedule = SimSchedule { jitter_ticks: 5, seed: 3, ..SimSchedule::constant(1) };
        let draw = |w| {
            let mut rng = schedule.worker_rng(w);
            (0..20).map(|k| schedule.duration(k, 0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(0), draw(0));
        assert_ne!(draw(0), draw(1));
        assert!(draw(2).iter().all(|&d| (1..=6).contains(&d)));
    }

    #[test]
    fn trace_entries_take_precedence() {
        let schedule = SimSchedule { base_ticks: 9, ..SimSchedule::from_trace(vec![Some(4), None]) };
        let mut rng = schedule.worker_rng(0);
        assert_eq!(schedule.duration(0, 0, &mut rng), 4);
        assert_eq!(schedule.duration(1, 0, &mut rng), NEVER);
        assert_eq!(schedule.duration(2, 0, &mut rng), 9);
    }

    #[test]
    fn clock_accumulates() {
        let mut clock = SimClock::new(SimSchedule::two_point(1, vec![0], 3, 0));
        clock.charge(0);
        clock.charge(1);
        assert_eq!(clock.ticks(), 5);
        assert!((clock.seconds() - 5e-3).abs() < 1e-15);
    }
}
