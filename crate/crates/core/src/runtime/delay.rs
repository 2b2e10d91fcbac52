use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SolveError;

/// Observed delays `d = completion_epoch − dispatch_epoch`, counted in
/// master updates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayStats {
    delays: Vec<u64>,
    max: u64,
    histogram: BTreeMap<u64, u64>,
}

impl DelayStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one update and returns its delay.
    pub fn record(&mut self, dispatch_epoch: u64, completion_epoch: u64) -> u64 {
        assert!(completion_epoch >= dispatch_epoch, "completion precedes dispatch");
        let d = completion_epoch - dispatch_epoch;
        self.delays.push(d);
        self.max = self.max.max(d);
        *self.histogram.entry(d).or_default() += 1;
        d
    }

    pub fn delays(&self) -> &[u64] {
        &self.delays
    }

    pub fn histogram(&self) -> &BTreeMap<u64, u64> {
        &self.histogram
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Largest delay observed so far.
    pub fn measure_tau(&self) -> Result<u64, SolveError> {
        if self.delays.is_empty() {
            return Err(SolveError::Runtime("no completed updates to measure a delay from".into()));
        }
        Ok(self.max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_max_and_histogram() {
        let mut stats = DelayStats::new();
        assert!(stats.measure_tau().is_err());
        assert_eq!(stats.record(0, 0), 0);
        assert_eq!(stats.record(1, 4), 3);
        assert_eq!(stats.record(2, 3), 1);
        assert_eq!(stats.record(5, 8), 3);
        assert_eq!(stats.measure_tau().unwrap(), 3);
        assert_eq!(stats.histogram().get(&3), Some(&2));
        assert_eq!(stats.delays(), &[0, 3, 1, 3]);
    }
}
