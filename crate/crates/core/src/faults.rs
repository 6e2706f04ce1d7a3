//! Step counter used to inject failures at internal workflow steps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("injected fault at step {step} ({label})")]
pub struct InjectedFault {
    pub step: usize,
    pub label: String,
}

/// Counts workflow steps and fails the armed one. Disarmed by default, in
/// which case it only counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultInjector {
    armed: Option<usize>,
    steps: usize,
    labels: Vec<String>,
}

impl FaultInjector {
    /// Fails the `step`-th step (1-based) counted from now.
    pub fn arm(&mut self, step: usize) {
        self.reset();
        self.armed = Some(step);
    }

    pub fn disarm(&mut self) {
        self.armed = None;
    }

    pub fn reset(&mut self) {
        self.steps = 0;
        self.labels.clear();
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn step(&mut self, label: &str) -> Result<(), InjectedFault> {
        self.steps += 1;
        self.labels.push(label.to_string());
        if self.armed == Some(self.steps) {
            self.armed = None;
            return Err(InjectedFault { step: self.steps, label: label.to_string() });
        }
        Ok(())
    }
}
