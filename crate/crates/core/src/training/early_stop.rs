use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Continue,
    Stop,
}

/// Patience counter over a monitored validation loss. Epochs are 1-based;
/// `best_epoch` is 0 until the first value arrives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub min_delta: f64,
    epochs_seen: usize,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        EarlyStopState {
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            patience,
            min_delta: 0.0,
            epochs_seen: 0,
        }
    }

    pub fn epochs_seen(&self) -> usize {
        self.epochs_seen
    }

    /// Records the next epoch's validation loss. A strict improvement resets the
    /// counter; once the counter reaches `patience` the decision is `Stop`.
    pub fn step(&mut self, val_loss: f64) -> Decision {
        self.epochs_seen += 1;
        if val_loss < self.best_val_loss - self.min_delta {
            self.best_val_loss = val_loss;
            self.best_epoch = self.epochs_seen;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        if self.epochs_since_improvement >= self.patience {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    pub fn improved_last_step(&self) -> bool {
        self.epochs_seen > 0 && self.best_epoch == self.epochs_seen
    }
}

/// Runs the rule over a whole sequence; returns the 1-based stop position, if any.
pub fn stop_position(losses: &[f64], patience: usize) -> (Option<usize>, EarlyStopState) {
    let mut state = EarlyStopState::new(patience);
    for (i, &l) in losses.iter().enumerate() {
        if state.step(l) == Decision::Stop {
            return (Some(i + 1), state);
        }
    }
    (None, state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_patience_non_improvements() {
        let (stop, state) = stop_position(&[0.5, 0.4, 0.41, 0.42, 0.43, 0.44, 0.45], 5);
        assert_eq!(stop, Some(7));
        assert_eq!(state.best_epoch, 2);
        assert_eq!(state.best_val_loss, 0.4);
    }

    #[test]
    fn decreasing_sequence_never_stops() {
        let losses: Vec<f64> = (0..30).map(|i| 1.0 / (i + 1) as f64).collect();
        let (stop, state) = stop_position(&losses, 5);
        assert_eq!(stop, None);
        assert_eq!(state.best_epoch, 30);
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        let mut s = EarlyStopState::new(5);
        s.step(0.5);
        s.step(0.5);
        assert_eq!(s.epochs_since_improvement, 1);
        assert_eq!(s.best_epoch, 1);
        assert!(!s.improved_last_step());
    }
}
