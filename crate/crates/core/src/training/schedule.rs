use serde::{Deserialize, Serialize};

/// Global learning rates, visited in order as validation loss plateaus.
pub const LR_LADDER: [f64; 4] = [0.01, 0.005, 0.001, 0.0001];

/// Boost applied to newly added layers while on the first rung.
pub const NEW_LAYER_MULTIPLIER: f64 = 10.0;

/// Plateau-driven step schedule over [`LR_LADDER`]. The rung only advances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    rung: usize,
    patience: usize,
    min_delta: f64,
    best: f64,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrUpdate {
    pub global_lr: f64,
    pub new_layer_multiplier: f64,
    pub advanced: bool,
}

impl LrSchedule {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        LrSchedule {
            rung: 0,
            patience: patience.max(1),
            min_delta,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn rung(&self) -> usize {
        self.rung
    }

    pub fn lr(&self) -> f64 {
        LR_LADDER[self.rung]
    }

    pub fn new_layer_multiplier(&self) -> f64 {
        if self.rung == 0 {
            NEW_LAYER_MULTIPLIER
        } else {
            1.0
        }
    }

    /// Feeds one validation loss. After `patience` consecutive evaluations
    /// without improving the best loss by more than `min_delta`, moves one
    /// rung down the ladder (held at the last rung).
    pub fn update(&mut self, validation_loss: f64) -> LrUpdate {
        let mut advanced = false;
        if validation_loss < self.best - self.min_delta {
            self.best = validation_loss;
            self.stale = 0;
        } else {
            self.best = self.best.min(validation_loss);
            self.stale += 1;
            if self.stale >= self.patience {
                self.stale = 0;
                if self.rung + 1 < LR_LADDER.len() {
                    self.rung += 1;
                    advanced = true;
                }
            }
        }
        LrUpdate {
            global_lr: self.lr(),
            new_layer_multiplier: self.new_layer_multiplier(),
            advanced,
        }
    }
}
