/// Tracks validation MAE and decides when to stop.
///
/// An epoch improves when its MAE is strictly below the best seen so far.
/// Training stops once `patience` consecutive epochs fail to improve. Ties
/// keep the earlier epoch as best.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_improvement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_improvement: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_mae: f64) -> StopDecision {
        let improved = match self.best {
            None => true,
            Some((_, best)) => val_mae < best,
        };
        if improved {
            self.best = Some((epoch, val_mae));
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        StopDecision {
            improved,
            stop: self.since_improvement >= self.patience,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.map(|(_, v)| v)
    }
}
