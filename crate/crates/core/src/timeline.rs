//! Two-timescale time model: consensus epochs grouped into human windows.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimelineError {
    #[error("epochs_per_window must be at least 1")]
    ZeroWindow,
    #[error("horizon_epochs must be at least 1")]
    ZeroHorizon,
    #[error("epoch {epoch} is outside the horizon of {horizon} epochs")]
    OutOfHorizon { epoch: u64, horizon: u64 },
}

/// Epoch/window layout of a run. `epochs_per_window` is `E`, the number of
/// consensus epochs per human window; `horizon_epochs` is the run length `T`.
///
/// The final window may be partial; its boundary is the last epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeline {
    epochs_per_window: u64,
    horizon_epochs: u64,
}

impl Timeline {
    pub fn new(epochs_per_window: u64, horizon_epochs: u64) -> Result<Self, TimelineError> {
        if epochs_per_window == 0 {
            return Err(TimelineError::ZeroWindow);
        }
        if horizon_epochs == 0 {
            return Err(TimelineError::ZeroHorizon);
        }
        Ok(Self {
            epochs_per_window,
            horizon_epochs,
        })
    }

    pub fn epochs_per_window(&self) -> u64 {
        self.epochs_per_window
    }

    pub fn horizon_epochs(&self) -> u64 {
        self.horizon_epochs
    }

    fn check(&self, epoch: u64) -> Result<(), TimelineError> {
        if epoch >= self.horizon_epochs {
            return Err(TimelineError::OutOfHorizon {
                epoch,
                horizon: self.horizon_epochs,
            });
        }
        Ok(())
    }

    /// Human window containing `epoch`.
    pub fn window_of(&self, epoch: u64) -> Result<u64, TimelineError> {
        self.check(epoch)?;
        Ok(epoch / self.epochs_per_window)
    }

    /// Whether window-boundary updates fire after processing `epoch`: the
    /// next epoch opens a new window, or `epoch` is the last of the horizon.
    pub fn is_window_boundary(&self, epoch: u64) -> Result<bool, TimelineError> {
        self.check(epoch)?;
        Ok((epoch + 1).is_multiple_of(self.epochs_per_window) || epoch + 1 == self.horizon_epochs)
    }

    /// Whether `epoch` is the first epoch of its window.
    pub fn is_window_start(&self, epoch: u64) -> Result<bool, TimelineError> {
        self.check(epoch)?;
        Ok(epoch.is_multiple_of(self.epochs_per_window))
    }

    /// Number of (possibly partial) windows covering the horizon.
    pub fn window_count(&self) -> u64 {
        self.horizon_epochs.div_ceil(self.epochs_per_window)
    }

    /// Epochs belonging to `window`, clipped to the horizon.
    pub fn epochs_in_window(&self, window: u64) -> std::ops::Range<u64> {
        let start = (window * self.epochs_per_window).min(self.horizon_epochs);
        let end = (start + self.epochs_per_window).min(self.horizon_epochs);
        start..end
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_examples() {
        assert_eq!(Timeline::new(1, 10).unwrap().window_of(0), Ok(0));
        assert_eq!(Timeline::new(3, 10).unwrap().window_of(5), Ok(1));
        assert_eq!(Timeline::new(1, 3000).unwrap().window_of(2999), Ok(2999));
    }

    #[test]
    fn boundary_examples() {
        let single = Timeline::new(1, 10).unwrap();
        assert_eq!(single.is_window_boundary(0), Ok(true));
        let three = Timeline::new(3, 10).unwrap();
        assert_eq!(three.is_window_boundary(1), Ok(false));
        assert_eq!(three.is_window_boundary(2), Ok(true));
        // partial final window closes at the last epoch
        assert_eq!(three.is_window_boundary(8), Ok(true));
        assert_eq!(three.is_window_boundary(9), Ok(true));
        assert_eq!(three.window_count(), 4);
        assert_eq!(three.epochs_in_window(3), 9..10);
    }

    #[test]
    fn out_of_horizon_is_domain_error() {
        let tl = Timeline::new(2, 4).unwrap();
        assert_eq!(
            tl.window_of(4),
            Err(TimelineError::OutOfHorizon { epoch: 4, horizon: 4 })
        );
        assert!(tl.is_window_boundary(9).is_err());
        assert_eq!(Timeline::new(0, 4), Err(TimelineError::ZeroWindow));
        assert_eq!(Timeline::new(1, 0), Err(TimelineError::ZeroHorizon));
    }

    proptest! {
        #[test]
        fn windows_partition_horizon(e in 1u64..20, t in 1u64..400) {
            let tl = Timeline::new(e, t).unwrap();
            let total: u64 = (0..tl.window_count()).map(|d| tl.epochs_in_window(d).count() as u64).sum();
            prop_assert_eq!(total, t);
            let mut prev = 0;
            let mut boundaries = 0;
            for epoch in 0..t {
                let d = tl.window_of(epoch).unwrap();
                prop_assert_eq!(d, epoch / e);
                prop_assert!(d >= prev);
                prop_assert!(tl.epochs_in_window(d).contains(&epoch));
                prev = d;
                if tl.is_window_boundary(epoch).unwrap() {
                    boundaries += 1;
                }
            }
            prop_assert_eq!(boundaries, tl.window_count());
            if e == 1 {
                prop_assert_eq!(tl.window_of(t - 1).unwrap(), t - 1);
            }
        }
    }
}
