use crate::{Error, Result};

/// Linear ε decay by episode, held at `end` afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Episodes over which ε falls from `start` to `end`.
    pub horizon: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            horizon: 50_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        EpsilonSchedule {
            start: epsilon,
            end: epsilon,
            horizon: 1,
        }
    }

    pub fn at(&self, episode: u64) -> f64 {
        if episode >= self.horizon {
            return self.end;
        }
        let frac = episode as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.start) || !unit.contains(&self.end) || self.horizon == 0 {
            return Err(Error::Invalid(
                "epsilon schedule needs start and end in [0, 1] and a positive horizon".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.at(0), 1.0);
        assert!((s.at(25_000) - 0.525).abs() < 1e-12);
        assert_eq!(s.at(50_000), 0.05);
        assert_eq!(s.at(1_000_000), 0.05);
    }

    #[test]
    fn monotone_non_increasing() {
        let s = EpsilonSchedule::default();
        let mut prev = s.at(0);
        for e in (0..60_000).step_by(997) {
            let v = s.at(e);
            assert!(v <= prev);
            prev = v;
        }
    }
}
