//! Train load on a ballasted track: sleeper pressures from axle passages.
//!
//! Each axle loads a sleeper through a triangular time pulse that equals one
//! while the axle is over the sleeper axis and drops linearly to zero as it
//! reaches the neighbouring sleepers.

use crate::error::{Error, Result};

/// Distance between sleeper axes (m).
pub const SLEEPER_SPACING: f64 = 0.65;
/// Loaded length along the track under one sleeper (m).
pub const SLEEPER_LOADED_LENGTH: f64 = 0.55;
/// Loaded width across the track under one sleeper (m).
pub const SLEEPER_LOADED_WIDTH: f64 = 2.1;

pub fn kmh_to_ms(speed_kmh: f64) -> f64 {
    speed_kmh / 3.6
}

fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Indicator of the loaded strip of the sleeper centred at `center`.
pub fn space_activation(x: f64, center: f64) -> f64 {
    let half = 0.5 * SLEEPER_LOADED_LENGTH;
    heaviside(x - (center - half)) - heaviside(x - (center + half))
}

/// Time modulation of one axle on one sleeper; `speed` in m/s.
///
/// `previous`, `center` and `next` are the axes of the sleeper and of its
/// neighbours; `axle_offset` is the axle position at `t = 0`.
pub fn time_modulation(t: f64, previous: f64, center: f64, next: f64, axle_offset: f64, speed: f64) -> f64 {
    let gate = heaviside(t - (previous + axle_offset) / speed) - heaviside(t - (next + axle_offset) / speed);
    if gate == 0.0 {
        return 0.0;
    }
    let hat = 1.0 - (t - (center + axle_offset) / speed).abs() / (SLEEPER_SPACING / speed);
    gate * hat.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingLoad {
    /// Sleeper axes along the track (m), uniformly spaced.
    pub sleepers: Vec<f64>,
    /// Axle positions at `t = 0` (m).
    pub axle_offsets: Vec<f64>,
    /// Train speed (km/h).
    pub speed_kmh: f64,
    /// Load per axle (N).
    pub axle_load: f64,
}

impl MovingLoad {
    pub fn new(sleepers: Vec<f64>, axle_offsets: Vec<f64>, speed_kmh: f64, axle_load: f64) -> Result<Self> {
        if !(speed_kmh.is_finite() && speed_kmh > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "train speed must be positive, got {speed_kmh}"
            )));
        }
        if sleepers.is_empty() || axle_offsets.is_empty() {
            return Err(Error::Empty("moving load needs sleepers and axles".into()));
        }
        for w in sleepers.windows(2) {
            if ((w[1] - w[0]) - SLEEPER_SPACING).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "sleepers must be {SLEEPER_SPACING} m apart"
                )));
            }
        }
        Ok(Self {
            sleepers,
            axle_offsets,
            speed_kmh,
            axle_load,
        })
    }

    /// `n` sleepers starting at `first` (m).
    pub fn uniform_sleepers(first: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| first + SLEEPER_SPACING * i as f64).collect()
    }

    /// Peak pressure under a sleeper (Pa).
    pub fn peak_pressure(&self) -> f64 {
        self.axle_load / (SLEEPER_LOADED_LENGTH * SLEEPER_LOADED_WIDTH)
    }

    fn neighbours(&self, sleeper: usize) -> (f64, f64, f64) {
        let c = self.sleepers[sleeper];
        (c - SLEEPER_SPACING, c, c + SLEEPER_SPACING)
    }

    /// Modulation of axle `axle` on sleeper `sleeper` at time `t`.
    pub fn modulation(&self, sleeper: usize, axle: usize, t: f64) -> f64 {
        let (p, c, n) = self.neighbours(sleeper);
        time_modulation(t, p, c, n, self.axle_offsets[axle], kmh_to_ms(self.speed_kmh))
    }

    /// Pressure on sleeper `sleeper` (Pa), summed over axles.
    pub fn sleeper_pressure(&self, sleeper: usize, t: f64) -> f64 {
        let pmax = self.peak_pressure();
        (0..self.axle_offsets.len())
            .map(|a| pmax * self.modulation(sleeper, a, t))
            .sum()
    }

    /// Pressure on every sleeper at time `t`.
    pub fn pressures(&self, t: f64) -> Vec<f64> {
        (0..self.sleepers.len()).map(|s| self.sleeper_pressure(s, t)).collect()
    }

    /// Distributed pressure at track abscissa `x`.
    pub fn pressure_at(&self, x: f64, t: f64) -> f64 {
        self.sleepers
            .iter()
            .enumerate()
            .map(|(s, &c)| space_activation(x, c) * self.sleeper_pressure(s, t))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train() -> MovingLoad {
        let axles = vec![0.0, -2.5, -17.5, -20.0, -24.0, -26.5, -41.5, -44.0];
        MovingLoad::new(MovingLoad::uniform_sleepers(0.5, 25), axles, 180.0, 2.0e5).unwrap()
    }

    #[test]
    fn non_positive_speed_is_rejected() {
        assert!(MovingLoad::new(vec![0.0], vec![0.0], 0.0, 1.0).is_err());
        assert!(MovingLoad::new(vec![0.0], vec![0.0], -5.0, 1.0).is_err());
    }

    #[test]
    fn peak_pressure_from_loaded_area() {
        assert!((train().peak_pressure() - 2.0e5 / 1.155).abs() < 1e-6);
    }

    #[test]
    fn strip_activation() {
        assert_eq!(space_activation(1.0, 1.0), 1.0);
        assert_eq!(space_activation(1.0 + 0.3, 1.0), 0.0);
        assert_eq!(space_activation(1.0 - 0.3, 1.0), 0.0);
    }

    #[test]
    fn pressure_is_nonnegative() {
        let tr = train();
        for k in 0..2000 {
            let t = k as f64 * 1e-3;
            assert!(tr.pressures(t).iter().all(|&p| p >= 0.0));
        }
    }
}
