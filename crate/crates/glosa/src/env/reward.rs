//! Decision-step reward: weighted fuel use, a stop penalty, and shaping
//! terms that teach the advisory heads to stay inside the useful speed
//! band.

use serde::{Deserialize, Serialize};

use crate::error::{GlosaError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight on fuel burned during the step (mg). Negative: burning fuel
    /// costs reward.
    pub alpha: f64,
    /// Weight on the stop term.
    pub beta: f64,
    /// Weight on the shaping term.
    pub omega: f64,
    /// Raw stop term when the vehicle is at standstill after the step.
    pub stop_penalty: f64,
    /// Speeds at or below this count as stopped, m/s.
    pub stop_speed: f64,
    /// Shaping when an advisory aims inside the valid speed band.
    pub advise_valid_bonus: f64,
    /// Shaping when an advisory aims outside it.
    pub advise_invalid_penalty: f64,
    /// Shaping for holding at an adequate speed.
    pub hold_ok_bonus: f64,
    /// Shaping for holding while too slow.
    pub hold_slow_penalty: f64,
    /// Valid advisory band, m/s.
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: -0.1,
            beta: 0.6,
            omega: 10.0,
            stop_penalty: -200.0,
            stop_speed: 0.1,
            advise_valid_bonus: 5.0,
            advise_invalid_penalty: -2.0,
            hold_ok_bonus: 4.0,
            hold_slow_penalty: -2.0,
            v_min: 4.0,
            v_max: 11.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min >= 0.0 && self.v_max > self.v_min) {
            return Err(GlosaError::Config(format!(
                "need 0 <= v_min < v_max (got {} and {})",
                self.v_min, self.v_max
            )));
        }
        if !(self.stop_speed >= 0.0) {
            return Err(GlosaError::Config("stop_speed must be non-negative".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("omega", self.omega),
            ("stop_penalty", self.stop_penalty),
            ("advise_valid_bonus", self.advise_valid_bonus),
            ("advise_invalid_penalty", self.advise_invalid_penalty),
            ("hold_ok_bonus", self.hold_ok_bonus),
            ("hold_slow_penalty", self.hold_slow_penalty),
        ] {
            if !v.is_finite() {
                return Err(GlosaError::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// The three raw reward terms and their weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardParts {
    /// Fuel burned during the step, mg.
    pub fuel_term: f64,
    /// Stop term (0 or `stop_penalty`).
    pub stop_term: f64,
    /// Shaping term for the chosen action.
    pub shaping_term: f64,
    pub total: f64,
}

/// Score one decision step.
///
/// `advise` is the discrete half of the action; `accel` its continuous
/// half. `speed_before` is the vehicle speed at decision time,
/// `stopped_during_step` whether any end-of-tick speed within the step was
/// at or below `stop_speed`, and `fuel_mg` the fuel burned across the step.
pub fn compute_reward(
    advise: bool,
    accel: f64,
    speed_before: f64,
    stopped_during_step: bool,
    fuel_mg: f64,
    step_seconds: f64,
    cfg: &RewardConfig,
) -> RewardParts {
    let fuel_term = fuel_mg;
    let stop_term = if stopped_during_step { cfg.stop_penalty } else { 0.0 };
    let shaping_term = if advise {
        let v_aim = speed_before + accel * step_seconds;
        if v_aim >= cfg.v_min && v_aim <= cfg.v_max {
            cfg.advise_valid_bonus
        } else {
            cfg.advise_invalid_penalty
        }
    } else if speed_before < cfg.v_min {
        cfg.hold_slow_penalty
    } else {
        cfg.hold_ok_bonus
    };
    let total = cfg.alpha * fuel_term + cfg.beta * stop_term + cfg.omega * shaping_term;
    RewardParts { fuel_term, stop_term, shaping_term, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stopped_hold_example() {
        // Standstill under a hold action burning 50 mg: -0.1*50 from fuel,
        // 0.6*(-200) from the stop, 10*(-2) from holding while too slow.
        let r = compute_reward(false, 0.0, 0.05, true, 50.0, 1.0, &RewardConfig::default());
        assert_relative_eq!(r.total, -145.0, epsilon = 1e-12);
        assert_relative_eq!(r.fuel_term, 50.0, epsilon = 1e-12);
        assert_relative_eq!(r.stop_term, -200.0, epsilon = 1e-12);
        assert_relative_eq!(r.shaping_term, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn advisory_band_is_inclusive() {
        let cfg = RewardConfig::default();
        // Aim exactly at the band edges.
        let low = compute_reward(true, -4.0, 8.0, false, 0.0, 1.0, &cfg);
        let high = compute_reward(true, 3.0, 8.0, false, 0.0, 1.0, &cfg);
        assert_eq!(low.shaping_term, cfg.advise_valid_bonus);
        assert_eq!(high.shaping_term, cfg.advise_valid_bonus);
        // One step beyond either edge.
        let below = compute_reward(true, -4.1, 8.0, false, 0.0, 1.0, &cfg);
        let above = compute_reward(true, 3.1, 8.0, false, 0.0, 1.0, &cfg);
        assert_eq!(below.shaping_term, cfg.advise_invalid_penalty);
        assert_eq!(above.shaping_term, cfg.advise_invalid_penalty);
    }

    #[test]
    fn hold_branches_on_current_speed() {
        let cfg = RewardConfig::default();
        assert_eq!(compute_reward(false, 0.0, 3.9, false, 0.0, 1.0, &cfg).shaping_term, -2.0);
        assert_eq!(compute_reward(false, 0.0, 4.0, false, 0.0, 1.0, &cfg).shaping_term, 4.0);
        assert_eq!(compute_reward(false, 0.0, 11.0, false, 0.0, 1.0, &cfg).shaping_term, 4.0);
    }

    #[test]
    fn aim_scales_with_step_length(){
        let cfg = RewardConfig::default();
        // 2 m/s^2 over 2 s from 8 m/s aims at 12, outside the band.
        let r = compute_reward(true, 2.0, 8.0, false, 0.0, 2.0, &cfg);
        assert_eq!(r.shaping_term, cfg.advise_invalid_penalty);
        let r = compute_reward(true, 2.0, 8.0, false, 0.0, 1.0, &cfg);
        assert_eq!(r.shaping_term, cfg.advise_valid_bonus);
    }

    #[test]
    fn weights_zero_out_terms() {
        let cfg = RewardConfig { alpha: 0.0, beta: 0.0, omega: 0.0, ..RewardConfig::default() };
        let r = compute_reward(false, 0.0, 0.0, true, 1000.0, 1.0, &cfg);
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn rejects_degenerate_band() {
        let cfg = RewardConfig { v_min: 5.0, v_max: 5.0, ..RewardConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
