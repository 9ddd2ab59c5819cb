//! The eight-feature observation the advisory agent sees each decision
//! step, plus its normalization.

use serde::{Deserialize, Serialize};

use crate::error::{GlosaError, Result};
use crate::sim::{Phase, World};

/// Number of observation features.
pub const OBS_DIM: usize = 8;

/// Feature indices into [`Observation::raw`].
pub mod idx {
    /// Distance to the stop line before crossing, to the route end after.
    pub const DISTANCE: usize = 0;
    pub const SPEED: usize = 1;
    /// Realized acceleration over the last tick.
    pub const ACCEL: usize = 2;
    /// Time left in the current signal phase.
    pub const PHASE_REMAINING: usize = 3;
    /// Worst-case wait before the next green window opens.
    pub const WAIT: usize = 4;
    pub const LEADER_SPEED: usize = 5;
    pub const LEADER_GAP: usize = 6;
    /// 0 on green, 1 on red.
    pub const PHASE: usize = 7;
}

/// How the wait feature treats the green phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaitScheme {
    /// Zero on green, remaining red time on red.
    S1,
    /// Remaining green plus the full red on green (worst case if the
    /// current window is missed), remaining red on red.
    S2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    pub scheme: WaitScheme,
    /// Leaders farther than this are invisible, m.
    pub detector_range: f64,
    /// Reported leader speed when no leader is visible, m/s.
    pub sentinel_leader_speed: f64,
    /// Per-feature normalization divisors.
    pub norm: [f64; OBS_DIM],
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self {
            scheme: WaitScheme::S2,
            detector_range: 300.0,
            sentinel_leader_speed: 11.0,
            norm: [240.0, 11.0, 3.0, 40.0, 40.0, 11.0, 300.0, 1.0],
        }
    }
}

impl ObsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.detector_range > 0.0) {
            return Err(GlosaError::Config("detector_range must be positive".into()));
        }
        if !(self.sentinel_leader_speed >= 0.0) {
            return Err(GlosaError::Config("sentinel_leader_speed must be non-negative".into()));
        }
        if self.norm.iter().any(|&s| !(s > 0.0)) {
            return Err(GlosaError::Config("normalization divisors must be positive".into()));
        }
        Ok(())
    }
}

/// Raw ingredients of one observation, independent of any world object.
#[derive(Debug, Clone, Copy)]
pub struct ObsInputs {
    pub distance: f64,
    pub speed: f64,
    pub accel: f64,
    pub phase: Phase,
    pub phase_remaining: f64,
    /// Full red-phase duration of the signal program.
    pub red_duration: f64,
    /// Net gap and speed of the physical leader, if any.
    pub leader: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub raw: [f64; OBS_DIM],
}

impl Observation {
    pub fn from_inputs(inp: &ObsInputs, cfg: &ObsConfig) -> Self {
        let wait = match (cfg.scheme, inp.phase) {
            (WaitScheme::S1, Phase::Green) => 0.0,
            (WaitScheme::S1, Phase::Red) => inp.phase_remaining,
            (WaitScheme::S2, Phase::Green) => inp.phase_remaining + inp.red_duration,
            (WaitScheme::S2, Phase::Red) => inp.phase_remaining,
        };
        let (leader_speed, leader_gap) = match inp.leader {
            Some((gap, speed)) if gap <= cfg.detector_range => (speed, gap),
            _ => (cfg.sentinel_leader_speed, cfg.detector_range),
        };
        Self {
            raw: [
                inp.distance,
                inp.speed,
                inp.accel,
                inp.phase_remaining,
                wait,
                leader_speed,
                leader_gap,
                inp.phase.encoded(),
            ],
        }
    }

    /// Observation of the advisory vehicle, or None when it is not on the
    /// road.
    pub fn from_world(world: &World, cfg: &ObsConfig) -> Option<Self> {
        let v = world.cav()?;
        let road = &world.road;
        let distance = if v.position < road.stop_line_position {
            road.stop_line_position - v.position
        } else {
            road.route_length - v.position
        };
        let (phase, remaining) = world.signal.phase_at(world.time());
        Some(Self::from_inputs(
            &ObsInputs {
                distance,
                speed: v.speed,
                accel: v.accel,
                phase,
                phase_remaining: remaining,
                red_duration: world.signal.config.red_duration,
                leader: world.cav_leader(),
            },
            cfg,
        ))
    }

    pub fn normalized(&self, cfg: &ObsConfig) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        for i in 0..OBS_DIM {
            out[i] = self.raw[i] / cfg.norm[i];
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.raw.iter().any(|x| !x.is_finite()) {
            return Err(GlosaError::Numeric(format!("non-finite observation {:?}", self.raw)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn worked_inputs() -> ObsInputs {
        ObsInputs {
            distance: 30.0,
            speed: 8.0,
            accel: 2.5,
            phase: Phase::Green,
            phase_remaining: 2.0,
            red_duration: 20.0,
            leader: Some((8.0, 11.0)),
        }
    }

    #[test]
    fn worked_vector_matches() {
        let obs = Observation::from_inputs(&worked_inputs(), &ObsConfig::default());
        let expect = [30.0, 8.0, 2.5, 2.0, 22.0, 11.0, 8.0, 0.0];
        for (got, want) in obs.raw.iter().zip(expect) {
            assert_relative_eq!(got, &want, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalization_divides_per_feature() {
        let cfg = ObsConfig::default();
        let obs = Observation::from_inputs(&worked_inputs(), &cfg);
        let n = obs.normalized(&cfg);
        let expect = [0.125, 8.0 / 11.0, 2.5 / 3.0, 0.05, 0.55, 1.0, 8.0 / 300.0, 0.0];
        for (got, want) in n.iter().zip(expect) {
            assert_relative_eq!(got, &want, epsilon = 1e-12);
        }
    }

    #[test]
    fn far_leader_replaced_by_sentinel() {
        let cfg = ObsConfig::default();
        let mut inp = worked_inputs();
        inp.leader = Some((300.5, 3.0));
        let obs = Observation::from_inputs(&inp, &cfg);
        assert_eq!(obs.raw[idx::LEADER_SPEED], 11.0);
        assert_eq!(obs.raw[idx::LEADER_GAP], 300.0);
        inp.leader = None;
        let obs = Observation::from_inputs(&inp, &cfg);
        assert_eq!(obs.raw[idx::LEADER_SPEED], 11.0);
        assert_eq!(obs.raw[idx::LEADER_GAP], 300.0);
    }

    #[test]
    fn wait_schemes_differ_only_on_green() {
        let mut cfg = ObsConfig::default();
        let mut inp = worked_inputs();

        cfg.scheme = WaitScheme::S1;
        let s1_green = Observation::from_inputs(&inp, &cfg).raw[idx::WAIT];
        cfg.scheme = WaitScheme::S2;
        let s2_green = Observation::from_inputs(&inp, &cfg).raw[idx::WAIT];
        assert_eq!(s1_green, 0.0);
        assert_eq!(s2_green, 22.0);

        inp.phase = Phase::Red;
        inp.phase_remaining = 7.0;
        cfg.scheme = WaitScheme::S1;
        let s1_red = Observation::from_inputs(&inp, &cfg).raw[idx::WAIT];
        cfg.scheme = WaitScheme::S2;
        let s2_red = Observation::from_inputs(&inp, &cfg).raw[idx::WAIT];
        assert_eq!(s1_red, 7.0);
        assert_eq!(s2_red, 7.0);
    }

    #[test]
    fn rejects_non_finite_features() {
        let mut obs = Observation::from_inputs(&worked_inputs(), &ObsConfig::default());
        assert!(obs.validate().is_ok());
        obs.raw[3] = f64::NAN;
        assert!(obs.validate().is_err());
    }
}
