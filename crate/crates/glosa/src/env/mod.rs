//! The decision environment wrapped around the world: episode setup,
//! zone-gated hybrid actions, per-step rewards, the vehicle trace, and
//! trip metrics.

pub mod metrics;
pub mod obs;
pub mod reward;

pub use metrics::{accumulate_metrics, EpisodeMetrics};
pub use obs::{idx, ObsConfig, ObsInputs, Observation, WaitScheme, OBS_DIM};
pub use reward::{compute_reward, RewardConfig, RewardParts};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GlosaError, Result};
use crate::sim::{
    default_cav_class, default_hdv_classes, CavDirective, EmissionModel, IdmParams, Phase,
    RoadConfig, SignalConfig, VehicleClass, World, WorldParams, DEFAULT_SUBSTEPS, TICK,
};

/// One hybrid action: a discrete advise/hold bit and a continuous
/// acceleration command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridAction {
    /// True issues a new advisory; false keeps the current regime.
    pub advise: bool,
    /// Advised acceleration, m/s^2.
    pub accel: f64,
}

/// One per-second line of the advisory vehicle's trip record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Simulation time at tick end, s.
    pub t: f64,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub phase: Phase,
    /// Fuel burned since entry, mg.
    pub fuel_cum: f64,
    /// Discrete action bit in force this tick, if any.
    pub gap_bit: Option<u8>,
    /// Advised acceleration in force this tick, if any.
    pub accel_adv: Option<f64>,
}

/// Result of one control step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: RewardParts,
    /// Observation after the step; None once the vehicle left the road or
    /// the horizon was reached.
    pub obs: Option<Observation>,
    /// Control is over: the vehicle crossed the stop line, exited, or the
    /// episode hit its horizon.
    pub terminal: bool,
}

/// Everything that defines an episode distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub road: RoadConfig,
    pub signal: SignalConfig,
    pub idm: IdmParams,
    pub emission: EmissionModel,
    pub hdv_classes: Vec<VehicleClass>,
    /// Capability row for the advisory vehicle.
    pub cav: VehicleClass,
    /// Hard speed cap for the advisory vehicle, m/s.
    pub cav_speed_cap: f64,
    /// Demand over all lanes, veh/h.
    pub flow: f64,
    pub substeps: u32,
    /// Seconds of background traffic before the advisory vehicle may enter.
    pub warmup: f64,
    /// Entry delay is drawn uniformly from {0, 1, .., depart_window} s.
    pub depart_window: u64,
    /// Episode cutoff, s of simulated time.
    pub horizon: f64,
    /// Ticks per decision.
    pub control_step: u32,
    pub obs: ObsConfig,
    pub reward: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            road: RoadConfig::default(),
            signal: SignalConfig::default(),
            idm: IdmParams::default(),
            emission: EmissionModel::default(),
            hdv_classes: default_hdv_classes(),
            cav: default_cav_class(),
            cav_speed_cap: 11.0,
            flow: 300.0,
            substeps: DEFAULT_SUBSTEPS,
            warmup: 40.0,
            depart_window: 40,
            horizon: 400.0,
            control_step: 1,
            obs: ObsConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.obs.validate()?;
        self.reward.validate()?;
        if self.warmup < 0.0 {
            return Err(GlosaError::Config("warmup must be non-negative".into()));
        }
        if self.horizon <= self.warmup + self.depart_window as f64 {
            return Err(GlosaError::Config(
                "horizon must exceed warmup plus the depart window".into(),
            ));
        }
        if self.control_step == 0 {
            return Err(GlosaError::Config("control_step must be at least 1".into()));
        }
        // World construction validates the remaining sections.
        Ok(())
    }

    fn world_params(&self, offset: f64) -> WorldParams {
        WorldParams {
            road: self.road.clone(),
            signal: self.signal.clone(),
            signal_offset: offset,
            idm: self.idm.clone(),
            emission: self.emission.clone(),
            hdv_classes: self.hdv_classes.clone(),
            cav: self.cav.clone(),
            cav_speed_cap: self.cav_speed_cap,
            flow: self.flow,
            substeps: self.substeps,
        }
    }
}

/// Whether the vehicle has ever accepted an advisory this approach.
/// Until it has, a hold action leaves it in autonomous car-following, so a
/// policy that never advises is indistinguishable from no advisory system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AdviceMode {
    Never,
    Engaged,
}

pub struct GlosaEnv {
    cfg: EnvConfig,
    world: World,
    mode: AdviceMode,
    trace: Vec<TraceRow>,
    fuel_cum: f64,
    co2_cum: f64,
    annotation: (Option<u8>, Option<f64>),
    ticks: u64,
}

impl GlosaEnv {
    /// Build one episode. `world_rng` drives traffic arrivals; `init_rng`
    /// draws the signal offset and the vehicle's entry delay.
    pub fn new(cfg: EnvConfig, world_rng: ChaCha12Rng, init_rng: &mut ChaCha12Rng) -> Result<Self> {
        cfg.validate()?;
        let offset = init_rng.gen_range(0.0..cfg.signal.cycle());
        let depart = init_rng.gen_range(0..=cfg.depart_window) as f64;
        let mut world = World::new(cfg.world_params(offset), world_rng)?;
        world.schedule_cav(cfg.warmup + depart);
        Ok(Self {
            cfg,
            world,
            mode: AdviceMode::Never,
            trace: Vec::new(),
            fuel_cum: 0.0,
            co2_cum: 0.0,
            annotation: (None, None),
            ticks: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// The episode is over once the vehicle exited or the horizon passed.
    pub fn done(&self) -> bool {
        self.world.cav_exited() || self.ticks as f64 * TICK >= self.cfg.horizon
    }

    fn tick(&mut self) -> Result<()> {
        let rec = self.world.advance_tick()?;
        self.ticks += 1;
        if let Some(rec) = rec {
            self.fuel_cum += rec.fuel;
            self.co2_cum += rec.co2;
            self.trace.push(TraceRow {
                t: rec.time,
                position: rec.position,
                speed: rec.speed,
                accel: rec.accel,
                phase: rec.phase,
                fuel_cum: self.fuel_cum,
                gap_bit: self.annotation.0,
                accel_adv: self.annotation.1,
            });
        }
        Ok(())
    }

    fn in_zone(&self) -> bool {
        match self.world.cav() {
            Some(v) => {
                let d = self.cfg.road.stop_line_position - v.position;
                d > 0.0 && d <= self.cfg.road.guidance_zone_length
            }
            None => false,
        }
    }

    /// Drive until the vehicle reaches the advisory zone and return the
    /// first observation, or None if the episode ends first.
    pub fn advance_to_zone(&mut self) -> Result<Option<Observation>> {
        loop {
            if self.in_zone() {
                let obs = Observation::from_world(&self.world, &self.cfg.obs)
                    .expect("vehicle in zone implies it is on the road");
                obs.validate()?;
                return Ok(Some(obs));
            }
            if self.done() || self.world.cav_crossed_stop_line() {
                return Ok(None);
            }
            self.tick()?;
        }
    }

    /// Apply one hybrid action and advance one control step.
    pub fn step(&mut self, action: HybridAction) -> Result<StepOutcome> {
        if self.done() {
            return Err(GlosaError::EpisodeFinished("episode is over".into()));
        }
        if self.world.cav_crossed_stop_line() {
            return Err(GlosaError::EpisodeFinished(
                "control ended at the stop line; call finish()".into(),
            ));
        }
        if !action.accel.is_finite() {
            return Err(GlosaError::Numeric(format!("non-finite action accel {}", action.accel)));
        }
        let v_before = self
            .world
            .cav()
            .ok_or_else(|| GlosaError::EpisodeFinished("vehicle not on the road".into()))?
            .speed;

        let step_seconds = self.cfg.control_step as f64 * TICK;
        let directive = if action.advise {
            let v_aim = v_before + action.accel * step_seconds;
            if v_aim >= self.cfg.reward.v_min && v_aim <= self.cfg.reward.v_max {
                self.mode = AdviceMode::Engaged;
                CavDirective::Advise(action.accel)
            } else {
                // Invalid advisories are refused; the vehicle drives itself
                // this step.
                CavDirective::Follow
            }
        } else {
            match self.mode {
                AdviceMode::Never => CavDirective::Follow,
                AdviceMode::Engaged => CavDirective::Hold,
            }
        };
        self.world.set_directive(directive);
        self.annotation = (Some(action.advise as u8), Some(action.accel));

        let fuel_before = self.fuel_cum;
        let mut stopped = false;
        for _ in 0..self.cfg.control_step {
            self.tick()?;
            if let Some(v) = self.world.cav() {
                if v.speed <= self.cfg.reward.stop_speed {
                    stopped = true;
                }
            }
            if self.done() {
                break;
            }
        }

        let reward = compute_reward(
            action.advise,
            action.accel,
            v_before,
            stopped,
            self.fuel_cum - fuel_before,
            step_seconds,
            &self.cfg.reward,
        );
        let crossed = self.world.cav_crossed_stop_line();
        if crossed {
            self.mode = AdviceMode::Never;
            self.world.set_directive(CavDirective::Follow);
            self.annotation = (None, None);
        }
        let obs = match Observation::from_world(&self.world, &self.cfg.obs) {
            Some(o) => {
                o.validate()?;
                Some(o)
            }
            None => None,
        };
        Ok(StepOutcome { reward, obs, terminal: crossed || self.done() })
    }

    /// Apply a raw directive for one control step (rule-based and
    /// car-following baselines). `advisory` annotates trace rows while a
    /// rule advisory is in force.
    pub fn step_directive(&mut self, directive: CavDirective, advisory: bool) -> Result<()> {
        if self.done() {
            return Err(GlosaError::EpisodeFinished("episode is over".into()));
        }
        self.world.set_directive(directive);
        self.annotation = if advisory { (Some(1), None) } else { (None, None) };
        for _ in 0..self.cfg.control_step {
            self.tick()?;
            if self.done() {
                break;
            }
        }
        if self.world.cav_crossed_stop_line() {
            self.annotation = (None, None);
        }
        Ok(())
    }

    /// Drive out the rest of the episode under autonomous car-following.
    pub fn finish(&mut self) -> Result<()> {
        self.world.set_directive(CavDirective::Follow);
        self.annotation = (None, None);
        while !self.done() {
            self.tick()?;
        }
        Ok(())
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        accumulate_metrics(
            &self.trace,
            self.cfg.reward.stop_speed,
            self.co2_cum,
            self.world.cav_exited(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use approx::assert_relative_eq;

    fn env(seed: u64, flow: f64) -> GlosaEnv {
        let cfg = EnvConfig { flow, ..EnvConfig::default() };
        let mut init = derive_rng(seed, Stream::Init, 0);
        GlosaEnv::new(cfg, derive_rng(seed, Stream::World, 0), &mut init).unwrap()
    }

    /// Run an episode where every decision holds (never advises).
    fn run_hold_episode(seed: u64, flow: f64) -> (Vec<TraceRow>, EpisodeMetrics) {
        let mut e = env(seed, flow);
        if let Some(mut _obs) = e.advance_to_zone().unwrap() {
            loop {
                let out = e.step(HybridAction { advise: false, accel: 0.0 }).unwrap();
                if out.terminal {
                    break;
                }
                _obs = out.obs.unwrap();
            }
        }
        e.finish().unwrap();
        (e.trace().to_vec(), e.metrics())
    }

    /// Run an episode entirely under the car-following directive.
    fn run_follow_episode(seed: u64, flow: f64) -> (Vec<TraceRow>, EpisodeMetrics) {
        let mut e = env(seed, flow);
        while !e.done() {
            e.step_directive(CavDirective::Follow, false).unwrap();
        }
        (e.trace().to_vec(), e.metrics())
    }

    #[test]
    fn episode_completes_with_sane_metrics() {
        let (trace, m) = run_follow_episode(11, 300.0);
        assert!(m.completed);
        assert!(m.travel_seconds > 60.0 && m.travel_seconds < 360.0);
        assert!(m.fuel_mg > 0.0);
        assert_relative_eq!(m.co2_mg / m.fuel_mg, 3.135, epsilon = 1e-9);
        assert_eq!(trace.len() as f64, m.travel_seconds);
    }

    #[test]
    fn never_advised_hold_equals_pure_following() {
        // A policy that never advises must be bit-identical to no advisory
        // system at all, actions notwithstanding.
        for seed in [1, 2, 3, 4, 5] {
            let (hold_trace, hold_m) = run_hold_episode(seed, 600.0);
            let (follow_trace, follow_m) = run_follow_episode(seed, 600.0);
            assert_eq!(hold_trace.len(), follow_trace.len());
            for (a, b) in hold_trace.iter().zip(&follow_trace) {
                assert_eq!(a.t, b.t);
                assert_eq!(a.position.to_bits(), b.position.to_bits());
                assert_eq!(a.speed.to_bits(), b.speed.to_bits());
                assert_eq!(a.fuel_cum.to_bits(), b.fuel_cum.to_bits());
            }
            assert_eq!(hold_m.fuel_mg.to_bits(), follow_m.fuel_mg.to_bits());
            assert_eq!(hold_m.stop_count, follow_m.stop_count);
            assert_eq!(hold_m.waiting_seconds, follow_m.waiting_seconds);
        }
    }

    #[test]
    fn trace_rows_are_contiguous_seconds() {
        let (trace, _) = run_follow_episode(7, 900.0);
        assert!(!trace.is_empty());
        for pair in trace.windows(2) {
            assert_relative_eq!(pair[1].t - pair[0].t, 1.0, epsilon = 1e-9);
            assert!(pair[1].fuel_cum >= pair[0].fuel_cum);
        }
    }

    #[test]
    fn same_seed_reproduces_trace_exactly() {
        let (a, _) = run_hold_episode(21, 1200.0);
        let (b, _) = run_hold_episode(21, 1200.0);
        assert_eq!(a, b);
    }

    #[test]
    fn accepted_advisory_engages_hold_semantics() {
        let mut e = env(3, 0.0);
        let obs = e.advance_to_zone().unwrap().unwrap();
        let v0 = obs.raw[idx::SPEED];
        assert!(v0 > 10.0, "empty road entry speed {v0}");
        // Decelerate toward 8 m/s: valid aim, engages the advisory regime.
        let out = e.step(HybridAction { advise: true, accel: -2.0 }).unwrap();
        let v1 = out.obs.unwrap().raw[idx::SPEED];
        assert_relative_eq!(v1, v0 - 2.0, epsilon = 1e-9);
        // A hold now freezes speed instead of resuming car-following.
        let out = e.step(HybridAction { advise: false, accel: 1.7 }).unwrap();
        let v2 = out.obs.unwrap().raw[idx::SPEED];
        assert_relative_eq!(v2, v1, epsilon = 1e-9);
    }

    #[test]
    fn invalid_advisory_is_refused_that_step() {
        let mut e = env(3, 0.0);
        let obs = e.advance_to_zone().unwrap().unwrap();
        let v0 = obs.raw[idx::SPEED];
        assert!(v0 > 9.0, "empty road zone entry speed {v0}");
        // Aiming above the band: shaping term is the penalty and no
        // advisory regime is engaged.
        let out = e.step(HybridAction { advise: true, accel: 2.0 }).unwrap();
        assert_eq!(out.reward.shaping_term, -2.0);
        // Still never-engaged: subsequent holds reproduce pure following.
        let mut out = out;
        while !out.terminal {
            out = e.step(HybridAction { advise: false, accel: 0.0 }).unwrap();
        }
        e.finish().unwrap();
        let (_, follow_m) = run_follow_episode(3, 0.0);
        assert_eq!(e.metrics().fuel_mg.to_bits(), follow_m.fuel_mg.to_bits());
    }

    #[test]
    fn reward_reports_stop_during_step() {
        // Valid advisories cannot aim below 4 m/s, so a commanded stop is
        // impossible; a red light in the zone stops the vehicle instead.
        // Scan seeds for an episode whose car-following run stalls at the
        // light and check that the stopping step carries the stop term.
        for seed in 0..50 {
            let mut e = env(seed, 0.0);
            if e.advance_to_zone().unwrap().is_none() {
                continue;
            }
            loop {
                let out = e.step(HybridAction { advise: false, accel: 0.0 }).unwrap();
                if out.reward.stop_term != 0.0 {
                    let r = out.reward;
                    let cfg = RewardConfig::default();
                    assert_relative_eq!(
                        r.total,
                        cfg.alpha * r.fuel_term + cfg.beta * r.stop_term + cfg.omega * r.shaping_term,
                        epsilon = 1e-12
                    );
                    return;
                }
                if out.terminal {
                    break;
                }
            }
        }
        panic!("no seed in 0..50 stalled at the light");
    }

    #[test]
    fn control_ends_at_stop_line() {
        let mut e = env(9, 0.0);
        let mut obs = e.advance_to_zone().unwrap().unwrap();
        let mut steps = 0;
        loop {
            let out = e.step(HybridAction { advise: false, accel: 0.0 }).unwrap();
            steps += 1;
            if out.terminal {
                break;
            }
            obs = out.obs.unwrap();
        }
        // Terminal observation looks past the line: distance now counts
        // down to the route end.
        assert!(steps > 5);
        assert!(e.world().cav_crossed_stop_line());
        assert!(e.step(HybridAction { advise: false, accel: 0.0 }).is_err());
        let _ = obs;
        e.finish().unwrap();
        assert!(e.metrics().completed);
    }

    #[test]
    fn horizon_truncates_episode() {
        let cfg = EnvConfig { horizon: 90.0, flow: 0.0, ..EnvConfig::default() };
        let mut init = derive_rng(1, Stream::Init, 0);
        let mut e = GlosaEnv::new(cfg, derive_rng(1, Stream::World, 0), &mut init).unwrap();
        while !e.done() {
            e.step_directive(CavDirective::Follow, false).unwrap();
        }
        assert!(e.world().time() <= 90.0 + 1e-9);
    }

    #[test]
    fn zone_entry_observation_is_in_zone() {
        for seed in 0..20 {
            let mut e = env(seed, 600.0);
            if let Some(obs) = e.advance_to_zone().unwrap() {
                let d = obs.raw[idx::DISTANCE];
                assert!(d > 0.0 && d <= 240.0, "distance {d}");
            }
        }
    }
}
