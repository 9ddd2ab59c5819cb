//! The intersection world: three independent single-file lanes feeding a
//! fixed-time signal, stochastic human-driven traffic, and one advisory
//! vehicle controlled through a per-tick directive.
//!
//! Observable state advances in 1 s ticks; vehicle dynamics integrate at a
//! fixed number of substeps per tick. Identical seeds and directive
//! sequences reproduce bit-identical worlds.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::idm::{idm_acceleration, kinematic_step, stopping_cap, IdmParams, LeaderView};
use super::types::{
    default_cav_class, default_hdv_classes, emission_step, EmissionModel, Phase, RoadConfig,
    SignalConfig, SignalController, VehicleClass, VehicleState,
};
use crate::error::{GlosaError, Result};

/// Dynamics substeps per observable tick.
pub const DEFAULT_SUBSTEPS: u32 = 10;

/// Observable tick length, s.
pub const TICK: f64 = 1.0;

/// How the advisory vehicle chooses its acceleration. `Follow` is the
/// initial mode and the only mode in force outside the advisory zone or
/// past the stop line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CavDirective {
    /// Autonomous car-following.
    Follow,
    /// Apply an advised acceleration, capped by car-following safety.
    Advise(f64),
    /// Keep current speed (zero commanded acceleration), capped by safety.
    Hold,
    /// Steer toward a target speed with class-bounded acceleration, capped
    /// by safety; used by the rule-based advisory.
    Track(f64),
}

/// Per-tick account of the advisory vehicle's motion, recorded at tick end.
#[derive(Debug, Clone)]
pub struct CavTick {
    /// Simulation time at tick end, s.
    pub time: f64,
    pub position: f64,
    pub speed: f64,
    /// Realized acceleration over the tick, m/s^2.
    pub accel: f64,
    pub phase: Phase,
    /// Fuel burned this tick, mg.
    pub fuel: f64,
    /// CO2 emitted this tick, mg.
    pub co2: f64,
}

/// Everything needed to build a [`World`].
#[derive(Debug, Clone)]
pub struct WorldParams {
    pub road: RoadConfig,
    pub signal: SignalConfig,
    /// Signal phase offset for this episode, in `[0, cycle)`.
    pub signal_offset: f64,
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
}

impl Default for WorldParams {
    fn default() -> Self {
        let road = RoadConfig::default();
        Self {
            signal: SignalConfig::default(),
            signal_offset: 0.0,
            idm: IdmParams::default(),
            emission: EmissionModel::default(),
            hdv_classes: default_hdv_classes(),
            cav: default_cav_class(),
            cav_speed_cap: road.speed_limit,
            flow: 300.0,
            substeps: DEFAULT_SUBSTEPS,
            road,
        }
    }
}

pub struct World {
    pub road: RoadConfig,
    pub signal: SignalController,
    pub idm: IdmParams,
    pub emission: EmissionModel,
    /// HDV classes followed by the advisory vehicle's class.
    classes: Vec<VehicleClass>,
    cav_class: usize,
    cav_speed_cap: f64,
    flow: f64,
    substeps: u32,
    lanes: Vec<Vec<VehicleState>>,
    time: f64,
    rng: ChaCha12Rng,
    next_id: u64,
    hdv_spawned: u64,
    exited: u64,
    cav_lane: usize,
    cav_present: bool,
    cav_pending: Option<f64>,
    cav_entry_time: Option<f64>,
    cav_final: Option<VehicleState>,
    directive: CavDirective,
    start_speeds: Vec<Vec<f64>>,
    accels: Vec<Vec<f64>>,
}

impl World {
    pub fn new(params: WorldParams, rng: ChaCha12Rng) -> Result<Self> {
        params.road.validate()?;
        params.signal.validate()?;
        params.idm.validate()?;
        params.emission.validate()?;
        if params.hdv_classes.is_empty() {
            return Err(GlosaError::Config("at least one vehicle class required".into()));
        }
        for c in &params.hdv_classes {
            c.validate()?;
        }
        params.cav.validate()?;
        let total: f64 = params.hdv_classes.iter().map(|c| c.spawn_probability).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(GlosaError::Config(format!(
                "class spawn probabilities must sum to 1 (got {total})"
            )));
        }
        if params.flow < 0.0 || params.flow > 3600.0 * params.road.lanes as f64 {
            return Err(GlosaError::Config(format!(
                "flow must lie in [0, {}] veh/h for per-tick spawning",
                3600.0 * params.road.lanes as f64
            )));
        }
        if params.substeps == 0 {
            return Err(GlosaError::Config("substeps must be at least 1".into()));
        }
        if !(params.cav_speed_cap > 0.0) {
            return Err(GlosaError::Config("cav_speed_cap must be positive".into()));
        }
        let lanes = params.road.lanes;
        let mut classes = params.hdv_classes;
        let cav_class = classes.len();
        classes.push(params.cav);
        Ok(Self {
            signal: SignalController::new(params.signal, params.signal_offset),
            idm: params.idm,
            emission: params.emission,
            classes,
            cav_class,
            cav_speed_cap: params.cav_speed_cap,
            flow: params.flow,
            substeps: params.substeps,
            lanes: vec![Vec::new(); lanes],
            time: 0.0,
            rng,
            next_id: 1,
            hdv_spawned: 0,
            exited: 0,
            cav_lane: lanes / 2,
            cav_present: false,
            cav_pending: None,
            cav_entry_time: None,
            cav_final: None,
            directive: CavDirective::Follow,
            start_speeds: vec![Vec::new(); lanes],
            accels: vec![Vec::new(); lanes],
            road: params.road,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn class_of(&self, v: &VehicleState) -> &VehicleClass {
        &self.classes[v.class]
    }

    /// Schedule the advisory vehicle to enter (middle lane) at `t`. Entry is
    /// retried each tick while the lane mouth is blocked.
    pub fn schedule_cav(&mut self, t: f64) {
        self.cav_pending = Some(t);
    }

    pub fn set_directive(&mut self, d: CavDirective) {
        self.directive = d;
    }

    pub fn directive(&self) -> CavDirective {
        self.directive
    }

    pub fn cav(&self) -> Option<&VehicleState> {
        if !self.cav_present {
            return None;
        }
        self.lanes[self.cav_lane].iter().find(|v| v.is_cav)
    }

    /// Final state of the advisory vehicle after it left the route.
    pub fn cav_final(&self) -> Option<&VehicleState> {
        self.cav_final.as_ref()
    }

    /// Time at which the advisory vehicle actually entered the route.
    pub fn cav_entry_time(&self) -> Option<f64> {
        self.cav_entry_time
    }

    pub fn cav_exited(&self) -> bool {
        self.cav_final.is_some()
    }

    /// True once the advisory vehicle's front bumper reached the stop line.
    pub fn cav_crossed_stop_line(&self) -> bool {
        if self.cav_exited() {
            return true;
        }
        self.cav().map_or(false, |v| v.position >= self.road.stop_line_position)
    }

    /// Net gap and speed of the advisory vehicle's physical leader, if any.
    pub fn cav_leader(&self) -> Option<(f64, f64)> {
        let lane = &self.lanes[self.cav_lane];
        let idx = lane.iter().position(|v| v.is_cav)?;
        if idx == 0 {
            return None;
        }
        let leader = &lane[idx - 1];
        let gap = leader.position - self.class_of(leader).length - lane[idx].position;
        Some((gap, leader.speed))
    }

    /// (HDVs spawned, vehicles currently on the road, vehicles exited).
    pub fn counts(&self) -> (u64, usize, u64) {
        let active = self.lanes.iter().map(Vec::len).sum();
        (self.hdv_spawned, active, self.exited)
    }

    /// Smallest inter-vehicle gap on the road; +inf when no pair exists.
    pub fn min_pair_gap(&self) -> f64 {
        let mut min_gap = f64::INFINITY;
        for lane in &self.lanes {
            for pair in lane.windows(2) {
                let gap = pair[0].position - self.class_of(&pair[0]).length - pair[1].position;
                min_gap = min_gap.min(gap);
            }
        }
        min_gap
    }

    /// Insert a vehicle directly (setup helper for tests and examples).
    /// The lane is kept sorted front-first; overlaps surface as integrity
    /// faults on the next tick.
    pub fn insert_vehicle(&mut self, lane: usize, class: usize, position: f64, speed: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let v = VehicleState { id, class, position, speed, accel: 0.0, is_cav: false };
        let lane = &mut self.lanes[lane];
        let at = lane.partition_point(|other| other.position > position);
        lane.insert(at, v);
        id
    }

    /// Index of the advisory vehicle's dedicated class row.
    pub fn cav_class_index(&self) -> usize {
        self.cav_class
    }

    fn try_spawn(&mut self, lane_idx: usize, class_idx: usize, is_cav: bool) -> bool {
        let class = &self.classes[class_idx];
        let (speed, ok) = match self.lanes[lane_idx].last() {
            None => (self.road.speed_limit, true),
            Some(leader) => {
                let leader_class = &self.classes[leader.class];
                let gap = leader.position - leader_class.length;
                if gap < class.min_gap {
                    (0.0, false)
                } else {
                    // Equilibrium-headway speed, additionally bounded so the
                    // stopping-distance invariant holds from the first step.
                    let equilibrium = (gap - class.min_gap) / self.idm.headway_time;
                    let reserve =
                        leader.speed * leader.speed / (2.0 * leader_class.decel_max);
                    let b = class.decel_max;
                    let dt = TICK / self.substeps as f64;
                    let safe = -0.5 * b * dt
                        + (0.25 * b * b * dt * dt + 2.0 * b * (gap + reserve)).sqrt();
                    (self.road.speed_limit.min(equilibrium).min(safe).max(0.0), true)
                }
            }
        };
        if !ok {
            return false;
        }
        let speed = if is_cav { speed.min(self.cav_speed_cap) } else { speed };
        let id = self.next_id;
        self.next_id += 1;
        self.lanes[lane_idx].push(VehicleState {
            id,
            class: class_idx,
            position: 0.0,
            speed,
            accel: 0.0,
            is_cav,
        });
        true
    }

    fn draw_class(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (i, c) in self.classes[..self.cav_class].iter().enumerate() {
            acc += c.spawn_probability;
            if u < acc {
                return i;
            }
        }
        self.cav_class - 1
    }

    fn spawn_pass(&mut self) {
        // The advisory vehicle takes priority for its scheduled entry tick.
        if let Some(t) = self.cav_pending {
            if !self.cav_present && self.time >= t {
                if self.try_spawn(self.cav_lane, self.cav_class, true) {
                    self.cav_present = true;
                    self.cav_pending = None;
                    self.cav_entry_time = Some(self.time);
                }
            }
        }
        // One spawn roll per lane per tick. Rolls and class draws consume
        // the stream unconditionally so the random sequence is identical
        // across control methods; only the occupancy check may suppress.
        let p = self.flow / 3600.0 / self.road.lanes as f64 * TICK;
        for lane_idx in 0..self.road.lanes {
            let roll: f64 = self.rng.gen();
            if roll < p {
                let class_idx = self.draw_class();
                if self.try_spawn(lane_idx, class_idx, false) {
                    self.hdv_spawned += 1;
                }
            }
        }
    }

    fn vehicle_accel(&self, lane: &[VehicleState], idx: usize, phase: Phase, dt: f64) -> f64 {
        let v = &lane[idx];
        let class = &self.classes[v.class];
        let mut views: [Option<LeaderView>; 2] = [None, None];
        if idx > 0 {
            let leader = &lane[idx - 1];
            let leader_class = &self.classes[leader.class];
            views[0] = Some(LeaderView {
                gap: leader.position - leader_class.length - v.position,
                speed: leader.speed,
                decel_max: leader_class.decel_max,
            });
        }
        if phase == Phase::Red && v.position < self.road.stop_line_position {
            views[1] = Some(LeaderView::obstacle(self.road.stop_line_position - v.position));
        }
        let mut idm_a = idm_acceleration(v.speed, class, None, self.road.speed_limit, &self.idm);
        for view in views.iter().flatten() {
            idm_a = idm_a.min(idm_acceleration(
                v.speed,
                class,
                Some(*view),
                self.road.speed_limit,
                &self.idm,
            ));
        }
        // Advisory directives apply only between route start and stop line;
        // past the line the vehicle always drives itself.
        let effective = if v.is_cav && v.position < self.road.stop_line_position {
            self.directive
        } else {
            CavDirective::Follow
        };
        let candidate = match effective {
            CavDirective::Follow => idm_a,
            CavDirective::Advise(cmd) => cmd.min(idm_a),
            CavDirective::Hold => 0.0f64.min(idm_a),
            CavDirective::Track(target) => {
                let steer = (target - v.speed).clamp(-class.decel_max, class.accel_max);
                steer.min(idm_a)
            }
        };
        let mut a = candidate;
        for view in views.iter().flatten() {
            a = a.min(stopping_cap(v.speed, *view, class.decel_max, dt));
        }
        a.clamp(-class.decel_max, class.accel_max)
    }

    fn integrity_check(&self) -> Result<()> {
        for (lane_idx, lane) in self.lanes.iter().enumerate() {
            for pair in lane.windows(2) {
                let gap = pair[0].position - self.class_of(&pair[0]).length - pair[1].position;
                if gap < 0.0 {
                    return Err(GlosaError::SimulationIntegrity(format!(
                        "negative gap {:.4} m in lane {} between #{} and #{} at t={:.1}",
                        gap, lane_idx, pair[0].id, pair[1].id, self.time
                    )));
                }
            }
        }
        Ok(())
    }

    /// Advance one observable tick: spawn, integrate dynamics over the
    /// substeps, remove vehicles past the route end, and account for the
    /// advisory vehicle's motion. Returns its per-tick record while it is
    /// on the road.
    pub fn advance_tick(&mut self) -> Result<Option<CavTick>> {
        self.spawn_pass();
        let cav_start = self.cav().map(|v| v.speed);

        for lane_idx in 0..self.lanes.len() {
            let speeds: Vec<f64> = self.lanes[lane_idx].iter().map(|v| v.speed).collect();
            self.start_speeds[lane_idx] = speeds;
        }

        let dt = TICK / self.substeps as f64;
        for _ in 0..self.substeps {
            let (phase, _) = self.signal.phase_at(self.time);
            for lane_idx in 0..self.lanes.len() {
                let lane = &self.lanes[lane_idx];
                self.accels[lane_idx].clear();
                for idx in 0..lane.len() {
                    let a = self.vehicle_accel(lane, idx, phase, dt);
                    self.accels[lane_idx].push(a);
                }
            }
            for lane_idx in 0..self.lanes.len() {
                for idx in 0..self.lanes[lane_idx].len() {
                    let a = self.accels[lane_idx][idx];
                    let v = &mut self.lanes[lane_idx][idx];
                    let cap = if v.is_cav { self.cav_speed_cap } else { self.road.speed_limit };
                    let (v_next, dx) = kinematic_step(v.speed, a, dt, cap);
                    v.speed = v_next;
                    v.position += dx;
                }
            }
            self.time += dt;
        }

        // Realized accelerations over the tick.
        for lane_idx in 0..self.lanes.len() {
            for idx in 0..self.lanes[lane_idx].len() {
                let start = self.start_speeds[lane_idx][idx];
                let v = &mut self.lanes[lane_idx][idx];
                v.accel = (v.speed - start) / TICK;
            }
        }

        let cav_record = match (cav_start, self.cav()) {
            (Some(_), Some(v)) => {
                let (fuel, co2) = emission_step(v.speed, v.accel, TICK, &self.emission);
                let (phase, _) = self.signal.phase_at(self.time);
                Some(CavTick {
                    time: self.time,
                    position: v.position,
                    speed: v.speed,
                    accel: v.accel,
                    phase,
                    fuel,
                    co2,
                })
            }
            _ => None,
        };

        // Remove vehicles whose front bumper passed the route end.
        for lane in &mut self.lanes {
            while lane.first().map_or(false, |v| v.position > self.road.route_length) {
                let gone = lane.remove(0);
                self.exited += 1;
                if gone.is_cav {
                    self.cav_present = false;
                    self.cav_final = Some(gone);
                }
            }
        }

        self.integrity_check()?;
        Ok(cav_record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use approx::assert_relative_eq;

    fn params(flow: f64) -> WorldParams {
        WorldParams {
            road: RoadConfig::default(),
            signal: SignalConfig::default(),
            signal_offset: 0.0,
            idm: IdmParams::default(),
            emission: EmissionModel::default(),
            hdv_classes: crate::sim::types::default_hdv_classes(),
            cav: VehicleClass {
                name: "cav".into(),
                accel_max: 3.0,
                decel_max: 3.0,
                length: 5.0,
                min_gap: 2.0,
                spawn_probability: 0.0,
            },
            cav_speed_cap: 11.0,
            flow,
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    fn world(flow: f64, seed: u64) -> World {
        World::new(params(flow), derive_rng(seed, Stream::World, 0)).unwrap()
    }

    #[test]
    fn single_vehicle_reaches_speed_limit() {
        // Start past the stop line so the signal cannot interfere.
        let mut w = world(0.0, 1);
        w.insert_vehicle(0, 3, 510.0, 0.0);
        for _ in 0..30 {
            w.advance_tick().unwrap();
        }
        let v = &w.lanes[0][0];
        assert!(v.speed > 0.98 * 11.0, "speed {}", v.speed);
    }

    #[test]
    fn vehicle_stops_at_red_near_line() {
        let mut w = world(0.0, 2);
        // Force red: offset 20 puts t=0 at the start of red (20 s long).
        w.signal.offset = 20.0;
        w.insert_vehicle(0, 2, 380.0, 11.0);
        for _ in 0..18 {
            w.advance_tick().unwrap();
        }
        let v = &w.lanes[0][0];
        let dist = w.road.stop_line_position - v.position;
        assert!(v.speed < 0.1, "speed {}", v.speed);
        assert!((0.0..=3.0).contains(&dist), "distance to line {dist}");
    }

    #[test]
    fn queue_discharges_after_green() {
        let mut w = world(0.0, 3);
        w.signal.offset = 20.0; // red for t in [0, 20)
        for i in 0..4 {
            w.insert_vehicle(0, 1, 480.0 - 8.0 * i as f64, 0.0);
        }
        for _ in 0..40 {
            w.advance_tick().unwrap();
        }
        // Light turned green at t=20; the queue leader must have crossed.
        assert!(w.lanes[0].is_empty() || w.lanes[0][0].position > w.road.stop_line_position);
        let (_, active, exited) = w.counts();
        assert!(active < 4 || exited > 0 || w.lanes[0][0].position > 500.0);
    }

    #[test]
    fn spawn_probability_matches_flow() {
        let mut w = world(3600.0, 4);
        // p = 3600/3600/3 = 1/3 per lane per tick.
        let mut inserted = 0u64;
        for _ in 0..3000 {
            w.advance_tick().unwrap();
        }
        let (spawned, active, exited) = w.counts();
        inserted += spawned;
        assert_eq!(active as u64 + exited, inserted);
        // 3000 ticks * 3 lanes * 1/3 = 3000 expected rolls passing, minus
        // suppression at the mouth; saturation keeps it well below, but the
        // flow-conservation identity above is the real assertion. Sanity:
        assert!(spawned > 1000, "spawned {spawned}");
    }

    #[test]
    fn class_mix_long_run_frequency() {
        let mut w = world(0.0, 5);
        let mut counts = [0u32; 5];
        for _ in 0..100_000 {
            let c = w.draw_class();
            counts[c] += 1;
        }
        let freq_c = counts[2] as f64 / 100_000.0;
        assert!((freq_c - 0.3).abs() < 0.01, "type C frequency {freq_c}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = |seed: u64| {
            let mut w = world(1200.0, seed);
            let mut sig = Vec::new();
            for _ in 0..200 {
                w.advance_tick().unwrap();
                for lane in &w.lanes {
                    for v in lane {
                        sig.push((v.id, v.position.to_bits(), v.speed.to_bits()));
                    }
                }
            }
            sig
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn platoon_random_flow_never_overlaps() {
        let mut w = world(0.0, 6);
        for i in 0..5 {
            w.insert_vehicle(1, i % 5, 200.0 - 14.0 * i as f64, 8.0);
        }
        let mut rng = derive_rng(99, Stream::World, 7);
        for step in 0..10_000 {
            // Churn demand so spawning stays active and irregular.
            w.flow = rng.gen_range(0.0..2700.0);
            w.advance_tick().unwrap();
            assert!(w.min_pair_gap() >= 0.0, "negative gap at step {step}");
        }
    }

    #[test]
    fn cav_entry_retries_when_blocked() {
        let mut w = world(0.0, 7);
        // Park a stopped vehicle on the lane mouth.
        w.insert_vehicle(1, 0, 5.0, 0.0);
        w.schedule_cav(0.0);
        w.advance_tick().unwrap();
        assert!(w.cav().is_none());
        // The blocker drives away on green; entry succeeds eventually.
        let mut entered = false;
        for _ in 0..30 {
            w.advance_tick().unwrap();
            if w.cav().is_some() {
                entered = true;
                break;
            }
        }
        assert!(entered);
        assert!(w.cav_entry_time().unwrap() > 0.0);
    }

    #[test]
    fn directive_expires_past_stop_line() {
        let mut w = world(0.0, 8);
        w.schedule_cav(0.0);
        w.advance_tick().unwrap();
        w.set_directive(CavDirective::Hold);
        // Drive the vehicle past the line; Hold would freeze speed, but the
        // directive must stop applying after crossing, letting it accelerate.
        for _ in 0..200 {
            w.advance_tick().unwrap();
            if w.cav_exited() {
                break;
            }
        }
        assert!(w.cav_exited(), "vehicle should finish the route under Hold");
    }

    #[test]
    fn hold_freezes_speed_in_free_flow() {
        let mut w = world(0.0, 9);
        w.schedule_cav(0.0);
        w.advance_tick().unwrap();
        // On an empty road the vehicle enters at the limit; brake it to a
        // mid speed first, then hold upstream of the line.
        w.set_directive(CavDirective::Advise(-1.5));
        for _ in 0..2 {
            w.advance_tick().unwrap();
        }
        let v0 = w.cav().unwrap().speed;
        assert!(v0 < 11.0 && v0 > 4.0, "speed {v0}");
        w.set_directive(CavDirective::Hold);
        for _ in 0..5 {
            w.advance_tick().unwrap();
        }
        assert_relative_eq!(w.cav().unwrap().speed, v0, epsilon = 1e-9);
    }

    #[test]
    fn advise_tracks_commanded_acceleration() {
        let mut w = world(0.0, 10);
        w.schedule_cav(0.0);
        w.advance_tick().unwrap();
        // Brake to 6 m/s from 11 at -1 m/s^2 on an empty road.
        w.set_directive(CavDirective::Advise(-1.0));
        for _ in 0..5 {
            w.advance_tick().unwrap();
        }
        assert_relative_eq!(w.cav().unwrap().speed, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn flow_conservation_holds() {
        let mut w = world(2700.0, 11);
        for _ in 0..1000 {
            w.advance_tick().unwrap();
        }
        let (spawned, active, exited) = w.counts();
        assert_eq!(spawned, active as u64 + exited);
    }
}
