//! Reference control methods and the paired-seed evaluation harness.
//!
//! Four methods share one environment contract: plain car-following, the
//! fixed-rule speed advisor, and the two learned variants (hybrid head and
//! continuous-only). Evaluation pairs methods on identical episode seeds
//! so differences come from control alone, never from traffic draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{idx, EnvConfig, EpisodeMetrics, GlosaEnv, HybridAction, TraceRow};
use crate::error::{GlosaError, Result};
use crate::nn::PolicySet;
use crate::rng::{derive_rng, repeat_seed, Stream};
use crate::sim::{CavDirective, Phase, SignalConfig};

/// Named control method, as selected on the command line and recorded in
/// result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Autonomous car-following with no advisory at all.
    Benchmark,
    /// Fixed-rule advisor targeting the next reachable green window.
    RuleGlosa,
    /// Learned hybrid policy: gap bit plus advised acceleration.
    AfGlosa,
    /// Learned continuous-only policy that advises every control step.
    LGlosa,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Benchmark, Method::RuleGlosa, Method::AfGlosa, Method::LGlosa];

    pub fn name(self) -> &'static str {
        match self {
            Method::Benchmark => "benchmark",
            Method::RuleGlosa => "rule_glosa",
            Method::AfGlosa => "af_glosa",
            Method::LGlosa => "l_glosa",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::AfGlosa | Method::LGlosa)
    }

    /// Whether the learned variant carries the discrete gap head.
    pub fn with_discrete(self) -> bool {
        !matches!(self, Method::LGlosa)
    }
}

impl std::str::FromStr for Method {
    type Err = GlosaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "benchmark" => Ok(Method::Benchmark),
            "rule_glosa" | "rule" => Ok(Method::RuleGlosa),
            "af_glosa" | "af" => Ok(Method::AfGlosa),
            "l_glosa" | "l" => Ok(Method::LGlosa),
            other => Err(GlosaError::Config(format!(
                "unknown method '{other}' (expected benchmark, rule_glosa, af_glosa or l_glosa)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Signal phase `t` seconds from now, given the current phase and its
/// remaining duration.
pub fn phase_at_offset(phase: Phase, remaining: f64, signal: &SignalConfig, t: f64) -> Phase {
    if t < remaining {
        return phase;
    }
    let u = (t - remaining) % signal.cycle();
    match phase {
        Phase::Green => {
            if u < signal.red_duration {
                Phase::Red
            } else {
                Phase::Green
            }
        }
        Phase::Red => {
            if u < signal.green_duration {
                Phase::Green
            } else {
                Phase::Red
            }
        }
    }
}

/// Constant target speed that hits the earliest reachable green window,
/// or None when holding the current speed already crosses on green.
///
/// The no-advisory test projects the constant-speed arrival time onto the
/// signal schedule; any green window counts. Otherwise green-window starts
/// are enumerated in order and the first arrival feasible within
/// `[v_min, v_max]` wins. When even the first window would need a crawl
/// below `v_min`, the advisor settles for `v_min` and lets car-following
/// absorb the remaining wait at the line.
pub fn rule_target_speed(
    distance: f64,
    speed: f64,
    phase: Phase,
    remaining: f64,
    signal: &SignalConfig,
    v_max: f64,
    v_min: f64,
) -> Option<f64> {
    debug_assert!(distance > 0.0 && v_max > 0.0 && v_min > 0.0 && v_min <= v_max);
    if speed > 1e-9 {
        let arrival = distance / speed;
        if phase_at_offset(phase, remaining, signal, arrival) == Phase::Green {
            return None;
        }
    }
    let earliest = distance / v_max;
    let mut start = match phase {
        Phase::Green => remaining + signal.red_duration,
        Phase::Red => remaining,
    };
    for _ in 0..64 {
        let arrive = earliest.max(start);
        if arrive < start + signal.green_duration {
            let v = distance / arrive;
            if v >= v_min {
                return Some(v);
            }
            // Later windows only yield slower targets.
            break;
        }
        start += signal.cycle();
    }
    Some(v_min)
}

/// A control method bound to whatever state it needs at run time.
pub enum Controller<'a> {
    Benchmark,
    Rule,
    Learned(&'a PolicySet),
}

impl Controller<'_> {
    pub fn method_kind(&self) -> &'static str {
        match self {
            Controller::Benchmark => "benchmark",
            Controller::Rule => "rule",
            Controller::Learned(_) => "learned",
        }
    }
}

/// Everything one evaluation episode produces.
#[derive(Debug, Clone)]
pub struct EvalEpisode {
    pub seed: u64,
    pub metrics: EpisodeMetrics,
    pub trace: Vec<TraceRow>,
}

/// Run a single episode under the given controller with deterministic
/// actions. `seed` fixes the traffic draw completely.
pub fn run_eval_episode(
    cfg: &EnvConfig,
    controller: &Controller<'_>,
    seed: u64,
) -> Result<EvalEpisode> {
    let world_rng = derive_rng(seed, Stream::World, 0);
    let mut init_rng = derive_rng(seed, Stream::Init, 0);
    let mut env = GlosaEnv::new(cfg.clone(), world_rng, &mut init_rng)?;
    match controller {
        Controller::Benchmark => env.finish()?,
        Controller::Rule => {
            if let Some(obs) = env.advance_to_zone()? {
                let v_max = cfg.cav_speed_cap.min(cfg.road.speed_limit);
                let phase = if obs.raw[idx::PHASE] > 0.5 { Phase::Red } else { Phase::Green };
                let target = rule_target_speed(
                    obs.raw[idx::DISTANCE],
                    obs.raw[idx::SPEED],
                    phase,
                    obs.raw[idx::PHASE_REMAINING],
                    &cfg.signal,
                    v_max,
                    cfg.reward.v_min,
                );
                if let Some(v) = target {
                    while !env.done() && !env.world().cav_crossed_stop_line() {
                        env.step_directive(CavDirective::Track(v), true)?;
                    }
                }
            }
            env.finish()?;
        }
        Controller::Learned(policy) => {
            if let Some(first) = env.advance_to_zone()? {
                let mut obs = first;
                loop {
                    let obs_n = obs.normalized(&cfg.obs);
                    let (advise, accel) = policy.act_deterministic(&obs_n);
                    let out = env.step(HybridAction { advise, accel })?;
                    if out.terminal {
                        break;
                    }
                    obs = out.obs.expect("non-terminal step yields an observation");
                }
            }
            env.finish()?;
        }
    }
    Ok(EvalEpisode { seed, metrics: env.metrics(), trace: env.trace().to_vec() })
}

/// One evaluation repeat: the derived seed and its episode metrics.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub repeat: u64,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

/// Evaluate a controller over `repeats` paired seeds derived from
/// `master`. Episodes run in parallel; rows come back in repeat order so
/// different methods line up row for row.
pub fn evaluate(
    cfg: &EnvConfig,
    controller: &Controller<'_>,
    master: u64,
    repeats: u64,
) -> Result<Vec<EvalRow>> {
    (0..repeats)
        .into_par_iter()
        .map(|i| {
            let seed = repeat_seed(master, i);
            let ep = run_eval_episode(cfg, controller, seed)?;
            Ok(EvalRow { repeat: i, seed, metrics: ep.metrics })
        })
        .collect()
}

/// Paired-mean summary of a metric column over evaluation rows.
pub fn mean_of<F: Fn(&EpisodeMetrics) -> f64>(rows: &[EvalRow], f: F) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / rows.len() as f64
}
