//! Per-episode trip metrics folded out of the advisory vehicle's trace.

use super::TraceRow;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeMetrics {
    /// Seconds the vehicle spent on the route.
    pub travel_seconds: f64,
    /// Seconds at standstill (speed at or below the stop threshold).
    pub waiting_seconds: f64,
    /// Number of moving-to-stopped transitions.
    pub stop_count: u32,
    /// Total fuel burned, mg.
    pub fuel_mg: f64,
    /// Total CO2 emitted, mg.
    pub co2_mg: f64,
    /// Time-mean speed over the trip, m/s.
    pub mean_speed: f64,
    /// Whether the vehicle finished the route before the horizon.
    pub completed: bool,
}

/// Fold a trace into trip metrics. `co2_mg` accumulates outside the trace
/// rows and is passed through; stop accounting reads end-of-tick speeds.
pub fn accumulate_metrics(
    trace: &[TraceRow],
    stop_speed: f64,
    co2_mg: f64,
    completed: bool,
) -> EpisodeMetrics {
    let n = trace.len();
    let mut waiting = 0.0;
    let mut stops = 0u32;
    let mut speed_sum = 0.0;
    let mut prev_stopped: Option<bool> = None;
    for row in trace {
        let stopped = row.speed <= stop_speed;
        if stopped {
            waiting += 1.0;
        }
        if stopped && prev_stopped == Some(false) {
            stops += 1;
        }
        prev_stopped = Some(stopped);
        speed_sum += row.speed;
    }
    EpisodeMetrics {
        travel_seconds: n as f64,
        waiting_seconds: waiting,
        stop_count: stops,
        fuel_mg: trace.last().map_or(0.0, |r| r.fuel_cum),
        co2_mg,
        mean_speed: if n == 0 { 0.0 } else { speed_sum / n as f64 },
        completed,
    }
}
