//! Command-line surface: train, eval, export-trajectory, and ablate.
//!
//! Every command resolves one `RunConfig` (scenario file, then flag and
//! environment overrides), stamps its outputs with the config hash, code
//! version, and master seed, and exits 0 on success, 2 on configuration
//! or usage errors, 3 on numeric failures.

use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{evaluate, run_eval_episode, Controller, EvalRow, Method};
use crate::config::{code_version, RunConfig};
use crate::env::{EnvConfig, TraceRow};
use crate::error::{GlosaError, Result};
use crate::nn::{load_policy, save_policy, PolicySet};
use crate::ppo::{train, EpisodeLog, UpdateLog};
use crate::rng::repeat_seed;

#[derive(Debug, Parser)]
#[command(
    name = "glosa",
    version,
    about = "Speed-advisory experiments at a signalized intersection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a learnable method and write checkpoint plus learning curves.
    Train(TrainArgs),
    /// Evaluate a method over seeded repeats and report the results table.
    Eval(EvalArgs),
    /// Export per-second traces of paired methods on one chosen seed.
    ExportTrajectory(ExportArgs),
    /// Run a paired ablation experiment.
    Ablate(AblateArgs),
}

/// Flags shared by all subcommands. Each one overrides the corresponding
/// scenario-file setting.
#[derive(Debug, Args)]
pub struct CommonOpts {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Control method: benchmark, rule_glosa, af_glosa, or l_glosa.
    #[arg(long)]
    pub method: Option<Method>,
    /// Master seed for traffic, initialization, and policy randomness.
    #[arg(long, env = "GLOSA_SEED")]
    pub seed: Option<u64>,
    /// Training episodes.
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Traffic demand in veh/h; replaces the scenario's density list.
    #[arg(long)]
    pub density: Option<f64>,
    /// Decision interval in seconds.
    #[arg(long)]
    pub control_step: Option<u32>,
    /// Output directory.
    #[arg(long, env = "GLOSA_OUT_DIR", value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl CommonOpts {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.episodes {
            cfg.trainer.episodes = e;
        }
        if let Some(d) = self.density {
            cfg.densities = vec![d];
            cfg.env.flow = d;
        }
        if let Some(cs) = self.control_step {
            cfg.env.control_step = cs;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    /// Trained checkpoint; required for af_glosa and l_glosa.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrajectoryScenario {
    /// Seed where the unassisted vehicle meets the red light and stops.
    #[value(name = "red_arrival")]
    RedArrival,
    /// Seed where the unassisted vehicle crosses on green without stopping.
    #[value(name = "green_arrival")]
    GreenArrival,
}

impl TrajectoryScenario {
    fn name(self) -> &'static str {
        match self {
            TrajectoryScenario::RedArrival => "red_arrival",
            TrajectoryScenario::GreenArrival => "green_arrival",
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    /// Which unassisted arrival pattern to search for.
    #[arg(long, value_enum)]
    pub scenario: TrajectoryScenario,
    /// Trained checkpoints; each adds the learned method it contains.
    /// Repeat the flag to export both learned variants.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Waiting-time observation scheme: green-corrected vs plain remaining.
    #[value(name = "wt_s1_s2")]
    WtS1S2,
    /// Advisory shaping reward on vs off.
    #[value(name = "r3_on_off")]
    R3OnOff,
    /// Decision interval one, two, and three seconds.
    #[value(name = "control_step")]
    ControlStep,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::WtS1S2 => "wt_s1_s2",
            Experiment::R3OnOff => "r3_on_off",
            Experiment::ControlStep => "control_step",
        }
    }
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    /// Which paired experiment to run.
    #[arg(long, value_enum)]
    pub experiment: Experiment,
}

/// Map an error to the documented process exit code.
pub fn exit_code(err: &GlosaError) -> i32 {
    match err {
        GlosaError::Numeric(_) | GlosaError::SimulationIntegrity(_) => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::ExportTrajectory(args) => cmd_export_trajectory(&args),
        Command::Ablate(args) => cmd_ablate(&args),
    }
}

fn write_header(w: &mut impl std::io::Write, cfg: &RunConfig, extra: &[(&str, String)]) -> Result<()> {
    writeln!(w, "# config_hash={}", cfg.config_hash())?;
    writeln!(w, "# version={}", code_version())?;
    writeln!(w, "# seed={}", cfg.seed)?;
    for (k, v) in extra {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Train into `dir` and return the trained policy. Episode and update
/// curves stream to CSV as they happen.
fn train_to_dir(cfg: &RunConfig, dir: &Path) -> Result<PolicySet> {
    if !cfg.method.is_learned() {
        return Err(GlosaError::Config(format!(
            "method {} is not learnable; choose af_glosa or l_glosa",
            cfg.method
        )));
    }
    let policy_cfg = cfg.policy_for_method();
    let mut ep_csv = create_file(&dir.join("episodes.csv"))?;
    write_header(&mut ep_csv, cfg, &[("method", cfg.method.to_string())])?;
    writeln!(
        ep_csv,
        "episode,reward_total,decision_steps,travel_seconds,waiting_seconds,stop_count,fuel_mg,co2_mg,mean_speed,completed"
    )?;
    let mut up_csv = create_file(&dir.join("updates.csv"))?;
    write_header(&mut up_csv, cfg, &[("method", cfg.method.to_string())])?;
    writeln!(
        up_csv,
        "update,after_episode,transitions,discrete_loss,continuous_loss,critic_loss,discrete_ratio,continuous_ratio,discrete_clip_fraction,continuous_clip_fraction,discrete_entropy,continuous_entropy,sigma,ratio_caps"
    )?;

    let total = cfg.trainer.episodes;
    let io_err: std::cell::RefCell<Option<std::io::Error>> = std::cell::RefCell::new(None);
    let on_episode = |log: &EpisodeLog| {
        let m = &log.metrics;
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            log.episode,
            log.reward_total,
            log.decision_steps,
            m.travel_seconds,
            m.waiting_seconds,
            m.stop_count,
            m.fuel_mg,
            m.co2_mg,
            m.mean_speed,
            m.completed as u8
        );
        if let Err(e) = writeln!(ep_csv, "{row}") {
            io_err.borrow_mut().get_or_insert(e);
        }
        if (log.episode + 1) % 500 == 0 || log.episode + 1 == total {
            eprintln!(
                "episode {}/{} reward {:.1} fuel {:.0} mg",
                log.episode + 1,
                total,
                log.reward_total,
                m.fuel_mg
            );
        }
    };
    let on_update = |log: &UpdateLog| {
        let s = &log.stats;
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            log.update,
            log.after_episode,
            s.transitions,
            s.discrete_loss,
            s.continuous_loss,
            s.critic_loss,
            s.discrete_ratio,
            s.continuous_ratio,
            s.discrete_clip_fraction,
            s.continuous_clip_fraction,
            s.discrete_entropy,
            s.continuous_entropy,
            s.sigma,
            s.ratio_caps
        );
        if let Err(e) = writeln!(up_csv, "{row}") {
            io_err.borrow_mut().get_or_insert(e);
        }
    };
    let policy = train(&cfg.env, &policy_cfg, &cfg.trainer, cfg.seed, on_episode, on_update)?;
    if let Some(e) = io_err.into_inner() {
        return Err(e.into());
    }
    ep_csv.flush()?;
    up_csv.flush()?;
    let ckpt = dir.join("checkpoint.txt");
    save_policy(&policy, &ckpt)?;
    eprintln!("checkpoint written to {}", ckpt.display());
    Ok(policy)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let dir = cfg.out_dir.join(format!("{}_seed{}", cfg.method, cfg.seed));
    train_to_dir(&cfg, &dir)?;
    Ok(())
}

/// Load a checkpoint and make sure its head layout matches the method.
fn load_checkpoint_for(method: Method, path: &Path) -> Result<PolicySet> {
    let policy = load_policy(path)?;
    if policy.cfg.with_discrete != method.with_discrete() {
        return Err(GlosaError::Config(format!(
            "checkpoint {} has with_discrete={}, but method {} needs {}",
            path.display(),
            policy.cfg.with_discrete,
            method,
            method.with_discrete()
        )));
    }
    Ok(policy)
}

struct MeanRow {
    wti: f64,
    wco: f64,
    co2: f64,
    fuel: f64,
}

fn mean_row(rows: &[EvalRow]) -> MeanRow {
    let n = rows.len().max(1) as f64;
    MeanRow {
        wti: rows.iter().map(|r| r.metrics.waiting_seconds).sum::<f64>() / n,
        wco: rows.iter().map(|r| r.metrics.stop_count as f64).sum::<f64>() / n,
        co2: rows.iter().map(|r| r.metrics.co2_mg).sum::<f64>() / n,
        fuel: rows.iter().map(|r| r.metrics.fuel_mg).sum::<f64>() / n,
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let policy = match (cfg.method.is_learned(), &args.checkpoint) {
        (true, Some(path)) => Some(load_checkpoint_for(cfg.method, path)?),
        (true, None) => {
            return Err(GlosaError::Config(format!(
                "method {} needs --checkpoint <file>",
                cfg.method
            )))
        }
        (false, _) => None,
    };
    let controller = match (cfg.method, &policy) {
        (Method::Benchmark, _) => Controller::Benchmark,
        (Method::RuleGlosa, _) => Controller::Rule,
        (_, Some(p)) => Controller::Learned(p),
        (_, None) => unreachable!("learned methods carry a policy here"),
    };

    let summary_path = cfg.out_dir.join(format!("eval_{}_seed{}.csv", cfg.method, cfg.seed));
    let mut summary = create_file(&summary_path)?;
    write_header(
        &mut summary,
        &cfg,
        &[("method", cfg.method.to_string()), ("eval_repeats", cfg.eval_repeats.to_string())],
    )?;
    writeln!(summary, "density,row,wti_s,wco,co2_mg,fuel_mg")?;
    let detail_path =
        cfg.out_dir.join(format!("eval_{}_seed{}_repeats.csv", cfg.method, cfg.seed));
    let mut detail = create_file(&detail_path)?;
    write_header(&mut detail, &cfg, &[("method", cfg.method.to_string())])?;
    writeln!(detail, "density,repeat,episode_seed,method,wti_s,wco,co2_mg,fuel_mg,completed")?;

    println!(
        "{:>8} {:>12} {:>10} {:>8} {:>14} {:>14}",
        "density", "row", "wti_s", "wco", "co2_mg", "fuel_mg"
    );
    for &density in &cfg.densities {
        let env_cfg = EnvConfig { flow: density, ..cfg.env.clone() };
        let method_rows = evaluate(&env_cfg, &controller, cfg.seed, cfg.eval_repeats)?;
        let bench_rows = if cfg.method == Method::Benchmark {
            method_rows.clone()
        } else {
            evaluate(&env_cfg, &Controller::Benchmark, cfg.seed, cfg.eval_repeats)?
        };
        for (tag, rows) in [(cfg.method.name(), &method_rows), ("benchmark", &bench_rows)] {
            for r in rows.iter() {
                writeln!(
                    detail,
                    "{},{},{},{},{},{},{},{},{}",
                    density,
                    r.repeat,
                    r.seed,
                    tag,
                    r.metrics.waiting_seconds,
                    r.metrics.stop_count,
                    r.metrics.co2_mg,
                    r.metrics.fuel_mg,
                    r.metrics.completed as u8
                )?;
            }
        }
        let m = mean_row(&method_rows);
        let b = mean_row(&bench_rows);
        let imp = MeanRow {
            wti: m.wti - b.wti,
            wco: m.wco - b.wco,
            co2: m.co2 - b.co2,
            fuel: m.fuel - b.fuel,
        };
        for (tag, row) in
            [(cfg.method.name(), &m), ("benchmark", &b), ("imp", &imp)]
        {
            writeln!(summary, "{},{},{},{},{},{}", density, tag, row.wti, row.wco, row.co2, row.fuel)?;
            println!(
                "{:>8} {:>12} {:>10.2} {:>8.2} {:>14.1} {:>14.1}",
                density, tag, row.wti, row.wco, row.co2, row.fuel
            );
        }
    }
    summary.flush()?;
    detail.flush()?;
    eprintln!("summary written to {}", summary_path.display());
    Ok(())
}

fn write_trace(path: &Path, cfg: &RunConfig, extra: &[(&str, String)], trace: &[TraceRow]) -> Result<()> {
    let mut w = create_file(path)?;
    write_header(&mut w, cfg, extra)?;
    writeln!(w, "t,position,speed,accel,phase,fuel_cum,gap_bit,accel_adv")?;
    for r in trace {
        let bit = r.gap_bit.map(|b| b.to_string()).unwrap_or_default();
        let adv = r.accel_adv.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.position,
            r.speed,
            r.accel,
            r.phase.encoded(),
            r.fuel_cum,
            bit,
            adv
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Find the first derived seed whose unassisted episode matches the
/// requested arrival pattern.
fn find_scenario_seed(
    env_cfg: &EnvConfig,
    master: u64,
    scenario: TrajectoryScenario,
) -> Result<u64> {
    for i in 0..2_000u64 {
        let seed = repeat_seed(master, i);
        let ep = run_eval_episode(env_cfg, &Controller::Benchmark, seed)?;
        let ok = match scenario {
            TrajectoryScenario::RedArrival => ep.metrics.stop_count >= 1,
            TrajectoryScenario::GreenArrival => {
                ep.metrics.completed && ep.metrics.stop_count == 0
            }
        };
        if ok {
            return Ok(seed);
        }
    }
    Err(GlosaError::Config(format!(
        "no {} seed found within 2000 candidates; adjust density or signal",
        scenario.name()
    )))
}

fn cmd_export_trajectory(args: &ExportArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let env_cfg = EnvConfig { flow: cfg.densities[0], ..cfg.env.clone() };
    let seed = find_scenario_seed(&env_cfg, cfg.seed, args.scenario)?;
    eprintln!("scenario {} uses episode seed {seed}", args.scenario.name());

    let mut jobs: Vec<(Method, Option<PolicySet>)> =
        vec![(Method::Benchmark, None), (Method::RuleGlosa, None)];
    for path in &args.checkpoint {
        let policy = load_policy(path)?;
        let method = if policy.cfg.with_discrete { Method::AfGlosa } else { Method::LGlosa };
        jobs.push((method, Some(policy)));
    }
    for (method, policy) in &jobs {
        let controller = match policy {
            Some(p) => Controller::Learned(p),
            None if *method == Method::RuleGlosa => Controller::Rule,
            None => Controller::Benchmark,
        };
        let ep = run_eval_episode(&env_cfg, &controller, seed)?;
        let path = cfg
            .out_dir
            .join(format!("trace_{}_{}.csv", args.scenario.name(), method));
        write_trace(
            &path,
            &cfg,
            &[
                ("method", method.to_string()),
                ("scenario", args.scenario.name().to_string()),
                ("episode_seed", seed.to_string()),
            ],
            &ep.trace,
        )?;
        eprintln!(
            "{}: {} rows, wti {:.1} s, wco {}, fuel {:.0} mg -> {}",
            method,
            ep.trace.len(),
            ep.metrics.waiting_seconds,
            ep.metrics.stop_count,
            ep.metrics.fuel_mg,
            path.display()
        );
    }
    Ok(())
}

/// One ablation arm: a label and the config it trains under.
struct Arm {
    label: String,
    cfg: RunConfig,
}

fn ablation_arms(cfg: &RunConfig, experiment: Experiment) -> Vec<Arm> {
    use crate::env::WaitScheme;
    match experiment {
        Experiment::WtS1S2 => [WaitScheme::S1, WaitScheme::S2]
            .into_iter()
            .map(|scheme| {
                let mut c = cfg.clone();
                c.env.obs.scheme = scheme;
                Arm { label: format!("{scheme:?}").to_lowercase(), cfg: c }
            })
            .collect(),
        Experiment::R3OnOff => {
            let on = cfg.clone();
            let mut off = cfg.clone();
            off.env.reward.omega = 0.0;
            vec![Arm { label: "r3_on".into(), cfg: on }, Arm { label: "r3_off".into(), cfg: off }]
        }
        Experiment::ControlStep => (1..=3u32)
            .map(|step| {
                let mut c = cfg.clone();
                c.env.control_step = step;
                Arm { label: format!("step{step}"), cfg: c }
            })
            .collect(),
    }
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    if !cfg.method.is_learned() {
        return Err(GlosaError::Config(format!(
            "ablations train a learnable method; got {}",
            cfg.method
        )));
    }
    let root = cfg.out_dir.join(format!("ablate_{}", args.experiment.name()));
    let mut summary = create_file(&root.join("summary.csv"))?;
    write_header(
        &mut summary,
        &cfg,
        &[
            ("experiment", args.experiment.name().to_string()),
            ("paired_seed_schedule", format!("master:{}", cfg.seed)),
        ],
    )?;
    writeln!(summary, "arm,density,row,wti_s,wco,co2_mg,fuel_mg")?;

    for arm in ablation_arms(&cfg, args.experiment) {
        eprintln!("training arm {}", arm.label);
        let dir = root.join(&arm.label);
        let policy = train_to_dir(&arm.cfg, &dir)?;
        let density = arm.cfg.densities[0];
        let env_cfg = EnvConfig { flow: density, ..arm.cfg.env.clone() };
        let rows = evaluate(&env_cfg, &Controller::Learned(&policy), cfg.seed, cfg.eval_repeats)?;
        let bench = evaluate(&env_cfg, &Controller::Benchmark, cfg.seed, cfg.eval_repeats)?;
        let m = mean_row(&rows);
        let b = mean_row(&bench);
        writeln!(summary, "{},{},{},{},{},{},{}", arm.label, density, arm.cfg.method.name(), m.wti, m.wco, m.co2, m.fuel)?;
        writeln!(summary, "{},{},benchmark,{},{},{},{}", arm.label, density, b.wti, b.wco, b.co2, b.fuel)?;
        eprintln!(
            "arm {}: wti {:.2} s, wco {:.2}, fuel {:.0} mg (benchmark {:.2}/{:.2}/{:.0})",
            arm.label, m.wti, m.wco, m.fuel, b.wti, b.wco, b.fuel
        );
    }
    summary.flush()?;
    eprintln!("summary written to {}", root.join("summary.csv").display());
    Ok(())
}
