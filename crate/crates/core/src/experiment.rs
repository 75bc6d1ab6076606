//! End-to-end pipelines: flow calibration, PI tuning, collection, training,
//! rollouts and the full two-demonstrator study.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, ConstantSpeedAgent, PIConfig, PiAgent, PolicyAgent, SurrogateTeleop};
use crate::bottle::{flow_coefficient_for, BottleState};
use crate::config::SimConfig;
use crate::evaluation::{self, histogram, Comparison, ScoreSummary, HISTOGRAM_BIN_WIDTH, HISTOGRAM_CAP};
use crate::imitation::{build_dataset, train, ChunkModel, TrainReport};
use crate::protocol::{run_session, run_trial, session_trial_seed, write_dataset, Session, TrialHook, TrialLog};
use crate::Error;

/// Built-in demonstrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentKind {
    Pi,
    Teleop,
    /// Constant closing speed, mm/s.
    Constant(f64),
}

impl AgentKind {
    pub fn parse(name: &str) -> Result<Self, Error> {
        match name {
            "pi" => Ok(Self::Pi),
            "teleop" | "surrogate" => Ok(Self::Teleop),
            other => other
                .strip_prefix("constant:")
                .and_then(|v| v.parse::<f64>().ok())
                .map(Self::Constant)
                .ok_or_else(|| Error::Usage(format!("unknown agent `{other}` (pi, teleop, constant:<mm/s>)"))),
        }
    }

    pub fn build(self, cfg: &SimConfig) -> Box<dyn Agent> {
        match self {
            Self::Pi => Box::new(PiAgent::new(cfg.pi.clone())),
            Self::Teleop => Box::new(SurrogateTeleop::new(cfg.teleop.clone())),
            Self::Constant(speed) => Box::new(ConstantSpeedAgent::new(speed, cfg.protocol.control_hz)),
        }
    }
}

pub fn collect(
    cfg: &SimConfig,
    kind: AgentKind,
    trials: usize,
    seed: u64,
    hook: Option<&mut dyn TrialHook>,
) -> Result<Session, Error> {
    let mut agent = kind.build(cfg);
    Ok(run_session(agent.as_mut(), cfg, trials, seed, hook)?)
}

pub fn train_policy(logs: &[TrialLog], cfg: &SimConfig, seed: u64) -> Result<(ChunkModel, TrainReport), Error> {
    let dataset = build_dataset(logs)?;
    Ok(train(&dataset, &cfg.training, seed, &cfg.hash())?)
}

/// Evaluation session of a learned policy. Also returns how many inferences ran.
pub fn rollout(model: ChunkModel, label: &str, cfg: &SimConfig, trials: usize, seed: u64) -> Result<(Session, usize), Error> {
    let mut agent = PolicyAgent::new(model, label);
    let session = run_session(&mut agent, cfg, trials, seed, None)?;
    Ok((session, agent.inferences()))
}

/// A single trial from a fresh bottle.
pub fn single_trial(cfg: &SimConfig, agent: &mut dyn Agent, seed: u64) -> Result<TrialLog, Error> {
    let mut bottle = BottleState::filled(&cfg.bottle);
    Ok(run_trial(agent, &mut bottle, cfg, 0, seed, None)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub flow_coefficient: f64,
    /// Scale slope of the last PI check trial, g/s.
    pub slope: f64,
    pub rmse: f64,
    pub iterations: usize,
}

/// Fits the orifice coefficient to the target pour rate.
///
/// The base fit makes steady flow at the PI setpoint gauge (1.2 kPa above
/// rest) equal `target_flow`. A PI trial then pours slightly faster, because
/// pressure is sampled at the troughs of the per-step squeeze sawtooth; with
/// `refine` the coefficient is rescaled by measured slopes until the trial
/// itself pours at `target_flow`.
pub fn calibrate_flow(
    cfg: &SimConfig,
    target_flow: f64,
    seed: u64,
    refine: bool,
) -> Result<(SimConfig, Calibration), Error> {
    let mut cfg = cfg.clone();
    cfg.bottle.flow_coefficient = flow_coefficient_for(target_flow, cfg.pi.setpoint_offset, cfg.bottle.liquid_density);
    let cut = cfg.protocol.transient_cut;
    let mut last = None;
    let rounds = if refine { 8 } else { 1 };
    for iteration in 1..=rounds {
        let log = single_trial(&cfg, &mut PiAgent::new(cfg.pi.clone()), seed)?;
        let fit = evaluation::scale_fit(&log, cut)?;
        last = Some(Calibration { flow_coefficient: cfg.bottle.flow_coefficient, slope: fit.slope, rmse: fit.rmse, iterations: iteration });
        if (fit.slope - target_flow).abs() <= 0.005 * target_flow {
            break;
        }
        if fit.slope.is_nan() || fit.slope <= 0.0 {
            return Err(Error::Numeric(format!("calibration trial poured nothing (slope {})", fit.slope)));
        }
        cfg.bottle.flow_coefficient *= target_flow / fit.slope;
    }
    let cal = last.expect("at least one iteration");
    cfg.bottle.flow_coefficient = cal.flow_coefficient;
    Ok((cfg, cal))
}

/// Grid candidates for `tune_pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiGrid {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Default for PiGrid {
    fn default() -> Self {
        Self {
            kp: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4],
            ki: vec![0.03, 0.06, 0.12, 0.25, 0.5, 1.0, 2.0],
            alpha: vec![0.9, 0.95, 0.99, 1.0],
        }
    }
}

/// Grid search over PI gains minimizing mean σ over a seeded session of
/// `trials` trials, so that every candidate faces the same range of fill
/// levels. Candidates that fail to complete a trial are skipped.
pub fn tune_pi(cfg: &SimConfig, grid: &PiGrid, trials: usize, seed: u64) -> Result<(PIConfig, f64), Error> {
    let mut best: Option<(PIConfig, f64)> = None;
    for &kp in &grid.kp {
        for &ki in &grid.ki {
            for &alpha in &grid.alpha {
                let pi = PIConfig { kp, ki, alpha, ..cfg.pi.clone() };
                let Ok(session) = run_session(&mut PiAgent::new(pi.clone()), cfg, trials, seed, None) else {
                    continue;
                };
                let scores: Vec<f64> = session
                    .logs
                    .iter()
                    .filter_map(|l| evaluation::trial_score(l, cfg.protocol.transient_cut).ok())
                    .collect();
                if scores.len() < trials {
                    continue;
                }
                let mean = scores.iter().sum::<f64>() / trials as f64;
                if best.as_ref().is_none_or(|(_, m)| mean < *m) {
                    best = Some((pi, mean));
                }
            }
        }
    }
    best.ok_or_else(|| Error::Numeric("no PI candidate completed its trials".into()))
}

/// Outcome of the two-demonstrator study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub config_hash: String,
    pub pi: ScoreSummary,
    pub teleop: ScoreSummary,
    pub pi_policy: ScoreSummary,
    pub teleop_policy: ScoreSummary,
    pub pi_training: TrainReport,
    pub teleop_training: TrainReport,
    /// Π_PI against Π_Teleop.
    pub policies: Comparison,
    /// PI against the teleoperator.
    pub demonstrators: Comparison,
}

impl StudyReport {
    pub fn text(&self) -> String {
        let line = |name: &str, s: &ScoreSummary| format!("{name:<14} sigma = {:8.2} ± {:7.2} Pa  (n = {})\n", s.mean, s.std, s.n);
        let mut out = format!("seed {}  config {}\n", self.seed, self.config_hash);
        out += &line("pi", &self.pi);
        out += &line("teleop", &self.teleop);
        out += &line("policy:pi", &self.pi_policy);
        out += &line("policy:teleop", &self.teleop_policy);
        out += &format!(
            "training loss  pi {:.4} -> {:.4}, teleop {:.4} -> {:.4}\n",
            self.pi_training.epoch_losses.first().copied().unwrap_or(f64::NAN),
            self.pi_training.final_loss,
            self.teleop_training.epoch_losses.first().copied().unwrap_or(f64::NAN),
            self.teleop_training.final_loss,
        );
        out += &self.policies.report();
        out
    }
}

/// Stage names for the on-disk layout of a study.
const STAGES: [&str; 4] = ["pi", "teleop", "policy_pi", "policy_teleop"];

/// Two collections, two trainings, two rollouts and the comparison. When `out`
/// is given, every dataset, model and report is written below it.
pub fn run_study(cfg: &SimConfig, seed: u64, out: Option<&Path>) -> Result<StudyReport, Error> {
    let proto = &cfg.protocol;
    let cut = proto.transient_cut;
    let train_n = proto.trials_per_training_set;
    let eval_n = proto.trials_per_eval_set;
    // independent streams per stage
    let stage_seed = |k: usize| session_trial_seed(seed ^ 0x5EED_0000, 1000 + k);

    let pi = collect(cfg, AgentKind::Pi, train_n, stage_seed(0), None)?;
    let teleop = collect(cfg, AgentKind::Teleop, train_n, stage_seed(1), None)?;
    let (pi_model, pi_training) = train_policy(&pi.logs, cfg, stage_seed(2))?;
    let (teleop_model, teleop_training) = train_policy(&teleop.logs, cfg, stage_seed(3))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        pi_model.save(&dir.join("model_pi.json"))?;
        teleop_model.save(&dir.join("model_teleop.json"))?;
    }
    let (pi_roll, _) = rollout(pi_model, "pi", cfg, eval_n, stage_seed(4))?;
    let (teleop_roll, _) = rollout(teleop_model, "teleop", cfg, eval_n, stage_seed(5))?;

    let pi_summary = evaluation::summarize_scorable(&pi.logs, cut)?;
    let teleop_summary = evaluation::summarize_scorable(&teleop.logs, cut)?;
    let pi_policy = evaluation::summarize_scorable(&pi_roll.logs, cut)?;
    let teleop_policy = evaluation::summarize_scorable(&teleop_roll.logs, cut)?;
    let report = StudyReport {
        seed,
        config_hash: cfg.hash(),
        policies: Comparison::from_summaries("policy_pi", &pi_policy, "policy_teleop", &teleop_policy)?,
        demonstrators: Comparison::from_summaries("pi", &pi_summary, "teleop", &teleop_summary)?,
        pi: pi_summary,
        teleop: teleop_summary,
        pi_policy,
        teleop_policy,
        pi_training,
        teleop_training,
    };
    if let Some(dir) = out {
        let sessions = [(&pi, stage_seed(0)), (&teleop, stage_seed(1)), (&pi_roll, stage_seed(4)), (&teleop_roll, stage_seed(5))];
        for (name, (session, s)) in STAGES.iter().zip(sessions) {
            write_dataset(&dir.join(name), &session.logs, cfg, s)?;
            fs::write(dir.join(format!("scores_{name}.csv")), evaluation::scores_csv(&session.logs, cut))?;
        }
        let ha = histogram(&report.pi_policy.per_trial_sigma, HISTOGRAM_BIN_WIDTH, HISTOGRAM_CAP);
        let hb = histogram(&report.teleop_policy.per_trial_sigma, HISTOGRAM_BIN_WIDTH, HISTOGRAM_CAP);
        fs::write(dir.join("histogram.csv"), evaluation::histogram_csv("policy_pi", &ha, "policy_teleop", &hb))?;
        fs::write(dir.join("comparison.csv"), report.policies.csv())?;
        fs::write(dir.join("report.txt"), report.text())?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?)?;
    }
    Ok(report)
}
