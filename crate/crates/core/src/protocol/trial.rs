use rand::{Rng, SeedableRng};

use super::log::{Record, ScaleSample, Termination, TrialLog};
use super::{teleop_init_schedule, InitMode, ProtocolError};
use crate::agents::{synth_grip_force, Agent, FlowVisualFilter, InitSchedule, Observation, ObservationView, TrialStart};
use crate::bottle::{BottleParams, BottleState};
use crate::config::SimConfig;
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    PreSqueeze,
    Control,
    Done,
}

/// Operator-visible state at a frame instant. Carries no pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameInfo {
    /// Cumulative simulated time of the bottle, s.
    pub t: f64,
    pub flow_visual: f64,
    pub scale_weight: f64,
    pub gripper_width: f64,
    pub phase: Phase,
    pub trial_index: usize,
}

/// Request to stop the running trial, raised by a hook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HookAbort(pub String);

/// Observer driven from inside the simulation loop (used by the teleop gateway).
pub trait TrialHook {
    /// Frame rate at which `on_frame` is called, if any.
    fn frame_hz(&self) -> Option<f64> {
        None
    }

    fn on_frame(&mut self, frame: &FrameInfo) -> Result<(), HookAbort>;
}

/// Streams of a trial: environment noise and P_init draws, and agent-side noise.
fn trial_rngs(seed: u64) -> (SimRng, SimRng) {
    let env = SimRng::seed_from_u64(seed);
    let mut agent = SimRng::seed_from_u64(seed);
    agent.set_stream(1);
    (env, agent)
}

struct Runner<'a, 'h> {
    bottle: &'a mut BottleState,
    params: &'a BottleParams,
    visual: FlowVisualFilter,
    command: f64,
    /// trial-local time, s
    clock: f64,
    tare: f64,
    hook: Option<&'h mut dyn TrialHook>,
    frame_period: f64,
    next_frame: f64,
    phase: Phase,
    trial_index: usize,
    last_weight: f64,
    aborted: Option<HookAbort>,
}

impl Runner<'_, '_> {
    fn scale_weight(&self) -> f64 {
        let raw = (self.bottle.dispensed_mass - self.tare).max(0.0);
        let res = self.params.scale_resolution;
        let counts = (raw / res + 1e-9).floor();
        let per_gram = (1.0 / res).round();
        if (per_gram * res - 1.0).abs() < 1e-12 {
            counts / per_gram
        } else {
            counts * res
        }
    }

    /// Integrates up to trial-local time `target` in equal substeps no longer than `sim_dt`.
    fn advance_to(&mut self, target: f64) -> Result<(), ProtocolError> {
        let span = target - self.clock;
        if span <= 0.0 {
            return Ok(());
        }
        let n = ((span / self.params.sim_dt) - 1e-9).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        for _ in 0..n {
            let flow = self.bottle.advance(self.params, self.command, dt)?;
            self.visual.update(flow, dt);
            if self.frame_period > 0.0 && self.aborted.is_none() && self.bottle.sim_time >= self.next_frame {
                self.next_frame += self.frame_period;
                self.emit_frame();
            }
        }
        self.clock = target;
        Ok(())
    }

    fn emit_frame(&mut self) {
        let frame = FrameInfo {
            t: self.bottle.sim_time,
            flow_visual: self.visual.filtered(),
            scale_weight: self.last_weight,
            gripper_width: self.bottle.gripper_width,
            phase: self.phase,
            trial_index: self.trial_index,
        };
        if let Some(hook) = self.hook.as_deref_mut() {
            if let Err(abort) = hook.on_frame(&frame) {
                self.aborted = Some(abort);
            }
        }
    }
}

pub(crate) fn mean_reading(bottle: &BottleState, params: &BottleParams, reads: usize, rng: &mut SimRng) -> Result<f64, ProtocolError> {
    let n = reads.max(1);
    let mut sum = 0.0;
    for _ in 0..n {
        sum += bottle.read_sensor(params, rng)?;
    }
    Ok(sum / n as f64)
}

/// Runs one squeeze trial on `bottle` and leaves it upright, equalized and released.
///
/// The bottle must hold liquid and sit at the loose-grasp width; it may be
/// upright (fresh grasp) or already inverted (straight after an empty check).
pub fn run_trial(
    agent: &mut dyn Agent,
    bottle: &mut BottleState,
    cfg: &SimConfig,
    trial_index: usize,
    seed: u64,
    hook: Option<&mut dyn TrialHook>,
) -> Result<TrialLog, ProtocolError> {
    let params = &cfg.bottle;
    let proto = &cfg.protocol;
    if bottle.liquid_volume <= 0.0 {
        return Err(ProtocolError::EmptyBottle);
    }
    let (mut env_rng, mut agent_rng) = trial_rngs(seed);
    let control_period = 1.0 / proto.control_hz;
    let fill_before = bottle.liquid_volume;

    if !bottle.inverted {
        bottle.release(params);
        bottle.flip(params, true);
    }
    let start_mass = bottle.dispensed_mass;
    let frame_period = hook.as_ref().and_then(|h| h.frame_hz()).map_or(0.0, |hz| 1.0 / hz);
    let next_frame = bottle.sim_time + frame_period;
    let command = bottle.gripper_width;
    let mut run = Runner {
        bottle,
        params,
        visual: FlowVisualFilter::new(&cfg.sensing),
        command,
        clock: 0.0,
        tare: start_mass,
        hook,
        frame_period,
        next_frame,
        phase: Phase::Idle,
        trial_index,
        last_weight: 0.0,
        aborted: None,
    };

    // moving above the scale
    run.advance_to(proto.settle_time)?;
    run.tare = run.bottle.dispensed_mass;
    let p_rest = mean_reading(run.bottle, params, proto.rest_reads, &mut env_rng)?;

    let init_mode = match agent.init_schedule() {
        InitSchedule::Uniform => InitMode::Uniform,
        InitSchedule::Alternating => teleop_init_schedule(trial_index),
        InitSchedule::FromRest => InitMode::ZeroFlow,
    };
    let p_init = match init_mode {
        InitMode::Uniform => p_rest + env_rng.random_range(0.0..=proto.p_init_window),
        InitMode::ZeroFlow => p_rest,
        InitMode::HighFlow => p_rest + proto.high_flow_fraction * proto.p_init_window,
    };

    let mut termination = None;
    if init_mode != InitMode::ZeroFlow {
        run.phase = Phase::PreSqueeze;
        let step = proto.pre_squeeze_speed * control_period;
        let pre_start = run.clock;
        loop {
            if run.bottle.read_sensor(params, &mut env_rng)? >= p_init {
                break;
            }
            if run.bottle.gripper_width <= proto.w_min + 1e-9 {
                termination = Some(Termination::GripperMin);
                break;
            }
            if run.clock - pre_start >= proto.safety_stop {
                termination = Some(Termination::SafetyStop);
                break;
            }
            if run.aborted.is_some() {
                termination = Some(Termination::Aborted);
                break;
            }
            run.command = (run.command - step).max(proto.w_min);
            let target = run.clock + control_period;
            run.advance_to(target)?;
        }
    }

    agent.begin_trial(&TrialStart {
        trial_index,
        p_rest,
        control_hz: proto.control_hz,
        max_step: cfg.max_step(),
    });
    let agent_id = agent.id();
    let privileged = agent.privileged();
    let max_step = cfg.max_step();
    let max_width = params.contact_width;

    run.phase = Phase::Control;
    let t0 = run.clock;
    let mut records = Vec::new();
    let mut scale_samples = Vec::new();
    let mut next_scale_index = 0usize;
    let scale_time = |j: usize, rng: &mut SimRng| {
        let base = j as f64 / proto.scale_hz;
        if proto.scale_jitter > 0.0 && j > 0 {
            base + rng.random_range(-proto.scale_jitter..=proto.scale_jitter)
        } else {
            base
        }
    };
    let mut next_scale_t = scale_time(0, &mut env_rng);
    let mut k = 0usize;
    while termination.is_none() {
        let t = k as f64 * control_period;
        // scale samples falling at or before this tick
        while next_scale_t <= t + 1e-12 {
            run.advance_to(t0 + next_scale_t)?;
            let w = run.scale_weight();
            run.last_weight = w;
            scale_samples.push(ScaleSample { t: next_scale_t, weight: w });
            next_scale_index += 1;
            next_scale_t = scale_time(next_scale_index, &mut env_rng).max(next_scale_t);
        }
        run.advance_to(t0 + t)?;

        if run.aborted.is_some() {
            termination = Some(Termination::Aborted);
            break;
        }
        if run.last_weight >= proto.s_max {
            termination = Some(Termination::ScaleMax);
            break;
        }
        if run.bottle.gripper_width <= proto.w_min + 1e-9 {
            termination = Some(Termination::GripperMin);
            break;
        }
        if t >= proto.safety_stop {
            termination = Some(Termination::SafetyStop);
            break;
        }

        let pressure = run.bottle.read_sensor(params, &mut env_rng)?;
        let grip_force = synth_grip_force(run.bottle, params, &cfg.sensing, &mut env_rng)?;
        let flow_visual = run.visual.sample(&mut env_rng);
        let obs = Observation {
            privileged_pressure: pressure,
            gripper_width: run.bottle.gripper_width,
            flow_visual,
            grip_force,
            timestep_index: k,
        };
        let view = ObservationView::new(&obs, privileged, &agent_id);
        let requested = match agent.act(&view, &mut agent_rng) {
            Ok(a) => a,
            Err(crate::agents::AgentError::InputLost(_)) => {
                termination = Some(Termination::Aborted);
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let previous = run.command;
        run.command = (previous + requested.clamp(-max_step, max_step)).clamp(proto.w_min, max_width);
        records.push(Record {
            t,
            pressure,
            gripper_width: obs.gripper_width,
            action: run.command - previous,
            grip_force,
            flow_visual,
        });
        k += 1;
    }

    run.phase = Phase::Done;
    run.emit_frame();
    let dispensed = run.bottle.dispensed_mass - start_mass;
    let bottle = run.bottle;
    bottle.flip(params, false);
    bottle.release(params);

    Ok(TrialLog {
        agent_id,
        seed,
        trial_index,
        config_hash: cfg.hash(),
        init_mode,
        p_rest,
        p_init,
        fill_before,
        dispensed,
        termination: termination.expect("loop exits only with a termination"),
        records,
        scale_samples,
    })
}
