//! Real-time bridge to a human operator.
//!
//! The gateway accepts one TCP client and speaks line-delimited JSON: the
//! server streams [`TeleopFrame`]s at 30 Hz while a session runs, the client
//! sends [`TriggerMsg`]s whenever it likes. Received triggers land in a
//! single-slot [`Mailbox`] (latest value wins); the simulation thread reads it
//! once per control step and never shares any other state with the network.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentError, InitSchedule, ObservationView};
use crate::config::SimConfig;
use crate::protocol::{run_session, write_dataset, FrameInfo, HookAbort, Phase, Session, TrialHook};
use crate::{Error, SimRng};

pub const FRAME_HZ: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    Idle,
    PreSqueeze,
    Control,
    Done,
}

impl From<Phase> for TrialPhase {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Idle => Self::Idle,
            Phase::PreSqueeze => Self::PreSqueeze,
            Phase::Control => Self::Control,
            Phase::Done => Self::Done,
        }
    }
}

/// Server → client. Deliberately has no pressure field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleopFrame {
    /// s
    pub t: f64,
    /// g/s
    pub flow_visual: f64,
    /// g
    pub scale_weight: f64,
    /// mm
    pub gripper_width: f64,
    pub trial_phase: TrialPhase,
    pub trial_index: usize,
}

impl From<&FrameInfo> for TeleopFrame {
    fn from(f: &FrameInfo) -> Self {
        Self {
            t: f.t,
            flow_visual: f.flow_visual,
            scale_weight: f.scale_weight,
            gripper_width: f.gripper_width,
            trial_phase: f.phase.into(),
            trial_index: f.trial_index,
        }
    }
}

/// Client → server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerMsg {
    /// 0 = released, 1 = fully squeezed
    pub trigger: f64,
    /// ms, client clock; informational only
    #[serde(default)]
    pub client_time: f64,
}

impl TriggerMsg {
    /// Parses one line, clamping the trigger into [0, 1] (NaN reads as released).
    pub fn parse_line(line: &str) -> Result<Self, serde_json::Error> {
        let mut msg: Self = serde_json::from_str(line)?;
        msg.trigger = if msg.trigger.is_nan() { 0.0 } else { msg.trigger.clamp(0.0, 1.0) };
        Ok(msg)
    }
}

/// Linear trigger map: released → loose grasp, fully pressed → minimum opening.
pub fn trigger_to_width(trigger: f64, w_loose: f64, w_min: f64) -> f64 {
    w_loose + trigger.clamp(0.0, 1.0) * (w_min - w_loose)
}

#[derive(Debug, Default)]
struct Slot {
    latest: Option<TriggerMsg>,
    received: u64,
    closed: bool,
}

/// Single-slot, overwrite-on-write mailbox between the network reader and the
/// simulation loop.
#[derive(Debug, Default)]
pub struct Mailbox {
    slot: Mutex<Slot>,
    changed: Condvar,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Slot> {
        // a panicking writer cannot leave the slot half-updated
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn post(&self, msg: TriggerMsg) {
        let mut slot = self.lock();
        slot.latest = Some(msg);
        slot.received += 1;
        self.changed.notify_all();
    }

    /// Marks the input side as gone; subsequent reads report it.
    pub fn close(&self) {
        self.lock().closed = true;
        self.changed.notify_all();
    }

    pub fn latest(&self) -> Option<TriggerMsg> {
        self.lock().latest
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    pub fn received(&self) -> u64 {
        self.lock().received
    }

    /// Blocks until at least `count` messages have arrived in total. Returns
    /// `false` on close or timeout.
    pub fn wait_for(&self, count: u64, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut slot = self.lock();
        while slot.received < count {
            if slot.closed {
                return false;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            slot = self.changed.wait_timeout(slot, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
        true
    }
}

/// Operator steering the gripper through the trigger: every control step it
/// commands the width the current trigger maps to.
#[derive(Debug, Clone)]
pub struct HumanTeleopAgent {
    mailbox: Arc<Mailbox>,
    w_loose: f64,
    w_min: f64,
}

impl HumanTeleopAgent {
    pub fn new(mailbox: Arc<Mailbox>, w_loose: f64, w_min: f64) -> Self {
        Self { mailbox, w_loose, w_min }
    }
}

impl Agent for HumanTeleopAgent {
    fn id(&self) -> String {
        "teleop:human".into()
    }

    fn init_schedule(&self) -> InitSchedule {
        InitSchedule::Alternating
    }

    fn act(&mut self, obs: &ObservationView<'_>, _rng: &mut SimRng) -> Result<f64, AgentError> {
        if self.mailbox.is_closed() {
            return Err(AgentError::InputLost("operator disconnected".into()));
        }
        let trigger = self.mailbox.latest().map_or(0.0, |m| m.trigger);
        Ok(trigger_to_width(trigger, self.w_loose, self.w_min) - obs.gripper_width())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Simulated time runs `speed` times faster than the wall clock.
    RealTime { speed: f64 },
    /// The simulation waits for one trigger message per frame sent. Makes a
    /// scripted client fully deterministic.
    Lockstep,
}

/// Streams frames to the client and paces the simulation.
pub struct FrameStream<W: Write> {
    out: W,
    mailbox: Arc<Mailbox>,
    pacing: Pacing,
    lockstep_timeout: Duration,
    frames: u64,
    last_t: f64,
    started: Option<(Instant, f64)>,
}

impl<W: Write> FrameStream<W> {
    pub fn new(out: W, mailbox: Arc<Mailbox>, pacing: Pacing) -> Self {
        Self {
            out,
            mailbox,
            pacing,
            lockstep_timeout: Duration::from_secs(30),
            frames: 0,
            last_t: f64::NEG_INFINITY,
            started: None,
        }
    }

    pub fn frames_sent(&self) -> u64 {
        self.frames
    }

    fn send(&mut self, frame: &TeleopFrame) -> std::io::Result<()> {
        // one write per frame keeps small-packet delays out of lockstep round trips
        let mut line = serde_json::to_string(frame).map_err(std::io::Error::other)?;
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.out.flush()
    }
}

impl<W: Write> TrialHook for FrameStream<W> {
    fn frame_hz(&self) -> Option<f64> {
        Some(FRAME_HZ)
    }

    fn on_frame(&mut self, info: &FrameInfo) -> Result<(), HookAbort> {
        if self.mailbox.is_closed() {
            return Err(HookAbort("operator disconnected".into()));
        }
        if info.t <= self.last_t {
            return Ok(());
        }
        self.last_t = info.t;
        if let Pacing::RealTime { speed } = self.pacing {
            let (wall0, sim0) = *self.started.get_or_insert((Instant::now(), info.t));
            if speed.is_finite() && speed > 0.0 {
                let due = wall0 + Duration::from_secs_f64((info.t - sim0) / speed);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
            }
        }
        self.send(&TeleopFrame::from(info)).map_err(|e| HookAbort(format!("frame send failed: {e}")))?;
        self.frames += 1;
        if self.pacing == Pacing::Lockstep && !self.mailbox.wait_for(self.frames, self.lockstep_timeout) {
            return Err(HookAbort("no reply from lockstep client".into()));
        }
        Ok(())
    }
}

/// Reads trigger lines until EOF, then closes the mailbox. Malformed lines are skipped.
pub fn pump_triggers<R: BufRead>(input: R, mailbox: &Mailbox) {
    for line in input.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(msg) = TriggerMsg::parse_line(&line) {
            mailbox.post(msg);
        }
    }
    mailbox.close();
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeOptions {
    pub trials: usize,
    pub seed: u64,
    pub pacing: Pacing,
    /// Where to write the recorded dataset, if anywhere.
    pub out: Option<PathBuf>,
}

/// Serves one operator session on an already-bound listener and returns the
/// recorded trials. A disconnect aborts the running trial and ends the session.
pub fn serve(cfg: &SimConfig, listener: &TcpListener, opts: &ServeOptions) -> Result<Session, Error> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let session = serve_stream(cfg, stream, opts)?;
    if let Some(dir) = &opts.out {
        write_dataset(dir, &session.logs, cfg, opts.seed)?;
    }
    Ok(session)
}

fn serve_stream(cfg: &SimConfig, stream: TcpStream, opts: &ServeOptions) -> Result<Session, Error> {
    let mailbox = Arc::new(Mailbox::new());
    let reader = {
        let input = BufReader::new(stream.try_clone()?);
        let mailbox = Arc::clone(&mailbox);
        thread::spawn(move || pump_triggers(input, &mailbox))
    };
    let mut agent = HumanTeleopAgent::new(Arc::clone(&mailbox), cfg.protocol.w_loose, cfg.protocol.w_min);
    let mut frames = FrameStream::new(&stream, Arc::clone(&mailbox), opts.pacing);
    let result = run_session(&mut agent, cfg, opts.trials, opts.seed, Some(&mut frames));
    // unblocks the reader whether or not the client hung up first
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    Ok(result?)
}
