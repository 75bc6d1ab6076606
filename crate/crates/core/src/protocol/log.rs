use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{InitMode, ProtocolError};

pub const TRIAL_LOG_FORMAT: &str = "squeeze-trial-log/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ScaleMax,
    GripperMin,
    /// Control loop ran past the safety limit; excluded from scoring.
    SafetyStop,
    /// Interrupted (e.g. teleoperation client lost); excluded from scoring.
    Aborted,
}

impl Termination {
    /// Ended by one of the protocol's own stopping rules.
    pub fn is_complete(self) -> bool {
        matches!(self, Termination::ScaleMax | Termination::GripperMin)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ScaleMax => "scale_max",
            Termination::GripperMin => "gripper_min",
            Termination::SafetyStop => "safety_stop",
            Termination::Aborted => "aborted",
        }
    }
}

/// One 15 Hz control-loop observation/action pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// s since control-loop start
    pub t: f64,
    /// absolute, Pa
    pub pressure: f64,
    pub gripper_width: f64,
    /// executed width change, mm
    pub action: f64,
    pub grip_force: f64,
    pub flow_visual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSample {
    pub t: f64,
    /// g, quantized, tared at trial start
    pub weight: f64,
}

/// Deployment-available slice of a record: what a learned policy may see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    pub gripper_width: f64,
    pub flow_visual: f64,
    pub grip_force: f64,
    pub action: f64,
}

impl PolicyStep {
    pub fn features(&self) -> [f64; 3] {
        [self.gripper_width, self.flow_visual, self.grip_force]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub agent_id: String,
    pub seed: u64,
    pub trial_index: usize,
    pub config_hash: String,
    pub init_mode: InitMode,
    pub p_rest: f64,
    pub p_init: f64,
    /// Liquid in the bottle when the trial began, mL.
    pub fill_before: f64,
    /// True dispensed mass over the whole trial, g.
    pub dispensed: f64,
    pub termination: Termination,
    pub records: Vec<Record>,
    pub scale_samples: Vec<ScaleSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    agent_id: String,
    seed: u64,
    trial_index: usize,
    config_hash: String,
    init_mode: InitMode,
    p_rest: f64,
    p_init: f64,
    fill_before: f64,
    dispensed: f64,
    termination: Termination,
    record_fields: Vec<String>,
    scale_fields: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Header),
    Record(Record),
    Scale(ScaleSample),
}

impl TrialLog {
    pub fn policy_view(&self) -> Vec<PolicyStep> {
        self.records
            .iter()
            .map(|r| PolicyStep {
                gripper_width: r.gripper_width,
                flow_visual: r.flow_visual,
                grip_force: r.grip_force,
                action: r.action,
            })
            .collect()
    }

    /// Control-loop duration covered by the records, s.
    pub fn duration(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    pub fn final_weight(&self) -> f64 {
        self.scale_samples.last().map_or(0.0, |s| s.weight)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), ProtocolError> {
        let header = Header {
            format: TRIAL_LOG_FORMAT.into(),
            agent_id: self.agent_id.clone(),
            seed: self.seed,
            trial_index: self.trial_index,
            config_hash: self.config_hash.clone(),
            init_mode: self.init_mode,
            p_rest: self.p_rest,
            p_init: self.p_init,
            fill_before: self.fill_before,
            dispensed: self.dispensed,
            termination: self.termination,
            record_fields: ["t", "pressure", "gripper_width", "action", "grip_force", "flow_visual"]
                .map(String::from)
                .to_vec(),
            scale_fields: ["t", "weight"].map(String::from).to_vec(),
        };
        serde_json::to_writer(&mut out, &Line::Header(header))?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, &Line::Record(*r))?;
            out.write_all(b"\n")?;
        }
        for s in &self.scale_samples {
            serde_json::to_writer(&mut out, &Line::Scale(*s))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, ProtocolError> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| ProtocolError::Data("empty trial log".into()))??;
        let header = match serde_json::from_str::<Line>(&first)? {
            Line::Header(h) => h,
            _ => return Err(ProtocolError::Data("trial log must start with a header line".into())),
        };
        if header.format != TRIAL_LOG_FORMAT {
            return Err(ProtocolError::Data(format!("unsupported trial log format `{}`", header.format)));
        }
        let mut records = Vec::new();
        let mut scale_samples = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(&line)? {
                Line::Record(r) => records.push(r),
                Line::Scale(s) => scale_samples.push(s),
                Line::Header(_) => return Err(ProtocolError::Data("duplicate header line".into())),
            }
        }
        Ok(Self {
            agent_id: header.agent_id,
            seed: header.seed,
            trial_index: header.trial_index,
            config_hash: header.config_hash,
            init_mode: header.init_mode,
            p_rest: header.p_rest,
            p_init: header.p_init,
            fill_before: header.fill_before,
            dispensed: header.dispensed,
            termination: header.termination,
            records,
            scale_samples,
        })
    }
}
