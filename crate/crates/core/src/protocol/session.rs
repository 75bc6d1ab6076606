use rand::SeedableRng;

use super::log::TrialLog;
use super::trial::{mean_reading, run_trial, TrialHook};
use super::ProtocolError;
use crate::agents::Agent;
use crate::bottle::{is_empty, BottleState};
use crate::config::SimConfig;
use crate::SimRng;

/// Result of a collection session.
#[derive(Debug, Clone)]
pub struct Session {
    pub logs: Vec<TrialLog>,
    /// Number of times the bottle was filled, the initial fill included.
    pub fills: usize,
    pub bottle: BottleState,
}

impl Session {
    pub fn total_dispensed(&self) -> f64 {
        self.logs.iter().map(|l| l.dispensed).sum()
    }
}

/// Seed of trial `index` within a session seeded with `seed` (SplitMix64 mix).
pub fn session_trial_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collects `trials` trials with one agent, refilling the bottle whenever the
/// empty check after a trial finds it empty. Stops early if a trial is aborted.
pub fn run_session(
    agent: &mut dyn Agent,
    cfg: &SimConfig,
    trials: usize,
    seed: u64,
    mut hook: Option<&mut dyn TrialHook>,
) -> Result<Session, ProtocolError> {
    let params = &cfg.bottle;
    let mut bottle = BottleState::filled(params);
    let mut check_rng = SimRng::seed_from_u64(seed);
    check_rng.set_stream(2);
    let mut fills = 1;
    let mut logs = Vec::with_capacity(trials);
    for index in 0..trials {
        let log = run_trial(agent, &mut bottle, cfg, index, session_trial_seed(seed, index), hook.as_mut().map(|h| &mut **h as &mut dyn TrialHook))?;
        let aborted = log.termination == super::Termination::Aborted;
        logs.push(log);
        if aborted {
            break;
        }
        if index + 1 == trials {
            break;
        }
        // upright and equalized: compare against the freshly inverted reading
        let before = mean_reading(&bottle, params, cfg.protocol.rest_reads, &mut check_rng)?;
        bottle.flip(params, true);
        let after = mean_reading(&bottle, params, cfg.protocol.rest_reads, &mut check_rng)?;
        if is_empty(before, after, cfg.protocol.empty_tolerance) {
            bottle.flip(params, false);
            bottle.refill(params, params.fill_volume)?;
            fills += 1;
        }
    }
    Ok(Session { logs, fills, bottle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::PiAgent;

    #[test]
    fn single_trial_session() {
        let cfg = SimConfig::default();
        let mut agent = PiAgent::new(cfg.pi.clone());
        let s = run_session(&mut agent, &cfg, 1, 3, None).unwrap();
        assert_eq!(s.logs.len(), 1);
        assert_eq!(s.fills, 1);
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|i| session_trial_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
