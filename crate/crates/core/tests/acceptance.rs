//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any fail.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use squeeze_core::bottle::{is_empty, BottleParams, BottleState};
use squeeze_core::evaluation::{dominance_detail, histogram, scale_fit, trial_score};
use squeeze_core::experiment::{collect, rollout, run_study, single_trial, train_policy, AgentKind};
use squeeze_core::imitation::gradient_check;
use squeeze_core::protocol::{InitMode, Record, Termination, TrialLog};
use squeeze_core::{SimConfig, SimRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("{verdict} [{n}] {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
    o.pass
}

fn post_cut_pressures(log: &TrialLog, cut: f64) -> Vec<f64> {
    log.records.iter().filter(|r| r.t >= cut).map(|r| r.pressure).collect()
}

fn max_abs_deviation(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).abs()).fold(0.0, f64::max)
}

fn dominance_anchor() -> Outcome {
    let d = dominance_detail(93.0, 30.0, 144.0, 56.0).expect("valid inputs");
    let pass = (d.probability - 0.788).abs() <= 0.005 && d.mean_diff == 51.0 && (d.sd_diff - 63.5).abs() < 0.05;
    outcome(pass, format!("P = {:.4}, difference ~ N({}, {:.2})", d.probability, d.mean_diff, d.sd_diff))
}

fn single_trial_rates() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let seed = cfg.protocol.seed;
    let cut = cfg.protocol.transient_cut;
    let pi = single_trial(&cfg, AgentKind::Pi.build(&cfg).as_mut(), seed).expect("pi trial");
    let constant = single_trial(&cfg, AgentKind::Constant(0.6).build(&cfg).as_mut(), seed).expect("constant trial");
    let (Ok(fp), Ok(fc)) = (scale_fit(&pi, cut), scale_fit(&constant, cut)) else {
        return outcome(false, "scale fit failed".into());
    };
    let dev_pi = max_abs_deviation(&post_cut_pressures(&pi, cut));
    let dev_c = max_abs_deviation(&post_cut_pressures(&constant, cut));
    let secs = start.elapsed().as_secs_f64();
    let pass = (fp.slope - 1.22).abs() <= 0.15
        && fp.rmse <= 0.15
        && fc.rmse >= 5.0 * fp.rmse
        && dev_c > 3.0 * dev_pi
        && secs < 5.0;
    outcome(
        pass,
        format!(
            "PI slope {:.3} g/s rmse {:.3} g, max dev {:.1} Pa; constant rmse {:.3} g ({:.1}x), max dev {:.1} Pa ({:.1}x)",
            fp.slope,
            fp.rmse,
            dev_pi,
            fc.rmse,
            fc.rmse / fp.rmse,
            dev_c,
            dev_c / dev_pi
        ),
    )
}

fn study_ordering() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let r = match run_study(&cfg, seed, None) {
            Ok(r) => r,
            Err(e) => {
                lines.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let (pi, te, ppi, pte) = (r.pi.mean, r.teleop.mean, r.pi_policy.mean, r.teleop_policy.mean);
        let p = r.policies.dominance.probability;
        let ok = pi < ppi && pi < te && ppi < pte && p > 0.5;
        passed += ok as usize;
        lines.push(format!(
            "seed {seed} {}: PI {pi:.1}, teleop {te:.1}, policy(PI) {ppi:.1}, policy(teleop) {pte:.1}, P {p:.3}",
            if ok { "ok" } else { "miss" }
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    for l in &lines {
        println!("      {l}");
    }
    outcome(passed >= 4 && secs <= 600.0, format!("{passed}/5 seeds satisfy all four orderings"))
}

fn physics_invariants() -> Outcome {
    let start = Instant::now();
    let p = BottleParams::default();
    let mut rng = SimRng::seed_from_u64(99);
    let mut worst_mass: f64 = 0.0;
    let mut worst_boyle: f64 = 0.0;
    let mut negative_flow = false;
    let mut scale_drop = false;
    for _ in 0..40 {
        let volume = rng.random_range(30.0..220.0);
        let mut s = BottleState::with_volume(&p, volume);
        s.flip(&p, true);
        let boyle0 = s.air_pressure(&p).unwrap() * s.air_volume(&p);
        let mut last = s.dispensed_mass;
        let mut vented = false;
        for _ in 0..rng.random_range(1..6) {
            let width = rng.random_range(38.0..50.0);
            for _ in 0..rng.random_range(50..400) {
                let flow = s.step(&p, width).unwrap();
                negative_flow |= flow < 0.0;
                scale_drop |= s.dispensed_mass < last;
                last = s.dispensed_mass;
                let total = s.liquid_volume * p.liquid_density + s.dispensed_mass;
                worst_mass = worst_mass.max((total - volume * p.liquid_density).abs() / (volume * p.liquid_density));
                vented |= s.liquid_volume == 0.0;
                if !vented {
                    let b = s.air_pressure(&p).unwrap() * s.air_volume(&p);
                    worst_boyle = worst_boyle.max(((b - boyle0) / boyle0).abs());
                }
            }
        }
    }
    // recorded scale never decreases
    let cfg = SimConfig::default();
    let log = single_trial(&cfg, AgentKind::Pi.build(&cfg).as_mut(), 3).unwrap();
    scale_drop |= log.scale_samples.windows(2).any(|w| w[1].weight < w[0].weight);

    // squeeze, hold, and let the bottle settle back
    let mut worst_rest: f64 = 0.0;
    for volume in [60.0, 120.0, 210.0] {
        let mut s = BottleState::with_volume(&p, volume);
        s.flip(&p, true);
        for _ in 0..600 {
            s.step(&p, 44.0).unwrap();
        }
        let g0 = s.gauge_pressure(&p).unwrap();
        for _ in 0..(120.0 / p.sim_dt).round() as usize {
            s.step(&p, 44.0).unwrap();
        }
        let flow = p.orifice_flow(s.gauge_pressure(&p).unwrap());
        worst_rest = worst_rest.max(flow / p.orifice_flow(g0));
    }

    let mut full = BottleState::with_volume(&p, 100.0);
    let before = full.read_sensor(&p, &mut rng).unwrap();
    full.flip(&p, true);
    let head = full.gauge_pressure(&p).unwrap();
    let after = full.read_sensor(&p, &mut rng).unwrap();
    let mut dry = BottleState::with_volume(&p, 0.0);
    let dry_before = dry.read_sensor(&p, &mut rng).unwrap();
    dry.flip(&p, true);
    let dry_after = dry.read_sensor(&p, &mut rng).unwrap();
    let detection_ok = (head - 490.5).abs() < 1e-6 && !is_empty(before, after, 50.0) && is_empty(dry_before, dry_after, 50.0);

    let secs = start.elapsed().as_secs_f64();
    let pass = worst_mass <= 1e-9 && worst_boyle <= 1e-9 && !negative_flow && !scale_drop && worst_rest < 0.01 && detection_ok && secs < 10.0;
    outcome(
        pass,
        format!(
            "mass {worst_mass:.1e}, Boyle {worst_boyle:.1e}, negative flow {negative_flow}, scale drop {scale_drop}, rest flow {:.2e} of initial, head {head:.1} Pa, detection {detection_ok}",
            worst_rest
        ),
    )
}

fn learning() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let seed = cfg.protocol.seed;
    let data = collect(&cfg, AgentKind::Pi, cfg.protocol.trials_per_training_set, seed, None).expect("pi data");
    let (model, report) = train_policy(&data.logs, &cfg, seed).expect("training");
    let (again, _) = train_policy(&data.logs, &cfg, seed).expect("training");
    let identical = model.net.params().iter().zip(again.net.params()).all(|(a, b)| a.to_bits() == b.to_bits());

    let ds = squeeze_core::imitation::build_dataset(&data.logs).unwrap();
    let samples: Vec<_> = ds.samples(&model.target_scale).into_iter().step_by(13).collect();
    let grad_err = gradient_check(&model, &samples, 1e-5, seed).unwrap();

    let e = &report.epoch_losses;
    let ratio = e[e.len() - 1] / e[0];

    let (roll, inferences) = rollout(model.clone(), "pi", &cfg, 3, seed).expect("rollout");
    let steps: usize = roll.logs.iter().map(|l| l.records.len()).sum();
    let max_step = cfg.max_step();
    let head_only = roll.logs.iter().flat_map(|l| &l.records).all(|r| {
        let chunk = model.predict(&[r.gripper_width, r.flow_visual, r.grip_force]).unwrap();
        let head = chunk[0].clamp(-max_step, max_step);
        // the width limits may shorten the step, nothing else changes it
        (r.action - head).abs() < 1e-12 || (r.action.abs() < head.abs() && r.action * head >= 0.0)
    });

    let secs = start.elapsed().as_secs_f64();
    let pass = grad_err <= 1e-4 && e.len() == 50 && ratio <= 0.1 && identical && inferences == steps && head_only && secs < 120.0;
    outcome(
        pass,
        format!(
            "gradient error {grad_err:.1e}, loss {:.4} -> {:.4} (ratio {ratio:.3}), reproducible {identical}, {inferences} inferences for {steps} steps, head only {head_only}",
            e[0],
            e[e.len() - 1]
        ),
    )
}

fn synthetic(pressures: &[f64]) -> TrialLog {
    TrialLog {
        agent_id: "synthetic".into(),
        seed: 0,
        trial_index: 0,
        config_hash: String::new(),
        init_mode: InitMode::Uniform,
        p_rest: 0.0,
        p_init: 0.0,
        fill_before: 0.0,
        dispensed: 0.0,
        termination: Termination::ScaleMax,
        records: pressures
            .iter()
            .enumerate()
            .map(|(k, &pressure)| Record { t: k as f64 / 15.0, pressure, gripper_width: 0.0, action: 0.0, grip_force: 0.0, flow_visual: 0.0 })
            .collect(),
        scale_samples: Vec::new(),
    }
}

fn scoring() -> Outcome {
    let constant = trial_score(&synthetic(&[101_400.0; 200]), 2.0).unwrap();
    let mut two = vec![0.0; 30];
    two.extend([101_000.0, 101_037.0]);
    let two_point = trial_score(&synthetic(&two), 2.0).unwrap();
    let mut early: Vec<f64> = (0..30).map(|k| (k * 97 % 400) as f64).collect();
    early.extend([5.0; 100]);
    let before_cut = trial_score(&synthetic(&early), 2.0).unwrap();
    let h = histogram(&[0.0, 24.999, 25.0, 399.999, 400.0, 9000.0], 25.0, 400.0);
    let bins_ok = h.counts.len() == 17 && h.counts[0] == 2 && h.counts[1] == 1 && h.counts[15] == 1 && h.counts[16] == 2;

    let cfg = SimConfig::default();
    let a = single_trial(&cfg, AgentKind::Teleop.build(&cfg).as_mut(), 8).unwrap();
    let b = single_trial(&cfg, AgentKind::Teleop.build(&cfg).as_mut(), 8).unwrap();
    let identical = a == b && a.to_jsonl_string() == b.to_jsonl_string();

    let pass = constant == 0.0 && (two_point - 37.0 / 2f64.sqrt()).abs() < 1e-9 && before_cut == 0.0 && bins_ok && identical;
    outcome(
        pass,
        format!("constant {constant}, two-point {two_point:.4}, pre-cut only {before_cut}, histogram bins {bins_ok}, same-seed logs identical {identical}"),
    )
}

fn main() {
    let results = [
        report(1, "dominance of reported distributions", dominance_anchor),
        report(2, "single-trial pour rate and baseline contrast", single_trial_rates),
        report(3, "teacher and policy ordering across seeds", study_ordering),
        report(4, "physics invariants", physics_invariants),
        report(5, "learning", learning),
        report(6, "scoring oracles", scoring),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
