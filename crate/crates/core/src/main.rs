use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use squeeze_core::config::CONFIG_ENV;
use squeeze_core::evaluation::{self, histogram, Comparison, HISTOGRAM_BIN_WIDTH, HISTOGRAM_CAP};
use squeeze_core::experiment::{self, AgentKind, PiGrid};
use squeeze_core::imitation::ChunkModel;
use squeeze_core::protocol::{read_dataset, write_dataset, TrialLog};
use squeeze_core::teleop_gateway::{self, Pacing, ServeOptions};
use squeeze_core::{Error, SimConfig};

/// Squeeze-bottle pouring simulator: demonstrations, behavioral cloning and scoring.
#[derive(Debug, Parser)]
#[command(name = "squeeze", version)]
struct Cli {
    /// TOML config file (falls back to $SQUEEZE_CONFIG, then built-in defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set pi.kp=0.1` (repeatable)
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Print the effective config before running
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the orifice coefficient to the target PI pour rate and write a config
    Calibrate {
        /// g/s
        #[arg(long, default_value_t = 1.22)]
        target: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Grid-search the PI gains first
        #[arg(long)]
        tune_pi: bool,
        /// Rescale until a PI trial itself pours at the target rate
        #[arg(long)]
        refine: bool,
        #[arg(long, default_value_t = 10)]
        tune_trials: usize,
        /// Output config path (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record a demonstration session
    Collect {
        /// pi, teleop or constant:<mm/s>
        #[arg(long)]
        agent: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a chunking policy on a recorded session
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        force: Force,
    },
    /// Evaluate a trained policy
    Rollout {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Name used in the agent id
        #[arg(long)]
        label: Option<String>,
    },
    /// Per-trial scores as CSV
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// CSV destination (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        force: Force,
    },
    /// Dominance report between two score distributions
    Compare(CompareArgs),
    /// Teleoperation gateway for a human operator
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Wait for one client message per frame instead of running in real time
        #[arg(long)]
        lockstep: bool,
        /// Simulated seconds per wall-clock second
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-stage pipelines
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// PI and teleop collections, both trainings, both rollouts, comparison
    Full {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Force {
    /// Accept data recorded under a different config
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, conflicts_with_all = ["a_mu", "a_sd"])]
    a: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["b_mu", "b_sd"])]
    b: Option<PathBuf>,
    #[arg(long, requires = "a_sd")]
    a_mu: Option<f64>,
    #[arg(long, requires = "a_mu")]
    a_sd: Option<f64>,
    #[arg(long, requires = "b_sd")]
    b_mu: Option<f64>,
    #[arg(long, requires = "b_mu")]
    b_sd: Option<f64>,
    #[arg(long, default_value = "a")]
    label_a: String,
    #[arg(long, default_value = "b")]
    label_b: String,
    /// Directory for comparison.csv, histogram.csv and report.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("squeeze: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<SimConfig, Error> {
    let path = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => SimConfig::load(&p)?,
        None => SimConfig::default(),
    };
    for o in &cli.overrides {
        cfg.set(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string());
    }
    let Some(command) = cli.command else {
        if cli.print_config {
            return Ok(());
        }
        return Err(Error::Usage("no subcommand given (see --help)".into()));
    };
    let default_seed = cfg.protocol.seed;
    match command {
        Command::Calibrate { target, seed, tune_pi, refine, tune_trials, out } => {
            let seed = seed.unwrap_or(default_seed);
            let mut cfg = cfg;
            if tune_pi {
                let (pi, sigma) = experiment::tune_pi(&cfg, &PiGrid::default(), tune_trials, seed)?;
                eprintln!("pi: kp = {}, ki = {}, alpha = {} (mean sigma {sigma:.2} Pa)", pi.kp, pi.ki, pi.alpha);
                cfg.pi = pi;
            }
            let (cfg, cal) = experiment::calibrate_flow(&cfg, target, seed, refine)?;
            eprintln!(
                "flow_coefficient = {:.6} mL/(s·kPa): PI slope {:.4} g/s, rmse {:.4} g after {} trial(s)",
                cal.flow_coefficient, cal.slope, cal.rmse, cal.iterations
            );
            write_or_print(out.as_deref(), &cfg.to_toml_string())
        }
        Command::Collect { agent, trials, seed, out } => {
            let kind = AgentKind::parse(&agent)?;
            let seed = seed.unwrap_or(default_seed);
            let trials = trials.unwrap_or(cfg.protocol.trials_per_training_set);
            let session = experiment::collect(&cfg, kind, trials, seed, None)?;
            write_dataset(&out, &session.logs, &cfg, seed)?;
            eprintln!("{} trials ({} bottle fills) -> {}", session.logs.len(), session.fills, out.display());
            Ok(())
        }
        Command::Train { data, out, seed, force } => {
            let logs = load_logs(&[data], &cfg, force.force)?;
            let (model, report) = experiment::train_policy(&logs, &cfg, seed.unwrap_or(default_seed))?;
            model.save(&out)?;
            eprintln!(
                "loss {:.5} (epoch 1) -> {:.5} (epoch {}), final {:.5} -> {}",
                report.epoch_losses.first().copied().unwrap_or(f64::NAN),
                report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                report.epoch_losses.len(),
                report.final_loss,
                out.display()
            );
            Ok(())
        }
        Command::Rollout { policy, trials, seed, out, label } => {
            let model = ChunkModel::load(&policy)?;
            let label = label.unwrap_or_else(|| {
                policy.file_stem().map_or_else(|| "policy".into(), |s| s.to_string_lossy().into_owned())
            });
            let seed = seed.unwrap_or(default_seed);
            let trials = trials.unwrap_or(cfg.protocol.trials_per_eval_set);
            let (session, inferences) = experiment::rollout(model, &label, &cfg, trials, seed)?;
            write_dataset(&out, &session.logs, &cfg, seed)?;
            eprintln!("{} trials, {inferences} inferences -> {}", session.logs.len(), out.display());
            Ok(())
        }
        Command::Eval { data, out, force } => {
            let logs = load_logs(&data, &cfg, force.force)?;
            let cut = cfg.protocol.transient_cut;
            write_or_print(out.as_deref(), &evaluation::scores_csv(&logs, cut))?;
            if let Ok(s) = evaluation::summarize_scorable(&logs, cut) {
                eprintln!("sigma = {:.2} ± {:.2} Pa over {} scorable trials", s.mean, s.std, s.n);
            }
            Ok(())
        }
        Command::Compare(args) => compare(&cfg, args),
        Command::Serve { port, host, trials, seed, lockstep, speed, out } => {
            let listener = TcpListener::bind((host.as_str(), port))?;
            eprintln!("waiting for an operator on {}", listener.local_addr()?);
            let opts = ServeOptions {
                trials: trials.unwrap_or(cfg.protocol.trials_per_training_set),
                seed: seed.unwrap_or(default_seed),
                pacing: if lockstep { Pacing::Lockstep } else { Pacing::RealTime { speed } },
                out,
            };
            let session = teleop_gateway::serve(&cfg, &listener, &opts)?;
            eprintln!("recorded {} trials", session.logs.len());
            Ok(())
        }
        Command::Experiment { which: ExperimentCommand::Full { seed, out } } => {
            let report = experiment::run_study(&cfg, seed.unwrap_or(default_seed), out.as_deref())?;
            print!("{}", report.text());
            Ok(())
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Loads one or more dataset directories, refusing data whose config hash
/// differs from the effective config (or from each other) unless forced.
fn load_logs(dirs: &[PathBuf], cfg: &SimConfig, force: bool) -> Result<Vec<TrialLog>, Error> {
    let expected = cfg.hash();
    let mut logs = Vec::new();
    for dir in dirs {
        let (manifest, mut dir_logs) = read_dataset(dir)?;
        let mut hashes = vec![manifest.config_hash.clone()];
        hashes.extend(dir_logs.iter().map(|l| l.config_hash.clone()));
        if !force {
            if let Some(bad) = hashes.iter().find(|h| **h != expected) {
                return Err(Error::Data(format!(
                    "{} was recorded under config {bad}, current config is {expected} (use --force to accept)",
                    dir.display()
                )));
            }
        }
        logs.append(&mut dir_logs);
    }
    Ok(logs)
}

fn summary_of(dir: &Path, cfg: &SimConfig) -> Result<(Vec<f64>, (f64, f64)), Error> {
    let (_, logs) = read_dataset(dir)?;
    let s = evaluation::summarize_scorable(&logs, cfg.protocol.transient_cut)?;
    Ok((s.per_trial_sigma, (s.mean, s.std)))
}

fn compare(cfg: &SimConfig, args: CompareArgs) -> Result<(), Error> {
    let side = |dir: &Option<PathBuf>, mu: Option<f64>, sd: Option<f64>, name: &str| match (dir, mu, sd) {
        (Some(d), _, _) => summary_of(d, cfg).map(|(scores, params)| (Some(scores), params)),
        (None, Some(mu), Some(sd)) => Ok((None, (mu, sd))),
        _ => Err(Error::Usage(format!("give --{name} DIR or --{name}-mu and --{name}-sd"))),
    };
    let (scores_a, a) = side(&args.a, args.a_mu, args.a_sd, "a")?;
    let (scores_b, b) = side(&args.b, args.b_mu, args.b_sd, "b")?;
    let cmp = Comparison::new(&args.label_a, a, &args.label_b, b)?;
    let report = cmp.report();
    print!("{report}");
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.txt"), &report)?;
        fs::write(dir.join("comparison.csv"), cmp.csv())?;
        if let (Some(sa), Some(sb)) = (scores_a, scores_b) {
            let ha = histogram(&sa, HISTOGRAM_BIN_WIDTH, HISTOGRAM_CAP);
            let hb = histogram(&sb, HISTOGRAM_BIN_WIDTH, HISTOGRAM_CAP);
            fs::write(dir.join("histogram.csv"), evaluation::histogram_csv(&args.label_a, &ha, &args.label_b, &hb))?;
        }
    }
    Ok(())
}
