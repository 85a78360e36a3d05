//! `crashforge`: scenario catalog, dataset generation, training and the
//! transfer experiment from one binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crashforge::catalog::{default_dataset_scenarios, find_scenario, list_scenarios, ScenarioTemplate};
use crashforge::config::RunConfig;
use crashforge::dataset::{
    collision_stats, generate_dataset, load_labeled_set, preview_frame, split_dataset, GenerateOptions,
};
use crashforge::learner::{
    deviations_csv, evaluate_network, gradcheck, load_checkpoint, load_stage, sibling_path, train_to_files,
    transfer_experiment, InitMode, NetworkSpec, TrainConfig, TransferConfig,
};
use crashforge::render::{write_pgm, RenderProfile};
use crashforge::sampling::SamplingConfig;
use crashforge::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "crashforge", version, about = "Pre-crash scenario datasets and transfer-learning steering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect the scenario catalog
    #[command(subcommand)]
    Scenarios(ScenariosCmd),
    /// Simulate and render episodes into a dataset directory
    Generate(GenerateArgs),
    /// Outcome counts of a dataset, overall and per scenario
    Stats(StatsArgs),
    /// Split a dataset by episode into train/val/test subdirectories
    Split(SplitArgs),
    /// Write the t = 5 s frame of one episode as a PGM
    RenderPreview(PreviewArgs),
    /// Train the steering network
    Train(TrainArgs),
    /// Mean absolute steering deviation of a checkpoint on a dataset
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients (64-bit)
    Gradcheck(GradcheckArgs),
    /// Stage-2 training from Xavier versus stage-1 weights over several seeds
    TransferExp(TransferArgs),
    /// Print built-in or loaded configuration
    #[command(subcommand)]
    Config(ConfigCmd),
}

#[derive(Subcommand, Debug)]
enum ScenariosCmd {
    /// Print the catalog table
    List,
}

#[derive(Subcommand, Debug)]
enum ConfigCmd {
    /// Print the effective sampling and run configuration
    Show(ConfigFiles),
}

#[derive(Args, Debug, Clone)]
struct ConfigFiles {
    /// Sampling distributions (`key = value` file); built-in defaults if omitted
    #[arg(long, value_name = "PATH")]
    sampling_config: Option<PathBuf>,
    /// Run settings (`key = value` file); built-in defaults if omitted
    #[arg(long, value_name = "PATH")]
    run_config: Option<PathBuf>,
}

impl ConfigFiles {
    fn sampling(&self) -> Result<SamplingConfig> {
        self.sampling_config
            .as_deref()
            .map_or_else(|| Ok(SamplingConfig::default()), SamplingConfig::load)
    }

    fn run(&self) -> Result<RunConfig> {
        self.run_config
            .as_deref()
            .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Profile {
    /// Default simulator look
    Sim,
    /// Shifted intensities, heavier noise and jittered markings
    Shifted,
}

impl Profile {
    fn render_profile(self) -> RenderProfile {
        match self {
            Profile::Sim => RenderProfile::default(),
            Profile::Shifted => RenderProfile::shifted(),
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// `all` or a comma-separated list of scenario ids
    #[arg(long, default_value = "all")]
    scenarios: String,
    /// Number of episodes
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    /// Master seed
    #[arg(long)]
    seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Include the rear-end templates when `--scenarios all`
    #[arg(long)]
    include_rear_end: bool,
    /// Frames per second; must divide 50 (overrides the run config)
    #[arg(long, value_name = "HZ")]
    frame_rate: Option<u32>,
    /// Worker threads
    #[arg(long, env = "CRASHFORGE_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Render profile
    #[arg(long, value_enum, default_value = "sim")]
    profile: Profile,
    #[command(flatten)]
    config: ConfigFiles,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Dataset directory
    dir: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Dataset directory
    dir: PathBuf,
    /// Train, validation and test fractions
    #[arg(long, default_value = "0.8,0.1,0.1", value_parser = parse_ratios)]
    ratios: [f64; 3],
    /// Shuffle seed
    #[arg(long)]
    seed: u64,
    /// Keep frames recorded after contact
    #[arg(long)]
    keep_post_contact: bool,
}

#[derive(Args, Debug)]
struct PreviewArgs {
    /// Scenario id
    #[arg(long)]
    scenario: String,
    /// Master seed (episode 0 of this seed is rendered)
    #[arg(long)]
    seed: u64,
    /// Output PGM path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Render profile
    #[arg(long, value_enum, default_value = "sim")]
    profile: Profile,
    #[command(flatten)]
    config: ConfigFiles,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training dataset directory
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Validation dataset directory
    #[arg(long, value_name = "DIR")]
    val: PathBuf,
    /// `xavier` or `ckpt:PATH`
    #[arg(long, default_value = "xavier", value_parser = parse_init)]
    init: InitMode,
    /// Learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Mini-batch size
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    batch: u64,
    /// Epochs
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Seed for initialization and batch order
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Final checkpoint path; `<stem>.best.cfw` and `<stem>.metrics.csv` are written beside it
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint path
    #[arg(long, value_name = "PATH")]
    ckpt: PathBuf,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Per-frame deviations CSV [default: <ckpt stem>.deviations.csv]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Seed for weights, probe images and probed parameters
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probes per layer (9 layers)
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    per_layer: u64,
}

#[derive(Args, Debug)]
struct TransferArgs {
    /// Stage-1 dataset (with train/val/test splits)
    #[arg(long, value_name = "DIR")]
    stage1: PathBuf,
    /// Stage-2 dataset (with train/val/test splits)
    #[arg(long, value_name = "DIR")]
    stage2: PathBuf,
    /// Number of stage-2 seeds (1..=N)
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Validation-loss threshold [default: each seed's Xavier final-epoch loss]
    #[arg(long)]
    threshold: Option<f64>,
    /// Stage-2 epochs per arm
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Stage-1 epochs
    #[arg(long, default_value_t = 10)]
    stage1_epochs: usize,
    /// Learning rate (both stages)
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Mini-batch size (both stages)
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    batch: u64,
    /// Report path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

fn parse_ratios(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated fractions".into());
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| format!("`{p}` is not a number"))?;
    }
    Ok(out)
}

fn parse_init(s: &str) -> std::result::Result<InitMode, String> {
    match s {
        "xavier" => Ok(InitMode::Xavier),
        _ => match s.strip_prefix("ckpt:") {
            Some(p) if !p.is_empty() => Ok(InitMode::FromCheckpoint(PathBuf::from(p))),
            _ => Err("expected `xavier` or `ckpt:PATH`".into()),
        },
    }
}

fn select_scenarios(spec: &str, include_rear_end: bool) -> Result<Vec<ScenarioTemplate>> {
    if spec == "all" {
        return Ok(if include_rear_end {
            list_scenarios()
        } else {
            default_dataset_scenarios()
        });
    }
    spec.split(',').map(|id| find_scenario(id.trim())).collect()
}

fn scenarios_list() {
    println!("{:<3} {:<32} {:<13} {:<18} {:<19} {}", "#", "id", "environment", "ego", "adversary", "default");
    for (i, t) in list_scenarios().iter().enumerate() {
        println!(
            "{:<3} {:<32} {:<13} {:<18} {:<19} {}",
            i + 1,
            t.id,
            t.environment.as_str(),
            t.ego_behavior,
            t.adversary_behavior,
            if t.in_default_dataset { "yes" } else { "no" }
        );
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let mut run = args.config.run()?;
    if let Some(fr) = args.frame_rate {
        run.frame_rate_hz = fr;
    }
    let opts = GenerateOptions {
        scenarios: select_scenarios(&args.scenarios, args.include_rear_end)?,
        episodes: args.episodes,
        master_seed: args.seed,
        sampling: args.config.sampling()?,
        run,
        profile: args.profile.render_profile(),
        workers: args.workers.max(1),
    };
    let stats = generate_dataset(&opts, &args.out)?;
    print!("{}", stats.to_table());
    println!("wrote {} episodes to {}", args.episodes, args.out.display());
    Ok(())
}

fn split(args: &SplitArgs) -> Result<()> {
    let s = split_dataset(&args.dir, args.ratios, args.seed, !args.keep_post_contact)?;
    println!("split   episodes  frames");
    for (i, name) in ["train", "val", "test"].iter().enumerate() {
        println!("{name:<7} {:>8} {:>7}", s.episodes[i], s.frames[i]);
    }
    println!("post-contact frames excluded: {}", s.excluded_frames);
    Ok(())
}

fn preview(args: &PreviewArgs) -> Result<()> {
    let template = find_scenario(&args.scenario)?;
    let opts = GenerateOptions {
        scenarios: vec![template.clone()],
        sampling: args.config.sampling()?,
        run: args.config.run()?,
        profile: args.profile.render_profile(),
        ..GenerateOptions::new(1, args.seed)
    };
    let image = preview_frame(&template, &opts)?;
    write_pgm(&args.out, &image)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch as usize,
        epochs: args.epochs,
        seed: args.seed,
        init: args.init.clone(),
        ..TrainConfig::default()
    };
    let train = load_labeled_set(&args.data, true)?;
    let val = load_labeled_set(&args.val, true)?;
    let out = train_to_files(&train, &val, &cfg, &args.out)?;
    println!("epoch  train_loss    val_loss   val_acc");
    for m in &out.metrics {
        println!("{:>5} {:>11.6} {:>11.6} {:>9.4}", m.epoch, m.train_loss, m.val_loss, m.val_acc);
    }
    println!(
        "best epoch {}; wrote {} and {}",
        out.best_epoch,
        args.out.display(),
        sibling_path(&args.out, "best", "cfw").display()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let net = load_checkpoint(&args.ckpt, &NetworkSpec::standard())?;
    let test = load_labeled_set(&args.data, true)?;
    let eval = evaluate_network(&net, &test)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| sibling_path(&args.ckpt, "deviations", "csv"));
    std::fs::write(&out, deviations_csv(&test, &eval)).map_err(|e| Error::io(&out, e))?;
    println!("frames: {}", test.len());
    println!("mean absolute deviation: {:.4} deg", eval.mean_abs_deviation_deg);
    println!("wrote {}", out.display());
    Ok(())
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let report = gradcheck(args.seed, args.per_layer as usize)?;
    println!(
        "probes: {} ({} nonzero) across layers {:?}; resampled at ReLU kinks: {}",
        report.probes.len(),
        report.nonzero_probes(),
        report.layers_covered(),
        report.skipped_kinks
    );
    println!("max relative error: {:.3e}", report.max_relative_error);
    let ok = report.max_relative_error < 1e-3;
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn transfer(args: &TransferArgs) -> Result<()> {
    let stage = |epochs, seed| TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch as usize,
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let cfg = TransferConfig {
        stage1: stage(args.stage1_epochs, TransferConfig::default().stage1.seed),
        stage2: stage(args.epochs, 0),
        seeds: (1..=args.seeds).collect(),
        threshold: args.threshold,
    };
    let s1 = load_stage(&args.stage1)?;
    let s2 = load_stage(&args.stage2)?;
    let report = transfer_experiment(&s1, &s2, &cfg)?;
    let text = report.to_text();
    std::fs::write(&args.out, &text).map_err(|e| Error::io(&args.out, e))?;
    let summary = text.split("\n# summary\n").nth(1).unwrap_or("");
    print!("{summary}");
    println!("wrote {}", args.out.display());
    Ok(())
}

fn config_show(files: &ConfigFiles) -> Result<()> {
    println!("# sampling");
    print!("{}", files.sampling()?.to_kv());
    println!("\n# run");
    print!("{}", files.run()?.to_kv());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Scenarios(ScenariosCmd::List) => scenarios_list(),
        Command::Generate(a) => generate(&a)?,
        Command::Stats(a) => print!("{}", collision_stats(&a.dir)?.to_table()),
        Command::Split(a) => split(&a)?,
        Command::RenderPreview(a) => preview(&a)?,
        Command::Train(a) => train(&a)?,
        Command::Eval(a) => eval(&a)?,
        Command::Gradcheck(a) => return run_gradcheck(&a),
        Command::TransferExp(a) => transfer(&a)?,
        Command::Config(ConfigCmd::Show(f)) => config_show(&f)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            if informational {
                return ExitCode::SUCCESS;
            }
            if !e.to_string().contains("Usage:") {
                use clap::CommandFactory;
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(2)
        }
    }
}

fn one_line(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(e);
    // `Error::Episode` already embeds its source; others may carry io errors.
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg.replace('\n', " ")
}
