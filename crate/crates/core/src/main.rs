use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use motionscore::bench::{
    dataset_motion_stats, load_external_scores, load_manifest, parse_weights, run_benchmark, BenchOptions,
};
use motionscore::config::{EstimatorKind, Settings, SettingsBuilder};
use motionscore::error::{Error, Result};
use motionscore::flowfield::{flow_to_color, write_flo};
use motionscore::imageio::{load_image, save_image, to_grayscale};
use motionscore::nftlab::{
    fm_pretrain, mode_fraction, train_nft, two_mode_data, MotionProxyReward, PretrainConfig, ToyFlowModel,
};
use motionscore::reward::{mas_from_flows, reward_from_flows, MasResult, RewardBreakdown, Triplet};

#[derive(Parser)]
#[command(
    name = "motionscore",
    version,
    about = "Optical-flow motion alignment scoring and benchmarking"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set reward.q=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the flow from image A to image B.
    Flow {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a color-coded rendering.
        #[arg(long)]
        viz: Option<PathBuf>,
    },
    /// Motion reward and MAS for one triplet.
    Score(TripletArgs),
    /// MAS only for one triplet.
    Mas(TripletArgs),
    /// Score a manifest of triplets across models.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated model names; defaults to every model in the manifest.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Sidecar JSONL of external scores.
        #[arg(long, requires = "weights")]
        external: Option<PathBuf>,
        /// Score weights such as `motion=0.5,mllm=0.5`.
        #[arg(long, requires = "external")]
        weights: Option<String>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Mean normalized input-to-target motion over a manifest sample.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 100)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Negative-aware finetuning on the two-mode toy task.
    NftLab(NftArgs),
}

#[derive(Args)]
struct TripletArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    edited: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Read precomputed flows instead of estimating them.
    #[arg(long)]
    flo_dir: Option<PathBuf>,
    /// Entry id for precomputed lookup; defaults to the input file stem.
    #[arg(long)]
    id: Option<String>,
    /// Model name for per-model precomputed lookup.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardChoice {
    /// 1 inside the unit disc around (2, 0), else 0.
    ModeTarget,
    /// Quantized motion reward against a fixed target displacement.
    MotionProxy,
}

#[derive(Args)]
struct NftArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    kl: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum, default_value = "mode-target")]
    reward: RewardChoice,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 3000)]
    pretrain_steps: usize,
    /// Per-round CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Final JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut b = SettingsBuilder::new();
    if let Some(path) = &cli.config {
        b = b.file(path)?;
    }
    for o in &cli.overrides {
        b = b.set(o)?;
    }
    b.build()
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = settings(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::InvalidConfig("no subcommand given (see --help)".into()));
    };

    match command {
        Command::Flow { a, b, out, viz } => {
            let a = to_grayscale(&load_image(&a)?);
            let b = to_grayscale(&load_image(&b)?);
            let flow = cfg.estimator.build()?.estimate_flow(&a, &b)?;
            write_flo(&flow, &out)?;
            if let Some(viz) = viz {
                save_image(&flow_to_color(&flow), viz)?;
            }
        }
        Command::Score(args) => {
            let (reward, mas) = score_triplet(&mut cfg, &args)?;
            #[derive(Serialize)]
            struct Out {
                reward: RewardBreakdown,
                mas: MasResult,
            }
            print_json(&Out { reward, mas });
        }
        Command::Mas(args) => {
            let (_, mas) = score_triplet(&mut cfg, &args)?;
            print_json(&mas);
        }
        Command::Bench {
            manifest,
            models,
            out,
            csv,
            external,
            weights,
            jobs,
        } => {
            let manifest = load_manifest(&manifest)?;
            let opts = BenchOptions {
                models: if models.is_empty() { manifest.models() } else { models },
                jobs,
                external: external.map(load_external_scores).transpose()?,
                weights: weights.as_deref().map(parse_weights).transpose()?,
            };
            let report = run_benchmark(&manifest, &cfg, &opts)?;
            report.write_json(&out)?;
            if let Some(csv) = csv {
                report.write_csv(csv)?;
            }
            for m in &report.models {
                eprintln!(
                    "{}: MAS {:.2}, r_motion {:.3}, scored {}, failed {}",
                    m.model, m.mean_mas, m.mean_r_motion, m.count, m.failures
                );
            }
        }
        Command::Stats { manifest, sample, seed } => {
            let manifest = load_manifest(&manifest)?;
            let est = cfg.estimator.build()?;
            print_json(&dataset_motion_stats(&manifest, &est, sample, seed));
        }
        Command::NftLab(args) => nft_lab(&mut cfg, &args)?,
    }
    Ok(())
}

fn score_triplet(cfg: &mut Settings, args: &TripletArgs) -> Result<(RewardBreakdown, MasResult)> {
    if let Some(dir) = &args.flo_dir {
        cfg.estimator.kind = EstimatorKind::Precomputed;
        cfg.estimator.flo_dir = Some(dir.clone());
    }
    let est = cfg.estimator.build()?;
    let id = args.id.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let triplet = Triplet::from_images(
        &load_image(&args.input)?,
        &load_image(&args.edited)?,
        &load_image(&args.gt)?,
    )
    .with_key(id, args.model.clone());
    let (pred, gt) = triplet.flows(&est)?;
    Ok((
        reward_from_flows(&pred.flow, &gt.flow, &cfg.reward)?,
        mas_from_flows(&pred.flow, &gt.flow, &cfg.mas, &cfg.reward)?,
    ))
}

fn nft_lab(cfg: &mut Settings, args: &NftArgs) -> Result<()> {
    let nft = &mut cfg.nft;
    if let Some(v) = args.seed {
        nft.seed = v;
    }
    if let Some(v) = args.rounds {
        nft.rounds = v;
    }
    if let Some(v) = args.group_size {
        nft.group_size = v;
    }
    if let Some(v) = args.groups {
        nft.groups = v;
    }
    if let Some(v) = args.beta {
        nft.beta_mix = v;
    }
    if let Some(v) = args.kl {
        nft.kl_weight = v;
    }
    if let Some(v) = args.lr {
        nft.learning_rate = v;
    }
    nft.validate()?;

    let data = two_mode_data(4000, nft.seed);
    let pre = PretrainConfig {
        steps: args.pretrain_steps,
        seed: nft.seed,
        ..Default::default()
    };
    let model = fm_pretrain(ToyFlowModel::new(args.width, false, nft.seed), &data, &pre)?;

    let proxy = MotionProxyReward {
        reward: cfg.reward,
        ..Default::default()
    };
    let reward_fn: Box<dyn Fn([f64; 2]) -> f64 + Sync> = match args.reward {
        RewardChoice::ModeTarget => Box::new(|x: [f64; 2]| f64::from((x[0] - 2.0).hypot(x[1]) <= 1.0)),
        RewardChoice::MotionProxy => Box::new(move |x| proxy.score(x)),
    };

    let before = mode_fraction(&model, 1000, nft.ode_steps, [2.0, 0.0], 1.0, nft.seed);
    let (trained, report) = train_nft(model, reward_fn.as_ref(), nft)?;
    let after = mode_fraction(&trained, 1000, nft.ode_steps, [2.0, 0.0], 1.0, nft.seed);

    for r in &report.rounds {
        eprintln!(
            "round {:>3}: mean raw reward {:.4}, kept groups {:>3}, loss {}",
            r.round,
            r.mean_raw_reward,
            r.kept_groups,
            r.loss.map(|l| format!("{l:.5}")).unwrap_or_else(|| "skipped".into())
        );
    }
    eprintln!("fraction near (2, 0): {before:.3} -> {after:.3}");

    if let Some(path) = &args.csv {
        write_text(path, &report.to_csv())?;
    }
    let json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    match &args.out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    Ok(())
}
