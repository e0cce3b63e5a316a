use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use sabias::experiment::{
    preset, preset_names, preset_source, run_experiment, ExperimentConfig, MdpSource, RandomMdpConfig,
};
use sabias::mdp::{classify, gamma0, make_type_a, solve_q_star, Mdp, DEFAULT_Q_TOL, DEFAULT_TIE_TOL};
use sabias::Error;

/// Constant-stepsize stochastic approximation and Q-learning experiments.
#[derive(Parser, Debug)]
#[command(name = "sabias", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment from a config file, a manifest.json or a preset.
    Run(RunArgs),
    /// Print q*, optimal actions, tied/rooted flags, the MDP type and gamma0.
    DescribeMdp {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
        tie_tol: f64,
    },
    /// List preset names.
    Presets,
    /// Print the TOML of a preset.
    ShowPreset { name: String },
    /// Write a random MDP (Dirichlet(1) rows, uniform rewards) in text format.
    GenMdp {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0.3f64.sqrt())]
        reward_std: f64,
        /// Make the two first actions of state 0 identical.
        #[arg(long)]
        type_a: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the config seed (configs default to 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir, then out/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Run(args)) => run(args),
        None => run(cli.run),
        Some(Command::DescribeMdp { path, tie_tol }) => describe_mdp(&path, tie_tol),
        Some(Command::Presets) => {
            preset_names().for_each(|n| println!("{n}"));
            Ok(())
        }
        Some(Command::ShowPreset { name }) => match preset_source(&name) {
            Some(src) => {
                print!("{src}");
                Ok(())
            }
            None => preset(&name).map(|_| ()).map_err(Into::into),
        },
        Some(Command::GenMdp {
            seed,
            states,
            actions,
            gamma,
            reward_std,
            type_a,
            out,
        }) => gen_mdp(seed, states, actions, gamma, reward_std, type_a, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad input, 3 for a diverged chain, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Divergence { .. }) => 3,
        Some(Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_)) => 2,
        _ => 1,
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => {
            ExperimentConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => bail!(Error::Config("pass --config <path> or --preset <name>".into())),
        (Some(_), Some(_)) => unreachable!("clap rejects --config with --preset"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(config.name.as_deref().unwrap_or(config.kind.tag())));
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        bail!(Error::Config("--threads must be at least 1".into()));
    }
    let artifacts = run_experiment(&config, threads)?;
    let written = artifacts.write_to(&out)?;
    for path in written {
        println!("{}", path.display());
    }
    if let Some(report) = &artifacts.bias {
        for (label, fit) in [("TA", report.slopes.ta), ("RR", report.slopes.rr)] {
            if let Some(fit) = fit {
                eprintln!("{label} slope {:.4} +- {:.4}", fit.slope, fit.stderr);
            }
        }
    }
    Ok(())
}

fn describe_mdp(path: &Path, tie_tol: f64) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mdp: Mdp<f64> = Mdp::from_text(&text).with_context(|| format!("parsing {}", path.display()))?;
    let q_star = solve_q_star(&mdp, DEFAULT_Q_TOL, None)?;
    let class = classify(&mdp, &q_star, tie_tol)?;
    let na = mdp.n_actions();
    println!(
        "states {}  actions {}  gamma {}  reward_noise_std {}",
        mdp.n_states(),
        na,
        mdp.gamma(),
        mdp.reward_noise_std()
    );
    println!("q*:");
    for (s, c) in class.states.iter().enumerate() {
        let row: Vec<String> = q_star[s * na..(s + 1) * na].iter().map(|v| format!("{v:.12}")).collect();
        let flags = match (c.tied, c.rooted) {
            (true, true) => "tied rooted",
            (true, false) => "tied",
            (false, true) => "rooted",
            (false, false) => "-",
        };
        println!("  state {s}: [{}]  A* = {:?}  {flags}", row.join(", "), c.optimal_actions);
    }
    println!("type: {}", class.mdp_type);
    println!("gamma0 synchronous: {}", gamma0(&mdp, &vec![1.0; mdp.n_pairs()])?);
    println!("gamma0 asynchronous: {}", gamma0(&mdp, mdp.behavior())?);
    Ok(())
}

fn gen_mdp(
    seed: u64,
    states: usize,
    actions: usize,
    gamma: f64,
    reward_std: f64,
    type_a: bool,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    // Same stream as the `random` MDP source of experiment configs, so
    // `--seed 0` reproduces the MDP behind the Q-learning presets.
    let random = RandomMdpConfig {
        n_states: states,
        n_actions: actions,
        gamma,
        reward_noise_std: reward_std,
    };
    let source = MdpSource {
        random: Some(&random),
        ..Default::default()
    };
    let mut mdp = source.load(seed)?;
    if type_a {
        mdp = make_type_a(&mdp)?;
    }
    match out {
        Some(p) => std::fs::write(p, mdp.to_text()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", mdp.to_text()),
    }
    Ok(())
}
