use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pomdp_manip::dish::{merge_objects_traced, DishModel, DomainParams, SceneSpec};
use pomdp_manip::harness::{
    resolve_scene, run_experiment, write_results, DishEnvironment, ExperimentConfig, GroundTruth,
    HarnessError, InitialObservations, Method,
};
use pomdp_manip::planner::{annotate, export_dot, improve, init_random_graph, PlannerConfig};
use pomdp_manip::rng::{purpose, substream};
use pomdp_manip::GenerativeModel;

const THREADS_VAR: &str = "POMDP_MANIP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pomdp-manip", version, about = "Policy-graph POMDP planning for cluttered dish washing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scene file and report occlusion ratios before and after merging.
    ValidateScene {
        /// Scene file, or the name of a bundled scene.
        #[arg(long)]
        scene: String,
    },
    /// Simulate one method on one scene and write per-cell results.
    Simulate(SimulateArgs),
    /// Run an experiment config and add pairwise Mann-Whitney rows.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a policy graph offline and write it as Graphviz DOT.
    ExportPolicy(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodKind {
    Pomdp,
    Greedy,
    GreedyNohist,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Readings {
    Sampled,
    AllClean,
}

impl From<Readings> for InitialObservations {
    fn from(r: Readings) -> Self {
        match r {
            Readings::Sampled => InitialObservations::Sampled,
            Readings::AllClean => InitialObservations::AllClean,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "scene01")]
    scene: String,
    #[arg(long, value_enum, default_value_t = MethodKind::Pomdp)]
    method: MethodKind,
    /// Planning horizon of the policy graph.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    horizon: u32,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    width: u32,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u32).range(1..))]
    particles: u32,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    episodes: u32,
    /// Steps per episode.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    steps: u32,
    #[arg(long, value_enum, default_value_t = Readings::Sampled)]
    initial_observations: Readings,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long, default_value = "scene01")]
    scene: String,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    horizon: u32,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    width: u32,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u32).range(1..))]
    particles: u32,
    #[arg(long, default_value_t = 10)]
    rounds: u32,
    #[arg(long, value_enum, default_value_t = Readings::Sampled)]
    initial_observations: Readings,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::ValidateScene { scene } => validate_scene(&scene),
        Command::Simulate(args) => simulate(&args),
        Command::Compare { config, out } => compare(&config, &out),
        Command::ExportPolicy(args) => export_policy(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn validate_scene(entry: &str) -> Result<(), HarnessError> {
    let scene = resolve_scene(entry, None)?;
    let (merged, events) = merge_objects_traced(&scene)?;
    for event in &events {
        println!(
            "merge {} <- {} (pairwise ratio {:.4}, distance {:.4})",
            event.kept, event.absorbed, event.ratio, event.distance
        );
    }
    for object in &scene.objects {
        let before = scene.base_occlusion(object.id);
        match merged.object(object.id) {
            Some(_) => println!(
                "object {}: occlusion {:.4} merged {:.4}",
                object.id,
                before,
                merged.base_occlusion(object.id)
            ),
            None => {
                let into = events
                    .iter()
                    .rev()
                    .find(|e| e.absorbed == object.id)
                    .map_or(object.id, |e| e.kept);
                println!("object {}: occlusion {before:.4} merged into {into}", object.id);
            }
        }
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), HarnessError> {
    let method = match args.method {
        MethodKind::Pomdp => Method::pomdp(
            args.horizon as usize,
            args.width as usize,
            args.particles as usize,
        ),
        MethodKind::Greedy => Method::greedy(true),
        MethodKind::GreedyNohist => Method::greedy(false),
    };
    let mut config = ExperimentConfig::new(vec![args.scene.clone()], vec![method]);
    config.episodes_per_cell = args.episodes as usize;
    config.horizon = args.steps as usize;
    config.initial_observations = args.initial_observations.into();
    config.seed = args.seed;
    let table = run_experiment(&config)?;
    for row in &table.rows {
        println!(
            "{} {}: mean reward {:.3}, 95% CI [{:.3}, {:.3}] over {} episodes",
            row.scene,
            row.method,
            row.mean_reward,
            row.ci_low.unwrap_or(f64::NAN),
            row.ci_high.unwrap_or(f64::NAN),
            row.episodes
        );
    }
    if let Some(out) = &args.out {
        write_results(&table, out)?;
    }
    Ok(())
}

fn compare(config: &Path, out: &Path) -> Result<(), HarnessError> {
    let config = ExperimentConfig::load(config)?;
    let mut table = run_experiment(&config)?;
    table.add_comparisons();
    write_results(&table, out)?;
    println!("wrote {} rows to {}", table.rows.len(), out.display());
    Ok(())
}

fn export_policy(args: &ExportArgs) -> Result<(), HarnessError> {
    let scene: SceneSpec = pomdp_manip::dish::merge_objects(&resolve_scene(&args.scene, None)?)?;
    let model = DishModel::new(&scene, DomainParams::default())?;
    let observations = match args.initial_observations {
        Readings::AllClean => vec![false; model.object_count()],
        Readings::Sampled => {
            let env = DishEnvironment::new(
                model.clone(),
                GroundTruth::new(model.true_dirty_mask(), Vec::new()),
            );
            env.sample_initial_observations(&mut substream(args.seed, &[purpose::INITIAL_OBSERVATION]))
        }
    };
    let model = model.with_initial_observations(observations)?;
    let config = PlannerConfig {
        horizon: args.horizon as usize,
        width: args.width as usize,
        particles: args.particles as usize,
        seed: args.seed,
        ..PlannerConfig::default()
    };
    let mut rng = substream(args.seed, &[purpose::PLANNER_INIT]);
    let belief = model.initial_belief(&mut rng, config.particles);
    let mut graph = init_random_graph(&config, &model, &mut rng)?;
    let value = improve(&mut graph, &belief, 0, &model, &config, args.rounds as usize, &mut rng)?;
    let annotations = annotate(&graph, &belief, 0, &model, &mut rng, |_, _, particles| {
        model.describe_particles(particles)
    });
    let dot = export_dot(
        &graph,
        &annotations,
        |a| model.action_label(a),
        |a, o| model.observation_label(a, o),
    );
    std::fs::write(&args.out, dot)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", args.out.display())))?;
    println!(
        "policy value {:.3} (standard error {:.3}); wrote {}",
        value.mean,
        value.std_error,
        args.out.display()
    );
    Ok(())
}
