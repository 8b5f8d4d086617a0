use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_action, HeuristicConfig};
use crate::dish::{
    bundled_scene, merge_objects, DishAction, DishModel, DomainParams, Rewards, SceneSpec,
};
use crate::planner::{OnlinePlanner, PlannerConfig};
use crate::pomdp::{GenerativeModel, PomdpError};
use crate::rng::{derive_seed, purpose, substream};

use super::stats::{bootstrap_ci, mann_whitney_u, mean};
use super::truth::{DishEnvironment, GroundTruth};
use super::HarnessError;

/// A manipulation policy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Method {
    Pomdp {
        #[serde(default = "defaults::horizon")]
        horizon: usize,
        #[serde(default = "defaults::width")]
        width: usize,
        #[serde(default = "defaults::particles")]
        particles: usize,
        #[serde(default = "defaults::offline_rounds")]
        offline_rounds: usize,
        #[serde(default = "defaults::online_rounds")]
        online_rounds: usize,
    },
    Greedy {
        #[serde(default = "defaults::yes")]
        history: bool,
    },
}

mod defaults {
    pub fn horizon() -> usize {
        3
    }
    pub fn width() -> usize {
        3
    }
    pub fn particles() -> usize {
        2000
    }
    pub fn offline_rounds() -> usize {
        10
    }
    pub fn online_rounds() -> usize {
        4
    }
    pub fn yes() -> bool {
        true
    }
    pub fn episodes() -> usize {
        100
    }
    pub fn episode_horizon() -> usize {
        10
    }
    pub fn gamma_shape() -> f64 {
        0.2
    }
    pub fn gamma_scale() -> f64 {
        5.0
    }
    pub fn resamples() -> usize {
        super::super::stats::DEFAULT_RESAMPLES
    }
}

impl Method {
    /// POMDP planner with the default rounds.
    pub fn pomdp(horizon: usize, width: usize, particles: usize) -> Method {
        Method::Pomdp {
            horizon,
            width,
            particles,
            offline_rounds: defaults::offline_rounds(),
            online_rounds: defaults::online_rounds(),
        }
    }

    pub fn greedy(history: bool) -> Method {
        Method::Greedy { history }
    }

    /// Planning horizon reported in result tables; 1 for the heuristics.
    pub fn planning_horizon(&self) -> usize {
        match self {
            Method::Pomdp { horizon, .. } => *horizon,
            Method::Greedy { .. } => 1,
        }
    }

    pub fn planner_config(&self, seed: u64) -> Option<PlannerConfig> {
        match *self {
            Method::Pomdp {
                horizon,
                width,
                particles,
                offline_rounds,
                online_rounds,
            } => Some(PlannerConfig {
                horizon,
                width,
                particles,
                offline_rounds,
                online_rounds,
                seed,
                ..PlannerConfig::default()
            }),
            Method::Greedy { .. } => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pomdp {
                horizon,
                width,
                particles,
                ..
            } => write!(f, "pomdp-T{horizon}-W{width}-N{particles}"),
            Method::Greedy { history: true } => write!(f, "greedy"),
            Method::Greedy { history: false } => write!(f, "greedy-nohist"),
        }
    }
}

/// How the readings taken before the first action are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialObservations {
    /// Drawn from the reading model under full occlusion.
    #[default]
    Sampled,
    /// Every object reads clean.
    AllClean,
}

/// Grid over clean-wash penalty and the shared lift / failed-grasp penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSweep {
    pub wash_clean: Vec<f64>,
    pub lift_fail: Vec<f64>,
}

impl RewardSweep {
    /// The six scenarios of the sensitivity study.
    pub fn standard() -> RewardSweep {
        RewardSweep {
            wash_clean: vec![-5.0, -10.0],
            lift_fail: vec![-0.25, -0.5, -1.0],
        }
    }

    pub fn cells(&self, base: Rewards) -> Vec<(String, Rewards)> {
        let mut cells = Vec::new();
        for &wc in &self.wash_clean {
            for &lf in &self.lift_fail {
                cells.push((
                    format!("wash_clean={wc} lift_fail={lf}"),
                    Rewards {
                        wash_clean: wc,
                        lift: lf,
                        grasp_fail: lf,
                        ..base
                    },
                ));
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundled scene names or scene file paths (relative to the config file).
    pub scenes: Vec<String>,
    pub methods: Vec<Method>,
    #[serde(default = "defaults::episodes")]
    pub episodes_per_cell: usize,
    /// Episode length in steps.
    #[serde(default = "defaults::episode_horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::gamma_shape")]
    pub gamma_shape: f64,
    #[serde(default = "defaults::gamma_scale")]
    pub gamma_scale: f64,
    #[serde(default)]
    pub rewards: Rewards,
    #[serde(default)]
    pub reward_sweep: Option<RewardSweep>,
    #[serde(default)]
    pub initial_observations: InitialObservations,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::resamples")]
    pub bootstrap_resamples: usize,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenes: Vec<String>, methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            scenes,
            methods,
            episodes_per_cell: defaults::episodes(),
            horizon: defaults::episode_horizon(),
            gamma_shape: defaults::gamma_shape(),
            gamma_scale: defaults::gamma_scale(),
            rewards: Rewards::default(),
            reward_sweep: None,
            initial_observations: InitialObservations::default(),
            seed: 0,
            bootstrap_resamples: defaults::resamples(),
            base_dir: None,
        }
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut config = ExperimentConfig::parse(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: &str| Err(HarnessError::Config(msg.into()));
        if self.scenes.is_empty() {
            return invalid("at least one scene is required");
        }
        if self.methods.is_empty() {
            return invalid("at least one method is required");
        }
        if self.episodes_per_cell == 0 {
            return invalid("episodes_per_cell must be positive");
        }
        if self.horizon == 0 {
            return invalid("horizon must be positive");
        }
        if !(self.gamma_shape >= 0.0 && self.gamma_scale >= 0.0) {
            return invalid("gamma parameters must be non-negative");
        }
        for m in &self.methods {
            if let Some(pc) = m.planner_config(0) {
                pc.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            }
        }
        if let Some(sweep) = &self.reward_sweep {
            if sweep.wash_clean.is_empty() || sweep.lift_fail.is_empty() {
                return invalid("reward_sweep lists must be non-empty");
            }
        }
        Ok(())
    }

    pub fn domain_params(&self, rewards: Rewards) -> DomainParams {
        DomainParams {
            rewards,
            max_steps: self.horizon,
            ..DomainParams::default()
        }
    }

    /// Loads and merges every scene, keeping its display name.
    pub fn resolve_scenes(&self) -> Result<Vec<(String, SceneSpec)>, HarnessError> {
        self.scenes
            .iter()
            .map(|entry| {
                let scene = resolve_scene(entry, self.base_dir.as_deref())?;
                Ok((scene_name(entry), merge_objects(&scene)?))
            })
            .collect()
    }
}

/// A bundled scene name or a path to a scene file.
pub fn resolve_scene(entry: &str, base_dir: Option<&Path>) -> Result<SceneSpec, HarnessError> {
    let path = match base_dir {
        Some(dir) => dir.join(entry),
        None => PathBuf::from(entry),
    };
    if path.is_file() {
        return Ok(SceneSpec::load(&path)?);
    }
    bundled_scene(entry).ok_or_else(|| HarnessError::Config(format!("unknown scene {entry}")))
}

fn scene_name(entry: &str) -> String {
    Path::new(entry)
        .file_stem()
        .map_or_else(|| entry.to_string(), |s| s.to_string_lossy().into_owned())
}

/// One simulated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    /// Realized total reward.
    pub reward: f64,
    pub actions: Vec<DishAction>,
    /// Seconds spent planning before each executed action; the first entry
    /// includes offline improvement. Empty for the heuristics.
    pub planning_seconds: Vec<f64>,
    /// Times the agent's belief had to be rebuilt.
    pub belief_collapses: usize,
}

impl EpisodeSummary {
    pub fn lifts(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a, DishAction::Lift(_)))
            .count()
    }
}

/// Settings of a single cell, i.e. one scene under one method.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub episodes: usize,
    pub gamma_shape: f64,
    pub gamma_scale: f64,
    pub initial_observations: InitialObservations,
    pub seed: u64,
    /// Distinguishes scenes sharing a seed.
    pub scene_tag: u64,
}

impl CellSpec {
    pub fn new(episodes: usize, seed: u64) -> CellSpec {
        CellSpec {
            episodes,
            gamma_shape: defaults::gamma_shape(),
            gamma_scale: defaults::gamma_scale(),
            initial_observations: InitialObservations::Sampled,
            seed,
            scene_tag: 0,
        }
    }
}

/// Runs one episode. Ground truth, initial readings and environment noise
/// depend only on `(seed, scene_tag, episode)`, so every method faces the
/// same episodes.
pub fn run_episode(
    model: &DishModel,
    method: &Method,
    spec: &CellSpec,
    episode: usize,
) -> Result<EpisodeSummary, HarnessError> {
    let tags = |p: u64| [spec.scene_tag, episode as u64, p];
    let truth = GroundTruth::sample(
        model,
        spec.gamma_shape,
        spec.gamma_scale,
        &mut substream(spec.seed, &tags(purpose::GROUND_TRUTH)),
    );
    let env = DishEnvironment::new(model.clone(), truth);
    let observations = match spec.initial_observations {
        InitialObservations::Sampled => env.sample_initial_observations(&mut substream(
            spec.seed,
            &tags(purpose::INITIAL_OBSERVATION),
        )),
        InitialObservations::AllClean => vec![false; model.object_count()],
    };
    let agent_model = model.clone().with_initial_observations(observations.clone())?;
    let mut env_rng = substream(spec.seed, &tags(purpose::ENVIRONMENT));
    let mut state = env.initial_state(&observations);
    let mut summary = EpisodeSummary {
        reward: 0.0,
        actions: Vec::new(),
        planning_seconds: Vec::new(),
        belief_collapses: 0,
    };

    match *method {
        Method::Greedy { history } => {
            let config = HeuristicConfig {
                use_grasp_history: history,
            };
            let mut view = agent_model.initial_state(0, &observations);
            while !env.is_terminal(&state) {
                let action = greedy_action(&agent_model, &view, config);
                let id = agent_model.action_id(action);
                let tr = env.sample_transition(&state, id, &mut env_rng);
                summary.reward += tr.reward;
                summary.actions.push(action);
                view = agent_model.observe_step(&view, id, tr.observation)?;
                state = tr.state;
            }
        }
        Method::Pomdp { particles, .. } => {
            let agent_seed = derive_seed(spec.seed, &tags(purpose::AGENT));
            let config = method.planner_config(agent_seed).expect("pomdp method");
            let start = Instant::now();
            let belief = agent_model.initial_belief(&mut substream(agent_seed, &[0]), particles);
            let mut planner = OnlinePlanner::new(&agent_model, belief, config)?;
            summary.planning_seconds.push(start.elapsed().as_secs_f64());
            loop {
                let id = planner.action();
                if !env.is_valid_action(&state, id) {
                    return Err(PomdpError::InvalidAction {
                        action: id.0,
                        step: summary.actions.len(),
                    }
                    .into());
                }
                let tr = env.sample_transition(&state, id, &mut env_rng);
                summary.reward += tr.reward;
                summary
                    .actions
                    .push(agent_model.action(id).expect("valid action id"));
                state = tr.state;
                if env.is_terminal(&state) {
                    break;
                }
                let start = Instant::now();
                planner.observe(&agent_model, id, tr.observation)?;
                summary.planning_seconds.push(start.elapsed().as_secs_f64());
            }
            summary.belief_collapses = planner.collapses();
        }
    }
    Ok(summary)
}

/// Results of one (scene, method) cell, ordered by episode index.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub episodes: Vec<EpisodeSummary>,
    pub wall_time_s: f64,
}

impl CellResult {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards())
    }
}

/// Runs every episode of a cell in parallel on the current rayon pool.
pub fn run_cell(model: &DishModel, method: &Method, spec: &CellSpec) -> Result<CellResult, HarnessError> {
    let start = Instant::now();
    let episodes = (0..spec.episodes)
        .into_par_iter()
        .map(|e| run_episode(model, method, spec, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CellResult {
        episodes,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// One CSV row. Comparison rows carry a p-value in `mean_reward` and leave
/// the interval and timing empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scene: String,
    pub method: String,
    pub horizon: Option<usize>,
    pub episodes: usize,
    pub mean_reward: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<ResultRow>,
    /// Episode rewards per row, in row order (comparison rows excluded).
    pub rewards: Vec<Vec<f64>>,
    /// `(reward scenario, method)` indices per row, in row order
    /// (comparison rows excluded).
    pub cells: Vec<(usize, usize)>,
}

impl ExperimentTable {
    /// Appends one two-sided Mann-Whitney p-value row per pair of configured
    /// methods, pooling each method's episodes over all scenes. Under a
    /// reward sweep, methods are compared within each scenario.
    pub fn add_comparisons(&mut self) {
        let mut groups: Vec<((usize, usize), String, Vec<f64>)> = Vec::new();
        for ((cell, row), rewards) in self.cells.iter().zip(&self.rows).zip(&self.rewards) {
            match groups.iter_mut().find(|g| g.0 == *cell) {
                Some(g) => g.2.extend(rewards),
                None => groups.push((*cell, row.method.clone(), rewards.clone())),
            }
        }
        let mut extra = Vec::new();
        for (i, (ca, la, xa)) in groups.iter().enumerate() {
            for (cb, lb, xb) in &groups[i + 1..] {
                if ca.0 != cb.0 || xa.is_empty() || xb.is_empty() {
                    continue;
                }
                extra.push(ResultRow {
                    scene: "all".into(),
                    method: format!("mann-whitney-p: {la} vs {lb}"),
                    horizon: None,
                    episodes: xa.len() + xb.len(),
                    mean_reward: mann_whitney_u(xa, xb),
                    ci_low: None,
                    ci_high: None,
                    wall_time_s: None,
                });
            }
        }
        self.rows.extend(extra);
    }
}

/// Runs every (scene, method) cell, and every reward scenario when a sweep
/// is configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable, HarnessError> {
    config.validate()?;
    let scenes = config.resolve_scenes()?;
    let scenarios: Vec<(Option<String>, Rewards)> = match &config.reward_sweep {
        Some(sweep) => sweep
            .cells(config.rewards)
            .into_iter()
            .map(|(label, r)| (Some(label), r))
            .collect(),
        None => vec![(None, config.rewards)],
    };
    let mut table = ExperimentTable {
        rows: Vec::new(),
        rewards: Vec::new(),
        cells: Vec::new(),
    };
    for (scenario, (label, rewards)) in scenarios.iter().enumerate() {
        let params = config.domain_params(*rewards);
        for (scene_index, (name, scene)) in scenes.iter().enumerate() {
            let model = DishModel::new(scene, params)?;
            let spec = CellSpec {
                episodes: config.episodes_per_cell,
                gamma_shape: config.gamma_shape,
                gamma_scale: config.gamma_scale,
                initial_observations: config.initial_observations,
                seed: config.seed,
                scene_tag: scene_index as u64,
            };
            for (method_index, method) in config.methods.iter().enumerate() {
                let cell = run_cell(&model, method, &spec)?;
                let rewards = cell.rewards();
                let (ci_low, ci_high) = bootstrap_ci(
                    &rewards,
                    config.bootstrap_resamples,
                    super::stats::DEFAULT_LEVEL,
                    &mut substream(config.seed, &[scene_index as u64, purpose::BOOTSTRAP]),
                );
                let method_label = match label {
                    Some(l) => format!("{method} [{l}]"),
                    None => method.to_string(),
                };
                table.rows.push(ResultRow {
                    scene: name.clone(),
                    method: method_label,
                    horizon: Some(method.planning_horizon()),
                    episodes: rewards.len(),
                    mean_reward: mean(&rewards),
                    ci_low: Some(ci_low),
                    ci_high: Some(ci_high),
                    wall_time_s: Some(cell.wall_time_s),
                });
                table.rewards.push(rewards);
                table.cells.push((scenario, method_index));
            }
        }
    }
    Ok(table)
}

/// Writes the table as CSV with the columns `scene, method, horizon,
/// episodes, mean_reward, ci_low, ci_high, wall_time_s`.
pub fn write_results(table: &ExperimentTable, path: &Path) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    for row in &table.rows {
        writer
            .serialize(row)
            .map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}
