use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gridcrowd::dataset::{parse_trajectories, Extraction};
use gridcrowd::field::{FieldMatrix, FieldParams};
use gridcrowd::metrics::{ade_agent_count, kde_to_csv, travel_by_agent};
use gridcrowd::sim::RunSummary;
use gridcrowd::trajectory::Tracks;
use gridcrowd::{
    ade, extract_agents, heatmap, jaccard_similarity, kde, load_trajectories, resample, AgentId, Error,
    GridEnvironment, MetricsReport, PredictorKind, Scene, SimConfig, TrajectoryLog, World,
};

use crate::manifest::RunManifest;
use crate::{Cli, CliError, CliResult, ConvertArgs, EvaluateArgs, ExportArgs, Mode, ScenarioArgs, SimulateArgs, SweepArgs};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    write_file(path, &(text + "\n"))
}

fn out_dir(cli: &Cli) -> CliResult<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

/// Config from `--config` (if any) with `--seed` applied. The flag tells
/// whether `max_steps` was given explicitly.
pub fn load_config(cli: &Cli) -> CliResult<(SimConfig, bool)> {
    let (mut config, explicit_max) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let explicit = value.get("max_steps").is_some();
            let config: SimConfig = serde_json::from_value(value)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            (config, explicit)
        }
        None => (SimConfig::default(), false),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok((config, explicit_max))
}

fn predictor_for(args: &ScenarioArgs) -> CliResult<PredictorKind> {
    match args.mode {
        Mode::Baseline => {
            if args.trends.is_some() || args.lockstep_dir.is_some() {
                warn!("baseline mode ignores --trends and --lockstep-dir");
            }
            Ok(PredictorKind::Baseline)
        }
        Mode::DataDriven => match (&args.trends, &args.lockstep_dir) {
            (Some(_), Some(_)) => Err(CliError::usage("give either --trends or --lockstep-dir, not both")),
            (Some(path), None) => {
                if !path.is_file() {
                    return Err(CliError::usage(format!("trend file {} not found", path.display())));
                }
                Ok(PredictorKind::TrendFile { path: path.clone() })
            }
            (None, Some(dir)) => Ok(PredictorKind::Lockstep {
                dir: dir.clone(),
                timeout_ms: args.lockstep_timeout_ms,
            }),
            (None, None) => Err(CliError::usage("data-driven mode needs --trends or --lockstep-dir")),
        },
    }
}

/// A scene plus the agents extracted from a trajectory file.
pub struct Scenario {
    pub env: GridEnvironment,
    pub extraction: Extraction,
    pub config: SimConfig,
    pub inputs: Vec<PathBuf>,
}

impl Scenario {
    pub fn real_log(&self) -> TrajectoryLog {
        self.extraction.real_log()
    }

    pub fn world(&self, config: &SimConfig) -> CliResult<World> {
        Ok(World::new(self.env.clone(), self.extraction.agent_specs(), config.clone())?)
    }
}

pub fn prepare(cli: &Cli, args: &ScenarioArgs) -> CliResult<Scenario> {
    for (flag, path) in [("--scene", &args.scene), ("--agents", &args.agents)] {
        if !path.is_file() {
            return Err(CliError::usage(format!("{flag} {} not found", path.display())));
        }
    }
    let (mut config, explicit_max) = load_config(cli)?;
    config.predictor = predictor_for(args)?;
    let env = Scene::load(&args.scene)?.discretize()?;
    let raw = load_trajectories(&args.agents, args.frame_interval)?;
    let ds = resample(&raw, config.dt)?;
    if !explicit_max {
        config.max_steps = (4 * ds.longest_track()).max(1) as u64;
    }
    config.validate()?;
    let extraction = extract_agents(&ds, &env, config.h_obs, config.t_p)?;
    info!(
        "{} agents accepted, {} skipped ({} short, {} blocked, {} stationary), {} relocated",
        extraction.seeds.len(),
        extraction.skipped(),
        extraction.skipped_short,
        extraction.skipped_blocked,
        extraction.skipped_stationary,
        extraction.relocated
    );
    let mut inputs = vec![args.scene.clone(), args.agents.clone()];
    inputs.extend(cli.config.clone());
    if let PredictorKind::TrendFile { path } = &config.predictor {
        inputs.push(path.clone());
    }
    Ok(Scenario {
        env,
        extraction,
        config,
        inputs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub accepted: usize,
    pub skipped_short: usize,
    pub skipped_blocked: usize,
    pub skipped_stationary: usize,
    pub relocated: usize,
    pub base_frame: Option<i64>,
}

impl From<&Extraction> for ExtractionSummary {
    fn from(e: &Extraction) -> Self {
        ExtractionSummary {
            accepted: e.seeds.len(),
            skipped_short: e.skipped_short,
            skipped_blocked: e.skipped_blocked,
            skipped_stationary: e.skipped_stationary,
            relocated: e.relocated,
            base_frame: e.base_frame(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateReport {
    pub run: RunSummary,
    pub extraction: ExtractionSummary,
}

pub struct SimulateOutput {
    pub dir: PathBuf,
    pub report: SimulateReport,
}

pub fn simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<SimulateOutput> {
    let scenario = prepare(cli, &args.scenario)?;
    let dir = out_dir(cli)?;
    let mut world = scenario.world(&scenario.config)?;
    let run = world.run()?;
    info!("{} of {} agents arrived in {} steps", run.arrived, run.agents, run.steps);

    let mut manifest = RunManifest::new("simulate", &scenario.config);
    for p in &scenario.inputs {
        manifest.add_input(p)?;
    }
    let traj = dir.join("trajectories.csv");
    world.log().write_csv(&traj)?;
    let real = dir.join("real.csv");
    scenario.real_log().write_csv(&real)?;
    let report = SimulateReport {
        run,
        extraction: ExtractionSummary::from(&scenario.extraction),
    };
    let summary = dir.join("summary.json");
    write_json(&summary, &report)?;
    let config = dir.join("config.json");
    write_json(&config, &scenario.config)?;
    for p in [&traj, &real, &summary, &config] {
        manifest.add_output(p);
    }
    manifest.write(&dir.join("manifest.json"))?;
    Ok(SimulateOutput { dir, report })
}

/// Drops positions outside the grid, returning how many were dropped.
fn in_bounds_positions(log: &TrajectoryLog, env: &GridEnvironment) -> (Vec<gridcrowd::WorldPoint>, usize) {
    let mut kept = Vec::with_capacity(log.len());
    let mut dropped = 0;
    for p in log.positions() {
        if env.world_to_grid(p).is_ok() {
            kept.push(p);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

pub fn metrics_for(
    sim: &TrajectoryLog,
    real: &TrajectoryLog,
    env: &GridEnvironment,
    horizon: Option<usize>,
    levels: u32,
    dt: f64,
) -> CliResult<(MetricsReport, gridcrowd::Heatmap, gridcrowd::Heatmap)> {
    let (sim_tracks, real_tracks): (Tracks, Tracks) = (sim.tracks(), real.tracks());
    let ade = ade(&sim_tracks, &real_tracks, horizon)?;
    let (sim_pts, sim_out) = in_bounds_positions(sim, env);
    let (real_pts, real_out) = in_bounds_positions(real, env);
    if sim_out + real_out > 0 {
        warn!("{sim_out} simulated and {real_out} recorded positions lie outside the grid and are left out of the heatmaps");
    }
    let hs = heatmap(sim_pts, env)?;
    let hr = heatmap(real_pts, env)?;
    let jaccard = jaccard_similarity(&hs, &hr, levels)?;
    let report = MetricsReport {
        ade,
        horizon,
        agents_compared: ade_agent_count(&sim_tracks, &real_tracks),
        jaccard,
        levels,
        sim_travel: travel_by_agent(&sim_tracks, dt),
        real_travel: travel_by_agent(&real_tracks, dt),
        files: BTreeMap::new(),
    };
    Ok((report, hs, hr))
}

pub fn evaluate(cli: &Cli, args: &EvaluateArgs) -> CliResult<MetricsReport> {
    for (flag, path) in [("--sim", &args.sim), ("--real", &args.real), ("--scene", &args.scene)] {
        if !path.is_file() {
            return Err(CliError::usage(format!("{flag} {} not found", path.display())));
        }
    }
    let (config, _) = load_config(cli)?;
    let env = Scene::load(&args.scene)?.discretize()?;
    let sim = TrajectoryLog::read_csv(&args.sim)?;
    let real = TrajectoryLog::read_csv(&args.real)?;
    let horizon = if args.full { None } else { Some(args.horizon.unwrap_or(config.t_p)) };
    let (mut report, hs, hr) = metrics_for(&sim, &real, &env, horizon, args.levels, config.dt)?;

    let dir = out_dir(cli)?;
    if args.heatmaps {
        for (name, h) in [("heatmap_sim", &hs), ("heatmap_real", &hr)] {
            let p = dir.join(format!("{name}.csv"));
            h.write_csv(&p)?;
            report.files.insert(name.to_string(), p.display().to_string());
        }
    }
    if args.kde {
        let series = [
            ("kde_sim_distance", report.sim_travel.iter().map(|t| t.distance).collect::<Vec<_>>()),
            ("kde_sim_speed", report.sim_travel.iter().map(|t| t.mean_speed).collect()),
            ("kde_real_distance", report.real_travel.iter().map(|t| t.distance).collect()),
            ("kde_real_speed", report.real_travel.iter().map(|t| t.mean_speed).collect()),
        ];
        for (name, samples) in series {
            if samples.is_empty() {
                warn!("{name}: no agent with two or more positions, curve skipped");
                continue;
            }
            let curve = kde(&samples, args.bandwidth, args.kde_points)?;
            let p = dir.join(format!("{name}.csv"));
            write_file(&p, &kde_to_csv(&curve))?;
            report.files.insert(name.to_string(), p.display().to_string());
        }
    }
    let p = dir.join("metrics.json");
    write_json(&p, &report)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(report)
}

/// Parses `1..12`, `1,6,12` and mixtures like `1..3,8`.
pub fn parse_td_values(spec: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || CliError::usage(format!("bad --td-values entry `{part}`"));
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("--td-values is empty"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub td: usize,
    pub ade: f64,
}

pub fn sweep_td(cli: &Cli, args: &SweepArgs) -> CliResult<Vec<SweepRow>> {
    let values = parse_td_values(&args.td_values)?;
    let scenario = prepare(cli, &args.scenario)?;
    let t_p = scenario.config.t_p;
    if let Some(bad) = values.iter().find(|&&td| td < 1 || td > t_p) {
        return Err(CliError::usage(format!("t_d = {bad} is outside 1..={t_p}")));
    }
    if matches!(scenario.config.predictor, PredictorKind::Lockstep { .. }) {
        return Err(CliError::usage("sweep-td does not support --lockstep-dir"));
    }
    let real = scenario.real_log().tracks();
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&td| {
            let config = SimConfig {
                t_d: td,
                ..scenario.config.clone()
            };
            let mut world = scenario.world(&config)?;
            world.run()?;
            let ade = ade(&world.log().tracks(), &real, Some(t_p))?;
            info!("t_d = {td}: ADE {ade:.4} m");
            Ok(SweepRow { td, ade })
        })
        .collect::<CliResult<_>>()?;

    let mut csv = String::from("td,ade\n");
    for r in &rows {
        csv.push_str(&format!("{},{}\n", r.td, r.ade));
    }
    let dir = out_dir(cli)?;
    let p = dir.join("sweep_td.csv");
    write_file(&p, &csv)?;
    let mut manifest = RunManifest::new("sweep-td", &scenario.config);
    for i in &scenario.inputs {
        manifest.add_input(i)?;
    }
    manifest.add_output(&p);
    manifest.write(&dir.join("manifest.json"))?;
    print!("{csv}");
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldExport {
    pub agent_id: AgentId,
    pub step: u64,
    pub cell_size: f64,
    pub width: i32,
    pub height: i32,
    pub field_params: FieldParams,
    /// Matrix label → file.
    pub files: BTreeMap<String, String>,
}

pub fn export_fields(cli: &Cli, args: &ExportArgs) -> CliResult<FieldExport> {
    let scenario = prepare(cli, &args.scenario)?;
    if args.step > scenario.config.max_steps {
        return Err(CliError::usage(format!(
            "--step {} is beyond max_steps {}",
            args.step, scenario.config.max_steps
        )));
    }
    let mut world = scenario.world(&scenario.config)?;
    while world.step_index() < args.step {
        if world.is_finished() {
            break;
        }
        world.step()?;
    }
    let id = AgentId(args.agent);
    let fields = world.fields_for(id).filter(|_| world.step_index() == args.step).ok_or_else(|| {
        CliError::usage(format!("agent {} is not active at step {}", args.agent, args.step))
    })?;

    let dir = out_dir(cli)?;
    let mut files = BTreeMap::new();
    let mats: [&FieldMatrix; 4] = [&fields.mf, &fields.mc, &fields.mi, &fields.mg];
    for m in mats {
        let p = dir.join(format!("{}.csv", m.kind().label()));
        m.write_csv(&p)?;
        files.insert(m.kind().label().to_string(), p.display().to_string());
    }
    let p = dir.join("direction.csv");
    write_file(&p, &fields.direction.to_csv())?;
    files.insert("direction".into(), p.display().to_string());
    let export = FieldExport {
        agent_id: id,
        step: args.step,
        cell_size: world.env().cell_size(),
        width: world.env().width(),
        height: world.env().height(),
        field_params: scenario.config.field_params,
        files,
    };
    write_json(&dir.join("fields.json"), &export)?;
    let mut manifest = RunManifest::new("export-fields", &scenario.config);
    for i in &scenario.inputs {
        manifest.add_input(i)?;
    }
    for f in export.files.values() {
        manifest.add_output(Path::new(f));
    }
    manifest.write(&dir.join("manifest.json"))?;
    Ok(export)
}

/// Column roles to indices of (frame, id, x, y).
pub fn parse_cols(spec: &str) -> CliResult<[usize; 4]> {
    let mut idx: [Option<usize>; 4] = [None; 4];
    for (k, role) in spec.split(',').map(str::trim).enumerate() {
        let slot = match role {
            "frame" => 0,
            "id" => 1,
            "x" => 2,
            "y" => 3,
            "_" => continue,
            other => return Err(CliError::usage(format!("unknown column role `{other}`"))),
        };
        if idx[slot].replace(k).is_some() {
            return Err(CliError::usage(format!("column role `{role}` given twice")));
        }
    }
    match idx {
        [Some(f), Some(i), Some(x), Some(y)] => Ok([f, i, x, y]),
        _ => Err(CliError::usage("--cols must name frame, id, x and y")),
    }
}

pub fn convert(cli: &Cli, args: &ConvertArgs) -> CliResult<()> {
    let cols = parse_cols(&args.cols)?;
    if !args.input.is_file() {
        return Err(CliError::usage(format!("--input {} not found", args.input.display())));
    }
    let text = std::fs::read_to_string(&args.input).map_err(|e| io_err(&args.input, e))?;
    let ds = parse_trajectories(&text, &args.input, 1.0, cols)?;
    let out = ds.to_tsv();
    match &cli.out {
        Some(p) => write_file(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_value_lists() {
        assert_eq!(parse_td_values("1..12").unwrap(), (1..=12).collect::<Vec<_>>());
        assert_eq!(parse_td_values("1,6,12").unwrap(), vec![1, 6, 12]);
        assert_eq!(parse_td_values("1..3, 8").unwrap(), vec![1, 2, 3, 8]);
        assert_eq!(parse_td_values("2..=4").unwrap(), vec![2, 3, 4]);
        assert!(parse_td_values("").is_err());
        assert!(parse_td_values("5..2").is_err());
        assert!(parse_td_values("a").is_err());
    }

    #[test]
    fn column_roles() {
        assert_eq!(parse_cols("frame,id,x,y").unwrap(), [0, 1, 2, 3]);
        assert_eq!(parse_cols("frame,id,y,x").unwrap(), [0, 1, 3, 2]);
        assert_eq!(parse_cols("frame,id,x,_,y").unwrap(), [0, 1, 2, 4]);
        assert!(parse_cols("frame,id,x").is_err());
        assert!(parse_cols("frame,id,x,x,y").is_err());
        assert!(parse_cols("frame,id,x,z").is_err());
    }
}
