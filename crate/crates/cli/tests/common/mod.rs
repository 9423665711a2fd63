//! Synthetic scenes and trajectory files shared by the CLI tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridcrowd::field::{TrendDistribution, TrendStep};
use gridcrowd::predictor::write_trend_file;
use gridcrowd::{extract_agents, load_trajectories, resample, Scene, SimConfig, WorldPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub scene: PathBuf,
    pub agents: PathBuf,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub const SCENE_JSON: &str = r#"{
  "bounds": [0.0, 0.0, 12.0, 8.0],
  "cell_size": 0.4,
  "obstacles": [[5.2, 3.2, 6.8, 4.8]]
}"#;

/// `n` pedestrians crossing a 12 m x 8 m room around a central pillar,
/// staggered in time, 0.4 s frames.
pub fn trajectories_tsv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes = [0.6, 1.4, 2.2, 5.8, 6.6, 7.4];
    let mut s = String::from("# frame\tid\tx\ty\n");
    for id in 0..n {
        let y = lanes[id % lanes.len()] + rng.random_range(-0.1..0.1);
        let rightward = id % 2 == 0;
        let speed = rng.random_range(0.9..1.3);
        let start_frame = 10 * (id as i64 / 2) + rng.random_range(0..5);
        let frames = rng.random_range(22..30);
        let x0 = if rightward { 0.5 } else { 11.5 };
        let dir = if rightward { 1.0 } else { -1.0 };
        for k in 0..frames {
            let x = (x0 + dir * speed * 0.4 * k as f64).clamp(0.1, 11.9);
            let wobble = 0.05 * (k as f64 * 0.7 + id as f64).sin();
            let _ = writeln!(s, "{}\t{}\t{:.4}\t{:.4}", start_frame + k, id + 1, x, y + wobble);
        }
    }
    s
}

pub fn synthetic(n: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(&scene, SCENE_JSON).unwrap();
    let agents = dir.path().join("agents.tsv");
    std::fs::write(&agents, trajectories_tsv(n, seed)).unwrap();
    Fixture { dir, scene, agents }
}

/// A trend file predicting each agent's recorded future, one record per step.
pub fn trends_from_ground_truth(scene: &Path, agents: &Path, frame_interval: f64, out: &Path, config: &SimConfig) {
    let env = Scene::load(scene).unwrap().discretize().unwrap();
    let ds = resample(&load_trajectories(agents, frame_interval).unwrap(), config.dt).unwrap();
    let ex = extract_agents(&ds, &env, config.h_obs, config.t_p).unwrap();
    let real = ex.real_log().tracks();
    let specs = ex.agent_specs();
    let mut records = Vec::new();
    for spec in &specs {
        let track = &real[&spec.id];
        let last_step = *track.keys().last().unwrap();
        for step in spec.activation_step..=last_step {
            let steps: Vec<TrendStep> = (1..=config.t_p as u64)
                .map(|t| {
                    let at = (step + t).min(last_step);
                    let p = track.range(..=at).next_back().map(|(_, p)| *p).unwrap_or(WorldPoint::new(0.0, 0.0));
                    TrendStep {
                        mu: p,
                        sigma_x: 0.1,
                        sigma_y: 0.1,
                        rho: 0.0,
                    }
                })
                .collect();
            records.push(TrendDistribution {
                agent_id: spec.id,
                made_at_step: step,
                steps,
            });
        }
    }
    write_trend_file(out, &records).unwrap();
}

pub fn gridcrowd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridcrowd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
