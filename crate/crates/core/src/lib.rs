//! Grid crowd simulation driven by per-agent navigation potential fields.
//!
//! Each agent descends a global field made of its navigation field (built
//! from a predicted movement-trend distribution), a static obstacle field and
//! a per-step pedestrian field. Predictions come from a built-in shortest-path
//! baseline, a trend file, or an external process speaking the lockstep file
//! protocol in [`predictor`].

pub mod agent;
pub mod dataset;
pub mod error;
pub mod field;
pub mod grid;
pub mod metrics;
pub mod predictor;
pub mod sim;
pub mod trajectory;

pub use agent::{Agent, AgentId, AgentState, Plan};
pub use dataset::{extract_agents, load_trajectories, resample, AgentSeed, Extraction, TrajectoryDataset};
pub use error::{Error, Result};
pub use field::{FieldKind, FieldMatrix, FieldParams, TrendDistribution, TrendStep};
pub use grid::{GridCoord, GridEnvironment, Rect, Scene, WorldPoint};
pub use metrics::{ade, heatmap, jaccard_similarity, kde, travel_stats, Heatmap, MetricsReport};
pub use predictor::{PredictorKind, TrendPredictor};
pub use sim::{AgentSpec, RunSummary, SimConfig, World};
pub use trajectory::{TrajectoryLog, TrajectoryRow};
