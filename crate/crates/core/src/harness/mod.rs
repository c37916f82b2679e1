//! Experiment orchestration: configuration, seeded training and evaluation
//! runs with their output files, checkpoints, and the analysis suite.

mod analysis;
mod config;
mod run;

pub use analysis::{
    analyze_density, analyze_selection, build_graph, converged_episode, density_analysis,
    gossip_bench, moving_average, selection_analysis, spearman, write_density_csv,
    write_gossip_csv, write_selection_csv, Density, Topology, CONVERGENCE_TOLERANCE, CURVE_WINDOW,
    DENSITY_GRID, SELECTION_BINS,
};
pub use config::{parse_config_text, RunConfig};
pub use run::{
    derive_seed, evaluate_team, run_eval, run_training, train_team, write_trace, CheckpointBundle,
    EvalAggregate, EvalFlags, MeanStd, TrainingOutcome, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
    VERSION_STAMP,
};
