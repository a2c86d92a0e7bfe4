//! Batch experiment runner: sectioned config files, one subcommand per
//! experiment, CSV artifacts and process exit codes 0 / 2 / 3.

pub mod commands;
pub mod config;
pub mod plot;

pub use config::{schema_help, RunConfig, Values, SCHEMA, SUBCOMMANDS};
pub use plot::{emit_plot_data, merge_histories, split_plot_data};

use dbq_core::{Error, Result};

/// Runs the configured subcommand and returns its text summary.
pub fn run(cfg: &RunConfig) -> Result<String> {
    match cfg.subcommand.as_str() {
        "bsde-train" => commands::bsde_train(cfg),
        "bsde-eval" => commands::bsde_eval(cfg),
        "grad-bench" => commands::grad_bench(cfg),
        "qamc" => commands::qamc(cfg),
        "ae-bench" => commands::ae_bench(cfg),
        "mlmc" => commands::mlmc(cfg),
        "hybrid-train" => commands::hybrid_train(cfg),
        "cost-model" => commands::cost_model(cfg),
        other => Err(Error::config(format!("unknown subcommand `{other}`"))),
    }
}
