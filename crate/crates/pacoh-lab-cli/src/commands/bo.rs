//! `bo` subcommand: per-round regret CSV for configured acquisition
//! algorithms and seeds.

use std::path::Path;

use pacoh_lab::bnn::BnnConfig;
use pacoh_lab::bo::{run_bo, Acquisition, BoConfig};
use pacoh_lab::envs::gen_peptide_pool;
use pacoh_lab::eval::regret_curves;
use pacoh_lab::meta::{Checkpoint, HyperPosterior, ModelSpec};
use pacoh_lab::numerics::RngStream;

use crate::commands::meta_test::vanilla_prior;
use crate::config::{config_hash, BoFile, ModelConfig};
use crate::output::{fmt, CsvWriter};
use crate::CliError;

const COLUMNS: &str = "algorithm,prior,seed,t,action,reward,avg_regret,simple_regret";

fn algorithm_name(a: &Acquisition) -> &'static str {
    match a {
        Acquisition::Ucb { .. } => "ucb",
        Acquisition::ThompsonSampling => "ts",
    }
}

pub fn run(
    mut cfg: BoFile,
    seed: Option<u64>,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if cfg.seeds.is_empty() || cfg.algorithms.is_empty() {
        return Err(CliError::config("need at least one seed and one algorithm"));
    }
    let hash = config_hash(&cfg);
    let (pool, _train_tasks) = gen_peptide_pool(&cfg.pool, cfg.pool_seed);
    let rewards = pool.test_rewards().to_vec();
    let r_star = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let (bnn, priors, prior_kind) = match checkpoint {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let ckpt = Checkpoint::from_json(&text).map_err(CliError::config)?;
            let ModelSpec::Bnn(bnn) = ckpt.spec else {
                return Err(CliError::config("bandit runs require a BNN checkpoint"));
            };
            let priors = match ckpt.hyper_posterior {
                HyperPosterior::Particles { particles } => particles,
                HyperPosterior::Vi { .. } => {
                    return Err(CliError::config(
                        "bandit runs expect a particle hyper-posterior",
                    ))
                }
            };
            (bnn, priors, "meta")
        }
        None => {
            let ModelConfig::Bnn { .. } = &cfg.model else {
                return Err(CliError::config("bandit runs require a BNN model"));
            };
            let (spec, _) =
                crate::commands::build_model_spec(&cfg.model, pool.features.cols())?;
            let ModelSpec::Bnn(bnn) = spec else { unreachable!() };
            let prior = vanilla_prior(&ModelSpec::Bnn(bnn.clone()));
            (bnn, vec![prior], "standard")
        }
    };
    validate_model(&bnn, pool.features.cols())?;

    let mut csv = CsvWriter::new(&hash, cfg.seeds[0], COLUMNS);
    for algorithm in &cfg.algorithms {
        for &run_seed in &cfg.seeds {
            let bo_cfg = BoConfig {
                rounds: cfg.rounds,
                acquisition: *algorithm,
                target_train: cfg.target.clone(),
                warm_start_steps: cfg.warm_start_steps,
                cold_start: cfg.cold_start,
                linear_beta: cfg.linear_beta,
            };
            let rng = RngStream::new(run_seed, 0xb0_0b);
            let history = run_bo(&pool, &rewards, &bnn, &priors, &bo_cfg, &rng)
                .map_err(CliError::from_lab)?;
            let (avg, simple) =
                regret_curves(&history.rewards, r_star).map_err(CliError::from_lab)?;
            for t in 0..history.actions.len() {
                csv.row(&[
                    algorithm_name(algorithm).into(),
                    prior_kind.into(),
                    run_seed.to_string(),
                    (t + 1).to_string(),
                    history.actions[t].to_string(),
                    fmt(history.rewards[t]),
                    fmt(avg[t]),
                    fmt(simple[t]),
                ]);
            }
        }
    }
    csv.write_to(&out.join("bo.csv"))?;
    Ok(())
}

fn validate_model(bnn: &BnnConfig, input_dim: usize) -> Result<(), CliError> {
    if bnn.arch.input_dim != input_dim {
        return Err(CliError::config(format!(
            "model input dim {} does not match pool feature dim {input_dim}",
            bnn.arch.input_dim
        )));
    }
    Ok(())
}
