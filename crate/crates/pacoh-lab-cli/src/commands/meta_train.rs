//! `meta-train` subcommand: approximate the hyper-posterior and write a
//! checkpoint plus a training log.

use std::path::Path;

use pacoh_lab::envs::{
    gen_blr_env, gen_cauchy_env, gen_logreg_env, gen_sinusoid_env, EnvDescriptor, MetaDataset,
};
use pacoh_lab::meta::{
    meta_train_with_hyper_prior, BnnScoreModel, Checkpoint, GpScoreModel, HyperPosterior,
    LambdaBetaMode, ModelSpec, ScoreModel, TrainLogRow,
};
use pacoh_lab::numerics::{DiagonalGaussian, RngStream};

use crate::commands::{build_model_spec, env_input_dim};
use crate::config::{config_hash, normalize_train, MetaTrainFile};
use crate::output::{fmt, CsvWriter};
use crate::CliError;

pub fn generate_env(env: &EnvDescriptor, seed: u64) -> MetaDataset {
    match env {
        EnvDescriptor::Sinusoid(cfg) => gen_sinusoid_env(cfg, seed),
        EnvDescriptor::Cauchy(cfg) => gen_cauchy_env(cfg, seed),
        EnvDescriptor::Blr(cfg) => gen_blr_env(cfg, seed),
        EnvDescriptor::Logreg(cfg) => gen_logreg_env(cfg, seed),
    }
}

pub fn run(
    mut cfg: MetaTrainFile,
    seed: Option<u64>,
    mll_only: bool,
    out: &Path,
) -> Result<(), CliError> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if mll_only {
        cfg.train.mll_only = true;
    }
    cfg.train = normalize_train(cfg.train);
    let hash = config_hash(&cfg);

    let ds = generate_env(&cfg.env, cfg.env_seed);
    let (spec, mll_samples) = build_model_spec(&cfg.model, env_input_dim(&cfg.env))?;
    let rng = RngStream::new(cfg.seed, 0x7a);
    let (posterior, log) = match &spec {
        ModelSpec::Gp(gp_cfg) => {
            if cfg.train.lambda_beta != LambdaBetaMode::Linear {
                return Err(CliError::config(
                    "the GP path requires the linear temperature mode (its evidence is the exact marginal log-likelihood)",
                ));
            }
            let model = GpScoreModel { cfg: gp_cfg.clone() };
            let hyper = DiagonalGaussian::spherical(
                model.phi_dim(),
                cfg.train.hyper_prior_std,
            );
            meta_train_with_hyper_prior(&model, &ds.train_tasks, &hyper, &cfg.train, &rng)
                .map_err(CliError::from_lab)?
        }
        ModelSpec::Bnn(bnn_cfg) => {
            let model = BnnScoreModel { cfg: bnn_cfg.clone(), mll_samples };
            let hyper = bnn_cfg.hyper_prior(cfg.train.hyper_prior_std);
            meta_train_with_hyper_prior(&model, &ds.train_tasks, &hyper, &cfg.train, &rng)
                .map_err(CliError::from_lab)?
        }
    };
    write_outputs(&hash, cfg.seed, &spec, posterior, &log, out)
}

fn write_outputs(
    hash: &str,
    seed: u64,
    spec: &ModelSpec,
    posterior: HyperPosterior,
    log: &[TrainLogRow],
    out: &Path,
) -> Result<(), CliError> {
    let mut csv = CsvWriter::new(hash, seed, "iteration,score,grad_norm");
    for row in log {
        csv.row(&[row.iteration.to_string(), fmt(row.score), fmt(row.grad_norm)]);
    }
    csv.write_to(&out.join("train_log.csv"))?;

    let ckpt = Checkpoint::new(hash.to_string(), spec.clone(), posterior);
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("checkpoint.json"), ckpt.to_json())?;
    log::info!("wrote {}", out.join("checkpoint.json").display());
    Ok(())
}
