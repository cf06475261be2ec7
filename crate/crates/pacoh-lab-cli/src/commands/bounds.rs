//! `bounds` subcommand: bound curves over a sweep of task counts.

use std::path::Path;

use pacoh_lab::bounds::{
    blr_complexity, blr_transfer_error, evaluate_bounds, misclassification_transfer_error,
    BlrEvidence, BlrModelConfig, BoundSuite, ComplexityTerms, LogregEvidence, PriorSampler,
};
use pacoh_lab::envs::{gen_blr_env, gen_logreg_env, BlrEnvConfig, LogregEnvConfig};
use pacoh_lab::meta::LambdaBetaMode;
use pacoh_lab::numerics::{DiagonalGaussian, RngStream};

use crate::config::{config_hash, BoundsEnv, BoundsFile};
use crate::output::{fmt, CsvWriter};
use crate::CliError;

const COLUMNS: &str = "env,n,m,lambda,beta,delta,pacoh_total,pacoh_stderr,per_task_total,\
per_task_stderr,delta_improvement,delta_stderr,psi1,psi2,complexity,\
transfer_err_meta,transfer_err_meta_stderr,transfer_err_prior,transfer_err_prior_stderr";

pub fn run(mut cfg: BoundsFile, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if cfg.n_sweep.is_empty() {
        return Err(CliError::config("n_sweep must not be empty"));
    }
    let hash = config_hash(&cfg);
    let mut csv = CsvWriter::new(&hash, cfg.seed, COLUMNS);
    for &n in &cfg.n_sweep {
        let row = match &cfg.env {
            BoundsEnv::Blr { .. } => blr_row(&cfg, n)?,
            BoundsEnv::Logreg { .. } => logreg_row(&cfg, n)?,
        };
        csv.row(&row);
    }
    csv.write_to(&out.join("bounds.csv"))?;
    log::info!("wrote {}", out.join("bounds.csv").display());
    Ok(())
}

fn lambda_beta(mode: LambdaBetaMode, n: usize, m: usize) -> (f64, f64) {
    (mode.lambda(n), mode.beta(m))
}

fn common_fields(
    env: &str,
    n: usize,
    m: usize,
    lambda: f64,
    beta: f64,
    delta: f64,
    suite: &BoundSuite<Vec<f64>>,
) -> Vec<String> {
    vec![
        env.to_string(),
        n.to_string(),
        m.to_string(),
        fmt(lambda),
        fmt(beta),
        fmt(delta),
        fmt(suite.pacoh.total),
        fmt(suite.pacoh.mc_std_error),
        fmt(suite.per_task.total),
        fmt(suite.per_task.mc_std_error),
        fmt(suite.delta_improvement),
        fmt(suite.delta_std_error),
        fmt(suite.pacoh.psi1),
        fmt(suite.pacoh.psi2),
        fmt(suite.pacoh.complexity),
    ]
}

fn blr_row(cfg: &BoundsFile, n: usize) -> Result<Vec<String>, CliError> {
    let BoundsEnv::Blr {
        dim,
        samples_per_task,
        task_mean,
        task_std,
        input_std,
        noise_std,
        prior_var,
        hyper_var,
        likelihood_var,
    } = &cfg.env
    else {
        unreachable!()
    };
    let env = BlrEnvConfig {
        n_tasks: n,
        samples_per_task: *samples_per_task,
        dim: *dim,
        task_mean: *task_mean,
        task_std: *task_std,
        input_std: *input_std,
        noise_std: *noise_std,
        test_tasks: 0,
        query_points: 1,
    };
    let ds = gen_blr_env(&env, cfg.seed ^ (n as u64).wrapping_mul(0x9e37));
    let m = *samples_per_task;
    let (lambda, beta) = lambda_beta(cfg.lambda_beta, n, m);
    let model = BlrModelConfig { prior_var: *prior_var, likelihood_var: *likelihood_var };
    let complexity =
        blr_complexity(&ds.train_tasks, &env, &model, *hyper_var, m, cfg.delta)
            .map_err(CliError::from_lab)?;
    let hyper = DiagonalGaussian::spherical(*dim, hyper_var.sqrt());
    let evidence = BlrEvidence { model, hyper: hyper.clone() };
    let rng = RngStream::new(cfg.seed, 0xb0);
    let suite = evaluate_bounds(
        &evidence,
        &ds.train_tasks,
        lambda,
        beta,
        &complexity,
        cfg.mc_priors,
        &rng,
    )
    .map_err(CliError::from_lab)?;

    let mut fields = common_fields("blr", n, m, lambda, beta, cfg.delta, &suite);
    if cfg.error_test_tasks > 0 {
        let test_env = BlrEnvConfig {
            n_tasks: cfg.error_test_tasks,
            test_tasks: 0,
            query_points: 1,
            ..env.clone()
        };
        let test_ds = gen_blr_env(&test_env, cfg.seed ^ 0x7e55);
        let mut err_rng = RngStream::new(cfg.seed, 0xe1);
        let meta_sampler = PriorSampler::Weighted {
            samples: &suite.samples.priors,
            weights: &suite.posterior_weights,
        };
        let (err_meta, se_meta) = blr_transfer_error(
            &meta_sampler,
            &env,
            &model,
            beta,
            &test_ds.train_tasks,
            0,
            &mut err_rng,
        )
        .map_err(CliError::from_lab)?;
        let prior_sampler = PriorSampler::Gaussian(&hyper);
        let (err_prior, se_prior) = blr_transfer_error(
            &prior_sampler,
            &env,
            &model,
            beta,
            &test_ds.train_tasks,
            100,
            &mut err_rng,
        )
        .map_err(CliError::from_lab)?;
        fields.extend([fmt(err_meta), fmt(se_meta), fmt(err_prior), fmt(se_prior)]);
    } else {
        fields.extend(["".into(), "".into(), "".into(), "".into()]);
    }
    Ok(fields)
}

fn logreg_row(cfg: &BoundsFile, n: usize) -> Result<Vec<String>, CliError> {
    let BoundsEnv::Logreg {
        dim,
        samples_per_task,
        task_mean,
        task_std,
        prior_std,
        hyper_std,
        evidence_draws,
        evidence_loss,
        error,
    } = &cfg.env
    else {
        unreachable!()
    };
    let env = LogregEnvConfig {
        n_tasks: n,
        samples_per_task: *samples_per_task,
        dim: *dim,
        task_mean: *task_mean,
        task_std: *task_std,
        test_tasks: 0,
        query_points: 1,
        ..Default::default()
    };
    let ds = gen_logreg_env(&env, cfg.seed ^ (n as u64).wrapping_mul(0x9e37));
    let m = *samples_per_task;
    let (lambda, beta) = lambda_beta(cfg.lambda_beta, n, m);
    // Misclassification loss is bounded in [0, 1].
    let complexity = ComplexityTerms::bounded(n, m, lambda, beta, cfg.delta, 0.0, 1.0)
        .map_err(CliError::from_lab)?;
    let hyper = DiagonalGaussian::spherical(*dim, *hyper_std);
    let evidence = LogregEvidence {
        hyper: hyper.clone(),
        prior_std: *prior_std,
        is_draws: *evidence_draws,
        loss: *evidence_loss,
    };
    let rng = RngStream::new(cfg.seed, 0xb1);
    let suite = evaluate_bounds(
        &evidence,
        &ds.train_tasks,
        lambda,
        beta,
        &complexity,
        cfg.mc_priors,
        &rng,
    )
    .map_err(CliError::from_lab)?;

    let mut fields = common_fields("logreg", n, m, lambda, beta, cfg.delta, &suite);
    if cfg.error_test_tasks > 0 {
        let err_cfg = pacoh_lab::bounds::TransferErrorConfig {
            mc_tasks: cfg.error_test_tasks,
            ..*error
        };
        let mut err_rng = RngStream::new(cfg.seed, 0xe2);
        let meta_sampler = PriorSampler::Weighted {
            samples: &suite.samples.priors,
            weights: &suite.posterior_weights,
        };
        let (err_meta, se_meta) = misclassification_transfer_error(
            &meta_sampler,
            &env,
            *prior_std,
            beta,
            &err_cfg,
            cfg.seed ^ 0x7e57,
            &mut err_rng,
        )
        .map_err(CliError::from_lab)?;
        let prior_sampler = PriorSampler::Gaussian(&hyper);
        let (err_prior, se_prior) = misclassification_transfer_error(
            &prior_sampler,
            &env,
            *prior_std,
            beta,
            &err_cfg,
            cfg.seed ^ 0x7e58,
            &mut err_rng,
        )
        .map_err(CliError::from_lab)?;
        fields.extend([fmt(err_meta), fmt(se_meta), fmt(err_prior), fmt(se_prior)]);
    } else {
        fields.extend(["".into(), "".into(), "".into(), "".into()]);
    }
    Ok(fields)
}
