pub mod bo;
pub mod bounds;
pub mod meta_train;

use pacoh_lab::bnn::BnnConfig;
use pacoh_lab::envs::EnvDescriptor;
use pacoh_lab::gp::GpConfig;
use pacoh_lab::meta::ModelSpec;
use pacoh_lab::mlp::MlpArchitecture;

use crate::config::ModelConfig;
use crate::CliError;

/// Environment input dimensionality.
pub fn env_input_dim(env: &EnvDescriptor) -> usize {
    match env {
        EnvDescriptor::Sinusoid(_) => 1,
        EnvDescriptor::Cauchy(_) => 2,
        EnvDescriptor::Blr(cfg) => cfg.dim,
        EnvDescriptor::Logreg(cfg) => cfg.dim,
    }
}

/// Resolves the model section against the environment's input dimension.
pub fn build_model_spec(
    model: &ModelConfig,
    input_dim: usize,
) -> Result<(ModelSpec, usize), CliError> {
    match model {
        ModelConfig::Gp { hidden, feature_dim, noise_variance } => {
            let mean_arch = MlpArchitecture::new(input_dim, hidden.clone(), 1)
                .map_err(CliError::config)?;
            let feature_arch = MlpArchitecture::new(input_dim, hidden.clone(), *feature_dim)
                .map_err(CliError::config)?;
            let cfg = GpConfig { mean_arch, feature_arch, noise_variance: *noise_variance };
            Ok((ModelSpec::Gp(cfg), 0))
        }
        ModelConfig::Bnn { hidden, likelihood, mll_samples } => {
            let output_dim = match likelihood {
                pacoh_lab::bnn::Likelihood::Categorical { classes } => *classes,
                _ => 1,
            };
            let arch = MlpArchitecture::new(input_dim, hidden.clone(), output_dim)
                .map_err(CliError::config)?;
            let cfg = BnnConfig { arch, likelihood: likelihood.clone() };
            Ok((ModelSpec::Bnn(cfg), *mll_samples))
        }
    }
}
