//! Next-token distributions, canonical sampling and sequence-level KL divergence.

mod distribution;
mod kl;
mod sampler;
mod source;

pub use distribution::{
    allowed_after, canonical_mass, canonicalize_distribution, NextTokenDistribution, MASS_TOLERANCE,
};
pub use kl::{canonicalization_matters, decode_pushforward, kl_divergence, sequence_distribution};
pub use sampler::{
    constrained_argmax, gumbel_max_step, gumbel_noise, generate, rejection_step, standard_step, step_seed,
    Generation, SampleTrace, SamplingMode, DEFAULT_MAX_DRAWS,
};
pub use source::{load_source, BigramLm, DistributionSource, PerturbedSource, TableSource, DEFAULT_SMOOTHING};
