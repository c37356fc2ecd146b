from .diagnostics import autocorrelation, effective_sample_size
from .model import (
    BODIES,
    LOGNORMAL,
    POWERLAW,
    SIDES,
    ForceData,
    ForceParams,
    LatentCache,
    Model,
    ModelParams,
    Posterior,
    force_log_likelihood,
    log_posterior,
    log_prior,
)
from .sampler import (
    ChainState,
    McmcConfig,
    PosteriorSample,
    Sampler,
    TuneResult,
    chain_ess,
    conservative_cov,
    initial_state,
    mh_step,
    pilot_tune,
    propose_latents,
    propose_params,
    proposal_log_density,
    run_chain,
)
from .storage import read_sample, write_sample
