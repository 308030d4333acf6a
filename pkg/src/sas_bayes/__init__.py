"""Bayesian estimation of sphere-model parameters from small-angle scattering data.

Synthetic datasets are drawn under Poisson counting noise, and the posterior
over model parameters is sampled with replica-exchange Monte Carlo.
"""
from .analysis import (credible_interval, fit_report, has_separated_peaks, make_histogram,
                       map_estimate, residual_table)
from .datagen import (Dataset, QGrid, count_nonzero, generate_dataset, make_q_grid,
                      read_dataset, write_dataset)
from .errors import (ChainFileError, ConfigError, DatasetError, DomainError,
                     InsufficientSamplesError, QuadratureError, SasBayesError)
from .forward import (MonodisperseParams, PolydisperseParams, QuadratureSpec, SphereConstants,
                      SphereModel, gaussian_size_pdf, mean_volume, monodisperse_intensity,
                      polydisperse_intensity, sphere_form_amplitude)
from .inference import (GammaPrior, PriorSpec, cost_E, log_factorial_sum, log_prior,
                        log_tempered_posterior)
from .sampler import (LadderSpec, PosteriorSamples, SamplerConfig, build_ladder, run_emc)

__version__ = "0.1.0"
