"""Poisson-series algebra, Birkhoff normal forms and diffusion experiments."""

from .scalars import Backend, GaussianRational
from .series import (Monomial, PoissonSeries, action_series, evaluate,
                     from_terms, lie_transform, monomial, poisson_bracket,
                     series_combine, series_from_dict, series_to_dict,
                     term_series, zero_series)
from .frequencies import FrequencyVector, frequency_pairing, split_resonant
from .normalform import (NormalFormResult, bnf_coefficient, divergence_probe,
                         normalize_to_order, russmann_rank)
from .sequences import ResonanceSequence, ScaleProfile, resonance_sequence
from .models import (ModelSpec, build_model, closed_form_coefficients,
                     generator_chi, saddle_geometry, saddle_series)
from .flows import IntegratorOptions, Trajectory, integrate
from .experiments import (coupled_escape, delta_experiment, gronwall_suite,
                          resonant_escape, rotating_frame_compare)

__version__ = "0.1.0"
