"""Provably correct neural decoders for sparse support recovery.

Train a small ReLU decoder that maps compressed measurements of an ``l``-sparse
signal to its support, then prove by branch-and-bound that it decodes *every*
admissible signal correctly.
"""
from .domain import (AffineObjective, InfeasibleSubdomain, SparseDomainSpec, Subdomain,
                     concretize_max, concretize_min, contains, pattern_count, project,
                     sample_corner, sample_in_subdomain, split, split_fixed_pattern)
from .model import (Decoder, DecoderParams, SensingSpec, decode_support, forward,
                    gaussian_sensing, init_params, load_model, measure, save_model)
from .bounds import BoundComputer, backward_bounds, interval_bounds, optimize_beta
from .bnb import (Budget, PropertySpec, VerificationOutcome, check_counterexample, root_domain,
                  verify_network, verify_property)
from .training import PGDConfig, TrainConfig, fuzz, pgd_attack, regularizer, train

__version__ = "0.1.0"
