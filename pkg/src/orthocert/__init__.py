"""Probabilistic robustness certification for Bayesian neural networks.

Samples weight-space boxes from a diagonal-Gaussian posterior, expands them
while a sound verifier accepts them, and integrates the posterior mass of
the certified union to lower-bound the probability that the network meets
its robustness specification.
"""

from .bounds import (BoundBox, SAFE, UNKNOWN, VerifierConfig, ibp_bounds,
                     input_box, lbp_bounds, verify_box)
from .certify import (CertifyParams, certify_gie, certify_pie,
                      certify_pure_sampling, draw_rng, expand_draw,
                      run_budgeted_comparison)
from .evaluate import (AttackResult, ablate_rho, build_report,
                       empirical_psafe, iteration_stats, pgd_attack,
                       timing_report)
from .gradient import (DimPartition, ExpansionVectors, backward,
                       expansion_vectors, grad_margin, partition_dims)
from .mass import (DEFAULT_IE_CAP, MassResult, UnionSizeError, box_mass,
                   greedy_disjoint_mass, legacy_merged_mass, union_mass_exact,
                   union_mass_mc)
from .network import (Certificate, DrawRecord, LayerSpec, NetworkDef,
                      NetworkFormatError, PosteriorParams, RobustnessSpec,
                      WeightBox, box_from_center, forward, load_network,
                      make_classification_spec, sample_weights, save_network)

__version__ = "0.1.0"
