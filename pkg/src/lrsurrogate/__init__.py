"""Truncated and surrogate generators for open quantum systems with a-priori error bounds."""

__version__ = "0.1.0"

from .errors import (CatalogError, EvaluationError, NumericError, ResolutionUnreachable, ResourceError,
                     ValidationError)
from .model import HamiltonianSpec, InteractionTerm, SiteKind, SiteSpec, chain_spec, load_spec, spec_from_dict
from .graph import (CouplingGraph, build_graph, coupling_norm, graph_distance, max_connectivity, path_weight,
                    rescale_couplings, system_bath_weight)
from .operators import (DenseOperator, assemble_operator, evolve_heisenberg, spectral_norm, trotter_plan,
                        trotter_steps, truncation_error)
from .truncation import (LRBoundParams, layer_partition, lr_error_bound, lr_velocity, min_layers,
                         nested_commutator_check, remainder_bound_exact, renormalization_flow,
                         truncate_generator)
from .continuum import (ContinuumBathSpec, Coupling, Partition, build_surrogate, make_partition,
                        required_resolution, riemann_remainder, total_bound)
from .harness import ExperimentConfig, VerificationReport, run_experiment, verify_bounds
