"""Zero-delay quantization of linear Markov sources.

Simulation of the source, convex-cell quantizer design, particle filtering
of the coding-driven belief process, dynamic programming over a finite
Wasserstein cover (discounted and vanishing-discount average cost), and a
verification suite for the method's closed-form bounds.
"""

from .belief import (Belief, CoupledPair, coupling_gap, filter_update,
                     load_particles_csv, moments, nearest_representative,
                     save_particles_csv, simulate_coupled, sliced_wasserstein2,
                     symbol_probs, transport_plan, wasserstein2)
from .coding import Codebook, CostReport, evaluate_policy, optimal_decoder, \
    stage_cost
from .errors import (BadCovariance, BudgetExceeded, ConfigError, EmptyBeliefs,
                     ImpossibleSymbol, ModelMismatch, NonFinite, NotConverged,
                     UnstableSource, ZdqError)
from .planner import (AverageCostSolution, BeliefCover, FrozenKernel,
                      StationaryPolicy, ValueTable, acoe_residual,
                      bellman_backup, build_cover, design_policy,
                      freeze_kernel, value_iteration, vanishing_discount)
from .quantizer import (ConvexQuantizer, convexity_probe,
                        design_action_library, lloyd_step)
from .source import (InitialDistribution, NoiseModel, SourceModel,
                     max_sq_singular_value, second_moment_bound, simulate,
                     simulate_batch, step, validate)
from .verify import (BoundCheck, check_discounted_bound, check_equicontinuity,
                     check_rate, check_receiver_convergence,
                     check_second_moment, check_value_table_cap,
                     discounted_bound, equicontinuity_bound, g1_bound,
                     g_bound, k1_constant, k2_constant, rate_constant)

__version__ = "0.1.0"
