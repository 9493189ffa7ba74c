"""Two-sided moment and tail bounds for polynomial chaoses in log-concave variables."""

from .fixtures import ensemble, make_fixture, symmetric_ensemble, tetrahedral_parts
from .harness import (MCConfig, run_decouple, run_gaussian_remark, run_oracle, run_tail,
                      run_two_sided)
from .montecarlo import (ChaosSpec, MomentEstimate, decouple_compare, estimate_moment,
                         estimate_moments, estimate_tail, sample_chaos, tetrahedral_eval_and_split)
from .norms import (NormValue, SolverError, bound_total, exponential_closed_form, injective_norm,
                    partition_norm, waterfill_sup)
from .oracle import brute_force_norm, brute_force_sup
from .partitions import Partition, enumerate_partitions, induced_partition, q_family
from .tails import (DistributionMatrix, TailFunction, exponential, gaussian, normalize, parse_dist,
                    power, tabulated)
from .tensor import CoefficientTensor, contract, slice_norms, symmetrize_and_kill_diagonal

__version__ = "0.1.0"
