"""Fixed-time consensus of double-integrator agents on directed sampled topologies.

The settling time is fixed in advance: sample intervals of length
``6 T_s / (pi k)^2`` accumulate at ``T_s``, and on each interval every agent
follows the minimum-energy trajectory that lands it on the average of its
own and its neighbors' sampled states.
"""

from .config import ConfigError, ExperimentConfig, bundled_config, load_config, parse_config
from .control import (
    SampledSnapshot,
    SwarmState,
    affine_coefficients,
    block_transition,
    control_input,
    control_inputs,
    discrete_step,
    discrete_step_per_agent,
    interval_limit,
    propagate_interval,
    sample,
)
from .graph import (
    AveragingMatrix,
    ConsensusWeights,
    DirectedGraph,
    GraphDimensionError,
    NotSIAError,
    averaging_matrix,
    consensus_weights,
    has_directed_spanning_tree,
    laplacian,
    random_digraph,
    union_graph,
)
from .simulator import (
    ConsensusPrediction,
    ConsensusReport,
    JointConditionError,
    NumericalAbort,
    Tolerances,
    TopologySchedule,
    TrajectoryRecord,
    disagreement,
    predicted_consensus,
    run,
)
from .timeline import Interval, PartitionError, TimePartition, build_partition, locate_interval

__version__ = "0.1.0"
