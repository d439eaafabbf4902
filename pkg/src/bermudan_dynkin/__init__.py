"""Nash equilibria of non-zero-sum Bermudan Dynkin games on finite event trees.

Each agent assesses its pay-off with its own, possibly non-linear, evaluation
operator. Equilibria are built by alternating best responses and certified
by brute-force enumeration of strategies.
"""

from __future__ import annotations

from .errors import (
    DynkinError,
    TreeError,
    DuplicateNodeId,
    ProbabilitySumViolation,
    DanglingChild,
    LeafAtWrongStage,
    NonIncreasingDates,
    UnknownNode,
    StageOutOfRange,
    ScheduleError,
    InvalidStoppingTime,
    SchemaMismatch,
    NotMeasurable,
    EnumerationLimitExceeded,
    OrderViolation,
    MissingValues,
    BadGamma,
    BadPrior,
    MissingPayoff,
    NoConvergence,
    InstanceParseError,
    InstanceValidationError,
    BadDimensions,
)
from .evaluation import (
    AxiomReport,
    EvaluationOperator,
    axiom_check,
    evaluate_root,
    make_custom,
    make_entropic,
    make_linear,
    make_multiprior,
    rho,
)
from .game import (
    EquilibriumResult,
    GameConfig,
    GameInstance,
    assess_J1,
    assess_J2,
    best_response,
    best_response_payoff,
    payoff_I1,
    payoff_I2,
    solve,
)
from .instance import gen_instance, instance_to_dict, load_instance, parse_instance
from .lattice import AdaptedProcess, EventTree, build_tree
from .stopping import (
    ValueFamily,
    brute_force_value,
    localized_value,
    minimal_optimal,
    value_family,
)
from .strategy import (
    BermudanStoppingTime,
    ExerciseSchedule,
    at_horizon,
    at_start,
    canonical_partition,
    concatenate,
    count_theta,
    enumerate_theta,
    first_hitting,
    join,
    leq,
    meet,
    reconstruct,
)
from .verify import all_nash_pairs, nash_check, trace_invariants

__version__ = "0.1.0"
