"""Sum-product networks trained under probabilistic and causal constraints."""

from .circuit import (
    Circuit,
    CircuitError,
    DegenerateCircuitError,
    InvalidCircuitError,
    Node,
    ParseError,
    ValidationReport,
    VariableId,
    ZeroEvidenceError,
    conditional,
    deserialize,
    evaluate,
    full_joint_circuit,
    gradient,
    interventional,
    leaf,
    marginal,
    mixture_circuit,
    product,
    serialize,
    subcircuit_value_and_grad,
    sum_node,
    validate,
)
from .constraints import (
    ConditionalEquality,
    ConstraintError,
    Independence,
    InterventionalEquality,
    ResidualSystem,
    ResidualTerm,
    compile_conditional,
    compile_constraint,
    compile_constraints,
    compile_independence,
    compile_interventional,
    degree_probe,
    residual_degrees,
    residual_jacobian,
    residual_values,
)
from .dataio import Dataset, load_csv, log_likelihood, parse_constraints, save_csv
from .optimizer import TrainConfig, TrainReport, fit, fit_hard, fit_mle, fit_soft, project_simplex
from .oracle import (
    JointTable,
    check_constraint,
    enumerate_joint,
    sample_dataset,
    table_conditional,
    table_do,
    table_marginal,
)

__version__ = "0.1.0"
