"""Value of information and decision sensitivity from Monte Carlo samples."""

from .continuous import (
    augment,
    analyze_continuous,
    conditional_optimum,
    evpi_continuous,
    evpm_continuous,
    evppi_continuous,
    prior_optimum_continuous,
)
from .model import (
    DecisionSpace,
    FactorSpec,
    LinexUtility,
    Problem,
    QuadraticUtility,
    SampleTable,
    SchemaError,
    read_csv,
    simulate,
    working_example_continuous,
    working_example_discrete,
    write_csv,
)
from .prob import DistributionSpec, RandomSource
from .rare import RareEventProblem, conditional_failure_probability, evppi_rare, expected_utility_rare
from .smoothing import SmootherConfig
from .voi import (
    Estimate,
    analyze,
    decision_change_probability,
    evpi,
    evpm,
    evppi,
    relative_iv,
    sample_information_value,
    sobol_first_order,
)

__version__ = "0.1.0"
