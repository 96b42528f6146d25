"""Generalized maximum mean discrepancy estimators over RKHS, neuron, and flow
test classes, with particle-system and mean-field-game experiment tooling."""

from .discrepancy import (
    GmmdResult,
    OptimizerConfig,
    barron_gmmd,
    barron_gmmd_grid_oracle,
    barron_gmmd_vs_gaussian,
    expected_rate_bound,
    flow_gmmd_lower,
    mmd_rkhs,
    mmd_vs_gaussian,
    rademacher_bound,
    rademacher_mc,
)
from .measures import DistributionSpec, EmpiricalMeasure, RngSeed, moment, sample
from .test_classes import (
    FlowLayer,
    FlowRep,
    KernelSpec,
    LipschitzConstants,
    NeuronParams,
    TestClassSpec,
    flow_forward,
    flow_norm_bound,
    kernel_constants,
    kernel_eval,
    neuron_eval,
)
from .transport import Density1D, relative_entropy_1d, wasserstein1_1d, wasserstein2_exact

__version__ = "0.1.0"

__all__ = [
    "DistributionSpec",
    "EmpiricalMeasure",
    "RngSeed",
    "sample",
    "moment",
    "KernelSpec",
    "LipschitzConstants",
    "NeuronParams",
    "FlowLayer",
    "FlowRep",
    "TestClassSpec",
    "kernel_eval",
    "kernel_constants",
    "neuron_eval",
    "flow_forward",
    "flow_norm_bound",
    "GmmdResult",
    "OptimizerConfig",
    "mmd_rkhs",
    "mmd_vs_gaussian",
    "barron_gmmd",
    "barron_gmmd_vs_gaussian",
    "barron_gmmd_grid_oracle",
    "flow_gmmd_lower",
    "rademacher_mc",
    "rademacher_bound",
    "expected_rate_bound",
    "Density1D",
    "wasserstein1_1d",
    "wasserstein2_exact",
    "relative_entropy_1d",
    "__version__",
]
