"""Online kernel learning for path-loss map reconstruction."""

from kernelmaps.kernel import KernelParams, gauss, gram, kernel_row
from kernelmaps.apsm import ApsmLearner, ApsmModel, HyperslabSample
from kernelmaps.multikernel import MultiKernelModel, MultiKernelLearner
from kernelmaps.scenario import Measurement, PathLossGrid, ScenarioConfig

__all__ = [
    "ApsmLearner",
    "ApsmModel",
    "HyperslabSample",
    "KernelParams",
    "Measurement",
    "MultiKernelLearner",
    "MultiKernelModel",
    "PathLossGrid",
    "ScenarioConfig",
    "gauss",
    "gram",
    "kernel_row",
]

__version__ = "0.1.0"
