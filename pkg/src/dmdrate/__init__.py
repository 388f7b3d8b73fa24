"""Non-Markovian rate kernels from a hierarchical reference propagator, with
DMD extrapolation and generalized rate / master equation solvers."""

from ._backend import NAME as backend
from .bath import BathExpansion, SpectralDensity, correlation_expansion
from .dmd import DmdModel, SnapshotSet, fit, predict, predict_steps
from .errors import (CapacityError, ConfigError, DmdRateError, GridError, NumericalError)
from .gme import solve_gme, solve_population, solve_population_floquet
from .kernels import (FloquetKernelSet, KernelSeries, ProjectorKind, extract_floquet_kernels,
                      extract_kernel)
from .numerics import RankPolicy
from .propagator import EtHamiltonian, build_hierarchy, propagate

__version__ = "0.1.0"
