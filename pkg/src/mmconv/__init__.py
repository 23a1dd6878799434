"""Free-space convolution potentials by moment matching on uniform grids."""

from .grid import FieldSamples, Grid, make_grid, sample
from .kernels import parse_kernel
from .solvers import Method, SolveRequest, Solution, solve

__all__ = ["FieldSamples", "Grid", "make_grid", "sample", "parse_kernel",
           "Method", "SolveRequest", "Solution", "solve"]
__version__ = "0.1.0"
