"""Forward and inverse spectral problems for first-order integro-differential
operators ``i y' + int_0^x R(x) V(t) y(t) dt = lambda y`` on ``[0, pi]``."""

from .chareq import (DEFAULT_BOX, Eigenvalue, SearchBox, delta, delta0, eq12_residual,
                     find_eigenvalues, identity_residual, winding)
from .errors import SpectralError
from .forward import EtaTrace, PhiTrace, phi_asymptotic_report, reflect_theta, solve_eta, solve_phi
from .grid import ComplexSamples, Grid, Problem, integrate, make_grid, value_at
from .inverse import (BasisParams, RecoveryOptions, RecoveryReport, example2_check, recover,
                      residual, synth, uniqueness_probe)
from .specdata import FunctionChain, SpectralData, chains, flatten_index, spectral_data, weights

__version__ = "0.1.0"
