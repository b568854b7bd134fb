"""Conservative state-space systems, from algebra to thermal noise.

The package studies linear systems xdot = Jx + Bu, y = B^T x with
skew-symmetric J, which store every joule the ports inject.  Around
that core it provides: verdicts for losslessness, dissipativity,
reciprocity, and time reversibility (`statespace`); synthesis of
lossless oscillator banks that imitate memoryless gains and dissipative
kernels to a prescribed error (`approx_linear`); energy-supply wrappers
that embed nonlinear dissipative dynamics in a conservative shell
(`approx_nonlinear`); thermal ensembles, fluctuation checks, and
Langevin sampling (`thermal`); and probe back action with the accuracy
limits it imposes on estimating a port potential (`measurement`).

Everything numerical is seeded and thread-invariant.  The `lossless`
command line (see `lossless.cli`) runs each pipeline as a reproducible
experiment with CSV outputs.
"""

from .approx_linear import *
from .approx_nonlinear import *
from .measurement import *
from .statespace import *
from .thermal import *

from . import approx_linear, approx_nonlinear, measurement, statespace, thermal

__version__ = "0.1.0"

__all__ = sorted(
    set(statespace.__all__)
    | set(approx_linear.__all__)
    | set(approx_nonlinear.__all__)
    | set(thermal.__all__)
    | set(measurement.__all__)
) + ["__version__"]
