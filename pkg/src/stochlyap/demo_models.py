"""Built-in models behind the ``repro-example1`` / ``repro-example2`` commands.

Example 1 is a three-state system whose entries mix normal and uniform
parameters (including degree-2 terms), used to compare the certified
minimal decay rate against an ensemble estimate.  Example 2 is an
unstable continuous-time plant sampled at exponentially distributed
random intervals, used to synthesize a stabilizing sampled-data gain.
"""

from __future__ import annotations

import numpy as np

from .dist import DistributionSpec, Exponential, Normal, Uniform
from .sampled import ContinuousPlant
from .sysmodel import PolyEntry, PolyForm, SampledDataForm


def example1_model() -> PolyForm:
    """Three-state polynomial-entry system with N(0, 0.2^2) and U(-0.5, 0.5) drivers."""
    dist = DistributionSpec((Normal(0.0, 0.2), Uniform(-0.5, 0.5)))

    def entry(*terms):
        return PolyEntry(tuple(terms))

    c = PolyEntry.constant
    grid = (
        (entry((0.3, (0, 0)), (1.0, (0, 1))), entry((0.8, (0, 0)), (1.0, (1, 0))), c(-0.5, 2)),
        (c(0.5, 2), entry((0.3, (0, 0)), (1.0, (1, 1))), entry((-1.2, (0, 0)), (1.0, (2, 0)))),
        (c(-0.2, 2), c(0.8, 2), c(0.6, 2)),
    )
    return PolyForm(grid, dist)


def example2_model() -> SampledDataForm:
    """Unstable third-order plant under random sampling, h = 0.01 + Exp(20)."""
    plant = ContinuousPlant(
        np.array([[-4.0, 3.0, -8.0], [3.0, 7.0, -6.0], [0.0, 8.0, -2.0]]),
        np.array([[0.0], [0.0], [1.0]]),
    )
    return SampledDataForm(plant, DistributionSpec((Exponential(20.0),)), offset=0.01)
