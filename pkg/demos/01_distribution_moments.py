"""
Parameter distributions: seeded sampling and exact mixed moments
================================================================

The parameter process behind a stochastic system is a product of
independent scalar distributions.  Everything downstream only ever needs
mixed moments up to degree 4, and those are available in closed form.
"""

import numpy as np

from stochlyap import DistributionSpec, Exponential, Normal, Uniform, make_stream

spec = DistributionSpec((
    Normal(0.0, 0.2),       # xi_1
    Uniform(-0.5, 0.5),     # xi_2
    Exponential(20.0),      # xi_3, mean 1/20
))

print("exact moments E[xi^alpha]:")
for alpha in [(2, 0, 0), (0, 2, 0), (0, 0, 1), (2, 2, 0), (4, 0, 0), (1, 1, 1)]:
    print(f"  alpha={alpha}: {spec.moment(alpha):.10g}")

# Sampling is fully reproducible: streams are counter-based (Philox) and
# substreams are derived as seed XOR index, so ensembles are portable.
rng = make_stream(42)
draws = spec.sample_block(rng, 200_000)
print("\nMonte-Carlo check on 2e5 seeded draws:")
for alpha in [(2, 0, 0), (0, 2, 0), (2, 2, 0)]:
    emp = np.prod(draws ** np.array(alpha), axis=1).mean()
    print(f"  alpha={alpha}: empirical {emp:.6f}  vs exact {spec.moment(alpha):.6f}")

print("\nsame seed, same calls -> bit-identical draws:",
      np.array_equal(spec.sample_block(make_stream(42), 5),
                     spec.sample_block(make_stream(42), 5)))
