"""Remove a local-time term with a piecewise transform.

For nu = 0.5 delta_0 the transform F is piecewise linear with slopes 1 and
1/3. Pushing sigma = 1 | 3 through it gives a constant diffusion; the drift
keeps its kink, which is printed on a few points.
"""
import numpy as np

from rsdecheck.model import CoefficientSpec, Piecewise, SignedMeasure, build_transform, transform_coefficients

tr = build_transform(SignedMeasure.dirac(0.5))
print("m =", tr.m, " M =", tr.M)
sde = CoefficientSpec(Piecewise.from_pieces([(-np.inf, -1.0, 0.0), (0.0, -3.0, 0.0)]),
                      Piecewise.from_pieces([(-np.inf, 0.0, 1.0), (0.0, 0.0, 3.0)]))
tb = transform_coefficients(sde, tr)
y = np.array([-2.0, -0.5, 0.5, 2.0])[:, None]
print("y          ", y[:, 0])
print("F^-1(y)    ", tr.F_inverse(y[:, 0]))
print("sigma_bar  ", tb.sigma(y)[:, 0, 0])
print("b_bar      ", tb.b(y)[:, 0])
