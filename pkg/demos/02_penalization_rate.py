"""Penalized versus projected Brownian motion on [-1, 1].

The sup-distance between the penalized path and the reflected one shrinks
slowly as eps decreases. Printing eps, the median distance and the ratio to
sqrt(eps log(1/eps)) shows the latter staying roughly flat.
"""
import math

from rsdecheck import CoefficientSpec, ConvexDomain
from rsdecheck.model import Affine, Constant
from rsdecheck.verify import check_penalization

bm = CoefficientSpec(Affine([[0.0]], [0.0]), Constant(1.0), label="BM")
ladder = (0.1, 0.05, 0.025, 0.0125, 0.00625)
rep = check_penalization(bm, ConvexDomain.interval(-1.0, 1.0), [0.9], eps_ladder=ladder,
                         n_paths=500, T=1.0, seed=0)
print(f"{'eps':>8} {'median':>8} {'ratio':>8}")
for eps, med in zip(ladder, rep.metadata["medians_joint"]):
    print(f"{eps:8.5f} {med:8.4f} {med / math.sqrt(eps * math.log(1 / eps)):8.3f}")
print("monotone decrease:", all(r.passed for r in rep.rows[:-1]), "| threshold row:", rep.rows[-1].passed)
