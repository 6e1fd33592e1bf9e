"""Reference systems used by the tests, demos and ``sympal verify``.

``sys_a``  identity map (d=1, k=1, f = 0)
``sys_b``  totally degenerate maximum, ``f = -eps (sin^4 pi x + sin^4 pi y)``
``sys_c``  ``f = eps (cos 2 pi x + cos 2 pi y)``
``sys_d``  d=2, k=2 composite of two seeded random trig polynomials
"""

from __future__ import annotations

import itertools

import numpy as np

from .symmap import FactorizedMap
from .trigpoly import TrigPolynomial

__all__ = ["sys_a", "sys_b", "sys_c", "sys_d", "quartic_bump", "cosine_pair", "SYSTEMS"]


def quartic_bump(eps: float = 0.01) -> TrigPolynomial:
    """``-eps (sin^4 pi x + sin^4 pi y)`` in the cosine basis.

    ``sin^4 t = 3/8 - cos(2t)/2 + cos(4t)/8``.
    """
    terms = [(-0.75 * eps, (0, 0), "cos")]
    for m in ((1, 0), (0, 1)):
        terms.append((0.5 * eps, m, "cos"))
        terms.append((-0.125 * eps, tuple(2 * v for v in m), "cos"))
    return TrigPolynomial(2, terms)


def cosine_pair(eps: float = 0.01) -> TrigPolynomial:
    return TrigPolynomial(2, [(eps, (1, 0), "cos"), (eps, (0, 1), "cos")])


def sys_a() -> FactorizedMap:
    return FactorizedMap(1, [TrigPolynomial.zero(2)], "SYS-A")


def sys_b(eps: float = 0.01) -> FactorizedMap:
    return FactorizedMap(1, [quartic_bump(eps)], "SYS-B")


def sys_c(eps: float = 0.01) -> FactorizedMap:
    return FactorizedMap(1, [cosine_pair(eps)], "SYS-C")


def sys_d(seed: int = 7, n_coupling: int = 2, scale: float = 0.004) -> FactorizedMap:
    """Two random factors on ``T^4``.

    Each factor has a random-amplitude cosine in every coordinate (so the
    critical points are generically nondegenerate) plus ``n_coupling``
    smaller terms with random wavevectors in {-1, 0, 1}^4.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(4,)))
    waves = [m for m in itertools.product((-1, 0, 1), repeat=4)
             if sum(map(abs, m)) > 1 and next(v for v in m if v) > 0]
    factors = []
    for _ in range(2):
        terms = [(scale * rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0]), tuple(np.eye(4, dtype=int)[i]), "cos")
                 for i in range(4)]
        for i in rng.choice(len(waves), size=n_coupling, replace=False):
            terms.append((0.3 * scale * rng.uniform(-1.0, 1.0), waves[i],
                          "cos" if rng.random() < 0.5 else "sin"))
        factors.append(TrigPolynomial(4, terms))
    return FactorizedMap(2, factors, "SYS-D")


SYSTEMS = {"sys_a": sys_a, "sys_b": sys_b, "sys_c": sys_c, "sys_d": sys_d}
