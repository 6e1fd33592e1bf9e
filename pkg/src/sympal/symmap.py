"""Symplectic maps of the torus given by a sequence of generating functions.

Each factor ``psi_j`` is defined implicitly by its generating function
``f_j(x', y)``::

    x' = x + d_y f_j(x', y)
    y' = y - d_x f_j(x', y)

and the map is ``phi = psi_{k-1} o ... o psi_0``.  Points are arrays
``z = (x_1..x_d, y_1..y_d)`` of the universal cover ``R^{2d}``.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .errors import (ConfigError, ConstraintViolation, DifferentialFailure,
                     NotPeriodic, RefineNeeded, SolveFailure)
from .maslov import SymplecticPath, rotation_increment
from .trigpoly import TWO_PI, TrigPolynomial

log = logging.getLogger(__name__)

CLOSURE_TOL = 1e-10
CERT_MAX_POINTS = 2**20

__all__ = [
    "FactorizedMap",
    "apply_factor",
    "differential_factor",
    "orbit",
    "monodromy",
    "floquet_multipliers",
    "canonical_path",
]


def _mixed_block_norm(f: TrigPolynomial, pts: np.ndarray) -> float:
    """Max spectral norm of ``d_x d_y f`` over the rows of ``pts``."""
    d = f.dim // 2
    if not len(f):
        return 0.0
    waves, coeffs, is_sin = f._waves, f._coeffs, f._is_sin
    outer = waves[:, :d, None] * waves[:, None, d:]
    best = 0.0
    for start in range(0, len(pts), 65536):
        arg = TWO_PI * (pts[start:start + 65536] @ waves.T)
        vals = -np.where(is_sin, np.sin(arg), np.cos(arg)) * coeffs
        hxy = TWO_PI**2 * np.tensordot(vals, outer, axes=(-1, 0))
        if d == 1:
            best = max(best, float(np.max(np.abs(hxy))))
        else:
            best = max(best, float(np.max(np.linalg.norm(hxy, ord=2, axis=(1, 2)))))
    return best


class FactorizedMap:
    """Ordered generating functions ``f_0, ..., f_{k-1}`` on ``T^{2d}``.

    Parameters
    ----------
    d : int
        Half-dimension.
    factors : sequence of TrigPolynomial
        Generating functions, each of ``dim == 2 * d``.
    label : str, optional
    cert_grid : int, optional
        Points per dimension of the grid used for the smallness certificate.
        The grid is coarsened so that it has at most ``2**20`` points.

    Raises
    ------
    ConstraintViolation
        If the certificate (max spectral norm of the mixed Hessian block) is
        not below 1.
    """

    def __init__(self, d: int, factors: Sequence[TrigPolynomial], label: str = "",
                 cert_grid: int = 64):
        d = int(d)
        factors = tuple(factors)
        if d < 1:
            raise ConfigError("d must be positive")
        if not factors:
            raise ConfigError("need at least one factor")
        for i, f in enumerate(factors):
            if not isinstance(f, TrigPolynomial):
                raise ConfigError(f"factor {i} is not a TrigPolynomial")
            if f.dim != 2 * d:
                raise ConfigError(f"factor {i} has dim {f.dim}, expected {2 * d}")
        if cert_grid < 2:
            raise ConfigError("cert_grid must be at least 2")
        self.d = d
        self.factors = factors
        self.label = label
        self.cert_grid = int(cert_grid)
        n = min(self.cert_grid, int(round(CERT_MAX_POINTS ** (1.0 / (2 * d)))))
        axis = np.arange(n) / n
        pts = np.stack(np.meshgrid(*([axis] * (2 * d)), indexing="ij"), axis=-1).reshape(-1, 2 * d)
        self.smallness_certificate = max(_mixed_block_norm(f, pts) for f in factors)
        if not self.smallness_certificate < 1.0:
            raise ConstraintViolation(
                f"smallness certificate {self.smallness_certificate:.4f} is not below 1"
            )

    @property
    def k(self) -> int:
        return len(self.factors)

    def __repr__(self) -> str:
        return f"FactorizedMap(d={self.d}, k={self.k}, label={self.label!r})"

    def __call__(self, z):
        for f in self.factors:
            z = apply_factor(f, z)
        return z

    def negated(self) -> "FactorizedMap":
        return FactorizedMap(self.d, [-f for f in self.factors], self.label + "-neg", self.cert_grid)

    def to_dict(self) -> dict:
        return {"d": self.d, "k": self.k, "label": self.label,
                "factors": [f.to_dict() for f in self.factors], "cert_grid": self.cert_grid}

    @classmethod
    def from_dict(cls, data: dict) -> "FactorizedMap":
        allowed = {"d", "k", "factors", "label", "cert_grid"}
        if not isinstance(data, dict):
            raise ConfigError("system config must be a JSON object")
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown system keys: {sorted(unknown)}")
        for key in ("d", "k", "factors"):
            if key not in data:
                raise ConfigError(f"system config is missing {key!r}")
        try:
            factors = [TrigPolynomial.from_dict(f) for f in data["factors"]]
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"bad factor: {exc}") from exc
        if len(factors) != data["k"]:
            raise ConfigError(f"k = {data['k']} but {len(factors)} factors given")
        return cls(data["d"], factors, data.get("label", ""), data.get("cert_grid", 64))


# ---------------------------------------------------------------------------
# single factor


def apply_factor(f: TrigPolynomial, z, scale: float = 1.0, tol: float = 1e-13,
                 max_iter: int = 200):
    """Image of ``z`` under the factor generated by ``scale * f``.

    Solves ``x' = x + scale * d_y f(x', y)`` by fixed-point iteration, with
    Newton steps once the contraction stalls.  Broadcasts over leading axes;
    ``scale`` may be an array matching them.

    Raises
    ------
    SolveFailure
        If the implicit equation is not solved to ``tol`` in ``max_iter``
        iterations.
    """
    z = np.asarray(z, dtype=float)
    d = f.dim // 2
    if z.shape[-1] != f.dim:
        raise ValueError(f"point has dimension {z.shape[-1]}, expected {f.dim}")
    x, y = z[..., :d], z[..., d:]
    sc = np.asarray(scale, dtype=float)[..., None]
    if not len(f) or not np.any(sc):
        return z.copy()

    def residual(xn):
        w = np.concatenate([xn, y], axis=-1)
        return xn - x - sc * f.gradient(w)[..., d:]

    xn = x + sc * f.gradient(z)[..., d:]
    res = residual(xn)
    prev = np.inf
    for it in range(max_iter):
        err = float(np.max(np.abs(res))) if res.size else 0.0
        if err < tol:
            break
        if it > 20 and err > 0.5 * prev:
            # slow contraction: Newton on F(x') = x' - x - s d_y f(x', y)
            w = np.concatenate([xn, y], axis=-1)
            jac = np.eye(d) - sc[..., None] * f.hessian(w)[..., d:, :d]
            xn = xn - np.linalg.solve(jac, res[..., None])[..., 0]
        else:
            xn = xn - res
        prev = err
        res = residual(xn)
    else:
        err = float(np.max(np.abs(res)))
        if err >= tol:
            raise SolveFailure("implicit generating-function equation did not converge", err)
    w = np.concatenate([xn, y], axis=-1)
    yn = y - sc * f.gradient(w)[..., :d]
    return np.concatenate([xn, yn], axis=-1)


def differential_factor(f: TrigPolynomial, z, x_next=None, scale: float = 1.0):
    """Differential of the factor generated by ``scale * f`` at ``z``.

    With ``H`` the Hessian of ``scale * f`` at ``(x', y)`` and
    ``A = (I - H_yx)^{-1}``::

        [[A,          A H_yy              ],
         [-H_xx A,    I - H_xy - H_xx A H_yy]]

    ``x_next`` is computed when not given.  Broadcasts over leading axes.
    """
    z = np.asarray(z, dtype=float)
    d = f.dim // 2
    if x_next is None:
        x_next = apply_factor(f, z, scale)[..., :d]
    w = np.concatenate([np.asarray(x_next, dtype=float), z[..., d:]], axis=-1)
    h = np.asarray(scale, dtype=float)[..., None, None] * f.hessian(w)
    hxx, hxy = h[..., :d, :d], h[..., :d, d:]
    hyx, hyy = h[..., d:, :d], h[..., d:, d:]
    eye = np.broadcast_to(np.eye(d), hxx.shape)
    lhs = eye - hyx
    if np.any(np.abs(np.linalg.det(lhs)) < 1e-12):
        raise DifferentialFailure("I - d_x d_y f is singular")
    a = np.linalg.solve(lhs, eye)
    a_hyy = a @ hyy
    top = np.concatenate([a, a_hyy], axis=-1)
    bottom = np.concatenate([-hxx @ a, eye - hxy - hxx @ a_hyy], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


# ---------------------------------------------------------------------------
# orbits


def orbit(fmap: FactorizedMap, z0, p: int = 1) -> np.ndarray:
    """Lifted points ``z_0, ..., z_{kp}`` with ``z_{j+1} = psi_{j mod k}(z_j)``."""
    pts = [np.asarray(z0, dtype=float)]
    for j in range(fmap.k * p):
        pts.append(apply_factor(fmap.factors[j % fmap.k], pts[-1]))
    return np.stack(pts)


def closure_defect(pts: np.ndarray) -> float:
    """Distance of ``z_{kp} - z_0`` from the integer lattice."""
    gap = pts[-1] - pts[0]
    return float(np.max(np.abs(gap - np.round(gap))))


def _periodic_orbit(fmap, z0, p, tol=CLOSURE_TOL):
    pts = orbit(fmap, z0, p)
    defect = closure_defect(pts)
    if defect > tol:
        raise NotPeriodic(f"orbit does not close after {p} iterations (defect {defect:.2e})")
    return pts


def _loop_points(fmap, z0, p, points, check=True):
    if points is not None:
        points = np.asarray(points, dtype=float)
        if points.shape != (fmap.k * p, 2 * fmap.d):
            raise ValueError(f"points must have shape {(fmap.k * p, 2 * fmap.d)}")
        return np.concatenate([points, points[:1]])
    return _periodic_orbit(fmap, z0, p) if check else orbit(fmap, z0, p)


def monodromy(fmap: FactorizedMap, z0, p: int = 1, check: bool = True,
              points=None) -> np.ndarray:
    """``d phi^p (z_0)`` as the ordered product of factor differentials.

    ``points`` (a closed lifted loop of ``kp`` points) replaces shooting from
    ``z0``; this is the accurate choice for strongly hyperbolic orbits.
    """
    pts = _loop_points(fmap, z0, p, points, check)
    m = np.eye(2 * fmap.d)
    for j in range(fmap.k * p):
        f = fmap.factors[j % fmap.k]
        m = differential_factor(f, pts[j], pts[j + 1][: fmap.d]) @ m
    return m


def floquet_multipliers(m) -> np.ndarray:
    """Eigenvalues of ``m`` sorted by argument, then modulus."""
    eig = np.linalg.eigvals(np.asarray(m, dtype=float))
    eig = np.where(np.abs(eig.imag) < 1e-14, eig.real + 0j, eig)
    order = np.lexsort((np.abs(eig), np.round(np.angle(eig), 12)))
    return eig[order]


# ---------------------------------------------------------------------------
# canonical path


def _path_samples(fmap, pts, samples_per_factor):
    n_slots = len(pts) - 1
    s = np.linspace(0.0, 1.0, samples_per_factor + 1)
    d2 = 2 * fmap.d
    times, mats = [np.zeros(1)], [np.eye(d2)[None]]
    running = np.eye(d2)
    for i in range(n_slots):
        f = fmap.factors[i % fmap.k]
        zs = np.broadcast_to(pts[i], (len(s) - 1, d2))
        diffs = differential_factor(f, zs, scale=s[1:])
        times.append((i + s[1:]) / n_slots)
        mats.append(diffs @ running)
        running = mats[-1][-1]
    return np.concatenate(times), np.concatenate(mats)


def canonical_path(fmap: FactorizedMap, z0, p: int = 1, samples_per_factor: int = 64,
                   adaptive: bool = True, rtol: float = 1e-6,
                   max_samples_per_factor: int = 2**14, points=None) -> SymplecticPath:
    """Path from ``I`` to ``d phi^p(z_0)`` through scaled generating functions.

    On the ``i``-th of ``kp`` equal time slots the path is ``s -> D_i(s) P_i``
    where ``D_i(s)`` is the differential at ``z_i`` of the factor generated by
    ``s * f_{i mod k}`` and ``P_i`` the product of the previous full factors.
    With ``adaptive`` the sampling is doubled until the average Maslov index
    changes by less than ``rtol``.  ``points`` has the same meaning as in
    :func:`monodromy`.
    """
    pts = _loop_points(fmap, z0, p, points)
    spf = int(samples_per_factor)
    path, prev = None, None
    while True:
        try:
            path = SymplecticPath.from_samples(*_path_samples(fmap, pts, spf))
        except RefineNeeded:
            path = None
        if not adaptive and path is not None:
            return path
        if path is not None:
            cur = rotation_increment(path)
            if prev is not None and abs(cur - prev) < rtol:
                return path
            prev = cur
        if 2 * spf > max_samples_per_factor:
            if path is None:
                raise RefineNeeded("canonical path sampling cap reached")
            log.warning("canonical path refinement stopped at %d samples per factor", spf)
            return path
        spf *= 2
