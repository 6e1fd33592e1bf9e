"""Discrete symplectic action on lifted loops and its critical points.

For a loop ``z = (z_0, ..., z_{N-1})``, ``N = kp``, with ``z_N = z_0``::

    A(z) = sum_j <y_j, x_j - x_{j+1}> + f_{j mod k}(x_{j+1}, y_j)

Critical points are exactly the lifted contractible p-periodic orbits of
``phi``.  The flat coordinate vector is ``(x_0, y_0, x_1, y_1, ...)``.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvariantMismatch
from .linalg import kernel_dim
from .maslov import average_maslov, maslov_index
from .symmap import FactorizedMap, apply_factor, canonical_path, differential_factor, floquet_multipliers, monodromy

log = logging.getLogger(__name__)

TOL_SCALE = 1e-7
TOL_FLOOR = 1e-14
ROOT_TOL = 1e-8

__all__ = [
    "LoopConfiguration",
    "OrbitRecord",
    "SearchConfig",
    "SearchResult",
    "action_value",
    "action_gradient",
    "action_hessian",
    "morse_data",
    "default_tol_null",
    "long_multiplicity",
    "nullity_jump_expected",
    "make_record",
    "find_critical_points",
    "dedup_orbits",
    "loops_equivalent",
]


# ---------------------------------------------------------------------------
# loops


@dataclass(frozen=True)
class LoopConfiguration:
    """Lifted discrete loop of ``k * p`` points in ``R^{2d}``."""

    d: int
    k: int
    p: int
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2 * self.d)
        if len(pts) != self.k * self.p:
            raise ValueError(f"expected {self.k * self.p} points, got {len(pts)}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def constant(cls, z, d: int, k: int, p: int) -> "LoopConfiguration":
        return cls(d, k, p, np.tile(np.asarray(z, dtype=float), (k * p, 1)))

    @property
    def n_points(self) -> int:
        return self.k * self.p

    def flat(self) -> np.ndarray:
        return self.points.reshape(-1)

    def with_points(self, pts) -> "LoopConfiguration":
        return replace(self, points=np.asarray(pts, dtype=float).reshape(-1, 2 * self.d))

    def canonical(self) -> "LoopConfiguration":
        """Deck representative with ``z_0`` reduced to ``[0, 1)``."""
        shift = np.floor(np.round(self.points[0], 9))
        return self.with_points(self.points - shift)

    def shifted(self, m: int) -> "LoopConfiguration":
        """Cyclic shift by ``m`` blocks of ``k`` points."""
        return self.with_points(np.roll(self.points, -self.k * m, axis=0))

    def iterate(self, n: int) -> "LoopConfiguration":
        return LoopConfiguration(self.d, self.k, self.p * n, np.tile(self.points, (n, 1)))

    def to_dict(self) -> dict:
        return {"d": self.d, "k": self.k, "p": self.p, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "LoopConfiguration":
        return cls(int(data["d"]), int(data["k"]), int(data["p"]), np.asarray(data["points"], dtype=float))


def _deck_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = b - a
    offset = np.round(diff[0])
    return float(np.max(np.abs(diff - offset)))


def loop_distance(a: LoopConfiguration, b: LoopConfiguration) -> float:
    """Smallest sup-distance between ``a`` and shift/deck images of ``b``."""
    if (a.d, a.k, a.p) != (b.d, b.k, b.p):
        return np.inf
    return min(_deck_distance(a.points, b.shifted(m).points) for m in range(a.p))


def loops_equivalent(a: LoopConfiguration, b: LoopConfiguration, tol: float = 1e-5) -> bool:
    return loop_distance(a, b) < tol


def canonical_representative(loop: LoopConfiguration) -> LoopConfiguration:
    """Lexicographically smallest point list over shifts, after deck reduction."""
    best, best_key = None, None
    for m in range(loop.p):
        cand = loop.shifted(m).canonical()
        key = tuple(np.round(cand.flat(), 9) + 0.0)
        if best_key is None or key < best_key:
            best, best_key = cand, key
    return best


def orbit_key(loop: LoopConfiguration) -> str:
    """Readable key, invariant under shifts and deck translations.

    The key of ``z^{xn}`` starts with the key of ``z``.
    """
    rep = canonical_representative(loop)
    return ";".join(",".join(f"{round(v, 6) + 0.0:.6f}" for v in pt) for pt in rep.points)


def short_key(key: str) -> str:
    return hashlib.sha1(key.encode()).hexdigest()[:12]


def basic_period(loop: LoopConfiguration, tol: float = 1e-5) -> int:
    """Smallest ``q | p`` with the loop invariant under the ``kq`` shift."""
    for q in range(1, loop.p + 1):
        if loop.p % q == 0 and _deck_distance(loop.points, loop.shifted(q).points) < tol:
            return q
    return loop.p


# ---------------------------------------------------------------------------
# action and derivatives


def _split(fmap: FactorizedMap, loop):
    pts = loop.points if isinstance(loop, LoopConfiguration) else np.asarray(loop, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 * fmap.d or len(pts) % fmap.k:
        raise ValueError("loop dimensions do not match the map")
    d = fmap.d
    x, y = pts[:, :d], pts[:, d:]
    x_next = np.roll(x, -1, axis=0)
    w = np.concatenate([x_next, y], axis=1)  # f_j evaluated at (x_{j+1}, y_j)
    return pts, x, y, x_next, w


def _by_factor(fmap, w, method):
    n = len(w)
    out = None
    for i, f in enumerate(fmap.factors):
        idx = np.arange(i, n, fmap.k)
        vals = getattr(f, method)(w[idx])
        if out is None:
            out = np.zeros((n,) + vals.shape[1:])
        out[idx] = vals
    return out


def action_value(fmap: FactorizedMap, loop) -> float:
    _, x, y, x_next, w = _split(fmap, loop)
    return float(np.sum(y * (x - x_next)) + np.sum(_by_factor(fmap, w, "evaluate")))


def action_gradient(fmap: FactorizedMap, loop) -> np.ndarray:
    pts, x, y, x_next, w = _split(fmap, loop)
    d = fmap.d
    g = _by_factor(fmap, w, "gradient")
    gx = y - np.roll(y, 1, axis=0) + np.roll(g[:, :d], 1, axis=0)
    gy = x - x_next + g[:, d:]
    return np.concatenate([gx, gy], axis=1).reshape(-1)


def action_hessian(fmap: FactorizedMap, loop) -> np.ndarray:
    pts, x, y, x_next, w = _split(fmap, loop)
    d, n = fmap.d, len(pts)
    hs = _by_factor(fmap, w, "hessian")
    size = 2 * d * n
    h = np.zeros((size, size))
    eye = np.eye(d)

    def xs(j):
        j %= n
        return slice(2 * d * j, 2 * d * j + d)

    def ys(j):
        j %= n
        return slice(2 * d * j + d, 2 * d * (j + 1))

    for j in range(n):
        hj = hs[j]
        # coupling <y_j, x_j - x_{j+1}>
        h[ys(j), xs(j)] += eye
        h[xs(j), ys(j)] += eye
        h[ys(j), xs(j + 1)] -= eye
        h[xs(j + 1), ys(j)] -= eye
        # f_j(x_{j+1}, y_j)
        h[xs(j + 1), xs(j + 1)] += hj[:d, :d]
        h[xs(j + 1), ys(j)] += hj[:d, d:]
        h[ys(j), xs(j + 1)] += hj[d:, :d]
        h[ys(j), ys(j)] += hj[d:, d:]
    return h


def default_tol_null(h: np.ndarray) -> float:
    """``1e-7`` times the spectral radius, with the radius floored at 1."""
    radius = float(np.max(np.abs(np.linalg.eigvalsh(h)))) if h.size else 0.0
    return max(TOL_SCALE * max(radius, 1.0), TOL_FLOOR)


def morse_data(h: np.ndarray, tol_null: float | None = None) -> tuple[int, int]:
    """(Morse index, nullity) of a symmetric matrix."""
    h = np.asarray(h, dtype=float)
    if tol_null is None:
        tol_null = default_tol_null(h)
    ev = np.linalg.eigvalsh(0.5 * (h + h.T))
    return int(np.sum(ev < -tol_null)), int(np.sum(np.abs(ev) <= tol_null))


# ---------------------------------------------------------------------------
# iteration and roots of unity


def long_multiplicity(m: np.ndarray, n: int, tol: float = 1e-7) -> int:
    """Sum over n-th roots of unity ``w`` of ``dim_C ker(M - w I)``.

    Evaluated root by root rather than from computed eigenvalues, which are
    unreliable for nontrivial Jordan blocks.
    """
    m = np.asarray(m, dtype=float)
    eye = np.eye(len(m))
    roots = np.exp(2j * np.pi * np.arange(n) / n)
    return sum(kernel_dim(m - w * eye, tol) for w in roots)


def nullity_jump_expected(floquet, n: int, root_tol: float = ROOT_TOL) -> bool:
    """True if a multiplier other than 1 is an n-th root of unity."""
    lam = np.asarray(floquet)
    return bool(np.any((np.abs(lam**n - 1.0) < root_tol) & (np.abs(lam - 1.0) > root_tol)))


# ---------------------------------------------------------------------------
# records


@dataclass
class OrbitRecord:
    loop: LoopConfiguration
    action: float
    average_action: float
    morse_index: int
    nullity: int
    maslov: int | None
    avg_maslov: float | None
    floquet: np.ndarray
    orbit_key: str
    basic_period: int
    gradient_norm: float
    monodromy_nullity: int
    tol_null: float

    @property
    def period(self) -> int:
        return self.loop.p

    def to_dict(self) -> dict:
        return {
            "period": self.loop.p,
            "orbit_key": self.orbit_key,
            "action": self.action,
            "average_action": self.average_action,
            "morse_index": self.morse_index,
            "nullity": self.nullity,
            "maslov": self.maslov,
            "avg_maslov": self.avg_maslov,
            "floquet": [[float(v.real), float(v.imag)] for v in self.floquet],
            "basic_period": self.basic_period,
            "gradient_norm": self.gradient_norm,
            "loop": self.loop.to_dict(),
        }


def make_record(fmap: FactorizedMap, loop: LoopConfiguration, tol_null: float | None = None,
                compute_maslov: bool = True, samples_per_factor: int = 64) -> OrbitRecord:
    """All invariants of a critical loop.

    The same ``tol_null`` decides the Hessian kernel, the kernel of the
    monodromy minus identity and the degeneracy of the Maslov endpoint.
    """
    loop = canonical_representative(loop)
    h = action_hessian(fmap, loop)
    if tol_null is None:
        tol_null = default_tol_null(h)
    mor, nul = morse_data(h, tol_null)
    pts = loop.points
    mono = monodromy(fmap, pts[0], loop.p, points=pts)
    mas = avmas = None
    if compute_maslov:
        path = canonical_path(fmap, pts[0], loop.p, samples_per_factor, points=pts)
        avmas = average_maslov(path)
        mas = maslov_index(path, tol_null)
    act = action_value(fmap, loop)
    return OrbitRecord(
        loop=loop,
        action=act,
        average_action=act / loop.p,
        morse_index=mor,
        nullity=nul,
        maslov=mas,
        avg_maslov=avmas,
        floquet=floquet_multipliers(mono),
        orbit_key=orbit_key(loop),
        basic_period=basic_period(loop),
        gradient_norm=float(np.max(np.abs(action_gradient(fmap, loop)))),
        monodromy_nullity=kernel_dim(mono - np.eye(2 * fmap.d), tol_null),
        tol_null=tol_null,
    )


def dedup_orbits(records, tol: float = 1e-5, check_tol: float = 1e-9):
    """One record per shift/deck class; merged members must agree.

    Raises
    ------
    InvariantMismatch
        If two merged records disagree on action or indices.
    """
    kept: list[OrbitRecord] = []
    for rec in records:
        for other in kept:
            if not loops_equivalent(rec.loop, other.loop, tol):
                continue
            same = (abs(rec.action - other.action) <= check_tol * max(1.0, abs(other.action))
                    and rec.morse_index == other.morse_index and rec.nullity == other.nullity
                    and rec.maslov == other.maslov)
            if not same:
                raise InvariantMismatch(
                    f"merged orbits disagree: action {rec.action!r} vs {other.action!r}, "
                    f"(mor, nul, mas) {(rec.morse_index, rec.nullity, rec.maslov)} vs "
                    f"{(other.morse_index, other.nullity, other.maslov)}"
                )
            break
        else:
            kept.append(rec)
    return kept


# ---------------------------------------------------------------------------
# search


@dataclass(frozen=True)
class SearchConfig:
    grid_per_dim: int = 8
    newton_tol: float = 1e-12
    newton_max_iter: int = 100
    seed: int = 0
    tol_null: float | None = None
    jitter: float = 0.25
    merge_tol: float = 1e-5
    compute_maslov: bool = True
    samples_per_factor: int = 64

    @classmethod
    def from_dict(cls, data: dict | None) -> "SearchConfig":
        from .errors import ConfigError

        data = dict(data or {})
        names = set(cls.__dataclass_fields__)
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown search_config keys: {sorted(unknown)}")
        cfg = cls(**data)
        for name in ("newton_tol", "merge_tol"):
            if not getattr(cfg, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if cfg.tol_null is not None and not cfg.tol_null > 0:
            raise ConfigError("tol_null must be positive")
        if cfg.grid_per_dim < 1 or cfg.newton_max_iter < 1 or cfg.samples_per_factor < 1:
            raise ConfigError("grid_per_dim, newton_max_iter and samples_per_factor must be positive")
        return cfg

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


class SearchResult(list):
    """List of :class:`OrbitRecord` with search diagnostics attached."""

    def __init__(self, records=(), degenerate_family: bool = False, n_starts: int = 0,
                 n_converged: int = 0, families=()):
        super().__init__(records)
        self.degenerate_family = degenerate_family
        self.n_starts = n_starts
        self.n_converged = n_converged
        self.families = list(families)


def _starts(d: int, cfg: SearchConfig) -> np.ndarray:
    g = cfg.grid_per_dim
    axis = (np.arange(g) + 0.5) / g
    grid = np.stack(np.meshgrid(*([axis] * (2 * d)), indexing="ij"), axis=-1).reshape(-1, 2 * d)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(1,))))
    return grid + cfg.jitter * rng.uniform(-1.0, 1.0, grid.shape) / g


def _shoot(fmap, z, p):
    pts = [z]
    for j in range(fmap.k * p):
        pts.append(apply_factor(fmap.factors[j % fmap.k], pts[-1]))
    return pts


def _reduced_newton(fmap, z, p, max_iter, tol=1e-11):
    """Batched Newton on ``phi^p(z) - z`` (lifted) from every start."""
    eye = np.eye(2 * fmap.d)
    for _ in range(max_iter):
        pts = _shoot(fmap, z, p)
        res = pts[-1] - pts[0]
        err = np.max(np.abs(res), axis=1)
        todo = err >= tol
        if not np.any(todo):
            break
        m = np.broadcast_to(eye, (len(z),) + eye.shape)
        for j in range(fmap.k * p):
            f = fmap.factors[j % fmap.k]
            m = differential_factor(f, pts[j], pts[j + 1][:, : fmap.d]) @ m
        step = -(np.linalg.pinv(m - eye, rcond=1e-12) @ res[:, :, None])[:, :, 0]
        norm = np.max(np.abs(step), axis=1, keepdims=True)
        step *= np.minimum(1.0, 0.1 / np.maximum(norm, 1e-300))
        z = np.where(todo[:, None], z + step, z)
    pts = _shoot(fmap, z, p)
    loops = np.stack(pts[:-1], axis=1)
    return loops, np.max(np.abs(pts[-1] - pts[0]), axis=1)


def polish(fmap: FactorizedMap, loop: LoopConfiguration, max_iter: int = 100):
    """Damped Newton on the action gradient with backtracking on ``|g|^2``.

    Iterates until the step stagnates rather than stopping at a fixed
    threshold, so degenerate critical points are approached as closely as
    rounding allows.
    """
    z = loop.flat().copy()
    g = action_gradient(fmap, z.reshape(loop.points.shape))
    gn = float(g @ g)
    for _ in range(max_iter):
        if gn == 0.0:
            break
        h = action_hessian(fmap, z.reshape(loop.points.shape))
        step = -np.linalg.lstsq(h, g, rcond=None)[0]
        if np.max(np.abs(step)) < 1e-16:
            break
        t, accepted = 1.0, False
        for _ in range(30):
            zt = z + t * step
            gt = action_gradient(fmap, zt.reshape(loop.points.shape))
            gtn = float(gt @ gt)
            if gtn < gn:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        z, g, gn = zt, gt, gtn
    return loop.with_points(z.reshape(loop.points.shape)), float(np.max(np.abs(g)))


def _is_non_isolated(fmap, loop, h, tol_null, delta=1e-2, grad_tol=1e-9) -> bool:
    ev, vec = np.linalg.eigh(h)
    for i in np.nonzero(np.abs(ev) <= tol_null)[0]:
        v = vec[:, i] / np.max(np.abs(vec[:, i]))
        for sgn in (1.0, -1.0):
            moved = loop.flat() + sgn * delta * v
            if np.max(np.abs(action_gradient(fmap, moved.reshape(loop.points.shape)))) < grad_tol:
                return True
    return False


def find_critical_points(fmap: FactorizedMap, p: int, search_config: SearchConfig | dict | None = None,
                         grad_tol: float = 1e-10) -> SearchResult:
    """Multi-start search for contractible p-periodic orbits.

    Starts on a jittered grid of base points; each start is shot along the
    map and corrected by Newton on the closing condition, then polished by
    damped Newton on the action gradient.  Loops lying on a continuum of
    critical points (detected by probing the Hessian kernel) are reported
    through ``degenerate_family`` instead of as orbits.
    """
    cfg = search_config if isinstance(search_config, SearchConfig) else SearchConfig.from_dict(search_config)
    starts = _starts(fmap.d, cfg)
    loops, err = _reduced_newton(fmap, starts, p, cfg.newton_max_iter)
    order = np.nonzero(err < 1e-7)[0]
    candidates: list[LoopConfiguration] = []
    for i in order:
        lp = LoopConfiguration(fmap.d, fmap.k, p, loops[i])
        if all(loop_distance(lp, c) > 1e-6 for c in candidates):
            candidates.append(lp)
    records, families = [], []
    for lp in candidates:
        lp, gmax = polish(fmap, lp, cfg.newton_max_iter)
        if gmax >= grad_tol:
            log.debug("dropping start with residual gradient %.2e", gmax)
            continue
        if any(loops_equivalent(lp, r.loop, cfg.merge_tol) for r in records) or \
                any(loops_equivalent(lp, f, cfg.merge_tol) for f in families):
            continue
        h = action_hessian(fmap, lp)
        tol = cfg.tol_null if cfg.tol_null is not None else default_tol_null(h)
        if _is_non_isolated(fmap, lp, h, tol):
            families.append(canonical_representative(lp))
            continue
        records.append(make_record(fmap, lp, tol, cfg.compute_maslov, cfg.samples_per_factor))
    # near-distinct converged loops signal a continuum rather than two orbits
    near = any(cfg.merge_tol <= loop_distance(a.loop, b.loop) < 10 * cfg.merge_tol
               for i, a in enumerate(records) for b in records[i + 1:])
    records = dedup_orbits(records, cfg.merge_tol)
    records.sort(key=lambda r: (-r.action, r.orbit_key))
    return SearchResult(records, bool(families) or near, len(starts), len(order), families)
