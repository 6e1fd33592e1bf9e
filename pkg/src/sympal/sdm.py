"""Symplectically degenerate maxima and minima: detection and the
homological-vanishing homotopy check.

Detection is by necessary conditions only: the index identity at the
iterates, unipotency of the linearized map and vanishing mean index, plus
the isolated-extremum condition on every generating function.  Local
homology itself is not computed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .action import (LoopConfiguration, SearchConfig, action_hessian, basic_period,
                     default_tol_null, find_critical_points, morse_data)
from .errors import ConstraintViolation, NotCritical, NotPeriodic, PreconditionFailed
from .linalg import kernel_dim
from .maslov import average_maslov, is_unipotent
from .symmap import FactorizedMap, canonical_path, closure_defect, monodromy, orbit

log = logging.getLogger(__name__)

SHELL_RADII = (1e-1, 1e-2, 1e-3, 1e-4)
MAX_LOOP_POINTS = 2**16

__all__ = [
    "SdmReport",
    "sdm1_check",
    "sdm_criteria",
    "modulus_function",
    "admissible_parameters",
    "polydisc_loops",
    "vanishing_homotopy_verify",
    "accumulation_scan",
]


def _sphere(n_dirs: int, dim: int, seed: int = 0) -> np.ndarray:
    if dim == 2:
        th = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    u = rng.standard_normal((n_dirs, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _check_mode(mode: str) -> int:
    if mode not in ("max", "min"):
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    return 1 if mode == "max" else -1


def sdm1_check(fmap: FactorizedMap, z0, mode: str = "max", n_dirs: int = 512,
               radii=SHELL_RADII, grad_tol: float = 1e-10) -> list[dict]:
    """Isolated local max (min) test of every generating function at ``z0``.

    Values are compared on sample shells around ``z0`` using the
    cancellation-free difference ``f(z) - f(z0)``.  One entry per factor,
    with the first violating sample when the test fails.
    """
    sign = _check_mode(mode)
    z0 = np.asarray(z0, dtype=float)
    dirs = _sphere(n_dirs, 2 * fmap.d)
    out = []
    for j, f in enumerate(fmap.factors):
        g = np.max(np.abs(f.gradient(z0)))
        if g > grad_tol:
            raise NotCritical(f"z0 is not critical for factor {j} (|grad| = {g:.2e})")
        entry = {"factor": j, "ok": True, "violation": None}
        for r in radii:
            pts = z0 + r * dirs
            diff = sign * f.difference(pts, z0)
            bad = np.nonzero(diff >= 0.0)[0]
            if len(bad):
                entry["ok"] = False
                entry["violation"] = {"radius": r, "point": pts[bad[0]].tolist(),
                                      "difference": float(sign * diff[bad[0]])}
                break
        out.append(entry)
    return out


@dataclass
class SdmReport:
    point: list
    mode: str
    sdm1: list
    periods_checked: list
    criteria: list
    K_candidate: list
    flags: dict = field(default_factory=dict)
    label: str = "none"

    def to_dict(self) -> dict:
        return {"point": self.point, "mode": self.mode, "sdm1": self.sdm1,
                "periods_checked": self.periods_checked, "criteria": self.criteria,
                "K_candidate": self.K_candidate, "flags": self.flags, "label": self.label}


def _fixed_orbit(fmap, z0, tol=1e-10):
    pts = orbit(fmap, z0, 1)
    if closure_defect(pts) > tol or np.max(np.abs(pts[-1] - pts[0])) > tol:
        raise NotPeriodic("z0 is not a contractible fixed point of the map")
    return pts[:-1]


def sdm_criteria(fmap: FactorizedMap, z0, n_list, mode: str = "max",
                 tol_null: float | None = None) -> SdmReport:
    """Necessary index conditions for a degenerate max (min) at ``z0``.

    For each ``n``: the index identity ``mor + nul == dkn + d`` (co-index
    ``2dkn - mor - nul`` in place of ``mor`` for minima), all multipliers of
    ``phi^n`` equal to 1, and vanishing average Maslov index.
    """
    sign = _check_mode(mode)
    z0 = np.asarray(z0, dtype=float)
    base = _fixed_orbit(fmap, z0)
    d, k = fmap.d, fmap.k
    try:
        sdm1 = sdm1_check(fmap, z0, mode)
    except NotCritical as exc:
        sdm1 = [{"factor": None, "ok": False, "violation": str(exc)}]
    path1 = canonical_path(fmap, z0, 1, points=base)
    avmas1 = average_maslov(path1)
    mono1 = path1.endpoint
    rows = []
    for n in sorted(set(int(v) for v in n_list)):
        loop = LoopConfiguration(d, k, n, np.tile(base, (n, 1)))
        h = action_hessian(fmap, loop)
        tol = tol_null if tol_null is not None else default_tol_null(h)
        mor, nul = morse_data(h, tol)
        index = mor if sign > 0 else 2 * d * k * n - mor - nul
        mono_n = np.linalg.matrix_power(mono1, n)
        row = {
            "n": n,
            "morse_index": mor,
            "nullity": nul,
            "index": index,
            "index_ok": index + nul == d * k * n + d,
            "unipotent": is_unipotent(mono_n),
            "avmas": n * avmas1,
            "avmas_ok": abs(n * avmas1) < 1e-8,
            "monodromy_nullity": kernel_dim(mono_n - np.eye(2 * d), tol),
        }
        row["pass"] = bool(row["index_ok"] and row["unipotent"] and row["avmas_ok"])
        rows.append(row)
    ks = [r["n"] for r in rows if r["pass"]]
    checked = [r["n"] for r in rows]
    by_n = {r["n"]: r for r in rows}
    flags = {
        # (iv) multiples of passing periods pass
        "multiples_ok": all(by_n[m]["pass"] for n in ks for m in checked if m % n == 0),
        # (v) divisors with the same nullity pass
        "divisors_ok": all(by_n[m]["pass"] for n in ks for m in checked
                           if n % m == 0 and by_n[m]["nullity"] == by_n[n]["nullity"]),
        # (vi) unipotent at 1 and passing somewhere => passing everywhere
        "all_periods_ok": not (rows and is_unipotent(mono1) and ks) or len(ks) == len(rows),
        # mor - dkn constant and nullity constant over the candidates
        "constant_indices": len({(by_n[n]["morse_index"] - d * k * n, by_n[n]["nullity"]) for n in ks}) <= 1,
    }
    totally_degenerate = all(np.max(np.abs(f.hessian(z0))) < 1e-12 for f in fmap.factors)
    sdm1_ok = all(e["ok"] for e in sdm1)
    if sdm1_ok and totally_degenerate and ks:
        label = "totally-degenerate-extremum"
    elif sdm1_ok and ks:
        label = "candidate"
    elif ks:
        label = "index-candidate"
    else:
        label = "none"
    return SdmReport(z0.tolist(), mode, sdm1, checked, rows, ks, flags, label)


# ---------------------------------------------------------------------------
# homological-vanishing homotopy


def modulus_function(fmap: FactorizedMap, z0, R: float, shells: int = 256, n_dirs: int = 512,
                     s_min_ratio: float = 1e-6):
    """Conservative estimate of the modulus ``rho`` on ``(0, R]``.

    Returns ``(s, rho)`` on a geometric radial grid.  ``rho`` is the running
    minimum from the right of ``min(s^2, min_{|z|=s, j} -(f_j(z0+z) - f_j(z0)))``,
    hence nondecreasing; use :func:`rho_at` to read it conservatively.
    """
    z0 = np.asarray(z0, dtype=float)
    s = R * np.geomspace(s_min_ratio, 1.0, shells)
    dirs = _sphere(n_dirs, 2 * fmap.d)
    vals = s**2
    for f in fmap.factors:
        pts = z0 + s[:, None, None] * dirs[None]
        drop = -f.difference(pts, z0).min(axis=1)
        vals = np.minimum(vals, drop)
    rho = np.minimum.accumulate(vals[::-1])[::-1]
    return s, np.maximum(rho, 0.0)


def rho_at(table, s: float) -> float:
    """Value at the largest grid radius not exceeding ``s`` (0 below the grid)."""
    grid, rho = table
    i = np.searchsorted(grid, s, side="right") - 1
    return float(rho[i]) if i >= 0 else 0.0


def check_constraints(R, r, n_prime, n, k, epsilon, table) -> list[str]:
    """Parameter inequalities of the vanishing homotopy; empty when all hold."""
    bad = []
    rho_r4, rho_big = rho_at(table, r / 4), rho_at(table, R)
    if not 0 < r < R:
        bad.append(f"need 0 < r < R (r = {r!r}, R = {R!r})")
    if not r < epsilon / (2 * R):
        bad.append(f"r < epsilon/(2R) fails: {r!r} >= {epsilon / (2 * R)!r}")
    if not r < rho_big / (2 * R):
        bad.append(f"r < rho(R)/(2R) fails: {r!r} >= {rho_big / (2 * R)!r}")
    if rho_r4 <= 0 or not n_prime > 2 * R * r / (rho_r4 * k):
        bound = np.inf if rho_r4 <= 0 else 2 * R * r / (rho_r4 * k)
        bad.append(f"n' > 2Rr/(rho(r/4)k) fails: n' = {n_prime}, bound {bound!r}")
    if not n > 2 * n_prime:
        bad.append(f"n > 2n' fails: n = {n}, n' = {n_prime}")
    return bad


def admissible_parameters(fmap: FactorizedMap, z0, R: float, epsilon: float,
                          safety: float = 0.9, table=None) -> dict:
    """Smallest admissible ``(n', n)`` for the largest safe ``r``."""
    table = modulus_function(fmap, z0, R) if table is None else table
    rho_big = rho_at(table, R)
    r = safety * min(epsilon / (2 * R), rho_big / (2 * R), R)
    rho_r4 = rho_at(table, r / 4)
    if rho_r4 <= 0:
        raise ConstraintViolation("estimated modulus vanishes at r/4; refine the radial grid")
    n_prime = int(np.floor(2 * R * r / (rho_r4 * fmap.k))) + 1
    return {"R": R, "r": r, "epsilon": epsilon, "n_prime": n_prime, "n": 2 * n_prime + 1,
            "rho_R": rho_big, "rho_r_over_4": rho_r4}


def polydisc_loops(x: np.ndarray, w: np.ndarray, z0) -> np.ndarray:
    """Loops of the affine space ``E_n``: ``y_j = w + x_{j+1} - x_j``.

    ``x`` has shape ``(S, N, d)`` and ``w`` shape ``(S, d)``; returns the
    offsets from ``z0`` with shape ``(S, N, 2d)``.
    """
    y = w[:, None, :] + np.roll(x, -1, axis=1) - x
    return np.concatenate([x, y], axis=2)


def _action_offset(fmap, z0, offsets):
    """``A(z0 + offsets) - A(z0^{xN})`` for a batch of loops, without cancellation."""
    d = fmap.d
    x, y = offsets[..., :d], offsets[..., d:]
    x_next = np.roll(x, -1, axis=-2)
    total = np.sum(y * (x - x_next), axis=(-1, -2))
    n = offsets.shape[-2]
    for i, f in enumerate(fmap.factors):
        idx = np.arange(i, n, fmap.k)
        w = np.concatenate([x_next[..., idx, :], y[..., idx, :]], axis=-1)
        total = total + f.difference(z0 + w, z0).sum(axis=-1)
    return total


def _ball(u: np.ndarray, radius: float) -> np.ndarray:
    """Map cube samples in ``[0,1]^d`` (last axis) into the closed ball."""
    c = 2.0 * u - 1.0
    if c.shape[-1] == 1:
        return radius * c
    sup = np.max(np.abs(c), axis=-1, keepdims=True)
    euc = np.linalg.norm(c, axis=-1, keepdims=True)
    return radius * c * np.divide(sup, euc, out=np.zeros_like(euc), where=euc > 0)


def vanishing_homotopy_verify(fmap: FactorizedMap, z0, n: int, n_prime: int, r: float, R: float,
                              epsilon: float, v_direction=None, sample_count: int = 4096,
                              boundary_count: int = 4096, t_steps: int = 11, seed: int = 0,
                              max_loop_points: int = MAX_LOOP_POINTS, table=None) -> dict:
    """Sample the deformation ``h(t, z) = z + t z'`` of the polydisc ``W_n``.

    ``z'`` adds ``v`` (``|v| = r``) to ``y_j`` for ``j >= kn'``.  Checks on
    quasi-random samples of ``W_n`` and of its two boundary faces that::

        A(h(t, z)) < nc + epsilon   for all t,
        A(h(1, z)) < nc,
        A(h(t, z)) < nc             on the boundary,

    and reports the worst margins.  ``c`` is the action of ``z0`` over one
    period.

    Raises
    ------
    PreconditionFailed
        If ``z0`` is not an isolated maximum of every factor, or the loop
        length ``kn`` exceeds ``max_loop_points``.
    ConstraintViolation
        If the parameter inequalities fail.
    """
    z0 = np.asarray(z0, dtype=float)
    d, k = fmap.d, fmap.k
    sdm1 = sdm1_check(fmap, z0, "max")
    if not all(e["ok"] for e in sdm1):
        raise PreconditionFailed("z0 fails the isolated-maximum check")
    table = modulus_function(fmap, z0, R) if table is None else table
    bad = check_constraints(R, r, n_prime, n, k, epsilon, table)
    if bad:
        raise ConstraintViolation("; ".join(bad))
    n_pts = k * n
    if n_pts > max_loop_points:
        raise PreconditionFailed(
            f"admissible loop has {n_pts} points, above the cap of {max_loop_points}"
        )
    v = np.zeros(d)
    v[0] = 1.0
    if v_direction is not None:
        v = np.asarray(v_direction, dtype=float)
    v = r * v / np.linalg.norm(v)
    shift = np.zeros((n_pts, 2 * d))
    shift[k * n_prime:, d:] = v
    ts = np.linspace(0.0, 1.0, t_steps)
    dim = n_pts * d + d

    def draw(count, sub):
        sob = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(3, sub))))
        u = sob.random(count)
        x = _ball(u[:, : n_pts * d].reshape(count, n_pts, d), R)
        w = _ball(u[:, n_pts * d:], r)
        return x, w

    def evaluate(x, w):
        base = polydisc_loops(x, w, z0)
        out = np.empty((len(ts), len(x)))
        for chunk in range(0, len(x), 256):
            b = base[chunk:chunk + 256]
            for i, t in enumerate(ts):
                out[i, chunk:chunk + 256] = _action_offset(fmap, z0, b + t * shift)
        return out

    x, w = draw(sample_count, 0)
    interior = evaluate(x, w)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3, 2)))
    xb, wb = draw(boundary_count, 1)
    half = boundary_count // 2
    # face |w| = r
    wn = np.linalg.norm(wb[:half], axis=1, keepdims=True)
    wb[:half] = r * np.where(wn > 0, wb[:half] / np.maximum(wn, 1e-300), np.eye(1, d))
    # faces |x_j| = R
    js = rng.integers(0, n_pts, boundary_count - half)
    rows = np.arange(half, boundary_count)
    xn = np.linalg.norm(xb[rows, js], axis=1, keepdims=True)
    xb[rows, js] = R * np.where(xn > 0, xb[rows, js] / np.maximum(xn, 1e-300), np.eye(1, d))
    # polydisc corners: every |x_j| = R and |w| = r
    n_corners = min(256, 2 ** min(dim, 20))
    corner_sign = rng.choice([-1.0, 1.0], size=(n_corners, n_pts, d))
    xc = R * corner_sign / np.sqrt(d)
    wc = r * rng.choice([-1.0, 1.0], size=(n_corners, d)) / np.sqrt(d)
    boundary = np.concatenate([evaluate(xb, wb), evaluate(xc, wc)], axis=1)
    e_res = float(np.max(np.abs(polydisc_loops(x, w, z0)[..., d:] - (w[:, None] + np.roll(x, -1, 1) - x))))
    margins = {
        "below_epsilon": float(epsilon - interior.max()),
        "endpoint_below_c": float(-interior[-1].max()),
        "boundary_below_c": float(-boundary.max()),
    }
    return {
        "n": n, "n_prime": n_prime, "r": r, "R": R, "epsilon": epsilon,
        "samples": int(sample_count), "boundary_samples": int(boundary.shape[1]),
        "t_steps": int(t_steps),
        "margins": margins,
        "violations": int(np.sum(interior >= epsilon) + np.sum(interior[-1] >= 0) + np.sum(boundary >= 0)),
        "ok": all(m > 0 for m in margins.values()),
        "constraints": [],
        "e_n_residual": e_res,
    }


# ---------------------------------------------------------------------------
# accumulation of the average-action spectrum


def accumulation_scan(fmap: FactorizedMap, z0, n_list, eps_window: float,
                      search_config: SearchConfig | dict | None = None) -> dict:
    """Smallest positive action gaps above ``z0^{xkn}`` at each period ``n``.

    Raises
    ------
    PreconditionFailed
        If ``z0`` fails the degenerate-maximum index conditions on ``n_list``.
    """
    z0 = np.asarray(z0, dtype=float)
    crit = sdm_criteria(fmap, z0, n_list, "max")
    if len(crit.K_candidate) != len(crit.periods_checked):
        raise PreconditionFailed(f"z0 fails the index conditions at n = "
                                 f"{sorted(set(crit.periods_checked) - set(crit.K_candidate))}")
    base = _fixed_orbit(fmap, z0)
    from .action import action_value

    rows, warnings = [], []
    for n in sorted(set(int(v) for v in n_list)):
        ref = action_value(fmap, LoopConfiguration(fmap.d, fmap.k, n, np.tile(base, (n, 1))))
        found = find_critical_points(fmap, n, search_config)
        gaps = [(rec.action - ref, rec) for rec in found if 0 < rec.action - ref <= eps_window]
        row = {"n": n, "reference_action": ref, "orbits_found": len(found),
               "degenerate_family": found.degenerate_family}
        if gaps:
            gap, rec = min(gaps, key=lambda t: t[0])
            row.update(gap=gap, orbit_key=rec.orbit_key, basic_period=rec.basic_period)
        else:
            row.update(gap=None, orbit_key=None, basic_period=None)
            warnings.append(f"n = {n}: no orbit with positive gap found at this search resolution")
        rows.append(row)
    gaps_seen = [row["gap"] for row in rows if row["gap"] is not None]
    nonincreasing = all(a >= b for a, b in zip(gaps_seen, gaps_seen[1:]))
    if not nonincreasing:
        warnings.append("gap sequence is not nonincreasing at this search resolution")
    return {"rows": rows, "nonincreasing": nonincreasing, "warnings": warnings,
            "degenerate_family": any(row["degenerate_family"] for row in rows)}
