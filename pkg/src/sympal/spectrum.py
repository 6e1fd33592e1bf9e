"""Action spectra over many periods and prime-period orbit experiments."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .action import (LoopConfiguration, SearchConfig, action_gradient, find_critical_points,
                     morse_data, action_hessian, polish)
from .errors import PreconditionFailed
from .symmap import FactorizedMap

CSV_COLUMNS = ["period", "orbit_key", "action", "avg_action", "mor", "nul", "mas", "basic_period"]

__all__ = [
    "SpectrumTable",
    "scan_periods",
    "conley_single_gf_experiment",
    "conley_zehnder_experiment",
    "floquet_denominator_bound",
    "primes_up_to",
]


def primes_up_to(n: int) -> list[int]:
    return [p for p in range(2, n + 1) if all(p % q for q in range(2, int(p**0.5) + 1))]


def _prime_divisors(n: int) -> list[int]:
    return [q for q in primes_up_to(n) if n % q == 0]


@dataclass
class SpectrumTable:
    entries: list = field(default_factory=list)
    window: tuple | None = None
    degenerate_family: dict = field(default_factory=dict)

    def filtered(self) -> list:
        if self.window is None:
            return list(self.entries)
        c, r = self.window
        return [e for e in self.entries if abs(e["average_action"] - c) <= r]

    def to_dict(self) -> dict:
        return {"entries": self.filtered(), "window": list(self.window) if self.window else None,
                "degenerate_family": {str(p): v for p, v in sorted(self.degenerate_family.items())}}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for e in self.filtered():
            writer.writerow([e["period"], e["orbit_key"], repr(e["action"]), repr(e["average_action"]),
                             e["morse_index"], e["nullity"], e["maslov"], e["basic_period"]])
        return buf.getvalue()


def basic_period_by_subsampling(fmap: FactorizedMap, loop: LoopConfiguration,
                                grad_tol: float = 1e-10, tol: float = 1e-5) -> int:
    """Basic period found by re-converging ``p/q`` subsamplings.

    For each prime ``q | p`` the first ``k p / q`` points are polished as a
    loop of period ``p/q``; if that converges and its ``q``-fold iterate
    reproduces the loop, the search recurses on the shorter loop.
    """
    p = loop.p
    for q in _prime_divisors(p):
        sub = LoopConfiguration(fmap.d, fmap.k, p // q, loop.points[: fmap.k * p // q])
        sub, g = polish(fmap, sub, 20)
        if g < grad_tol and np.max(np.abs(sub.iterate(q).points - loop.points)) < tol:
            return basic_period_by_subsampling(fmap, sub, grad_tol, tol)
    return p


def _confirmed_basic_period(fmap, rec) -> int:
    return basic_period_by_subsampling(fmap, rec.loop)


def scan_periods(fmap: FactorizedMap, p_list, search_config: SearchConfig | dict | None = None,
                 window: tuple | None = None) -> SpectrumTable:
    """Critical points at every period in ``p_list`` (ascending order)."""
    table = SpectrumTable(window=tuple(window) if window is not None else None)
    for p in sorted(set(int(v) for v in p_list)):
        found = find_critical_points(fmap, p, search_config)
        table.degenerate_family[p] = found.degenerate_family
        for rec in found:
            table.entries.append({
                "period": p,
                "orbit_key": rec.orbit_key,
                "action": rec.action,
                "average_action": rec.action / p,
                "morse_index": rec.morse_index,
                "nullity": rec.nullity,
                "maslov": rec.maslov,
                "avg_maslov": rec.avg_maslov,
                "basic_period": _confirmed_basic_period(fmap, rec),
                "gradient_norm": rec.gradient_norm,
            })
    return table


def floquet_denominator_bound(floquet, max_denominator: int = 1000, tol: float = 1e-8) -> int:
    """Largest denominator among multipliers that are roots of unity (1 if none)."""
    best = 1
    for lam in np.asarray(floquet):
        if abs(abs(lam) - 1.0) > tol:
            continue
        q = Fraction(float(np.angle(lam) / (2 * np.pi))).limit_denominator(max_denominator).denominator
        if abs(lam**q - 1.0) < tol:
            best = max(best, q)
    return best


def _window_hit(rec, target: int) -> bool:
    return rec.morse_index <= target <= rec.morse_index + rec.nullity


def conley_single_gf_experiment(fmap: FactorizedMap, prime_list,
                                search_config: SearchConfig | dict | None = None) -> dict:
    """Prime-period orbits whose index window contains ``dp + d`` (k = 1)."""
    if fmap.k != 1:
        raise PreconditionFailed("single generating function experiment needs k = 1")
    d = fmap.d
    rows = []
    for p in sorted(set(int(v) for v in prime_list)):
        found = find_critical_points(fmap, p, search_config)
        window = [rec for rec in found if _window_hit(rec, d * p + d)]
        basic = [rec for rec in found if _confirmed_basic_period(fmap, rec) == p]
        window_basic = [rec for rec in window if rec in basic]
        rows.append({
            "p": p,
            "orbits": len(found),
            "index_window_orbits": len(window),
            "basic_period_orbits": len(basic),
            "window_basic_period_orbits": len(window_basic),
            "status": "found" if window_basic else "not found at this search resolution",
            "growth": len(basic) * math.log(p) / p,
            "degenerate_family": found.degenerate_family,
        })
    return {"rows": rows, "search_complete": False}


def conley_zehnder_experiment(fmap: FactorizedMap, prime_list,
                              search_config: SearchConfig | dict | None = None,
                              dichotomy_primes=None) -> dict:
    """Two distinct prime-period orbits with index windows at ``dkp -/+ d``.

    Raises
    ------
    PreconditionFailed
        If a contractible fixed point is degenerate.
    """
    d, k = fmap.d, fmap.k
    fixed = find_critical_points(fmap, 1, search_config)
    if fixed.degenerate_family or any(rec.nullity for rec in fixed):
        raise PreconditionFailed("the map has a degenerate contractible fixed point")
    p0 = max([floquet_denominator_bound(rec.floquet) for rec in fixed] or [1])
    dichotomy = []
    primes_check = primes_up_to(13) if dichotomy_primes is None else list(dichotomy_primes)
    for rec in fixed:
        av = rec.avg_maslov or 0.0
        n0 = 0 if abs(av) < 1e-8 else int(math.floor(2 * d / abs(av))) + 1
        for p in primes_check:
            loop = rec.loop.iterate(p)
            mor, nul = morse_data(action_hessian(fmap, loop), rec.tol_null)
            forbidden = mor in (d * k * p - d, d * k * p + d)
            asserted = p > max(p0, n0)
            dichotomy.append({"orbit_key": rec.orbit_key, "p": p, "morse_index": mor, "nullity": nul,
                              "in_forbidden_set": forbidden, "asserted": asserted,
                              "ok": not (asserted and forbidden)})
    rows = []
    for p in sorted(set(int(v) for v in prime_list)):
        found = find_critical_points(fmap, p, search_config)
        fresh = [rec for rec in found if _confirmed_basic_period(fmap, rec) == p]
        low = [rec for rec in fresh if _window_hit(rec, d * k * p - d)]
        high = [rec for rec in fresh if _window_hit(rec, d * k * p + d)]
        pair = None
        for a in low:
            for b in high:
                if a.orbit_key != b.orbit_key and (
                        abs(a.action - b.action) > 1e-6
                        or np.max(np.abs(a.loop.points - b.loop.points)) > 1e-6):
                    pair = (a.orbit_key, b.orbit_key)
                    break
            if pair:
                break
        rows.append({"p": p, "orbits": len(found), "basic_period_orbits": len(fresh),
                     "low_window": len(low), "high_window": len(high),
                     "pair": list(pair) if pair else None,
                     "status": "found" if pair else "not found at this search resolution"})
    return {"p0": p0, "fixed_points": len(fixed), "dichotomy": dichotomy,
            "dichotomy_ok": all(r["ok"] for r in dichotomy), "rows": rows, "search_complete": False}
