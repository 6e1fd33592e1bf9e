"""Invariant suite run by ``sympal verify``.

Each check returns a dict with an ``ok`` flag; the report is a pure function
of the system and the configuration, so two runs with the same seed give the
same bytes.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .action import SearchConfig, find_critical_points, long_multiplicity
from .errors import NotCritical, NotPeriodic
from .linalg import kernel_dim, symplectic_defect
from .maslov import check_iteration_bounds, index_theorem_check
from .sdm import sdm_criteria
from .symmap import FactorizedMap, canonical_path, differential_factor, monodromy

log = logging.getLogger(__name__)

SYMPLECTIC_TOL = 1e-9

__all__ = ["thread_count", "ordered_map", "run_suite", "symplecticity_check"]


def thread_count() -> int:
    """Worker cap from ``SYMPAL_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("SYMPAL_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        log.warning("ignoring non-integer SYMPAL_THREADS=%r", raw)
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def ordered_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly threaded; result order is fixed."""
    items = list(items)
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def symplecticity_check(fmap: FactorizedMap, samples: int = 1000, seed: int = 0, orbits=()) -> dict:
    """Symplectic defect of factor differentials at random points and of orbit paths."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5,)))
    z = rng.random((samples, 2 * fmap.d))
    worst = 0.0
    for f in fmap.factors:
        worst = max(worst, float(np.max(symplectic_defect(differential_factor(f, z)))))
    for rec in orbits:
        pts = rec.loop.points
        worst = max(worst, symplectic_defect(monodromy(fmap, pts[0], rec.loop.p, points=pts)))
        path = canonical_path(fmap, pts[0], rec.loop.p, points=pts)
        worst = max(worst, float(np.max(symplectic_defect(path.mats))))
    return {"ok": worst < SYMPLECTIC_TOL, "max_defect": worst, "samples": samples,
            "orbit_paths": len(orbits), "tol": SYMPLECTIC_TOL}


def _orbit_checks(fmap, rec, n_max: int) -> dict:
    pts = rec.loop.points
    path = canonical_path(fmap, pts[0], rec.loop.p, points=pts)
    mono = path.endpoint
    bounds = [check_iteration_bounds(path, n, tol_null=rec.tol_null, mas_1=rec.maslov)
              for n in range(1, n_max + 1)]
    long_rows = []
    for n in range(1, n_max + 1):
        dense = kernel_dim(np.linalg.matrix_power(mono, n) - np.eye(2 * fmap.d), rec.tol_null)
        long_rows.append({"n": n, "dense": dense, "formula": long_multiplicity(mono, n, rec.tol_null)})
    index = index_theorem_check(rec)
    return {
        "orbit_key": rec.orbit_key,
        "period": rec.loop.p,
        "action": rec.action,
        "morse_index": rec.morse_index,
        "nullity": rec.nullity,
        "maslov": rec.maslov,
        "nullity_identity": {"ok": rec.nullity == rec.monodromy_nullity,
                             "hessian": rec.nullity, "monodromy": rec.monodromy_nullity},
        "index_theorem": index,
        "iteration_bounds": {"ok": all(b["ok"] for b in bounds),
                             "violations": [b["n"] for b in bounds if not b["ok"]]},
        "long_multiplicity": {"ok": all(r["dense"] == r["formula"] for r in long_rows),
                              "rows": long_rows},
    }


def _sdm_summary(fmap, rec, n_list) -> list[dict]:
    out = []
    for mode in ("max", "min"):
        try:
            rep = sdm_criteria(fmap, rec.loop.points[0], n_list, mode, rec.tol_null)
        except (NotCritical, NotPeriodic) as exc:
            out.append({"mode": mode, "label": "none", "K_candidate": [], "note": str(exc)})
            continue
        out.append({"mode": mode, "label": rep.label, "K_candidate": rep.K_candidate,
                    "flags": rep.flags})
    return out


def run_suite(fmap: FactorizedMap, periods=(1, 2, 3), n_max: int = 12, samples: int = 1000,
              search_config: SearchConfig | None = None, seed: int = 0, workers: int | None = None) -> dict:
    """Run every invariant check over the orbits found at ``periods``."""
    cfg = search_config or SearchConfig(seed=seed)
    periods = sorted(set(int(p) for p in periods))
    found = ordered_map(lambda p: find_critical_points(fmap, p, cfg), periods, workers)
    orbits = [rec for res in found for rec in res]
    checks = {"symplecticity": symplecticity_check(fmap, samples, seed, orbits)}
    per_orbit = ordered_map(lambda rec: _orbit_checks(fmap, rec, n_max), orbits, workers)
    fixed = [rec for rec in orbits if rec.loop.p == 1]
    sdm_rows = [{"orbit_key": rec.orbit_key, "results": _sdm_summary(fmap, rec, list(range(1, 9)))}
                for rec in fixed]
    for name in ("nullity_identity", "index_theorem", "iteration_bounds", "long_multiplicity"):
        bad = [o["orbit_key"] for o in per_orbit if not o[name]["ok"]]
        checks[name] = {"ok": not bad, "orbits": len(per_orbit), "failures": bad}
    return {
        "system": fmap.to_dict(),
        "smallness_certificate": fmap.smallness_certificate,
        "periods": periods,
        "n_max": n_max,
        "search_config": cfg.to_dict(),
        "degenerate_family": {str(p): res.degenerate_family for p, res in zip(periods, found)},
        "orbit_counts": {str(p): len(res) for p, res in zip(periods, found)},
        "checks": checks,
        "orbits": per_orbit,
        "sdm": sdm_rows,
        "ok": all(c["ok"] for c in checks.values()),
    }
