"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test is self-contained apart from the cached finder runs in
``conftest``; timings exclude nothing but interpreter start-up.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest

from conftest import orbits, search_time, system
from sympal import cli
from sympal.action import LoopConfiguration, action_hessian, long_multiplicity, morse_data
from sympal.linalg import kernel_dim, symplectic_defect
from sympal.maslov import SymplecticPath, check_iteration_bounds, is_unipotent, maslov_index
from sympal.sdm import (accumulation_scan, admissible_parameters, check_constraints, modulus_function,
                        sdm1_check, sdm_criteria, vanishing_homotopy_verify)
from sympal.symmap import FactorizedMap, canonical_path, differential_factor, monodromy
from sympal.systems import cosine_pair

ORIGIN = [0.0, 0.0]
SYMPLECTIC_TOL = 1e-9
ALL = ("sys_a", "sys_b", "sys_c", "sys_d")
FOUND = ("sys_b", "sys_c", "sys_d")
PERIODS = range(1, 9)


def _records(names=FOUND):
    for name in names:
        for p in PERIODS:
            for rec in orbits(name, p):
                yield name, rec


def _fixed_loop(fmap, z0, n):
    return LoopConfiguration(fmap.d, fmap.k, n, np.tile(np.asarray(z0, dtype=float), (fmap.k * n, 1)))


def test_criterion_01_symplecticity():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    per_system = 250
    for name in ALL:
        fmap = system(name)
        dim = 2 * fmap.d
        z = rng.random((per_system, dim))
        for f in fmap.factors:
            worst = max(worst, float(np.max(symplectic_defect(differential_factor(f, z)))))
        for zi in z[:per_system // 2]:
            worst = max(worst, symplectic_defect(monodromy(fmap, zi, 1, check=False)))
        for _ in range(per_system // 2):
            pts = rng.random((fmap.k * 2, dim))
            path = canonical_path(fmap, pts[0], 2, points=pts, adaptive=False)
            worst = max(worst, float(np.max(symplectic_defect(path.mats))))
        count += per_system
    elapsed = time.perf_counter() - t0
    assert count == 1000
    assert worst < SYMPLECTIC_TOL
    assert elapsed < 10.0


def test_criterion_02_nullity_identity():
    total = sum(search_time(name, p) for name in FOUND for p in PERIODS)
    checked = 0
    for name, rec in _records():
        fmap = system(name)
        p = rec.loop.p
        _, nul_hess = morse_data(action_hessian(fmap, rec.loop), rec.tol_null)
        mono = monodromy(fmap, rec.loop.points[0], p, points=rec.loop.points)
        nul_mono = kernel_dim(mono - np.eye(2 * fmap.d), rec.tol_null)
        assert nul_hess == nul_mono == rec.nullity, (name, rec.orbit_key)
        checked += 1
    assert checked > 0
    assert total < 60.0


def test_criterion_03_index_theorem():
    t0 = time.perf_counter()
    total = sum(search_time(name, p) for name in FOUND for p in PERIODS)
    degenerate = 0
    for name, rec in _records():
        fmap = system(name)
        pts = rec.loop.points
        path = canonical_path(fmap, pts[0], rec.loop.p, points=pts)
        mas = maslov_index(path, rec.tol_null)
        mor, _ = morse_data(action_hessian(fmap, rec.loop), rec.tol_null)
        assert mor - fmap.d * fmap.k * rec.loop.p == mas, (name, rec.orbit_key)
        degenerate += rec.nullity > 0
    assert degenerate > 0
    assert total + time.perf_counter() - t0 < 120.0


def test_criterion_04_degenerate_max_indices():
    fmap = system("sys_b")
    t0 = time.perf_counter()
    for n in range(1, 13):
        mor, nul = morse_data(action_hessian(fmap, _fixed_loop(fmap, ORIGIN, n)))
        assert (mor, nul) == (n - 1, 2), n
    assert time.perf_counter() - t0 < 30.0


def test_criterion_05_iteration_bounds():
    violations = []
    for name in ALL:
        fmap = system(name)
        for p in PERIODS:
            for rec in orbits(name, p):
                pts = rec.loop.points
                path = canonical_path(fmap, pts[0], p, points=pts)
                for n in range(1, 13):
                    rep = check_iteration_bounds(path, n, tol_null=rec.tol_null, mas_1=rec.maslov)
                    strict = rep["lower_strict"] and rep["upper_strict"]
                    if not (rep["ok"] and (strict or rep["unipotent"])):
                        violations.append((name, rec.orbit_key, n))
    assert violations == []


def _rotation_path(theta, samples=65):
    t = np.linspace(0.0, 1.0, samples)
    c, s = np.cos(theta * t), np.sin(theta * t)
    return SymplecticPath.from_samples(t, np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2))


def test_criterion_06_roots_of_unity():
    theta = 2 * np.pi / 3
    path = _rotation_path(theta)
    # the same multipliers at the origin of a cosine pair with trace 2 - h^2 = -1
    fmap = FactorizedMap(1, [cosine_pair(-math.sqrt(3) / (4 * np.pi**2))], "cosine-third")
    mono_sys = monodromy(fmap, ORIGIN, 1)
    assert np.trace(mono_sys) == pytest.approx(-1.0, abs=1e-12)
    for mono in (path.endpoint, mono_sys):
        dense = [kernel_dim(np.linalg.matrix_power(mono, n) - np.eye(2), 1e-8) for n in range(1, 13)]
        assert dense == [2 if n % 3 == 0 else 0 for n in range(1, 13)]
        assert [long_multiplicity(mono, n, 1e-8) for n in range(1, 13)] == dense
    hess = [morse_data(action_hessian(fmap, _fixed_loop(fmap, ORIGIN, n)))[1] for n in range(1, 13)]
    assert hess == [2 if n % 3 == 0 else 0 for n in range(1, 13)]


def test_criterion_07_sdm_detection():
    b, c = system("sys_b"), system("sys_c")
    assert all(e["ok"] for e in sdm1_check(b, ORIGIN, "max"))
    rep = sdm_criteria(b, ORIGIN, range(1, 9), "max")
    assert rep.K_candidate == list(range(1, 9))
    assert all(rep.flags.values())
    rep_c = sdm_criteria(c, ORIGIN, range(2, 9), "max")
    assert rep_c.K_candidate == []
    flipped = b.negated()
    assert all(e["ok"] for e in sdm1_check(flipped, ORIGIN, "min"))
    rep_min = sdm_criteria(flipped, ORIGIN, range(1, 9), "min")
    assert rep_min.K_candidate == list(range(1, 9))


def test_criterion_08_vanishing_homotopy():
    # smallest admissible loop over a grid of radii; epsilon = 1 keeps r < eps/(2R) slack
    fmap = system("sys_b")
    t0 = time.perf_counter()
    best = None
    for R in np.round(np.arange(0.05, 0.75, 0.05), 2):
        table = modulus_function(fmap, ORIGIN, float(R))
        params = admissible_parameters(fmap, ORIGIN, float(R), 1.0, table=table)
        assert check_constraints(params["R"], params["r"], params["n_prime"], params["n"], fmap.k,
                                 1.0, table) == []
        if best is None or params["n"] < best["n"]:
            best = params
    rep = vanishing_homotopy_verify(fmap, ORIGIN, best["n"], best["n_prime"], best["r"], best["R"], 1.0,
                                    sample_count=4096, boundary_count=4096)
    assert rep["ok"] and rep["violations"] == 0
    assert all(m > 0 for m in rep["margins"].values())
    assert time.perf_counter() - t0 < 300.0


def test_criterion_09_accumulation_trend():
    rep = accumulation_scan(system("sys_b"), ORIGIN, [2, 3, 5, 7], 0.05)
    assert [row["n"] for row in rep["rows"]] == [2, 3, 5, 7]
    assert all(row["gap"] is None or row["gap"] > 0 for row in rep["rows"])
    json.dumps(rep)
    for msg in rep["warnings"]:
        warnings.warn(f"search resolution: {msg}", stacklevel=1)


def test_criterion_10_determinism(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"verify{i}.json"
        assert cli.main(["verify", "--system", "sys_b", "--seed", "3", "--output", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["ok"]
