import numpy as np
import pytest

from sympal.errors import ConfigError, ConstraintViolation, NotPeriodic, SolveFailure
from sympal.linalg import rotation_matrix, symplectic_defect
from sympal.maslov import iterate_path
from sympal.symmap import (FactorizedMap, apply_factor, canonical_path, differential_factor,
                           floquet_multipliers, monodromy)
from sympal.systems import cosine_pair, quartic_bump, sys_a, sys_b, sys_c, sys_d
from sympal.trigpoly import TrigPolynomial

EPS = 0.01


def fd_jacobian(f, z, h=1e-5):
    cols = [(apply_factor(f, z + h * e) - apply_factor(f, z - h * e)) / (2 * h) for e in np.eye(len(z))]
    return np.stack(cols, axis=1)


def implicit_residual(f, z, zn):
    d = f.dim // 2
    w = np.concatenate([zn[:d], z[d:]])
    g = f.gradient(w)
    return max(np.max(np.abs(zn[:d] - z[:d] - g[d:])), np.max(np.abs(zn[d:] - z[d:] + g[:d])))


def test_zero_factor_is_identity():
    z = np.array([0.3, 0.7])
    assert np.array_equal(apply_factor(TrigPolynomial.zero(2), z), z)
    assert np.array_equal(differential_factor(TrigPolynomial.zero(2), z), np.eye(2))


def test_cosine_pair_image():
    f = cosine_pair(EPS)
    z = np.array([0.25, 0.0])
    zn = apply_factor(f, z)
    assert np.allclose(zn, [0.25, 2 * np.pi * EPS], atol=1e-13)
    assert implicit_residual(f, z, zn) < 1e-12


def test_degenerate_max_is_fixed():
    f = quartic_bump(EPS)
    assert np.allclose(apply_factor(f, [0.0, 0.0]), 0.0, atol=1e-15)
    assert np.allclose(differential_factor(f, [0.0, 0.0]), np.eye(2), atol=1e-12)


def test_shear_differential():
    f = TrigPolynomial(2, [(EPS, (1, 0), "cos")])
    m = differential_factor(f, [0.0, 0.0])
    assert np.allclose(m, [[1, 0], [4 * np.pi**2 * EPS, 1]], atol=1e-12)
    assert symplectic_defect(m) < 1e-12
    assert np.allclose(m, fd_jacobian(f, np.zeros(2)), atol=1e-6)


@pytest.mark.parametrize("fmap", [sys_b(), sys_c(), sys_d()], ids=["B", "C", "D"])
def test_equivariance_and_jacobian(fmap, rng):
    n = 2 * fmap.d
    for f in fmap.factors:
        for z in rng.random((10, n)):
            m = rng.integers(-3, 4, n)
            zn = apply_factor(f, z)
            assert implicit_residual(f, z, zn) < 1e-12
            assert np.max(np.abs(apply_factor(f, z + m) - (zn + m))) < 1e-12
            jac = differential_factor(f, z)
            assert symplectic_defect(jac) < 1e-9
            assert np.max(np.abs(jac - fd_jacobian(f, z))) < 1e-6


def test_batched_apply_matches_pointwise(rng):
    f = sys_d().factors[0]
    z = rng.random((7, 4))
    assert np.allclose(apply_factor(f, z), np.stack([apply_factor(f, v) for v in z]), atol=1e-14)


def test_solve_failure_reports_residual():
    f = TrigPolynomial(2, [(EPS, (1, 1), "cos")])
    with pytest.raises(SolveFailure) as info:
        apply_factor(f, [0.1, 0.2], max_iter=1, tol=1e-300)
    assert info.value.residual > 0


def test_monodromy_identity_cases():
    assert np.allclose(monodromy(sys_a(), [0.3, 0.9], 5), np.eye(2))
    assert np.allclose(monodromy(sys_b(), [0.0, 0.0], 4), np.eye(2), atol=1e-12)


def test_monodromy_sys_c_maximum():
    m = monodromy(sys_c(), [0.0, 0.0], 1)
    assert abs(np.linalg.det(m) - 1) < 1e-10
    lam = floquet_multipliers(m)
    assert np.allclose(np.sort_complex(lam), np.sort_complex(np.linalg.eigvals(m)))
    # at the maximum both diagonal Hessian entries are -h
    h = 4 * np.pi**2 * EPS
    assert np.trace(m) == pytest.approx(2 - h**2, abs=1e-12)


def test_monodromy_needs_closed_orbit():
    with pytest.raises(NotPeriodic):
        monodromy(sys_c(), [0.1, 0.2], 1)


def test_floquet_examples():
    assert np.allclose(floquet_multipliers(np.eye(4)), 1.0)
    assert np.allclose(floquet_multipliers([[1.0, 0.0], [3.0, 1.0]]), 1.0)
    theta = 0.7
    lam = floquet_multipliers(rotation_matrix(theta))
    assert np.allclose(np.sort_complex(lam), np.sort_complex([np.exp(1j * theta), np.exp(-1j * theta)]))


def test_floquet_reciprocal_symmetry(rng):
    from sympal.linalg import random_symplectic

    m = random_symplectic(rng, 2, 0.5)
    lam = floquet_multipliers(m)
    assert abs(np.prod(lam) - 1) < 1e-8
    for v in lam:
        assert np.min(np.abs(lam - 1 / v)) < 1e-8
        assert np.min(np.abs(lam - np.conj(v))) < 1e-8


def test_canonical_path_trivial_cases():
    path = canonical_path(sys_a(), [0.2, 0.4], 3)
    assert np.allclose(path.mats, np.eye(2))
    path = canonical_path(sys_b(), [0.0, 0.0], 2)
    assert np.max(np.abs(path.mats - np.eye(2))) < 1e-12
    assert path.times[0] == 0.0


def test_single_factor_path_endpoint():
    fmap = sys_c()
    path = canonical_path(fmap, [0.0, 0.5], 1)
    assert np.max(np.abs(path.endpoint - differential_factor(fmap.factors[0], [0.0, 0.5]))) < 1e-9


def test_path_endpoint_is_monodromy():
    from conftest import orbits

    for name, p in [("sys_c", 2), ("sys_d", 1)]:
        fmap = sys_c() if name == "sys_c" else sys_d()
        for rec in orbits(name, p):
            pts = rec.loop.points
            path = canonical_path(fmap, pts[0], p, points=pts)
            assert np.max(np.abs(path.endpoint - monodromy(fmap, pts[0], p, points=pts))) < 1e-9
            assert float(np.max(symplectic_defect(path.mats))) < 1e-9


def test_group_law():
    fmap = sys_d()
    from conftest import orbits

    rec = orbits("sys_d", 1)[0]
    pts = rec.loop.points
    one = canonical_path(fmap, pts[0], 1, adaptive=False, points=pts)
    three = canonical_path(fmap, pts[0], 3, adaptive=False, points=np.tile(pts, (3, 1)))
    it = iterate_path(one, 3)
    assert np.allclose(it.times, three.times, atol=1e-15)
    assert np.max(np.abs(it.mats - three.mats)) < 1e-9


def test_certificate():
    assert sys_c().smallness_certificate == pytest.approx(4 * np.pi**2 * 0.0, abs=1e-12)
    assert sys_d().smallness_certificate < 1
    with pytest.raises(ConstraintViolation):
        FactorizedMap(1, [TrigPolynomial(2, [(0.1, (1, 1), "cos")])])


def test_from_dict_round_trip_and_validation():
    fmap = sys_d()
    again = FactorizedMap.from_dict(fmap.to_dict())
    assert again.factors == fmap.factors and again.label == fmap.label
    data = fmap.to_dict()
    data["extra"] = 1
    with pytest.raises(ConfigError):
        FactorizedMap.from_dict(data)
    data = fmap.to_dict()
    data["k"] = 3
    with pytest.raises(ConfigError):
        FactorizedMap.from_dict(data)
    with pytest.raises(ConfigError):
        FactorizedMap(1, [TrigPolynomial.zero(4)])
