"""Rotation-function Maslov machinery for paths in Sp(2d).

Conventions
-----------
* Coordinates are ``(x_1..x_d, y_1..y_d)`` and ``J = [[0, I], [-I, 0]]``.
* ``R^{2d}`` is identified with ``C^d`` through ``(x, y) -> x + i y``, so an
  orthogonal symplectic matrix ``[[A, -B], [B, A]]`` corresponds to the
  unitary ``A + i B``.
* Angles ``theta`` are measured in turns: ``rho = exp(2 pi i theta)``.
* ``W'`` acts as ``diag(2, 1/2)`` on the pair ``(x_1, y_1)`` and as ``-1``
  elsewhere; ``W'' = -I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import polar, schur

from .errors import ConnectFailure, RefineNeeded
from .linalg import hamiltonian_exp, kernel_dim, standard_j, symplectic_defect

MAX_STEP_TURNS = 0.25
CONNECTOR_STEP_TURNS = 0.02
MAX_SAMPLES = 2**14
UNIPOTENT_TOL = 1e-5
INTEGER_TOL = 1e-6
IDENTITY_TOL = 1e-9

__all__ = [
    "SymplecticPath",
    "rotation",
    "average_maslov",
    "rotation_increment",
    "normalized_rotation",
    "rotation_gap",
    "maslov_index",
    "maslov_details",
    "iterate_path",
    "check_iteration_bounds",
    "index_theorem_check",
    "w_prime",
    "w_double_prime",
    "symplectic_normal_form",
    "is_degenerate",
]


# ---------------------------------------------------------------------------
# rotation function


def rotation(m) -> complex | np.ndarray:
    """Rotation function: determinant of the unitary polar factor.

    For symplectic ``M = U S`` the complex-linear part
    ``(M + J M J^T) / 2`` equals ``U (S + S^{-1}) / 2``, so it has the same
    unitary factor.  Its complex form ``(A + D)/2 + i (C - B)/2`` has all
    singular values at least 1, which keeps the phase of its determinant
    accurate even for strongly hyperbolic matrices where an SVD of ``M``
    loses the contracted directions.

    Broadcasts over stacks of matrices; a single matrix gives a complex
    scalar.
    """
    m = np.asarray(m, dtype=float)
    d = m.shape[-1] // 2
    a, b = m[..., :d, :d], m[..., :d, d:]
    c, e = m[..., d:, :d], m[..., d:, d:]
    rho = np.linalg.det(0.5 * (a + e) + 0.5j * (c - b))
    rho = rho / np.abs(rho)
    return complex(rho) if rho.ndim == 0 else rho


def _wrapped_steps(rho: np.ndarray) -> np.ndarray:
    return np.angle(rho[1:] / rho[:-1]) / (2 * np.pi)


def normalized_rotation(m, snap: float = 1e-6) -> complex:
    """Eigenvalue rotation function with Krein signs.

    ``(-1)^{m_0/2}`` times ``lambda^{p(lambda)}`` over the unit-circle
    eigenvalues other than ``+-1``; ``m_0`` counts the negative real
    eigenvalues and ``p(lambda)`` is the number of positive directions of
    ``i v^H J v`` on the generalized eigenspace.  Conjugation invariant,
    ``normalized_rotation(M^n) = normalized_rotation(M)^n``, and equal to
    :func:`rotation` on ``U(d)``.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    j = standard_j(n // 2)
    eig = np.linalg.eigvals(m)
    m0, circle = 0, []
    for lam in eig:
        if abs(lam - 1.0) < snap:
            continue
        if abs(lam.imag) < snap * max(1.0, abs(lam)):
            m0 += lam.real < 0
        elif abs(abs(lam) - 1.0) < snap:
            circle.append(lam)
    value = complex((-1) ** int(round(m0 / 2)))
    used = [False] * len(circle)
    for i, lam in enumerate(circle):
        if used[i]:
            continue
        group = [k for k in range(len(circle)) if not used[k] and abs(circle[k] - lam) < 1e3 * snap]
        for k in group:
            used[k] = True
        poly = np.eye(n, dtype=complex)
        for k in group:
            poly = poly @ (m - circle[k] * np.eye(n))
        basis = np.linalg.svd(poly)[2].conj().T[:, n - len(group):]
        gram = 1j * basis.conj().T @ j @ basis
        pos = int(np.sum(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T)) > 0))
        centre = np.mean([circle[k] for k in group])
        value *= (centre / abs(centre)) ** pos
    return value


def rotation_gap(m, max_samples: int = 4096) -> float:
    """Continuous lift ``delta`` (turns) of ``normalized_rotation / rotation``.

    Evaluated along ``t -> U P^t`` (polar decomposition ``M = U P``), on
    which the polar rotation is constant and ``delta(U) = 0``.
    """
    m = np.asarray(m, dtype=float)
    u, pos = polar(m)
    w, v = np.linalg.eigh(0.5 * (pos + pos.T))
    if np.max(np.abs(np.log(w))) < 1e-14:
        return 0.0
    fn = lambda t: u @ (v * w**t) @ v.T
    s = list(np.linspace(0.0, 1.0, 17))
    vals = [normalized_rotation(fn(t)) for t in s]
    while True:
        steps = np.angle(np.array(vals[1:]) / np.array(vals[:-1])) / (2 * np.pi)
        bad = np.nonzero(np.abs(steps) > CONNECTOR_STEP_TURNS)[0]
        if not len(bad):
            return float(np.sum(steps))
        if len(s) + len(bad) > max_samples:
            raise RefineNeeded("normalized rotation lift needs more than the sample cap")
        for i in bad[::-1]:
            mid = 0.5 * (s[i] + s[i + 1])
            s.insert(i + 1, mid)
            vals.insert(i + 1, normalized_rotation(fn(mid)))


def unwrap_turns(rho: np.ndarray, start: float | None = None) -> np.ndarray:
    """Continuous lift of ``rho`` values in turns (nearest-branch continuation)."""
    rho = np.asarray(rho)
    theta0 = np.angle(rho[0]) / (2 * np.pi) if start is None else start
    return theta0 + np.concatenate([[0.0], np.cumsum(_wrapped_steps(rho))])


def w_prime(d: int) -> np.ndarray:
    diag = -np.ones(2 * d)
    diag[0], diag[d] = 2.0, 0.5
    return np.diag(diag)


def w_double_prime(d: int) -> np.ndarray:
    return -np.eye(2 * d)


def is_degenerate(m, tol: float = 1e-8) -> bool:
    """True when ``M - I`` has a singular value at most ``tol``."""
    m = np.asarray(m, dtype=float)
    return kernel_dim(m - np.eye(m.shape[0]), tol) > 0


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class SymplecticPath:
    """Sampled path ``[0, 1] -> Sp(2d)`` with its unwrapped rotation angle.

    Build with :meth:`from_samples`, which computes ``theta`` and enforces
    the sampling invariant (consecutive angle steps below a quarter turn).
    """

    d: int
    times: np.ndarray
    mats: np.ndarray
    theta: np.ndarray = field(repr=False)

    @classmethod
    def from_samples(cls, times, mats, *, require_identity_start: bool = True) -> "SymplecticPath":
        times = np.asarray(times, dtype=float)
        mats = np.asarray(mats, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[1] % 2:
            raise ValueError("mats must have shape (N, 2d, 2d)")
        if len(times) != len(mats) or len(times) < 2:
            raise ValueError("need at least two samples with matching times")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if require_identity_start and (
            times[0] != 0.0 or np.max(np.abs(mats[0] - np.eye(mats.shape[1]))) > 1e-12
        ):
            raise ValueError("path must start at (0, I)")
        rho = rotation(mats)
        steps = _wrapped_steps(rho)
        if np.any(np.abs(steps) >= MAX_STEP_TURNS):
            raise RefineNeeded(
                f"rotation angle step {np.max(np.abs(steps)):.3f} turns exceeds {MAX_STEP_TURNS}"
            )
        theta = np.concatenate([[0.0], np.cumsum(steps)])
        if not require_identity_start:
            theta = theta + np.angle(rho[0]) / (2 * np.pi)
        return cls(mats.shape[1] // 2, times, mats, theta)

    @classmethod
    def constant_identity(cls, d: int, samples: int = 2) -> "SymplecticPath":
        t = np.linspace(0.0, 1.0, samples)
        return cls.from_samples(t, np.broadcast_to(np.eye(2 * d), (samples, 2 * d, 2 * d)))

    @property
    def endpoint(self) -> np.ndarray:
        return self.mats[-1]

    def __len__(self) -> int:
        return len(self.times)

    def max_step(self) -> float:
        return float(np.max(np.abs(np.diff(self.theta)))) if len(self) > 1 else 0.0

    def concatenate(self, other: "SymplecticPath") -> "SymplecticPath":
        """``self * other`` with ``other`` left-multiplied onto ``self``'s endpoint."""
        mats = np.concatenate([self.mats, other.mats[1:] @ self.endpoint])
        times = np.concatenate([0.5 * self.times, 0.5 + 0.5 * other.times[1:]])
        return SymplecticPath.from_samples(times, mats)


def rotation_increment(path: SymplecticPath) -> float:
    """Twice the increment of the unwrapped polar rotation angle."""
    return 2.0 * float(path.theta[-1] - path.theta[0])


def average_maslov(path: SymplecticPath) -> float:
    """Mean index: ``2 (theta(1) - theta(0))`` with the endpoint correction.

    The polar rotation function is not multiplicative, so its raw increment
    fails to be homogeneous under iteration when the endpoint is not
    semisimple-unitary (a shear, say).  Adding ``2 delta(Gamma(1))`` turns the
    lift into that of :func:`normalized_rotation`, which is homogeneous.
    At ``W'``, ``W''`` and on ``U(d)`` the correction vanishes, so Maslov
    indices obtained by closing the path are unaffected.
    """
    return rotation_increment(path) + 2.0 * rotation_gap(path.endpoint) - 2.0 * rotation_gap(path.mats[0])


def iterate_path(path: SymplecticPath, n: int) -> SymplecticPath:
    """n-fold product ``t -> Gamma(t) Gamma(1)^j`` on ``[j/n, (j+1)/n]``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n == 1:
        return path
    times, mats = [path.times / n], [path.mats]
    power = np.eye(2 * path.d)
    for j in range(1, n):
        power = power @ path.endpoint
        times.append((j + path.times[1:]) / n)
        mats.append(path.mats[1:] @ power)
    return SymplecticPath.from_samples(np.concatenate(times), np.concatenate(mats))


def perturbed_path(path: SymplecticPath, s_mat: np.ndarray, scale: float) -> SymplecticPath:
    """Right-multiply ``Gamma(t)`` by ``exp(scale * t * J S)``."""
    gen = standard_j(path.d) @ s_mat
    w, v = np.linalg.eig(gen)
    if np.linalg.cond(v) < 1e8:
        v_inv = np.linalg.inv(v)
        factors = np.einsum("ij,tj,jk->tik", v, np.exp(np.outer(scale * path.times, w)), v_inv).real
    else:
        factors = np.stack([hamiltonian_exp(s_mat, scale * t) for t in path.times])
    return SymplecticPath.from_samples(path.times, path.mats @ factors)


# ---------------------------------------------------------------------------
# adaptive angle increment along an explicit matrix path


def _distance_to_one(mats: np.ndarray) -> np.ndarray:
    """Smallest ``|lambda - 1|`` per matrix.

    Unlike the smallest singular value of ``M - I``, this does not shrink
    with the norm of a strongly hyperbolic ``M`` (rounding moves its
    contracting eigenvalues near 0, not near 1).
    """
    return np.abs(np.linalg.eigvals(mats) - 1.0).min(axis=-1)


def angle_increment(fn: Callable[[float], np.ndarray], init_samples: int = 33,
                    avoid_identity: bool = True) -> float:
    """Total rotation-angle change (turns) of ``fn`` on ``[0, 1]``.

    Intervals whose wrapped step exceeds a small fraction of a turn are
    bisected until the lift is unambiguous.  With ``avoid_identity`` a
    sample with an eigenvalue-1 crossing raises :class:`ConnectFailure`.
    """
    s = list(np.linspace(0.0, 1.0, init_samples))
    mats = [fn(v) for v in s]
    while True:
        stack = np.stack(mats)
        if avoid_identity and np.any(_distance_to_one(stack) < IDENTITY_TOL):
            raise ConnectFailure("connecting path meets the eigenvalue-1 hypersurface")
        steps = _wrapped_steps(rotation(stack))
        bad = np.nonzero(np.abs(steps) > CONNECTOR_STEP_TURNS)[0]
        if not len(bad):
            return float(np.sum(steps))
        if len(s) + len(bad) > MAX_SAMPLES:
            raise ConnectFailure("connecting path needs more than the sample cap")
        for i in bad[::-1]:
            mid = 0.5 * (s[i] + s[i + 1])
            s.insert(i + 1, mid)
            mats.insert(i + 1, fn(mid))


# ---------------------------------------------------------------------------
# symplectic normal form of a nondegenerate matrix


@dataclass
class _Block:
    kind: str  # "ell", "hyp+", "hyp-", "minus", "quad"
    pairs: tuple
    param: tuple  # ell: (beta,), hyp: (lam,), quad: (r, alpha)


def _null_basis(a: np.ndarray, dim: int) -> np.ndarray:
    _, _, vh = np.linalg.svd(a)
    return vh[-dim:].conj().T


def _cluster(eigs: np.ndarray, tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, lam in enumerate(eigs):
        for g in groups:
            if abs(eigs[g[0]] - lam) < tol * max(1.0, abs(lam)):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def _symplectic_gram_schmidt(basis: np.ndarray, j: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    vecs = [basis[:, i] for i in range(basis.shape[1])]
    pairs = []
    while vecs:
        e = vecs.pop(0)
        k = int(np.argmax([abs(e @ j @ v) for v in vecs])) if vecs else None
        if k is None or abs(e @ j @ vecs[k]) < 1e-10:
            raise ConnectFailure("restricted form is degenerate")
        f = vecs.pop(k)
        f = f / (e @ j @ f)
        rest = []
        for v in vecs:
            v = v + (v @ j @ f) * e - (v @ j @ e) * f
            rest.append(v)
        vecs = rest
        pairs.append((e, f))
    return pairs


def _symplectic_eigvals(m: np.ndarray, minv: np.ndarray, tol: float) -> np.ndarray:
    """Eigenvalues of symplectic ``m``, the contracting ones as reciprocals of
    the expanding eigenvalues of ``minv``."""
    ev = np.linalg.eigvals(m)
    iv = np.linalg.eigvals(minv)
    out = np.concatenate([ev[np.abs(ev) > 1 + tol], 1.0 / iv[np.abs(iv) > 1 + tol],
                          ev[np.abs(np.abs(ev) - 1.0) <= tol]])
    return out if len(out) == len(ev) else ev


def symplectic_normal_form(m: np.ndarray, rng: np.random.Generator | None = None,
                           cluster_tol: float = 1e-7):
    """Return ``(T, N, blocks)`` with ``T`` symplectic and ``T^{-1} M T = N``.

    ``N`` is a direct sum of 2x2 blocks on coordinate pairs ``(x_i, y_i)``
    (rotations, positive or negative hyperbolic ``diag(l, 1/l)``, or ``-I``)
    and 4x4 blocks ``diag(B, B^{-T})`` on two pairs for complex quadruplets.
    When the number of positive hyperbolic blocks is odd, one of them sits
    on pair 0.  Raises :class:`ConnectFailure` for non-semisimple inputs or
    when ``M`` has eigenvalue 1.
    """
    m = np.asarray(m, dtype=float)
    n2 = m.shape[0]
    d = n2 // 2
    j = standard_j(d)
    # exact inverse; contracting eigen-data is taken from it, where it expands
    minv = -j @ m.T @ j
    eigs = _symplectic_eigvals(m, minv, cluster_tol)
    if np.min(np.abs(eigs - 1.0)) < cluster_tol:
        raise ConnectFailure("matrix has eigenvalue 1")
    groups = _cluster(eigs, cluster_tol)
    # 2d-blocks: list of (kind, [(e, f)]), quads: list of (E(2), F(2))
    two_blocks: list[tuple[str, np.ndarray, np.ndarray]] = []
    quads: list[tuple[np.ndarray, np.ndarray]] = []
    done = set()
    for gi, g in enumerate(groups):
        if gi in done:
            continue
        lam = np.mean(eigs[g])
        mult = len(g)
        on_circle = abs(abs(lam) - 1.0) < cluster_tol
        real = abs(lam.imag) < cluster_tol
        if real and abs(lam.real + 1.0) < cluster_tol:
            basis = _null_basis(m + np.eye(n2), mult).real
            if np.linalg.norm((m + np.eye(n2)) @ basis) > 1e-6 or mult % 2:
                raise ConnectFailure("eigenvalue -1 is not semisimple")
            for e, f in _symplectic_gram_schmidt(basis, j):
                two_blocks.append(("minus", e, f))
            done.add(gi)
            continue
        if real:
            lam = lam.real
            if abs(lam) < 1.0:
                continue  # handled via its partner
            partner = [k for k, h in enumerate(groups) if k not in done
                       and abs(np.mean(eigs[h]) - 1.0 / lam) < cluster_tol * max(1.0, abs(1 / lam))]
            if not partner:
                raise ConnectFailure("missing reciprocal eigenvalue")
            u = _null_basis(m - lam * np.eye(n2), mult).real
            w = _null_basis(minv - lam * np.eye(n2), mult).real
            if np.linalg.norm(m @ u - lam * u) > 1e-6 * abs(lam) or np.linalg.norm(minv @ w - lam * w) > 1e-6 * abs(lam):
                raise ConnectFailure("hyperbolic eigenvalue is not semisimple")
            f = w @ np.linalg.inv(u.T @ j @ w)
            for i in range(mult):
                two_blocks.append(("hyp+" if lam > 0 else "hyp-", u[:, i], f[:, i]))
            done.update([gi, partner[0]])
            continue
        if lam.imag < 0:
            continue  # conjugate handled with the upper half-plane copy
        if on_circle:
            v = _null_basis(m - lam * np.eye(n2), mult)
            if np.linalg.norm(m @ v - lam * v) > 1e-6:
                raise ConnectFailure("elliptic eigenvalue is not semisimple")
            k = 1j * (v.conj().T @ j @ v)
            k = 0.5 * (k + k.conj().T)
            dk, q = np.linalg.eigh(k)
            if np.min(np.abs(dk)) < 1e-10:
                raise ConnectFailure("Krein form is degenerate")
            v = v @ q / np.sqrt(np.abs(dk))
            for i in range(mult):
                a, b = np.sqrt(2.0) * v[:, i].real, np.sqrt(2.0) * v[:, i].imag
                om = a @ j @ b
                two_blocks.append(("ell", a / np.sqrt(abs(om)), np.sign(om) * b / np.sqrt(abs(om))))
            done.add(gi)
            continue
        if abs(lam) < 1.0:
            continue  # quadruplet handled from the outside copy
        mu = 1.0 / np.conj(lam)
        v = _null_basis(m - lam * np.eye(n2), mult)
        w = _null_basis(minv - np.conj(lam) * np.eye(n2), mult)
        if np.linalg.norm(m @ v - lam * v) > 1e-6 * abs(lam) or \
                np.linalg.norm(minv @ w - np.conj(lam) * w) > 1e-6 * abs(lam):
            raise ConnectFailure("complex eigenvalue is not semisimple")
        e_all = np.concatenate([np.stack([v[:, i].real, v[:, i].imag], axis=1) for i in range(mult)], axis=1)
        f0 = np.concatenate([np.stack([w[:, i].real, w[:, i].imag], axis=1) for i in range(mult)], axis=1)
        f_all = f0 @ np.linalg.inv(e_all.T @ j @ f0)
        for i in range(mult):
            quads.append((e_all[:, 2 * i:2 * i + 2], f_all[:, 2 * i:2 * i + 2]))
        done.add(gi)

    if len(two_blocks) + 2 * len(quads) != d:
        raise ConnectFailure("eigenvalue bookkeeping failed (near-collision)")
    if rng is not None:
        order = rng.permutation(len(two_blocks))
        two_blocks = [two_blocks[i] for i in order]
    hyp_pos = [b for b in two_blocks if b[0] == "hyp+"]
    others = [b for b in two_blocks if b[0] != "hyp+"]
    two_blocks = hyp_pos + others

    t = np.zeros((n2, n2))
    blocks: list[_Block] = []
    pair = 0
    for kind, e, f in two_blocks:
        t[:, pair], t[:, d + pair] = e, f
        blocks.append(_Block(kind, (pair,), ()))
        pair += 1
    for e2, f2 in quads:
        t[:, pair], t[:, pair + 1] = e2[:, 0], e2[:, 1]
        t[:, d + pair], t[:, d + pair + 1] = f2[:, 0], f2[:, 1]
        blocks.append(_Block("quad", (pair, pair + 1), ()))
        pair += 2
    if symplectic_defect(t) > 1e-8 * max(1.0, np.linalg.norm(t) ** 2):
        raise ConnectFailure("normal-form basis is not symplectic")
    nmat = np.linalg.solve(t, m @ t)
    for blk in blocks:
        if blk.kind == "quad":
            i, k = blk.pairs
            b = nmat[np.ix_([i, k], [i, k])]
            r = np.sqrt(abs(np.linalg.det(b)))
            # b = r R(phi) up to rounding
            blk.param = (r, np.arctan2(b[1, 0], b[0, 0]))
        else:
            i = blk.pairs[0]
            a = nmat[np.ix_([i, d + i], [i, d + i])]
            if blk.kind == "ell":
                blk.param = (np.mod(np.arctan2(a[1, 0], a[0, 0]), 2 * np.pi),)
            elif blk.kind in ("hyp+", "hyp-"):
                blk.param = (a[0, 0],)
    ideal = assemble_normal_form(d, blocks)
    # relative: powers of hyperbolic matrices have entries far above 1
    if np.max(np.abs(ideal - nmat)) > 1e-6 * max(1.0, np.max(np.abs(ideal))):
        raise ConnectFailure("normal form does not block-diagonalize the matrix")
    return t, nmat, blocks


def _place2(out: np.ndarray, d: int, i: int, a: np.ndarray) -> None:
    idx = [i, d + i]
    out[np.ix_(idx, idx)] = a


def _place4(out: np.ndarray, d: int, i: int, k: int, b: np.ndarray) -> None:
    out[np.ix_([i, k], [i, k])] = b
    out[np.ix_([d + i, d + k], [d + i, d + k])] = np.linalg.inv(b).T


def _rot(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def assemble_normal_form(d: int, blocks: Sequence[_Block]) -> np.ndarray:
    out = np.zeros((2 * d, 2 * d))
    for blk in blocks:
        if blk.kind == "quad":
            r, phi = blk.param
            _place4(out, d, *blk.pairs, r * _rot(phi))
        elif blk.kind == "ell":
            _place2(out, d, blk.pairs[0], _rot(blk.param[0]))
        elif blk.kind == "minus":
            _place2(out, d, blk.pairs[0], -np.eye(2))
        else:
            lam = blk.param[0]
            _place2(out, d, blk.pairs[0], np.diag([lam, 1.0 / lam]))
    return out


def _block_legs(d: int, blocks: Sequence[_Block]) -> list[Callable[[float], np.ndarray]]:
    """Sub-paths moving the normal form to ``W'`` or ``W''`` inside Sp*."""

    def leg_a(s):
        out = np.zeros((2 * d, 2 * d))
        for blk in blocks:
            if blk.kind == "ell":
                beta = blk.param[0]
                _place2(out, d, blk.pairs[0], _rot(beta + s * (np.pi - beta)))
            elif blk.kind == "minus":
                _place2(out, d, blk.pairs[0], -np.eye(2))
            elif blk.kind == "hyp-":
                lam = blk.param[0]
                lam_s = lam + s * (-1.0 - lam)
                _place2(out, d, blk.pairs[0], np.diag([lam_s, 1.0 / lam_s]))
            elif blk.kind == "hyp+":
                lam = blk.param[0]
                lam_s = lam + s * (2.0 - lam)
                _place2(out, d, blk.pairs[0], np.diag([lam_s, 1.0 / lam_s]))
            else:
                r, phi = blk.param
                target = np.pi if phi >= 0 else -np.pi
                _place4(out, d, *blk.pairs, r * _rot(phi + s * (target - phi)))
        return out

    def leg_b(s):
        out = leg_a(1.0)
        for blk in blocks:
            if blk.kind == "quad":
                r = blk.param[0]
                _place4(out, d, *blk.pairs, -(r + s * (1.0 - r)) * np.eye(2))
        return out

    hyp = [blk.pairs[0] for blk in blocks if blk.kind == "hyp+"]
    paired = list(zip(hyp[len(hyp) % 2::2], hyp[len(hyp) % 2 + 1::2]))

    def leg_c(s):
        out = leg_b(1.0)
        for i, k in paired:
            _place4(out, d, i, k, 2.0 * _rot(np.pi * s))
        return out

    def leg_d(s):
        out = leg_b(1.0)
        for i, k in paired:
            _place4(out, d, i, k, -(2.0 - s) * np.eye(2))
        return out

    return [leg_a, leg_b, leg_c, leg_d] if paired else [leg_a, leg_b]


def _power_path(g: np.ndarray) -> Callable[[float], np.ndarray]:
    """Path ``tau -> G^tau`` in Sp(2d) through the polar factors of ``G``."""
    d = g.shape[0] // 2
    u, p = polar(g, side="right")  # g = u p
    lam, vec = np.linalg.eigh(0.5 * (p + p.T))
    uc = u[:d, :d] + 1j * u[d:, :d]
    tri, z = schur(uc, output="complex")
    phases = np.angle(np.diag(tri))

    def at(tau):
        ut = (z * np.exp(1j * tau * phases)) @ z.conj().T
        ur = np.block([[ut.real, -ut.imag], [ut.imag, ut.real]])
        pt = (vec * lam**tau) @ vec.T
        return ur @ pt

    return at


def connector_increment(m: np.ndarray, rng: np.random.Generator | None = None) -> float:
    """Rotation increment (turns) of a path in Sp* from ``m`` to ``W'``/``W''``.

    With ``rng`` the construction is randomized (block order and a random
    symplectic waypoint on the conjugation leg); the result should not
    depend on it.
    """
    d = m.shape[0] // 2
    t, nmat, blocks = symplectic_normal_form(m, rng)
    t_inv = np.linalg.inv(t)
    total = 0.0
    if rng is None:
        back = _power_path(t)
        total += angle_increment(lambda s: _conj(back(1.0 - s), nmat))
    else:
        from .linalg import random_symplectic

        waypoint = random_symplectic(rng, d, scale=0.3)
        to_way = _power_path(t_inv @ waypoint)
        total += angle_increment(lambda s: _conj(t @ to_way(s), nmat))
        back = _power_path(waypoint)
        total += angle_increment(lambda s: _conj(back(1.0 - s), nmat))
    ideal = assemble_normal_form(d, blocks)
    total += float(np.angle(rotation(ideal) / rotation(nmat)) / (2 * np.pi))
    for leg in _block_legs(d, blocks):
        total += angle_increment(leg)
    del t_inv
    return total


def _conj(t: np.ndarray, n: np.ndarray) -> np.ndarray:
    return t @ n @ np.linalg.inv(t)


def _connector_with_fallback(m: np.ndarray, rng: np.random.Generator | None) -> float:
    try:
        return connector_increment(m, rng)
    except ConnectFailure:
        pass
    # Non-generic endpoint: walk a short way along exp(s J S) inside Sp* first.
    gen = np.random.default_rng(12345) if rng is None else rng
    d = m.shape[0] // 2
    last = None
    for _ in range(8):
        a = gen.standard_normal((2 * d, 2 * d))
        s_mat = (a + a.T) / np.linalg.norm(a + a.T)
        for scale in (1e-6, 1e-5, 1e-4):
            walk = lambda s, scale=scale: m @ hamiltonian_exp(s_mat, s * scale)
            try:
                inc = angle_increment(walk, init_samples=5)
                return inc + connector_increment(walk(1.0), rng)
            except ConnectFailure as exc:
                last = exc
    raise ConnectFailure(f"could not connect endpoint inside Sp*: {last}")


# ---------------------------------------------------------------------------
# Maslov index


def _nondegenerate_mas(path: SymplecticPath, rng=None) -> tuple[int, float]:
    total = rotation_increment(path) + 2.0 * _connector_with_fallback(path.endpoint, rng)
    mas = int(round(total))
    if abs(total - mas) > INTEGER_TOL:
        raise ConnectFailure(f"concatenated average index {total:.9f} is not an integer")
    return mas, total


def perturbation_panel(d: int, size: int = 16, seed: int = 0) -> list[np.ndarray]:
    """Symmetric directions: +I, -I, then normalized random draws."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5eed,)))
    panel = [np.eye(2 * d), -np.eye(2 * d)]
    while len(panel) < size:
        a = rng.standard_normal((2 * d, 2 * d))
        s = a + a.T
        panel.append(s / np.linalg.norm(s, 2))
    return panel


def maslov_details(path: SymplecticPath, tol_degenerate: float = 1e-8, *,
                   connector_seed: int | None = None, panel_size: int = 16,
                   perturb_scale: float = 1e-4, panel_seed: int = 0, with_avmas: bool = True) -> dict:
    """Maslov index with the intermediate quantities that produced it.

    Nondegenerate endpoints: close the path inside Sp* up to ``W'`` or
    ``W''`` and take the average index of the concatenation.  Degenerate
    endpoints (``M - I`` has a singular value ``<= tol_degenerate``): the
    lower semicontinuous extension, realized as the minimum over a panel of
    perturbations ``Gamma(t) exp(s t J S)``.  ``with_avmas=False`` skips the
    average index (reported as ``None``), which is not needed for ``mas``.
    """
    rng = None if connector_seed is None else np.random.default_rng(connector_seed)
    avmas = average_maslov(path) if with_avmas else None
    if not is_degenerate(path.endpoint, tol_degenerate):
        mas, total = _nondegenerate_mas(path, rng)
        return {"mas": mas, "avmas": avmas, "degenerate": False, "closure": total}
    values = []
    for s_mat in perturbation_panel(path.d, panel_size, panel_seed):
        pert = perturbed_path(path, s_mat, perturb_scale)
        if is_degenerate(pert.endpoint, tol_degenerate):
            continue
        values.append(_nondegenerate_mas(pert, rng)[0])
    if not values:
        raise ConnectFailure("no nondegenerate perturbation found")
    return {"mas": min(values), "avmas": avmas, "degenerate": True, "panel": values}


def maslov_index(path: SymplecticPath, tol_degenerate: float = 1e-8, **kwargs) -> int:
    return maslov_details(path, tol_degenerate, **kwargs)["mas"]


# ---------------------------------------------------------------------------
# iteration inequalities and the index theorem


def is_unipotent(m: np.ndarray, tol: float = UNIPOTENT_TOL) -> bool:
    return bool(np.all(np.abs(np.linalg.eigvals(m) - 1.0) <= tol))


def check_iteration_bounds(path: SymplecticPath, n: int, nullity_n: int | None = None,
                           tol_null: float = 1e-8, mas_1: int | None = None) -> dict:
    """Liu-Long iteration bounds for the n-th iterate of ``path``.

    ``nullity_n`` defaults to ``dim ker(Gamma(1)^n - I)`` at ``tol_null``.
    """
    d = path.d
    avmas = average_maslov(path)
    endpoint_n = np.linalg.matrix_power(path.endpoint, n)
    if nullity_n is None:
        nullity_n = kernel_dim(endpoint_n - np.eye(2 * d), tol_null)
    # avmas of the iterate is n * avmas; skip recomputing it on a large power
    mas_n = maslov_index(iterate_path(path, n), tol_null, with_avmas=False)
    lower = n * avmas - d
    upper = n * avmas + d - nullity_n
    eps = 1e-8
    report = {
        "n": n,
        "avmas": avmas,
        "mas": mas_n,
        "nullity": int(nullity_n),
        "lower": lower,
        "upper": upper,
        "lower_holds": mas_n >= lower - eps,
        "upper_holds": mas_n <= upper + eps,
        "lower_strict": mas_n > lower + eps,
        "upper_strict": mas_n < upper - eps,
    }
    report["unipotent"] = is_unipotent(endpoint_n)
    both_strict = report["lower_strict"] and report["upper_strict"]
    report["unipotency_ok"] = both_strict or report["unipotent"]
    if is_unipotent(path.endpoint) and abs(avmas) < 1e-8:
        if mas_1 is None:
            mas_1 = maslov_index(path, tol_null)
        report["constant_mas_ok"] = mas_n == mas_1
    report["ok"] = bool(report["lower_holds"] and report["upper_holds"] and report["unipotency_ok"]
                        and report.get("constant_mas_ok", True))
    return report


def index_theorem_check(record) -> dict:
    """``mor - dkp == mas`` as an exact integer identity."""
    dkp = record.loop.d * record.loop.k * record.loop.p
    ok = record.morse_index - dkp == record.maslov
    return {"ok": bool(ok), "morse_index": record.morse_index, "maslov": record.maslov, "dkp": dkp}
