"""Small symplectic linear-algebra helpers shared across modules."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm


def standard_j(d: int) -> np.ndarray:
    """Matrix of ``omega = dx ^ dy`` in ``(x_1..x_d, y_1..y_d)`` coordinates."""
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, eye], [-eye, zero]])


def symplectic_defect(m: np.ndarray) -> float:
    """``||M^T J M - J||_inf`` (max abs entry); broadcasts over stacks."""
    m = np.asarray(m, dtype=float)
    d = m.shape[-1] // 2
    j = standard_j(d)
    mt = np.swapaxes(m, -1, -2)
    return float(np.max(np.abs(mt @ j @ m - j)))


def is_symplectic(m, tol: float = 1e-9) -> bool:
    return symplectic_defect(m) < tol


def rotation_matrix(theta: float) -> np.ndarray:
    """Counterclockwise rotation of the ``(x, y)`` plane."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def hamiltonian_exp(s_mat: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """``exp(scale * J S)`` for symmetric ``S``; always symplectic."""
    d = s_mat.shape[0] // 2
    return expm(scale * standard_j(d) @ s_mat)


def kernel_dim(a: np.ndarray, tol: float) -> int:
    """Number of singular values of ``a`` not exceeding ``tol``."""
    sv = np.linalg.svd(np.asarray(a), compute_uv=False)
    return int(np.sum(sv <= tol))


def random_symplectic(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((2 * d, 2 * d))
    return hamiltonian_exp(0.5 * (a + a.T), scale)
