"""Real trigonometric polynomials on the torus R^n / Z^n.

A :class:`TrigPolynomial` is a finite sum of terms ``c * cos(2*pi*<m, z>)``
or ``c * sin(2*pi*<m, z>)`` with integer wavevectors ``m``.  Values,
gradients and Hessians are evaluated in closed form, so downstream index
computations carry no discretization error.

All evaluation routines broadcast over leading axes: ``z`` may have shape
``(..., dim)``.
"""

from __future__ import annotations

import json
from typing import Iterable

import numpy as np

TWO_PI = 2.0 * np.pi

__all__ = ["TrigPolynomial", "evaluate", "gradient", "hessian"]


class TrigPolynomial:
    """Immutable trigonometric polynomial on the ``dim``-torus.

    Parameters
    ----------
    dim : int
        Number of torus variables (``2d`` for a generating function).
    terms : iterable of (float, sequence of int, str)
        Triples ``(coefficient, wavevector, phase)`` with phase ``"cos"`` or
        ``"sin"``.

    Notes
    -----
    Terms are stored in canonical form: the first nonzero entry of every
    wavevector is positive (flipping the sign of ``sin`` coefficients when
    needed), duplicate terms are merged, zero terms dropped, and the result
    is sorted lexicographically by wavevector with ``cos`` before ``sin``.
    """

    __slots__ = ("_dim", "_coeffs", "_waves", "_is_sin")

    def __init__(self, dim: int, terms: Iterable[tuple] = ()):
        dim = int(dim)
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        merged: dict[tuple, float] = {}
        for c, m, ph in terms:
            m = tuple(int(v) for v in m)
            if len(m) != dim:
                raise ValueError(f"wavevector {m} has length {len(m)}, expected {dim}")
            if ph not in ("cos", "sin"):
                raise ValueError(f"phase must be 'cos' or 'sin', got {ph!r}")
            c = float(c)
            nz = [v for v in m if v != 0]
            if not nz:
                if ph == "sin":
                    continue
            elif nz[0] < 0:
                m = tuple(-v for v in m)
                if ph == "sin":
                    c = -c
            key = (m, ph)
            merged[key] = merged.get(key, 0.0) + c
        items = sorted(
            ((m, ph, c) for (m, ph), c in merged.items() if c != 0.0),
            key=lambda t: (t[0], t[1] == "sin"),
        )
        self._dim = dim
        self._coeffs = np.array([c for _, _, c in items], dtype=float)
        self._waves = np.array([m for m, _, _ in items], dtype=float).reshape(len(items), dim)
        self._is_sin = np.array([ph == "sin" for _, ph, _ in items], dtype=bool)
        for a in (self._coeffs, self._waves, self._is_sin):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def terms(self) -> list[tuple[float, tuple[int, ...], str]]:
        return [
            (float(c), tuple(int(v) for v in m), "sin" if s else "cos")
            for c, m, s in zip(self._coeffs, self._waves, self._is_sin)
        ]

    def __len__(self) -> int:
        return len(self._coeffs)

    def __repr__(self) -> str:
        return f"TrigPolynomial(dim={self._dim}, terms={self.terms!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigPolynomial):
            return NotImplemented
        return self._dim == other._dim and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self._dim, tuple(self.terms)))

    # -- algebra ---------------------------------------------------------

    def scaled(self, s: float) -> "TrigPolynomial":
        return TrigPolynomial(self._dim, [(s * c, m, ph) for c, m, ph in self.terms])

    def __neg__(self) -> "TrigPolynomial":
        return self.scaled(-1.0)

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        if other.dim != self._dim:
            raise ValueError("dimension mismatch")
        return TrigPolynomial(self._dim, self.terms + other.terms)

    @classmethod
    def zero(cls, dim: int) -> "TrigPolynomial":
        return cls(dim, [])

    # -- evaluation ------------------------------------------------------

    def _phases(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1:] != (self._dim,):
            raise ValueError(
                f"point has trailing dimension {z.shape[-1:] or ()} but polynomial has dim {self._dim}"
            )
        return z, TWO_PI * (z @ self._waves.T)

    def __call__(self, z):
        return self.evaluate(z)

    def evaluate(self, z):
        """Value at ``z``; shape ``z.shape[:-1]``."""
        z, arg = self._phases(z)
        vals = np.where(self._is_sin, np.sin(arg), np.cos(arg))
        return vals @ self._coeffs if len(self) else np.zeros(z.shape[:-1])

    def gradient(self, z):
        """Exact gradient at ``z``; shape ``z.shape``."""
        z, arg = self._phases(z)
        if not len(self):
            return np.zeros_like(z)
        dvals = np.where(self._is_sin, np.cos(arg), -np.sin(arg)) * self._coeffs
        return TWO_PI * (dvals @ self._waves)

    def hessian(self, z):
        """Exact Hessian at ``z``; shape ``z.shape + (dim,)``."""
        z, arg = self._phases(z)
        if not len(self):
            return np.zeros(z.shape + (self._dim,))
        vals = -np.where(self._is_sin, np.sin(arg), np.cos(arg)) * self._coeffs
        outer = self._waves[:, :, None] * self._waves[:, None, :]
        return TWO_PI**2 * np.tensordot(vals, outer, axes=(-1, 0))

    def difference(self, z, z0):
        """``f(z) - f(z0)`` evaluated without cancellation error.

        Uses the product forms of ``cos a - cos b`` and ``sin a - sin b`` so
        the result stays accurate when ``z`` is very close to ``z0``.
        """
        z, arg = self._phases(z)
        _, arg0 = self._phases(z0)
        if not len(self):
            return np.zeros(np.broadcast_shapes(z.shape[:-1], np.shape(z0)[:-1]))
        half_sum = 0.5 * (arg + arg0)
        half_diff = 0.5 * (arg - arg0)
        d = np.where(
            self._is_sin,
            2.0 * np.cos(half_sum) * np.sin(half_diff),
            -2.0 * np.sin(half_sum) * np.sin(half_diff),
        )
        return d @ self._coeffs

    def max_abs_bound(self) -> float:
        """Upper bound of ``|f|`` from the absolute coefficient sum."""
        return float(np.abs(self._coeffs).sum())

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim": self._dim,
            "terms": [{"c": c, "m": list(m), "ph": ph} for c, m, ph in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrigPolynomial":
        if not isinstance(data, dict) or set(data) - {"dim", "terms"} or "dim" not in data:
            raise ValueError("trig polynomial must be an object with keys 'dim' and 'terms'")
        terms = []
        for i, t in enumerate(data.get("terms", [])):
            if not isinstance(t, dict) or set(t) != {"c", "m", "ph"}:
                raise ValueError(f"term {i}: expected keys c, m, ph")
            if any(float(v) != int(v) for v in t["m"]):
                raise ValueError(f"term {i}: wavevector entries must be integers")
            terms.append((t["c"], t["m"], t["ph"]))
        return cls(data["dim"], terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrigPolynomial":
        return cls.from_dict(json.loads(text))


def evaluate(f: TrigPolynomial, z) -> float:
    return f.evaluate(z)


def gradient(f: TrigPolynomial, z):
    return f.gradient(z)


def hessian(f: TrigPolynomial, z):
    return f.hessian(z)

