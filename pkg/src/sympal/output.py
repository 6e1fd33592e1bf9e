"""Canonical JSON, atomic file writes and SVG plots.

Reports are byte-stable: keys are sorted, floats are printed with 17
significant digits and nothing time-dependent is written.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

__all__ = ["to_plain", "canonical_json", "atomic_write", "emit_plots"]


def to_plain(obj):
    """Convert numpy scalars/arrays, tuples and dataclass-like objects to JSON types."""
    if hasattr(obj, "to_dict"):
        return to_plain(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    text = format(v + 0.0, ".17g")
    return text if any(c in text for c in ".eE") else text + ".0"


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(k) + ": " + _encode(obj[k], indent, level + 1) for k in sorted(obj)]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj, indent: int = 2) -> str:
    """Deterministic JSON text with a trailing newline."""
    return _encode(to_plain(obj), indent, 0) + "\n"


def atomic_write(path, data: str | bytes) -> Path:
    """Write via a temporary file in the target directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def emit_plots(table, path, reference: float | None = None, title: str = "") -> Path | None:
    """SVG scatter of (period, average action), with an optional reference line.

    ``table`` is a :class:`~sympal.spectrum.SpectrumTable` or a list of entry
    dicts.  Returns ``None`` (and logs a warning) without writing anything
    when there is nothing to plot.
    """
    entries = table.filtered() if hasattr(table, "filtered") else list(table)
    if not entries:
        log.warning("spectrum table is empty after filtering; no plot written")
        return None
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    periods = np.array([e["period"] for e in entries], dtype=float)
    avg = np.array([e["average_action"] for e in entries], dtype=float)
    with matplotlib.rc_context({"svg.hashsalt": "sympal", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.scatter(periods, avg, s=18, color="C0", zorder=3, label="orbits")
        if reference is not None:
            ax.axhline(reference, color="C3", lw=1, ls="--", label=f"c = {reference:.6g}")
        ax.set_xlabel("period")
        ax.set_ylabel("average action")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        ax.grid(alpha=0.3)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return atomic_write(path, buf.getvalue())
