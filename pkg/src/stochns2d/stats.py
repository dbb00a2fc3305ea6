"""Binomial estimates with exact intervals, and small fitting helpers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


def clopper_pearson(n_hits: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact (Clopper-Pearson) two-sided binomial interval."""
    if n <= 0:
        raise ValueError("need at least one trial")
    if not 0 <= n_hits <= n:
        raise ValueError(f"n_hits={n_hits} outside [0, {n}]")
    a = 1.0 - level
    lo = 0.0 if n_hits == 0 else float(stats.beta.ppf(a / 2, n_hits, n - n_hits + 1))
    hi = 1.0 if n_hits == n else float(stats.beta.ppf(1 - a / 2, n_hits + 1, n - n_hits))
    return lo, hi


def digest(obj) -> str:
    """Stable sha256 of a JSON-serialisable object."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(x):
    if isinstance(x, np.ndarray):
        # arrays enter by content hash so large fields stay cheap to digest
        c = np.ascontiguousarray(x)
        return {"dtype": c.dtype.str, "shape": list(c.shape), "sha256": hashlib.sha256(c.tobytes()).hexdigest()}
    if isinstance(x, (np.integer, np.floating, np.bool_)):
        return x.item()
    if isinstance(x, (complex, np.complexfloating)):
        return [x.real, x.imag]
    raise TypeError(f"not serialisable: {type(x)!r}")


@dataclass(frozen=True)
class EnsembleResult:
    n_traj: int
    n_hits: int
    p_hat: float
    ci95: tuple[float, float]
    seed: int
    config_digest: str

    @classmethod
    def from_hits(cls, hits, seed: int, config_digest: str) -> "EnsembleResult":
        hits = np.asarray(hits, dtype=bool)
        n = int(hits.size)
        k = int(hits.sum())
        return cls(n, k, k / n if n else float("nan"), clopper_pearson(k, n), int(seed), config_digest)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d


def loglinear_slope(x, p) -> float:
    """Least-squares slope of ``log p`` against ``x`` over points with ``p > 0``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = p > 0
    if keep.sum() < 2:
        raise ValueError("need at least two points with positive probability")
    return float(np.polyfit(x[keep], np.log(p[keep]), 1)[0])
