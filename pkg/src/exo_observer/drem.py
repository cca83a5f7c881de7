"""Regressor mixing, excitation monitoring and pair normalization."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .mathkit import adj_dot_nb, det_nb, min_eig_sym


@dataclass(frozen=True)
class RegressionPair:
    """Measurable pair with ``Y == M * unknown``.

    ``M`` is normally a scalar. Component-wise pairs (several scalar
    regressions stacked together) carry an array ``M`` broadcastable
    against ``Y``.
    """

    Y: np.ndarray
    M: float | np.ndarray
    label: str = ""

    def residual(self, truth) -> float:
        """Relative contract violation ``|Y - M truth| / (|M| |truth|)``."""
        truth = np.asarray(truth, dtype=float)
        M = np.asarray(self.M, dtype=float)
        err = np.linalg.norm(np.asarray(self.Y) - M * truth)
        scale = np.linalg.norm(M * np.ones_like(truth)) / np.sqrt(max(truth.size, 1))
        scale *= np.linalg.norm(truth)
        return float(err / scale) if scale > 0 else float(err)

    def ratio(self) -> np.ndarray:
        """``Y / M`` where ``M`` is nonzero (nan elsewhere)."""
        M = np.asarray(self.M, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(M != 0, np.asarray(self.Y) / M, np.nan)


@njit(cache=True)
def mix_nb(phi, q, k):
    return k * adj_dot_nb(phi, q), k * det_nb(phi)


def mix(phi, q, k: float = 1.0, label: str = "eta") -> RegressionPair:
    """Turn ``q = phi eta`` into ``k adj(phi) q = k det(phi) eta``."""
    phi = np.ascontiguousarray(phi, dtype=float)
    Y, M = mix_nb(phi, np.asarray(q, dtype=float), float(k))
    return RegressionPair(Y, float(M), label)


@njit(cache=True)
def normalize_nb(Y, M, floor):
    s = floor + abs(M)
    return Y / s, M / s


def normalize(pair: RegressionPair, floor: float = 1.0) -> RegressionPair:
    """Divide both sides by ``floor + |M|``; the contract is unchanged.

    With the default unit floor large multipliers are squashed towards
    one. A smaller floor also lifts small multipliers to order one once
    they exceed it.
    """
    M = np.asarray(pair.M, dtype=float)
    s = floor + np.abs(M)
    Y = np.asarray(pair.Y, dtype=float)
    if M.ndim == 0:
        return replace(pair, Y=Y / s, M=float(M / s))
    return replace(pair, Y=Y / s, M=M / s)


def fe_monitor(phi, threshold: float) -> tuple[bool, float]:
    level = min_eig_sym(phi)
    return level >= threshold, level


@dataclass
class ExcitationMonitor:
    """Tracks the smallest eigenvalue of the extended regressor over time.

    ``t_e`` is the first sample at which the level reached ``threshold``.
    """

    threshold: float
    t_e: float | None = None
    level: float = 0.0
    history: list[tuple[float, float]] = field(default_factory=list)

    def update(self, t: float, phi) -> bool:
        excited, self.level = fe_monitor(phi, self.threshold)
        self.history.append((t, self.level))
        if excited and self.t_e is None:
            self.t_e = t
        return excited

    @property
    def excited(self) -> bool:
        return self.t_e is not None
