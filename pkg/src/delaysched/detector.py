"""Windowed chi-square residue detector with false-alarm-rate calibration."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2


def chi_square_statistic(res: np.ndarray, sigma_res: np.ndarray) -> float:
    """Normalized quadratic form res^T Sigma^-1 res; always >= 0."""
    res = np.atleast_1d(np.asarray(res, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma_res, dtype=float))
    try:
        solved = np.linalg.solve(sigma, res)
    except np.linalg.LinAlgError as exc:
        raise ValueError("residue covariance is singular") from exc
    return float(res @ solved)


def threshold_for_far(m: int, window: int, far: float) -> float:
    """Threshold on the windowed mean of chi-square statistics so that the
    per-step false alarm rate under nominal N(0, Sigma) residues is ``far``.

    The mean of ``window`` iid chi2(m) variables is chi2(window*m)/window, so
    the threshold is that distribution's (1 - far) quantile.
    """
    if not 0 < far < 1:
        raise ValueError("false alarm rate must lie in (0, 1)")
    return float(chi2.ppf(1.0 - far, window * m) / window)


@dataclass
class ChiSquareDetector:
    """Detector state for one control loop: ring buffer of the last
    ``window`` chi-square statistics, compared as a mean against ``threshold``.

    Partial windows average over the samples seen so far, so the detector is
    live from the first residue.  The alarm comparison is strict (g > Th).
    """

    dim: int
    window: int
    sigma_res: np.ndarray
    threshold: float
    _buffer: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        self.sigma_res = np.atleast_2d(np.asarray(self.sigma_res, dtype=float))
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        self._buffer = deque(maxlen=self.window)

    def step(self, res: np.ndarray) -> tuple[float, bool]:
        """Push one residue; returns (windowed statistic g, alarm flag)."""
        w = chi_square_statistic(res, self.sigma_res)
        self._buffer.append(w)
        g = sum(self._buffer) / len(self._buffer)
        return g, g > self.threshold

    def reset(self) -> None:
        self._buffer.clear()
