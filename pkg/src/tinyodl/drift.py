"""Drift detectors that switch an edge device into training mode."""
from __future__ import annotations

from collections import deque

import numpy as np


class DriftDetector:
    """Base interface: ``is_drift(x, i)`` is consulted once per event."""

    def fit(self, X):
        return self

    def is_drift(self, x, i: int) -> bool:
        raise NotImplementedError

    def drift_ongoing(self, x, i: int) -> bool:
        """Whether a *new* drift is visible while the device is already training."""
        return False

    def rebase(self):
        """Called when the device enters training mode."""


class ScriptedDrift(DriftDetector):
    """Fires for every event index ``i >= trigger_at``."""

    def __init__(self, trigger_at: int):
        self.trigger_at = int(trigger_at)

    def is_drift(self, x, i):
        return i >= self.trigger_at

    def __repr__(self):
        return f"ScriptedDrift(trigger_at={self.trigger_at})"


class CentroidDrift(DriftDetector):
    """Distance between the training centroid and the mean of recent inputs.

    Parameters
    ----------
    window : int
        Number of recent samples averaged.
    tau : float or None
        L2 distance threshold. When None, :meth:`fit` calibrates it from
        random windows of the training data as the larger of
        mean + ``n_std`` std and 1.5 x mean of their centroid distances.
        Window-mean distances concentrate tightly in high dimension, hence
        the relative floor.
    n_std : float
        Spread multiplier of the calibration. The check runs on every event,
        so a per-window false alarm rate that looks small still adds up over
        a long stream.
    """

    def __init__(self, window=64, tau=None, n_std=5.0, random_state=0):
        if window < 1:
            raise ValueError("window must be positive")
        self.window = int(window)
        self.tau = tau
        self.n_std = float(n_std)
        self.random_state = random_state
        self.train_centroid = None
        self._ref_sum = None
        self._ref_count = 0
        self._buf = deque(maxlen=self.window)
        self._sum = None
        self._last = None

    def fit(self, X, n_windows=200):
        X = np.asarray(X, dtype=np.float64)
        self.train_centroid = X.mean(axis=0)
        if self.tau is None:
            rng = np.random.default_rng(self.random_state)
            w = min(self.window, len(X))
            d = np.array([
                np.linalg.norm(X[rng.choice(len(X), w, replace=False)].mean(axis=0)
                               - self.train_centroid)
                for _ in range(n_windows)
            ])
            self.tau = float(max(d.mean() + self.n_std * d.std(), 1.5 * d.mean()))
        self.reset_window()
        return self

    def reset_window(self):
        self._buf.clear()
        self._sum = None
        self._last = None

    @property
    def window_mean(self):
        if not self._buf:
            return None
        return self._sum / len(self._buf)

    def _push(self, x, i):
        # observe-then-ask is idempotent for a repeated sample index
        if self._last == i:
            return False
        x = np.asarray(x, dtype=np.float64)
        if self._sum is None:
            self._sum = np.zeros_like(x)
        if len(self._buf) == self.window:
            self._sum -= self._buf[0]
        self._buf.append(x)
        self._sum += x
        self._last = i
        return True

    def _distance(self, ref):
        return float(np.linalg.norm(self.window_mean - ref))

    def is_drift(self, x, i):
        if self.train_centroid is None:
            raise RuntimeError("CentroidDrift used before fit(): training centroid not set")
        self._push(x, i)
        return len(self._buf) == self.window and self._distance(self.train_centroid) > self.tau

    def rebase(self):
        # compare against the post-drift distribution from now on
        self._ref_sum = None
        self._ref_count = 0
        self.reset_window()

    def drift_ongoing(self, x, i):
        """Window mean against the running mean of everything seen since :meth:`rebase`."""
        if self._push(x, i):
            xs = self._buf[-1]
            self._ref_sum = xs.copy() if self._ref_sum is None else self._ref_sum + xs
            self._ref_count += 1
        if self._ref_count < 2 * self.window:
            return False
        if self._distance(self._ref_sum / self._ref_count) > self.tau:
            self.rebase()
            return True
        return False

    def __repr__(self):
        return f"CentroidDrift(window={self.window}, tau={self.tau})"


def parse_drift(spec: str) -> DriftDetector:
    """Build a detector from ``scripted:<index>`` or ``centroid:W=..,tau=..,n_std=..``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "scripted":
        return ScriptedDrift(int(rest or 0))
    if kind == "centroid":
        kw = {}
        for part in filter(None, rest.split(",")):
            key, _, val = part.partition("=")
            key = key.strip().lower()
            if key in ("w", "window"):
                kw["window"] = int(val)
            elif key == "tau":
                kw["tau"] = float(val)
            elif key == "n_std":
                kw["n_std"] = float(val)
            else:
                raise ValueError(f"unknown centroid option {key!r}")
        return CentroidDrift(**kw)
    raise ValueError(f"unknown drift detector {spec!r}")
