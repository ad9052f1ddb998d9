"""Error metrics, Monte-Carlo update variance and percentile envelopes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyInput


@dataclass
class EpochRecord:
    theta_tilde: np.ndarray
    w_tilde: np.ndarray
    pseudo_gradient_count: int
    conv_error: float
    tracking_error_sq: float
    anchor_residual: float = 0.0


@dataclass
class RunTrace:
    """Recorded errors of one run, keyed by cumulative pseudo-gradient count."""

    counts: list = field(default_factory=list)
    conv_error: list = field(default_factory=list)
    tracking_error_sq: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    theta: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None

    def add(self, count, conv, track):
        self.counts.append(int(count))
        self.conv_error.append(float(conv))
        self.tracking_error_sq.append(float(track))

    @property
    def points(self):
        return list(zip(self.counts, self.conv_error, self.tracking_error_sq))

    def as_arrays(self):
        return (np.asarray(self.counts, dtype=np.int64), np.asarray(self.conv_error),
                np.asarray(self.tracking_error_sq))


def convergence_error(theta, theta_star) -> float:
    return float(np.linalg.norm(np.asarray(theta) - np.asarray(theta_star)))


def tracking_vector(theta, w, moments):
    """``z = w + C^{-1}(b + A theta)`` using the cached solves in ``moments``."""
    return np.asarray(w) + moments.Cinv_b + moments.Cinv_A @ np.asarray(theta)


def tracking_error_sq(theta, w, moments) -> float:
    z = tracking_vector(theta, w, moments)
    return float(z @ z)


@dataclass(frozen=True)
class UpdateSnapshot:
    """Algorithm state needed to evaluate its update direction on new samples.

    ``theta_a``, ``w_a``, ``G_a`` and ``H_a`` are the SVRG anchors and batch
    pseudo-gradients; they are ``None`` for the plain recursions.
    """

    algo: str
    theta: np.ndarray
    w: np.ndarray
    theta_a: Optional[np.ndarray] = None
    w_a: Optional[np.ndarray] = None
    G_a: Optional[np.ndarray] = None
    H_a: Optional[np.ndarray] = None


def _directions(problem, cols, theta, w, with_w):
    f, fn, rho, r = cols
    g = problem.gamma
    delta = rho * ((g * fn - f) @ theta + r)
    G = delta[:, None] * f
    H = G.copy()
    if with_w:
        fw = f @ w
        G -= (g * rho * fw)[:, None] * fn
        H -= fw[:, None] * f
    return G, H


def update_directions(snap: UpdateSnapshot, problem, batch):
    """Corrected update directions of ``snap`` on every sample of ``batch``.

    Returns ``(theta_dirs, w_dirs)``, each ``(n, d)``. The w-direction of the
    one time-scale methods is zero.
    """
    cols = problem.columns(batch)
    two = snap.algo in ("TDC", "VRTDC_IID", "VRTDC_MARKOV")
    G, H = _directions(problem, cols, snap.theta, snap.w, two)
    if snap.theta_a is not None:
        Ga, Ha = _directions(problem, cols, snap.theta_a, snap.w_a, two)
        G = G - Ga + snap.G_a
        H = H - Ha + (snap.H_a if two else 0.0)
    if not two:
        H = np.zeros_like(G)
    return G, H


@dataclass(frozen=True)
class VarianceEstimate:
    var_theta: float
    var_w: float


def _trace_cov(X):
    if len(X) < 2:
        return 0.0
    # shifting by one row keeps constant columns exactly zero
    return float(np.sum(np.var(X - X[0], axis=0, ddof=1)))


def mc_update_variance(snap: UpdateSnapshot, problem, sampler, n_mc=500) -> VarianceEstimate:
    """Trace of the covariance of the update directions over ``n_mc`` new samples.

    ``sampler`` only needs a ``draw(n)`` method; it never touches the running
    algorithm's own sample stream.
    """
    G, H = update_directions(snap, problem, sampler.draw(n_mc))
    return VarianceEstimate(_trace_cov(G), _trace_cov(H))


@dataclass(frozen=True)
class Envelope:
    grid: np.ndarray
    p5: np.ndarray
    p50: np.ndarray
    p95: np.ndarray


def carry_forward(counts, values, grid):
    """Piecewise-constant resampling of ``values`` onto ``grid``.

    Grid points before the first count take the first value.
    """
    counts = np.asarray(counts)
    idx = np.searchsorted(counts, np.asarray(grid), side="right") - 1
    return np.asarray(values, dtype=float)[np.clip(idx, 0, None)]


def nearest_rank(X, q, axis=0):
    """Nearest-rank percentile with ties resolved to the lower order statistic."""
    X = np.sort(np.asarray(X, dtype=float), axis=axis)
    n = X.shape[axis]
    k = max(int(np.ceil(q / 100.0 * n)) - 1, 0)
    return np.take(X, k, axis=axis)


def aggregate_envelope(traces, grid, metric="conv_error") -> Envelope:
    """Pointwise 5/50/95 percentiles of ``metric`` across traces."""
    traces = list(traces)
    if not traces:
        raise EmptyInput("no traces to aggregate")
    grid = np.asarray(grid)
    Y = np.stack([carry_forward(t.counts, getattr(t, metric), grid) for t in traces])
    return Envelope(grid, nearest_rank(Y, 5), nearest_rank(Y, 50), nearest_rank(Y, 95))
