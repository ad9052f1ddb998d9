"""TD, TDC, VRTD and variance-reduced TDC (i.i.d. and Markovian sampling)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .diagnostics import EpochRecord, RunTrace, UpdateSnapshot, tracking_error_sq
from .env import IIDSampler, TransitionBatch, make_rng
from .errors import DimensionMismatch, InvalidParams, TrajectoryTooShort
from .stats import ExactMoments, Problem, Radii, SampleStats, exact_moments

ALGOS = ("TD", "TDC", "VRTD", "VRTDC_IID", "VRTDC_MARKOV")
TWO_SCALE = ("TDC", "VRTDC_IID", "VRTDC_MARKOV")

# pseudo-gradient evaluations per inner step and per batch sample
PG_PER_STEP = {"TD": 1, "TDC": 2, "VRTD": 2, "VRTDC_IID": 4, "VRTDC_MARKOV": 4}
PG_PER_BATCH_SAMPLE = {"TD": 0, "TDC": 0, "VRTD": 1, "VRTDC_IID": 2, "VRTDC_MARKOV": 2}


@dataclass(frozen=True)
class AlgoParams:
    """Step sizes, batch size and run length.

    ``steps`` sets the number of updates of the plain recursions and defaults
    to ``epochs * M``.
    """

    algo: str
    alpha: float
    beta: float
    M: int
    epochs: int
    radii: Radii
    seed: object = 0
    record_every: int = 10
    steps: Optional[int] = None
    theta0: Optional[np.ndarray] = None
    w0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise InvalidParams(f"unknown algorithm {self.algo!r}")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidParams("step sizes must be nonnegative")
        if self.M < 1 or self.epochs < 1 or self.record_every < 1:
            raise InvalidParams("M, epochs and record_every must be positive")

    @property
    def n_steps(self) -> int:
        return self.steps if self.steps is not None else self.epochs * self.M


@dataclass
class IterateState:
    theta: np.ndarray
    w: np.ndarray


def project(v, R):
    """Euclidean projection onto the ball of radius ``R``."""
    v = np.asarray(v, dtype=float)
    n = np.sqrt(v @ v)
    return v * (R / n) if n > R else v


def pseudo_gradients(s: SampleStats, theta, w):
    """``G = A_x theta + b_x + B_x w`` and ``H = A_x theta + b_x + C_x w``."""
    base = s.A_x @ theta + s.b_x
    return base + s.B_x @ w, base + s.C_x @ w


def _batch_directions(cols, gamma, theta, w, two):
    """Vectorised ``G`` and ``H`` over a batch, via the rank-one structure."""
    f, fn, rho, r = cols
    delta = rho * ((gamma * fn - f) @ theta + r)
    G = delta[:, None] * f
    if not two:
        return G, np.zeros_like(G)
    fw = f @ w
    H = G - fw[:, None] * f
    G = G - (gamma * rho * fw)[:, None] * fn
    return G, H


class BoundMonitor:
    """Counts violations of the per-sample and per-update norm bounds.

    Per-sample bounds are checked on every transition an algorithm consumes;
    update bounds on every corrected update direction.
    """

    def __init__(self, problem: Problem, moments: ExactMoments, spectral, radii: Radii, rtol=1e-12):
        from .theory import vr_bounds

        g, rho, r, mC = problem.gamma, spectral.rho_max, spectral.r_max, spectral.min_abs_eig_C
        self.problem, self.moments, self.rtol = problem, moments, rtol
        self.vr = vr_bounds(radii.R_theta, r, rho, g, mC)
        self.limits = {
            "A_x": (1 + g) * rho,
            "B_x": g * rho,
            "C_x": 1.0,
            "b_x": rho * r,
            "A_hat_x": (1 + g) * rho * (1 + g * rho / mC),
            "A_hat_x theta* + b_hat_x": ((1 + g) * radii.R_theta + r) * rho * (1 + g * rho / mC),
            "G update": self.vr.G_VR,
            "H update": self.vr.H_VR,
        }
        self.violations = {k: 0 for k in self.limits}
        self.max_ratio = {k: 0.0 for k in self.limits}
        self.n_samples = 0
        self.n_updates = 0

    def _note(self, key, values):
        lim = self.limits[key]
        values = np.atleast_1d(values)
        if len(values) == 0:
            return
        self.violations[key] += int(np.sum(values > lim * (1 + self.rtol) + 1e-15))
        if lim > 0:
            self.max_ratio[key] = max(self.max_ratio[key], float(np.max(values) / lim))

    def samples(self, batch: TransitionBatch):
        f, fn, rho, r = self.problem.columns(batch)
        g, m = self.problem.gamma, self.moments
        nf, nfn = np.linalg.norm(f, axis=1), np.linalg.norm(fn, axis=1)
        e = g * fn - f
        self._note("A_x", rho * nf * np.linalg.norm(e, axis=1))
        self._note("B_x", g * rho * nfn * nf)
        self._note("C_x", nf ** 2)
        self._note("b_x", np.abs(r) * rho * nf)
        # A_hat_x = rho f e^T + g rho fn (f^T C^-1 A): rank two, use a batched SVD
        Ax = rho[:, None, None] * f[:, :, None] * e[:, None, :]
        Bx = -g * rho[:, None, None] * fn[:, :, None] * f[:, None, :]
        Ahat = Ax - Bx @ m.Cinv_A
        self._note("A_hat_x", np.linalg.norm(Ahat, ord=2, axis=(1, 2)))
        bhat = (r * rho)[:, None] * f - Bx @ m.Cinv_b
        self._note("A_hat_x theta* + b_hat_x", np.linalg.norm(Ahat @ m.theta_star + bhat, axis=1))
        self.n_samples += len(batch)

    def update(self, g_dir, h_dir):
        self._note("G update", np.sqrt(g_dir @ g_dir))
        self._note("H update", np.sqrt(h_dir @ h_dir))
        self.n_updates += 1

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


class _Recorder:
    def __init__(self, params: AlgoParams, moments: ExactMoments, probe):
        self.every = params.record_every
        self.moments = moments
        self.probe = probe
        self.trace = RunTrace(meta={"algo": params.algo, "alpha": params.alpha, "beta": params.beta,
                                    "M": params.M, "epochs": params.epochs,
                                    "record_every": params.record_every})
        self.next_mark = 0
        self.count = 0

    def tick(self, n, theta, w, snap_fn=None):
        self.count += n
        if self.count >= self.next_mark:
            self.record(theta, w, snap_fn)

    def record(self, theta, w, snap_fn=None):
        m = self.moments
        self.trace.add(self.count, np.linalg.norm(theta - m.theta_star), tracking_error_sq(theta, w, m))
        if self.probe is not None and snap_fn is not None:
            self.probe(self.count, snap_fn())
        self.next_mark = (self.count // self.every + 1) * self.every


def _init(params: AlgoParams, problem: Problem, moments):
    d = problem.d
    if moments is None:
        moments = exact_moments(problem)
    if len(moments.theta_star) != d:
        raise DimensionMismatch(f"moments of dimension {len(moments.theta_star)} vs features {d}")
    theta = np.zeros(d) if params.theta0 is None else np.array(params.theta0, dtype=float)
    w = np.zeros(d) if params.w0 is None else np.array(params.w0, dtype=float)
    if theta.shape != (d,) or w.shape != (d,):
        raise DimensionMismatch("initial iterates must have the feature dimension")
    theta = project(theta, params.radii.R_theta)
    w = project(w, params.radii.R_w)
    return moments, theta, w


def _take_stream(stream, n):
    if isinstance(stream, TransitionBatch):
        if len(stream) < n:
            raise TrajectoryTooShort(f"need {n} transitions, trajectory has {len(stream)}")
        return stream[:n]
    return stream.draw(n)


def run_baseline(kind, params: AlgoParams, stream, problem: Problem, moments=None, *,
                 monitor: Optional[BoundMonitor] = None, probe: Optional[Callable] = None) -> RunTrace:
    """Plain TD or TDC on ``params.n_steps`` consecutive samples of ``stream``.

    ``stream`` is a trajectory (:class:`TransitionBatch`) or any sampler with a
    ``draw(n)`` method.
    """
    if kind not in ("TD", "TDC"):
        raise InvalidParams(f"baseline must be TD or TDC, got {kind!r}")
    params = replace(params, algo=kind)
    moments, theta, w = _init(params, problem, moments)
    batch = _take_stream(stream, params.n_steps)
    if monitor is not None:
        monitor.samples(batch)
    f, fn, rho, r = problem.columns(batch)
    g = problem.gamma
    e = rho[:, None] * (g * fn - f)
    rr = rho * r
    grho = g * rho
    a, b = params.alpha, params.beta
    Rt, Rw = params.radii.R_theta, params.radii.R_w
    two = kind == "TDC"
    rec = _Recorder(params, moments, probe)
    snap = lambda: UpdateSnapshot(kind, theta.copy(), w.copy())  # noqa: E731
    rec.record(theta, w, snap)
    zero = np.zeros_like(w)
    for t in range(len(batch)):
        ft = f[t]
        delta = e[t] @ theta + rr[t]
        G = delta * ft
        if two:
            fw = ft @ w
            H = G - fw * ft
            G = G - (grho[t] * fw) * fn[t]
            w = project(w + b * H, Rw)
        else:
            H = zero
        theta = project(theta + a * G, Rt)
        if monitor is not None:
            monitor.update(G, H)
        rec.tick(PG_PER_STEP[kind], theta, w, snap)
    rec.trace.theta, rec.trace.w = theta, w
    return rec.trace


def _run_svrg(params: AlgoParams, problem: Problem, moments, batches, inner, monitor, probe):
    kind = params.algo
    two = kind in TWO_SCALE
    moments, theta_a, w_a = _init(params, problem, moments)
    g = problem.gamma
    a, b = params.alpha, params.beta
    Rt, Rw = params.radii.R_theta, params.radii.R_w
    M = params.M
    rec = _Recorder(params, moments, probe)
    state = {}
    snap = lambda: UpdateSnapshot(kind, state["theta"].copy(), state["w"].copy(),  # noqa: E731
                                  theta_a.copy(), w_a.copy(), state["G_a"].copy(), state["H_a"].copy())
    rec.trace.add(0, np.linalg.norm(theta_a - moments.theta_star),
                  tracking_error_sq(theta_a, w_a, moments))
    rec.next_mark = params.record_every
    worst_anchor = 0.0
    for m in range(params.epochs):
        batch = batches(m)
        xs = inner(m, batch)
        if monitor is not None:
            monitor.samples(batch)
            if xs is not batch:
                monitor.samples(xs)
        G_all, H_all = _batch_directions(problem.columns(batch), g, theta_a, w_a, two)
        G_a, H_a = G_all.mean(axis=0), H_all.mean(axis=0)
        cols = problem.columns(xs)
        Ga_x, Ha_x = _batch_directions(cols, g, theta_a, w_a, two)
        f, fn, rho, r = cols
        e = rho[:, None] * (g * fn - f)
        rr = rho * r
        grho = g * rho
        theta, w = theta_a.copy(), w_a.copy()
        state.update(theta=theta, w=w, G_a=G_a, H_a=H_a)
        rec.tick(PG_PER_BATCH_SAMPLE[kind] * M, theta, w, snap)
        sum_t = np.zeros_like(theta)
        sum_w = np.zeros_like(w)
        anchor_res = 0.0
        for t in range(M):
            sum_t += theta
            sum_w += w
            ft = f[t]
            delta = e[t] @ theta + rr[t]
            G = delta * ft
            if two:
                fw = ft @ w
                H = G - fw * ft
                G = G - (grho[t] * fw) * fn[t]
                dH = H - Ha_x[t] + H_a
            else:
                dH = H_a
            dG = G - Ga_x[t] + G_a
            if t == 0:
                anchor_res = max(np.max(np.abs(dG - G_a)), np.max(np.abs(dH - H_a)))
            if monitor is not None:
                monitor.update(dG, dH)
            theta = project(theta + a * dG, Rt)
            if two:
                w = project(w + b * dH, Rw)
            state["theta"], state["w"] = theta, w
            rec.tick(PG_PER_STEP[kind], theta, w, snap)
        theta_a, w_a = sum_t / M, sum_w / M
        worst_anchor = max(worst_anchor, anchor_res)
        rec.trace.epochs.append(EpochRecord(
            theta_a.copy(), w_a.copy(), rec.count,
            float(np.linalg.norm(theta_a - moments.theta_star)),
            tracking_error_sq(theta_a, w_a, moments), float(anchor_res)))
    rec.trace.meta["max_anchor_residual"] = float(worst_anchor)
    rec.trace.theta, rec.trace.w = theta_a, w_a
    return rec.trace


def _markov_sources(params, trajectory: TransitionBatch):
    M = params.M
    need = params.epochs * M
    if len(trajectory) < need:
        raise TrajectoryTooShort(f"need {need} transitions, trajectory has {len(trajectory)}")
    rng = make_rng(params.seed)
    batches = lambda m: trajectory[m * M:(m + 1) * M]  # noqa: E731
    # inner samples are drawn from the epoch batch uniformly, with replacement
    inner = lambda m, batch: batch.take(rng.integers(0, M, size=M))  # noqa: E731
    return batches, inner


def _iid_sources(params, sampler):
    batches = lambda m: sampler.draw(params.M)  # noqa: E731
    inner = lambda m, batch: sampler.draw(params.M)  # noqa: E731
    return batches, inner


def run_vrtd(params: AlgoParams, stream, problem: Problem, moments=None, *,
             monitor=None, probe=None) -> RunTrace:
    """SVRG on the one time-scale TD direction ``A_x theta + b_x``.

    A trajectory gives the Markovian variant (consecutive batches, inner
    samples drawn from the batch); a sampler gives the i.i.d. variant.
    """
    params = replace(params, algo="VRTD")
    if isinstance(stream, TransitionBatch):
        src = _markov_sources(params, stream)
    else:
        src = _iid_sources(params, stream)
    return _run_svrg(params, problem, moments, *src, monitor, probe)


def run_vrtdc_iid(params: AlgoParams, sampler: IIDSampler, problem: Problem, moments=None, *,
                  monitor=None, probe=None) -> RunTrace:
    """Variance-reduced TDC with fresh i.i.d. samples for batches and inner steps."""
    params = replace(params, algo="VRTDC_IID")
    return _run_svrg(params, problem, moments, *_iid_sources(params, sampler), monitor, probe)


def run_vrtdc_markov(params: AlgoParams, trajectory: TransitionBatch, problem: Problem,
                     moments=None, *, monitor=None, probe=None) -> RunTrace:
    """Variance-reduced TDC on one Markovian trajectory.

    Epoch ``m`` uses the slice ``[m*M, (m+1)*M)`` as its batch and draws inner
    samples uniformly with replacement from that slice.
    """
    params = replace(params, algo="VRTDC_MARKOV")
    return _run_svrg(params, problem, moments, *_markov_sources(params, trajectory), monitor, probe)


def run_algorithm(params: AlgoParams, problem: Problem, moments=None, *, trajectory=None,
                  sampler=None, monitor=None, probe=None) -> RunTrace:
    """Dispatch on ``params.algo``; Markovian runs need ``trajectory``."""
    stream = trajectory if trajectory is not None else sampler
    if params.algo in ("TD", "TDC"):
        return run_baseline(params.algo, params, stream, problem, moments, monitor=monitor, probe=probe)
    if params.algo == "VRTD":
        return run_vrtd(params, stream, problem, moments, monitor=monitor, probe=probe)
    if params.algo == "VRTDC_IID":
        return run_vrtdc_iid(params, sampler, problem, moments, monitor=monitor, probe=probe)
    return run_vrtdc_markov(params, trajectory, problem, moments, monitor=monitor, probe=probe)
