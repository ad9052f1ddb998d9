"""Finite MDPs, policies, features, samplers and mixing estimates."""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from math import gcd
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch, InvalidParams, NotErgodic, SingularMatrix
from .numerics import solve_linear

STOCH_TOL = 1e-12


def make_rng(seed):
    """PCG64 generator from an int, a sequence of ints or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if isinstance(seed, (list, tuple)):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class MDPModel:
    """Tabular MDP with kernel ``P[s, a, s']`` and reward ``r[s, a, s']``."""

    kernel: np.ndarray
    reward: np.ndarray
    gamma: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        P = np.asarray(self.kernel, dtype=float)
        R = np.asarray(self.reward, dtype=float)
        object.__setattr__(self, "kernel", P)
        object.__setattr__(self, "reward", R)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape:
            raise InvalidParams(f"bad kernel/reward shapes {P.shape}, {R.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > STOCH_TOL:
            raise InvalidParams("kernel rows must be nonnegative and sum to 1")
        if not np.all(np.isfinite(R)):
            raise InvalidParams("reward must be finite")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidParams(f"gamma must lie in (0, 1), got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward[self.kernel > 0]), initial=0.0))


@dataclass(frozen=True)
class Policy:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2 or np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > STOCH_TOL:
            raise InvalidParams("policy rows must be nonnegative and sum to 1")

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        object.__setattr__(self, "phi", phi)
        if phi.ndim != 2 or phi.shape[1] < 1:
            raise InvalidParams(f"features must be n_states x d, got {phi.shape}")
        if np.max(np.linalg.norm(phi, axis=1)) > 1.0 + 1e-12:
            raise InvalidParams("feature rows must have norm at most 1")

    @property
    def d(self) -> int:
        return self.phi.shape[1]


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int


@dataclass(frozen=True)
class TransitionBatch:
    """Column-oriented sequence of transitions.

    Behaves like a read-only list of :class:`Transition` while keeping the
    arrays that the vectorised code paths need.
    """

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self):
        return len(self.s)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return TransitionBatch(self.s[i], self.a[i], self.r[i], self.s_next[i])
        return Transition(int(self.s[i]), int(self.a[i]), float(self.r[i]), int(self.s_next[i]))

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield self[i]

    def take(self, idx) -> "TransitionBatch":
        return TransitionBatch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx])

    @classmethod
    def from_list(cls, xs):
        xs = list(xs)
        return cls(
            np.array([x.s for x in xs], dtype=np.int64),
            np.array([x.a for x in xs], dtype=np.int64),
            np.array([x.r for x in xs], dtype=float),
            np.array([x.s_next for x in xs], dtype=np.int64),
        )


@dataclass(frozen=True)
class ChainMatrix:
    P: np.ndarray
    irreducible: bool
    aperiodic: bool
    period: int


@dataclass(frozen=True)
class MixingEstimate:
    kappa: float
    rho: float
    fitted: bool = True


# ---------------------------------------------------------------- generators


def generate_garnet(n_states, n_actions, branching, d, seed, gamma=0.95):
    """Random Garnet MDP and unit-norm uniform features.

    Returns
    -------
    model : MDPModel
    features : FeatureMap
    """
    if min(n_states, n_actions, branching, d) < 1:
        raise InvalidParams("all Garnet dimensions must be positive")
    if branching > n_states:
        raise InvalidParams(f"branching {branching} exceeds n_states {n_states}")
    rng = make_rng(seed)
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            nxt = rng.choice(n_states, size=branching, replace=False)
            p = rng.uniform(0.0, 1.0, size=branching)
            # uniform(0,1) can return exactly 0; keep every successor reachable
            p = np.maximum(p, np.finfo(float).tiny)
            P[s, a, nxt] = p / p.sum()
    R = rng.uniform(0.0, 1.0, size=P.shape)
    phi = rng.uniform(0.0, 1.0, size=(n_states, d))
    phi /= np.linalg.norm(phi, axis=1, keepdims=True)
    meta = {"kind": "garnet", "n_states": n_states, "n_actions": n_actions,
            "branching": branching, "d": d, "seed": _seed_repr(seed)}
    return MDPModel(P, R, gamma, meta), FeatureMap(phi)


LAKE_HOLES = ((1, 1), (1, 3), (2, 3), (3, 0))
LAKE_GOAL = (3, 3)
LAKE_MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))  # left, down, right, up


def make_frozen_lake(gamma=0.95):
    """Continuing, slippery 4x4 Frozen Lake.

    Terminal cells (goal and holes) return to the start with reward 0. Entering
    the goal pays 1.
    """
    n = 4
    S = n * n
    P = np.zeros((S, 4, S))
    R = np.zeros((S, 4, S))
    goal = LAKE_GOAL[0] * n + LAKE_GOAL[1]
    terminal = {r * n + c for r, c in LAKE_HOLES} | {goal}
    for s in range(S):
        row, col = divmod(s, n)
        for a in range(4):
            if s in terminal:
                P[s, a, 0] = 1.0
                continue
            for b in ((a - 1) % 4, a, (a + 1) % 4):
                dr, dc = LAKE_MOVES[b]
                r2, c2 = row + dr, col + dc
                if not (0 <= r2 < n and 0 <= c2 < n):
                    r2, c2 = row, col
                P[s, a, r2 * n + c2] += 1.0 / 3.0
            R[s, a, goal] = 1.0
    return MDPModel(P, R, gamma, {"kind": "frozen_lake"})


def make_cycle2(gamma=0.5):
    """Two-state deterministic cycle with unit reward and one-hot features."""
    P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    R = np.ones_like(P)
    return MDPModel(P, R, gamma, {"kind": "cycle2"}), FeatureMap(np.eye(2))


def make_features_gaussian(n_states, d, seed):
    if d < 1:
        raise InvalidParams("d must be positive")
    rng = make_rng(seed)
    phi = rng.standard_normal((n_states, d))
    return FeatureMap(phi / np.linalg.norm(phi, axis=1, keepdims=True))


def make_policy(kind, n_states, n_actions, seed=None):
    if kind == "uniform":
        return Policy(np.full((n_states, n_actions), 1.0 / n_actions))
    if kind == "random":
        p = make_rng(seed).uniform(0.0, 1.0, size=(n_states, n_actions))
        p = np.maximum(p, np.finfo(float).tiny)
        return Policy(p / p.sum(axis=1, keepdims=True))
    raise InvalidParams(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------- chains


def _period(adj, start=0):
    n = adj.shape[0]
    level = np.full(n, -1)
    level[start] = 0
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        if level[u] >= 0 and level[v] >= 0:
            g = gcd(g, int(level[u] + 1 - level[v]))
    return g


def _reachability(adj):
    n = adj.shape[0]
    R = adj | np.eye(n, dtype=bool)
    while True:
        R2 = (R.astype(np.int64) @ R.astype(np.int64)) > 0
        if np.array_equal(R2, R):
            return R
        R = R2


def induced_chain(model: MDPModel, policy: Policy) -> ChainMatrix:
    if policy.probs.shape != (model.n_states, model.n_actions):
        raise DimensionMismatch(
            f"policy {policy.probs.shape} vs model ({model.n_states}, {model.n_actions})")
    P = np.einsum("sa,sat->st", policy.probs, model.kernel)
    adj = P > 0
    reach = _reachability(adj)
    irreducible = bool(reach.all())
    period = _period(adj) if irreducible else 0
    return ChainMatrix(P, irreducible, irreducible and period == 1, period)


def stationary_distribution(chain: ChainMatrix) -> np.ndarray:
    """Invariant distribution from ``(P^T - I) mu = 0`` plus normalisation.

    The last balance equation is replaced by ``sum(mu) = 1`` and the square
    system is solved directly, followed by one refinement step.

    Raises
    ------
    NotErgodic
        If the invariant distribution is not unique.
    """
    P = np.asarray(chain.P, dtype=float)
    n = P.shape[0]
    M = P.T - np.eye(n)
    M[-1] = 1.0
    y = np.zeros(n)
    y[-1] = 1.0
    try:
        mu = solve_linear(M, y)
        mu = mu + solve_linear(M, y - M @ mu)
    except SingularMatrix as exc:
        raise NotErgodic("invariant distribution is not unique") from exc
    if np.min(mu) < -1e-9:
        raise NotErgodic("invariant distribution is not unique")
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    return mu


def estimate_mixing(chain: ChainMatrix, mu, t_max=50) -> MixingEstimate:
    """Geometric envelope ``kappa * rho**t`` for the worst-case TV distance.

    A least-squares line is fitted to ``log m(t)`` and ``kappa`` is then
    raised until the envelope dominates every fitted point. A chain that mixes
    in one step gives ``kappa = 0`` and ``rho = 0.5`` by convention. Chains
    whose distance does not decay (periodic) get ``rho`` clamped just below 1
    and ``fitted=False``.
    """
    if t_max < 2:
        raise InvalidParams("t_max must be at least 2")
    P = np.asarray(chain.P, dtype=float)
    mu = np.asarray(mu, dtype=float)
    Pt = np.eye(P.shape[0])
    m = np.empty(t_max)
    for t in range(t_max):
        Pt = Pt @ P
        m[t] = 0.5 * np.max(np.abs(Pt - mu).sum(axis=1))
    ts = np.arange(1, t_max + 1)
    keep = m > 1e-14
    if not keep[0]:
        return MixingEstimate(0.0, 0.5)
    ts, logm = ts[keep], np.log(m[keep])
    if len(ts) >= 2:
        slope, _ = np.polyfit(ts, logm, 1)
    else:
        slope = np.log(0.5)
    rho = float(np.exp(slope))
    fitted = rho < 1.0 - 1e-6
    rho = min(rho, 1.0 - 1e-6)
    log_kappa = np.max(logm - ts * np.log(rho))
    kappa = float(np.exp(log_kappa))
    # guard against exp/log rounding so the envelope truly dominates
    while np.any(kappa * rho ** ts < m[keep]):
        kappa = np.nextafter(kappa, np.inf)
    return MixingEstimate(float(kappa), rho, bool(fitted))


# ---------------------------------------------------------------- sampling


def _cum_table(p):
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def _draw(cum_rows, u):
    # index of the first cumulative entry strictly above u
    return np.minimum((cum_rows <= u[:, None]).sum(axis=1), cum_rows.shape[1] - 1)


def sample_trajectory(model: MDPModel, behavior: Policy, length, seed, start="stationary",
                      mu=None) -> TransitionBatch:
    """Markovian trajectory ``s_{t+1} ~ P(.|s_t, a_t)``, ``a_t ~ behavior(.|s_t)``.

    ``start`` is a state id or ``"stationary"`` (drawn from ``mu``, computed when
    not supplied).
    """
    if length < 1:
        raise InvalidParams("length must be at least 1")
    rng = make_rng(seed)
    if start == "stationary":
        if mu is None:
            mu = stationary_distribution(induced_chain(model, behavior))
        s = int(_draw(_cum_table(np.asarray(mu))[None, :], rng.random(1))[0])
    else:
        s = int(start)
    u = rng.random((length, 2))
    cum_pi = _cum_table(behavior.probs).tolist()
    cum_P = _cum_table(model.kernel).tolist()
    nA, nS = model.n_actions, model.n_states
    S = np.empty(length, dtype=np.int64)
    A = np.empty(length, dtype=np.int64)
    S2 = np.empty(length, dtype=np.int64)
    for t in range(length):
        a = min(bisect_right(cum_pi[s], u[t, 0]), nA - 1)
        s2 = min(bisect_right(cum_P[s][a], u[t, 1]), nS - 1)
        S[t], A[t], S2[t] = s, a, s2
        s = s2
    return TransitionBatch(S, A, model.reward[S, A, S2], S2)


def sample_iid(model: MDPModel, behavior: Policy, mu, n, seed) -> TransitionBatch:
    """``n`` independent draws ``s ~ mu``, ``a ~ behavior``, ``s' ~ P``."""
    return IIDSampler(model, behavior, mu, seed).draw(n)


class IIDSampler:
    """Stateful i.i.d. sampler from the behaviour stationary distribution.

    Not safe to share between concurrent consumers; build one per stream.
    """

    def __init__(self, model: MDPModel, behavior: Policy, mu, seed):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (model.n_states,) or np.any(mu < 0) or abs(mu.sum() - 1) > 1e-9:
            raise InvalidParams("mu must be a distribution over states")
        self.model = model
        self.behavior = behavior
        self.mu = mu
        self.rng = make_rng(seed)
        self._cum_mu = _cum_table(mu)
        self._cum_pi = _cum_table(behavior.probs)
        self._cum_P = _cum_table(model.kernel)

    def draw(self, n) -> TransitionBatch:
        n = int(n)
        u = self.rng.random((n, 3))
        s = np.searchsorted(self._cum_mu, u[:, 0], side="right")
        s = np.minimum(s, self.model.n_states - 1)
        a = _draw(self._cum_pi[s], u[:, 1])
        s2 = _draw(self._cum_P[s, a], u[:, 2])
        return TransitionBatch(s, a, self.model.reward[s, a, s2], s2)


class TrajectorySampler:
    """Draws consecutive segments of one private Markovian trajectory."""

    def __init__(self, model: MDPModel, behavior: Policy, seed, mu=None):
        self.model = model
        self.behavior = behavior
        self.rng = make_rng(seed)
        self.mu = mu
        self.state = "stationary"

    def draw(self, n) -> TransitionBatch:
        batch = sample_trajectory(self.model, self.behavior, int(n), self.rng, self.state, self.mu)
        self.state = int(batch.s_next[-1])
        return batch


# ---------------------------------------------------------------- io


def _seed_repr(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, (list, tuple)):
        return [int(x) for x in seed]
    return None


def model_to_dict(model: MDPModel, features: Optional[FeatureMap] = None, extra=None):
    doc = {
        "n_states": model.n_states,
        "n_actions": model.n_actions,
        "gamma": model.gamma,
        "kernel": model.kernel.tolist(),
        "reward": model.reward.tolist(),
        "features": None if features is None else features.phi.tolist(),
        "provenance": dict(model.meta),
    }
    if extra:
        doc.update(extra)
    return doc


def model_from_dict(doc):
    model = MDPModel(np.array(doc["kernel"], dtype=float), np.array(doc["reward"], dtype=float),
                     float(doc["gamma"]), dict(doc.get("provenance") or {}))
    if model.n_states != doc["n_states"] or model.n_actions != doc["n_actions"]:
        raise InvalidParams("declared sizes disagree with the kernel")
    feats = doc.get("features")
    return model, (None if feats is None else FeatureMap(np.array(feats, dtype=float)))


def save_model(path, model, features=None, extra=None):
    # json writes floats with repr, which round-trips exactly
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_to_dict(model, features, extra), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return (*model_from_dict(doc), doc)
