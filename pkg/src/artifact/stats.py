"""Per-sample TD statistics, exact population moments and derived constants."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .env import (FeatureMap, MDPModel, Policy, Transition, TransitionBatch, induced_chain,
                  stationary_distribution)
from .errors import (CoverageViolation, DimensionMismatch, NotNegativeDefinite, SingularA,
                     SingularC, SingularMatrix)
from .numerics import inverse, solve_linear, spectral_norm, sym_eigvals, sym_max_eig

R_THETA_FLOOR = 1e-6


def importance_ratio(target: Policy, behavior: Policy, s, a) -> float:
    p, q = target.probs[s, a], behavior.probs[s, a]
    if q == 0.0:
        if p > 0.0:
            raise CoverageViolation(f"behavior never takes action {a} in state {s}")
        return 0.0
    return float(p / q)


def ratio_table(target: Policy, behavior: Policy) -> np.ndarray:
    """``pi(a|s) / pi_b(a|s)`` for every pair, 0 where both vanish."""
    p, q = target.probs, behavior.probs
    if p.shape != q.shape:
        raise DimensionMismatch(f"policy shapes {p.shape} and {q.shape}")
    bad = (q == 0) & (p > 0)
    if np.any(bad):
        s, a = np.argwhere(bad)[0]
        raise CoverageViolation(f"behavior never takes action {a} in state {s}")
    return np.divide(p, q, out=np.zeros_like(p), where=q > 0)


@dataclass(frozen=True)
class SampleStats:
    A_x: np.ndarray
    B_x: np.ndarray
    C_x: np.ndarray
    b_x: np.ndarray
    rho_x: float


def sample_stats(x: Transition, phi: FeatureMap, gamma, rho_x) -> SampleStats:
    f, fn = phi.phi[x.s], phi.phi[x.s_next]
    return SampleStats(
        A_x=rho_x * np.outer(f, gamma * fn - f),
        B_x=-gamma * rho_x * np.outer(fn, f),
        C_x=-np.outer(f, f),
        b_x=x.r * rho_x * f,
        rho_x=float(rho_x),
    )


@dataclass(frozen=True)
class Problem:
    """Everything that defines an off-policy evaluation instance."""

    model: MDPModel
    features: FeatureMap
    target: Policy
    behavior: Policy

    def __post_init__(self):
        S, A = self.model.n_states, self.model.n_actions
        for pol in (self.target, self.behavior):
            if pol.probs.shape != (S, A):
                raise DimensionMismatch(f"policy {pol.probs.shape} vs model ({S}, {A})")
        if self.features.phi.shape[0] != S:
            raise DimensionMismatch("feature rows must match n_states")

    @property
    def gamma(self) -> float:
        return self.model.gamma

    @property
    def d(self) -> int:
        return self.features.d

    @cached_property
    def rho(self) -> np.ndarray:
        return ratio_table(self.target, self.behavior)

    @cached_property
    def chain(self):
        return induced_chain(self.model, self.behavior)

    @cached_property
    def mu(self) -> np.ndarray:
        return stationary_distribution(self.chain)

    def stats(self, x: Transition) -> SampleStats:
        return sample_stats(x, self.features, self.gamma, self.rho[x.s, x.a])

    def columns(self, batch: TransitionBatch):
        """Arrays ``(phi(s), phi(s'), rho, r)`` for a batch of transitions."""
        phi = self.features.phi
        return phi[batch.s], phi[batch.s_next], self.rho[batch.s, batch.a], batch.r


@dataclass(frozen=True)
class ExactMoments:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    b: np.ndarray
    A_hat: np.ndarray
    b_hat: np.ndarray
    A_bar: np.ndarray
    b_bar: np.ndarray
    Cinv_A: np.ndarray
    Cinv_b: np.ndarray
    theta_star: np.ndarray
    mu: np.ndarray
    gamma: float


def _population_abc(problem: Problem, mu):
    P, R = problem.model.kernel, problem.model.reward
    phi, g = problem.features.phi, problem.gamma
    # weight of (s, a, s') under the behaviour stationary law, times rho
    Wr = mu[:, None, None] * problem.behavior.probs[:, :, None] * P * problem.rho[:, :, None]
    ws = Wr.sum(axis=(1, 2))                   # mass per s of rho-weighted samples
    wsn = Wr.sum(axis=1)                       # (s, s')
    A = g * np.einsum("st,si,tj->ij", wsn, phi, phi) - np.einsum("s,si,sj->ij", ws, phi, phi)
    B = -g * np.einsum("st,ti,sj->ij", wsn, phi, phi)
    C = -np.einsum("s,si,sj->ij", mu, phi, phi)
    b = np.einsum("sat,sat,si->i", Wr, R, phi)
    return A, B, C, b


def exact_moments(problem: Problem, mu=None) -> ExactMoments:
    """Population ``A, B, C, b`` and the quantities derived from them.

    Raises
    ------
    SingularA, SingularC
        When the instance is not solvable.
    """
    mu = problem.mu if mu is None else np.asarray(mu, dtype=float)
    A, B, C, b = _population_abc(problem, mu)
    try:
        Cinv = inverse(C)
    except SingularMatrix as exc:
        raise SingularC(str(exc)) from exc
    Cinv_A, Cinv_b = Cinv @ A, Cinv @ b
    theta_star = optimal_theta(A, b)
    return ExactMoments(
        A=A, B=B, C=C, b=b,
        A_hat=A - B @ Cinv_A, b_hat=b - B @ Cinv_b,
        # at population level the bar transform removes everything
        A_bar=A - C @ Cinv_A, b_bar=b - C @ Cinv_b,
        Cinv_A=Cinv_A, Cinv_b=Cinv_b,
        theta_star=theta_star, mu=mu, gamma=problem.gamma,
    )


def optimal_theta(A, b=None) -> np.ndarray:
    """``theta* = -A^{-1} b``; accepts an :class:`ExactMoments` as first argument."""
    if isinstance(A, ExactMoments):
        A, b = A.A, A.b
    try:
        return -solve_linear(A, b)
    except SingularMatrix as exc:
        raise SingularA(str(exc)) from exc


def hat_bar_transform(s: SampleStats, m: ExactMoments):
    """Return ``(A_hat_x, b_hat_x, A_bar_x, b_bar_x)`` for one sample."""
    return (s.A_x - s.B_x @ m.Cinv_A, s.b_x - s.B_x @ m.Cinv_b,
            s.A_x - s.C_x @ m.Cinv_A, s.b_x - s.C_x @ m.Cinv_b)


@dataclass(frozen=True)
class SpectralConstants:
    lambda_A_hat: float
    lambda_C: float
    min_abs_eig_C: float
    rho_max: float
    r_max: float


def spectral_constants(m: ExactMoments, target: Policy, behavior: Policy, r_max) -> SpectralConstants:
    """Curvature constants of the instance.

    Raises
    ------
    NotNegativeDefinite
        If either curvature constant is not positive.
    """
    K = m.A.T @ m.Cinv_A
    lam_hat = -sym_max_eig(K + K.T)
    lam_c = -sym_max_eig(m.C + m.C.T)
    if lam_hat <= 0 or lam_c <= 0:
        raise NotNegativeDefinite(f"lambda_A_hat={lam_hat:.3e}, lambda_C={lam_c:.3e}")
    eig_c = sym_eigvals(0.5 * (m.C + m.C.T))
    rho = ratio_table(target, behavior)
    supported = behavior.probs > 0
    return SpectralConstants(
        lambda_A_hat=lam_hat,
        lambda_C=lam_c,
        min_abs_eig_C=float(np.min(np.abs(eig_c))),
        rho_max=float(np.max(rho[supported])),
        r_max=float(r_max),
    )


def problem_constants(problem: Problem, m: ExactMoments | None = None) -> SpectralConstants:
    m = exact_moments(problem) if m is None else m
    return spectral_constants(m, problem.target, problem.behavior, problem.model.r_max)


@dataclass(frozen=True)
class Radii:
    R_theta: float
    R_w: float


def compute_radii(m: ExactMoments, safety=1.0) -> Radii:
    """Projection radii.

    ``R_theta = safety * max(|A| |b|, |theta*|)`` floored at ``1e-6`` and
    ``R_w = safety * 2 |C^-1| |A| R_theta_base``, so both radii scale linearly
    with ``safety``.
    """
    if safety < 1:
        raise ValueError("safety must be at least 1")
    norm_A = spectral_norm(m.A)
    base = max(norm_A * np.linalg.norm(m.b), np.linalg.norm(m.theta_star), R_THETA_FLOOR)
    norm_Cinv = spectral_norm(inverse(m.C))
    return Radii(R_theta=float(safety * base), R_w=float(safety * 2.0 * norm_Cinv * norm_A * base))
