from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from artifact.algorithms import (AlgoParams, BoundMonitor, _batch_directions, project,
                                 pseudo_gradients, run_algorithm, run_baseline, run_vrtd,
                                 run_vrtdc_iid, run_vrtdc_markov)
from artifact.env import IIDSampler, Transition, TransitionBatch, sample_trajectory
from artifact.errors import InvalidParams, TrajectoryTooShort
from artifact.stats import Radii

from conftest import enumerate_transitions

vec = arrays(np.float64, 4, elements=st.floats(-50, 50, allow_subnormal=False))


def iid(bundle, seed=1):
    pr = bundle.problem
    return IIDSampler(pr.model, pr.behavior, pr.mu, seed)


def traj(bundle, n, seed=0):
    pr = bundle.problem
    return sample_trajectory(pr.model, pr.behavior, n, seed=seed, mu=pr.mu)


def test_project_examples():
    np.testing.assert_allclose(project([3.0, 4.0], 2.0), [1.2, 1.6])
    v = np.array([0.3, -0.1])
    assert project(v, 1.0) is not None and np.array_equal(project(v, 1.0), v)


@settings(max_examples=300, deadline=None)
@given(vec, vec, st.floats(1e-3, 100))
def test_project_nonexpansive(u, v, R):
    pu, pv = project(u, R), project(v, R)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) * (1 + 1e-12) + 1e-12
    assert np.linalg.norm(pu) <= R * (1 + 1e-12)


def test_pseudo_gradients_cycle2(cycle2):
    s = cycle2.problem.stats(Transition(0, 0, 1.0, 1))
    G, H = pseudo_gradients(s, np.array([1.0, 1.0]), np.zeros(2))
    np.testing.assert_allclose(G, [0.5, 0.0])
    G, H = pseudo_gradients(s, np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(G, s.b_x)
    np.testing.assert_array_equal(H, s.b_x)


def test_population_mean_vanishes_at_solution(garnet):
    pr, m = garnet.problem, garnet.moments
    s, a, s2, w = enumerate_transitions(pr)
    batch = TransitionBatch(s, a, pr.model.reward[s, a, s2], s2)
    w_star = -m.Cinv_A @ m.theta_star - m.Cinv_b
    G, H = _batch_directions(pr.columns(batch), pr.gamma, m.theta_star, w_star, True)
    np.testing.assert_allclose(w @ G, 0.0, atol=1e-12)
    np.testing.assert_allclose(w @ H, 0.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_batch_directions_match_definition(seed):
    from conftest import smoke_garnet

    pr = smoke_garnet(seed % 50)
    rng = np.random.default_rng(seed)
    xs = IIDSampler(pr.model, pr.behavior, pr.mu, seed).draw(8)
    theta, w = rng.standard_normal(pr.d), rng.standard_normal(pr.d)
    G, H = _batch_directions(pr.columns(xs), pr.gamma, theta, w, True)
    for i, x in enumerate(xs):
        g, h = pseudo_gradients(pr.stats(x), theta, w)
        np.testing.assert_allclose(G[i], g, atol=1e-12)
        np.testing.assert_allclose(H[i], h, atol=1e-12)


def test_params_validation(cycle2):
    with pytest.raises(InvalidParams):
        AlgoParams("SGD", 0.1, 0.1, 1, 1, cycle2.radii)
    with pytest.raises(InvalidParams):
        AlgoParams("TD", 0.1, 0.1, 0, 1, cycle2.radii)


def test_tdc_cycle2_converges(cycle2):
    p = AlgoParams("TDC", 0.1, 0.05, 1, 1, cycle2.radii, steps=10 ** 4)
    tr = run_baseline("TDC", p, iid(cycle2), cycle2.problem, cycle2.moments)
    assert np.linalg.norm(tr.theta - cycle2.moments.theta_star) < 0.05
    assert tr.counts[-1] == 2 * 10 ** 4


def test_frozen_dynamics(cycle2):
    p = AlgoParams("TDC", 0.0, 0.05, 1, 1, cycle2.radii, steps=500, theta0=np.array([0.3, -0.2]))
    tr = run_baseline("TDC", p, iid(cycle2), cycle2.problem, cycle2.moments)
    np.testing.assert_array_equal(tr.theta, [0.3, -0.2])


@pytest.mark.parametrize("algo", ["TD", "TDC", "VRTD", "VRTDC_IID", "VRTDC_MARKOV"])
def test_deterministic(garnet, algo):
    p = AlgoParams(algo, 0.05, 0.02, 50, 4, garnet.radii, seed=[1, 2], steps=300 if algo in ("TD", "TDC") else None)
    runs = []
    for _ in range(2):
        tr = run_algorithm(p, garnet.problem, garnet.moments, trajectory=traj(garnet, 400),
                           sampler=iid(garnet, 5))
        runs.append(tr.as_arrays())
    for x, y in zip(*runs):
        assert x.tobytes() == y.tobytes()


def test_trajectory_too_short(garnet):
    p = AlgoParams("VRTDC_MARKOV", 0.05, 0.02, 50, 4, garnet.radii)
    with pytest.raises(TrajectoryTooShort):
        run_vrtdc_markov(p, traj(garnet, 100), garnet.problem, garnet.moments)


@pytest.mark.parametrize("markov", [False, True])
def test_vrtd_cycle2(cycle2, markov):
    p = AlgoParams("VRTD", 0.1, 0.0, 64, 50, cycle2.radii, seed=3)
    stream = traj(cycle2, 64 * 50) if markov else iid(cycle2)
    tr = run_vrtd(p, stream, cycle2.problem, cycle2.moments)
    assert np.linalg.norm(tr.theta - cycle2.moments.theta_star) < 0.02
    assert tr.meta["max_anchor_residual"] <= 1e-12


def test_vrtdc_iid_cycle2(cycle2):
    p = AlgoParams("VRTDC_IID", 0.1, 0.05, 128, 40, cycle2.radii)
    norms = []
    probe = lambda c, s: norms.append((np.linalg.norm(s.theta), np.linalg.norm(s.w)))  # noqa: E731
    tr = run_vrtdc_iid(p, iid(cycle2), cycle2.problem, cycle2.moments, probe=probe)
    assert tr.epochs[-1].conv_error < 0.02
    assert tr.epochs[-1].tracking_error_sq < 1e-3
    assert all(a <= cycle2.radii.R_theta + 1e-12 and b <= cycle2.radii.R_w + 1e-12 for a, b in norms)
    assert len(norms) > 100


def test_projection_binds_with_tiny_radius(garnet):
    r = Radii(0.01, 0.02)
    p = AlgoParams("VRTDC_IID", 0.5, 0.5, 20, 5, r)
    seen = []
    probe = lambda c, s: seen.append(max(np.linalg.norm(s.theta) / 0.01, np.linalg.norm(s.w) / 0.02))  # noqa: E731
    p = AlgoParams("VRTDC_IID", 0.5, 0.5, 20, 5, r, record_every=1)
    run_vrtdc_iid(p, iid(garnet), garnet.problem, garnet.moments, probe=probe)
    assert max(seen) <= 1 + 1e-12 and max(seen) > 0.99


class _Capture:
    def __init__(self):
        self.batches, self.updates = [], []

    def samples(self, batch):
        self.batches.append(batch)

    def update(self, g, h):
        self.updates.append((g.copy(), h.copy()))


def test_markov_m1_collapses_to_plain(garnet):
    pr = garnet.problem
    t = traj(garnet, 6)
    cap = _Capture()
    p = AlgoParams("VRTDC_MARKOV", 0.05, 0.02, 1, 6, garnet.radii, theta0=np.full(pr.d, 0.1))
    tr = run_vrtdc_markov(p, t, pr, garnet.moments, monitor=cap)
    assert [len(b) for b in cap.batches] == [1] * 12
    for x, (g, h) in zip(t, cap.updates):
        # a one-sample average keeps the anchor at the epoch start
        g0, h0 = pseudo_gradients(pr.stats(x), np.full(pr.d, 0.1), np.zeros(pr.d))
        np.testing.assert_allclose(g, g0, atol=1e-14)
        np.testing.assert_allclose(h, h0, atol=1e-14)
    np.testing.assert_allclose(tr.theta, 0.1)


def test_pg_accounting(garnet):
    M, E = 10, 3
    for algo, per_epoch in [("VRTD", M + 2 * M), ("VRTDC_IID", 2 * M + 4 * M), ("VRTDC_MARKOV", 2 * M + 4 * M)]:
        p = AlgoParams(algo, 0.05, 0.02, M, E, garnet.radii, record_every=1)
        tr = run_algorithm(p, garnet.problem, garnet.moments, trajectory=traj(garnet, M * E),
                           sampler=iid(garnet))
        assert tr.counts[-1] == per_epoch * E
        assert tr.counts[0] == 0
    p = AlgoParams("TD", 0.05, 0.02, 1, 1, garnet.radii, steps=25, record_every=10)
    tr = run_baseline("TD", p, iid(garnet), garnet.problem, garnet.moments)
    assert list(tr.counts) == [0, 10, 20]


def test_monitor_clean_on_cycle2(cycle2):
    mon = BoundMonitor(cycle2.problem, cycle2.moments, cycle2.spectral, cycle2.radii)
    p = AlgoParams("VRTDC_IID", 0.1, 0.05, 32, 5, cycle2.radii)
    run_vrtdc_iid(p, iid(cycle2), cycle2.problem, cycle2.moments, monitor=mon)
    assert mon.total_violations == 0 and mon.n_updates == 160
    assert mon.max_ratio["A_x"] == pytest.approx(1.0 / 1.5 * np.sqrt(1.25))


def test_monitor_detects_violation(cycle2):
    from dataclasses import replace

    tight = replace(cycle2.spectral, rho_max=0.5)
    mon = BoundMonitor(cycle2.problem, cycle2.moments, tight, cycle2.radii)
    mon.samples(iid(cycle2).draw(10))
    assert mon.violations["A_x"] == 10
