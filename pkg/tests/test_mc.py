import math

import numpy as np
import pytest

from stochbif.diagram import BifurcationDiagram
from stochbif.fem import build_space
from stochbif.klexp import scalar_kl, uniform_kl
from stochbif.mc import (DRAW_BOUNDS, InitPolicy, McEnsemble, McSample, draw_parameters, ensemble_stats,
                         run_mc, vy_variance, _branch_states)
from stochbif.mesh import MeshPreset, SymmetryMode, build_channel_mesh
from stochbif.nssolve import FlowProblem, FlowState, SweepResult, newton_flow

SMALL = MeshPreset(3, 2, 4, 2.0, SymmetryMode.UNSTRUCTURED, jitter=0.1, seed=5)


@pytest.fixture(scope="module")
def small():
    return FlowProblem(build_space(build_channel_mesh(SMALL)))


@pytest.fixture(scope="module")
def fake_sweep(small):
    """Three labelled states per parameter; the side passes carry shifted fields."""
    states = {}
    for mu in (0.8, 0.9, 1.0):
        base = newton_flow(None, mu, small)
        states[("sym", mu)] = base
        for label, shift in (("upper", 1.0), ("lower", -1.0)):
            v = base.v.copy()
            v[small.free_v] += shift
            states[(label, mu)] = FlowState(v, base.p, mu, 0.0, True)
    return SweepResult(BifurcationDiagram(), states, 0.95, 0.9)


def test_policy_parsing():
    assert InitPolicy.parse("ZeroGuess") is InitPolicy.ZERO
    assert InitPolicy.parse("continuation") is InitPolicy.CONTINUATION
    assert InitPolicy.parse("branch-cycling") is InitPolicy.CYCLING
    with pytest.raises(ValueError):
        InitPolicy.parse("random")


def test_draws_are_seeded():
    law = scalar_kl(0.9, math.sqrt(0.001), "hermite")
    a, ra = draw_parameters(law, 300, 11)
    b, rb = draw_parameters(law, 300, 11)
    assert np.array_equal(a, b) and ra == rb == 0
    assert not np.array_equal(a, draw_parameters(law, 300, 12)[0])
    with pytest.raises(ValueError):
        draw_parameters(law, 0, 1)


def test_wide_gaussian_draws_are_truncated():
    draws, rejected = draw_parameters(scalar_kl(0.9, 0.5, "hermite"), 2000, 3)
    assert len(draws) == 2000 and rejected > 0
    assert draws.min() >= DRAW_BOUNDS[0] and draws.max() <= DRAW_BOUNDS[1]


def test_uniform_draws_stay_in_support():
    draws, rejected = draw_parameters(uniform_kl(0.845, 0.955), 1000, 4)
    assert rejected == 0 and draws.min() >= 0.845 and draws.max() <= 0.955


def test_degenerate_law_gives_identical_samples(small):
    ens = run_mc(scalar_kl(1.2, 0.0, "hermite"), 3, "zero", 0, small)
    assert np.all(ens.mu_draws == 1.2)
    assert all(s.converged for s in ens.samples)
    st = ensemble_stats(ens, small)
    assert st.n_converged == 3
    np.testing.assert_allclose(st.variance, 0, atol=1e-20)


def test_runs_are_reproducible(small):
    law = uniform_kl(1.1, 1.3)
    a = run_mc(law, 4, "zero", 9, small)
    b = run_mc(law, 4, "zero", 9, small)
    assert np.array_equal(a.mu_draws, b.mu_draws)
    assert [s.converged for s in a.samples] == [s.converged for s in b.samples]
    assert all(np.array_equal(x.state.v, y.state.v) for x, y in zip(a.samples, b.samples))


def test_threaded_run_matches_serial(small):
    law = uniform_kl(1.1, 1.3)
    a = run_mc(law, 4, "zero", 9, small)
    b = run_mc(law, 4, "zero", 9, small, jobs=2)
    assert all(np.array_equal(x.state.v, y.state.v) for x, y in zip(a.samples, b.samples))


def test_policies_need_sweep(small):
    with pytest.raises(ValueError):
        run_mc(uniform_kl(1.1, 1.3), 2, "continuation", 0, small)


def test_branch_states_at_nearest_parameter(fake_sweep):
    mu, states = _branch_states(fake_sweep, 0.87)
    assert mu == 0.9
    assert [lab for lab, _ in states] == ["sym", "upper", "lower"]


def test_cycling_walks_passes(small, fake_sweep):
    ens = run_mc(uniform_kl(0.85, 0.95), 6, "cycling", 1, small, fake_sweep, max_iter=0)
    assert [s.init_label for s in ens.samples] == ["sym", "upper", "lower"] * 2


def test_continuation_picks_are_seeded(small, fake_sweep):
    law = uniform_kl(0.85, 0.95)
    a = run_mc(law, 12, "continuation", 5, small, fake_sweep, max_iter=0)
    b = run_mc(law, 12, "continuation", 5, small, fake_sweep, max_iter=0)
    labels = [s.init_label for s in a.samples]
    assert labels == [s.init_label for s in b.samples]
    assert set(labels) == {"sym", "upper", "lower"}


def test_stats_need_two_samples(small):
    s = newton_flow(None, 1.5, small)
    ens = McEnsemble([McSample(0, 1.5, s, InitPolicy.ZERO)], InitPolicy.ZERO, 0)
    with pytest.raises(ValueError):
        ensemble_stats(ens, small)


def test_stats_values(small):
    a = newton_flow(None, 1.5, small)
    b = newton_flow(None, 2.0, small)
    ens = McEnsemble([McSample(0, 1.5, a, InitPolicy.ZERO), McSample(1, 2.0, b, InitPolicy.ZERO)],
                     InitPolicy.ZERO, 0)
    st = ensemble_stats(ens, small)
    np.testing.assert_allclose(st.mean, 0.5 * (a.v + b.v))
    np.testing.assert_allclose(st.variance, 0.5 * (a.v - b.v) ** 2, atol=1e-14)
    assert st.scatter.shape == (2, 2) and st.scatter[1, 0] == 2.0
    assert vy_variance(st, small).shape == (small.space.n_q2,)
