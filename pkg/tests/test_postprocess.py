import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.stats import ortho_group

from latentcss.model_core import log_likelihood
from latentcss.postprocess import (agreement_csv, agreement_probabilities, align_samples,
                                   aligned_chain, consensus_csv, consensus_probabilities,
                                   position_summaries, positions_csv, procrustes_rotation,
                                   summarize)
from latentcss.sampler import ChainOutput

from conftest import random_css, random_state


def _orth(K, rng):
    return ortho_group.rvs(K, random_state=rng) if K > 1 else np.array([[-1.0]])


def _rotated_copies(state, S, rng):
    return [state.copy()] + [state.rotated(_orth(state.K, rng)) for _ in range(S - 1)]


def test_procrustes_identity(rng):
    W = rng.normal(size=(10, 3))
    np.testing.assert_allclose(procrustes_rotation(W, W), np.eye(3), atol=1e-12)


def test_procrustes_recovers_rotation(rng):
    W = rng.normal(size=(12, 3))
    R = ortho_group.rvs(3, random_state=rng)
    Q = procrustes_rotation(W, W @ R)
    np.testing.assert_allclose(Q, R.T, atol=1e-10)
    assert np.abs(W - W @ R @ Q).max() < 1e-10


def test_procrustes_reflection(rng):
    W = rng.normal(size=(8, 2))
    F = W.copy()
    F[:, 1] *= -1
    np.testing.assert_allclose(procrustes_rotation(W, F), np.diag([1.0, -1.0]), atol=1e-12)


def test_procrustes_errors():
    with pytest.raises(ValueError):
        procrustes_rotation(np.zeros((4, 2)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        procrustes_rotation(np.zeros((2, 3)), np.zeros((2, 3)))


def test_procrustes_flags_degenerate():
    W = np.zeros((6, 2))
    W[:, 0] = 1.0
    _, info = procrustes_rotation(W, W, return_info=True)
    assert info["degenerate"]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(1, 4), rows=st.integers(4, 12))
def test_procrustes_orthogonal_and_not_worse(seed, K, rows):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(rows, K)), rng.normal(size=(rows, K))
    Q = procrustes_rotation(A, B)
    assert np.abs(Q.T @ Q - np.eye(K)).max() < 1e-12
    assert np.linalg.norm(A - B @ Q) <= np.linalg.norm(A - B) + 1e-12


def test_align_single_sample(rng):
    chain = ChainOutput.from_states([random_state(4, 2, rng)])
    al = align_samples(chain)
    np.testing.assert_allclose(al.rotations[0], np.eye(2), atol=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3])
def test_align_rotated_copies(K, rng):
    Y = random_css(5, rng)
    base = random_state(5, K, rng)
    states = _rotated_copies(base, 8, rng)
    chain = ChainOutput.from_states(states)
    al = align_samples(chain)
    for s in range(8):
        assert np.abs(al.eta[s] - base.eta).max() < 1e-8
        assert np.abs(al.u[s] - base.u).max() < 1e-8
        assert np.abs(al.rotations[s].T @ al.rotations[s] - np.eye(K)).max() < 1e-10
    fixed = aligned_chain(chain, al)
    for before, after in zip(chain.samples, fixed.samples):
        assert abs(log_likelihood(Y, None, before) - log_likelihood(Y, None, after)) < 1e-10


def test_align_preserves_bilinear_terms(rng):
    states = [random_state(4, 3, rng) for _ in range(5)]
    chain = ChainOutput.from_states(states)
    al = align_samples(chain)
    d = chain.draws
    raw = np.einsum("sajk,sbjk->sabj", d["u"], d["v"])
    new = np.einsum("sajk,sbjk->sabj", al.u, al.v)
    assert np.abs(raw - new).max() < 1e-10


def test_agreement_probabilities(rng):
    states = [random_state(4, 1, rng) for _ in range(6)]
    for k, s in enumerate(states):
        s.gamma[:] = [1, k % 2, 0, 1]
        s.xi[:] = 1
    pg, px = agreement_probabilities(ChainOutput.from_states(states))
    np.testing.assert_array_equal(pg, [1.0, 0.5, 0.0, 1.0])
    np.testing.assert_array_equal(px, np.ones(4))


def test_consensus_degenerate(rng):
    s = random_state(3, 2, rng)
    s.nu[:] = 0
    s.eta[:] = 0
    s.zeta[:] = 0
    C = consensus_probabilities(ChainOutput.from_states([s, s]))
    off = ~np.eye(3, dtype=bool)
    assert np.all(C[off] == 0.5) and np.all(np.isnan(np.diag(C)))


def test_consensus_single_sample(rng):
    s = random_state(3, 2, rng)
    C = consensus_probabilities(ChainOutput.from_states([s]))
    assert C[0, 2] == pytest.approx(stats.norm.cdf(s.nu[0] + s.eta[0] @ s.zeta[2]), abs=1e-14)


def test_consensus_with_covariate_baseline(rng):
    s = random_state(3, 1, rng, p=2)
    C = consensus_probabilities(ChainOutput.from_states([s]), x_baseline=[1.0, 0.5])
    lp = s.nu[0] + 0.5 * s.nu[1] + s.eta[1, 0] * s.zeta[0, 0]
    assert C[1, 0] == pytest.approx(stats.norm.cdf(lp), abs=1e-14)


def test_summaries_invariant_to_alignment(rng):
    chain = ChainOutput.from_states([random_state(4, 2, rng) for _ in range(6)])
    fixed = aligned_chain(chain)
    np.testing.assert_allclose(consensus_probabilities(fixed), consensus_probabilities(chain),
                               atol=1e-12)
    for a, b in zip(agreement_probabilities(fixed), agreement_probabilities(chain)):
        np.testing.assert_array_equal(a, b)


def test_position_summaries_constant_and_midpoint(rng):
    s = random_state(4, 2, rng)
    s.eta[:, 0] *= 10                                 # dimension 0 dominates
    summ = position_summaries(align_samples(ChainOutput.from_states([s, s])))
    np.testing.assert_allclose(summ.eta, s.eta, atol=1e-12)
    assert list(summ.dim_order) == [0, 1]

    a = random_state(3, 1, rng)
    a.eta, a.zeta = np.abs(a.eta), np.abs(a.zeta)
    b = a.copy()
    b.eta, b.zeta, b.u = a.eta + 1.0, a.zeta + 1.0, a.u + 1.0
    summ = position_summaries(align_samples(ChainOutput.from_states([a, b])))
    # positive cross-product, so the second draw is not reflected
    np.testing.assert_allclose(summ.u, a.u + 0.5, atol=1e-12)


def test_position_summaries_reorders_dimensions(rng):
    s = random_state(6, 3, rng)
    s.eta[:, 2] *= 50
    s.zeta[:, 2] *= 50
    summ = position_summaries(align_samples(ChainOutput.from_states([s])))
    assert summ.dim_order[0] == 2
    np.testing.assert_allclose(summ.eta[:, 0], s.eta[:, 2], atol=1e-10)
    assert np.all(np.diff(summ.dim_variance) <= 0)


def test_summarize_and_csv(rng):
    states = [random_state(3, 2, rng) for _ in range(4)]
    chain = ChainOutput.from_states(states)
    summ = summarize(chain)
    assert summ.beta_interval.shape == (2, 3, 1)
    assert np.all((summ.p_gamma >= 0) & (summ.p_gamma <= 1))
    text = agreement_csv(summ.p_gamma, summ.p_xi, ["a", "b", "c"])
    assert text.splitlines()[0] == "actor,p_gamma,p_xi"
    assert text.splitlines()[1].startswith("a,")
    lines = consensus_csv(summ.consensus).splitlines()
    assert lines[0] == "i,i',prob" and len(lines) == 1 + 6
    pos = positions_csv(position_summaries(align_samples(chain))).splitlines()
    assert pos[0] == "actor,perceiver,space,dim,mean"
    assert len(pos) == 1 + 2 * 9 * 2 + 2 * 3 * 2
    assert {row.split(",")[2] for row in pos[1:]} == {"sender", "receiver", "consensus_sender",
                                                       "consensus_receiver"}
