import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bssbf.beamforming import (BeamAssignment, DeepFadeError, SingularBasisError, UnsupportedCodingError,
                               beam_vector, btbc_decode, btbc_encode, btbc_matrix, build_basis,
                               instantaneous_sinr, sparse_sinr)
from bssbf.scenario import (AngleGrid, ChannelRealization, SpatialProfile, SystemConfig, draw_channel,
                            make_uniform_grid, make_uniform_profile, steering_matrix)


def _grid(L, seed=0):
    return make_uniform_grid(L, np.random.default_rng(seed))


def test_orthogonal_grid_pinv_equals_response():
    L = 16
    basis = build_basis(make_uniform_grid(L, None, kappa=np.zeros(L)), num_antennas=L)
    np.testing.assert_allclose(basis.pinv, basis.response, atol=1e-10)


@given(seed=st.integers(0, 2**32 - 1), L=st.integers(2, 32), extra=st.integers(0, 16))
def test_pinv_identity(seed, L, extra):
    basis = build_basis(_grid(L, seed), num_antennas=L + extra)
    assert np.max(np.abs(basis.response.conj().T @ basis.pinv - np.eye(L))) <= 1e-8
    np.testing.assert_allclose(np.linalg.norm(basis.response, axis=0), 1.0)


def test_single_column_basis():
    basis = build_basis(AngleGrid(np.array([0.3])), num_antennas=8)
    np.testing.assert_allclose(basis.pinv, basis.response, atol=1e-14)


def test_singular_grid_raises_with_condition():
    grid = AngleGrid(np.array([0.0, 1e-9, 0.5]))
    with pytest.raises(SingularBasisError) as err:
        build_basis(grid, num_antennas=4)
    assert err.value.cond > 1e12


def test_orthogonal_single_beam_is_unit_norm_steering():
    basis = build_basis(make_uniform_grid(8, None, kappa=np.zeros(8)), num_antennas=8)
    v = beam_vector(basis, [3])
    np.testing.assert_allclose(v, basis.response[:, 3], atol=1e-12)
    assert abs(np.linalg.norm(v) - 1) < 1e-12


@given(seed=st.integers(0, 2**32 - 1), gamma=st.integers(1, 3))
def test_beam_vector_response(seed, gamma):
    rng = np.random.default_rng(seed)
    basis = build_basis(_grid(12, seed), num_antennas=12)
    beams = rng.choice(12, size=gamma, replace=False)
    v = beam_vector(basis, beams)
    expected = np.zeros(12)
    expected[beams] = 1 / math.sqrt(gamma)
    np.testing.assert_allclose(basis.response.conj().T @ v, expected, atol=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
def test_effective_gain_sparse_identity(seed):
    rng = np.random.default_rng(seed)
    L, K, G = 16, 3, 2
    grid = _grid(L, seed)
    prof = make_uniform_profile(grid, K, 5, rng)
    cfg = SystemConfig(num_antennas=L, num_users=K, grid_len=L, beams_per_user=G)
    real = draw_channel(prof, grid, cfg, rng)
    basis = build_basis(grid, cfg)
    perm = rng.permutation(L)
    assignment = BeamAssignment.of([perm[i * G:(i + 1) * G] for i in range(K)])
    sig_s = np.sqrt(prof.power) * real.s
    for k in range(K):
        for i, g in enumerate(assignment):
            full = np.vdot(real.h[k], beam_vector(basis, g))
            sparse = np.conj(sig_s[k, list(g)]).sum() / math.sqrt(G)
            assert abs(full - sparse) <= 1e-8 * max(1.0, abs(sparse))


def test_btbc_unit_symbols():
    basis = build_basis(_grid(8), num_antennas=8)
    asg = BeamAssignment.of([(1, 4)])
    b = btbc_encode(basis, asg, np.array([[1, 0]]))
    np.testing.assert_allclose(b.per_user[0, 0], basis.pinv[:, 1] / math.sqrt(2))
    np.testing.assert_allclose(b.per_user[0, 1], basis.pinv[:, 4] / math.sqrt(2))
    b = btbc_encode(basis, asg, np.array([[0, 1]]))
    np.testing.assert_allclose(b.per_user[0, 0], basis.pinv[:, 4] / math.sqrt(2))
    np.testing.assert_allclose(b.per_user[0, 1], -basis.pinv[:, 1] / math.sqrt(2))


def test_btbc_energy():
    rng = np.random.default_rng(0)
    basis = build_basis(_grid(8), num_antennas=8)
    asg = BeamAssignment.of([(2, 6)])
    x = rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2))
    b = btbc_encode(basis, asg, x)
    a1, a2 = basis.pinv[:, 2], basis.pinv[:, 6]
    e = np.sum(np.abs(x) ** 2)
    # cross terms cancel across the two slots
    expected = (np.linalg.norm(a1) ** 2 * e + np.linalg.norm(a2) ** 2 * e) / 2
    assert abs(np.sum(np.abs(b.per_user[0]) ** 2) - expected) < 1e-12


def test_btbc_requires_two_beams():
    basis = build_basis(_grid(8), num_antennas=8)
    with pytest.raises(UnsupportedCodingError):
        btbc_encode(basis, BeamAssignment.of([(1,)]), np.array([[1, 1]]))


@given(seed=st.integers(0, 2**32 - 1))
def test_btbc_noiseless_round_trip(seed):
    rng = np.random.default_rng(seed)
    L, K = 12, 3
    grid = _grid(L, seed)
    basis = build_basis(grid, num_antennas=L)
    perm = rng.permutation(L)
    asg = BeamAssignment.of([perm[2 * k:2 * k + 2] for k in range(K)])
    x = rng.standard_normal((K, 2)) + 1j * rng.standard_normal((K, 2))
    block = btbc_encode(basis, asg, x)
    gamma = 7.0
    for k, (l1, l2) in enumerate(asg):
        # user sees only its own beams: interference free
        c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        h = c[0] * basis.response[:, l1] + c[1] * basis.response[:, l2]
        y = math.sqrt(gamma) * (np.conj(h) @ block.q.T)
        g1, g2 = np.conj(h) @ basis.pinv[:, l1], np.conj(h) @ basis.pinv[:, l2]
        xh = np.array(btbc_decode(y[0], y[1], g1, g2, gamma))
        np.testing.assert_allclose(xh, x[k], atol=1e-10)


@given(a=st.complex_numbers(max_magnitude=10), b=st.complex_numbers(max_magnitude=10))
def test_code_matrix_orthogonality(a, b):
    M = btbc_matrix(a, b)
    e = abs(a) ** 2 + abs(b) ** 2
    np.testing.assert_allclose(M.conj().T @ M, e * np.eye(2), atol=1e-12 * max(1.0, e))


@given(seed=st.integers(0, 2**32 - 1))
def test_decode_invariant_to_beam_order(seed):
    rng = np.random.default_rng(seed)
    g1, g2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    x = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    gamma = 3.0
    out = []
    for a, b in ((g1, g2), (g2, g1)):
        # received [y1; conj(y2)] = sqrt(gamma/2) M(a, b) x
        z = math.sqrt(gamma / 2) * btbc_matrix(a, b) @ x
        out.append(btbc_decode(z[0], np.conj(z[1]), a, b, gamma))
    np.testing.assert_allclose(out[0], x, atol=1e-12)
    np.testing.assert_allclose(out[1], out[0], atol=1e-12)


def test_deep_fade():
    with pytest.raises(DeepFadeError):
        btbc_decode(1.0, 1.0, 0.0, 0.0, 1.0)


def _profile(power):
    return SpatialProfile(np.asarray(power, dtype=float))


def test_sinr_empty_active_set():
    prof = _profile([[0, 0, 1.0, 0], [1.0, 0, 0, 0]])
    real = ChannelRealization(np.ones((2, 4), dtype=complex), np.zeros((2, 4)))
    cfg = SystemConfig(num_antennas=4, num_users=2, grid_len=4, total_power=2.0)
    asg = BeamAssignment.of([(1,), (0,)])
    assert instantaneous_sinr(prof, real, asg, cfg, 0) == 0.0


def test_sinr_single_user():
    prof = _profile([[0.3, 0.7]])
    s = np.array([[0.2 + 0.1j, 1.3 - 0.4j]])
    cfg = SystemConfig(num_antennas=2, num_users=1, grid_len=2, total_power=5.0)
    val = instantaneous_sinr(prof, ChannelRealization(s, None), BeamAssignment.of([(1,)]), cfg, 0)
    assert abs(val - 5.0 * 0.7 * abs(s[0, 1]) ** 2) < 1e-12


@given(seed=st.integers(0, 2**32 - 1), G=st.integers(1, 2))
def test_sinr_matches_direct_double_sum(seed, G):
    rng = np.random.default_rng(seed)
    L, K = 6, 2
    power = np.zeros((K, L))
    power[0, [0, 1, 2, 3]] = rng.uniform(0.1, 1, 4)
    power[1, [2, 3, 4, 5]] = rng.uniform(0.1, 1, 4)
    prof = _profile(power)
    s = rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))
    gamma = 10.0
    cfg = SystemConfig(num_antennas=L, num_users=K, grid_len=L, beams_per_user=G, total_power=gamma * K)
    perm = rng.permutation(L)
    asg = BeamAssignment.of([perm[:G], perm[G:2 * G]])
    for k in range(K):
        # per-beam received power gamma/G |sigma s|^2, own beams signal, others interference
        sig = intf = 0.0
        for i, g in enumerate(asg):
            for l in g:
                p = gamma / G * power[k, l] * abs(s[k, l]) ** 2
                if i == k:
                    sig += p
                else:
                    intf += p
        assert abs(instantaneous_sinr(prof, ChannelRealization(s, None), asg, cfg, k) - sig / (1 + intf)) < 1e-10


@given(seed=st.integers(0, 2**32 - 1))
def test_sinr_monotonicity(seed):
    rng = np.random.default_rng(seed)
    g2 = rng.exponential(size=(2, 6))
    asg = BeamAssignment.of([(0, 1), (2, 3)])
    base = sparse_sinr(g2, asg, 3.0)[0]
    up = g2.copy()
    up[0, 0] *= 2
    assert sparse_sinr(up, asg, 3.0)[0] >= base
    down = g2.copy()
    down[0, 2] *= 2
    assert sparse_sinr(down, asg, 3.0)[0] <= base


def test_assignment_validation():
    with pytest.raises(ValueError):
        BeamAssignment.of([(0, 1), (1, 2)]).validate(2, 4)
    with pytest.raises(ValueError):
        BeamAssignment.of([(0,), (1, 2)]).validate(1, 4)
    with pytest.raises(ValueError):
        BeamAssignment.of([(0,), (7,)]).validate(1, 4)
