import numpy as np
import pytest

from hetmf import (add_rule, build_random_m, build_two_choice, cache_config, drift,
                   drift_hessian, drift_jacobian, encode, lb_config, new_model, q_matrix,
                   rule, zipf_popularities)
from oracles import (cache_drift_closed_form, cache_q_closed_form, fd_hessian, fd_jacobian,
                     lb_drift_closed_form, random_assignment, random_model, random_state)


def test_no_rules_zero_drift():
    m = new_model(3, ["a", "b"])
    assert np.all(drift(m, random_state(np.random.default_rng(0), 3, 2)) == 0.0)


def test_length_mismatch_rejected(fig1_model):
    with pytest.raises(ValueError):
        drift(fig1_model, np.zeros(3))
    with pytest.raises(ValueError):
        q_matrix(fig1_model, np.zeros(3))


def test_two_object_cache_hand_enumeration():
    """n=2 cache with one list of size 1 and unit popularities: starting from
    (object 1 in, object 2 out), only the rule 'object 2 requested' is active
    and it swaps the two objects at rate 1."""
    cfg = cache_config([1.0, 1.0], [1])
    m = build_random_m(cfg)
    x = encode(m, ["1", "0"])
    f = drift(m, x).reshape(2, 2)
    # object 1: leaves "1" and enters "0"; object 2: the other way round
    assert f[0, 1] == pytest.approx(-1.0) and f[0, 0] == pytest.approx(1.0)
    assert f[1, 0] == pytest.approx(-1.0) and f[1, 1] == pytest.approx(1.0)


def test_cache_drift_mass_conservation(rng):
    cfg = cache_config(zipf_popularities(20, 0.8), [5, 3, 2])
    m = build_random_m(cfg)
    for _ in range(3):
        f = drift(m, random_state(rng, 20, 4)).reshape(20, 4)
        assert np.abs(f.sum(axis=1)).max() <= 1e-12


def test_jacobian_single_unilateral_rule():
    m = add_rule(new_model(2, ["a", "b"]), rule([(0, "a", "b")], 1.7))
    x = np.array([0.6, 0.4, 0.3, 0.7])
    jac = drift_jacobian(m, x)
    expected = np.zeros((4, 4))
    expected[1, 0] = 1.7   # d f_(1,b) / d x_(1,a)
    expected[0, 0] = -1.7
    assert np.allclose(jac, expected, atol=0)


def test_jacobian_zero_rule_model():
    m = new_model(2, ["a", "b"])
    assert np.all(drift_jacobian(m, np.array([1.0, 0, 1, 0])) == 0)


def test_hessian_single_pairwise_rule():
    m = add_rule(new_model(2, ["a", "b"]), rule([(0, "a", "b"), (1, "a", "b")], 0.9))
    x = np.array([0.2, 0.8, 0.5, 0.5])
    H = drift_hessian(m, x).to_dense()
    # f_(1,b) = 0.9 x_(1,a) x_(2,a): cross second derivative is the rate
    assert H[1, 0, 2] == pytest.approx(0.9)
    assert H[1, 2, 0] == pytest.approx(0.9)
    assert H[0, 0, 2] == pytest.approx(-0.9)
    assert H[1, 0, 0] == 0.0


def test_hessian_unilateral_only_is_zero(rng):
    m = random_model(rng, n=3, num_states=2, unilateral=5, pairwise=0)
    H = drift_hessian(m, random_state(rng, 3, 2))
    assert np.all(H.to_dense() == 0.0)
    assert np.all(H.contract(rng.random((6, 6))) == 0.0)


def test_hessian_same_object_blocks_vanish(rng):
    """For pairwise models both derivative indices must hit distinct objects."""
    for _ in range(5):
        m = random_model(rng)
        H = drift_hessian(m, random_state(rng, m.n, m.num_states)).to_dense()
        S = m.num_states
        for k in range(m.n):
            blk = H[:, k * S:(k + 1) * S, k * S:(k + 1) * S]
            assert np.all(blk == 0.0)


def test_jacobian_hessian_match_finite_differences(rng):
    for _ in range(6):
        m = random_model(rng)
        x = random_state(rng, m.n, m.num_states)
        assert np.abs(drift_jacobian(m, x) - fd_jacobian(m, x)).max() <= 1e-6
        assert np.abs(drift_hessian(m, x).to_dense() - fd_hessian(m, x)).max() <= 1e-6


def test_hessian_contract_matches_dense(rng):
    for _ in range(5):
        m = random_model(rng)
        x = random_state(rng, m.n, m.num_states)
        w = rng.standard_normal((m.dim, m.dim))
        w = w + w.T
        H = drift_hessian(m, x)
        expected = np.einsum("iul,ul->i", H.to_dense(), w)
        assert np.allclose(H.contract(w), expected, atol=1e-12)


class TestQMatrix:
    def test_single_unilateral_block(self):
        m = add_rule(new_model(1, ["a", "b"]), rule([(0, "a", "b")], 2.5))
        x = np.array([0.3, 0.7])
        q = q_matrix(m, x)
        assert np.allclose(q, 2.5 * 0.3 * np.array([[1, -1], [-1, 1]]))

    def test_symmetry_random_models(self, rng):
        for _ in range(5):
            m = random_model(rng)
            q = q_matrix(m, random_state(rng, m.n, m.num_states))
            assert np.array_equal(q, q.T)

    def test_psd_and_block_sums(self, rng):
        for _ in range(5):
            m = random_model(rng)
            q = q_matrix(m, random_state(rng, m.n, m.num_states))
            assert np.linalg.eigvalsh(q).min() >= -1e-10
            S = m.num_states
            sums = q.reshape(m.n, S, m.dim).sum(axis=1)
            assert np.abs(sums).max() <= 1e-12

    def test_cache_closed_form(self, rng, cache8_cfg, cache8_model):
        lam, m_sizes = cache8_cfg.lambdas, cache8_cfg.list_sizes
        for _ in range(3):
            x = random_state(rng, 8, 4)
            q = q_matrix(cache8_model, x)
            q_ref = cache_q_closed_form(lam, m_sizes, x)
            assert np.abs(q - q_ref).max() <= 1e-12


def test_cache_drift_matches_literal_form_on_indicators(rng, cache8_cfg, cache8_model):
    """At admissible indicator states the enumeration drift equals the
    literal per-list transcription (including its aggregate-popularity
    shortcuts)."""
    from hetmf import default_assignment
    base = default_assignment(cache8_cfg)
    for _ in range(10):
        assignment = list(rng.permutation(base))
        x = encode(cache8_model, assignment)
        f = drift(cache8_model, x)
        f_ref = cache_drift_closed_form(cache8_cfg.lambdas, cache8_cfg.list_sizes, x)
        assert np.abs(f - f_ref).max() <= 1e-12


def test_lb_drift_matches_tail_form_at_random_x(rng, lb_small):
    model = build_two_choice(lb_small)
    for _ in range(5):
        x = random_state(rng, lb_small.n, lb_small.buffer + 1)
        f = drift(model, x)
        f_ref = lb_drift_closed_form(lb_small.mus, lb_small.arrival_rate, lb_small.buffer, x)
        assert np.abs(f - f_ref).max() <= 1e-12


def test_drift_conservation_property(rng):
    for _ in range(10):
        m = random_model(rng)
        x = random_state(rng, m.n, m.num_states)
        f = drift(m, x).reshape(m.n, m.num_states)
        assert np.abs(f.sum(axis=1)).max() <= 1e-12
        jac = drift_jacobian(m, x)
        col_blocks = jac.reshape(m.n, m.num_states, m.dim).sum(axis=1)
        assert np.abs(col_blocks).max() <= 1e-12
