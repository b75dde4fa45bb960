import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnqn.accel import (
    IQNILS,
    IQNIMVLS,
    AitkenRelaxation,
    AitkenState,
    ConstantRelaxation,
    FixedPointSnapshot,
    MultiVectorJacobian,
    PairHistory,
    aitken_step,
    filter_columns,
    ils_update,
    imvls_finalize_timestep,
    imvls_update,
    mvj_apply,
    push_pair,
    relax,
    residual,
)
from rnqn.errors import (
    AllColumnsFiltered,
    DegenerateResidual,
    DimensionError,
    ParameterError,
    SequenceError,
)


def history_from(pairs):
    """Build a history from (x_tilde, residual) pairs with consecutive indices."""
    h = PairHistory()
    for k, (xt, r) in enumerate(pairs, start=1):
        push_pair(h, FixedPointSnapshot(np.atleast_1d(np.asarray(xt, float)), np.atleast_1d(np.asarray(r, float)), k))
    return h


def random_affine(seed, m, radius):
    """x_tilde = A x + b with a prescribed spectral radius."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    eig = rng.uniform(0.2, 1.0, m) * rng.choice([-1.0, 1.0], m)
    eig[0] = radius * np.sign(eig[0])
    eig = np.clip(eig, -radius, radius)
    # I - A must stay safely invertible.
    eig = np.where(np.abs(eig - 1.0) < 0.05, -eig, eig)
    a = q @ np.diag(eig) @ q.T
    b = rng.standard_normal(m)
    return a, b


def drive(strategy, fmap, x0, n_iter):
    """Iterate x -> U(x, F(x)) and return the residual norms."""
    strategy.start_step()
    x = np.array(x0, float)
    norms = []
    for _ in range(n_iter):
        xt = fmap(x)
        norms.append(np.linalg.norm(xt - x))
        x = strategy.update(x, xt)
    return norms, x


# --- residual and relaxation -------------------------------------------------


def test_residual_examples():
    assert np.array_equal(residual([1.0, 2.0], [1.0, 1.0]), [0.0, 1.0])
    assert np.array_equal(residual([3.0, 3.0], [3.0, 3.0]), [0.0, 0.0])
    assert np.array_equal(residual([2.0], [0.0]), [2.0])
    with pytest.raises(DimensionError):
        residual([1.0], [1.0, 2.0])


def test_relax_examples():
    assert np.array_equal(relax([5.0, -1.0], [0.0, 0.0], 1.0), [5.0, -1.0])
    assert np.allclose(relax([2.0], [0.0], 0.5), [1.0])
    assert np.allclose(relax([4.0, 0.0], [0.0, 4.0], 0.25), [1.0, 3.0])
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ParameterError):
            relax([1.0], [0.0], bad)


# --- Aitken ---------------------------------------------------------------------


def test_aitken_first_call_keeps_omega():
    state = aitken_step(AitkenState(0.3), np.array([1.0]))
    assert state.omega == 0.3
    assert np.array_equal(state.previous_residual, [1.0])


def test_aitken_scalar_example():
    state = AitkenState(0.5, previous_residual=np.array([1.0]))
    assert aitken_step(state, np.array([0.5])).omega == pytest.approx(1.0)


def test_aitken_clamps_and_detects_stagnation():
    state = AitkenState(0.5, previous_residual=np.array([1.0]))
    assert aitken_step(state, np.array([0.8])).omega == 1.0  # raw 2.5
    assert aitken_step(state, np.array([1.5])).omega == 1e-4  # raw -1
    assert aitken_step(state, np.array([0.0])).omega == pytest.approx(0.5)
    with pytest.raises(DegenerateResidual):
        aitken_step(state, np.array([1.0]))
    with pytest.raises(ParameterError):
        AitkenState(0.5, omega_bounds=(0.0, 1.0))


@settings(max_examples=80, deadline=None)
@given(st.floats(-0.99, 0.0), st.floats(-10.0, 10.0), st.floats(-5.0, 5.0))
def test_aitken_secant_property(a, b, x0):
    # The clamp omega <= 1 admits the exact secant factor 1/(1-a) only for a <= 0.
    fixed = b / (1.0 - a)
    norms, x = drive(AitkenRelaxation(omega0=0.1), lambda x: a * x + b, [x0], 4)
    assert abs(x[0] - fixed) <= 1e-12 * max(1.0, abs(fixed))


# --- pair history -----------------------------------------------------------------


def test_push_pair_examples():
    h = history_from([(1.0, 1.0)])
    assert h.n_columns == 0
    h = history_from([(1.0, 1.0), (1.25, 0.75)])
    assert np.allclose(h.V, [[-0.25]]) and np.allclose(h.W, [[0.25]])
    h = history_from([(0.0, 1.0), (1.0, 3.0), (3.0, 4.0)])
    assert h.n_columns == 2
    assert np.allclose(h.V[:, 0], [1.0]) and np.allclose(h.W[:, 0], [2.0])  # newest first
    assert np.allclose(h.V[:, 1], [2.0]) and np.allclose(h.W[:, 1], [1.0])


def test_push_pair_rejects_gaps():
    h = history_from([(1.0, 1.0)])
    with pytest.raises(SequenceError):
        push_pair(h, FixedPointSnapshot(np.array([1.0]), np.array([0.0]), 3))


def test_snapshot_residual_is_consistent():
    snap = FixedPointSnapshot.from_iterate([1.0, 2.0], [1.5, 1.0], 1)
    assert np.array_equal(snap.residual, snap.x_tilde - np.array([1.0, 2.0]))


# --- filtering ------------------------------------------------------------------------


def test_filter_keeps_orthonormal_columns():
    V = np.eye(4)[:, :3]
    Vf, Wf, dropped = filter_columns(V, 2 * V, 1e-8)
    assert dropped == [] and Vf.shape == (4, 3)


def test_filter_drops_duplicate_column():
    c = np.array([1.0, 2.0, 3.0])
    V = np.column_stack([c, c])
    W = np.column_stack([np.ones(3), 2 * np.ones(3)])
    Vf, Wf, dropped = filter_columns(V, W, 1e-8)
    assert dropped == [1]
    assert np.array_equal(Wf[:, 0], np.ones(3))


def test_filter_drops_nearly_dependent_column():
    e1, e2 = np.eye(3)[:, 0], np.eye(3)[:, 1]
    _, _, dropped = filter_columns(np.column_stack([e1, e1 + 1e-12 * e2]), np.zeros((3, 2)), 1e-8)
    assert len(dropped) == 1


def test_filter_all_zero_raises():
    with pytest.raises(AllColumnsFiltered):
        filter_columns(np.zeros((3, 2)), np.zeros((3, 2)), 1e-8)


def test_filter_caps_columns_at_row_count():
    V = np.array([[1.0, 2.0, 3.0]])
    Vf, _, dropped = filter_columns(V, V, 1e-8)
    assert Vf.shape == (1, 1) and dropped == [1, 2]


# --- IQN-ILS ------------------------------------------------------------------------------


def test_ils_scalar_affine_example():
    h = history_from([(1.0, 1.0), (1.25, 0.75)])
    assert np.allclose(ils_update(h, np.array([1.25]), np.array([0.75])), [2.0])


def test_ils_zero_residual_returns_x_tilde():
    h = history_from([(np.array([1.0, 0.0]), np.array([1.0, 1.0])), (np.array([2.0, 1.0]), np.array([0.0, 1.0]))])
    xt = np.array([2.0, 1.0])
    assert np.array_equal(ils_update(h, xt, np.zeros(2)), xt)


def test_ils_single_column_solve():
    c = np.array([1.0, -2.0])
    w = np.array([0.3, 0.7])
    h = history_from([(np.zeros(2), np.zeros(2)), (w, c)])
    xt = np.array([5.0, 6.0])
    assert np.allclose(ils_update(h, xt, -c), xt + w)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1, 2, 3, 5, 8]), st.floats(0.3, 1.9), st.integers(0, 2**31 - 1))
def test_ils_affine_exactness_property(m, radius, seed):
    a, b = random_affine(seed, m, radius)
    norms, x = drive(IQNILS(omega0=0.1), lambda x: a @ x + b, np.zeros(m), m + 2)
    final = np.linalg.norm(a @ x + b - x)
    assert min(norms + [final]) <= 1e-12 * max(1.0, np.linalg.norm(b))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 4, 6]), st.integers(0, 2**31 - 1))
def test_filtering_neutral_to_duplicates(m, seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((m, m - 1))
    W = rng.standard_normal((m, m - 1))
    r = rng.standard_normal(m)
    xt = rng.standard_normal(m)

    def update(V, W):
        h = PairHistory()
        h.m = m
        h._v_cols = [V[:, j] for j in range(V.shape[1])]
        h._w_cols = [W[:, j] for j in range(W.shape[1])]
        return ils_update(h, xt, r)

    base = update(V, W)
    dup = update(np.column_stack([V, V[:, :1]]), np.column_stack([W, W[:, :1]]))
    assert np.linalg.norm(dup - base) <= 1e-10 * np.linalg.norm(base)


# --- implicit multi-vector Jacobian ---------------------------------------------------------


def test_mvj_examples():
    jac = MultiVectorJacobian()
    assert np.array_equal(mvj_apply(jac, np.array([1.0, 2.0])), np.zeros(2))
    e1, e2 = np.eye(2)
    jac.add_block(e1[:, None], 2 * e1[:, None])
    assert np.allclose(mvj_apply(jac, e1), 2 * e1)
    assert np.allclose(mvj_apply(jac, e2), 0.0)


def test_imvls_examples():
    jac = MultiVectorJacobian()
    xt = np.array([1.0, 3.0])
    assert np.array_equal(imvls_update(jac, PairHistory(), xt, np.zeros(2)), xt)
    e1 = np.eye(2)[:, 0]
    jac.add_block(e1[:, None], -e1[:, None])
    assert np.allclose(imvls_update(jac, PairHistory(), e1, e1), 2 * e1)


def test_imvls_matches_ils_with_empty_jacobian():
    h = history_from([(np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 0.0])),
                      (np.array([1.0, 1.5, 2.5]), np.array([0.2, 0.1, 0.4])),
                      (np.array([1.2, 1.0, 2.0]), np.array([0.1, -0.3, 0.2]))])
    xt = np.array([1.2, 1.0, 2.0])
    r = np.array([0.1, -0.3, 0.2])
    assert np.array_equal(imvls_update(MultiVectorJacobian(), h, xt, r), ils_update(h, xt, r))


def test_finalize_examples():
    jac = MultiVectorJacobian(max_blocks=1)
    imvls_finalize_timestep(jac, PairHistory())
    assert len(jac) == 0
    v, w = np.array([1.0, 0.0]), np.array([0.5, 0.5])
    h = history_from([(np.zeros(2), np.zeros(2)), (w, v)])
    imvls_finalize_timestep(jac, h)
    assert len(jac) == 1
    assert np.allclose(jac.blocks[0].V[:, 0], v) and np.allclose(jac.blocks[0].Wtilde[:, 0], w)
    h2 = history_from([(np.zeros(2), np.zeros(2)), (np.array([0.0, 1.0]), np.array([0.0, 2.0]))])
    imvls_finalize_timestep(jac, h2)
    assert len(jac) == 1
    assert np.allclose(jac.blocks[0].V[:, 0], [0.0, 2.0])


def test_finalize_rejects_inconsistent_cache():
    h = history_from([(np.zeros(2), np.zeros(2)), (np.ones(2), np.array([1.0, 0.0]))])
    with pytest.raises(DimensionError):
        imvls_finalize_timestep(MultiVectorJacobian(), h, np.zeros((2, 3)))


def test_jacobian_recursion_matches_explicit_matrix():
    rng = np.random.default_rng(3)
    m = 5
    jac = MultiVectorJacobian(max_blocks=0)
    explicit = np.zeros((m, m))
    for _ in range(4):
        V = rng.standard_normal((m, 2))
        W = rng.standard_normal((m, 2))
        h = PairHistory()
        h.m = m
        h._v_cols = [V[:, 0], V[:, 1]]
        h._w_cols = [W[:, 0], W[:, 1]]
        imvls_finalize_timestep(jac, h)
        explicit = explicit + (W - explicit @ V) @ np.linalg.pinv(V)
        r = rng.standard_normal(m)
        assert np.allclose(jac.apply(r), explicit @ r, atol=1e-10)


def test_eviction_equals_fresh_build_from_retained_steps():
    rng = np.random.default_rng(4)
    m = 6
    data = [(rng.standard_normal((m, 2)), rng.standard_normal((m, 2))) for _ in range(5)]

    def build(steps, max_blocks):
        jac = MultiVectorJacobian(max_blocks=max_blocks)
        for V, W in steps:
            h = PairHistory()
            h.m = m
            h._v_cols = list(V.T)
            h._w_cols = list(W.T)
            imvls_finalize_timestep(jac, h)
        return jac

    windowed = build(data, 3)
    fresh = build(data[-3:], 0)
    assert len(windowed) == 3
    r = rng.standard_normal(m)
    assert np.allclose(windowed.apply(r), fresh.apply(r), atol=1e-12)


# --- strategy objects ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "strategy",
    [ConstantRelaxation(0.4), AitkenRelaxation(), IQNILS(), IQNIMVLS()],
    ids=lambda s: s.name,
)
def test_zero_residual_leaves_x_tilde(strategy):
    strategy.start_step()
    x = np.array([1.0, -2.0, 0.5])
    strategy.update(x + np.array([0.1, 0.0, 0.0]), x + np.array([0.2, 0.0, 0.0]))
    assert np.array_equal(strategy.update(x, x), x)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 5, 8]), st.floats(0.5, 1.5), st.integers(0, 2**31 - 1))
def test_first_step_equivalence_property(m, radius, seed):
    a, b = random_affine(seed, m, radius)
    ils, imvls = IQNILS(), IQNIMVLS()
    ils.start_step()
    imvls.start_step()
    x_i = x_m = np.zeros(m)
    for _ in range(m + 2):
        x_i = ils.update(x_i, a @ x_i + b)
        x_m = imvls.update(x_m, a @ x_m + b)
        assert np.linalg.norm(x_i - x_m) <= 1e-12 * max(1.0, np.linalg.norm(x_i))


def test_imvls_reuse_speeds_up_later_steps():
    a, b = random_affine(11, 6, 1.4)
    counts = {}
    for strategy in (IQNILS(), IQNIMVLS(max_blocks=0)):
        x = np.zeros(6)
        for step in range(4):
            bb = b * (1.0 + 0.1 * step)
            strategy.start_step()
            for k in range(1, 50):
                xt = a @ x + bb
                if np.linalg.norm(xt - x) <= 1e-10:
                    break
                x = strategy.update(x, xt)
            strategy.end_step()
        counts[strategy.name] = k
    assert counts["imvls"] < counts["ils"]
