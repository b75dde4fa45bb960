"""
Update strategies for the coupling data of a fixed-point iteration.

A coupling loop produces a raw output ``x_tilde`` from the current input
``x``.  The strategies below turn that pair into the next input:

* constant under-relaxation,
* Aitken's dynamic relaxation,
* interface quasi-Newton with inverse least squares (IQN-ILS),
* IQN with implicit multi-vector least squares (IQN-IMVLS), which carries
  Jacobian information across time steps without ever forming a matrix.

Difference matrices are stored newest column first.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .densela import as_matrix, as_vector, householder_qr, lstsq
from .errors import (
    AllColumnsFiltered,
    DegenerateResidual,
    DimensionError,
    NonFiniteError,
    ParameterError,
    SequenceError,
)

DEFAULT_OMEGA0 = 0.1
DEFAULT_EPS_FILTER = 1e-8
DEFAULT_MAX_BLOCKS = 8
DEFAULT_AITKEN_BOUNDS = (1e-4, 1.0)


def residual(x_tilde, x):
    x_tilde = np.asarray(x_tilde, dtype=float)
    x = np.asarray(x, dtype=float)
    if x_tilde.shape != x.shape:
        raise DimensionError(f"shape mismatch {x_tilde.shape} vs {x.shape}")
    return x_tilde - x


def relax(x_tilde, x, omega):
    """Blend ``omega * x_tilde + (1 - omega) * x`` with ``0 < omega <= 1``."""
    if not 0.0 < omega <= 1.0:
        raise ParameterError(f"relaxation factor must lie in (0, 1], got {omega}")
    x_tilde = np.asarray(x_tilde, dtype=float)
    x = np.asarray(x, dtype=float)
    if x_tilde.shape != x.shape:
        raise DimensionError(f"shape mismatch {x_tilde.shape} vs {x.shape}")
    if omega == 1.0:
        return x_tilde.copy()
    return omega * x_tilde + (1.0 - omega) * x


# ---------------------------------------------------------------------------
# Aitken
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AitkenState:
    omega: float
    omega_bounds: tuple = DEFAULT_AITKEN_BOUNDS
    previous_residual: np.ndarray = None

    def __post_init__(self):
        lo, hi = self.omega_bounds
        if not 0.0 < lo <= hi <= 1.0:
            raise ParameterError(f"Aitken bounds must satisfy 0 < lo <= hi <= 1, got {self.omega_bounds}")
        if not lo <= self.omega <= hi:
            raise ParameterError(f"omega={self.omega} outside bounds {self.omega_bounds}")


def aitken_step(state, residual_current):
    """
    Advance the Aitken factor with the newest residual.

    Without a stored residual the factor is kept.  Otherwise

        omega_k = -omega_{k-1} * r_prev . (r_cur - r_prev) / |r_cur - r_prev|^2

    clamped to ``state.omega_bounds``.  Raises :class:`DegenerateResidual` if
    the two residuals coincide exactly.
    """
    r_cur = as_vector(residual_current, "residual")
    if state.previous_residual is None:
        return replace(state, previous_residual=r_cur)
    r_prev = state.previous_residual
    if r_prev.shape != r_cur.shape:
        raise DimensionError(f"residual shape changed from {r_prev.shape} to {r_cur.shape}")
    diff = r_cur - r_prev
    denom = diff @ diff
    if denom == 0.0:
        raise DegenerateResidual("consecutive residuals are identical")
    raw = -state.omega * (r_prev @ diff) / denom
    lo, hi = state.omega_bounds
    return replace(state, omega=float(min(max(raw, lo), hi)), previous_residual=r_cur)


# ---------------------------------------------------------------------------
# Within-time-step pair history
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPointSnapshot:
    x_tilde: np.ndarray
    residual: np.ndarray
    iteration_index: int

    @classmethod
    def from_iterate(cls, x, x_tilde, iteration_index):
        x_tilde = as_vector(x_tilde, "x_tilde")
        return cls(x_tilde, residual(x_tilde, as_vector(x, "x")), iteration_index)


class PairHistory:
    """Difference matrices V (residuals) and W (outputs) of one time step."""

    def __init__(self, m=None):
        self.m = m
        self.snapshots = []
        self._v_cols = []
        self._w_cols = []

    @property
    def n_columns(self):
        return len(self._v_cols)

    @property
    def V(self):
        return self._stack(self._v_cols)

    @property
    def W(self):
        return self._stack(self._w_cols)

    def _stack(self, cols):
        if not cols:
            return np.zeros((self.m or 0, 0))
        return np.column_stack(cols)

    def push(self, snapshot):
        x_t = np.asarray(snapshot.x_tilde, dtype=float)
        if self.m is None:
            self.m = x_t.size
        elif x_t.size != self.m:
            raise DimensionError(f"snapshot has {x_t.size} entries, history expects {self.m}")
        if self.snapshots:
            last = self.snapshots[-1]
            if snapshot.iteration_index != last.iteration_index + 1:
                raise SequenceError(
                    f"iteration {snapshot.iteration_index} does not follow {last.iteration_index}"
                )
            self._v_cols.insert(0, snapshot.residual - last.residual)
            self._w_cols.insert(0, snapshot.x_tilde - last.x_tilde)
        self.snapshots.append(snapshot)
        return self

    def clear(self):
        self.snapshots.clear()
        self._v_cols.clear()
        self._w_cols.clear()


def push_pair(history, snapshot):
    return history.push(snapshot)


def filter_columns(V, W, eps_filter=DEFAULT_EPS_FILTER):
    """
    Drop nearly dependent columns of ``V`` (and the paired columns of ``W``).

    Columns beyond the row count are dropped outright, oldest first.  Then
    the first column whose QR diagonal is at most ``eps_filter`` times the
    column's own norm is removed, the remainder is re-factorized, and the
    sweep repeats until no column qualifies.  Measuring each diagonal
    against its own column keeps the test scale-free: late difference
    columns are orders of magnitude shorter than early ones, yet still carry
    independent directions.

    Returns
    -------
    Vf, Wf : ndarray
        Filtered matrices.
    dropped : list of int
        Indices into the original column order that were removed.
    """
    V = as_matrix(V, "V")
    W = as_matrix(W, "W")
    if V.shape[1] != W.shape[1]:
        raise DimensionError(f"V has {V.shape[1]} columns but W has {W.shape[1]}")
    if eps_filter <= 0.0:
        raise ParameterError("eps_filter must be positive")

    # More columns than rows are necessarily dependent: the oldest ones go first.
    m, k = V.shape
    keep = list(range(min(m, k)))
    dropped = list(range(m, k))
    while keep:
        _, r = householder_qr(V[:, keep])
        diag = np.abs(np.diag(r))
        small = np.flatnonzero(diag <= eps_filter * np.linalg.norm(V[:, keep], axis=0))
        if small.size == 0:
            break
        dropped.append(keep.pop(int(small[0])))
    if not keep:
        raise AllColumnsFiltered(f"all {V.shape[1]} columns filtered")
    return V[:, keep], W[:, keep], sorted(dropped)


def _filtered_coefficients(V, residual_vec, eps_filter):
    """Filter V and return (kept indices, alpha) with alpha = argmin |V a + R|."""
    k = V.shape[1]
    _, _, dropped = filter_columns(V, np.zeros((V.shape[0], k)), eps_filter)
    kept = [j for j in range(k) if j not in dropped]
    alpha = lstsq(V[:, kept], -residual_vec)
    return kept, alpha


def ils_update(history, x_tilde, residual_vec, eps_filter=DEFAULT_EPS_FILTER):
    """Quasi-Newton step ``x_tilde + W alpha`` with ``alpha = argmin |V alpha + R|``."""
    if history.n_columns == 0:
        raise DimensionError("ils_update needs at least one difference column")
    x_tilde = as_vector(x_tilde, "x_tilde")
    r = as_vector(residual_vec, "residual")
    kept, alpha = _filtered_coefficients(history.V, r, eps_filter)
    return x_tilde + history.W[:, kept] @ alpha


# ---------------------------------------------------------------------------
# Implicit multi-vector Jacobian
# ---------------------------------------------------------------------------


@dataclass
class _Block:
    V: np.ndarray
    Wtilde: np.ndarray
    # Output differences before the correction by the older blocks.
    W_raw: np.ndarray = field(repr=False)
    # W~ R^{-1} and the thin Q of the filtered V, so that apply() is two products.
    Z: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)


class MultiVectorJacobian:
    """
    Inverse-Jacobian approximation kept as a sum of past-step corrections.

    Each block ``(V_j, W~_j)`` contributes ``W~_j (V_j^T V_j)^{-1} V_j^T``;
    blocks are ordered oldest first.  An empty instance is the zero matrix.
    ``max_blocks = 0`` keeps every block.

    Because each ``W~_j`` is a correction relative to the older blocks,
    dropping the oldest block alone would leave the others inconsistent.
    Eviction therefore replays the recursion over the retained steps,
    starting from the zero matrix, so the result is the Jacobian a run would
    have built from those steps only.
    """

    def __init__(self, max_blocks=DEFAULT_MAX_BLOCKS, eps_filter=DEFAULT_EPS_FILTER):
        if max_blocks < 0:
            raise ParameterError("max_blocks must be >= 0")
        self.max_blocks = max_blocks
        self.eps_filter = eps_filter
        self.blocks = []

    def __len__(self):
        return len(self.blocks)

    @property
    def is_empty(self):
        return not self.blocks

    def _append(self, V, Wtilde):
        try:
            Vf, Wf, _ = filter_columns(V, Wtilde, self.eps_filter)
        except AllColumnsFiltered:
            return
        W_raw = Wf + _jv_matrix(self, Vf)
        factors, r = householder_qr(Vf)
        q = factors.thin_q()
        # Z = Wf R^{-1}, solved row by row through R^T Z^T = Wf^T.
        z = np.linalg.solve(r.T, Wf.T).T
        self.blocks.append(_Block(Vf, Wf, W_raw, z, q))

    def add_block(self, V, Wtilde):
        V = as_matrix(V, "V")
        Wtilde = as_matrix(Wtilde, "Wtilde")
        if V.shape != Wtilde.shape:
            raise DimensionError(f"block shapes differ: {V.shape} vs {Wtilde.shape}")
        if V.shape[1] == 0:
            return
        self._append(V, Wtilde)
        if self.max_blocks and len(self.blocks) > self.max_blocks:
            retained = self.blocks[len(self.blocks) - self.max_blocks :]
            self.blocks = []
            for block in retained:
                self._append(block.V, block.W_raw - _jv_matrix(self, block.V))

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for block in self.blocks:
            out += block.Z @ (block.Q.T @ r)
        return out


def mvj_apply(jac, r, eps_filter=None):
    """Evaluate ``J r`` for the implicit Jacobian (filtering is fixed at block insertion)."""
    r = as_vector(r, "r")
    return jac.apply(r)


def _jv_matrix(jac, V):
    if V.shape[1] == 0:
        return np.zeros_like(V)
    return np.column_stack([jac.apply(V[:, j]) for j in range(V.shape[1])])


def imvls_update(jac, history, x_tilde, residual_vec, eps_filter=DEFAULT_EPS_FILTER, cached_JV=None):
    """
    ``x_tilde - J R + (W - J V) alpha`` with ``alpha = argmin |V alpha + R|``.

    ``cached_JV`` is the product of the current Jacobian with ``history.V``;
    it is rebuilt column by column when omitted.
    """
    x_tilde = as_vector(x_tilde, "x_tilde")
    r = as_vector(residual_vec, "residual")
    out = x_tilde - jac.apply(r)
    if history.n_columns == 0:
        return out
    V = history.V
    JV = _jv_matrix(jac, V) if cached_JV is None else np.asarray(cached_JV, dtype=float)
    if JV.shape != V.shape:
        raise DimensionError(f"cached J*V has shape {JV.shape}, expected {V.shape}")
    kept, alpha = _filtered_coefficients(V, r, eps_filter)
    return out + (history.W[:, kept] - JV[:, kept]) @ alpha


def imvls_finalize_timestep(jac, history, cached_JV=None):
    """Append the block ``(V, W - J V)`` of a finished time step to ``jac``."""
    if history.n_columns == 0:
        return jac
    V = history.V
    JV = _jv_matrix(jac, V) if cached_JV is None else np.asarray(cached_JV, dtype=float)
    if JV.shape != V.shape:
        raise DimensionError(f"cached J*V has shape {JV.shape}, expected {V.shape}")
    jac.add_block(V, history.W - JV)
    return jac


# ---------------------------------------------------------------------------
# Strategy objects driven by the coupling schemes
# ---------------------------------------------------------------------------


class UpdateStrategy:
    """
    Common driver interface.

    ``start_step`` is called before the first coupling iteration of a time
    step, ``update(x, x_tilde)`` once per iteration, and ``end_step`` after
    convergence.  ``last_info`` holds diagnostics for the latest update.
    """

    name = "none"

    def __init__(self):
        self.k = 0
        self.last_info = {}

    def start_step(self):
        self.k = 0

    def end_step(self):
        pass

    def update(self, x, x_tilde):
        self.k += 1
        x_next = self._update(np.asarray(x, dtype=float), np.asarray(x_tilde, dtype=float))
        if not np.all(np.isfinite(x_next)):
            raise NonFiniteError(f"{self.name} update produced non-finite values")
        return x_next

    def _update(self, x, x_tilde):
        self.last_info = {}
        return x_tilde.copy()

    def describe(self):
        return {"type": self.name}


class NoUpdate(UpdateStrategy):
    name = "none"


class ConstantRelaxation(UpdateStrategy):
    name = "relax"

    def __init__(self, omega):
        super().__init__()
        if not 0.0 < omega <= 1.0:
            raise ParameterError(f"relaxation factor must lie in (0, 1], got {omega}")
        self.omega = omega

    def _update(self, x, x_tilde):
        self.last_info = {"omega": self.omega}
        return relax(x_tilde, x, self.omega)

    def describe(self):
        return {"type": self.name, "omega": self.omega}


class AitkenRelaxation(UpdateStrategy):
    name = "aitken"

    def __init__(self, omega0=DEFAULT_OMEGA0, bounds=DEFAULT_AITKEN_BOUNDS):
        super().__init__()
        self.omega0 = omega0
        self.bounds = tuple(bounds)
        self.state = AitkenState(omega0, self.bounds)

    def start_step(self):
        super().start_step()
        self.state = AitkenState(self.omega0, self.bounds)

    def _update(self, x, x_tilde):
        r = x_tilde - x
        try:
            self.state = aitken_step(self.state, r)
        except DegenerateResidual:
            self.state = replace(self.state, previous_residual=r)
        self.last_info = {"omega": self.state.omega}
        return relax(x_tilde, x, self.state.omega)

    def describe(self):
        return {"type": self.name, "omega0": self.omega0, "bounds": list(self.bounds)}


class IQNILS(UpdateStrategy):
    """Inverse least-squares quasi-Newton using data of the current step only."""

    name = "ils"

    def __init__(self, omega0=DEFAULT_OMEGA0, eps_filter=DEFAULT_EPS_FILTER):
        super().__init__()
        self.omega0 = omega0
        self.eps_filter = eps_filter
        self.history = PairHistory()

    def start_step(self):
        super().start_step()
        self.history = PairHistory()

    def _update(self, x, x_tilde):
        snap = FixedPointSnapshot.from_iterate(x, x_tilde, self.k)
        self.history.push(snap)
        if self.history.n_columns:
            try:
                x_next = ils_update(self.history, x_tilde, snap.residual, self.eps_filter)
                self.last_info = {"columns": self.history.n_columns}
                return x_next
            except AllColumnsFiltered:
                pass
        self.last_info = {"omega": self.omega0, "columns": 0}
        return relax(x_tilde, x, self.omega0)

    def describe(self):
        return {"type": self.name, "omega0": self.omega0, "eps_filter": self.eps_filter}


class IQNIMVLS(UpdateStrategy):
    """Quasi-Newton with implicit reuse of past time steps."""

    name = "imvls"

    def __init__(self, omega0=DEFAULT_OMEGA0, eps_filter=DEFAULT_EPS_FILTER, max_blocks=DEFAULT_MAX_BLOCKS):
        super().__init__()
        self.omega0 = omega0
        self.eps_filter = eps_filter
        self.jacobian = MultiVectorJacobian(max_blocks, eps_filter)
        self.history = PairHistory()
        self._jv_cols = []

    def start_step(self):
        super().start_step()
        self.history = PairHistory()
        self._jv_cols = []

    @property
    def cached_JV(self):
        if not self._jv_cols:
            return np.zeros((self.history.m or 0, 0))
        return np.column_stack(self._jv_cols)

    def _update(self, x, x_tilde):
        snap = FixedPointSnapshot.from_iterate(x, x_tilde, self.k)
        n_before = self.history.n_columns
        self.history.push(snap)
        if self.history.n_columns > n_before:
            self._jv_cols.insert(0, self.jacobian.apply(self.history.V[:, 0]))

        if self.history.n_columns:
            try:
                x_next = imvls_update(
                    self.jacobian, self.history, x_tilde, snap.residual, self.eps_filter, self.cached_JV
                )
                self.last_info = {"columns": self.history.n_columns, "blocks": len(self.jacobian)}
                return x_next
            except AllColumnsFiltered:
                pass
        if not self.jacobian.is_empty:
            self.last_info = {"columns": 0, "blocks": len(self.jacobian)}
            return x_tilde - self.jacobian.apply(snap.residual)
        self.last_info = {"omega": self.omega0, "columns": 0, "blocks": 0}
        return relax(x_tilde, x, self.omega0)

    def end_step(self):
        imvls_finalize_timestep(self.jacobian, self.history, self.cached_JV)

    def describe(self):
        return {
            "type": self.name,
            "omega0": self.omega0,
            "eps_filter": self.eps_filter,
            "max_blocks": self.jacobian.max_blocks,
        }
