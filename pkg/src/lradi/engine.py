"""Low-rank ADI iteration for (generalized) Lyapunov equations.

Solves A X + X A^* + B B^* = 0, or A X M^* + M X A^* + B B^* = 0 when a
mass matrix is present, for a low-rank factor Z with X ~ Z Z^T. One
factorization of A + alpha*M is built per shift; conjugate shift pairs are
handled by a real double step so Z stays real. The scaled residual norm
||W^* W||_2 / ||B^* B||_2 is tracked from the residual factor W that the
iteration carries along (the residual is exactly W W^* at every step).
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import sparse_shifted_factorize, spectral_norm_small

__all__ = [
    "LyapunovProblem",
    "ShiftRecord",
    "ShiftProposal",
    "AdiState",
    "SolveReport",
    "lr_adi_solve",
    "adi_real_step",
    "adi_double_step",
    "run_multistep_group",
    "build_SG",
    "real_SG",
    "scaled_residual",
]


@dataclass
class LyapunovProblem:
    """Problem data for the low-rank Lyapunov solve.

    Parameters
    ----------
    A
        Sparse stable system matrix (n x n). Stability is not verified up
        front; an unstable matrix typically surfaces as a singular shifted
        factorization.
    B
        Dense right-hand-side factor (n x s), s << n.
    M
        Optional sparse mass matrix for A X M^* + M X A^* + B B^* = 0.
        None solves the standard equation.
    tol
        Convergence threshold on the scaled residual ||W^*W|| / ||B^*B||.
    max_iterations
        Cap on logical ADI steps (a trailing conjugate pair may run one
        step past the cap, see SolveReport).
    """

    A: object
    B: object
    M: object = None
    tol: float = 1e-8
    max_iterations: int = 150

    def __post_init__(self):
        self.B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        if self.B.shape[0] == 1 and self.A.shape[0] != 1:
            self.B = self.B.T
        if self.A.shape[0] != self.A.shape[1]:
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != self.A.shape[0]:
            raise ValueError(
                f"B has {self.B.shape[0]} rows, A is {self.A.shape[0]} x {self.A.shape[1]}"
            )
        self._m_lu = None

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def s(self):
        return self.B.shape[1]

    def solve_M(self, rhs):
        """M^{-1} rhs (identity when no mass matrix). Factorized once, lazily."""
        if self.M is None:
            return np.array(rhs, copy=True)
        if self._m_lu is None:
            from scipy.sparse.linalg import splu
            import scipy.sparse as sp

            self._m_lu = splu(sp.csc_matrix(self.M))
        return self._m_lu.solve(np.asarray(rhs))

    def apply_M(self, X):
        """M @ X (identity when no mass matrix)."""
        if self.M is None:
            return np.array(X, copy=True)
        return self.M @ X

    def apply_Atilde(self, X):
        """M^{-1} A X — the operator the iteration effectively works with."""
        return self.solve_M(self.A @ X)


@dataclass
class ShiftRecord:
    """One executed logical ADI step: shift value and column scaling.

    ``kind`` is "real" for a single real step and "pair" for either half of
    a conjugate double step (the half with positive imaginary part comes
    first).
    """

    alpha: complex
    gamma: float
    kind: str = "real"


@dataclass
class ShiftProposal:
    """A strategy's answer: the next shift and how many steps to spend on it.

    ``budget`` > 1 requests a multistep group: the shift is reused for up
    to ``budget`` logical steps on a single factorization (a conjugate pair
    consumes two; ceil(budget/2) pairs are allowed).
    """

    alpha: complex
    budget: int = 1


class AdiState:
    """Mutable iteration state: factor blocks, residual factors, history."""

    def __init__(self, problem):
        self.problem = problem
        n, s = problem.n, problem.s
        self.n, self.s = n, s
        self.W = problem.B.copy()
        # W_m = M^{-1} W is carried alongside in the generalized case; the
        # compressed restrictions need it and it is cheap to update in step.
        self.W_m = problem.solve_M(problem.B) if problem.M is not None else self.W
        self.b_norm2 = spectral_norm_small(problem.B)
        if self.b_norm2 == 0.0:
            raise ValueError("B must be nonzero")
        self.j = 0
        self.shifts = []
        self.res_history = []
        self.current_residual = 1.0
        self._zblocks = []
        self._zcache = np.zeros((n, 0))

    @property
    def Z(self):
        """Accumulated low-rank factor (n x j*s), materialized on demand."""
        if self._zcache.shape[1] != self.j * self.s:
            blocks = [self._zcache] + self._zblocks
            self._zcache = np.hstack(blocks)
            self._zblocks = []
        return self._zcache

    def _push(self, block, records, residuals):
        self._zblocks.append(block)
        self.shifts.extend(records)
        self.res_history.extend(residuals)
        self.j += len(records)
        self.current_residual = residuals[-1]

    def shift_values(self):
        return [r.alpha for r in self.shifts]


def scaled_residual(W, b_norm2):
    """||W^* W||_2 / b_norm2 — the scaled residual norm of the iteration."""
    return spectral_norm_small(W) / b_norm2


def adi_real_step(state, fact):
    """One ADI step with a real negative shift; appends one Z block.

    ``fact`` must be a factorization of A + alpha*M for the problem held by
    ``state``. Returns the state (mutated in place).
    """
    alpha = float(np.real(fact.alpha))
    assert alpha < 0.0, f"shift must have negative real part, got {alpha}"
    problem = state.problem
    V = fact.solve(state.W)
    if np.iscomplexobj(V):  # real data + real shift => real solve
        V = V.real
    gamma = np.sqrt(-2.0 * alpha)
    if problem.M is None:
        state.W = state.W - 2.0 * alpha * V
        state.W_m = state.W
    else:
        state.W = state.W - 2.0 * alpha * problem.apply_M(V)
        state.W_m = state.W_m - 2.0 * alpha * V
    res = scaled_residual(state.W, state.b_norm2)
    state._push(gamma * V, [ShiftRecord(alpha, gamma, "real")], [res])
    return state


def adi_double_step(state, fact):
    """One conjugate pair of ADI steps in real arithmetic.

    ``fact`` holds A + alpha*M with Im(alpha) > 0. A single complex solve
    yields both steps: with V = (A + alpha M)^{-1} W, beta = Re alpha,
    c = beta/Im alpha, q = sqrt(c^2+1), the factor gains the real columns

        [sqrt(2)*gamma*(Re V + c Im V), sqrt(2)*gamma*q*Im V],

    and W <- W - 4 beta M (Re V + c Im V), which reproduces the two complex
    steps with alpha and conj(alpha) exactly. The residual after the first
    (complex) half step is recorded too, so the history has one entry per
    logical step.
    """
    alpha = complex(fact.alpha)
    beta, delta = alpha.real, alpha.imag
    assert beta < 0.0 and delta > 0.0, f"need Re<0, Im>0, got {alpha}"
    problem = state.problem
    c = beta / delta
    q = np.sqrt(c * c + 1.0)
    gamma = np.sqrt(-2.0 * beta)

    V = fact.solve(state.W)
    # residual factor after the half step (complex intermediate)
    W_mid = state.W - 2.0 * beta * (problem.apply_M(V) if problem.M is not None else V)
    res_mid = scaled_residual(W_mid, state.b_norm2)

    Vr = V.real + c * V.imag
    if problem.M is None:
        state.W = state.W - 4.0 * beta * Vr
        state.W_m = state.W
    else:
        state.W = state.W - 4.0 * beta * problem.apply_M(Vr)
        state.W_m = state.W_m - 4.0 * beta * Vr
    res = scaled_residual(state.W, state.b_norm2)

    block = np.empty((state.n, 2 * state.s))
    block[:, : state.s] = np.sqrt(2.0) * gamma * Vr
    block[:, state.s :] = np.sqrt(2.0) * gamma * q * V.imag
    records = [
        ShiftRecord(alpha, gamma, "pair"),
        ShiftRecord(np.conj(alpha), gamma, "pair"),
    ]
    state._push(block, records, [res_mid, res])
    return state


def normalize_shift(alpha):
    """Canonical form: Im >= 0, Re < 0 (unstable proposals are reflected).

    An imaginary part below 1e-8 relative to the real part is treated as
    numerical noise and dropped: the double step for such a shift is a
    double real step to machine precision, but would cost an extra block
    of low-rank columns and a second logical iteration.
    """
    alpha = complex(alpha)
    if alpha.imag < 0.0:
        alpha = alpha.conjugate()
    if alpha.imag != 0.0 and alpha.imag <= 1e-8 * abs(alpha.real):
        alpha = complex(alpha.real, 0.0)
    if alpha.real >= 0.0:
        warnings.warn(
            f"shift {alpha} has nonnegative real part; using the reflection",
            RuntimeWarning,
        )
        alpha = complex(-alpha.real if alpha.real > 0.0 else -1e-8, alpha.imag)
    return alpha


def run_multistep_group(state, fact, budget):
    """Run up to ``budget`` logical steps reusing one factorization.

    Convergence (against the problem's tol) and the iteration cap are
    re-checked before every step, so groups exit early. A complex shift
    spends two logical steps per double step and may run ceil(budget/2)
    pairs. Returns the number of logical steps executed.
    """
    problem = state.problem
    before = state.j
    alpha = complex(fact.alpha)
    if alpha.imag == 0.0:
        for _ in range(budget):
            if state.current_residual <= problem.tol or state.j >= problem.max_iterations:
                break
            adi_real_step(state, fact)
    else:
        pairs = int(np.ceil(budget / 2.0))
        for _ in range(pairs):
            if state.current_residual <= problem.tol or state.j >= problem.max_iterations:
                break
            adi_double_step(state, fact)
    return state.j - before


@dataclass
class SolveReport:
    """Outcome of lr_adi_solve.

    ``iterations`` counts logical ADI steps (pair halves count separately;
    the last pair may overshoot max_iterations by one). ``residuals`` and
    ``shifts`` have one entry per logical step; the cumulative timing
    arrays line up with them. ``n_factorizations`` counts every sparse
    shifted factorization built for the run, including any the shift
    strategy built for seed spaces.
    """

    status: str
    iterations: int
    residuals: list
    shifts: list
    t_total: float
    t_shift: float
    t_total_cum: list = field(default_factory=list)
    t_shift_cum: list = field(default_factory=list)
    n_factorizations: int = 0
    n: int = 0
    s: int = 0
    tol: float = 0.0

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else 1.0

    @property
    def converged(self):
        return self.status == "converged"


def lr_adi_solve(problem, strategy, return_state=False, on_step=None):
    """Low-rank ADI driver.

    Parameters
    ----------
    problem
        LyapunovProblem instance.
    strategy
        Shift source: an object with ``next_shift(state, problem) ->
        ShiftProposal``. Strategies that factorize on their own report it
        via an ``n_factorizations`` attribute, which is folded into the
        report.
    return_state
        Also return the final AdiState (for Z and the residual factor).
    on_step
        Optional callback ``on_step(i, res, shift, t_shift, t_total)``
        invoked once per completed logical step (1-based index), so
        progress survives a mid-run solver error.

    Returns
    -------
    SolveReport, or (SolveReport, AdiState) with ``return_state``.
    """
    state = AdiState(problem)
    t0 = time.monotonic()
    t_shift = 0.0
    n_fact = 0
    t_total_cum, t_shift_cum = [], []

    while True:
        if state.current_residual <= problem.tol:
            status = "converged"
            break
        if state.j >= problem.max_iterations:
            status = "max_iterations"
            break
        ts = time.monotonic()
        proposal = strategy.next_shift(state, problem)
        t_shift += time.monotonic() - ts
        alpha = normalize_shift(proposal.alpha)
        fact = sparse_shifted_factorize(problem.A, alpha, M=problem.M)
        n_fact += 1
        done = run_multistep_group(state, fact, max(1, int(proposal.budget)))
        if done == 0:  # budget exhausted by the cap before any step ran
            status = "max_iterations"
            break
        now = time.monotonic() - t0
        t_total_cum.extend([now] * done)
        t_shift_cum.extend([t_shift] * done)
        if on_step is not None:
            shifts = state.shift_values()
            for k in range(state.j - done, state.j):
                on_step(k + 1, state.res_history[k], shifts[k],
                        t_shift_cum[k], t_total_cum[k])

    t_total = time.monotonic() - t0
    report = SolveReport(
        status=status,
        iterations=state.j,
        residuals=list(state.res_history),
        shifts=state.shift_values(),
        t_total=t_total,
        t_shift=t_shift,
        t_total_cum=t_total_cum,
        t_shift_cum=t_shift_cum,
        n_factorizations=n_fact + int(getattr(strategy, "n_factorizations", 0)),
        n=problem.n,
        s=problem.s,
        tol=problem.tol,
    )
    if return_state:
        return report, state
    return report


# ---------------------------------------------------------------------------
# structured factors of the ADI relation
# ---------------------------------------------------------------------------

def build_SG(shifts, s):
    """Complex structured factors of the ADI Sylvester relation.

    For the executed shift history alpha_1..alpha_j with column scalings
    gamma_i = sqrt(-2 Re alpha_i), returns (S, G) with

        A Z_j = Z_j S_j + B G_j^*,        S~ := S - G G^* = -S^*,
        A Z_j Z_j^* + Z_j Z_j^* A^* + B B^* = W_j W_j^*,

    where S is upper triangular with diagonal -alpha_i and strict upper
    fill gamma_i*gamma_k (i < k), both expanded by Kronecker products with
    I_s, and G = [gamma_1, ..., gamma_j]^T (x) I_s. These hold for the
    complex iteration; see real_SG for the realified factors matching the
    real double-step blocks.

    Parameters
    ----------
    shifts
        Sequence of ShiftRecord (or bare complex shifts).
    s
        Number of right-hand-side columns.
    """
    alphas = np.array(
        [r.alpha if isinstance(r, ShiftRecord) else complex(r) for r in shifts],
        dtype=np.complex128,
    )
    gammas = np.sqrt(-2.0 * alphas.real)
    j = len(alphas)
    S_small = np.zeros((j, j), dtype=np.complex128)
    for i in range(j):
        S_small[i, i] = -alphas[i]
        S_small[i, i + 1 :] = gammas[i] * gammas[i + 1 :]
    G_small = gammas.astype(np.complex128)[:, None]
    I_s = np.eye(s)
    return np.kron(S_small, I_s), np.kron(G_small, I_s)


def _pair_spans(shifts):
    """Group the shift history into singles and conjugate pairs.

    Returns a list of (start, length) with length 1 for real steps and 2
    for double-step pairs. Raises if the history is inconsistent.
    """
    spans = []
    i = 0
    while i < len(shifts):
        r = shifts[i]
        if r.kind == "pair":
            if i + 1 >= len(shifts) or shifts[i + 1].kind != "pair":
                raise ValueError(f"dangling conjugate pair at position {i}")
            a, b = complex(r.alpha), complex(shifts[i + 1].alpha)
            if abs(b - np.conj(a)) > 1e-12 * max(abs(a), 1.0):
                raise ValueError(f"records {i},{i+1} are not a conjugate pair")
            spans.append((i, 2))
            i += 2
        else:
            spans.append((i, 1))
            i += 1
    return spans


def _pair_theta(alpha):
    # unitary 2x2 mapping the complex pair columns to the real double-step
    # columns: [gamma V1, gamma V2] Theta = real block
    beta, delta = alpha.real, alpha.imag
    c = beta / delta
    q = np.sqrt(c * c + 1.0)
    u = q / (1.0 + 1j * c)
    return np.array([[1.0, -1j * u], [1.0, 1j * u]]) / np.sqrt(2.0)


def real_SG(shifts, s):
    """Real structured factors matching the realified factor Z.

    The complex (S, G) of build_SG are transformed by the block-diagonal
    unitary that maps each conjugate pair of complex columns to the two
    real columns produced by adi_double_step. The result is exactly real:

        A Z_j = Z_j S_r + B G_r^T,    W_j = B + Z_j G_r

    with Z_j the engine's real factor. S_r is block upper triangular
    (2 x 2 bumps on pairs), so trailing sub-blocks are only meaningful on
    pair boundaries.

    Parameters
    ----------
    shifts
        List of ShiftRecord with pair structure recorded.
    s
        Number of right-hand-side columns.
    """
    S_c, G_c = build_SG(shifts, s)
    j = len(shifts)
    theta = np.zeros((j, j), dtype=np.complex128)
    for start, length in _pair_spans(shifts):
        if length == 1:
            theta[start, start] = 1.0
        else:
            theta[start : start + 2, start : start + 2] = _pair_theta(
                complex(shifts[start].alpha)
            )
    Theta = np.kron(theta, np.eye(s))
    S_r = Theta.conj().T @ S_c @ Theta
    G_r = Theta.conj().T @ G_c
    scale = max(np.abs(S_r).max(), np.abs(G_r).max(), 1.0)
    im = max(np.abs(S_r.imag).max(), np.abs(G_r.imag).max())
    assert im <= 1e-8 * scale, f"realified factors not real: imag {im:.2e}"
    return S_r.real.copy(), G_r.real.copy()
