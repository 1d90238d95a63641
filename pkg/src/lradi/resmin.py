"""Residual-norm-minimizing self-generating ADI shifts.

The next shift is chosen by minimizing the norm of the ADI residual factor
after one (or g) hypothetical steps, evaluated on a small compressed model
of the iteration. Two compressions are available: a restriction onto a
window of recent Z columns, and a recycled extended Krylov space that
reuses the seed basis built once up front (new basis directions come from
the accumulated factor Z, without further solves with A). The compressed
objective

    psi(nu, xi) = || T * C(H, alpha)^g * Wt ||_2^2,
    C(H, alpha) = (H - conj(alpha) I)(H + alpha I)^{-1},  alpha = nu + i xi,

is minimized over a spectral bounding box with either a Gauss-Newton
iteration on the stacked real residual or a trust-region Newton method
with analytic first and second derivatives.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as spla

from .engine import ShiftProposal, real_SG
from .linalg import block_orth, dense_eig_hermitian, sparse_shifted_factorize, spectral_norm_small
from .strategies import hamiltonian_residual_shift, ritz_update, schur_stabilize

logger = logging.getLogger(__name__)

__all__ = [
    "KrylovSeed",
    "CompressedObjective",
    "Bounds",
    "DerivativeWorkspace",
    "ShiftObjectiveError",
    "build_seed",
    "seed_compressed",
    "extended_krylov_basis",
    "compress_zh",
    "recycle_krylov",
    "eval_objective",
    "eval_gradient",
    "eval_hessian",
    "nls_residual_jacobian",
    "tangential_reduce",
    "derive_bounds",
    "optimize_shift",
    "resmin_next_shift",
    "ResminStrategy",
]


class ShiftObjectiveError(RuntimeError):
    """Compressed objective not usable at this point (singular or non-smooth)."""


# ---------------------------------------------------------------------------
# extended Krylov seed
# ---------------------------------------------------------------------------

def _staircase_pivots(R, k0):
    """Map each basis column added by block_orth to the input column that
    created it: returns a list over added rows of pivot column indices."""
    kadd = R.shape[0] - k0
    piv = []
    for i in range(kadd):
        nz = np.nonzero(np.abs(R[k0 + i]) > 0.0)[0]
        piv.append(int(nz[0]))
    return piv


def extended_krylov_basis(apply_op, solve_op, B, p, m, drop_tol=1e-10):
    """Orthonormal basis of the extended Krylov space EK_{p,m}(A, B).

    Span of {B, A B, ..., A^{p-1} B} union {A^{-1} B, ..., A^{-m} B},
    built incrementally: forward and backward directions are extended from
    the orthonormalized sub-blocks (never from explicit power blocks, which
    would be numerically useless for larger p). Rank-deficient blocks
    shrink the streams; if a stream dries up the corresponding effective
    order stops growing.

    Parameters
    ----------
    apply_op, solve_op
        Callables computing A @ X and A^{-1} X (solve_op may be None when
        m == 0).
    B
        Starting block.
    p, m
        Forward/backward orders, p >= 1, m >= 0.

    Returns
    -------
    (Q, p_eff, m_eff): basis whose first columns span B, plus the orders
    actually reached.
    """
    if p < 1:
        raise ValueError("forward order p must be >= 1 so the span contains B")
    if m < 0:
        raise ValueError("backward order m must be >= 0")
    B = np.atleast_2d(np.asarray(B))
    sB = B.shape[1]
    if m >= 1:
        X0 = np.hstack([B, solve_op(B)])
    else:
        X0 = B
    Q, R = block_orth(None, X0, drop_tol)
    piv = _staircase_pivots(R, 0)
    f_idx = [i for i, col in enumerate(piv) if col < sB]
    b_idx = [i for i, col in enumerate(piv) if col >= sB]
    p_eff, m_eff = 1, (1 if m >= 1 else 0)

    while (p_eff < p and f_idx) or (m_eff < m and b_idx):
        parts, labels = [], []
        do_f = p_eff < p and bool(f_idx)
        do_b = m_eff < m and bool(b_idx)
        if do_f:
            parts.append(apply_op(Q[:, f_idx]))
            labels += ["f"] * len(f_idx)
        if do_b:
            parts.append(solve_op(Q[:, b_idx]))
            labels += ["b"] * len(b_idx)
        k0 = Q.shape[1]
        Q, R = block_orth(Q, np.hstack(parts), drop_tol)
        piv = _staircase_pivots(R, k0)
        new_f = [k0 + i for i, col in enumerate(piv) if labels[col] == "f"]
        new_b = [k0 + i for i, col in enumerate(piv) if labels[col] == "b"]
        if do_f:
            p_eff += 1
            f_idx = new_f
        if do_b:
            m_eff += 1
            b_idx = new_b
    return Q, p_eff, m_eff


@dataclass
class KrylovSeed:
    """Extended Krylov seed built once per solve.

    ``Q`` spans EK_{p,m}(A, B) (of M^{-1}A and M^{-1}B in the generalized
    case) with the first s columns spanning the starting block; ``P`` holds
    the images A Q so later restrictions need no further products with A;
    ``H = Q^* P`` is the seed restriction and ``eta`` reproduces the
    starting block as Q[:, :s] @ eta. ``p_eff``/``m_eff`` record the orders
    actually reached (smaller than requested on early breakdown).
    """

    Q: object
    P: object
    H: object
    eta: object
    p: int
    m: int
    p_eff: int
    m_eff: int
    B_m: object
    n_factorizations: int = 0
    phi: object = None


def build_seed(problem, p, m, phi=None, B=None):
    """Build the extended Krylov seed for a problem.

    Parameters
    ----------
    problem
        LyapunovProblem; the operator is A (or M^{-1}A when a mass matrix
        is present).
    p, m
        Forward/backward orders; p >= 1 is required (the span must contain
        the right-hand side). m >= 1 costs one sparse factorization.
    phi
        Optional real shift: the inverse directions use (A - phi*M)^{-1}
        instead of A^{-1}.
    B
        Override the starting block (defaults to problem.B).

    Returns KrylovSeed.
    """
    Braw = problem.B if B is None else np.atleast_2d(np.asarray(B, dtype=np.float64))
    Bt = problem.solve_M(Braw) if problem.M is not None else Braw
    n_fact = 0
    solve_op = None
    if m >= 1:
        shift = 0.0 if phi is None else -float(phi)
        fact = sparse_shifted_factorize(problem.A, shift, M=problem.M)
        n_fact = 1
        if problem.M is None:
            solve_op = fact.solve
        else:
            solve_op = lambda X: fact.solve(problem.apply_M(X))
    Q, p_eff, m_eff = extended_krylov_basis(problem.apply_Atilde, solve_op, Bt, p, m)
    if p_eff < p or m_eff < m:
        logger.info("seed orders reduced by breakdown: (%d, %d) -> (%d, %d)",
                    p, m, p_eff, m_eff)
    P = problem.apply_Atilde(Q)
    H = Q.conj().T @ P
    s = Bt.shape[1]
    eta = Q[:, :s].conj().T @ Bt
    resid = np.linalg.norm(Q[:, :s] @ eta - Bt)
    if resid > 1e-8 * max(np.linalg.norm(Bt), 1e-300):
        warnings.warn(
            "starting block is rank deficient; eta computed by least squares",
            RuntimeWarning,
        )
        eta = np.linalg.lstsq(Q[:, :s], Bt, rcond=None)[0]
    return KrylovSeed(
        Q=Q, P=P, H=H, eta=eta, p=p, m=m, p_eff=p_eff, m_eff=m_eff,
        B_m=Bt, n_factorizations=n_fact, phi=phi,
    )


# ---------------------------------------------------------------------------
# compressed objective data
# ---------------------------------------------------------------------------

@dataclass
class Bounds:
    """Rectangular search box for the shift: Re in [nu_minus, nu_plus],
    Im in [0, xi_plus]; ``real_axis`` collapses the box onto the axis."""

    nu_minus: float
    nu_plus: float
    xi_plus: float
    real_axis: bool


def derive_bounds(eigenvalues):
    """Spectral bounding box from compressed eigenvalues.

    An (almost) real spectrum snaps the box onto the real axis; a fully
    clustered spectrum is inflated to [1.5 nu, 0.5 nu] around the common
    value nu so the optimizer has room to move.
    """
    e = np.asarray(eigenvalues, dtype=np.complex128)
    if e.size == 0:
        raise ValueError("no eigenvalues")
    nu_m = float(e.real.min())
    nu_p = float(e.real.max())
    if nu_p >= 0.0:  # producers stabilize; keep the box in the left half plane
        nu_p = -1e-12 * max(1.0, abs(nu_m))
        nu_m = min(nu_m, nu_p)
    scale = float(np.abs(e).max())
    xi_p = float(np.abs(e.imag).max())
    if xi_p <= 1e-10 * scale:
        xi_p = 0.0
    if (nu_p - nu_m) <= 1e-8 * abs(nu_m):
        nu = 0.5 * (nu_m + nu_p)
        nu_m, nu_p = 1.5 * nu, 0.5 * nu
    return Bounds(nu_m, nu_p, xi_p, xi_p == 0.0)


@dataclass
class CompressedObjective:
    """Small model for shift optimization.

    ``H`` is upper triangular (complex Schur form, unstable eigenvalues
    already negated), ``Wtil`` the compressed residual factor in the same
    coordinates, ``weight`` an optional left factor entering every norm
    evaluation, and ``g`` the number of steps the candidate shift will be
    used for.
    """

    H: object
    Wtil: object
    weight: object = None
    g: int = 1
    bounds: object = None
    info: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.H.shape[0]

    @property
    def eigenvalues(self):
        return np.diag(self.H).copy()


def _finish_compression(H, Wt_raw, problem, Q, source, n_flip_extra=0, used_fallback=False):
    T, U, n_flip = schur_stabilize(H)
    Wt = U.conj().T @ Wt_raw
    weight = None
    if problem.M is not None:
        weight = np.linalg.qr(problem.apply_M(Q) @ U, mode="r")
    bounds = derive_bounds(np.diag(T))
    return CompressedObjective(
        H=T, Wtil=Wt, weight=weight, bounds=bounds,
        info={"source": source, "n_stabilized": n_flip + n_flip_extra,
              "used_fallback": used_fallback, "size": T.shape[0],
              "basis": Q},
    )


def seed_compressed(seed, problem):
    """Compressed objective at iteration zero, straight from the seed."""
    Wt_raw = seed.Q.conj().T @ seed.B_m
    return _finish_compression(seed.H, Wt_raw, problem, seed.Q, "seed")


def compress_zh(state, h, problem=None):
    """Compressed objective from the restriction onto the last h steps.

    Delegates to the window restriction (structured, no products with A)
    and attaches the search box. Requires at least one completed step.
    """
    problem = problem if problem is not None else state.problem
    rd = ritz_update(state, h, problem)
    bounds = derive_bounds(rd.eigenvalues)
    return CompressedObjective(
        H=rd.H, Wtil=rd.Wtil, weight=rd.weight, bounds=bounds,
        info={"source": f"Z({h})", "n_stabilized": rd.n_stabilized,
              "used_fallback": rd.used_fallback, "size": rd.H.shape[0],
              "basis": rd.Q},
    )


def recycle_krylov(seed, state, problem=None):
    """Compressed objective from the recycled extended Krylov space.

    The extended Krylov space of (A, W_j) is contained in the seed space
    plus the range of the accumulated factor Z_j, so the updated basis
    needs no new solves with A: candidate directions come from Z_j times a
    small extended Krylov basis of the structured factors (S, G) of the
    iteration, their A-images follow from the factored relation
    A Z = Z S + B G^T, and one block orthogonalization extends the seed.

    Returns a CompressedObjective over the extended basis.
    """
    problem = problem if problem is not None else state.problem
    s, j = state.s, state.j
    if j < 1:
        return seed_compressed(seed, problem)
    S_r, G_r = real_SG(state.shifts, s)
    Z = state.Z
    if j <= seed.p + seed.m:
        omega = Z
        SQ, GQ = S_r, G_r.T
    else:
        lu = spla.lu_factor(S_r)
        Qs, _, _ = extended_krylov_basis(
            lambda X: S_r @ X, lambda X: spla.lu_solve(lu, X), G_r, seed.p, seed.m
        )
        omega = Z @ Qs
        SQ, GQ = S_r @ Qs, G_r.T @ Qs
    Phat = Z @ SQ + seed.B_m @ GQ  # = (M^{-1}) A omega, from the factored relation

    k0 = seed.Q.shape[1]
    Qj, R = block_orth(seed.Q, omega)
    kadd = Qj.shape[1] - k0
    if kadd:
        piv = _staircase_pivots(R, k0)
        T_tri = R[k0:, piv]
        rhs = Phat[:, piv] - seed.P @ R[:k0, piv]
        # right division by the upper triangular pivot block
        Padd = spla.solve_triangular(T_tri, rhs.T, trans="T").T
        P = np.hstack([seed.P, Padd])
    else:
        P = seed.P
    H = Qj.conj().T @ P
    Wt_raw = Qj.conj().T @ state.W_m
    return _finish_compression(H, Wt_raw, problem, Qj, f"EK({seed.p},{seed.m})")


# ---------------------------------------------------------------------------
# objective, derivatives
# ---------------------------------------------------------------------------

def _solve_L(L, X):
    return spla.solve_triangular(L, X, lower=False, check_finite=False)


def _shift_matrix(co, alpha):
    k = co.size
    L = co.H + alpha * np.eye(k)
    d = np.abs(np.diag(L))
    scale = max(np.abs(np.diag(co.H)).max(), abs(alpha), 1.0)
    if d.min() <= 1e-14 * scale:
        return None
    return L


def eval_objective(co, nu, xi=0.0):
    """psi(nu, xi) = ||T C(H, nu + i xi)^g Wt||_2^2.

    Returns +inf when H + alpha I is numerically singular (the candidate
    hits a compressed eigenvalue). nu -> 0 gives ||T Wt||^2: no progress.
    """
    alpha = complex(nu, xi)
    L = _shift_matrix(co, alpha)
    if L is None:
        return np.inf
    X = co.Wtil.astype(np.complex128, copy=True)
    for _ in range(co.g):
        X = X - 2.0 * nu * _solve_L(L, X)
    if co.weight is not None:
        X = co.weight @ X
    return spectral_norm_small(X)


@dataclass
class DerivativeWorkspace:
    """Shared quantities for gradient/Hessian/Jacobian at one point.

    Holds the repeated triangular solves S_i = L^{-i} Wt, the (weighted)
    mapped residual Psi = T C^g Wt and its first and second partial
    derivatives in (nu, xi), plus the eigendecomposition of the Gram
    matrix Psi^* Psi (eigenvalues descending). The objective value is
    theta[0].
    """

    nu: float
    xi: float
    Psi: object
    Psi_nu: object
    Psi_xi: object
    theta: object
    U: object
    Psi_nunu: object = None
    Psi_nuxi: object = None
    Psi_xixi: object = None

    @property
    def value(self):
        return float(self.theta[0])


def make_workspace(co, nu, xi=0.0, order=2):
    """Build the derivative workspace at (nu, xi); order 1 skips the
    second derivatives. Raises ShiftObjectiveError at singular points."""
    alpha = complex(nu, xi)
    L = _shift_matrix(co, alpha)
    if L is None:
        raise ShiftObjectiveError(f"H + alpha I singular at alpha = {alpha}")
    g = co.g
    S = [co.Wtil.astype(np.complex128, copy=False)]
    for _ in range(4):
        S.append(_solve_L(L, S[-1]))

    def C_pow(X, times):
        X = X.copy()
        for _ in range(times):
            X = X - 2.0 * nu * _solve_L(L, X)
        return X

    Psi = C_pow(S[0], g)
    Psi_nu = -2.0 * g * C_pow(S[1] - nu * S[2], g - 1)
    Psi_xi = 2.0j * nu * g * C_pow(S[2], g - 1)
    Psi_nunu = Psi_nuxi = Psi_xixi = None
    if order >= 2:
        Psi_nunu = 4.0 * g * C_pow(S[2] - nu * S[3], g - 1)
        Psi_nuxi = 2.0j * g * C_pow(S[2] - 2.0 * nu * S[3], g - 1)
        Psi_xixi = 4.0 * nu * g * C_pow(S[3], g - 1)
        if g >= 2:
            gg = 4.0 * g * (g - 1)
            Psi_nunu = Psi_nunu + gg * C_pow(S[2] - 2.0 * nu * S[3] + nu * nu * S[4], g - 2)
            Psi_nuxi = Psi_nuxi - 1.0j * nu * gg * C_pow(S[3] - nu * S[4], g - 2)
            Psi_xixi = Psi_xixi - nu * nu * gg * C_pow(S[4], g - 2)
    if co.weight is not None:
        T = co.weight
        Psi, Psi_nu, Psi_xi = T @ Psi, T @ Psi_nu, T @ Psi_xi
        if order >= 2:
            Psi_nunu, Psi_nuxi, Psi_xixi = T @ Psi_nunu, T @ Psi_nuxi, T @ Psi_xixi
    theta, U = dense_eig_hermitian(Psi.conj().T @ Psi)
    return DerivativeWorkspace(
        nu=nu, xi=xi, Psi=Psi, Psi_nu=Psi_nu, Psi_xi=Psi_xi,
        theta=theta, U=U, Psi_nunu=Psi_nunu, Psi_nuxi=Psi_nuxi, Psi_xixi=Psi_xixi,
    )


def _check_gap(theta, how):
    top = max(theta[0], 1e-300)
    if theta.size > 1:
        if how == "top" and (theta[0] - theta[1]) <= 1e-10 * top:
            raise ShiftObjectiveError(
                "dominant Gram eigenvalue is not simple; objective not "
                "differentiable here (reduce tangentially)"
            )
        if how == "all" and np.min(theta[:-1] - theta[1:]) <= 1e-10 * top:
            raise ShiftObjectiveError(
                "Gram eigenvalues coalesce; second derivatives unavailable "
                "(reduce tangentially)"
            )


def _gradient_from_ws(ws):
    _check_gap(ws.theta, "top")
    u1 = ws.U[:, 0]
    gnu = 2.0 * np.real(u1.conj() @ (ws.Psi.conj().T @ (ws.Psi_nu @ u1)))
    gxi = 2.0 * np.real(u1.conj() @ (ws.Psi.conj().T @ (ws.Psi_xi @ u1)))
    return np.array([gnu, gxi])


def _hessian_from_ws(ws):
    _check_gap(ws.theta, "all")
    theta, U = ws.theta, ws.U
    u1 = U[:, 0]
    P, Pn, Px = ws.Psi, ws.Psi_nu, ws.Psi_xi
    second = {
        ("nu", "nu"): ws.Psi_nunu,
        ("nu", "xi"): ws.Psi_nuxi,
        ("xi", "xi"): ws.Psi_xixi,
    }
    first = {"nu": Pn, "xi": Px}
    A = {x: first[x].conj().T @ P + P.conj().T @ first[x] for x in ("nu", "xi")}

    def entry(x, y):
        h = 2.0 * np.real(
            u1.conj() @ ((first[x].conj().T @ (first[y] @ u1))
                         + P.conj().T @ (second[(x, y)] @ u1))
        )
        for k in range(1, theta.size):
            uk = U[:, k]
            h += 2.0 * np.real(
                (u1.conj() @ (A[x] @ uk)) * (uk.conj() @ (A[y] @ u1))
            ) / (theta[0] - theta[k])
        return h

    H = np.array([[entry("nu", "nu"), entry("nu", "xi")],
                  [entry("nu", "xi"), entry("xi", "xi")]])
    return H


def eval_gradient(co, nu, xi=0.0):
    """Analytic gradient [d psi/d nu, d psi/d xi] of the compressed
    objective. Requires the dominant Gram eigenvalue to be simple."""
    return _gradient_from_ws(make_workspace(co, nu, xi, order=1))


def eval_hessian(co, nu, xi=0.0):
    """Analytic symmetric 2x2 Hessian of the compressed objective.
    Requires all Gram eigenvalues to be (relatively) distinct."""
    return _hessian_from_ws(make_workspace(co, nu, xi, order=2))


def nls_residual_jacobian(co, nu, xi=0.0):
    """Stacked real residual and Jacobian for Gauss-Newton.

    r stacks sqrt(2) * [Re vec(T C^g Wt); Im vec(...)] so that
    0.5 ||r||^2 equals the objective for a single column (and the
    Frobenius surrogate of it otherwise); J holds the corresponding
    (nu, xi) columns from the analytic derivatives.
    """
    ws = make_workspace(co, nu, xi, order=1)
    rt2 = np.sqrt(2.0)

    def stack(X):
        v = np.asarray(X).ravel(order="F")
        return rt2 * np.concatenate([v.real, v.imag])

    r = stack(ws.Psi)
    J = np.column_stack([stack(ws.Psi_nu), stack(ws.Psi_xi)])
    return r, J


def tangential_reduce(co):
    """Replace the compressed residual by its dominant direction.

    Wt becomes Wt @ t with t the right singular vector of Wt's largest
    singular value; the reduced objective is a lower bound of the full one
    and coincides with it at rank one. Used to restore smoothness when
    Gram eigenvalues coalesce (and by default for the trust-region backend
    with block right-hand sides).
    """
    if co.Wtil.shape[1] == 1:
        return co
    _, _, Vh = np.linalg.svd(co.Wtil)
    t = Vh[0].conj()
    return replace(co, Wtil=co.Wtil @ t[:, None])


# ---------------------------------------------------------------------------
# optimization backends
# ---------------------------------------------------------------------------

def _box_clip(x, b):
    return np.array([
        min(max(x[0], b.nu_minus), b.nu_plus),
        0.0 if b.real_axis else min(max(x[1], 0.0), b.xi_plus),
    ])


def _box_diam(b):
    return float(np.hypot(b.nu_plus - b.nu_minus, b.xi_plus))


def _polish_gauss_newton(co, x, b):
    fx = eval_objective(co, x[0], x[1])
    lam = 1e-3
    diam = max(_box_diam(b), 1e-300)
    ncols = 1 if b.real_axis else 2
    converged = False
    it = 0
    for it in range(100):
        try:
            r, J = nls_residual_jacobian(co, x[0], x[1])
        except ShiftObjectiveError:
            break
        J = J[:, :ncols]
        g = J.T @ r
        if np.linalg.norm(g, np.inf) <= 1e-8 * (1.0 + abs(fx)):
            converged = True
            break
        accepted = False
        step = None
        for _ in range(30):
            A = J.T @ J + lam * np.eye(ncols)
            try:
                d = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam = max(lam, 1e-8) * 10.0
                continue
            full = np.array([d[0], 0.0]) if ncols == 1 else d
            xn = _box_clip(x + full, b)
            fn = eval_objective(co, xn[0], xn[1])
            if fn < fx:
                step = xn - x
                x, fx = xn, fn
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted:
            break
        if np.linalg.norm(step) <= 1e-10 * diam:
            converged = True
            break
    return x, fx, it + 1, converged


def _trust_region_step(g, H, delta):
    """Exact solution of min g^T d + 0.5 d^T H d, ||d|| <= delta (dim <= 2)."""
    w, Q = np.linalg.eigh(H)
    gt = Q.T @ g
    if w.min() > 0.0:
        d = Q @ (-gt / w)
        if np.linalg.norm(d) <= delta:
            return d
    lam_lo = max(0.0, -w.min())

    def norm_at(lam):
        den = w + lam
        den = np.where(np.abs(den) < 1e-300, 1e-300, den)
        return np.linalg.norm(gt / den)

    # hard case: gradient orthogonal to the bottom eigenvector
    eps = 1e-12 * max(1.0, np.abs(w).max())
    if norm_at(lam_lo + eps) < delta:
        i = int(np.argmin(w))
        den = w + lam_lo
        d = np.zeros_like(g)
        mask = np.abs(den) > eps
        d[mask] = -gt[mask] / den[mask]
        rem = delta**2 - d @ d
        d = Q @ (d + np.sqrt(max(rem, 0.0)) * np.eye(len(g))[:, i])
        return d
    lo, hi = lam_lo + eps, lam_lo + eps
    while norm_at(hi) > delta:
        hi = 2.0 * hi + 1.0
        if hi > 1e18:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if norm_at(mid) > delta:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    return Q @ (-gt / (w + lam))


def _polish_newton_trust(co, x, b):
    if co.Wtil.shape[1] > 1:
        co = tangential_reduce(co)
    fx = eval_objective(co, x[0], x[1])
    diam = max(_box_diam(b), 1e-300)
    delta = 0.1 * diam
    nvar = 1 if b.real_axis else 2
    converged = False
    it = 0
    reduced_retry = False
    for it in range(100):
        try:
            ws = make_workspace(co, x[0], x[1], order=2)
            g2 = _gradient_from_ws(ws)
            H2 = _hessian_from_ws(ws)
        except ShiftObjectiveError:
            if not reduced_retry and co.Wtil.shape[1] > 1:
                co = tangential_reduce(co)
                reduced_retry = True
                continue
            break
        g = g2[:nvar]
        Hm = H2[:nvar, :nvar]
        if np.linalg.norm(g, np.inf) <= 1e-8 * (1.0 + abs(ws.value)):
            converged = True
            break
        d = _trust_region_step(g, Hm, delta)
        full = np.array([d[0], 0.0]) if nvar == 1 else d
        xn = _box_clip(x + full, b)
        dd = xn - x
        pred = -(g @ dd[:nvar] + 0.5 * dd[:nvar] @ (Hm @ dd[:nvar]))
        fn = eval_objective(co, xn[0], xn[1])
        if pred <= 0.0 or not np.isfinite(fn):
            delta *= 0.25
            if delta <= 1e-14 * diam:
                break
            continue
        rho = (fx - fn) / pred
        if rho < 0.25:
            delta *= 0.25
        elif rho > 0.75 and np.linalg.norm(dd) >= 0.99 * delta:
            delta = min(2.0 * delta, diam)
        if fn < fx:
            x, fx = xn, fn
        if np.linalg.norm(dd) <= 1e-10 * diam:
            converged = True
            break
        if delta <= 1e-14 * diam:
            break
    return x, fx, it + 1, converged


_BACKENDS = {
    "gauss-newton": _polish_gauss_newton,
    "gn": _polish_gauss_newton,
    "newton-trust": _polish_newton_trust,
    "nt": _polish_newton_trust,
}


def optimize_shift(co, x0=None, method="gauss-newton"):
    """Minimize the compressed objective over its spectral box.

    A deterministic coarse grid presearch (24 x 12 objective evaluations;
    48 on the real axis) seeds the chosen backend from the three best grid
    points; a provided initial guess is always polished too and wins ties.
    Returns (alpha, info) with alpha = nu + i xi the best point found and
    info carrying the final value, iteration counts and convergence flags.

    Parameters
    ----------
    co
        CompressedObjective with bounds attached.
    x0
        Optional initial guess, complex or (nu, xi) pair.
    method
        "gauss-newton" (stacked-residual Levenberg iteration) or
        "newton-trust" (trust-region Newton with analytic derivatives;
        block residuals are reduced tangentially first).
    """
    if method not in _BACKENDS:
        raise ValueError(f"unknown optimizer {method!r}")
    b = co.bounds if co.bounds is not None else derive_bounds(np.diag(co.H))
    polish = _BACKENDS[method]

    nus = np.linspace(b.nu_minus, b.nu_plus, 48 if b.real_axis else 24)
    xis = np.array([0.0]) if b.real_axis else np.linspace(0.0, b.xi_plus, 12)
    grid = [(nu, xi) for nu in nus for xi in xis]
    vals = np.array([eval_objective(co, nu, xi) for nu, xi in grid])
    order = np.argsort(vals, kind="stable")[:3]

    starts = []
    if x0 is not None:
        if np.iscomplexobj(np.asarray(x0)) or np.isscalar(x0):
            z = complex(x0)
            x0 = np.array([z.real, abs(z.imag)])
        starts.append(_box_clip(np.asarray(x0, dtype=float), b))
    starts.extend(_box_clip(np.array(grid[i]), b) for i in order if np.isfinite(vals[i]))
    if not starts:
        starts = [np.array([0.5 * (b.nu_minus + b.nu_plus), 0.0])]

    best = None
    runs = []
    for k, st in enumerate(starts):
        x, fx, iters, conv = polish(co, st.copy(), b)
        runs.append((fx, iters, conv))
        if best is None or fx < best[1]:
            best = (x, fx, k, conv)
    x, fx, which, conv = best
    info = {
        "value": fx,
        "converged": conv,
        "n_starts": len(starts),
        "chosen_start": which,
        "from_guess": x0 is not None and which == 0,
        "grid_best": float(vals[order[0]]) if order.size else np.inf,
        "iterations": runs[which][1],
    }
    alpha = complex(x[0], 0.0 if b.real_axis else x[1])
    return alpha, info


# ---------------------------------------------------------------------------
# strategy driver
# ---------------------------------------------------------------------------

def resmin_next_shift(state, problem, config, seed):
    """One residual-minimizing shift for the current iteration state.

    Compresses (seed restriction at step zero; afterwards either the
    recycled extended Krylov space or the recent-Z window, per config),
    takes the projected-Hamiltonian shift on the same compressed data as
    the initial guess, and minimizes the compressed objective over the
    spectral box. Returns (alpha, info).
    """
    if state.j == 0:
        co = seed_compressed(seed, problem)
    elif config.subspace == "EK":
        co = recycle_krylov(seed, state, problem)
    else:
        co = compress_zh(state, config.h, problem)
    if config.g != 1:
        co = replace(co, g=int(config.g))
    guess = hamiltonian_residual_shift(co.H, co.Wtil)
    alpha, info = optimize_shift(co, x0=guess, method=config.optimizer)
    info["compression"] = co.info
    info["guess"] = guess
    return alpha, info


class ResminStrategy:
    """Residual-norm-minimizing shifts, with multistep support.

    ``config.subspace`` selects the compression ("EK" recycles the seed
    space, anything else uses the Z window of size config.h); ``config.g``
    makes each shift a multistep group sharing one factorization.
    """

    def __init__(self, config):
        self.config = config
        self._seed = None
        self.n_factorizations = 0
        self.last_info = None

    def _ensure_seed(self, problem):
        if self._seed is None:
            if self.config.subspace == "EK":
                p, m = self.config.p, self.config.m
            else:
                p, m = 1, 1
            self._seed = build_seed(problem, p, m)
            self.n_factorizations += self._seed.n_factorizations
        return self._seed

    def next_shift(self, state, problem):
        seed = self._ensure_seed(problem)
        alpha, info = resmin_next_shift(state, problem, self.config, seed)
        self.last_info = info
        return ShiftProposal(alpha, budget=max(1, int(self.config.g)))
