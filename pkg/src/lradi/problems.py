"""Benchmark problem generators.

Finite-difference convection-diffusion operators on the unit square/cube
with homogeneous Dirichlet boundary, plus a reproducible right-hand-side
factory. These give stable (all eigenvalues in the open left half plane)
nonsymmetric test matrices whose stiffness grows like 1/h^2.
"""

import numpy as np
import scipy.sparse as sp


def _grid_pieces(n0):
    # interior nodes x_i = i*h, i = 1..n0, h = 1/(n0+1)
    h = 1.0 / (n0 + 1)
    x = h * np.arange(1, n0 + 1)
    T = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n0, n0), format="csr") / h**2
    D1 = sp.diags([-1.0, 1.0], [-1, 1], shape=(n0, n0), format="csr") / (2.0 * h)
    return h, x, T, D1


def gen_cd2d(n0, cx=100.0, cy=1000.0):
    """2D convection-diffusion operator on an n0 x n0 interior grid.

    Discretizes Laplace(u) - cx * x * u_x - cy * y * u_y on (0,1)^2 with
    centered differences and Dirichlet boundary; the x index varies fastest
    in the Kronecker ordering. Returns an (n0^2, n0^2) CSC matrix.

    Parameters
    ----------
    n0
        Interior grid points per direction (matrix dimension n0**2).
    cx, cy
        Convection strengths of the x*u_x and y*u_y terms.
    """
    if n0 < 1:
        raise ValueError("n0 must be positive")
    _, x, T, D1 = _grid_pieces(n0)
    I = sp.identity(n0, format="csr")
    X = sp.diags(x)
    A = (
        sp.kron(I, T)
        + sp.kron(T, I)
        - cx * sp.kron(I, X @ D1)
        - cy * sp.kron(X @ D1, I)
    )
    return sp.csc_matrix(A)


def gen_cd3d(n0, cx=100.0, cy=1000.0, cz=10.0):
    """3D convection-diffusion operator on an n0^3 interior grid.

    Same construction as ``gen_cd2d`` with an additional cz * z * u_z term;
    the x index varies fastest, z slowest. Returns an (n0^3, n0^3) CSC
    matrix.
    """
    if n0 < 1:
        raise ValueError("n0 must be positive")
    _, x, T, D1 = _grid_pieces(n0)
    I = sp.identity(n0, format="csr")
    X = sp.diags(x)
    XD = X @ D1
    A = (
        sp.kron(sp.kron(I, I), T)
        + sp.kron(sp.kron(I, T), I)
        + sp.kron(sp.kron(T, I), I)
        - cx * sp.kron(sp.kron(I, I), XD)
        - cy * sp.kron(sp.kron(I, XD), I)
        - cz * sp.kron(sp.kron(XD, I), I)
    )
    return sp.csc_matrix(A)


def gen_rhs(n, s, seed):
    """Reproducible dense right-hand-side factor.

    Returns ``np.random.default_rng(seed).random((n, s))``: uniform [0, 1)
    draws from a PCG64 generator. The generator and draw order are part of
    the contract — the same (n, s, seed) gives bitwise identical output on
    any platform.
    """
    if n < 1 or s < 1:
        raise ValueError("n and s must be positive")
    return np.random.default_rng(seed).random((n, s))
