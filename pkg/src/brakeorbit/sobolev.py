"""Second differences in ``y`` and the separable ``H^1`` preconditioner.

The operator ``A = -d_yy - Lap_r + s`` on a stack of slices is diagonalised
in ``y`` by a small generalised eigenproblem and inverted mode by mode with
banded Cholesky solves in ``r``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh

from .radial import RadialGrid

NEUMANN = "neumann"
DIRICHLET = "dirichlet"


class YOperator:
    """Variational second difference on ``n`` slices with spacing ``dy``.

    Each end is either ``"neumann"`` (mirror ghost, half cell) or
    ``"dirichlet"`` (zero ghost one step beyond the end node).  ``apply``
    returns the strong form ``-d_yy v``; ``mass`` holds the trapezoid-like
    node weights that make the stencil symmetric.
    """

    def __init__(self, n: int, dy: float, left: str = NEUMANN, right: str = NEUMANN):
        if n < 2:
            raise ValueError("need at least two slices")
        self.n, self.dy, self.left, self.right = int(n), float(dy), left, right
        mass = np.full(self.n, self.dy)
        diag = np.full(self.n, 2.0 / self.dy)
        if left == NEUMANN:
            mass[0] = 0.5 * self.dy
            diag[0] = 1.0 / self.dy
        if right == NEUMANN:
            mass[-1] = 0.5 * self.dy
            diag[-1] = 1.0 / self.dy
        self.mass = mass
        self._diag = diag
        self._eig = None

    def energy_matrix(self) -> np.ndarray:
        K = np.diag(self._diag)
        off = -np.ones(self.n - 1) / self.dy
        K += np.diag(off, 1) + np.diag(off, -1)
        return K

    def apply(self, v):
        """``-d_yy v`` along axis 0 including the ghost conventions."""
        v = np.asarray(v)
        out = self._diag.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        out[:-1] -= v[1:] / self.dy
        out[1:] -= v[:-1] / self.dy
        return out / self.mass.reshape((-1,) + (1,) * (v.ndim - 1))

    def eig(self):
        """Eigenvalues and mass-orthonormal eigenvectors of ``-d_yy``."""
        if self._eig is None:
            self._eig = eigh(self.energy_matrix(), np.diag(self.mass))
        return self._eig


class Preconditioner:
    """Inverse of ``-d_yy - Lap_r + shift`` on ``(n_y, n_r)`` stacks."""

    def __init__(self, radial: RadialGrid, yop: YOperator, shift: float = 1.0):
        self.radial = radial
        self.yop = yop
        lam, phi = yop.eig()
        self.lam, self.phi = lam, phi
        self._chol = [cholesky_banded(radial.banded_stiffness(shift + lk)) for lk in lam]

    def solve(self, g):
        g = np.asarray(g, dtype=float)
        w = self.radial.quad_weights
        modal = self.phi.T @ (self.yop.mass[:, None] * g)
        out = np.empty_like(modal)
        for k, cb in enumerate(self._chol):
            out[k] = cho_solve_banded((cb, False), w * modal[k])
        return self.phi @ out

    def gram(self, idx, normals):
        """Coupling of single-slice loads through ``A^{-1}``.

        ``S[k, j] = <n_k, (A^{-1} E_j n_j)[idx[k]]>_w`` where ``E_j n_j`` is
        the stack holding ``normals[j]`` in row ``idx[j]`` and zeros elsewhere.
        """
        idx = np.asarray(idx)
        w = self.radial.quad_weights
        ph = self.phi[idx]
        wn = (np.asarray(normals) * w).T
        S = np.zeros((idx.size, idx.size))
        for m, cb in enumerate(self._chol):
            x = cho_solve_banded((cb, False), wn)
            S += np.outer(ph[:, m], ph[:, m]) * (wn.T @ x)
        return S * self.yop.mass[idx][None, :]
