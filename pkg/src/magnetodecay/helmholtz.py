"""Discrete Helmholtz splitting of node vector fields into solenoidal and gradient parts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import LinearSolveFailure
from .grid import Operators


@dataclass
class HelmholtzSplit:
    u_T: np.ndarray
    u_L: np.ndarray
    potential: np.ndarray
    div_residual: float  # discrete L2 norm of div u_T
    curl_residual: float  # discrete L2 norm of curl u_L
    iterations: int

    def reassembly_error(self, u) -> float:
        return float(np.max(np.abs(self.u_T + self.u_L - u)))


def helmholtz_decompose(u, ops: Operators, rtol: float = 1e-13, maxiter: int = 20_000) -> HelmholtzSplit:
    """Split ``u = u_T + u_L`` with ``div u_T = 0`` and ``curl u_L = 0`` in the discrete sense.

    The potential lives on cells and ``u_L = D^T phi`` with ``D`` the
    cell-centred divergence, so the cell curl of ``u_L`` vanishes identically;
    ``phi`` solves ``D D^T phi = D u`` (a Neumann-type potential problem)
    by conjugate gradients. ``u_T`` keeps the boundary values ``u`` had minus
    those of ``u_L``; no boundary condition is imposed on the parts.
    """
    u = np.asarray(u, dtype=float)
    q = ops.div_cell(u)
    shape = q.shape

    def mv(x):
        return ops.div_cell(ops.div_cell_T(x.reshape(shape))).ravel()

    n = q.size
    count = [0]

    def cb(_):
        count[0] += 1

    phi, info = cg(LinearOperator((n, n), matvec=mv, dtype=float), q.ravel(), rtol=rtol, atol=0.0,
                   maxiter=maxiter, callback=cb)
    if info > 0:
        raise LinearSolveFailure(f"potential solve did not converge in {maxiter} iterations")
    phi = phi.reshape(shape)
    u_L = ops.div_cell_T(phi)
    u_T = u - u_L
    return HelmholtzSplit(
        u_T,
        u_L,
        phi,
        math.sqrt(ops.norm2(ops.div_cell(u_T))),
        math.sqrt(ops.norm2(ops.curl_cell(u_L))),
        count[0],
    )
