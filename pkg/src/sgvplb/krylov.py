"""Restarted GMRES with optional block-Jacobi right preconditioning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .hiergrid import AdaptiveGrid
from .kronops import SeparableOperator, compose_block_diag


@dataclass
class SolveReport:
    """Outcome of a GMRES solve.

    Attributes
    ----------
    iterations : int
        Total inner iterations (matrix-vector products after the initial
        residual).
    final_residual : float
        Relative residual ``||b - A x|| / ||b||`` (absolute when ``b = 0``).
    converged : bool
    restarts : int
    breakdown : bool
        Lucky breakdown (the Krylov space became invariant).
    history : list of float
        Relative residual estimate after each inner iteration.
    """

    iterations: int
    final_residual: float
    converged: bool
    restarts: int
    breakdown: bool = False
    history: Optional[list] = None


class BlockJacobi:
    """Inverse of the element diagonal blocks of a separable operator."""

    def __init__(self, blocks: np.ndarray):
        self.nblock, self.b, _ = blocks.shape
        try:
            self.inv = np.linalg.inv(blocks)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular diagonal block in block-Jacobi") from exc
        if not np.all(np.isfinite(self.inv)):
            raise np.linalg.LinAlgError("singular diagonal block in block-Jacobi")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        z = np.einsum("nij,nj->ni", self.inv, r.reshape(self.nblock, self.b))
        return z.reshape(-1)


def block_jacobi(op: SeparableOperator, grid: AdaptiveGrid) -> BlockJacobi:
    """Block-Jacobi preconditioner from the element diagonal blocks of ``op``."""
    return BlockJacobi(compose_block_diag(op, grid))


def gmres(
    applyA: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    restart: int = 100,
    maxiter: int = 1000,
    precond: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` by restarted GMRES.

    Parameters
    ----------
    applyA : callable
        Linear map.
    b : ndarray
    x0 : ndarray, optional
        Initial guess (zero by default).
    tol : float
        Relative tolerance on ``||b - A x|| / ||b||``.
    restart : int
        Krylov subspace size per cycle.
    maxiter : int
        Cap on the total number of inner iterations.
    precond : callable, optional
        Right preconditioner ``M^{-1}``; the iteration minimizes the true
        residual of ``A M^{-1} y = b`` and returns ``x = x0 + M^{-1} y``.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    M = precond if precond is not None else (lambda v: v)
    bnorm = float(np.linalg.norm(b))
    scale = bnorm if bnorm > 0 else 1.0
    r = b - applyA(x) if np.any(x) else b.copy()
    beta = float(np.linalg.norm(r))
    history: list[float] = []
    if beta <= tol * scale:
        return x, SolveReport(0, beta / scale, True, 0, False, history)
    total = 0
    restarts = 0
    breakdown = False
    m = max(1, min(restart, b.size))
    while True:
        V = [r / beta]
        Z = []
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        j_used = 0
        for j in range(m):
            Z.append(M(V[j]))
            w = np.array(applyA(Z[j]), dtype=float)
            total += 1
            # modified Gram-Schmidt with one conditional reorthogonalization
            wnorm0 = float(np.linalg.norm(w))
            for i in range(j + 1):
                H[i, j] = float(V[i] @ w)
                w -= H[i, j] * V[i]
            hn = float(np.linalg.norm(w))
            if hn > 0.0 and max(abs(float(vi @ w)) for vi in V) > 1e-8 * hn:
                for i in range(j + 1):
                    c = float(V[i] @ w)
                    H[i, j] += c
                    w -= c * V[i]
                hn = float(np.linalg.norm(w))
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            res = abs(g[j + 1]) / scale
            history.append(res)
            j_used = j + 1
            if hn <= 1e-14 * max(wnorm0, 1e-300):
                breakdown = True
            else:
                V.append(w / hn)
            if res <= tol or breakdown or total >= maxiter:
                break
        y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used]) if j_used else np.zeros(0)
        for yi, zi in zip(y, Z):
            x += yi * zi
        r = b - applyA(x)
        beta = float(np.linalg.norm(r))
        rel = beta / scale
        if rel <= tol:
            return x, SolveReport(total, rel, True, restarts, breakdown, history)
        if total >= maxiter or beta == 0.0:
            return x, SolveReport(total, rel, False, restarts, breakdown, history)
        # a breakdown with the true residual above tolerance is a rounding
        # effect; restart from the recomputed residual
        restarts += 1
