"""
Centralized dense ground truth for desk-scale problems.

Everything here materializes ``np x np`` matrices: ``I - Z``, its square root,
the exact proximal method of multipliers and the global (v-form) ESOM
recursion. Operations refuse sizes above ``DENSE_LIMIT``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .esom import build_split_operators, dense_truncated_inverse
from .topology import ZERO_EIG_TOL

DENSE_LIMIT = 2000
CLIP_TOL = 1e-12


class OracleError(RuntimeError):
    pass


def _guard(dim):
    if dim > DENSE_LIMIT:
        raise OracleError(f"dense size {dim} exceeds limit {DENSE_LIMIT}")


def sqrt_psd(A, tol=CLIP_TOL):
    """Symmetric PSD square root by eigendecomposition.

    Eigenvalues in ``(-tol, 0)`` are clipped to zero; anything more negative,
    or an asymmetric input, raises `OracleError`.
    """
    A = np.asarray(A, dtype=float)
    _guard(A.shape[0])
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise OracleError(f"expected a square matrix, got shape {A.shape}")
    if np.max(np.abs(A - A.T), initial=0.0) > tol * max(1.0, np.max(np.abs(A), initial=0.0)):
        raise OracleError("input is not symmetric")
    lam, U = np.linalg.eigh(0.5 * (A + A.T))
    if lam.size and lam[0] < -tol:
        raise OracleError(f"input is indefinite (eigenvalue {lam[0]:.3g})")
    lam = np.clip(lam, 0.0, None)
    return (U * np.sqrt(lam)) @ U.T


class DenseConsensus:
    """Dense ``I - Z``, ``(I - Z)^{1/2}`` and its pseudo-inverse for one network."""

    def __init__(self, weights, p):
        n = weights.n
        _guard(n * p)
        self.n, self.p = n, p
        self.weights = weights
        self.Z = weights.lifted_dense(p)
        self.L = np.eye(n * p) - self.Z
        lam, U = np.linalg.eigh(np.eye(n) - weights.W)
        lam = np.where(np.abs(lam) < CLIP_TOL, 0.0, lam)
        if lam[0] < 0:
            raise OracleError(f"I - W is indefinite (eigenvalue {lam[0]:.3g})")
        root = np.sqrt(lam)
        inv_root = np.zeros_like(root)
        nz = lam > ZERO_EIG_TOL
        inv_root[nz] = 1.0 / root[nz]
        eye_p = np.eye(p)
        # I - Z = (I - W) (x) I_p, so roots and pseudo-inverses lift blockwise
        self.S = np.kron((U * root) @ U.T, eye_p)
        self.S_pinv = np.kron((U * inv_root) @ U.T, eye_p)
        # a single node has no nonzero eigenvalue, hence no gamma
        self.gamma = float(lam[nz].min()) if nz.any() else None

    def flat(self, x):
        return np.asarray(x, dtype=float).reshape(-1)

    def stacked(self, x):
        return np.asarray(x, dtype=float).reshape(self.n, self.p)

    def recover_dual(self, q):
        """Least-norm ``v`` with ``(I - Z)^{1/2} v = q``."""
        return self.stacked(self.S_pinv @ self.flat(q))


@dataclass
class OracleSolution:
    x_star: np.ndarray
    v_star: np.ndarray
    kkt_residual: float


def solve_instantaneous_optimum(obj, t, x_init=None, tol=1e-12, max_iter=100):
    """Minimizer of ``sum_i f_{i,t}`` over a single ``p``-vector."""
    if getattr(obj, "H", None) is not None:
        A = np.einsum("nri,nrj->ij", obj.H, obj.H)
        b = sum(obj.H[i].T @ obj.y(i, t) for i in range(obj.n))
        return np.linalg.solve(A, b)
    x = np.zeros(obj.p) if x_init is None else np.array(x_init, dtype=float)

    def F(z):
        return sum(obj.value(i, t, z) for i in range(obj.n))

    for _ in range(max_iter):
        g = sum(obj.gradient(i, t, x) for i in range(obj.n))
        if np.linalg.norm(g) < tol:
            return x
        Hs = sum(obj.hessian(i, t, x) for i in range(obj.n))
        step = np.linalg.solve(Hs, g)
        f0, s = F(x), 1.0
        while F(x - s * step) > f0 - 0.25 * s * (g @ step) and s > 1e-10:
            s *= 0.5
        x = x - s * step
    raise OracleError(f"Newton did not converge at t={t}")


def optimal_dual(obj, consensus, x_star, t, tol=1e-8):
    """Minimum-norm ``v`` solving ``grad f_t(x*) + (I - Z)^{1/2} v = 0``."""
    grad = consensus.flat(obj.stacked_gradient(t, consensus.stacked(x_star)))
    v = -consensus.S_pinv @ grad
    residual = float(np.linalg.norm(grad + consensus.S @ v))
    if residual > tol:
        raise OracleError(f"KKT residual {residual:.3g} at t={t}: x_star is not optimal")
    return consensus.stacked(v), residual


def kkt_solution(obj, consensus, t):
    x_tilde = solve_instantaneous_optimum(obj, t)
    x_star = np.tile(x_tilde, (consensus.n, 1))
    v_star, residual = optimal_dual(obj, consensus, x_star, t)
    return OracleSolution(x_star, v_star, residual)


def _dense_hessian(obj, t, X):
    n, p = X.shape
    Hf = np.zeros((n * p, n * p))
    for i in range(n):
        Hf[i * p:(i + 1) * p, i * p:(i + 1) * p] = obj.hessian(i, t, X[i])
    return Hf


def pmm_step(obj, consensus, config, x_prev, v_prev, t, tol=1e-12, max_iter=50):
    """Exact proximal method of multipliers.

    ``x_t = argmin L_t(x, v_prev) + eps/2 ||x - x_prev||^2`` followed by
    ``v_t = v_prev + alpha (I - Z)^{1/2} x_t``.
    """
    a, eps = config.alpha, config.epsilon
    xp, vp = consensus.flat(x_prev), consensus.flat(v_prev)
    lin = consensus.S @ vp
    x = xp.copy()
    for _ in range(max_iter):
        X = consensus.stacked(x)
        grad = (consensus.flat(obj.stacked_gradient(t, X)) + lin
                + a * (consensus.L @ x) + eps * (x - xp))
        if np.linalg.norm(grad) <= tol * max(1.0, np.linalg.norm(x)):
            break
        Hm = _dense_hessian(obj, t, X) + a * consensus.L + eps * np.eye(x.size)
        x = x - np.linalg.solve(Hm, grad)
        if obj.quadratic:
            break
    else:
        raise OracleError(f"inner proximal solve did not converge at t={t}")
    v = vp + a * (consensus.S @ x)
    return consensus.stacked(x), consensus.stacked(v)


def exact_esom_step(obj, consensus, config, x_prev, v_prev, t, K=None):
    """Global v-form ESOM step with the exact ``H_t^-1`` (``K=None``) or ``Hhat^-1(K)``."""
    a = config.alpha
    X = consensus.stacked(x_prev)
    xp, vp = consensus.flat(x_prev), consensus.flat(v_prev)
    g = consensus.flat(obj.stacked_gradient(t, X)) + consensus.S @ vp + a * (consensus.L @ xp)
    if K is None:
        Ht = _dense_hessian(obj, t, X) + a * consensus.L + config.epsilon * np.eye(xp.size)
        x = xp - np.linalg.solve(Ht, g)
    else:
        split = build_split_operators(obj, consensus.weights, config, X, t)
        x = xp - dense_truncated_inverse(split, K) @ g
    v = vp + a * (consensus.S @ x)
    return consensus.stacked(x), consensus.stacked(v)
