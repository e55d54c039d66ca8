"""Tracking-error metrics and the empirical contraction fit."""

from __future__ import annotations

import numpy as np


class ContractionError(RuntimeError):
    pass


def error_metric(X, x_tilde):
    """Largest coordinate deviation ``max_i ||x_i - x_tilde||_inf`` over all nodes."""
    X = np.asarray(X, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    if X.shape[-1] != x_tilde.shape[-1]:
        raise ValueError(f"dimension mismatch: {X.shape} vs {x_tilde.shape}")
    return float(np.max(np.abs(X - x_tilde)))


def primal_distance(x, x_star):
    """Stacked Euclidean ``||x - x*||``, summed the same way as `lyapunov_metric`."""
    dx = np.asarray(x, dtype=float) - x_star
    return float(np.sqrt(np.sum(dx * dx)))


def lyapunov_metric(x, v, x_star, v_star, alpha, epsilon):
    """``||u - u*||_G`` with ``G = diag(I, alpha * epsilon * I)``.

    Never below `primal_distance` for the same arguments, rounding included.
    """
    dx = np.asarray(x, dtype=float) - x_star
    dv = np.asarray(v, dtype=float) - v_star
    return float(np.sqrt(np.sum(dx * dx) + alpha * epsilon * np.sum(dv * dv)))


def drift_metric(x_star_prev, x_star, grad_prev, grad, alpha, epsilon, gamma):
    """Optimality drift between consecutive instantaneous optima.

    ``||x*_{t-1} - x*_t|| + sqrt(alpha eps / gamma) ||grad f_t(x*_t) - grad f_{t-1}(x*_{t-1})||``
    with stacked Euclidean norms.
    """
    primal = np.linalg.norm(np.asarray(x_star_prev) - np.asarray(x_star))
    dual = np.linalg.norm(np.asarray(grad) - np.asarray(grad_prev))
    return float(primal + np.sqrt(alpha * epsilon / gamma) * dual)


def fit_contraction(series, burn_in=0.2, floor=1e-10, min_steps=50):
    """
    Estimate ``delta`` in ``||u_t - u*|| <= ||u_{t-1} - u*|| / sqrt(1 + delta)``.

    The series is cut where it first drops to `floor`; the first `burn_in`
    fraction of what remains is discarded, and the estimate is the median of
    ``(e_{t-1} / e_t)^2 - 1`` over the rest.

    Raises
    ------
    ContractionError
        Fewer than `min_steps` usable ratios, or a non-positive estimate.
    """
    s = np.asarray(series, dtype=float)
    below = np.flatnonzero(~(s > floor))
    if below.size:
        s = s[:below[0]]
    start = int(np.ceil(burn_in * s.size))
    s = s[start:]
    if s.size - 1 < min_steps:
        raise ContractionError(
            f"only {max(s.size - 1, 0)} usable steps above floor {floor:g}; need {min_steps}")
    ratios = (s[:-1] / s[1:]) ** 2 - 1.0
    delta = float(np.median(ratios))
    if not delta > 0:
        raise ContractionError(f"series is not contracting (median delta {delta:.3g})")
    return delta


def steady_state_bound(d_max, delta):
    """``d_max / (sqrt(1 + delta) - 1)``."""
    return float(d_max / (np.sqrt(1.0 + delta) - 1.0))
