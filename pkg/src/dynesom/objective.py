"""
Time-varying local objectives ``f_{i,t}`` and the dynamic least-squares family.
"""

from __future__ import annotations

import numpy as np

SIGMA_MIN_FLOOR = 1e-6
MAX_REDRAWS = 1000
BUNDLE_FORMAT = "dynesom-ls-instance/1"


class ObjectiveError(ValueError):
    pass


class DynamicObjective:
    """
    Base class for per-node, per-time objectives.

    Subclasses implement `value`, `gradient` and `hessian` for a single node.
    Stacked variables are arrays of shape ``(n, p)``, one row per node.
    """

    n: int
    p: int
    horizon: int

    def value(self, i, t, x):
        raise NotImplementedError

    def gradient(self, i, t, x):
        raise NotImplementedError

    def hessian(self, i, t, x):
        raise NotImplementedError

    #: True when Hessians do not depend on the evaluation point.
    quadratic = False

    def stacked_gradient(self, t, X):
        return np.stack([self.gradient(i, t, X[i]) for i in range(self.n)])

    def stacked_value(self, t, X):
        return float(sum(self.value(i, t, X[i]) for i in range(self.n)))

    def block_hessians(self, t, X):
        return np.stack([self.hessian(i, t, X[i]) for i in range(self.n)])

    def changes_at(self, t):
        """Whether ``f_{., t}`` may differ from ``f_{., t-1}``."""
        return True


class FunctionObjective(DynamicObjective):
    """Objective assembled from user callables ``fn(i, t, x)``."""

    def __init__(self, n, p, horizon, value, gradient, hessian, quadratic=False):
        self.n, self.p, self.horizon = n, p, horizon
        self._value, self._gradient, self._hessian = value, gradient, hessian
        self.quadratic = quadratic

    def value(self, i, t, x):
        return float(self._value(i, t, np.asarray(x, dtype=float)))

    def gradient(self, i, t, x):
        return np.asarray(self._gradient(i, t, np.asarray(x, dtype=float)), dtype=float)

    def hessian(self, i, t, x):
        return np.asarray(self._hessian(i, t, np.asarray(x, dtype=float)), dtype=float)


class FrozenObjective(DynamicObjective):
    """Static view of `base` pinned at time `t0`; every ``t`` maps to ``t0``."""

    def __init__(self, base, t0=0):
        self.base, self.t0 = base, int(t0)
        self.n, self.p, self.horizon = base.n, base.p, base.horizon
        self.quadratic = base.quadratic

    @property
    def H(self):
        return getattr(self.base, "H", None)

    def y(self, i, t):
        return self.base.y(i, self.t0)

    def target(self, t):
        return self.base.target(self.t0)

    def value(self, i, t, x):
        return self.base.value(i, self.t0, x)

    def gradient(self, i, t, x):
        return self.base.gradient(i, self.t0, x)

    def hessian(self, i, t, x):
        return self.base.hessian(i, self.t0, x)

    def stacked_gradient(self, t, X):
        return self.base.stacked_gradient(self.t0, X)

    def block_hessians(self, t, X=None):
        return self.base.block_hessians(self.t0, X)

    def changes_at(self, t):
        return False


class DynamicLeastSquares(DynamicObjective):
    """
    Local objectives ``f_{i,t}(x) = 0.5 * ||H_i x - y_{i,t}||^2``.

    Observations are piecewise constant: ``y_{i,t}`` only changes when ``t`` is
    a multiple of `change_period`, so they are stored once per epoch.

    Parameters
    ----------
    H : ndarray, shape (n, r, p)
        Time-invariant regressors, ``r >= p``.
    y_epochs : ndarray, shape (n_epochs, n, r)
        Observations for each epoch ``t // change_period``.
    targets : ndarray, shape (n_epochs, p)
        Minimizer of the aggregate objective in each epoch. Exact for
        noise-free and projected-noise instances.
    """

    quadratic = True

    def __init__(self, H, y_epochs, targets, change_period, horizon,
                 seed=None, noise_std=0.0, noise="projected", trajectory_scale=1.0,
                 sine_period=500, redraw_noise=True):
        self.H = np.asarray(H, dtype=float)
        self.y_epochs = np.asarray(y_epochs, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        if self.H.ndim != 3:
            raise ObjectiveError("H must have shape (n, r, p)")
        self.n, _, self.p = self.H.shape
        self.change_period = int(change_period)
        self.horizon = int(horizon)
        self.seed = seed
        self.noise_std = float(noise_std)
        self.noise = str(noise)
        self.trajectory_scale = float(trajectory_scale)
        self.sine_period = int(sine_period)
        self.redraw_noise = bool(redraw_noise)
        if self.change_period < 1:
            raise ObjectiveError("change_period must be >= 1")
        need = self.horizon // self.change_period + 1
        if self.y_epochs.shape[0] < need or self.targets.shape[0] < need:
            raise ObjectiveError(f"need {need} epochs of data for horizon {self.horizon}")
        self._gram = np.einsum("nri,nrj->nij", self.H, self.H)
        for arr in (self.H, self.y_epochs, self.targets, self._gram):
            arr.setflags(write=False)

    def epoch(self, t):
        return int(t) // self.change_period

    def y(self, i, t):
        return self.y_epochs[self.epoch(t), i]

    def target(self, t):
        """Constructed minimizer of ``sum_i f_{i,t}``."""
        return self.targets[self.epoch(t)]

    @property
    def target_trajectory(self):
        return np.stack([self.target(t) for t in range(self.horizon + 1)])

    def changes_at(self, t):
        return t > 0 and t % self.change_period == 0

    def value(self, i, t, x):
        r = self.H[i] @ x - self.y(i, t)
        return 0.5 * float(r @ r)

    def gradient(self, i, t, x):
        return local_gradient_ls(self, i, t, x)

    def hessian(self, i, t, x):
        return local_hessian_ls(self, i, t, x)

    def stacked_gradient(self, t, X):
        Y = self.y_epochs[self.epoch(t)]
        R = np.einsum("nrp,np->nr", self.H, X) - Y
        return np.einsum("nrp,nr->np", self.H, R)

    def block_hessians(self, t, X=None):
        return self._gram.copy()

    def save(self, path):
        """Write a self-describing ``.npz`` bundle for exact replay."""
        np.savez(path, format=np.array(BUNDLE_FORMAT), H=self.H, y_epochs=self.y_epochs,
                 targets=self.targets, change_period=self.change_period,
                 horizon=self.horizon, seed=-1 if self.seed is None else self.seed,
                 noise_std=self.noise_std, noise=np.array(self.noise),
                 trajectory_scale=self.trajectory_scale,
                 sine_period=self.sine_period, redraw_noise=self.redraw_noise)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            if str(z["format"]) != BUNDLE_FORMAT:
                raise ObjectiveError(f"{path}: unknown bundle format {z['format']!r}")
            seed = int(z["seed"])
            return cls(z["H"], z["y_epochs"], z["targets"], int(z["change_period"]),
                       int(z["horizon"]), seed=None if seed < 0 else seed,
                       noise_std=float(z["noise_std"]), noise=str(z["noise"]),
                       trajectory_scale=float(z["trajectory_scale"]),
                       sine_period=int(z["sine_period"]),
                       redraw_noise=bool(z["redraw_noise"]))


def local_gradient_ls(instance, i, t, x):
    """``H_i^T (H_i x - y_{i,t})``."""
    Hi = instance.H[i]
    return Hi.T @ (Hi @ np.asarray(x, dtype=float) - instance.y(i, t))


def local_hessian_ls(instance, i, t=None, x=None):
    """``H_i^T H_i``; constant in both ``t`` and ``x``."""
    return instance._gram[i].copy()


def target_scaling(t, sine_period=500):
    """``|sin(pi t / sine_period)|`` with exact zeros at multiples of the period."""
    return abs(np.sin(np.pi * (int(t) % sine_period) / sine_period))


def make_dynamic_least_squares(n, p, horizon, change_period=100, trajectory_scale=1.0,
                               seed=0, rows=None, noise_std=0.0, noise="projected",
                               redraw_noise=True, sine_period=500):
    """
    Draw a dynamic least-squares instance.

    ``H_i`` has i.i.d. standard normal entries (redrawn while its smallest
    singular value is below ``1e-6``). The base minimizer ``x0`` is a random
    direction of norm `trajectory_scale`; at every positive multiple ``t`` of
    `change_period` the minimizer jumps to ``|sin(pi t / 500)| * x0`` and stays
    there until the next change point.

    Observations are ``y_{i,t} = H_i x*_t + eta_{i,t}`` with Gaussian noise of
    scale `noise_std`, drawn once per epoch (or once overall when
    `redraw_noise` is false).

    noise : {"projected", "raw"}
        ``"projected"`` removes the component of the noise seen by the normal
        equations (``sum_i H_i^T eta_i = 0``), so the aggregate minimizer stays
        exactly on the sine trajectory while local minimizers disagree.
        ``"raw"`` keeps plain noise; `targets` is then the minimizer of the
        noisy problem and no longer follows the trajectory.
    """
    if noise not in ("projected", "raw"):
        raise ObjectiveError(f"unknown noise model {noise!r}")
    if min(n, p, horizon, change_period) < 1:
        raise ObjectiveError("n, p, horizon and change_period must all be >= 1")
    rows = p if rows is None else rows
    if rows < p:
        raise ObjectiveError("regressors need at least as many rows as columns")
    rng = np.random.default_rng(seed)
    H = np.empty((n, rows, p))
    for i in range(n):
        for _ in range(MAX_REDRAWS):
            Hi = rng.standard_normal((rows, p))
            if np.linalg.svd(Hi, compute_uv=False).min() >= SIGMA_MIN_FLOOR:
                break
        else:
            raise ObjectiveError(f"could not draw a well-posed regressor for node {i}")
        H[i] = Hi
    direction = rng.standard_normal(p)
    x0 = trajectory_scale * direction / np.linalg.norm(direction)

    n_epochs = horizon // change_period + 1
    targets = np.empty((n_epochs, p))
    targets[0] = x0
    for e in range(1, n_epochs):
        targets[e] = target_scaling(e * change_period, sine_period) * x0
    y_epochs = np.einsum("nrp,ep->enr", H, targets)
    if noise_std > 0:
        if redraw_noise:
            eta = noise_std * rng.standard_normal(y_epochs.shape)
        else:
            eta = np.broadcast_to(noise_std * rng.standard_normal(y_epochs.shape[1:]),
                                  y_epochs.shape)
        gram = np.einsum("nri,nrj->ij", H, H)
        if noise == "projected":
            shift = np.linalg.solve(gram, np.einsum("nrp,enr->pe", H, eta)).T
            eta = eta - np.einsum("nrp,ep->enr", H, shift)
            y_epochs = y_epochs + eta
        else:
            y_epochs = y_epochs + eta
            targets = np.linalg.solve(gram, np.einsum("nrp,enr->pe", H, y_epochs)).T
    return DynamicLeastSquares(H, y_epochs, targets, change_period, horizon, seed=seed,
                               noise_std=noise_std, noise=noise,
                               trajectory_scale=trajectory_scale, sine_period=sine_period,
                               redraw_noise=redraw_noise)


def estimate_bounds(obj, sample_times, n_points=8, seed=0, scale=1.0):
    """
    Empirical curvature constants ``(m, M, L)``.

    ``m``/``M`` are the extreme Hessian eigenvalues over every node, every
    time in `sample_times`, and `n_points` random evaluation points. ``L`` is
    the largest observed ``||hess(x) - hess(z)|| / ||x - z||``; it is exactly
    zero for quadratic objectives.
    """
    sample_times = list(sample_times)
    if not sample_times:
        raise ObjectiveError("need at least one sample time")
    rng = np.random.default_rng(seed)
    m, M, L = np.inf, -np.inf, 0.0
    for t in sample_times:
        for i in range(obj.n):
            pts = scale * rng.standard_normal((n_points, obj.p))
            hs = [obj.hessian(i, t, x) for x in pts]
            for h in hs:
                eig = np.linalg.eigvalsh(0.5 * (h + h.T))
                m, M = min(m, eig[0]), max(M, eig[-1])
            if not obj.quadratic:
                for a in range(n_points - 1):
                    dx = np.linalg.norm(pts[a] - pts[a + 1])
                    L = max(L, np.linalg.norm(hs[a] - hs[a + 1], 2) / dx)
    if m < 1e-9:
        raise ObjectiveError(f"smallest Hessian eigenvalue {m:.3g} below 1e-9: "
                             "local objectives are not strongly convex")
    return float(m), float(M), float(L)
