"""Cauchy quasi-likelihood surface: transition density, objective, derivatives.

The latent-regime objective evaluated at parameters theta given pairwise
smoothed regime weights w computed at the previous iterate is

    H(theta; w) = sum_{j=1..n} sum_{i,k} w[j,i,k] *
                  log( f(X_j | X_{j-1}, regime i; theta) * A[i,k] ),

where f is the Cauchy density with location X_{j-1} + lam*(b_i - X_{j-1})*h
and scale delta*h, and A is the one-step chain kernel.  The analytic
gradient and Hessian are assembled from the named kernels K1..K9 below,
which factor every derivative into (weight-independent) per-observation
terms; each formula is cross-checked against finite differences in the
test suite.

Index convention: weight arrays have shape (n+1, N, N); index j in 1..n
holds the pair (t_{j-1}, t_j) and index 0 is unused (zero).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ctmc import GeneratorMatrix, transition_matrix_approx
from .errors import EvaluationError

PAIR_SLICE_TOL = 1e-9


@dataclass(frozen=True)
class Theta:
    """Estimation target: regime levels b(1..N), reversion rate, noise scale.

    ``b[i-1]`` is the drift level of regime i.  ``lam`` and ``delta`` must
    be positive; coinciding b levels are legal for transient iterates but
    flagged, since the model is only identified when they differ.
    """

    b: np.ndarray
    lam: float
    delta: float

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        object.__setattr__(self, "b", b)
        if not (self.lam > 0.0):
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not (self.delta > 0.0):
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if b.size != np.unique(b).size:
            warnings.warn("theta has coinciding regime levels b(i) == b(j)", RuntimeWarning)

    @property
    def n_states(self) -> int:
        return self.b.size

    def to_vector(self) -> np.ndarray:
        """Coordinates in the order (b(1), ..., b(N), lam, delta)."""
        return np.concatenate([self.b, [self.lam, self.delta]])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "Theta":
        v = np.asarray(v, dtype=float)
        return cls(v[:-2].copy(), float(v[-2]), float(v[-1]))


@dataclass(frozen=True)
class ObservationSeries:
    """Equally spaced observations X_{t_0..t_n} with step h (t_0 = 0)."""

    x: np.ndarray
    h: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("need at least two observations")
        if not np.all(np.isfinite(x)):
            raise ValueError("observations contain non-finite values")
        if not (self.h > 0.0):
            raise ValueError(f"h must be > 0, got {self.h}")

    @property
    def n(self) -> int:
        return self.x.size - 1


@dataclass(frozen=True)
class SmoothedPairProbs:
    """Pairwise smoothed regime weights w[j, i, k] ~ P(a_{t_{j-1}}=i, a_{t_j}=k | data).

    Shape (n+1, N, N); slice j in 1..n sums to 1 (index 0 unused).
    """

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        if w.ndim != 3 or w.shape[1] != w.shape[2] or w.shape[0] < 2:
            raise ValueError(f"bad weight array shape {w.shape}")
        body = w[1:]
        if np.any(body < 0.0) or np.any(body > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        sums = body.sum(axis=(1, 2))
        if np.any(np.abs(sums - 1.0) > PAIR_SLICE_TOL):
            j = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"pair slice {j + 1} sums to {sums[j]!r}, not 1")

    @property
    def n(self) -> int:
        return self.w.shape[0] - 1

    @property
    def n_states(self) -> int:
        return self.w.shape[1]


def mu_prev(x_prev, b_i, lam: float, h: float):
    """One-step Euler location X_{j-1} + lam*(b_i - X_{j-1})*h."""
    return x_prev + lam * (np.asarray(b_i, dtype=float) - x_prev) * h


def cauchy_transition_density(x_next, x_prev, b_i, theta: Theta, h: float):
    """Cauchy density with location mu_prev and scale delta*h at ``x_next``."""
    scale = theta.delta * h
    r = (np.asarray(x_next, dtype=float) - mu_prev(x_prev, b_i, theta.lam, h)) / scale
    out = 1.0 / (scale * np.pi * (1.0 + r * r))
    if np.ndim(out) == 0:
        return float(out)
    return out


def cauchy_density_matrix(theta: Theta, obs: ObservationSeries, shift: bool = True) -> np.ndarray:
    """Matrix D[j, i] = f(X_j | X_{j-1}, regime i; theta) for j = 1..n.

    With ``shift`` the result has shape (n+1, N) and D[0] = 0, matching the
    1-based pair index convention; otherwise shape (n, N).
    """
    u = _residuals(theta, obs)
    scale = theta.delta * obs.h
    d = scale / (np.pi * (scale * scale + u * u))
    if not shift:
        return d
    out = np.zeros((obs.n + 1, theta.n_states))
    out[1:] = d
    return out


def _residuals(theta: Theta, obs: ObservationSeries) -> np.ndarray:
    """u[j-1, i] = X_j - mu_{j-1}(lam) under regime i, shape (n, N)."""
    xp = obs.x[:-1, None]
    return obs.x[1:, None] - xp - theta.lam * (theta.b[None, :] - xp) * obs.h


def _check_pair_support(a: np.ndarray, pair_tot: np.ndarray) -> None:
    bad = (a <= 0.0) & (pair_tot > 0.0)
    if np.any(bad):
        i, k = np.argwhere(bad)[0]
        raise EvaluationError(
            f"impossible transition has positive weight: A[{i + 1},{k + 1}] = "
            f"{a[i, k]!r} but total weight {pair_tot[i, k]!r}"
        )


def H_n(theta: Theta, g: GeneratorMatrix, obs: ObservationSeries, w: SmoothedPairProbs) -> float:
    """Weighted quasi-log-likelihood H(theta; w).

    Terms with zero weight contribute zero (0*log 0 = 0 convention); a zero
    transition probability carrying positive weight is an evaluation error.
    """
    _check_dims(theta, g, obs, w)
    a = transition_matrix_approx(g, obs.h)
    u = _residuals(theta, obs)
    scale = theta.delta * obs.h
    logf = -np.log(np.pi * (scale * scale + u * u) / scale)
    wi = w.w[1:].sum(axis=2)
    pair_tot = w.w[1:].sum(axis=0)
    _check_pair_support(a, pair_tot)
    log_a = np.where(pair_tot > 0.0, np.log(np.where(a > 0.0, a, 1.0)), 0.0)
    return float(np.sum(wi * logf) + np.sum(pair_tot * log_a))


def _kernels(theta: Theta, obs: ObservationSeries):
    """Shared per-observation factors for the derivative formulas."""
    u = _residuals(theta, obs)
    v = theta.b[None, :] - obs.x[:-1, None]
    h = obs.h
    delta = theta.delta
    scale = delta * h
    k2 = scale / (np.pi * (scale * scale + u * u))
    k1 = np.pi * u * u / (delta * delta * h) - h * np.pi
    k3 = 2.0 * np.pi * u * v / delta
    k4 = 2.0 * np.pi * u * theta.lam / delta
    return u, v, k1, k2, k3, k4


def _check_dims(theta, g, obs, w):
    if theta.n_states != g.n_states or w.n_states != g.n_states or w.n != obs.n:
        raise EvaluationError(
            f"dimension mismatch: theta N={theta.n_states}, generator N={g.n_states}, "
            f"weights (n={w.n}, N={w.n_states}), observations n={obs.n}"
        )


def grad_H(
    theta: Theta, g: GeneratorMatrix, obs: ObservationSeries, w: SmoothedPairProbs
) -> np.ndarray:
    """Analytic gradient of H in the coordinates (b(1..N), lam, delta)."""
    _check_dims(theta, g, obs, w)
    _, _, k1, k2, k3, k4 = _kernels(theta, obs)
    wi = w.w[1:].sum(axis=2)
    d_b = np.sum(k2 * k4 * wi, axis=0)
    d_lam = float(np.sum(k2 * k3 * wi))
    d_delta = float(np.sum(k1 * k2 * wi))
    return np.concatenate([d_b, [d_lam, d_delta]])


def hessian_H(
    theta: Theta, g: GeneratorMatrix, obs: ObservationSeries, w: SmoothedPairProbs
) -> np.ndarray:
    """Analytic Hessian of H; the b-b off-diagonal block is exactly zero."""
    _check_dims(theta, g, obs, w)
    u, v, k1, k2, k3, k4 = _kernels(theta, obs)
    h = obs.h
    delta = theta.delta
    lam = theta.lam
    k5 = -2.0 * np.pi * u * u / (delta**3 * h)
    k6 = -2.0 * np.pi * h * v * v / delta
    k7 = -2.0 * np.pi * u * v / (delta * delta)
    k8 = -2.0 * np.pi * u * lam / (delta * delta)
    k9 = 2.0 * np.pi * (u - lam * v * h) / delta
    wi = w.w[1:].sum(axis=2)
    n_par = theta.n_states + 2
    il, id_ = n_par - 2, n_par - 1
    hess = np.zeros((n_par, n_par))
    hess[id_, id_] = np.sum((k1 * k1 * k2 * k2 + k2 * k5) * wi)
    hess[il, il] = np.sum((k2 * k2 * k3 * k3 + k2 * k6) * wi)
    hess[il, id_] = hess[id_, il] = np.sum((k2 * k2 * k3 * k1 + k2 * k7) * wi)
    bd = np.sum((k2 * k2 * k1 * k4 + k2 * k8) * wi, axis=0)
    bl = np.sum((k2 * k2 * k3 * k4 + k2 * k9) * wi, axis=0)
    bb = np.sum((k2 * k2 * k4 * k4 + k2 * (-2.0 * np.pi * h * lam * lam / delta)) * wi, axis=0)
    for l in range(theta.n_states):
        hess[l, id_] = hess[id_, l] = bd[l]
        hess[l, il] = hess[il, l] = bl[l]
        hess[l, l] = bb[l]
    return hess


def grad_H_q(
    theta: Theta, g: GeneratorMatrix, obs: ObservationSeries, w: SmoothedPairProbs
) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of H in the generator entries q_lm.

    Returns (grad, hess_diag) as N x N matrices; ``hess_diag[l, m]`` is the
    pure second derivative in q_lm.  All mixed theta-q and q_lm-q_l'm'
    second derivatives vanish.  Entries whose total weight is zero are zero
    by the 0*log 0 convention; a zero off-diagonal rate with positive
    weight raises.
    """
    _check_dims(theta, g, obs, w)
    h = obs.h
    pair_tot = w.w[1:].sum(axis=0)
    n = g.n_states
    grad = np.zeros((n, n))
    hess = np.zeros((n, n))
    for l in range(n):
        for m in range(n):
            tot = pair_tot[l, m]
            if tot == 0.0:
                continue
            if l == m:
                denom = 1.0 + g.q[l, l] * h
                if denom <= 0.0:
                    raise EvaluationError(f"1 + q_{l + 1}{l + 1}*h = {denom!r} <= 0")
                grad[l, l] = h / denom * tot
                hess[l, l] = -(h * h) / (denom * denom) * tot
            else:
                if g.q[l, m] <= 0.0:
                    raise EvaluationError(
                        f"q[{l + 1},{m + 1}] = {g.q[l, m]!r} with positive weight {tot!r}"
                    )
                grad[l, m] = tot / g.q[l, m]
                hess[l, m] = -tot / (g.q[l, m] ** 2)
    return grad, hess
