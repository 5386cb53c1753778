"""EM-style estimation of theta = (b(1..N), lam, delta) from observations.

Each iteration smooths the hidden regime at the current iterate (E-step),
then improves the weighted quasi-log-likelihood H in theta (M-step).  The
default M-step is a single projected gradient ascent step of length rho;
the Newton variant solves the full (N+2)-dimensional system and falls back
to the gradient step when the Hessian solve fails or the step does not
improve H.  Box constraints keep lam and delta strictly positive.

Termination statistics between successive iterates:

    D1 = |H_new - H_old| / |H_old|
    D2 = ||theta_new - theta_old|| / ||theta_old||
    D3 = ||theta_new - theta_old||

with Euclidean norms; the loop stops when the chosen statistic falls below
``epsilon`` or ``max_iters`` is reached.  The estimate on a max-iteration
stop is the last iterate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ctmc import GeneratorMatrix, validate_generator
from .errors import ConfigError, NumericalFailure
from .likelihood import (
    ObservationSeries,
    SmoothedPairProbs,
    Theta,
    H_n,
    grad_H,
    hessian_H,
)
from .smoother import backward_smooth, forward_filter

TERMINATION_CHOICES = ("D1", "D2", "D3")
M_STEP_CHOICES = ("first_order", "newton")


@dataclass(frozen=True)
class EmConfig:
    """Tuning knobs for :func:`em_fit`.

    ``rho`` is the gradient step length; ``epsilon`` the termination
    threshold on the chosen statistic.  The per-coordinate boxes bound the
    iterates; lam and delta lows must be positive.  Initialization policy:
    an explicit ``theta0``, or uniform draws inside ``init_*_range`` seeded
    by ``init_seed`` when ``theta0`` is None.  ``update_q`` additionally
    re-estimates the chain generator each iteration.
    """

    epsilon: float = 1e-3
    rho: float = 1e-4
    max_iters: int = 300
    termination: str = "D3"
    m_step: str = "first_order"
    update_q: bool = False
    b_box: tuple[float, float] = (-10.0, 20.0)
    lambda_box: tuple[float, float] = (1e-6, 20.0)
    delta_box: tuple[float, float] = (1e-6, 10.0)
    theta0: tuple[float, ...] | None = None
    init_seed: int | None = None
    init_b_range: tuple[float, float] = (0.0, 10.0)
    init_lambda_range: tuple[float, float] = (0.0, 10.0)
    init_delta_range: tuple[float, float] = (0.0, 5.0)
    initial_filter_probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.termination not in TERMINATION_CHOICES:
            raise ConfigError(
                f"termination must be one of {TERMINATION_CHOICES}, got {self.termination!r}"
            )
        if self.m_step not in M_STEP_CHOICES:
            raise ConfigError(
                f"m_step must be one of {M_STEP_CHOICES}, got {self.m_step!r}"
            )
        if not (self.epsilon > 0.0) or not (self.rho > 0.0):
            raise ConfigError("epsilon and rho must be > 0")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        for name, box in (
            ("b_box", self.b_box),
            ("lambda_box", self.lambda_box),
            ("delta_box", self.delta_box),
        ):
            if not (box[0] <= box[1]):
                raise ConfigError(f"{name} has low > high: {box}")
        if self.lambda_box[0] <= 0.0 or self.delta_box[0] <= 0.0:
            raise ConfigError("lambda_box and delta_box lows must be > 0")

    def theta_boxes(self, n_states: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (low, high) bound vectors in theta coordinate order."""
        lo = np.concatenate(
            [np.full(n_states, self.b_box[0]), [self.lambda_box[0], self.delta_box[0]]]
        )
        hi = np.concatenate(
            [np.full(n_states, self.b_box[1]), [self.lambda_box[1], self.delta_box[1]]]
        )
        return lo, hi

    def initial_theta(self, n_states: int) -> Theta:
        """Resolve the initialization policy to a concrete starting point."""
        if self.theta0 is not None:
            v = np.asarray(self.theta0, dtype=float)
            if v.shape != (n_states + 2,):
                raise ConfigError(
                    f"theta0 must have {n_states + 2} coordinates, got {v.shape}"
                )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return Theta.from_vector(v)
        rng = np.random.default_rng(self.init_seed)
        return random_theta0(
            n_states,
            rng,
            self.init_b_range,
            self.init_lambda_range,
            self.init_delta_range,
        )


@dataclass(frozen=True)
class IterationRecord:
    """One EM iteration: new iterate, objective values, step diagnostics.

    ``h_before`` is H(theta_m; theta_m) and ``h_after`` H(theta_{m+1};
    theta_m), both under the weights smoothed at theta_m, so
    h_after < h_before marks an ascent violation.
    """

    iteration: int
    theta: np.ndarray
    h_before: float
    h_after: float
    stat: float
    ascent_violation: bool
    used_fallback: bool
    elapsed_ms: float = 0.0


@dataclass(frozen=True)
class EmResult:
    """Outcome of :func:`em_fit`; unpacks as (theta, trace, status).

    ``status`` is 'converged', 'max_iters_reached' or 'numerical_failure';
    ``trace`` holds one record per completed iteration.
    """

    theta: Theta
    generator: GeneratorMatrix
    trace: list[IterationRecord]
    status: str
    iterations: int
    message: str = ""

    def __iter__(self):
        return iter((self.theta, self.trace, self.status))

    @property
    def ascent_violations(self) -> int:
        return sum(rec.ascent_violation for rec in self.trace)


def first_order_step(
    theta: Theta,
    grad: np.ndarray,
    rho: float,
    boxes: tuple[np.ndarray, np.ndarray],
) -> Theta:
    """Projected gradient ascent step: clip(theta + rho * grad) into the boxes."""
    if not np.all(np.isfinite(grad)):
        raise NumericalFailure("non-finite gradient in M-step")
    lo, hi = boxes
    v = np.clip(theta.to_vector() + rho * grad, lo, hi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return Theta.from_vector(v)


def newton_step(
    theta: Theta,
    grad: np.ndarray,
    hess: np.ndarray,
    boxes: tuple[np.ndarray, np.ndarray],
) -> tuple[Theta, bool]:
    """Projected Newton step; returns (iterate, solve_failed).

    On a singular or non-finite solve the input iterate is returned with
    the failure flag set; the caller decides the fallback.
    """
    if not np.all(np.isfinite(grad)) or not np.all(np.isfinite(hess)):
        raise NumericalFailure("non-finite derivatives in M-step")
    lo, hi = boxes
    try:
        step = np.linalg.solve(hess, -grad)
    except np.linalg.LinAlgError:
        return theta, True
    v = np.clip(theta.to_vector() + step, lo, hi)
    if not np.all(np.isfinite(v)):
        return theta, True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return Theta.from_vector(v), False


def termination_stat(
    kind: str,
    theta_old: np.ndarray,
    theta_new: np.ndarray,
    h_old: float,
    h_new: float,
) -> float:
    """Evaluate termination statistic D1, D2, or D3 (see module docstring)."""
    if kind not in TERMINATION_CHOICES:
        raise ConfigError(f"unknown termination statistic {kind!r}")
    if kind == "D1":
        denom = abs(h_old)
        if denom == 0.0:
            warnings.warn("D1 denominator is zero, using |dH|", RuntimeWarning)
            return abs(h_new - h_old)
        return abs(h_new - h_old) / denom
    d = float(np.linalg.norm(np.asarray(theta_new) - np.asarray(theta_old)))
    if kind == "D3":
        return d
    denom = float(np.linalg.norm(theta_old))
    if denom == 0.0:
        warnings.warn("D2 denominator is zero, using D3", RuntimeWarning)
        return d
    return d / denom


def update_generator(
    g: GeneratorMatrix, w: SmoothedPairProbs, h: float
) -> GeneratorMatrix:
    """Re-estimate the generator from pairwise weights.

    The weighted objective in the kernel entries is maximized by the
    row-normalized pair totals A[l, m] = W[l, m] / sum_m W[l, m]; converting
    back through A = I + Q h gives the rate update.  Rows with zero total
    weight keep their previous rates.
    """
    tot = w.w[1:].sum(axis=0)
    q = np.array(g.q, dtype=float)
    for l in range(g.n_states):
        row_tot = tot[l].sum()
        if row_tot <= 0.0:
            continue
        a_row = tot[l] / row_tot
        q[l] = a_row / h
        off = q[l].sum() - q[l, l]
        q[l, l] = -off
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return validate_generator(q, allow_single_state=g.n_states == 1)


def em_fit(
    obs: ObservationSeries,
    g: GeneratorMatrix,
    cfg: EmConfig | None = None,
    theta0: Theta | None = None,
) -> EmResult:
    """Run the EM loop; returns an :class:`EmResult` (unpacks to
    (theta, trace, status)).

    ``theta0`` overrides the config initialization policy.  Numerical
    breakdown does not raise: the result carries status
    'numerical_failure', the last good iterate, and a message.
    """
    if cfg is None:
        cfg = EmConfig()
    theta = theta0 if theta0 is not None else cfg.initial_theta(g.n_states)
    if theta.n_states != g.n_states:
        raise ConfigError(
            f"theta has {theta.n_states} regimes, generator {g.n_states} states"
        )
    boxes = cfg.theta_boxes(g.n_states)
    gen = g
    trace: list[IterationRecord] = []
    init_probs = cfg.initial_filter_probs
    for m in range(1, cfg.max_iters + 1):
        try:
            fs = forward_filter(theta, gen, obs, init_probs)
            w = backward_smooth(fs, theta, gen, obs)
            h_before = H_n(theta, gen, obs, w)
            grad = grad_H(theta, gen, obs, w)
            fallback = False
            if cfg.m_step == "newton":
                hess = hessian_H(theta, gen, obs, w)
                theta_new, failed = newton_step(theta, grad, hess, boxes)
                if failed or H_n(theta_new, gen, obs, w) < h_before:
                    theta_new = first_order_step(theta, grad, cfg.rho, boxes)
                    fallback = True
            else:
                theta_new = first_order_step(theta, grad, cfg.rho, boxes)
            h_after = H_n(theta_new, gen, obs, w)
            if cfg.update_q:
                gen = update_generator(gen, w, obs.h)
        except NumericalFailure as exc:
            return EmResult(
                theta, gen, trace, "numerical_failure", m - 1, message=str(exc)
            )
        stat = termination_stat(
            cfg.termination, theta.to_vector(), theta_new.to_vector(), h_before, h_after
        )
        trace.append(
            IterationRecord(
                m,
                theta_new.to_vector(),
                h_before,
                h_after,
                stat,
                bool(h_after < h_before),
                fallback,
            )
        )
        theta = theta_new
        if stat <= cfg.epsilon:
            return EmResult(theta, gen, trace, "converged", m)
    return EmResult(theta, gen, trace, "max_iters_reached", cfg.max_iters)


def sort_regimes(theta: Theta) -> tuple[Theta, np.ndarray]:
    """Order regimes by decreasing level b; returns (theta, permutation).

    Regime labels are exchangeable in the likelihood, so estimates are only
    identified up to relabelling; sorting fixes a canonical order for
    reporting and error computation.
    """
    perm = np.argsort(-theta.b, kind="stable")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return Theta(theta.b[perm], theta.lam, theta.delta), perm


def quadratic_error(theta_hat: Theta, theta_true: Theta) -> np.ndarray:
    """Coordinatewise squared errors in the order (b(1..N), lam, delta)."""
    if theta_hat.n_states != theta_true.n_states:
        raise ConfigError("estimate and truth have different regime counts")
    d = theta_hat.to_vector() - theta_true.to_vector()
    return d * d


def random_theta0(
    n_states: int,
    rng: np.random.Generator,
    b_range: tuple[float, float] = (0.0, 10.0),
    lambda_range: tuple[float, float] = (0.0, 10.0),
    delta_range: tuple[float, float] = (0.0, 5.0),
) -> Theta:
    """Uniform random starting point; lam and delta are resampled away from
    zero so the iterate is strictly inside the admissible region.
    """
    b = rng.uniform(b_range[0], b_range[1], size=n_states)
    lam = 0.0
    while lam <= 0.0:
        lam = float(rng.uniform(lambda_range[0], lambda_range[1]))
    delta = 0.0
    while delta <= 0.0:
        delta = float(rng.uniform(delta_range[0], delta_range[1]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return Theta(b, lam, delta)
