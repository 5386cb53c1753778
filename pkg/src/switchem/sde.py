"""Path simulation for the regime-switching mean-reverting jump SDE.

The observed process solves

    dX_t = lam * (b(alpha_t) - X_t) dt + dZ_t,

where alpha is a continuous-time Markov chain on {1..N} with generator Q
(independent of Z) and Z is a centered symmetric NIG Levy process with
unit-time law NIG(a, 0, delta, 0).  Paths are generated by an Euler scheme
on a fine grid of spacing h / fine_factor; the chain is frozen between fine
grid points and the noise increment over a span tau is an exact
NIG(a, 0, delta*tau, 0) draw (the Levy increments convolve, so no
refinement of the noise itself is needed).  Observations are the fine path
thinned to the coarse grid of spacing h.

``self_convergence_test`` measures the strong self-convergence of the Euler
scheme by coupling: all refinement levels share one finest-grid chain path
and one finest-grid pool of noise increments, aggregated upward, so
successive levels differ only through the drift discretization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctmc import ChainPath, GeneratorMatrix, simulate_chain
from .errors import ConfigError
from .likelihood import ObservationSeries, Theta
from .nig import NigParams, sample_nig

GRID_TOL = 1e-9


@dataclass(frozen=True)
class SimulationConfig:
    """Everything needed to draw one observed path.

    alpha0 defaults to the regime with the largest level b(i) (smallest
    label on ties).  ``fine_factor`` is the number of Euler substeps per
    observation interval.
    """

    theta_true: Theta
    a_nuisance: float
    generator: GeneratorMatrix
    horizon_t: float
    obs_step_h: float
    fine_factor: int = 10
    x0: float = 0.0
    alpha0: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if not (self.a_nuisance > 0.0):
            raise ConfigError(f"a must be > 0, got {self.a_nuisance}")
        if not (self.horizon_t > 0.0) or not (self.obs_step_h > 0.0):
            raise ConfigError("horizon_t and obs_step_h must be > 0")
        if self.fine_factor < 1:
            raise ConfigError(f"fine_factor must be >= 1, got {self.fine_factor}")
        if self.theta_true.n_states != self.generator.n_states:
            raise ConfigError(
                f"theta has {self.theta_true.n_states} regimes but the generator "
                f"has {self.generator.n_states} states"
            )
        n = self.horizon_t / self.obs_step_h
        if abs(n - round(n)) > GRID_TOL * max(1.0, n):
            raise ConfigError(
                f"horizon_t / obs_step_h = {n!r} is not an integer number of steps"
            )
        if self.fine_step >= self.generator.max_step():
            raise ConfigError(
                f"fine step {self.fine_step:.6g} exceeds the chain step bound "
                f"{self.generator.max_step():.6g}"
            )
        if self.alpha0 is not None and not (1 <= self.alpha0 <= self.generator.n_states):
            raise ConfigError(f"alpha0 must lie in 1..{self.generator.n_states}")

    @property
    def n_obs(self) -> int:
        return int(round(self.horizon_t / self.obs_step_h))

    @property
    def fine_step(self) -> float:
        return self.obs_step_h / self.fine_factor

    @property
    def initial_state(self) -> int:
        if self.alpha0 is not None:
            return self.alpha0
        return 1 + int(np.argmax(self.theta_true.b))


def simulate_path(
    cfg: SimulationConfig,
    rng: np.random.Generator | None = None,
    *,
    increments: np.ndarray | None = None,
) -> tuple[ObservationSeries, ChainPath, ChainPath]:
    """Simulate one path; returns (observations, chain at obs grid, fine chain).

    The RNG is consumed in a fixed order (chain first, then noise) so runs
    are reproducible given ``cfg.seed`` or an explicit ``rng``.
    ``increments`` overrides the noise draw with a caller-supplied array of
    fine-grid increments (used by coupling tests); its length must be the
    number of fine steps.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_fine = cfg.n_obs * cfg.fine_factor
    step = cfg.fine_step
    chain = simulate_chain(cfg.generator, step, n_fine, cfg.initial_state, rng)
    if increments is None:
        increments = sample_nig(
            NigParams(cfg.a_nuisance, cfg.theta_true.delta, step), max(n_fine, 1), rng
        )[:n_fine]
    else:
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (n_fine,):
            raise ConfigError(
                f"increments must have shape ({n_fine},), got {increments.shape}"
            )
    x_fine = euler_path(
        cfg.x0, cfg.theta_true, chain.states, increments, step
    )
    x_obs = x_fine[:: cfg.fine_factor]
    obs_chain = ChainPath(chain.states[:: cfg.fine_factor], cfg.obs_step_h)
    return ObservationSeries(x_obs, cfg.obs_step_h), obs_chain, chain


def euler_path(
    x0: float,
    theta: Theta,
    states: np.ndarray,
    increments: np.ndarray,
    step: float,
) -> np.ndarray:
    """Euler recursion X_{k+1} = X_k + lam*(b(alpha_k) - X_k)*step + dZ_k.

    ``states`` holds 1-based regime labels on the grid (length n+1),
    ``increments`` the n noise increments.  Returns the full grid path.
    """
    n = increments.shape[0]
    if states.shape[0] != n + 1:
        raise ConfigError(
            f"states length {states.shape[0]} does not match {n} increments"
        )
    lam = theta.lam
    b_of = theta.b[np.asarray(states[:-1], dtype=np.int64) - 1]
    x = np.empty(n + 1)
    x[0] = x0
    xk = float(x0)
    for k in range(n):
        xk = xk + lam * (b_of[k] - xk) * step + increments[k]
        x[k + 1] = xk
    return x


def _euler_paths_batch(
    x0: float,
    theta: Theta,
    states: np.ndarray,
    increments: np.ndarray,
    step: float,
) -> np.ndarray:
    """Vectorized Euler over a batch: states (R, n+1), increments (R, n)."""
    reps, n = increments.shape
    b_of = theta.b[states[:, :-1] - 1]
    x = np.full(reps, float(x0))
    out = np.empty((reps, n + 1))
    out[:, 0] = x
    lam = theta.lam
    for k in range(n):
        x = x + lam * (b_of[:, k] - x) * step + increments[:, k]
        out[:, k + 1] = x
    return out


@dataclass(frozen=True)
class ConvergenceReport:
    """Coupled mean-square gaps between successive Euler refinements.

    ``gaps[l]`` is the Monte Carlo estimate of
    E[ sup_k ( X^{(l)}_k - X^{(l+1)}_k )^2 ] over the coarse grid, where
    level l uses step h / fine_factor^l.  ``ratios`` are consecutive
    quotients gaps[l] / gaps[l+1].
    """

    gaps: np.ndarray
    ratios: np.ndarray
    steps: np.ndarray
    n_reps: int


def self_convergence_test(
    cfg: SimulationConfig,
    levels: int = 3,
    n_reps: int = 200,
    *,
    zero_noise: bool = False,
    rng: np.random.Generator | None = None,
) -> ConvergenceReport:
    """Estimate coupled strong self-convergence rates of the Euler scheme.

    Builds ``levels + 1`` refinement levels with steps h / f^l (f =
    ``cfg.fine_factor``).  Per replication, one chain path and one pool of
    NIG increments are drawn on the finest grid; coarser levels reuse the
    same chain (subsampled) and the same noise (aggregated by summation),
    so level differences isolate the drift discretization error.  With
    ``zero_noise`` the increments are zeroed, giving the deterministic
    drift-only benchmark.
    """
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    if n_reps < 1:
        raise ConfigError(f"n_reps must be >= 1, got {n_reps}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    f = cfg.fine_factor
    if f < 2:
        raise ConfigError("fine_factor must be >= 2 for refinement levels")
    n0 = cfg.n_obs
    n_finest = n0 * f**levels
    finest_step = cfg.obs_step_h / f**levels
    if finest_step >= cfg.generator.max_step():
        raise ConfigError("finest refinement step exceeds the chain step bound")

    theta = cfg.theta_true
    p_noise = NigParams(cfg.a_nuisance, theta.delta, finest_step)
    states = np.empty((n_reps, n_finest + 1), dtype=np.int64)
    incr = np.empty((n_reps, n_finest))
    for r in range(n_reps):
        states[r] = simulate_chain(
            cfg.generator, finest_step, n_finest, cfg.initial_state, rng
        ).states
        if zero_noise:
            incr[r] = 0.0
        else:
            incr[r] = sample_nig(p_noise, n_finest, rng)

    paths = []
    steps = []
    for lvl in range(levels + 1):
        sub = f ** (levels - lvl)
        step_l = finest_step * sub
        st_l = states[:, ::sub]
        inc_l = incr.reshape(n_reps, n_finest // sub, sub).sum(axis=2)
        full = _euler_paths_batch(cfg.x0, theta, st_l, inc_l, step_l)
        paths.append(full[:, :: f**lvl])  # thin to the coarse observation grid
        steps.append(step_l)

    gaps = np.empty(levels)
    for lvl in range(levels):
        diff = paths[lvl] - paths[lvl + 1]
        gaps[lvl] = float(np.mean(np.max(diff * diff, axis=1)))
    ratios = gaps[:-1] / gaps[1:] if levels > 1 else np.empty(0)
    return ConvergenceReport(gaps, ratios, np.asarray(steps[:-1]), n_reps)
