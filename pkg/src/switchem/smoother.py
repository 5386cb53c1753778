"""Forward filtering and backward smoothing of the hidden regime.

Forward pass (for j = 1..n, with D[j, i] the Cauchy emission density of X_j
given X_{j-1} in regime i, and A the one-step chain kernel):

    predicted_pair[j, i, k]  = A[i, k] * filtered[j-1, i]
    predicted_marginal[j, k] = sum_i predicted_pair[j, i, k]
    filtered[j, k] propto D[j, i-summed] ... specifically
    filtered[j, k] = sum_i D[j, i] * predicted_pair[j, i, k] / normalizer.

Note the emission density attaches to the *earlier* state i (the regime in
force over (t_{j-1}, t_j)), so the update mixes over i inside the sum
rather than multiplying the predicted marginal.

Backward pass (Kim-style one-lag approximation, exact when emissions would
depend only on the later state):

    w[j, i, k] = smoothed[j, k] * predicted_pair[j, i, k] / predicted_marginal[j, k]
    smoothed[j-1, i] = sum_k w[j, i, k],

with each pair slice renormalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctmc import GeneratorMatrix, transition_matrix_approx
from .errors import ConfigError, NumericalFailure
from .likelihood import (
    ObservationSeries,
    SmoothedPairProbs,
    Theta,
    cauchy_density_matrix,
)


@dataclass(frozen=True)
class FilterState:
    """Forward-pass output.

    filtered[j, k]           = P(a_{t_j} = k | X_{0..j});
    predicted_pair[j, i, k]  = P(a_{t_{j-1}} = i, a_{t_j} = k | X_{0..j-1});
    predicted_marginal[j, k] = P(a_{t_j} = k | X_{0..j-1}).
    Pair and marginal slices at index 0 are zero (no pair before t_0).
    """

    filtered: np.ndarray
    predicted_pair: np.ndarray
    predicted_marginal: np.ndarray

    @property
    def n(self) -> int:
        return self.filtered.shape[0] - 1

    @property
    def n_states(self) -> int:
        return self.filtered.shape[1]


def _initial_probs(n_states: int, initial) -> np.ndarray:
    if initial is None:
        return np.full(n_states, 1.0 / n_states)
    p = np.asarray(initial, dtype=float)
    if p.shape != (n_states,) or np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"initial filter probabilities invalid: {p!r}")
    return p / p.sum()


def forward_filter(
    theta: Theta,
    g: GeneratorMatrix,
    obs: ObservationSeries,
    initial_probs=None,
) -> FilterState:
    """Run the forward recursion; raises :class:`NumericalFailure` with the
    failing observation index if a normalizer is non-positive or non-finite.
    """
    if theta.n_states != g.n_states:
        raise ConfigError(
            f"theta has {theta.n_states} regimes, generator {g.n_states} states"
        )
    n, m = obs.n, g.n_states
    a = transition_matrix_approx(g, obs.h)
    d = cauchy_density_matrix(theta, obs)

    filtered = np.zeros((n + 1, m))
    pair = np.zeros((n + 1, m, m))
    marginal = np.zeros((n + 1, m))
    filtered[0] = _initial_probs(m, initial_probs)
    for j in range(1, n + 1):
        pj = a * filtered[j - 1][:, None]
        pair[j] = pj
        marginal[j] = pj.sum(axis=0)
        post = d[j][:, None] * pj
        col = post.sum(axis=0)
        z = col.sum()
        if not np.isfinite(z) or z <= 0.0:
            # densities can underflow jointly for far-outlying observations;
            # retry the step with the densities rescaled by their maximum
            dm = d[j].max()
            if dm > 0.0 and np.isfinite(dm):
                col = (d[j] / dm)[:, None] * pj
                col = col.sum(axis=0)
                z = col.sum()
            if not np.isfinite(z) or z <= 0.0:
                raise NumericalFailure(
                    f"forward filter normalizer {z!r} at observation {j}", index=j
                )
        filtered[j] = col / z
    return FilterState(filtered, pair, marginal)


def backward_smooth(
    fs: FilterState,
    theta: Theta | None = None,
    g: GeneratorMatrix | None = None,
    obs: ObservationSeries | None = None,
) -> SmoothedPairProbs:
    """Backward pass producing the pairwise weights w[j, i, k].

    The pass only needs the forward-pass arrays; ``theta``, ``g`` and
    ``obs`` are accepted for dimension cross-checks when provided.
    Smoothed marginals are recoverable via :func:`smoothed_marginals`.
    """
    if g is not None and fs.n_states != g.n_states:
        raise ConfigError(
            f"filter has {fs.n_states} states, generator {g.n_states}"
        )
    if obs is not None and fs.n != obs.n:
        raise ConfigError(f"filter length {fs.n} != observation length {obs.n}")
    if theta is not None and theta.n_states != fs.n_states:
        raise ConfigError(
            f"theta has {theta.n_states} regimes, filter {fs.n_states} states"
        )
    n, m = fs.n, fs.n_states
    smoothed = np.zeros((n + 1, m))
    w = np.zeros((n + 1, m, m))
    smoothed[n] = fs.filtered[n]
    for j in range(n, 0, -1):
        pm = fs.predicted_marginal[j]
        ratio = np.where(pm > 0.0, smoothed[j] / np.where(pm > 0.0, pm, 1.0), 0.0)
        wj = fs.predicted_pair[j] * ratio[None, :]
        z = wj.sum()
        if not np.isfinite(z) or z <= 0.0:
            raise NumericalFailure(
                f"backward smoother slice sum {z!r} at observation {j}", index=j
            )
        wj /= z
        w[j] = wj
        smoothed[j - 1] = wj.sum(axis=1)
    return SmoothedPairProbs(w)


def smoothed_marginals(fs: FilterState, w: SmoothedPairProbs) -> np.ndarray:
    """Smoothed one-point probabilities P(a_{t_j} = k | X_{0..n}).

    The terminal slice equals the filtered distribution; earlier slices
    marginalize the pairwise weights over the later state.
    """
    n, m = fs.n, fs.n_states
    smoothed = np.zeros((n + 1, m))
    smoothed[n] = fs.filtered[n]
    for j in range(n, 0, -1):
        smoothed[j - 1] = w.w[j].sum(axis=1)
    return smoothed


def smooth_regimes(
    theta: Theta,
    g: GeneratorMatrix,
    obs: ObservationSeries,
    initial_probs=None,
) -> tuple[FilterState, np.ndarray, SmoothedPairProbs]:
    """Convenience wrapper: forward pass then backward pass."""
    fs = forward_filter(theta, g, obs, initial_probs)
    w = backward_smooth(fs, theta, g, obs)
    return fs, smoothed_marginals(fs, w), w
