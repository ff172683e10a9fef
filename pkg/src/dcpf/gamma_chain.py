"""Conjugate gamma-Markov chains with auxiliary variables.

Each latent component follows

    b      ~ Ga(init_shape, init_shape / init_mean)
    z_1    ~ Ga(shape_aux, b)
    u_t    ~ Ga(shape_state, rate_state * z_t)
    z_t+1  ~ Ga(shape_aux, rate_aux * u_t)

with every gamma written as (shape, rate).  The auxiliary ``z`` makes each
full conditional a gamma density; for instance
``z_t | u_t-1, u_t ~ Ga(shape_aux + shape_state, rate_aux * u_t-1 + rate_state * u_t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ChainHyper",
    "ChainState",
    "sample_chain",
    "sample_chains",
    "drift_ratio",
    "drift_label",
    "expected_trajectory",
    "forecast_state",
    "trajectory_spread",
    "stable_fraction",
]


@dataclass(frozen=True)
class ChainHyper:
    """Chain hyperparameters for one side (users or items).

    ``init_mean`` may be ``None`` before training, meaning it is set from the
    data as sqrt(E[eta] / K) when the model is initialised.
    """

    shape_state: float = 1.01  # iota
    shape_aux: float = 1.01  # epsilon
    rate_state: float = 1.0  # omega
    rate_aux: float = 1.0  # Omega
    init_shape: float = 1.0  # delta (sigma for items)
    init_mean: float | None = 1.0  # Delta (Sigma for items)

    def __post_init__(self):
        for name in ("shape_state", "shape_aux", "rate_state", "rate_aux", "init_shape"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if self.init_mean is not None and not (self.init_mean > 0 and math.isfinite(self.init_mean)):
            raise ValueError(f"init_mean must be positive and finite, got {self.init_mean}")

    @property
    def init_rate(self) -> float:
        """Rate of the prior on b, so that E[b] = init_mean."""
        if self.init_mean is None:
            raise ValueError("init_mean is unresolved; initialise from data first")
        return self.init_shape / self.init_mean

    def with_init_mean(self, value: float) -> "ChainHyper":
        return replace(self, init_mean=float(value))

    def to_dict(self) -> dict:
        return {
            "shape_state": self.shape_state,
            "shape_aux": self.shape_aux,
            "rate_state": self.rate_state,
            "rate_aux": self.rate_aux,
            "init_shape": self.init_shape,
            "init_mean": self.init_mean,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainHyper":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown chain hyperparameters: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ChainState:
    """Sampled chain values.

    ``aux`` and ``state`` carry time on the last axis; any leading axes (for
    example entities x components) are shared, except that ``init_rate`` is
    per entity and so lacks the component axis when one is present.
    """

    init_rate: np.ndarray
    aux: np.ndarray
    state: np.ndarray

    def __post_init__(self):
        if self.aux.shape != self.state.shape:
            raise ValueError("aux and state trajectories must have equal shapes")

    @property
    def T(self) -> int:
        return self.state.shape[-1]


def sample_chains(
    hyper: ChainHyper, T: int, n_entities: int, K: int, rng: np.random.Generator
) -> ChainState:
    """Sample ``n_entities`` x ``K`` chains of length ``T``.

    The initial-state rate b is drawn once per entity and shared by its
    components.
    """
    if T < 1:
        raise ValueError(f"chain length must be >= 1, got {T}")
    b = rng.gamma(hyper.init_shape, 1.0 / hyper.init_rate, size=n_entities)
    z = np.empty((n_entities, K, T))
    u = np.empty((n_entities, K, T))
    z[:, :, 0] = rng.gamma(hyper.shape_aux, 1.0 / np.broadcast_to(b[:, None], (n_entities, K)))
    for t in range(T):
        if t > 0:
            z[:, :, t] = rng.gamma(hyper.shape_aux, 1.0 / (hyper.rate_aux * u[:, :, t - 1]))
        u[:, :, t] = rng.gamma(hyper.shape_state, 1.0 / (hyper.rate_state * z[:, :, t]))
    # Extreme shapes can underflow a draw to exactly zero.
    tiny = np.finfo(float).tiny
    return ChainState(init_rate=np.maximum(b, tiny), aux=np.maximum(z, tiny), state=np.maximum(u, tiny))


def sample_chain(hyper: ChainHyper, T: int, rng: np.random.Generator) -> ChainState:
    """Sample a single chain: scalar ``init_rate``, length-``T`` trajectories."""
    batch = sample_chains(hyper, T, 1, 1, rng)
    return ChainState(init_rate=batch.init_rate[0], aux=batch.aux[0, 0], state=batch.state[0, 0])


def drift_ratio(hyper: ChainHyper) -> float:
    """Per-step growth factor of the chain mean.

    Chaining the moment relations E[z_t] = shape_aux / (rate_aux E[u_t-1]) and
    E[u_t] = shape_state / (rate_state E[z_t]) gives

        E[u_t] = (shape_state * rate_aux) / (rate_state * shape_aux) * E[u_t-1].

    With the default equal rates this is shape_state / shape_aux.
    """
    return (hyper.shape_state * hyper.rate_aux) / (hyper.rate_state * hyper.shape_aux)


def drift_label(ratio: float) -> str:
    if math.isclose(ratio, 1.0, rel_tol=1e-12, abs_tol=0.0):
        return "balanced"
    return "upward" if ratio > 1 else "downward"


def _exact_factor(hyper: ChainHyper) -> float:
    # E[1/z] = rate / (shape - 1) for z ~ Ga(shape, rate), finite only for shape > 1.
    if hyper.shape_aux <= 1:
        raise ValueError("exact inverse moments need shape_aux > 1")
    return (hyper.shape_state * hyper.rate_aux) / (hyper.rate_state * (hyper.shape_aux - 1.0))


def expected_trajectory(
    hyper: ChainHyper, u1: float, T: int, exact_inverse_moment: bool = False
) -> np.ndarray:
    """Mean trajectory E[u_1..T] started from E[u_1] = ``u1``.

    By default E[1/z] is approximated by 1/E[z], reproducing the moment
    recursion above.  With ``exact_inverse_moment`` the conditional mean
    E[u_t | u_t-1] = shape_state rate_aux u_t-1 / (rate_state (shape_aux - 1))
    is used instead, which is exact for the generative chain.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not u1 > 0:
        raise ValueError(f"u1 must be positive, got {u1}")
    out = np.empty(T)
    out[0] = u1
    if exact_inverse_moment:
        factor = _exact_factor(hyper)
        for t in range(1, T):
            out[t] = factor * out[t - 1]
        return out
    for t in range(1, T):
        ez = hyper.shape_aux / (hyper.rate_aux * out[t - 1])
        out[t] = hyper.shape_state / (hyper.rate_state * ez)
    return out


def forecast_state(last_state, hyper: ChainHyper, steps: int):
    """Extrapolate a state mean ``steps`` windows past the training horizon."""
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    return np.asarray(last_state, dtype=float) * drift_ratio(hyper) ** steps


def trajectory_spread(means: np.ndarray) -> np.ndarray:
    """max_t / min_t of positive trajectories (time on the last axis)."""
    means = np.asarray(means, dtype=float)
    return means.max(axis=-1) / means.min(axis=-1)


def stable_fraction(means: np.ndarray, limit: float = 1e3) -> float:
    """Fraction of trajectories whose spread stays below ``limit``."""
    spread = trajectory_spread(means)
    return float(np.mean(spread < limit))
