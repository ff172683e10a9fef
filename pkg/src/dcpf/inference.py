"""Stochastic variational inference for dynamic compound Poisson factorization.

The variational family is fully factorised with gamma factors for the user
states u, user auxiliaries z and per-user initial rates b (and the item
mirror v, w, b^w), a multinomial over component allocations (phi) and a
discrete q(eta) per observed cell.

Every epoch runs two half sweeps.  The user half computes local parameters
(rate, q(eta), phi) on the training cells, then blends each user's gamma
parameters toward their coordinate-ascent targets with step size rho; the
item half does the same with roles swapped.  Poisson rate terms use exact
sums over the opposing side, so zero cells need no explicit visits in the
``nonmissing`` regime.  When a user has more than ``batch_size`` observed
items a uniform subset is used and its count statistics are rescaled.

Time index ``t`` is zero-based; training windows are ``0 .. T-1`` and later
windows are forecast from the last training window.
"""
from __future__ import annotations

import io
import json
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

from . import edm
from .dataset import DataSplit, InteractionTensor, TimeGrid, format_ids, ids_path, parse_ids
from .edm import ElementDistribution, Family
from .gamma_chain import ChainHyper, drift_ratio

logger = logging.getLogger(__name__)

MODEL_MAGIC = "DCPF-MODEL v1"
RATE_FLOOR = 1e-10
TRAIN_MODES = ("nonmissing", "full")


class FitError(RuntimeError):
    pass


class InitializationError(FitError):
    pass


class FitDivergenceError(FitError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _default_hyper() -> ChainHyper:
    return ChainHyper(init_mean=None)


@dataclass
class FitConfig:
    """Model and optimiser settings.

    ``hyper_*.init_mean = None`` applies the data rule sqrt(E[eta] / K).
    ``batch_size = None`` uses every observed item of a user (and every
    observed user of an item) in each half sweep.  ``step_size`` overrides
    the Robbins-Monro schedule with a constant rho.
    """

    K: int = 70
    element: str = "ga"
    hyper_user: ChainHyper = field(default_factory=_default_hyper)
    hyper_item: ChainHyper = field(default_factory=_default_hyper)
    learning_delay: float = 10000.0
    learning_power: float = 0.7
    convergence_tol: float = 1e-5
    max_epochs: int = 500
    train_on: str = "nonmissing"
    validation_mode: str = "full"
    batch_size: int | None = 64
    init_sample_size: int = 1000
    init_jitter: float = 0.1
    eta_max: int = 50
    step_size: float | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.element = Family.parse(self.element).value
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not 0.5 < self.learning_power <= 1:
            raise ValueError(f"learning_power must be in (0.5, 1], got {self.learning_power}")
        if self.learning_delay < 0:
            raise ValueError(f"learning_delay must be >= 0, got {self.learning_delay}")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        for name in ("train_on", "validation_mode"):
            if getattr(self, name) not in TRAIN_MODES:
                raise ValueError(f"{name} must be one of {TRAIN_MODES}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 or None")
        if self.step_size is not None and not 0 < self.step_size <= 1:
            raise ValueError("step_size must be in (0, 1]")
        if not 0 <= self.init_jitter < 1:
            raise ValueError("init_jitter must be in [0, 1)")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.to_dict() if isinstance(value, ChainHyper) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown fit settings: {sorted(unknown)}")
        data = dict(data)
        for key in ("hyper_user", "hyper_item"):
            if isinstance(data.get(key), dict):
                data[key] = ChainHyper.from_dict(data[key])
        return cls(**data)


def learning_rate(step: int, delay: float, power: float) -> float:
    """Robbins-Monro step size (step + delay) ** -power."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    return float((step + delay) ** -power)


# ---------------------------------------------------------------------------
# variational parameters

ARRAY_NAMES = (
    "user_u_shape", "user_u_rate", "user_z_shape", "user_z_rate",
    "item_v_shape", "item_v_rate", "item_w_shape", "item_w_rate",
    "user_b_shape", "user_b_rate", "item_b_shape", "item_b_rate",
)


@dataclass
class _Side:
    state_shape: np.ndarray
    state_rate: np.ndarray
    aux_shape: np.ndarray
    aux_rate: np.ndarray
    init_shape: np.ndarray
    init_rate: np.ndarray


@dataclass
class VariationalParams:
    """Gamma (shape, rate) arrays; chain arrays are entity x K x T."""

    user_u_shape: np.ndarray
    user_u_rate: np.ndarray
    user_z_shape: np.ndarray
    user_z_rate: np.ndarray
    item_v_shape: np.ndarray
    item_v_rate: np.ndarray
    item_w_shape: np.ndarray
    item_w_rate: np.ndarray
    user_b_shape: np.ndarray
    user_b_rate: np.ndarray
    item_b_shape: np.ndarray
    item_b_rate: np.ndarray

    @property
    def M(self) -> int:
        return self.user_u_shape.shape[0]

    @property
    def N(self) -> int:
        return self.item_v_shape.shape[0]

    @property
    def K(self) -> int:
        return self.user_u_shape.shape[1]

    @property
    def T(self) -> int:
        return self.user_u_shape.shape[2]

    def copy(self) -> "VariationalParams":
        return VariationalParams(**{name: getattr(self, name).copy() for name in ARRAY_NAMES})

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ARRAY_NAMES}

    def user_side(self) -> _Side:
        return _Side(self.user_u_shape, self.user_u_rate, self.user_z_shape, self.user_z_rate,
                     self.user_b_shape, self.user_b_rate)

    def item_side(self) -> _Side:
        return _Side(self.item_v_shape, self.item_v_rate, self.item_w_shape, self.item_w_rate,
                     self.item_b_shape, self.item_b_rate)

    def user_mean(self) -> np.ndarray:
        return self.user_u_shape / self.user_u_rate

    def item_mean(self) -> np.ndarray:
        return self.item_v_shape / self.item_v_rate

    def all_positive(self) -> bool:
        return all(np.all(a > 0) and np.all(np.isfinite(a)) for a in self.arrays().values())


class Initialization(NamedTuple):
    params: VariationalParams
    element: ElementDistribution
    hyper_user: ChainHyper
    hyper_item: ChainHyper
    eta_mean: float


def init_params(split: DataSplit, config: FitConfig, rng: np.random.Generator | None = None) -> Initialization:
    """Initial element law and variational parameters.

    The element (theta, kappa) is the single-event MLE on up to
    ``init_sample_size`` nonzero cells of the first training window.  With
    E[eta] the mean posterior count of that sample under a unit rate, each
    chain starts at E[u] = E[v] = sqrt(E[eta] / K) up to multiplicative
    jitter, and unresolved initial means are set to the same value.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    train = split.train
    first = train.y[train.window_slice(0)]
    if first.size == 0:
        raise InitializationError("the first training window has no nonzero cells")
    sample = first
    if first.size > config.init_sample_size:
        sample = first[np.sort(rng.choice(first.size, config.init_sample_size, replace=False))]
    theta, kappa = edm.mle_init(sample, config.element)
    element = ElementDistribution(config.element, theta, kappa)
    eta_mean = float(np.mean(edm.eta_posterior_batch(sample, 1.0, element, config.eta_max).mean))
    scale = math.sqrt(eta_mean / config.K)

    hyper_user = config.hyper_user
    if hyper_user.init_mean is None:
        hyper_user = hyper_user.with_init_mean(scale)
    hyper_item = config.hyper_item
    if hyper_item.init_mean is None:
        hyper_item = hyper_item.with_init_mean(scale)

    M, N, K, T = train.M, train.N, config.K, split.train_windows
    j = config.init_jitter

    def chain(n_entities, hyper):
        shape_aux = hyper.shape_state + hyper.shape_aux
        state_shape = np.full((n_entities, K, T), shape_aux)
        mean = scale * rng.uniform(1.0 - j, 1.0 + j, size=(n_entities, K, T))
        state_rate = state_shape / mean
        aux_shape = np.full((n_entities, K, T), shape_aux)
        # E[z] = shape_state / (rate_state E[u])
        aux_rate = aux_shape * hyper.rate_state * mean / hyper.shape_state
        init_shape = np.full(n_entities, hyper.init_shape + K * hyper.shape_aux)
        init_rate = init_shape / hyper.init_mean
        return state_shape, state_rate, aux_shape, aux_rate, init_shape, init_rate

    u = chain(M, hyper_user)
    v = chain(N, hyper_item)
    params = VariationalParams(*u[:4], *v[:4], u[4], u[5], v[4], v[5])
    return Initialization(params, element, hyper_user, hyper_item, eta_mean)


# ---------------------------------------------------------------------------
# local step


@dataclass
class LocalState:
    rate: float
    eta: edm.EtaPosterior
    phi: np.ndarray


def _elog(shape, rate):
    return special.digamma(shape) - np.log(rate)


def _softmax(logits):
    logits = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=-1, keepdims=True)


def local_step(m: int, n: int, t: int, params: VariationalParams, elem: ElementDistribution,
               y: float, eta_max: int = edm.ETA_MAX_DEFAULT) -> LocalState:
    """Local parameters of one cell; ``y = 0`` for an implicit cell."""
    eu = params.user_u_shape[m, :, t] / params.user_u_rate[m, :, t]
    ev = params.item_v_shape[n, :, t] / params.item_v_rate[n, :, t]
    rate = float(eu @ ev)
    logits = (_elog(params.user_u_shape[m, :, t], params.user_u_rate[m, :, t])
              + _elog(params.item_v_shape[n, :, t], params.item_v_rate[n, :, t]))
    return LocalState(rate, edm.posterior_eta(y, rate, elem, eta_max), _softmax(logits))


def _eta_means(y, lam, elem, eta_max, threads=1):
    if threads <= 1 or y.size < 4096:
        return edm.eta_posterior_batch(y, lam, elem, eta_max).mean
    chunks = np.array_split(np.arange(y.size), threads)
    with ThreadPoolExecutor(threads) as pool:
        parts = pool.map(lambda c: edm.eta_posterior_batch(y[c], lam[c], elem, eta_max).mean, chunks)
    return np.concatenate(list(parts))


# ---------------------------------------------------------------------------
# global updates


def global_update(side: _Side, t: int, counts: np.ndarray, rates: np.ndarray, hyper: ChainHyper,
                  rho: float, entities=slice(None)) -> int:
    """Blend one window of one side's chain parameters toward their targets.

    ``counts`` holds the (already scaled) sums of E[eta] * phi over the cells
    of each entity at window ``t`` and ``rates`` the (scaled) sums of the
    opposing factor means; both are entity x K.  Targets, for users:

        shape_u[t] = iota + eps * [t < T-1] + counts
        rate_u[t]  = omega E[z_t] + Omega E[z_t+1] * [t < T-1] + rates
        rate_z[t]  = omega E[u_t] + (Omega E[u_t-1] if t > 0 else E[b])

    Returns the number of rates clamped at the floor.
    """
    T = side.state_shape.shape[2]
    interior = t < T - 1
    ez = side.aux_shape[entities, :, t] / side.aux_rate[entities, :, t]
    shape_target = hyper.shape_state + (hyper.shape_aux if interior else 0.0) + counts
    rate_target = hyper.rate_state * ez + rates
    if interior:
        rate_target = rate_target + hyper.rate_aux * (
            side.aux_shape[entities, :, t + 1] / side.aux_rate[entities, :, t + 1])
    a = (1.0 - rho) * side.state_shape[entities, :, t] + rho * shape_target
    b = (1.0 - rho) * side.state_rate[entities, :, t] + rho * rate_target
    clamped = int(np.count_nonzero(b < RATE_FLOOR))
    side.state_shape[entities, :, t] = a
    side.state_rate[entities, :, t] = np.maximum(b, RATE_FLOOR)

    eu = a / side.state_rate[entities, :, t]
    if t > 0:
        prev = hyper.rate_aux * side.state_shape[entities, :, t - 1] / side.state_rate[entities, :, t - 1]
    else:
        prev = (side.init_shape[entities] / side.init_rate[entities])[:, None]
    z_target = hyper.rate_state * eu + prev
    zb = (1.0 - rho) * side.aux_rate[entities, :, t] + rho * z_target
    clamped += int(np.count_nonzero(zb < RATE_FLOOR))
    side.aux_rate[entities, :, t] = np.maximum(zb, RATE_FLOOR)
    return clamped


def update_init_rate(side: _Side, hyper: ChainHyper, rho: float, entities=slice(None)) -> int:
    """rate_b <- blend(init_shape / init_mean + sum_k E[z_k,0])."""
    ez0 = side.aux_shape[entities, :, 0] / side.aux_rate[entities, :, 0]
    target = hyper.init_rate + ez0.sum(axis=1)
    b = (1.0 - rho) * side.init_rate[entities] + rho * target
    side.init_rate[entities] = np.maximum(b, RATE_FLOOR)
    return int(np.count_nonzero(b < RATE_FLOOR))


def update_side(side: _Side, counts: np.ndarray, rates: np.ndarray, hyper: ChainHyper, rho: float) -> int:
    """Sequential pass over windows followed by the initial-rate update."""
    T = side.state_shape.shape[2]
    clamped = 0
    for t in range(T):
        clamped += global_update(side, t, counts[:, :, t], rates[:, :, t], hyper, rho)
    return clamped + update_init_rate(side, hyper, rho)


def global_update_user(params: VariationalParams, m, t: int, counts, rates, hyper: ChainHyper,
                       rho: float, scale: float = 1.0) -> int:
    """User-side window update for the users ``m`` with batch scaling ``scale``."""
    m = np.atleast_1d(m)
    counts = np.asarray(counts, dtype=float).reshape(m.size, -1)
    rates = np.asarray(rates, dtype=float).reshape(m.size, -1)
    return global_update(params.user_side(), t, scale * counts, scale * rates, hyper, rho, m)


def global_update_item(params: VariationalParams, n, t: int, counts, rates, hyper: ChainHyper,
                       rho: float, scale: float = 1.0) -> int:
    n = np.atleast_1d(n)
    counts = np.asarray(counts, dtype=float).reshape(n.size, -1)
    rates = np.asarray(rates, dtype=float).reshape(n.size, -1)
    return global_update(params.item_side(), t, scale * counts, scale * rates, hyper, rho, n)


# ---------------------------------------------------------------------------
# sweeps


class _TrainData:
    """Training cells restricted to the model horizon, with subsampling indexes."""

    def __init__(self, tensor: InteractionTensor, T: int):
        keep = tensor.t < T
        self.m, self.n, self.t, self.y = tensor.m[keep], tensor.n[keep], tensor.t[keep], tensor.y[keep]
        self.M, self.N, self.T = tensor.M, tensor.N, T
        self._pairs = {
            "user": self._pair_index(self.m, self.n, self.N, self.M),
            "item": self._pair_index(self.n, self.m, self.M, self.N),
        }

    @staticmethod
    def _pair_index(owner, other, n_other, n_owner):
        pair = owner * n_other + other
        uniq, inv = np.unique(pair, return_inverse=True)
        pair_owner = uniq // n_other
        count = np.bincount(pair_owner, minlength=n_owner)
        return uniq, inv, pair_owner, count

    def weights(self, side: str, batch_size: int | None, rng: np.random.Generator) -> np.ndarray:
        """Per-cell weight: the owner's scale factor if selected, else 0."""
        if batch_size is None:
            return np.ones(self.y.size)
        uniq, inv, pair_owner, count = self._pairs[side]
        if count.size == 0 or count.max() <= batch_size:
            return np.ones(self.y.size)
        key = rng.random(uniq.size)
        order = np.lexsort((key, pair_owner))
        sorted_owner = pair_owner[order]
        rank = np.arange(order.size) - np.searchsorted(sorted_owner, sorted_owner, side="left")
        chosen = np.empty(uniq.size, dtype=bool)
        chosen[order] = rank < batch_size
        scale = count / np.maximum(np.minimum(count, batch_size), 1)
        owner = pair_owner[inv]
        return np.where(chosen[inv], scale[owner], 0.0)


class _Expectations:
    def __init__(self, params: VariationalParams):
        self.eu = params.user_mean()
        self.ev = params.item_mean()
        self.elogu = _elog(params.user_u_shape, params.user_u_rate)
        self.elogv = _elog(params.item_v_shape, params.item_v_rate)


def _count_stats(params, elem, data: _TrainData, weights, side: str, config: FitConfig):
    """Scaled sums of E[eta] phi per (owner, k, t) over the selected cells."""
    ex = _Expectations(params)
    sel = weights > 0
    m, n, t, y, w = data.m[sel], data.n[sel], data.t[sel], data.y[sel], weights[sel]
    K = params.K
    eu_c = ex.eu[m, :, t]
    ev_c = ex.ev[n, :, t]
    lam = np.einsum("ck,ck->c", eu_c, ev_c)
    eta = _eta_means(y, lam, elem, config.eta_max, config.threads)
    phi = _softmax(ex.elogu[m, :, t] + ex.elogv[n, :, t])
    contrib = (w * eta)[:, None] * phi
    if side == "user":
        owner, n_owner = m, data.M
    else:
        owner, n_owner = n, data.N
    idx = owner * data.T + t
    out = np.empty((n_owner, K, data.T))
    for k in range(K):
        out[:, k, :] = np.bincount(idx, weights=contrib[:, k], minlength=n_owner * data.T).reshape(n_owner, data.T)
    if config.train_on == "full":
        out += _zero_cell_stats(ex, elem, data, side, config)
    return out


def _zero_cell_stats(ex: _Expectations, elem, data: _TrainData, side: str, config: FitConfig):
    """E[eta | y = 0] phi summed over the unobserved cells of each window."""
    M, N, T = data.M, data.N, data.T
    K = ex.eu.shape[1]
    out = np.zeros((M if side == "user" else N, K, T))
    if elem.family in (Family.GAMMA, Family.ZERO_TRUNCATED_POISSON):
        return out
    for t in range(T):
        lam = ex.eu[:, :, t] @ ex.ev[:, :, t].T
        if elem.family is Family.POISSON:
            e0 = lam * math.exp(-elem.kappa * math.exp(elem.theta))
        else:
            e0 = _eta_means(np.zeros(lam.size), lam.reshape(-1), elem, config.eta_max,
                            config.threads).reshape(M, N)
        obs = data.t == t
        e0[data.m[obs], data.n[obs]] = 0.0
        g = np.exp(ex.elogu[:, :, t])
        h = np.exp(ex.elogv[:, :, t])
        ratio = e0 / (g @ h.T)
        if side == "user":
            out[:, :, t] = g * (ratio @ h)
        else:
            out[:, :, t] = h * (ratio.T @ g)
    return out


def sweep(params: VariationalParams, data: _TrainData, elem: ElementDistribution, config: FitConfig,
          hyper_user: ChainHyper, hyper_item: ChainHyper, rho_user: float, rho_item: float,
          rng: np.random.Generator) -> int:
    """One epoch: user half sweep, then item half sweep.  Returns clamp count."""
    batch = None if config.train_on == "full" else config.batch_size
    clamped = 0

    weights = data.weights("user", batch, rng)
    counts = _count_stats(params, elem, data, weights, "user", config)
    rates = params.item_mean().sum(axis=0)[None, :, :]
    clamped += update_side(params.user_side(), counts, rates, hyper_user, rho_user)

    weights = data.weights("item", batch, rng)
    counts = _count_stats(params, elem, data, weights, "item", config)
    rates = params.user_mean().sum(axis=0)[None, :, :]
    clamped += update_side(params.item_side(), counts, rates, hyper_item, rho_item)
    return clamped


# ---------------------------------------------------------------------------
# fitted model, scoring and likelihood


@dataclass
class EpochRecord:
    epoch: int
    value: float
    rho: float
    best: float


@dataclass
class FittedModel:
    params: VariationalParams
    config: FitConfig
    element: ElementDistribution
    hyper_user: ChainHyper
    hyper_item: ChainHyper
    users: list[str]
    items: list[str]
    grid: TimeGrid
    train_windows: int
    static: bool = False
    history: list[EpochRecord] = field(default_factory=list)
    converged: bool = False
    rate_floor_hits: int = 0
    eta_mean_init: float = float("nan")

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def K(self) -> int:
        return self.params.K

    def _window(self, t: int) -> tuple[int, int]:
        """(training window to read, forecast steps past it)."""
        if t < 0:
            raise ValueError(f"window must be >= 0, got {t}")
        if self.static:
            return 0, 0
        T = self.train_windows
        if t < T:
            return t, 0
        return T - 1, t - T + 1

    def user_means(self, t: int) -> np.ndarray:
        """E[u] at window ``t`` (M x K), forecast past the horizon."""
        src, steps = self._window(t)
        out = self.params.user_u_shape[:, :, src] / self.params.user_u_rate[:, :, src]
        return out * drift_ratio(self.hyper_user) ** steps if steps else out

    def item_means(self, t: int) -> np.ndarray:
        src, steps = self._window(t)
        out = self.params.item_v_shape[:, :, src] / self.params.item_v_rate[:, :, src]
        return out * drift_ratio(self.hyper_item) ** steps if steps else out

    def rate_matrix(self, t: int) -> np.ndarray:
        return self.user_means(t) @ self.item_means(t).T

    def cell_rates(self, m, n, t) -> np.ndarray:
        m, n, t = (np.asarray(a, dtype=np.int64) for a in (m, n, t))
        out = np.empty(m.size)
        for tt in np.unique(t):
            sel = t == tt
            out[sel] = np.einsum("ck,ck->c", self.user_means(int(tt))[m[sel]], self.item_means(int(tt))[n[sel]])
        return out

    @property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.users)}

    @property
    def item_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.items)}


class Score(NamedTuple):
    expected_rating: float
    prob_nonzero: float
    rate: float
    cold_start: bool


def _resolve(entity, index: dict[str, int], size: int) -> int | None:
    if isinstance(entity, str):
        return index.get(entity)
    i = int(entity)
    return i if 0 <= i < size else None


def score(model: FittedModel, user, item, t: int) -> Score:
    """Expected rating, P(y != 0) and rate for one cell.

    ``user``/``item`` are dense indices or original ids.  Unknown entities
    take the population mean factor and set ``cold_start``.
    """
    mi = _resolve(user, model.user_index if isinstance(user, str) else {}, model.M)
    ni = _resolve(item, model.item_index if isinstance(item, str) else {}, model.N)
    eu = model.user_means(t)
    ev = model.item_means(t)
    u = eu[mi] if mi is not None else eu.mean(axis=0)
    v = ev[ni] if ni is not None else ev.mean(axis=0)
    rate = float(u @ v)
    return Score(
        float(edm.response_mean(model.element, rate)),
        float(edm.prob_nonzero(model.element, rate)),
        rate,
        mi is None or ni is None,
    )


@dataclass
class LoglikResult:
    """Average compound log-likelihood.

    ``mean`` averages over every evaluated cell (implicit zeros included in
    ``full`` mode); ``mean_nonzero`` averages over the stored cells only.
    """

    mean: float
    total: float
    n_cells: int
    mean_nonzero: float
    n_nonzero: int
    n_excluded: int
    mode: str


def predictive_loglik(model: FittedModel, cells: InteractionTensor, mode: str = "nonmissing",
                      exclude: InteractionTensor | None = None, windows=None) -> LoglikResult:
    """Per-cell log sum_eta Poisson(eta; rate) p(y | eta) over evaluation cells.

    In ``full`` mode every (m, n, t) of ``windows`` (default: the windows
    holding ``cells``) is scored, zeros contributing log P(y = 0); positions
    in ``exclude`` are skipped.  Cells whose eta sum is truncated at the cap
    are left out and counted in ``n_excluded``.
    """
    if mode not in TRAIN_MODES:
        raise ValueError(f"mode must be one of {TRAIN_MODES}")
    lam = model.cell_rates(cells.m, cells.n, cells.t)
    logp, truncated = edm.compound_logpdf(cells.y, lam, model.element, model.config.eta_max)
    if np.any(truncated):
        logger.warning("%d cells excluded: eta sum truncated at the cap", int(truncated.sum()))
    good = ~truncated
    nz_total = math.fsum(logp[good])
    n_nz = int(good.sum())
    mean_nz = nz_total / n_nz if n_nz else float("nan")
    if mode == "nonmissing":
        return LoglikResult(mean_nz, nz_total, n_nz, mean_nz, n_nz, int(truncated.sum()), mode)

    if windows is None:
        windows = np.unique(cells.t)
    parts = [nz_total]
    n_cells = n_nz
    for t in windows:
        t = int(t)
        lp0 = edm.log_prob_zero(model.rate_matrix(t), model.element)
        skip = np.zeros((model.M, model.N), dtype=bool)
        sel = cells.t == t
        skip[cells.m[sel], cells.n[sel]] = True
        if exclude is not None:
            sel = exclude.t == t
            skip[exclude.m[sel], exclude.n[sel]] = True
        parts.append(math.fsum(lp0[~skip]))
        n_cells += int((~skip).sum())
    total = math.fsum(parts)
    return LoglikResult(total / n_cells, total, n_cells, mean_nz, n_nz, int(truncated.sum()), mode)


def _divergence_report(model: FittedModel, cells: InteractionTensor) -> str:
    lam = model.cell_rates(cells.m, cells.n, cells.t)
    logp, _ = edm.compound_logpdf(cells.y, lam, model.element, model.config.eta_max)
    bad = np.flatnonzero(~np.isfinite(logp))
    if bad.size == 0:
        return "non-finite likelihood from implicit zero cells"
    i = bad[0]
    return (f"cell m={cells.m[i]} n={cells.n[i]} t={cells.t[i]} y={cells.y[i]} "
            f"rate={lam[i]!r} logp={logp[i]!r} element={model.element}")


# ---------------------------------------------------------------------------
# training


def fit(split: DataSplit, config: FitConfig,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> FittedModel:
    """Fit by SVI until the validation likelihood settles.

    Training stops once the relative change of the validation predictive
    likelihood between consecutive epochs drops below ``convergence_tol`` or
    after ``max_epochs``.  The returned model holds the parameters of the
    best validation epoch (epoch 0 is the initialisation).
    """
    if split.train.nnz == 0:
        raise FitError("empty training set")
    rng = np.random.default_rng(config.seed)
    init = init_params(split, config, rng)
    params = init.params
    model = FittedModel(
        params=params, config=config, element=init.element,
        hyper_user=init.hyper_user, hyper_item=init.hyper_item,
        users=list(split.train.users), items=list(split.train.items), grid=split.grid,
        train_windows=split.train_windows, static=split.static, eta_mean_init=init.eta_mean,
    )
    if config.max_epochs == 0:
        return model

    validation = split.validation
    if validation.nnz == 0:
        logger.warning("empty validation set; monitoring the training likelihood")
        validation = split.train
    data = _TrainData(split.train, split.train_windows)

    # In full mode the unobserved positions of the validation windows score as
    # zeros, which is what penalises over-predicted rates.  Test positions are
    # neither validation nonzeros nor known zeros, so they are skipped.
    if validation is split.train:
        exclude, windows = None, None
    else:
        exclude, windows = split.test, np.unique(validation.t)

    def evaluate() -> float:
        value = predictive_loglik(model, validation, config.validation_mode, exclude, windows).mean
        if not math.isfinite(value):
            raise FitDivergenceError("validation likelihood is not finite: " + _divergence_report(model, validation))
        return value

    best = evaluate()
    best_params = params.copy()
    previous = best
    model.history.append(EpochRecord(0, best, 0.0, best))
    for epoch in range(1, config.max_epochs + 1):
        if config.step_size is not None:
            rho = config.step_size
        else:
            rho = learning_rate(epoch, config.learning_delay, config.learning_power)
        model.rate_floor_hits += sweep(params, data, init.element, config,
                                       init.hyper_user, init.hyper_item, rho, rho, rng)
        value = evaluate()
        if value > best:
            best = value
            best_params = params.copy()
        record = EpochRecord(epoch, value, rho, best)
        model.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        logger.debug("epoch %d value %.8g rho %.4g", epoch, value, rho)
        if abs(value - previous) < config.convergence_tol * abs(previous):
            model.converged = True
            break
        previous = value
    if model.rate_floor_hits:
        logger.warning("%d variational rates clamped at %g", model.rate_floor_hits, RATE_FLOOR)
    model.params = best_params
    return model


# ---------------------------------------------------------------------------
# serialisation
#
# DCPF-MODEL v1 layout:
#   line 1   "DCPF-MODEL v1"
#   line 2   JSON header (config, element, grid, hyperparameters, array names
#            and shapes in block order, "ids_file" naming the id sidecar)
#   line 3   "BINARY"
#   then per array: uint64 little-endian value count, then that many
#   little-endian float64 values in C order.


def _header(model: FittedModel, ids_file: str) -> dict:
    return {
        "config": model.config.to_dict(),
        "element": {"family": model.element.family.value, "theta": model.element.theta,
                    "kappa": model.element.kappa},
        "hyper_user": model.hyper_user.to_dict(),
        "hyper_item": model.hyper_item.to_dict(),
        "grid": model.grid.to_dict(),
        "train_windows": model.train_windows,
        "static": model.static,
        "converged": model.converged,
        "epochs": len(model.history) - 1 if model.history else 0,
        "eta_mean_init": model.eta_mean_init,
        "ids_file": ids_file,
        "arrays": [{"name": name, "shape": list(getattr(model.params, name).shape)} for name in ARRAY_NAMES],
    }


def serialize_model(model: FittedModel, path: str | os.PathLike) -> tuple[bytes, str]:
    """Model file bytes and ``.ids`` sidecar text for a model stored at ``path``."""
    sidecar = ids_path(path)
    header = json.dumps(_header(model, os.path.basename(sidecar)), sort_keys=True)
    buf = io.BytesIO()
    buf.write(f"{MODEL_MAGIC}\n{header}\nBINARY\n".encode("ascii"))
    for name in ARRAY_NAMES:
        arr = np.ascontiguousarray(getattr(model.params, name), dtype="<f8")
        buf.write(struct.pack("<Q", arr.size))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue(), format_ids(model.users, model.items, model.grid)


def save_model(model: FittedModel, path: str | os.PathLike):
    """Write the model file and its ``.ids`` sidecar."""
    data, ids_text = serialize_model(model, path)
    with open(path, "wb") as fh:
        fh.write(data)
    with open(ids_path(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ids_text)


def load_model(path: str | os.PathLike) -> FittedModel:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").rstrip("\n")
        if magic != MODEL_MAGIC:
            raise ValueError(f"{path}: expected header {MODEL_MAGIC!r}, got {magic!r}")
        header = json.loads(fh.readline().decode("ascii"))
        if fh.readline() != b"BINARY\n":
            raise ValueError(f"{path}: missing BINARY marker")
        arrays = {}
        for spec in header["arrays"]:
            (count,) = struct.unpack("<Q", fh.read(8))
            shape = tuple(spec["shape"])
            if count != math.prod(shape):
                raise ValueError(f"{path}: block {spec['name']} has {count} values, expected shape {shape}")
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            arrays[spec["name"]] = data.astype(float).reshape(shape)
    with open(os.path.join(os.path.dirname(path), header["ids_file"]), encoding="utf-8") as fh:
        users, items, grid = parse_ids(fh.read())
    config = FitConfig.from_dict(header["config"])
    el = header["element"]
    model = FittedModel(
        params=VariationalParams(**arrays),
        config=config,
        element=ElementDistribution(el["family"], el["theta"], el["kappa"]),
        hyper_user=ChainHyper.from_dict(header["hyper_user"]),
        hyper_item=ChainHyper.from_dict(header["hyper_item"]),
        users=users, items=items, grid=TimeGrid(**header["grid"]),
        train_windows=header["train_windows"], static=header["static"],
        converged=header["converged"], eta_mean_init=header["eta_mean_init"],
    )
    if grid != model.grid:
        raise ValueError(f"{path}: grid in header disagrees with the ids sidecar")
    return model


def with_factors(model: FittedModel, user_state: np.ndarray, item_state: np.ndarray) -> FittedModel:
    """Copy of ``model`` whose factor means equal the given M x K x T / N x K x T arrays."""
    params = model.params.copy()
    params.user_u_shape = np.ones_like(user_state, dtype=float)
    params.user_u_rate = 1.0 / np.asarray(user_state, dtype=float)
    params.item_v_shape = np.ones_like(item_state, dtype=float)
    params.item_v_rate = 1.0 / np.asarray(item_state, dtype=float)
    return replace(model, params=params)
