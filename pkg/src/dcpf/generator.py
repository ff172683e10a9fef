"""Synthetic data drawn from the dynamic compound Poisson generative model.

Users and items each carry K gamma-Markov chains of length T.  A cell's
latent count is eta ~ Poisson(sum_k u_mkt v_nkt) and its response is the sum
of eta element draws; only nonzero responses are stored.  Randomness is
derived from the master seed per (window, user) row, so the output does not
depend on the order rows are generated in.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np

from . import edm
from .dataset import FormatError, InteractionTensor, TimeGrid, format_value
from .edm import ElementDistribution
from .gamma_chain import ChainHyper, ChainState, sample_chains

TRUTH_MAGIC = "DCPF-TRUTH v1"
MAX_CELLS_DEFAULT = 50_000_000

# Smoothly drifting chains: equal shapes keep the chain balanced, and shape 10
# gives per-window log-scale steps of roughly 0.45.
DEFAULT_HYPER = ChainHyper(shape_state=10.0, shape_aux=10.0, rate_state=1.0, rate_aux=1.0,
                           init_shape=1.0, init_mean=0.13)
DEFAULT_ELEMENT = ElementDistribution("ga", -1.0, 1.0)

_USER_STREAM, _ITEM_STREAM, _CELL_STREAM = 0, 1, 2


class BudgetError(ValueError):
    pass


@dataclass
class SyntheticDataset:
    tensor: InteractionTensor
    truth_user: ChainState  # M x K x T
    truth_item: ChainState  # N x K x T
    element: ElementDistribution
    hyper_user: ChainHyper
    hyper_item: ChainHyper
    seed: int

    @property
    def K(self) -> int:
        return self.truth_user.state.shape[1]

    def rate_matrix(self, t: int) -> np.ndarray:
        return self.truth_user.state[:, :, t] @ self.truth_item.state[:, :, t].T

    def cell_rates(self, m, n, t) -> np.ndarray:
        m, n, t = (np.asarray(a, dtype=np.int64) for a in (m, n, t))
        return np.einsum("ck,ck->c", self.truth_user.state[m, :, t], self.truth_item.state[n, :, t])


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def expected_cells(user_state: np.ndarray, item_state: np.ndarray) -> float:
    """Sum of all rates, an upper bound on the expected number of nonzero cells."""
    return float(np.einsum("mkt,nkt->", user_state, item_state))


def generate(M: int, N: int, K: int, T: int, hyper_user: ChainHyper = DEFAULT_HYPER,
             hyper_item: ChainHyper = DEFAULT_HYPER, element: ElementDistribution = DEFAULT_ELEMENT,
             seed: int = 0, max_cells: int = MAX_CELLS_DEFAULT) -> SyntheticDataset:
    """Sample chains, latent counts and responses for an M x N x T tensor.

    Raises
    ------
    BudgetError
        If the expected number of stored cells exceeds ``max_cells``.
    """
    for name, value in (("M", M), ("N", N), ("K", K), ("T", T)):
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    users = sample_chains(hyper_user, T, M, K, _rng(seed, _USER_STREAM))
    items = sample_chains(hyper_item, T, N, K, _rng(seed, _ITEM_STREAM))
    expected = expected_cells(users.state, items.state)
    if expected > max_cells:
        raise BudgetError(
            f"about {expected:.3g} nonzero cells expected, budget is {max_cells}; "
            f"reduce M, N, T or the initial means (mean rate {expected / (M * N * T):.3g})"
        )

    ms, ns, ts, ys = [], [], [], []
    for t in range(T):
        lam_t = users.state[:, :, t] @ items.state[:, :, t].T
        for m in range(M):
            rng = _rng(seed, _CELL_STREAM, t, m)
            eta = rng.poisson(lam_t[m])
            hit = np.flatnonzero(eta)
            if hit.size == 0:
                continue
            y = edm.sample_given_eta(eta[hit], element, rng)
            keep = y != 0
            ms.append(np.full(int(keep.sum()), m))
            ns.append(hit[keep])
            ts.append(np.full(int(keep.sum()), t))
            ys.append(y[keep])

    def cat(parts, dtype):
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

    tensor = InteractionTensor(
        users=[f"u{m}" for m in range(M)],
        items=[f"i{n}" for n in range(N)],
        grid=TimeGrid(origin=0, window_length=1, num_windows=T),
        m=cat(ms, np.int64), n=cat(ns, np.int64), t=cat(ts, np.int64), y=cat(ys, float),
    )
    return SyntheticDataset(tensor, users, items, element, hyper_user, hyper_item, seed)


def oracle_loglik(dataset: SyntheticDataset, cells: InteractionTensor, mode: str = "nonmissing",
                  exclude: InteractionTensor | None = None, windows=None) -> float:
    """Mean per-cell compound log-likelihood at the true rates.

    ``mode="full"`` also scores every unstored (m, n, t) of ``windows``
    (default: the windows present in ``cells``) as a zero, skipping
    positions in ``exclude``.
    """
    lam = dataset.cell_rates(cells.m, cells.n, cells.t)
    logp, truncated = edm.compound_logpdf(cells.y, lam, dataset.element)
    parts = [math.fsum(logp[~truncated])]
    count = int((~truncated).sum())
    if mode == "nonmissing":
        return parts[0] / count if count else float("nan")
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    M, N = dataset.tensor.M, dataset.tensor.N
    for t in (np.unique(cells.t) if windows is None else windows):
        t = int(t)
        skip = np.zeros((M, N), dtype=bool)
        for part in (cells, exclude):
            if part is not None:
                sel = part.t == t
                skip[part.m[sel], part.n[sel]] = True
        lp0 = edm.log_prob_zero(dataset.rate_matrix(t), dataset.element)
        parts.append(math.fsum(lp0[~skip]))
        count += int((~skip).sum())
    return math.fsum(parts) / count


# ---------------------------------------------------------------------------
# truth files
#
#   DCPF-TRUTH v1
#   M N K T
#   element <family> <theta> <kappa>
#   then rows "<array> i k t value" for arrays u, z (users) and v, w (items),
#   and "<array> i value" for the initial rates bu, bv.


def format_truth(dataset: SyntheticDataset) -> str:
    u, v = dataset.truth_user, dataset.truth_item
    M, K, T = u.state.shape
    N = v.state.shape[0]
    el = dataset.element
    out = io.StringIO()
    out.write(f"{TRUTH_MAGIC}\n{M} {N} {K} {T}\n")
    out.write(f"element {el.family.value} {float(el.theta)!r} {float(el.kappa)!r}\n")
    for name, arr in (("u", u.state), ("z", u.aux), ("v", v.state), ("w", v.aux)):
        for (i, k, t), value in np.ndenumerate(arr):
            out.write(f"{name} {i} {k} {t} {float(value)!r}\n")
    for name, arr in (("bu", u.init_rate), ("bv", v.init_rate)):
        for i, value in enumerate(arr):
            out.write(f"{name} {i} {float(value)!r}\n")
    return out.getvalue()


def write_truth(dataset: SyntheticDataset, path: str | os.PathLike):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_truth(dataset))


def read_truth(path: str | os.PathLike) -> tuple[ChainState, ChainState, ElementDistribution]:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRUTH_MAGIC:
        raise FormatError(f"{path}: expected header {TRUTH_MAGIC!r}")
    M, N, K, T = (int(x) for x in lines[1].split())
    _, family, theta, kappa = lines[2].split()
    arrays = {name: np.empty((M if name in "uz" else N, K, T)) for name in "uzvw"}
    rates = {"bu": np.empty(M), "bv": np.empty(N)}
    for line in lines[3:]:
        parts = line.split()
        if parts[0] in arrays:
            i, k, t = (int(x) for x in parts[1:4])
            arrays[parts[0]][i, k, t] = float(parts[4])
        elif parts[0] in rates:
            rates[parts[0]][int(parts[1])] = float(parts[2])
        else:
            raise FormatError(f"{path}: unknown row {line!r}")
    return (
        ChainState(rates["bu"], arrays["z"], arrays["u"]),
        ChainState(rates["bv"], arrays["w"], arrays["v"]),
        ElementDistribution(family, float(theta), float(kappa)),
    )


__all__ = [
    "BudgetError", "DEFAULT_ELEMENT", "DEFAULT_HYPER", "SyntheticDataset", "format_value",
    "generate", "oracle_loglik", "read_truth", "write_truth",
]
