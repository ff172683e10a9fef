"""Compound-Poisson observation layer.

A response ``y`` is the sum of ``eta ~ Poisson(rate)`` i.i.d. draws from an
exponential dispersion model (EDM) element law with natural parameter
``theta`` and index ``kappa``.  Additivity of the EDM means that, given
``eta``, the response has density

    p(y | eta) = h(y, eta * kappa) * exp(theta * y - eta * kappa * Psi(theta))

so every quantity below is written in terms of the log-partition ``Psi`` and
the log base measure ``log h``.  All densities are handled in log space.

Four element families are supported:

========  ============================  =================================
family    Psi(theta)                    h(y, c)
========  ============================  =================================
po        exp(theta)                    c**y / y!
ga        -log(-theta)                  y**(c - 1) / Gamma(c)
n         theta**2 / 2                  exp(-y**2 / (2c)) / sqrt(2 pi c)
ztp       log(exp(exp(theta)) - 1)      c! S2(y, c) / y!
========  ============================  =================================

For ``ztp`` the index must be a positive integer (a ``kappa``-fold
convolution of zero-truncated Poisson draws).
"""
from __future__ import annotations

import enum
import math
import threading
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

__all__ = [
    "Family",
    "ElementDistribution",
    "EtaPosterior",
    "EtaBatch",
    "DomainError",
    "SupportError",
    "InconsistentObservationError",
    "TruncationWarning",
    "log_partition",
    "dlog_partition",
    "log_base_measure",
    "conditional_logpdf",
    "stirling2",
    "log_stirling2",
    "posterior_eta",
    "eta_posterior_batch",
    "compound_logpdf",
    "log_prob_zero",
    "response_mean",
    "prob_nonzero",
    "sample_element",
    "sample_given_eta",
    "sample_compound",
    "mle_init",
]

ETA_MAX_DEFAULT = 50
ETA_MAX_CAP = 4096
TAIL_TOL = 1e-12


class DomainError(ValueError):
    """Natural parameter outside the family's domain."""


class SupportError(ValueError):
    """Response value outside the support of the convolution."""


class InconsistentObservationError(ValueError):
    """A nonzero response was observed under a zero Poisson rate."""


class TruncationWarning(UserWarning):
    """The eta posterior still had tail mass at the hard truncation cap."""


class Family(str, enum.Enum):
    POISSON = "po"
    GAMMA = "ga"
    GAUSSIAN = "n"
    ZERO_TRUNCATED_POISSON = "ztp"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"poisson": "po", "gamma": "ga", "gaussian": "n", "normal": "n"}
        return cls(aliases.get(key, key))

    @property
    def discrete(self) -> bool:
        return self in (Family.POISSON, Family.ZERO_TRUNCATED_POISSON)


@dataclass(frozen=True)
class ElementDistribution:
    """EDM element law with natural parameter ``theta`` and index ``kappa``."""

    family: Family
    theta: float
    kappa: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "kappa", float(self.kappa))
        if not math.isfinite(self.theta):
            raise DomainError(f"theta must be finite, got {self.theta}")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if self.family is Family.GAMMA and self.theta >= 0:
            raise DomainError(f"gamma element needs theta < 0, got {self.theta}")
        if self.family is Family.ZERO_TRUNCATED_POISSON and self.kappa != round(self.kappa):
            raise DomainError(f"ztp element needs an integer index, got {self.kappa}")

    @property
    def log_partition(self) -> float:
        return log_partition(self)


# ---------------------------------------------------------------------------
# log-partition and base measure


def _check_theta(family: Family, theta):
    if family is Family.GAMMA and np.any(np.asarray(theta) >= 0):
        raise DomainError(f"gamma element needs theta < 0, got {theta}")


def _psi(family: Family, theta: float) -> float:
    if family is Family.POISSON:
        return math.exp(theta)
    if family is Family.GAMMA:
        return -math.log(-theta)
    if family is Family.GAUSSIAN:
        return 0.5 * theta * theta
    lam = math.exp(theta)
    # log(e^lam - 1) = lam + log(1 - e^-lam)
    return lam + math.log(-math.expm1(-lam))


def _dpsi(family: Family, theta: float) -> float:
    if family is Family.POISSON:
        return math.exp(theta)
    if family is Family.GAMMA:
        return -1.0 / theta
    if family is Family.GAUSSIAN:
        return theta
    lam = math.exp(theta)
    return lam / -math.expm1(-lam)


def log_partition(elem: ElementDistribution) -> float:
    """Psi(theta) of the element family."""
    _check_theta(elem.family, elem.theta)
    return _psi(elem.family, elem.theta)


def dlog_partition(elem: ElementDistribution) -> float:
    """Psi'(theta), the mean of a unit-index element draw."""
    _check_theta(elem.family, elem.theta)
    return _dpsi(elem.family, elem.theta)


class _LogStirlingTable:
    """Immutable table of log S2(n, k) for 0 <= n <= n_max, 0 <= k <= k_max."""

    def __init__(self, n_max: int, k_max: int):
        self.n_max = n_max
        self.k_max = k_max
        table = np.full((n_max + 1, k_max + 1), -np.inf)
        table[0, 0] = 0.0
        logk = np.log(np.arange(1, k_max + 1, dtype=float))
        for n in range(1, n_max + 1):
            prev = table[n - 1]
            table[n, 1:] = np.logaddexp(logk + prev[1:], prev[:-1])
        table.flags.writeable = False
        self.table = table

    def covers(self, n_max: int, k_max: int) -> bool:
        return n_max <= self.n_max and k_max <= self.k_max


_stirling_lock = threading.Lock()
_stirling_table = _LogStirlingTable(128, 128)


def _log_stirling_table(n_max: int, k_max: int) -> np.ndarray:
    global _stirling_table
    tab = _stirling_table
    if not tab.covers(n_max, k_max):
        with _stirling_lock:
            tab = _stirling_table
            if not tab.covers(n_max, k_max):
                n_new = max(tab.n_max, int(n_max))
                k_new = max(tab.k_max, min(int(k_max), n_new))
                if n_new > tab.n_max:
                    n_new = max(n_new, 2 * tab.n_max)
                if k_new > tab.k_max:
                    k_new = min(max(k_new, 2 * tab.k_max), n_new)
                tab = _LogStirlingTable(n_new, k_new)
                _stirling_table = tab
    return tab.table


_exact_rows: list[list[int]] = [[1]]


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind as an exact integer.

    Returns 0 whenever ``k > n``.  Use :func:`log_stirling2` when only the
    magnitude is needed; the exact rows grow quadratically in ``n``.
    """
    n, k = int(n), int(k)
    if n < 0 or k < 0:
        raise ValueError("stirling2 needs non-negative arguments")
    if k > n:
        return 0
    with _stirling_lock:
        while len(_exact_rows) <= n:
            prev = _exact_rows[-1]
            m = len(prev)
            row = [0] * (m + 1)
            for j in range(1, m + 1):
                row[j] = j * (prev[j] if j < m else 0) + prev[j - 1]
            _exact_rows.append(row)
        return _exact_rows[n][k]


def log_stirling2(n, k):
    """log S2(n, k), vectorised; ``-inf`` where the number is zero."""
    n_arr = np.asarray(n, dtype=np.int64)
    k_arr = np.asarray(k, dtype=np.int64)
    if np.any(n_arr < 0) or np.any(k_arr < 0):
        raise ValueError("log_stirling2 needs non-negative arguments")
    n_b, k_b = np.broadcast_arrays(n_arr, k_arr)
    out = np.full(n_b.shape, -np.inf)
    ok = k_b <= n_b
    if np.any(ok):
        table = _log_stirling_table(int(n_b[ok].max()), int(k_b[ok].max()))
        out[ok] = table[n_b[ok], k_b[ok]]
    return out[()] if out.ndim == 0 else out


def _log_h(family: Family, y: np.ndarray, c: np.ndarray) -> np.ndarray:
    """log h(y, c) broadcast over ``y`` and ``c``; ``-inf`` off the support.

    ``c == 0`` is the point mass at zero (eta = 0).
    """
    y, c = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(c, dtype=float))
    out = np.full(y.shape, -np.inf)
    zero_c = c == 0
    out[zero_c & (y == 0)] = 0.0
    pos = ~zero_c
    if family is Family.GAMMA:
        sel = pos & (y > 0)
        out[sel] = (c[sel] - 1.0) * np.log(y[sel]) - special.gammaln(c[sel])
    elif family is Family.GAUSSIAN:
        sel = pos
        out[sel] = -y[sel] ** 2 / (2.0 * c[sel]) - 0.5 * np.log(2.0 * np.pi * c[sel])
    elif family is Family.POISSON:
        sel = pos & (y >= 0)
        out[sel] = special.xlogy(y[sel], c[sel]) - special.gammaln(y[sel] + 1.0)
    else:
        sel = pos & (y >= c)
        if np.any(sel):
            yi = y[sel].astype(np.int64)
            ci = c[sel].astype(np.int64)
            out[sel] = (
                special.gammaln(ci + 1.0)
                + log_stirling2(yi, ci)
                - special.gammaln(yi + 1.0)
            )
    return out


def _check_support(family: Family, y: float, c: float):
    if not math.isfinite(y):
        raise SupportError(f"response must be finite, got {y}")
    if family is Family.GAMMA and y < 0:
        raise SupportError(f"gamma convolution needs y >= 0, got {y}")
    if family.discrete:
        if y < 0 or y != round(y):
            raise SupportError(f"{family.value} convolution needs integer y >= 0, got {y}")
    if family is Family.ZERO_TRUNCATED_POISSON:
        if c != round(c):
            raise SupportError(f"ztp index must be an integer, got {c}")
        if y < c:
            raise SupportError(f"ztp {int(c)}-fold convolution needs y >= {int(c)}, got {y}")
    if c == 0 and y != 0:
        raise SupportError("an empty convolution (index 0) only supports y = 0")
    if family is Family.GAMMA and c > 0 and y == 0:
        raise SupportError("gamma convolution with positive index has support y > 0")


def log_base_measure(family, y: float, index: float) -> float:
    """log h(y, index) such that p(y | eta) = h(y, eta*kappa) exp(theta*y - eta*kappa*Psi).

    Parameters
    ----------
    family : Family or str
    y : float
        Response value.
    index : float
        Convolution index ``eta * kappa``; an integer for ``ztp``.
    """
    family = Family.parse(family)
    y, index = float(y), float(index)
    if index < 0:
        raise SupportError(f"index must be non-negative, got {index}")
    _check_support(family, y, index)
    return float(_log_h(family, np.array(y), np.array(index)))


def conditional_logpdf(y, eta, elem: ElementDistribution):
    """log p(y | eta) for the eta-fold convolution of the element law."""
    psi = log_partition(elem)
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    c = eta * elem.kappa
    out = _log_h(elem.family, y, c) + elem.theta * y - c * psi
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# posterior over the latent count


@dataclass(frozen=True)
class EtaPosterior:
    support: np.ndarray
    log_weights: np.ndarray
    mean: float
    zero_prob: float

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


@dataclass
class EtaBatch:
    """Vectorised eta posterior summary.

    ``log_norm`` is log of sum_eta exp(-eta kappa Psi) h(y, eta kappa) rate^eta / eta!,
    from which the compound log-likelihood follows as
    ``-rate + theta * y + log_norm``.
    """

    mean: np.ndarray
    log_norm: np.ndarray
    zero_prob: np.ndarray
    truncated: np.ndarray


def _eta_grid_logw(y, lam, elem: ElementDistribution, psi: float, width: int):
    eta = np.arange(width + 1, dtype=float)
    c = eta * elem.kappa
    base = -c * psi - special.gammaln(eta + 1.0)
    logh = _log_h(elem.family, y[:, None], c[None, :])
    return logh + base[None, :] + special.xlogy(eta[None, :], lam[:, None]), eta


def _grid_width(y, elem: ElementDistribution, width: int) -> int:
    if elem.family is Family.ZERO_TRUNCATED_POISSON:
        # S2(y, c) vanishes for c > y: the support is finite.
        return min(width, max(int(y.max() // elem.kappa), 1))
    return width


def _tail_bound(logw, norm, y, elem: ElementDistribution, width: int):
    """Upper bound on the normalised mass beyond the last grid point.

    Valid because the weights are log-concave in eta past the mode.
    """
    with np.errstate(invalid="ignore", over="ignore"):
        last = np.exp(logw[:, -1] - norm)
        ratio = np.exp(logw[:, -1] - logw[:, -2])
        tail = np.where(ratio < 1, last * ratio / (1.0 - ratio), np.inf)
    tail = np.where(np.isneginf(logw[:, -1]), 0.0, tail)
    if elem.family is Family.ZERO_TRUNCATED_POISSON:
        tail = np.where(y // elem.kappa <= width, 0.0, tail)
    return tail


def eta_posterior_batch(
    y,
    lam,
    elem: ElementDistribution,
    eta_max: int = ETA_MAX_DEFAULT,
    cap: int = ETA_MAX_CAP,
    tail_tol: float = TAIL_TOL,
) -> EtaBatch:
    """Posterior mean and normaliser of eta for many cells at once.

    The truncation point starts at ``eta_max`` and is doubled for the cells
    whose bounded tail mass exceeds ``tail_tol``, up to ``cap``.  Cells still
    short of the tolerance at the cap are flagged in ``truncated``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), y.shape).astype(float)
    psi = log_partition(elem)
    n = y.size
    mean = np.zeros(n)
    log_norm = np.full(n, -np.inf)
    zero_prob = np.zeros(n)
    truncated = np.zeros(n, dtype=bool)

    # eta = 0 is the only option for a zero response under gamma / ztp
    # elements, and for any response under a zero rate.
    only_zero = (y == 0) & (elem.family in (Family.GAMMA, Family.ZERO_TRUNCATED_POISSON))
    only_zero |= lam == 0
    ok = y[only_zero] == 0
    log_norm[only_zero] = np.where(ok, 0.0, -np.inf)
    zero_prob[only_zero] = np.where(ok, 1.0, np.nan)
    mean[only_zero] = np.where(ok, 0.0, np.nan)

    todo = np.flatnonzero(~only_zero)
    width = max(int(eta_max), 2)
    while todo.size:
        yy, ll = y[todo], lam[todo]
        w = _grid_width(yy, elem, width)
        logw, eta = _eta_grid_logw(yy, ll, elem, psi, w)
        norm = special.logsumexp(logw, axis=1)
        tail = _tail_bound(logw, norm, yy, elem, w)
        done = (tail < tail_tol) | (width >= cap) | ~np.isfinite(norm)
        idx = todo[done]
        with np.errstate(invalid="ignore"):
            p = np.exp(logw[done] - norm[done, None])
        mean[idx] = p @ eta
        log_norm[idx] = norm[done]
        zero_prob[idx] = p[:, 0]
        truncated[idx] = ~(tail[done] < tail_tol) & np.isfinite(norm[done])
        todo = todo[~done]
        width = min(2 * width, cap)
    return EtaBatch(mean=mean, log_norm=log_norm, zero_prob=zero_prob, truncated=truncated)


def posterior_eta(
    y: float,
    lam: float,
    elem: ElementDistribution,
    eta_max: int = ETA_MAX_DEFAULT,
    cap: int = ETA_MAX_CAP,
) -> EtaPosterior:
    """q(eta) proportional to exp(-kappa eta Psi) h(y, eta kappa) lam^eta / eta!.

    Raises
    ------
    InconsistentObservationError
        If ``y != 0`` while ``lam == 0``.
    """
    y, lam = float(y), float(lam)
    if lam < 0:
        raise ValueError(f"rate must be non-negative, got {lam}")
    if y != 0 and lam == 0:
        raise InconsistentObservationError(f"y={y} observed with zero rate")
    if y != 0:
        _check_support(elem.family, y, elem.kappa)
    if lam == 0 or (y == 0 and elem.family in (Family.GAMMA, Family.ZERO_TRUNCATED_POISSON)):
        return EtaPosterior(np.zeros(1, dtype=np.int64), np.zeros(1), 0.0, 1.0)

    psi = log_partition(elem)
    yy, ll = np.array([y]), np.array([lam])
    width = max(int(eta_max), 2)
    while True:
        w = _grid_width(yy, elem, width)
        logw, eta = _eta_grid_logw(yy, ll, elem, psi, w)
        norm = special.logsumexp(logw, axis=1)
        if not np.isfinite(norm[0]):
            raise InconsistentObservationError(f"y={y} has zero probability under {elem}")
        tail = _tail_bound(logw, norm, yy, elem, w)[0]
        if tail < TAIL_TOL:
            break
        if width >= cap:
            warnings.warn(
                f"eta posterior truncated at cap {cap} for y={y}, rate={lam}", TruncationWarning
            )
            break
        width = min(2 * width, cap)
    lw = logw[0] - norm[0]
    weights = np.exp(lw)
    return EtaPosterior(
        support=eta.astype(np.int64),
        log_weights=lw,
        mean=float(weights @ eta),
        zero_prob=float(weights[0]),
    )


# ---------------------------------------------------------------------------
# marginal quantities of the compound response


def log_prob_zero(lam, elem: ElementDistribution):
    """log P(y = 0) under the compound law, vectorised over ``lam``.

    For Gaussian elements the zero response of an eta > 0 convolution is
    weighted by its density, as in the eta posterior.
    """
    lam = np.asarray(lam, dtype=float)
    if elem.family in (Family.GAMMA, Family.ZERO_TRUNCATED_POISSON):
        out = -lam
    elif elem.family is Family.POISSON:
        out = lam * np.expm1(-elem.kappa * math.exp(elem.theta))
    else:
        flat = lam.reshape(-1)
        out = (-flat + eta_posterior_batch(np.zeros(flat.size), flat, elem).log_norm).reshape(lam.shape)
    return out[()] if np.ndim(out) == 0 else out


def compound_logpdf(y, lam, elem: ElementDistribution, eta_max: int = ETA_MAX_DEFAULT):
    """log sum_eta Poisson(eta; lam) p(y | eta) per cell.

    Returns
    -------
    logp : ndarray
    truncated : ndarray of bool
        Cells whose eta sum hit the truncation cap with tail mass left.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), y.shape)
    logp = np.empty(y.size)
    truncated = np.zeros(y.size, dtype=bool)
    zero = y == 0
    if elem.family is not Family.GAUSSIAN and np.any(zero):
        logp[zero] = log_prob_zero(lam[zero], elem)
        rest = ~zero
    else:
        rest = np.ones(y.size, dtype=bool)
    if np.any(rest):
        batch = eta_posterior_batch(y[rest], lam[rest], elem, eta_max=eta_max)
        logp[rest] = -lam[rest] + elem.theta * y[rest] + batch.log_norm
        truncated[rest] = batch.truncated
    return logp, truncated


def response_mean(elem: ElementDistribution, lam):
    """E[y] = lam * kappa * Psi'(theta)."""
    out = np.asarray(lam, dtype=float) * elem.kappa * dlog_partition(elem)
    return out[()] if out.ndim == 0 else out


def prob_nonzero(elem: ElementDistribution, lam):
    """P(y != 0) under the compound law.

    Gaussian elements return 1 everywhere; rank by the rate instead.
    """
    lam = np.asarray(lam, dtype=float)
    if elem.family is Family.GAUSSIAN:
        out = np.ones_like(lam)
    elif elem.family is Family.POISSON:
        q = -math.expm1(-elem.kappa * math.exp(elem.theta))
        out = -np.expm1(-lam * q)
    else:
        out = -np.expm1(-lam)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# sampling


def _sample_ztp(lam: float, size: int, rng: np.random.Generator) -> np.ndarray:
    # First arrival of a rate-lam process on [0, 1] conditioned to occur,
    # then the remaining arrivals are Poisson on what is left of the interval.
    u = rng.random(size)
    first = -np.log1p(u * np.expm1(-lam)) / lam
    return 1 + rng.poisson(lam * (1.0 - first))


def sample_element(elem: ElementDistribution, size, rng: np.random.Generator) -> np.ndarray:
    """Draw unit element variates (index ``kappa``)."""
    if elem.family is Family.GAMMA:
        return rng.gamma(elem.kappa, -1.0 / elem.theta, size=size)
    if elem.family is Family.GAUSSIAN:
        return rng.normal(elem.kappa * elem.theta, math.sqrt(elem.kappa), size=size)
    if elem.family is Family.POISSON:
        return rng.poisson(elem.kappa * math.exp(elem.theta), size=size).astype(float)
    return sample_given_eta(np.ones(size, dtype=np.int64), elem, rng)


def sample_given_eta(eta, elem: ElementDistribution, rng: np.random.Generator) -> np.ndarray:
    """Draw the sum of ``eta`` element variates for every entry of ``eta``."""
    eta = np.asarray(eta, dtype=np.int64)
    flat = eta.reshape(-1)
    out = np.zeros(flat.size)
    pos = flat > 0
    c = flat[pos] * elem.kappa
    if elem.family is Family.GAMMA:
        out[pos] = rng.gamma(c, -1.0 / elem.theta)
    elif elem.family is Family.GAUSSIAN:
        out[pos] = rng.normal(c * elem.theta, np.sqrt(c))
    elif elem.family is Family.POISSON:
        out[pos] = rng.poisson(c * math.exp(elem.theta))
    else:
        counts = c.astype(np.int64)
        draws = _sample_ztp(math.exp(elem.theta), int(counts.sum()), rng)
        owner = np.repeat(np.arange(counts.size), counts)
        out[pos] = np.bincount(owner, weights=draws, minlength=counts.size)
    return out.reshape(eta.shape)


def sample_compound(lam, elem: ElementDistribution, rng: np.random.Generator, size=None):
    """Draw eta ~ Poisson(lam), then the eta-fold element sum."""
    eta = rng.poisson(lam, size=size)
    y = sample_given_eta(eta, elem, rng)
    return y[()] if np.ndim(y) == 0 else y


# ---------------------------------------------------------------------------
# maximum-likelihood initialisation


def mle_init(nonzero_sample, family, default_kappa: float = 1.0) -> tuple[float, float]:
    """(theta, kappa) maximising the single-event element likelihood.

    Poisson and ztp elements only identify ``kappa * exp(theta)`` and an
    integer index respectively, so their ``kappa`` is pinned to 1.  Gaussian
    and gamma samples with zero spread fall back to ``default_kappa``.
    """
    family = Family.parse(family)
    x = np.asarray(nonzero_sample, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("mle_init needs a non-empty sample")
    if not np.all(np.isfinite(x)):
        raise SupportError("sample contains non-finite values")
    mean = float(np.mean(x))

    if family is Family.GAUSSIAN:
        var = float(np.var(x))
        if var <= 1e-12 * max(1.0, mean * mean):
            warnings.warn("degenerate sample variance; using default kappa", RuntimeWarning)
            return mean / default_kappa, float(default_kappa)
        return mean / var, var

    if family is Family.GAMMA:
        if np.any(x <= 0):
            raise SupportError("gamma element needs a positive sample")
        spread = math.log(mean) - float(np.mean(np.log(x)))
        if spread <= 1e-12:
            warnings.warn("degenerate gamma sample; using default kappa", RuntimeWarning)
            return -default_kappa / mean, float(default_kappa)

        def score(k):
            return math.log(k) - special.digamma(k) - spread

        lo, hi = 1e-8, 1.0
        while score(hi) > 0:
            hi *= 10.0
        kappa = optimize.brentq(score, lo, hi, xtol=1e-14, rtol=1e-14)
        return -kappa / mean, kappa

    if np.any(x < 0) or np.any(x != np.round(x)):
        raise SupportError(f"{family.value} element needs a non-negative integer sample")

    if family is Family.POISSON:
        return math.log(mean), 1.0

    if np.any(x < 1):
        raise SupportError("ztp element needs a sample of positive integers")
    # ztp mean lam / (1 - exp(-lam)) is increasing from 1 at lam -> 0.
    if mean - 1.0 < 1e-6:
        warnings.warn("all-ones ztp sample; flooring the element rate", RuntimeWarning)
        return math.log(1e-3), 1.0

    def ztp_score(lam):
        return lam / -math.expm1(-lam) - mean

    lam = optimize.brentq(ztp_score, 1e-9, mean + 1.0, xtol=1e-14, rtol=1e-14)
    return math.log(lam), 1.0
