"""Observation models for normal and abnormal cells.

Every monitored cell emits i.i.d. observations from one of two densities:
``f`` while the cell is normal and ``g`` while it hosts an anomaly. The
search policies only ever touch a model through three quantities:

* random draws (``sample``),
* the pointwise log-likelihood ratio ``log g(y) - log f(y)`` (``llr``),
  whose running sums drive every probing and stopping rule, and
* the divergences ``D(g||f)`` and ``D(f||g)`` (``kl_divergences``), which
  pick the probing regime and calibrate the asymptotic risk bounds.

Models are immutable after construction and safe to share across
concurrently running trials; randomness always comes from a caller-owned
``numpy.random.Generator``. A draw consumes exactly one variate from the
generator, which is what makes trial replay and the hand-rolled simulation
oracles in the test suite possible.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ModelError",
    "Exponential",
    "Gaussian",
    "Bernoulli",
    "Tabulated",
    "ObservationModel",
    "model_from_dict",
    "model_to_dict",
]

# Below this, the two densities are numerically indistinguishable and no
# stopping rule terminates in reasonable time.
_MIN_KL = 1e-9


class ModelError(ValueError):
    """A model specification is malformed or degenerate (f and g too close)."""


def _require_informative(model: "ObservationModel") -> None:
    d_gf, d_fg = model.kl_divergences()
    if not (d_gf >= _MIN_KL and d_fg >= _MIN_KL):
        raise ModelError(
            f"{model.kind} model is degenerate: D(g||f)={d_gf:.3g}, "
            f"D(f||g)={d_fg:.3g}; both must be at least {_MIN_KL}"
        )


@dataclass(frozen=True)
class Exponential:
    """Exponential observations with rate ``lambda_f`` (normal) / ``lambda_g`` (abnormal)."""

    lambda_f: float
    lambda_g: float

    kind = "exponential"

    def __post_init__(self) -> None:
        if not (self.lambda_f > 0 and self.lambda_g > 0):
            raise ModelError("exponential rates must be positive")
        object.__setattr__(self, "_log_ratio", math.log(self.lambda_g / self.lambda_f))
        object.__setattr__(self, "_rate_gap", self.lambda_g - self.lambda_f)
        _require_informative(self)

    def sample(self, abnormal: bool, rng: np.random.Generator) -> float:
        rate = self.lambda_g if abnormal else self.lambda_f
        return rng.standard_exponential() / rate

    def sample_many(self, abnormal: bool, rng: np.random.Generator, size: int) -> np.ndarray:
        rate = self.lambda_g if abnormal else self.lambda_f
        return rng.standard_exponential(size) / rate

    def llr(self, y: float) -> float:
        return self._log_ratio - self._rate_gap * y

    def kl_divergences(self) -> tuple[float, float]:
        # Closed forms for exponential rates a (true) vs b (mismatched):
        # D(a||b) = log(a/b) + b/a - 1.
        d_gf = math.log(self.lambda_g / self.lambda_f) + self.lambda_f / self.lambda_g - 1.0
        d_fg = math.log(self.lambda_f / self.lambda_g) + self.lambda_g / self.lambda_f - 1.0
        return d_gf, d_fg


@dataclass(frozen=True)
class Gaussian:
    """Gaussian observations with shared scale ``sigma`` and shifted means."""

    mu_f: float
    mu_g: float
    sigma: float = 1.0

    kind = "gaussian"

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ModelError("gaussian sigma must be positive")
        # llr(y) = a*y + b with a = (mu_g - mu_f)/sigma^2.
        var = self.sigma * self.sigma
        a = (self.mu_g - self.mu_f) / var
        b = (self.mu_f * self.mu_f - self.mu_g * self.mu_g) / (2.0 * var)
        object.__setattr__(self, "_slope", a)
        object.__setattr__(self, "_offset", b)
        _require_informative(self)

    def sample(self, abnormal: bool, rng: np.random.Generator) -> float:
        mu = self.mu_g if abnormal else self.mu_f
        return mu + self.sigma * rng.standard_normal()

    def sample_many(self, abnormal: bool, rng: np.random.Generator, size: int) -> np.ndarray:
        mu = self.mu_g if abnormal else self.mu_f
        return mu + self.sigma * rng.standard_normal(size)

    def llr(self, y: float) -> float:
        return self._slope * y + self._offset

    def kl_divergences(self) -> tuple[float, float]:
        d = (self.mu_g - self.mu_f) ** 2 / (2.0 * self.sigma * self.sigma)
        return d, d


@dataclass(frozen=True)
class Bernoulli:
    """Coin-flip observations in {0, 1}; success probability ``p_f`` / ``p_g``."""

    p_f: float
    p_g: float

    kind = "bernoulli"

    def __post_init__(self) -> None:
        for p in (self.p_f, self.p_g):
            if not 0.0 < p < 1.0:
                raise ModelError("bernoulli probabilities must lie strictly in (0, 1)")
        object.__setattr__(self, "_llr_one", math.log(self.p_g / self.p_f))
        object.__setattr__(self, "_llr_zero", math.log((1.0 - self.p_g) / (1.0 - self.p_f)))
        _require_informative(self)

    def sample(self, abnormal: bool, rng: np.random.Generator) -> float:
        p = self.p_g if abnormal else self.p_f
        return 1.0 if rng.random() < p else 0.0

    def sample_many(self, abnormal: bool, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.p_g if abnormal else self.p_f
        return (rng.random(size) < p).astype(np.float64)

    def llr(self, y: float) -> float:
        if y == 1.0:
            return self._llr_one
        if y == 0.0:
            return self._llr_zero
        raise ValueError(f"bernoulli observation must be 0 or 1, got {y!r}")

    def kl_divergences(self) -> tuple[float, float]:
        d_gf = self.p_g * self._llr_one + (1.0 - self.p_g) * self._llr_zero
        d_fg = -(self.p_f * self._llr_one + (1.0 - self.p_f) * self._llr_zero)
        return d_gf, d_fg


@dataclass(frozen=True)
class Tabulated:
    """Finite-support observations given by two pmfs over a shared support.

    Both pmfs must be strictly positive everywhere on the support so that
    every log-likelihood ratio is finite, and must each sum to 1 within
    1e-12.
    """

    support: tuple[float, ...]
    pmf_f: tuple[float, ...]
    pmf_g: tuple[float, ...]

    kind = "tabulated"

    def __post_init__(self) -> None:
        support = tuple(float(v) for v in self.support)
        pmf_f = tuple(float(p) for p in self.pmf_f)
        pmf_g = tuple(float(p) for p in self.pmf_g)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "pmf_f", pmf_f)
        object.__setattr__(self, "pmf_g", pmf_g)
        if not support:
            raise ModelError("tabulated support is empty")
        if len(set(support)) != len(support):
            raise ModelError("tabulated support values must be distinct")
        if len(pmf_f) != len(support) or len(pmf_g) != len(support):
            raise ModelError("pmf lengths must match the support")
        for name, pmf in (("pmf_f", pmf_f), ("pmf_g", pmf_g)):
            if any(p <= 0.0 for p in pmf):
                raise ModelError(f"{name} must be strictly positive on the support")
            if abs(math.fsum(pmf) - 1.0) > 1e-12:
                raise ModelError(f"{name} must sum to 1 within 1e-12")
        object.__setattr__(self, "_llr_table", {v: math.log(q / p) for v, p, q in zip(support, pmf_f, pmf_g)})
        object.__setattr__(self, "_cum_f", _cumulative(pmf_f))
        object.__setattr__(self, "_cum_g", _cumulative(pmf_g))
        _require_informative(self)

    def sample(self, abnormal: bool, rng: np.random.Generator) -> float:
        cum = self._cum_g if abnormal else self._cum_f
        return self.support[bisect.bisect_right(cum, rng.random())]

    def sample_many(self, abnormal: bool, rng: np.random.Generator, size: int) -> np.ndarray:
        cum = self._cum_g if abnormal else self._cum_f
        idx = np.searchsorted(np.asarray(cum), rng.random(size), side="right")
        return np.asarray(self.support)[idx]

    def llr(self, y: float) -> float:
        try:
            return self._llr_table[y]
        except KeyError:
            raise ValueError(f"observation {y!r} is outside the tabulated support") from None

    def kl_divergences(self) -> tuple[float, float]:
        llrs = [self._llr_table[v] for v in self.support]
        d_gf = math.fsum(q * l for q, l in zip(self.pmf_g, llrs))
        d_fg = -math.fsum(p * l for p, l in zip(self.pmf_f, llrs))
        return d_gf, d_fg


def _cumulative(pmf: Sequence[float]) -> tuple[float, ...]:
    # Right-open cumulative bins for inverse-cdf sampling; the final bin is
    # pinned to 1 so a uniform draw of exactly 1-eps never falls off the end.
    total, out = 0.0, []
    for p in pmf[:-1]:
        total += p
        out.append(total)
    out.append(1.0)
    return tuple(out)


ObservationModel = Union[Exponential, Gaussian, Bernoulli, Tabulated]

_KINDS = {cls.kind: cls for cls in (Exponential, Gaussian, Bernoulli, Tabulated)}


def model_to_dict(model: ObservationModel) -> dict:
    """Kind-tagged plain-dict form of a model, as stored in config files."""
    out: dict = {"kind": model.kind}
    if isinstance(model, Exponential):
        out.update(lambda_f=model.lambda_f, lambda_g=model.lambda_g)
    elif isinstance(model, Gaussian):
        out.update(mu_f=model.mu_f, mu_g=model.mu_g, sigma=model.sigma)
    elif isinstance(model, Bernoulli):
        out.update(p_f=model.p_f, p_g=model.p_g)
    else:
        out.update(support=list(model.support), pmf_f=list(model.pmf_f), pmf_g=list(model.pmf_g))
    return out


def model_from_dict(spec: dict) -> ObservationModel:
    """Inverse of :func:`model_to_dict`; raises ModelError on bad input."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ModelError("model spec must be a mapping with a 'kind' key")
    kind = spec["kind"]
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {sorted(_KINDS)}") from None
    kwargs = {k: v for k, v in spec.items() if k != "kind"}
    if cls is Tabulated:
        for key in ("support", "pmf_f", "pmf_g"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {kind!r} model: {exc}") from None
