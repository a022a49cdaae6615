"""The four distribution families: gamma, log-normal, and their two-component
mixtures, with PDF / CDF / CCDF evaluation and synthetic sampling.

Conventions
-----------
Every density carries an explicit amplitude A equal to the component's total
probability mass, so a unit-amplitude density integrates to 1 over (0, inf).
Mixture components are kept in canonical order (ascending scale for gamma,
ascending mu for log-normal) to remove the label-switching degeneracy.

Canonical parameter vectors:

    gamma        [A, n, m]            shape n, scale m (rate 1/m)
    lognormal    [A, mu, sigma]
    bigamma      [A1, n1, m1, A2, n2, m2]
    bilognormal  [A1, mu1, sigma1, A2, mu2, sigma2]
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .special import (
    log_gamma,
    reg_lower_incomplete_gamma,
    reg_upper_incomplete_gamma,
    std_normal_cdf,
)

__all__ = [
    "FAMILIES",
    "LogNormalParams",
    "GammaParams",
    "BiGammaParams",
    "BiLogNormalParams",
    "ModelSpec",
    "gamma_model",
    "lognormal_model",
    "bigamma_model",
    "bilognormal_model",
    "family_param_count",
    "family_param_names",
    "pdf",
    "cdf",
    "ccdf",
    "total_amplitude",
    "sample",
    "param_pack",
    "param_unpack",
    "format_model",
]

FAMILIES = ("gamma", "lognormal", "bigamma", "bilognormal")

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


def _check_finite(name, value):
    if not np.isfinite(value):
        raise PreconditionError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class LogNormalParams:
    """Amplitude A, location mu (log income) and spread sigma (> 0)."""

    amplitude: float
    mu: float
    sigma: float

    def __post_init__(self):
        for name in ("amplitude", "mu", "sigma"):
            _check_finite(name, getattr(self, name))
        if self.amplitude < 0.0:
            raise PreconditionError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.sigma <= 0.0:
            raise PreconditionError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class GammaParams:
    """Amplitude A, shape n (> 0) and scale m in income units (> 0)."""

    amplitude: float
    shape: float
    scale: float

    def __post_init__(self):
        for name in ("amplitude", "shape", "scale"):
            _check_finite(name, getattr(self, name))
        if self.amplitude < 0.0:
            raise PreconditionError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.shape <= 0.0:
            raise PreconditionError(f"shape must be > 0, got {self.shape}")
        if self.scale <= 0.0:
            raise PreconditionError(f"scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class BiGammaParams:
    """Two gamma components, canonically ordered by ascending scale."""

    component1: GammaParams
    component2: GammaParams

    def __post_init__(self):
        if self.component1.scale > self.component2.scale:
            c1, c2 = self.component2, self.component1
            object.__setattr__(self, "component1", c1)
            object.__setattr__(self, "component2", c2)


@dataclass(frozen=True)
class BiLogNormalParams:
    """Two log-normal components, canonically ordered by ascending mu."""

    component1: LogNormalParams
    component2: LogNormalParams

    def __post_init__(self):
        if self.component1.mu > self.component2.mu:
            c1, c2 = self.component2, self.component1
            object.__setattr__(self, "component1", c1)
            object.__setattr__(self, "component2", c2)


_PARAMS_TYPE = {
    "gamma": GammaParams,
    "lognormal": LogNormalParams,
    "bigamma": BiGammaParams,
    "bilognormal": BiLogNormalParams,
}

_PARAM_NAMES = {
    "gamma": ("A", "n", "m"),
    "lognormal": ("A", "mu", "sigma"),
    "bigamma": ("A1", "n1", "m1", "A2", "n2", "m2"),
    "bilognormal": ("A1", "mu1", "sigma1", "A2", "mu2", "sigma2"),
}


@dataclass(frozen=True)
class ModelSpec:
    """A family tag plus the matching parameter record."""

    family: str
    params: object

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PreconditionError(
                f"unknown family {self.family!r}; expected one of {FAMILIES}"
            )
        expected = _PARAMS_TYPE[self.family]
        if not isinstance(self.params, expected):
            raise PreconditionError(
                f"family {self.family!r} requires {expected.__name__}, "
                f"got {type(self.params).__name__}"
            )


def gamma_model(amplitude, shape, scale):
    return ModelSpec("gamma", GammaParams(amplitude, shape, scale))


def lognormal_model(amplitude, mu, sigma):
    return ModelSpec("lognormal", LogNormalParams(amplitude, mu, sigma))


def bigamma_model(a1, n1, m1, a2, n2, m2):
    return ModelSpec("bigamma", BiGammaParams(GammaParams(a1, n1, m1), GammaParams(a2, n2, m2)))


def bilognormal_model(a1, mu1, s1, a2, mu2, s2):
    return ModelSpec(
        "bilognormal",
        BiLogNormalParams(LogNormalParams(a1, mu1, s1), LogNormalParams(a2, mu2, s2)),
    )


def family_param_count(family):
    return len(_PARAM_NAMES[family])


def family_param_names(family):
    return _PARAM_NAMES[family]


def is_bimodal(family):
    return family in ("bigamma", "bilognormal")


def unimodal_counterpart(family):
    return {"bigamma": "gamma", "bilognormal": "lognormal"}[family]


def bimodal_counterpart(family):
    return {"gamma": "bigamma", "lognormal": "bilognormal"}[family]


def _components(model):
    if is_bimodal(model.family):
        kind = "gamma" if model.family == "bigamma" else "lognormal"
        return ((kind, model.params.component1), (kind, model.params.component2))
    kind = model.family
    return ((kind, model.params),)


def total_amplitude(model):
    """Sum of component amplitudes; the x -> inf limit of the CDF."""
    return float(sum(p.amplitude for _, p in _components(model)))


def _lognormal_pdf(p, x):
    if p.amplitude == 0.0:
        return np.zeros_like(x)
    z = (np.log(x) - p.mu) / p.sigma
    return p.amplitude / (x * p.sigma * _SQRT_TWO_PI) * np.exp(-0.5 * z * z)


def _gamma_pdf(p, x):
    if p.amplitude == 0.0:
        return np.zeros_like(x)
    # log-space evaluation: finite for any valid parameters, underflows to 0
    log_f = (
        math.log(p.amplitude)
        - log_gamma(p.shape)
        - p.shape * math.log(p.scale)
        + (p.shape - 1.0) * np.log(x)
        - x / p.scale
    )
    with np.errstate(under="ignore"):
        return np.exp(log_f)


def _lognormal_cdf(p, x):
    out = np.zeros_like(x)
    pos = x > 0.0
    if p.amplitude != 0.0 and pos.any():
        z = (np.log(x[pos]) - p.mu) / p.sigma
        out[pos] = p.amplitude * std_normal_cdf(z)
    return out


def _gamma_cdf(p, x):
    if p.amplitude == 0.0:
        return np.zeros_like(x)
    return p.amplitude * reg_lower_incomplete_gamma(p.shape, x / p.scale)


def _lognormal_ccdf(p, x):
    out = np.full_like(x, p.amplitude)
    pos = x > 0.0
    if p.amplitude != 0.0 and pos.any():
        z = (np.log(x[pos]) - p.mu) / p.sigma
        out[pos] = p.amplitude * std_normal_cdf(-z)
    return out


def _gamma_ccdf(p, x):
    if p.amplitude == 0.0:
        return np.zeros_like(x)
    # upper incomplete gamma directly: keeps tail structure, no cancellation
    return p.amplitude * reg_upper_incomplete_gamma(p.shape, x / p.scale)


_EVALUATORS = {
    ("lognormal", "pdf"): _lognormal_pdf,
    ("lognormal", "cdf"): _lognormal_cdf,
    ("lognormal", "ccdf"): _lognormal_ccdf,
    ("gamma", "pdf"): _gamma_pdf,
    ("gamma", "cdf"): _gamma_cdf,
    ("gamma", "ccdf"): _gamma_ccdf,
}


def _evaluate(model, x, which, x_min_exclusive):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("x must be finite")
    if x_min_exclusive and not np.all(arr > 0.0):
        raise DomainError("x must be > 0")
    if not x_min_exclusive and not np.all(arr >= 0.0):
        raise DomainError("x must be >= 0")
    flat = np.atleast_1d(arr)
    out = np.zeros_like(flat)
    for kind, params in _components(model):
        out = out + _EVALUATORS[(kind, which)](params, flat)
    out = out.reshape(arr.shape)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def pdf(model, x):
    """Probability density per income unit at x > 0."""
    return _evaluate(model, x, "pdf", x_min_exclusive=True)


def cdf(model, x):
    """Cumulative mass below x >= 0; rises from 0 to the total amplitude."""
    return _evaluate(model, x, "cdf", x_min_exclusive=False)


def ccdf(model, x):
    """Tail mass above x >= 0; falls from the total amplitude to 0."""
    return _evaluate(model, x, "ccdf", x_min_exclusive=False)


def sample(model, count, seed):
    """Draw incomes from a model whose amplitudes sum to 1.

    Deterministic for a given seed: one uniform draw per sample selects the
    mixture component, then each component's block is drawn in order
    (standard normal for log-normal, shape-scale gamma for gamma).
    """
    if count < 1:
        raise PreconditionError("count must be >= 1")
    total = total_amplitude(model)
    if abs(total - 1.0) > 1e-9:
        raise PreconditionError(
            f"sampling requires amplitudes summing to 1, got {total!r}"
        )
    rng = np.random.default_rng(seed)
    comps = _components(model)
    out = np.empty(count, dtype=float)
    if len(comps) == 1:
        selectors = [np.ones(count, dtype=bool)]
    else:
        u = rng.random(count)
        first = u < comps[0][1].amplitude
        selectors = [first, ~first]
    for (kind, params), mask in zip(comps, selectors):
        k = int(mask.sum())
        if k == 0:
            continue
        if kind == "lognormal":
            out[mask] = np.exp(params.mu + params.sigma * rng.standard_normal(k))
        else:
            out[mask] = params.scale * rng.standard_gamma(params.shape, k)
    return out


def param_pack(model):
    """Flatten a model to its canonical parameter vector."""
    values = []
    for _, p in _components(model):
        if isinstance(p, GammaParams):
            values.extend((p.amplitude, p.shape, p.scale))
        else:
            values.extend((p.amplitude, p.mu, p.sigma))
    return np.array(values, dtype=float)


def param_unpack(family, vector):
    """Build a ModelSpec from a canonical parameter vector."""
    vec = np.asarray(vector, dtype=float)
    expected = family_param_count(family)
    if vec.shape != (expected,):
        raise PreconditionError(
            f"family {family!r} needs {expected} parameters, got {vec.shape}"
        )
    v = [float(t) for t in vec]
    if family == "gamma":
        return gamma_model(*v)
    if family == "lognormal":
        return lognormal_model(*v)
    if family == "bigamma":
        return bigamma_model(*v)
    if family == "bilognormal":
        return bilognormal_model(*v)
    raise PreconditionError(f"unknown family {family!r}")


def format_model(model):
    """Key-value rendering: family line, then one named parameter per line."""
    lines = [f"family = {model.family}"]
    for name, value in zip(family_param_names(model.family), param_pack(model)):
        lines.append(f"{name} = {float(value)!r}")
    return "\n".join(lines) + "\n"
