"""Labor aggregation, production, expenditure, and capital accumulation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NonFiniteState
from .grid import Field1D


# ----------------------------------------------------------------------
# production function variants
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LinearProduction:
    """Y = a_k * K + a_l * L."""

    a_k: float
    a_l: float

    def __post_init__(self):
        if self.a_k < 0 or self.a_l < 0:
            raise ConfigurationError("linear production coefficients must be nonnegative")

    def __call__(self, K: float, L: float) -> float:
        return self.a_k * K + self.a_l * L

    def lipschitz_K(self) -> float:
        return self.a_k


@dataclass(frozen=True)
class CESProduction:
    """Y = scale * (omega K^s + (1 - omega) L^s)^(1/s) with s < 1, s != 0,
    and the marginal product of capital capped at ``mpk_cap``.

    The cap is applied as the concave envelope min(F, F(0, L) + mpk_cap * K),
    which keeps the function concave and increasing and makes it globally
    Lipschitz in K with constant mpk_cap, uniformly in L.  For s < 0 the raw
    marginal product is already bounded by scale * omega^(1/s) and the cap
    may be omitted; for s in (0, 1) it blows up at K = 0, so a finite cap is
    required.
    """

    scale: float
    omega: float
    substitution: float
    mpk_cap: float | None = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError("CES scale must be > 0")
        if not 0.0 < self.omega < 1.0:
            raise ConfigurationError("CES omega must be in (0, 1)")
        if not (self.substitution < 1.0 and self.substitution != 0.0):
            raise ConfigurationError("CES substitution exponent must be < 1 and nonzero")
        if self.mpk_cap is None and self.substitution > 0.0:
            raise ConfigurationError(
                "CES with substitution in (0, 1) needs a finite mpk_cap to be "
                "Lipschitz in capital")
        if self.mpk_cap is not None and not self.mpk_cap > 0:
            raise ConfigurationError("mpk_cap must be > 0")

    def _raw(self, K: float, L: float) -> float:
        s = self.substitution
        if s < 0.0 and (K == 0.0 or L == 0.0):
            return 0.0
        return self.scale * (self.omega * K**s + (1.0 - self.omega) * L**s) ** (1.0 / s)

    def _at_zero_capital(self, L: float) -> float:
        s = self.substitution
        return 0.0 if s < 0.0 else self.scale * (1.0 - self.omega) ** (1.0 / s) * L

    def __call__(self, K: float, L: float) -> float:
        K = max(K, 0.0)
        L = max(L, 0.0)
        raw = self._raw(K, L)
        if self.mpk_cap is None:
            return raw
        return min(raw, self._at_zero_capital(L) + self.mpk_cap * K)

    def lipschitz_K(self) -> float:
        intrinsic = (self.scale * self.omega ** (1.0 / self.substitution)
                     if self.substitution < 0.0 else float("inf"))
        if self.mpk_cap is None:
            return intrinsic
        return min(intrinsic, self.mpk_cap)


@dataclass(frozen=True)
class CobbDouglasProduction:
    """Y = scale * K^omega * L^(1 - omega); not globally Lipschitz in K."""

    scale: float
    omega: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError("Cobb-Douglas scale must be > 0")
        if not 0.0 < self.omega < 1.0:
            raise ConfigurationError("Cobb-Douglas omega must be in (0, 1)")
        warnings.warn(
            "Cobb-Douglas production is not globally Lipschitz in K; "
            "the capital equation loses its global well-posedness guarantee",
            UserWarning,
            stacklevel=2,
        )

    def __call__(self, K: float, L: float) -> float:
        return self.scale * max(K, 0.0) ** self.omega * max(L, 0.0) ** (1.0 - self.omega)

    def lipschitz_K(self) -> float:
        return float("inf")


# ----------------------------------------------------------------------
# lockdown productivity and testing congestion
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLockdown:
    """phi(theta) = theta^q, q > 0; increasing with phi(1) = 1."""

    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise ConfigurationError("lockdown productivity exponent q must be > 0")

    def __call__(self, theta):
        return np.power(theta, self.q)


@dataclass(frozen=True)
class AffineLockdown:
    """phi(theta) = (1 - ell) + ell * theta, ell in [0, 1]."""

    ell: float

    def __post_init__(self):
        if not 0.0 <= self.ell <= 1.0:
            raise ConfigurationError("lockdown productivity slope ell must be in [0, 1]")

    def __call__(self, theta):
        return (1.0 - self.ell) + self.ell * np.asarray(theta, dtype=np.float64)


@dataclass(frozen=True)
class LinearCongestion:
    """D(x) = d1 * x."""

    d1: float

    def __post_init__(self):
        if not self.d1 >= 0:
            raise ConfigurationError("congestion slope d1 must be >= 0")

    def __call__(self, x: float) -> float:
        return self.d1 * x


@dataclass(frozen=True)
class ConcavePowerCongestion:
    """D(x) = d1 * x^p with p in (0, 1]; positive and concave on x >= 0."""

    d1: float
    p: float

    def __post_init__(self):
        if not self.d1 >= 0:
            raise ConfigurationError("congestion slope d1 must be >= 0")
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError("congestion exponent p must be in (0, 1]")

    def __call__(self, x: float) -> float:
        return self.d1 * max(x, 0.0) ** self.p


@dataclass(frozen=True)
class EconParams:
    """Age productivity, testing cost profile, and functional-form choices.

    ``cost_complement`` switches the testing expenditure argument from the
    transmission-retention level eta (as printed in the model) to 1 - eta.
    """

    alpha: Field1D
    e: Field1D
    delta: float
    F: object
    phi: object
    D: object
    cost_complement: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigurationError(f"depreciation delta must be > 0, got {self.delta}")
        if np.any(self.alpha.values < 0) or np.any(self.e.values < 0):
            raise ConfigurationError("alpha and e must be nonnegative")


# ----------------------------------------------------------------------
# aggregates
# ----------------------------------------------------------------------

def labor_supply(state, theta_t: np.ndarray, econ: EconParams) -> float:
    """Efficiency-unit labor of the working compartments, L = int (s+r) alpha phi(theta)."""
    da = state.grid.da
    return float(da * ((state.s.values + state.r.values)
                       * econ.alpha.values * econ.phi(theta_t)).sum())


def consumption_total(state, c_t: np.ndarray) -> float:
    """Aggregate consumption C = int c (s + i + r) da."""
    da = state.grid.da
    return float(da * (c_t * (state.s.values + state.i.values + state.r.values)).sum())


def testing_cost(state, eta_t: np.ndarray, econ: EconParams) -> float:
    """Congestion-priced testing expenditure D(int level * i * e da)."""
    level = (1.0 - eta_t) if econ.cost_complement else eta_t
    da = state.grid.da
    return float(econ.D(da * (level * state.i.values * econ.e.values).sum()))


def capital_step(K: float, L: float, C: float, d_cost: float,
                 econ: EconParams, dt: float) -> float:
    """One explicit Euler step of the capital accumulation law."""
    K1 = K + dt * (econ.F(K, L) - C - econ.delta * K - d_cost)
    if not np.isfinite(K1):
        raise NonFiniteState(f"capital update produced {K1}")
    return float(K1)
