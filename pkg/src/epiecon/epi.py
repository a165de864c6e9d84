"""Controlled age-structured SIR dynamics.

State representation, force of infection, saturation-dependent infected
mortality, the one-step update, and full trajectory simulation.

The stepper follows characteristics on the cohort-aligned grid (dt = da):
within a step every cohort decays by exact exponentials with rates frozen
at the step's start, then all cohorts shift one cell older and newborns
enter the first cell.  Aging is therefore exact and free of numerical
diffusion; all truncation error comes from freezing the reaction rates,
which is first order in dt.  Positivity of (s, i, r) holds exactly by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import economy
from .errors import ConfigurationError, ExtinctPopulation, ModelError, NonFiniteState
from .grid import AgeGrid, Field1D, Field2D, TimeGrid
from .hilbert import DEFAULT_WEIGHT_FLOOR, HilbertSpace


@dataclass(frozen=True)
class SaturationSpec:
    """Hospital-overload response of infected mortality.

    The multiplier applied to the baseline rate is
    1 + psi * softplus((Xi - xi_cap) / smooth), an increasing, globally
    Lipschitz function of the critical load Xi that tends to 1 for small
    epidemics and grows with slope psi / smooth past capacity.  psi = 0
    recovers load-independent mortality.
    """

    xi_cap: float
    psi: float
    smooth: float

    def __post_init__(self):
        if self.psi < 0:
            raise ConfigurationError("overload slope psi must be >= 0")
        if not self.smooth > 0:
            raise ConfigurationError("overload softening width must be > 0")

    def multiplier(self, Xi: float) -> float:
        return 1.0 + self.psi * _softplus((Xi - self.xi_cap) / self.smooth)


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow
    return float(np.logaddexp(0.0, x))


@dataclass(frozen=True)
class EpiParams:
    """Demographic and epidemiological coefficients sampled on the grid."""

    mu_S: Field1D
    mu_R: Field1D
    mu_I_base: Field1D
    gamma: Field1D
    beta: Field1D
    xi: Field1D
    m: np.ndarray
    saturation: SaturationSpec

    def __post_init__(self):
        n = self.mu_S.grid.n_age
        for name in ("mu_S", "mu_R", "mu_I_base", "gamma", "beta", "xi"):
            f = getattr(self, name)
            if f.grid.n_age != n:
                raise ConfigurationError(f"{name} lives on a different grid")
            if np.any(f.values < 0):
                raise ConfigurationError(f"{name} must be nonnegative")
        if np.any(self.xi.values > 1.0):
            raise ConfigurationError("critical-care prevalence xi must lie in [0, 1]")
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (n, n) or not np.all(np.isfinite(m)):
            raise ConfigurationError("contact kernel must be a finite (n_age, n_age) table")
        object.__setattr__(self, "m", m)

    @property
    def grid(self) -> AgeGrid:
        return self.mu_S.grid


@dataclass(frozen=True, eq=False)
class EpiState:
    """Age densities of the three compartments at one time instant."""

    s: Field1D
    i: Field1D
    r: Field1D
    time: float = 0.0

    def __post_init__(self):
        g = self.s.grid
        if self.i.grid.n_age != g.n_age or self.r.grid.n_age != g.n_age:
            raise ConfigurationError("state components live on different grids")
        for name in ("s", "i", "r"):
            if np.any(getattr(self, name).values < 0):
                raise ConfigurationError(f"state component {name} must be nonnegative")

    @classmethod
    def from_arrays(cls, grid: AgeGrid, s, i, r, time: float = 0.0) -> "EpiState":
        return cls(Field1D(grid, s, "persons/year"), Field1D(grid, i, "persons/year"),
                   Field1D(grid, r, "persons/year"), time)

    @property
    def grid(self) -> AgeGrid:
        return self.s.grid

    def as_triple(self):
        return (self.s.values, self.i.values, self.r.values)

    def n_density(self) -> np.ndarray:
        return self.s.values + self.i.values + self.r.values

    def total_population(self) -> float:
        return float(self.grid.da * self.n_density().sum())


@dataclass(frozen=True, eq=False)
class PolicyField:
    """Control surfaces c >= 0, theta in [0, 1], eta in [0, 1] on the age-time grid."""

    c: Field2D
    theta: Field2D
    eta: Field2D

    def __post_init__(self):
        if np.any(self.c.values < 0):
            raise ConfigurationError("consumption control must be nonnegative")
        for name in ("theta", "eta"):
            v = getattr(self, name).values
            if np.any(v < 0) or np.any(v > 1.0):
                raise ConfigurationError(f"{name} control must lie in [0, 1]")

    @classmethod
    def from_arrays(cls, age_grid: AgeGrid, time_grid: TimeGrid, c, theta, eta) -> "PolicyField":
        return cls(Field2D(age_grid, time_grid, c),
                   Field2D(age_grid, time_grid, theta),
                   Field2D(age_grid, time_grid, eta))

    @classmethod
    def constant(cls, age_grid: AgeGrid, time_grid: TimeGrid,
                 c: float = 0.0, theta: float = 1.0, eta: float = 1.0) -> "PolicyField":
        shape = (time_grid.n_steps + 1, age_grid.n_age)
        return cls.from_arrays(age_grid, time_grid,
                               np.full(shape, float(c)),
                               np.full(shape, float(theta)),
                               np.full(shape, float(eta)))

    def at(self, k: int):
        """Control slice (c, theta, eta) at time node k."""
        return (self.c.values[k], self.theta.values[k], self.eta.values[k])

    @property
    def time_grid(self) -> TimeGrid:
        return self.c.time_grid


def laissez_faire_policy(age_grid, time_grid, c_level: float = 0.0) -> PolicyField:
    return PolicyField.constant(age_grid, time_grid, c=c_level, theta=1.0, eta=1.0)


def full_lockdown_policy(age_grid, time_grid, c_level: float = 0.0) -> PolicyField:
    return PolicyField.constant(age_grid, time_grid, c=c_level, theta=0.0, eta=1.0)


# ----------------------------------------------------------------------
# pointwise operations
# ----------------------------------------------------------------------

def critical_load(state: EpiState, params: EpiParams) -> float:
    """Hospital-demand aggregate Xi = int i * xi da."""
    return float(state.grid.da * (state.i.values * params.xi.values).sum())


def infection_mortality(params: EpiParams, Xi: float) -> np.ndarray:
    """Infected mortality field mu_I(., Xi) including the overload multiplier."""
    return params.mu_I_base.values * params.saturation.multiplier(Xi)


def _force_array(i_values: np.ndarray, n_total: float, theta_t: np.ndarray,
                 eta_t: np.ndarray, m: np.ndarray, da: float, n_floor: float) -> np.ndarray:
    if n_total <= n_floor:
        raise ExtinctPopulation(
            f"total population {n_total:.3e} at or below the floor {n_floor:.3e}")
    return theta_t * (m @ (theta_t * eta_t * i_values)) * (da / n_total)


def force_of_infection(state: EpiState, theta_t: np.ndarray, eta_t: np.ndarray,
                       params: EpiParams, n_floor: float = 0.0) -> Field1D:
    """Age-specific infection hazard of the controlled dynamics.

    lambda(a) = theta(a)/N * int m(a, tau) theta(tau) eta(tau) i(tau) dtau.
    With theta = eta = 1 this is the uncontrolled force of infection.
    """
    lam = _force_array(state.i.values, state.total_population(), theta_t, eta_t,
                       params.m, state.grid.da, n_floor)
    return Field1D(state.grid, lam, "1/year")


# ----------------------------------------------------------------------
# time stepping
# ----------------------------------------------------------------------

def step(state: EpiState, K: float, c_t: np.ndarray, theta_t: np.ndarray,
         eta_t: np.ndarray, params: EpiParams, econ: economy.EconParams,
         dt: float, n_floor: float = 0.0):
    """Advance the coupled state one step along characteristics.

    Within the step, rates are frozen at their start-of-step values and each
    cohort decays by exact exponentials.  The infection outflow of s equals
    the inflow into i exactly; inflowing infections are exposed to i's own
    decay for half a step (midpoint correction), with the decayed share
    routed to recovery and death in proportion to the competing rates, so
    mass is accounted exactly.  Cohorts then shift one cell older (the last
    cell exits at the maximum age) and the birth flow enters the first cell
    as a density increment.  Capital advances by one explicit Euler step.
    """
    grid = state.grid
    da = grid.da
    s, i, r = state.as_triple()
    n = s + i + r
    n_total = float(da * n.sum())

    lam = _force_array(i, n_total, theta_t, eta_t, params.m, da, n_floor)
    Xi = float(da * (i * params.xi.values).sum())
    mu_i = infection_mortality(params, Xi)
    mu_s = params.mu_S.values
    mu_r = params.mu_R.values
    gamma = params.gamma.values
    births = float(da * (params.beta.values * n).sum())

    s_dec = s * np.exp(-(lam + mu_s) * dt)
    new_inf = s * (-np.expm1(-lam * dt))
    out_rate = mu_i + gamma
    stay_full = np.exp(-out_rate * dt)
    stay_half = np.exp(-out_rate * (0.5 * dt))
    i_dec = i * stay_full + new_inf * stay_half
    outflow = i * (-np.expm1(-out_rate * dt)) + new_inf * (-np.expm1(-out_rate * (0.5 * dt)))
    recovered_share = np.divide(gamma, out_rate, out=np.zeros_like(gamma), where=out_rate > 0)
    r_dec = r * np.exp(-mu_r * dt) + recovered_share * outflow

    s_new = np.empty_like(s)
    i_new = np.empty_like(i)
    r_new = np.empty_like(r)
    s_new[0] = births * dt / da
    i_new[0] = 0.0
    r_new[0] = 0.0
    s_new[1:] = s_dec[:-1]
    i_new[1:] = i_dec[:-1]
    r_new[1:] = r_dec[:-1]

    if not (np.all(np.isfinite(s_new)) and np.all(np.isfinite(i_new))
            and np.all(np.isfinite(r_new))):
        raise NonFiniteState("state update produced non-finite densities")

    L = economy.labor_supply(state, theta_t, econ)
    C = economy.consumption_total(state, c_t)
    d_cost = economy.testing_cost(state, eta_t, econ)
    K1 = economy.capital_step(K, L, C, d_cost, econ, dt)

    return EpiState.from_arrays(grid, s_new, i_new, r_new, state.time + dt), K1


@dataclass(eq=False)
class Trajectory:
    """Time-indexed states and capital plus the per-node aggregates.

    All aggregate arrays have one entry per time node; the aggregates at
    node k are computed from the state and policy slice at t_k, so the
    capital update satisfies K[k+1] - K[k] = dt * (Y[k] - C[k] - delta*K[k]
    - D_cost[k]) exactly.
    """

    states: list
    K: np.ndarray
    time_grid: TimeGrid
    N: np.ndarray
    Xi: np.ndarray
    lam: np.ndarray
    L: np.ndarray
    Y: np.ndarray
    C: np.ndarray
    D_cost: np.ndarray
    deaths_flow: np.ndarray
    feasible: bool
    k_violation: float
    min_K: float

    @property
    def n_steps(self) -> int:
        return self.time_grid.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.time_grid.times


def simulate(initial: EpiState, K0: float, policy: PolicyField, params: EpiParams,
             econ: economy.EconParams, time_grid: TimeGrid,
             n_floor_rel: float = 1e-9) -> Trajectory:
    """Run the controlled dynamics over the whole time grid.

    Positivity of (s, i, r) is automatic, so the run is flagged infeasible
    only if capital goes negative; negative capital is recorded, not
    clamped, and the squared violation integral is reported for the
    optimizer's penalty.  Model errors are re-raised with the failing step
    index attached.
    """
    grid = initial.grid
    if abs(time_grid.dt - grid.da) > 1e-15 * max(1.0, grid.da):
        raise ConfigurationError(
            f"time step {time_grid.dt} must equal the age cell width {grid.da}")
    n_steps = time_grid.n_steps
    if policy.c.values.shape != (n_steps + 1, grid.n_age):
        raise ConfigurationError("policy surfaces do not match the grids")
    if K0 < 0:
        raise ConfigurationError(f"initial capital must be >= 0, got {K0}")

    n_floor = n_floor_rel * initial.total_population()
    dt = time_grid.dt

    states = [initial]
    K = np.empty(n_steps + 1)
    K[0] = K0
    N = np.empty(n_steps + 1)
    Xi = np.empty(n_steps + 1)
    lam = np.empty((n_steps + 1, grid.n_age))
    L = np.empty(n_steps + 1)
    Y = np.empty(n_steps + 1)
    C = np.empty(n_steps + 1)
    D_cost = np.empty(n_steps + 1)
    deaths = np.empty(n_steps + 1)

    for k in range(n_steps + 1):
        st = states[k]
        c_t, theta_t, eta_t = policy.at(k)
        try:
            N[k] = st.total_population()
            lam[k] = _force_array(st.i.values, N[k], theta_t, eta_t,
                                  params.m, grid.da, n_floor)
            Xi[k] = critical_load(st, params)
            deaths[k] = float(grid.da * (infection_mortality(params, Xi[k])
                                         * st.i.values).sum())
            L[k] = economy.labor_supply(st, theta_t, econ)
            Y[k] = econ.F(K[k], L[k])
            C[k] = economy.consumption_total(st, c_t)
            D_cost[k] = economy.testing_cost(st, eta_t, econ)
            if k < n_steps:
                st1, K1 = step(st, K[k], c_t, theta_t, eta_t, params, econ, dt, n_floor)
                states.append(st1)
                K[k + 1] = K1
        except ModelError as err:
            err.step_index = k
            raise

    neg = np.maximum(0.0, -K[1:])
    k_violation = float(dt * (neg * neg).sum())
    return Trajectory(states=states, K=K, time_grid=time_grid, N=N, Xi=Xi, lam=lam,
                      L=L, Y=Y, C=C, D_cost=D_cost, deaths_flow=deaths,
                      feasible=bool(np.all(K >= 0.0)), k_violation=k_violation,
                      min_K=float(K.min()))


def hilbert_space_for(params: EpiParams, floor: float = DEFAULT_WEIGHT_FLOOR) -> HilbertSpace:
    """Weighted state space induced by the demographic coefficients."""
    return HilbertSpace(params.grid, params.mu_S.values, params.mu_R.values,
                        params.gamma.values, params.beta.values, floor)
