"""Running rewards and the welfare targets J1..J6 evaluated on trajectories.

J1: discounted altruism-weighted utility flow (infinite horizon, truncated).
J2: discounted production flow (infinite horizon, truncated).
J3: final production capacity with everyone productive.
J4: final capital.
J5: discounted production flow over the scenario horizon.
J6: cumulative disease deaths (undiscounted as printed; discount optional).

A composite target is a weighted sum of the above; the canonical use is
w_a * J_econ - w_b * J6 to trade off output against deaths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import economy, epi
from .errors import ConfigurationError

TARGETS = ("J1", "J2", "J3", "J4", "J5", "J6")


# ----------------------------------------------------------------------
# per-capita utility families
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftedCRRAUtility:
    """u(c, theta) = u0 + (c + eps_c)^(1-sigma)/(1-sigma) * (w0 + (1-w0) theta).

    Positive for u0 > 0 and increasing in both arguments for
    sigma in (0, 1) and w0 in (0, 1].
    """

    u0: float = 0.1
    sigma: float = 0.5
    eps_c: float = 0.01
    w0: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise ConfigurationError("CRRA exponent sigma must be in (0, 1)")
        if self.u0 < 0 or self.eps_c < 0:
            raise ConfigurationError("utility shift u0 and eps_c must be >= 0")
        if not 0.0 < self.w0 <= 1.0:
            raise ConfigurationError("mobility weight w0 must be in (0, 1]")

    def theta_weight(self, theta):
        return self.w0 + (1.0 - self.w0) * np.asarray(theta, dtype=np.float64)

    def __call__(self, c, theta):
        c = np.asarray(c, dtype=np.float64)
        base = (c + self.eps_c) ** (1.0 - self.sigma) / (1.0 - self.sigma)
        return self.u0 + base * self.theta_weight(theta)

    def marginal_c(self, c, theta):
        c = np.asarray(c, dtype=np.float64)
        return (c + self.eps_c) ** (-self.sigma) * self.theta_weight(theta)

    def optimal_c(self, n, Q, theta, nu, c_max):
        """Pointwise maximizer of n^nu u(c, theta) - c n Q over [0, c_max].

        Solves the first-order condition n^nu u_c = n Q where interior; the
        corner c_max is taken when marginal utility never meets the price.
        Empty cells take c = 0, except that for nu = 0 the utility weight
        n^nu is 1 there (0^0 convention) and the argmax is the cap.
        """
        n = np.asarray(n, dtype=np.float64)
        out = np.zeros_like(n)
        pos = n > 0.0
        if nu == 0.0:
            out[~pos] = c_max
        if Q <= 0.0:
            out[pos] = c_max
            return out
        price = n[pos] ** (1.0 - nu) * Q
        theta_w = self.theta_weight(np.broadcast_to(theta, n.shape))
        c_foc = (theta_w[pos] / price) ** (1.0 / self.sigma) - self.eps_c
        out[pos] = np.clip(c_foc, 0.0, c_max)
        return out


@dataclass(frozen=True)
class SeparableUtility:
    """u(c, theta) = log(1 + c) + b * theta."""

    b: float = 1.0

    def __post_init__(self):
        if self.b < 0:
            raise ConfigurationError("mobility utility slope b must be >= 0")

    def __call__(self, c, theta):
        return np.log1p(np.asarray(c, dtype=np.float64)) + self.b * np.asarray(theta)

    def marginal_c(self, c, theta):
        return 1.0 / (1.0 + np.asarray(c, dtype=np.float64))

    def optimal_c(self, n, Q, theta, nu, c_max):
        n = np.asarray(n, dtype=np.float64)
        out = np.zeros_like(n)
        pos = n > 0.0
        if nu == 0.0:
            out[~pos] = c_max
        if Q <= 0.0:
            out[pos] = c_max
            return out
        c_foc = 1.0 / (n[pos] ** (1.0 - nu) * Q) - 1.0
        out[pos] = np.clip(c_foc, 0.0, c_max)
        return out


@dataclass(frozen=True)
class ObjectiveParams:
    """Discounting, altruism, truncation horizon, and target selection.

    ``T_num`` truncates the infinite-horizon targets J1/J2 (None means the
    scenario horizon).  ``composite`` maps target names to weights and
    overrides ``which`` when present; the J1 weight must be nonnegative so
    the consumption subproblem stays concave.
    """

    rho: float
    nu: float
    utility: object
    which: str = "J1"
    T_num: float | None = None
    j6_discounted: bool = False
    j6_sign: float = 1.0
    composite: dict | None = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError("discount rate rho must be > 0")
        if not 0.0 <= self.nu <= 1.0:
            raise ConfigurationError("altruism exponent nu must be in [0, 1]")
        if self.which not in TARGETS:
            raise ConfigurationError(f"unknown target {self.which!r}")
        if self.j6_sign not in (1.0, -1.0):
            raise ConfigurationError("j6_sign must be +1 or -1")
        if self.composite is not None:
            for key, w in self.composite.items():
                if key not in TARGETS:
                    raise ConfigurationError(f"unknown composite target {key!r}")
                if key == "J1" and w < 0:
                    raise ConfigurationError("composite weight on J1 must be >= 0")

    def target_weights(self) -> dict:
        return dict(self.composite) if self.composite is not None else {self.which: 1.0}


# ----------------------------------------------------------------------
# running rewards
# ----------------------------------------------------------------------

def u1_reward(state: epi.EpiState, c_t, theta_t, obj: ObjectiveParams) -> float:
    """Altruism-weighted utility flow int n^nu u(c, theta) da."""
    n = state.n_density()
    return float(state.grid.da * (np.power(n, obj.nu) * obj.utility(c_t, theta_t)).sum())


def u2_reward(state: epi.EpiState, K: float, theta_t, econ) -> float:
    """Instantaneous production F(K, L_theta)."""
    return float(econ.F(K, economy.labor_supply(state, theta_t, econ)))


def u3_deaths(state: epi.EpiState, params: epi.EpiParams) -> float:
    """Disease deaths flow int mu_I(., Xi) i da."""
    Xi = epi.critical_load(state, params)
    return float(state.grid.da * (epi.infection_mortality(params, Xi) * state.i.values).sum())


def running_reward(state, K, c_t, theta_t, eta_t, params, econ,
                   obj: ObjectiveParams) -> float:
    """Reward integrand of the configured target (0 for terminal-only targets)."""
    total = 0.0
    for which, w in obj.target_weights().items():
        if w == 0.0:
            continue
        if which == "J1":
            total += w * u1_reward(state, c_t, theta_t, obj)
        elif which in ("J2", "J5"):
            total += w * u2_reward(state, K, theta_t, econ)
        elif which == "J6":
            total += w * obj.j6_sign * u3_deaths(state, params)
        # J3 and J4 carry only terminal rewards
    return total


# ----------------------------------------------------------------------
# target evaluation
# ----------------------------------------------------------------------

@dataclass
class EvalReport:
    """Target value with feasibility information for the optimizer."""

    value: float
    feasible: bool
    violation: float
    tail_bound: float | None
    components: dict


def evaluate(traj: epi.Trajectory, policy: epi.PolicyField, params: epi.EpiParams,
             econ, obj: ObjectiveParams) -> EvalReport:
    """Evaluate the configured target (or composite) on a simulated trajectory.

    Integral targets use the discounted left-endpoint Riemann sum on the
    trajectory's grid; terminal targets evaluate the final node.  For the
    truncated infinite-horizon targets the report carries the frozen-tail
    bound exp(-rho T) * max|U| / rho.
    """
    weights = obj.target_weights()
    components = {}
    tail_bound = None
    for which in weights:
        value, tail = _single_target(traj, policy, params, econ, obj, which)
        components[which] = value
        if which == obj.which and obj.composite is None:
            tail_bound = tail
    total = sum(weights[k] * components[k] for k in weights)
    return EvalReport(value=float(total), feasible=traj.feasible,
                      violation=traj.k_violation, tail_bound=tail_bound,
                      components=components)


def _single_target(traj, policy, params, econ, obj, which):
    tg = traj.time_grid
    dt = tg.dt
    n_steps = tg.n_steps
    elapsed = tg.times - tg.t0

    if which == "J4":
        return float(traj.K[-1]), None
    if which == "J3":
        final = traj.states[-1]
        labor_all = float(final.grid.da * (final.n_density() * econ.alpha.values).sum())
        return float(econ.F(traj.K[-1], labor_all)), None

    if which in ("J1", "J2", "J5"):
        if which == "J5" or obj.T_num is None:
            m = n_steps
        else:
            m = min(n_steps, int(round(obj.T_num / dt)))
        if which == "J1":
            u_vals = np.array([u1_reward(traj.states[k], policy.at(k)[0],
                                         policy.at(k)[1], obj) for k in range(m)])
        else:
            u_vals = traj.Y[:m]
        disc = np.exp(-obj.rho * elapsed[:m])
        value = float((disc * u_vals).sum() * dt)
        tail = None
        if which in ("J1", "J2") and m > 0:
            sup_u = float(np.max(np.abs(u_vals)))
            tail = float(np.exp(-obj.rho * (m * dt)) * sup_u / obj.rho)
        return value, tail

    if which == "J6":
        disc = np.exp(-obj.rho * elapsed[:n_steps]) if obj.j6_discounted else 1.0
        value = float((disc * traj.deaths_flow[:n_steps]).sum() * dt)
        return obj.j6_sign * value, None

    raise ConfigurationError(f"unknown target {which!r}")
