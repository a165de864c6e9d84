"""Current-value Hamiltonian, pointwise control maximization, and the
verification diagnostics.

The Hamiltonian splits as H_CV = H0 + H1 where H0 collects the terms that
do not depend on the controls (the adjoint pairing, capital depreciation,
and the infected-mortality sink) and H1 the control-dependent part.  A
candidate pair (value function v, policy) is certified by residuals: the
per-step gap between sup_z H1 and H1 at the policy, the chain-rule
identity along the trajectory, and the transversality decay of the
discounted terminal value.  Nothing here solves the dynamic-programming
equation; the module only measures how far a candidate is from satisfying
it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import economy, epi, objectives
from .errors import ConfigurationError
from .grid import TimeGrid
from .hilbert import CostateField, HilbertSpace


# ----------------------------------------------------------------------
# candidate value functions
# ----------------------------------------------------------------------

class LinearValue:
    """v(h, K) = <h, w>_H + q K with constant gradient (w, q)."""

    def __init__(self, space: HilbertSpace, w, q: float):
        self.space = space
        self.w = tuple(np.asarray(c, dtype=np.float64) for c in w)
        self.q = float(q)

    def value(self, h, K) -> float:
        return self.space.inner(h, self.w) + self.q * K

    def grad_h(self, h, K):
        return self.w

    def grad_K(self, h, K) -> float:
        return self.q


class QuadraticValue:
    """v(h, K) = 1/2 <h, W h>_H + 1/2 q K^2 with W pointwise multiplication."""

    def __init__(self, space: HilbertSpace, w, q: float):
        self.space = space
        self.w = tuple(np.asarray(c, dtype=np.float64) for c in w)
        self.q = float(q)

    def _wh(self, h):
        return tuple(wc * hc for wc, hc in zip(self.w, h))

    def value(self, h, K) -> float:
        return 0.5 * self.space.inner(h, self._wh(h)) + 0.5 * self.q * K * K

    def grad_h(self, h, K):
        return self._wh(h)

    def grad_K(self, h, K) -> float:
        return self.q * K


def validate_gradient(v, probes, space: HilbertSpace, rel_tol: float = 1e-6,
                      seed: int = 0) -> float:
    """Check the supplied gradient against central differences of v.

    Probes are (h, K) pairs; random directions are drawn per probe.  Returns
    the worst relative discrepancy and raises if it exceeds ``rel_tol``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for h, K in probes:
        g = tuple(rng.standard_normal(space.grid.n_age) for _ in range(3))
        scale = max(space.norm(h), 1.0)
        eps = 1e-4 * scale / max(space.norm(g), 1e-12)
        hp = tuple(hc + eps * gc for hc, gc in zip(h, g))
        hm = tuple(hc - eps * gc for hc, gc in zip(h, g))
        fd = (v.value(hp, K) - v.value(hm, K)) / (2.0 * eps)
        an = space.inner(v.grad_h(h, K), g)
        worst = max(worst, abs(fd - an) / max(abs(an), 1.0))
        epsk = 1e-4 * max(abs(K), 1.0)
        fdk = (v.value(h, K + epsk) - v.value(h, K - epsk)) / (2.0 * epsk)
        ank = v.grad_K(h, K)
        worst = max(worst, abs(fdk - ank) / max(abs(ank), 1.0))
    if worst > rel_tol:
        raise ConfigurationError(
            f"value-function gradient mismatch {worst:.3e} exceeds {rel_tol:.1e}")
    return worst


# ----------------------------------------------------------------------
# Hamiltonian pieces
# ----------------------------------------------------------------------

@dataclass
class HamiltonianEval:
    """Split evaluation with total = h0 + h1."""

    h0: float
    h1: float
    total: float
    argmax_controls: tuple | None = None


def h0_part(state: epi.EpiState, K: float, costate: CostateField,
            space: HilbertSpace, params: epi.EpiParams, econ) -> float:
    """Control-independent Hamiltonian part.

    <h, A* p>_H - delta K Q - <mu_I(., Xi(h)) h2, p2>_L2.
    """
    h = state.as_triple()
    astar = space.apply_A_star(costate.triple())
    Xi = epi.critical_load(state, params)
    mu_i = epi.infection_mortality(params, Xi)
    da = state.grid.da
    sink = float(da * (mu_i * state.i.values * costate.p2).sum())
    return space.inner(h, astar) - econ.delta * K * costate.Q - sink


def h1_part(state: epi.EpiState, K: float, costate: CostateField,
            c_t, theta_t, eta_t, space: HilbertSpace, params: epi.EpiParams,
            econ, obj: objectives.ObjectiveParams, n_floor: float = 0.0) -> float:
    """Control-dependent Hamiltonian part at the control slice (c, theta, eta).

    -<Lam h1, p1>_{pi_S} + <Lam h1, p2> + F(K, L_theta) Q - C Q - D Q
    plus the running reward of the configured target.
    """
    s = state.s.values
    da = state.grid.da
    lam = epi._force_array(state.i.values, state.total_population(), theta_t, eta_t,
                           params.m, da, n_floor)
    lam_s = lam * s
    val = -float(da * (lam_s * costate.p1 * space.w1).sum())
    val += float(da * (lam_s * costate.p2).sum())
    val += econ.F(K, economy.labor_supply(state, theta_t, econ)) * costate.Q
    val -= economy.consumption_total(state, c_t) * costate.Q
    val -= economy.testing_cost(state, eta_t, econ) * costate.Q
    val += objectives.running_reward(state, K, c_t, theta_t, eta_t, params, econ, obj)
    return val


def hamiltonian_eval(state, K, costate, c_t, theta_t, eta_t, space, params, econ,
                     obj, n_floor: float = 0.0, search=None) -> HamiltonianEval:
    """Split Hamiltonian evaluation; with ``search`` the argmax slice is attached."""
    h0 = h0_part(state, K, costate, space, params, econ)
    h1 = h1_part(state, K, costate, c_t, theta_t, eta_t, space, params, econ, obj,
                 n_floor)
    argmax = None
    if search is not None:
        res = maximize_h1(state, K, costate, space, params, econ, obj, search,
                          baseline=(c_t, theta_t, eta_t), n_floor=n_floor)
        argmax = (res.c, res.theta, res.eta)
    return HamiltonianEval(h0=h0, h1=h1, total=h0 + h1, argmax_controls=argmax)


# ----------------------------------------------------------------------
# control maximization
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ControlSearchGrid:
    """Finite candidate lattice for the (theta, eta) search.

    theta and eta are piecewise constant over ``n_age_blocks`` equal age
    blocks with values restricted to the given level lists; consumption is
    maximized exactly per cell on [0, c_max].
    """

    theta_levels: tuple
    eta_levels: tuple
    n_age_blocks: int
    c_max: float
    max_sweeps: int = 30

    def __post_init__(self):
        for name in ("theta_levels", "eta_levels"):
            levels = getattr(self, name)
            if len(levels) == 0 or any(not 0.0 <= x <= 1.0 for x in levels):
                raise ConfigurationError(f"{name} must be a nonempty subset of [0, 1]")
        if self.n_age_blocks < 1:
            raise ConfigurationError("n_age_blocks must be >= 1")
        if not self.c_max > 0:
            raise ConfigurationError("c_max must be > 0")


@dataclass
class H1Result:
    value: float
    c: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    converged: bool
    cap_binding: bool


def _optimal_c(n: np.ndarray, Q: float, theta_t: np.ndarray,
               obj: objectives.ObjectiveParams, c_max: float) -> np.ndarray:
    """Exact per-cell consumption argmax of H1 given (theta, eta).

    Only a J1 component makes H1 depend on c through the utility; other
    targets leave the linear capital price -c n Q, so the argmax is a
    corner decided by the sign of Q.  Cells without population take c = 0.
    """
    w_u = obj.target_weights().get("J1", 0.0)
    if w_u > 0.0:
        return obj.utility.optimal_c(n, Q / w_u, theta_t, obj.nu, c_max)
    out = np.zeros_like(n)
    if Q < 0.0:
        out[n > 0.0] = c_max
    return out


def maximize_h1(state, K, costate, space, params, econ, obj,
                search: ControlSearchGrid, baseline=None,
                n_floor: float = 0.0) -> H1Result:
    """Blockwise-exhaustive maximization of H1 over the control lattice.

    Alternates (i) the exact per-cell consumption argmax with (ii) a
    coordinate sweep over the (theta, eta) age blocks, each block set to
    its best level with all others held fixed, until a fixed point.  The
    force of infection couples ages through the contact kernel, so the
    sweep is repeated rather than decoupled.  Deterministic: levels are
    scanned in order and the lowest-index candidate wins ties.

    ``baseline``, when given as a (c, theta, eta) slice, is also entered as
    a candidate (with its consumption re-solved exactly), so the returned
    value dominates H1 at that slice up to the consumption argmax.
    """
    grid = state.grid
    n_age = grid.n_age
    nb = search.n_age_blocks
    if n_age % nb != 0:
        raise ConfigurationError(f"{nb} age blocks do not divide n_age = {n_age}")
    bs = n_age // nb
    th_levels = np.asarray(search.theta_levels, dtype=np.float64)
    et_levels = np.asarray(search.eta_levels, dtype=np.float64)
    n = state.n_density()
    Q = costate.Q

    def evaluate(c, th, et):
        return h1_part(state, K, costate, c, th, et, space, params, econ, obj, n_floor)

    def ascend(start_level_index):
        theta = np.repeat(th_levels[start_level_index(th_levels)], n_age)
        eta = np.repeat(et_levels[start_level_index(et_levels)], n_age)
        c = _optimal_c(n, Q, theta, obj, search.c_max)
        best = evaluate(c, theta, eta)
        converged = False
        for _ in range(search.max_sweeps):
            changed = False
            for levels, ctrl in ((th_levels, theta), (et_levels, eta)):
                for b in range(nb):
                    lo, hi = b * bs, (b + 1) * bs
                    current = ctrl[lo]
                    vals = []
                    for lev in levels:
                        ctrl[lo:hi] = lev
                        vals.append(evaluate(c, theta, eta))
                    pick = int(np.argmax(vals))
                    ctrl[lo:hi] = levels[pick]
                    best = vals[pick]
                    if levels[pick] != current:
                        changed = True
            c_new = _optimal_c(n, Q, theta, obj, search.c_max)
            c_shift = float(np.max(np.abs(c_new - c)))
            c = c_new
            best = evaluate(c, theta, eta)
            if not changed and c_shift <= 1e-12 * (1.0 + float(np.max(np.abs(c)))):
                converged = True
                break
        return best, c, theta, eta, converged

    # two deterministic starts: the top corner avoids the degenerate tie at
    # theta = 0 or eta = 0 where the transmission channel is switched off
    best, c, theta, eta, converged = ascend(lambda levels: len(levels) - 1)
    alt = ascend(lambda levels: 0)
    if alt[0] > best:
        best, c, theta, eta, converged = alt

    if baseline is not None:
        _, th_b, et_b = baseline
        c_b = _optimal_c(n, Q, np.asarray(th_b, dtype=np.float64), obj, search.c_max)
        val_b = evaluate(c_b, np.asarray(th_b, dtype=np.float64),
                         np.asarray(et_b, dtype=np.float64))
        if val_b > best:
            best = val_b
            c = c_b
            theta = np.array(th_b, dtype=np.float64)
            eta = np.array(et_b, dtype=np.float64)

    cap_binding = bool(np.any(c >= search.c_max))
    return H1Result(value=best, c=c, theta=theta, eta=eta,
                    converged=converged, cap_binding=cap_binding)


# ----------------------------------------------------------------------
# verification diagnostics
# ----------------------------------------------------------------------

def _costate_at(v, state, K) -> CostateField:
    h = state.as_triple()
    p = v.grad_h(h, K)
    return CostateField(p1=np.asarray(p[0]), p2=np.asarray(p[1]),
                        p3=np.asarray(p[2]), Q=float(v.grad_K(h, K)))


def hamiltonian_gap_profile(v, policy: epi.PolicyField, traj: epi.Trajectory,
                            space, params, econ, obj,
                            search: ControlSearchGrid,
                            n_floor: float = 0.0) -> np.ndarray:
    """Per-node gap sup_z H1 - H1(policy) along a trajectory, using v's gradients.

    The policy's own slice is included in the search candidates, so gaps are
    nonnegative up to the tolerance of the consumption argmax.
    """
    n_nodes = traj.n_steps + 1
    gaps = np.empty(n_nodes)
    for k in range(n_nodes):
        state = traj.states[k]
        K = float(traj.K[k])
        costate = _costate_at(v, state, K)
        c_t, th_t, et_t = policy.at(k)
        res = maximize_h1(state, K, costate, space, params, econ, obj, search,
                          baseline=(c_t, th_t, et_t), n_floor=n_floor)
        current = h1_part(state, K, costate, c_t, th_t, et_t, space, params, econ,
                          obj, n_floor)
        gaps[k] = res.value - current
    return gaps


def integrated_gap(gaps: np.ndarray, traj: epi.Trajectory, obj) -> float:
    """Discounted time integral of the per-node gaps (left endpoint)."""
    tg = traj.time_grid
    disc = np.exp(-obj.rho * (tg.times[:tg.n_steps] - tg.t0))
    return float((disc * gaps[:tg.n_steps]).sum() * tg.dt)


def discounted_running_payoff(traj, policy, params, econ, obj) -> float:
    """Discounted left-endpoint sum of the running reward along a trajectory."""
    tg = traj.time_grid
    total = 0.0
    for k in range(tg.n_steps):
        c_t, th_t, et_t = policy.at(k)
        u = objectives.running_reward(traj.states[k], float(traj.K[k]), c_t, th_t,
                                      et_t, params, econ, obj)
        total += np.exp(-obj.rho * (tg.times[k] - tg.t0)) * u
    return float(total * tg.dt)


def fundamental_identity_residual(v, policy, traj, space, params, econ, obj,
                                  search: ControlSearchGrid,
                                  n_floor: float = 0.0) -> float:
    """Residual of the value decomposition into payoff plus discounted gaps.

    r = v(x_0) - [J + int e^{-rho t} (sup_z H_CV - H_CV(z(t))) dt
                  + e^{-rho T} v(x_T)]

    computed with v's gradients along the trajectory and the rho-discounted
    running payoff of the configured target.  The residual vanishes (to
    discretization order) exactly when v solves the dynamic-programming
    equation along this trajectory; for arbitrary smooth v use
    :func:`chain_rule_residual` instead.
    """
    tg = traj.time_grid
    h0 = traj.states[0].as_triple()
    hT = traj.states[-1].as_triple()
    payoff = discounted_running_payoff(traj, policy, params, econ, obj)
    gaps = hamiltonian_gap_profile(v, policy, traj, space, params, econ, obj,
                                   search, n_floor)
    gap_term = integrated_gap(gaps, traj, obj)
    terminal = np.exp(-obj.rho * (tg.t_end - tg.t0)) * v.value(hT, float(traj.K[-1]))
    return float(v.value(h0, float(traj.K[0])) - (payoff + gap_term + terminal))


def chain_rule_residual(v, policy, traj, space, params, econ, obj,
                        n_floor: float = 0.0) -> float:
    """Discrete chain-rule identity residual for an arbitrary smooth v.

    v(x_0) - e^{-rho T} v(x_T)
      - sum_k e^{-rho t_k} [rho v - <x, A~* grad v> - <B~^z(x), grad v>] dt

    vanishes at rate O(dt) for any feasible policy and any smooth v whose
    gradient is compatible with the adjoint domain.
    """
    tg = traj.time_grid
    dt = tg.dt
    acc = 0.0
    for k in range(tg.n_steps):
        state = traj.states[k]
        K = float(traj.K[k])
        h = state.as_triple()
        costate = _costate_at(v, state, K)
        vk = v.value(h, K)
        astar = space.apply_A_star(costate.triple())
        a_term = space.inner(h, astar) - econ.delta * K * costate.Q

        c_t, th_t, et_t = policy.at(k)
        da = state.grid.da
        lam = epi._force_array(state.i.values, state.total_population(), th_t, et_t,
                               params.m, da, n_floor)
        lam_s = lam * state.s.values
        Xi = epi.critical_load(state, params)
        mu_i = epi.infection_mortality(params, Xi)
        b_h = (-float(da * (lam_s * costate.p1 * space.w1).sum())
               + float(da * ((lam_s - mu_i * state.i.values) * costate.p2).sum()))
        drift_K = (econ.F(K, economy.labor_supply(state, th_t, econ))
                   - economy.consumption_total(state, c_t)
                   - economy.testing_cost(state, et_t, econ))
        b_term = b_h + drift_K * costate.Q

        acc += np.exp(-obj.rho * (tg.times[k] - tg.t0)) * (obj.rho * vk - a_term - b_term)
    acc *= dt
    h0 = traj.states[0].as_triple()
    hT = traj.states[-1].as_triple()
    terminal = np.exp(-obj.rho * (tg.t_end - tg.t0)) * v.value(hT, float(traj.K[-1]))
    return float(v.value(h0, float(traj.K[0])) - terminal - acc)


@dataclass
class TransversalityReport:
    horizons: np.ndarray
    weighted_values: np.ndarray
    exponent: float | None
    decaying: bool


def transversality_check(v, trajectories, rho: float) -> TransversalityReport:
    """Decay of e^{-rho T} |v(x_T)| over trajectories of increasing horizon.

    Fits the decay exponent of the discounted terminal values and flags the
    candidate when they fail to decrease.
    """
    horizons = np.array([t.time_grid.t_end - t.time_grid.t0 for t in trajectories])
    vals = np.array([
        np.exp(-rho * T) * abs(v.value(t.states[-1].as_triple(), float(t.K[-1])))
        for T, t in zip(horizons, trajectories)
    ])
    pos = vals > 0.0
    exponent = None
    if pos.sum() >= 2:
        slope = np.polyfit(horizons[pos], np.log(vals[pos]), 1)[0]
        exponent = float(-slope)
    decaying = bool(vals[-1] <= vals[0] or np.all(vals == 0.0))
    return TransversalityReport(horizons=horizons, weighted_values=vals,
                                exponent=exponent, decaying=decaying)


def greedy_policy(initial: epi.EpiState, K0: float, v, space, params, econ, obj,
                  time_grid: TimeGrid, search: ControlSearchGrid,
                  n_floor_rel: float = 1e-9):
    """Roll out the policy that maximizes H1 step by step under v's gradients.

    Returns the policy surface and its trajectory.  By construction the
    Hamiltonian gap of the result vanishes on its own trajectory, which is
    the constructive side of the sufficiency argument on the control
    lattice.
    """
    grid = initial.grid
    n_steps = time_grid.n_steps
    shape = (n_steps + 1, grid.n_age)
    c_surf = np.zeros(shape)
    th_surf = np.zeros(shape)
    et_surf = np.zeros(shape)
    n_floor = n_floor_rel * initial.total_population()

    state, K = initial, float(K0)
    for k in range(n_steps + 1):
        costate = _costate_at(v, state, K)
        res = maximize_h1(state, K, costate, space, params, econ, obj, search,
                          n_floor=n_floor)
        c_surf[k] = res.c
        th_surf[k] = res.theta
        et_surf[k] = res.eta
        if k < n_steps:
            state, K = epi.step(state, K, res.c, res.theta, res.eta, params, econ,
                                time_grid.dt, n_floor)

    policy = epi.PolicyField.from_arrays(grid, time_grid, c_surf, th_surf, et_surf)
    traj = epi.simulate(initial, K0, policy, params, econ, time_grid, n_floor_rel)
    return policy, traj
