"""Shared fixtures: scenario builders, independent oracles, order fitting.

Oracles here are deliberately written without touching the package's
numerical kernels (plain loops, classic RK4, closed forms) so they stay
independent of the code paths they check.
"""

from __future__ import annotations

import numpy as np

import epiecon as ee


# ----------------------------------------------------------------------
# independent numerical oracles
# ----------------------------------------------------------------------

def rk4_path(f, y0, t0, t_end, n_sub):
    """Classic fixed-step RK4; returns (times, states) including both ends."""
    y = np.array(y0, dtype=np.float64)
    h = (t_end - t0) / n_sub
    times = [t0]
    path = [y.copy()]
    t = t0
    for _ in range(n_sub):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        times.append(t)
        path.append(y.copy())
    return np.array(times), np.array(path)


def fit_order(dts, errors, exact_floor=1e-12):
    """Least-squares convergence order from error samples.

    Errors at or below ``exact_floor`` mean the scheme is exact for the
    case at hand; order is then reported as infinity.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if np.all(errors <= exact_floor):
        return np.inf
    safe = np.maximum(errors, 1e-300)
    return float(np.polyfit(np.log(np.asarray(dts)), np.log(safe), 1)[0])


def smooth_bump(x):
    """C-infinity bump supported on (-1, 1)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def compact_profile(grid, rng=None, lo=0.2, hi=0.8, n_modes=3):
    """Smooth random age profile supported well inside (0, a_max)."""
    a = grid.nodes / grid.a_max
    env = smooth_bump((a - 0.5 * (lo + hi)) / (0.5 * (hi - lo)))
    if rng is None:
        return env
    coef = rng.standard_normal(n_modes)
    wave = sum(c * np.sin((k + 1) * np.pi * a) for k, c in enumerate(coef))
    return env * wave


def compact_triple(grid, rng, **kw):
    return tuple(compact_profile(grid, rng, **kw) for _ in range(3))


# ----------------------------------------------------------------------
# scenario builder
# ----------------------------------------------------------------------

def _field(grid, spec, units=""):
    if callable(spec):
        return ee.Field1D(grid, np.asarray([spec(a) for a in grid.nodes]), units)
    if np.isscalar(spec):
        return ee.Field1D.constant(grid, float(spec), units)
    return ee.Field1D(grid, np.asarray(spec, dtype=np.float64), units)


def build_scenario(
    n_age=16,
    a_max=8.0,
    n_steps=16,
    t0=0.0,
    mu_s=0.0,
    mu_r=0.0,
    mu_i=0.0,
    gamma=0.0,
    beta=0.0,
    xi=0.0,
    m0=0.0,
    kernel=None,
    xi_cap=1.0,
    psi=0.0,
    smooth=1.0,
    alpha=1.0,
    e_cost=1.0,
    delta=0.05,
    production=None,
    phi=None,
    congestion=None,
    s0=1.0,
    i0=0.0,
    r0=0.0,
    K0=100.0,
    c_level=0.0,
    theta_level=1.0,
    eta_level=1.0,
    rho=0.05,
    nu=1.0,
    which="J1",
    utility=None,
    composite=None,
    T_num=None,
    theta_levels=(0.0, 0.5, 1.0),
    eta_levels=(0.0, 0.5, 1.0),
    search_blocks=1,
    c_max=10.0,
    floor=1e-8,
    n_floor_rel=1e-9,
):
    """Assemble a Scenario from scalars, arrays, or age-callables."""
    grid = ee.AgeGrid(a_max=a_max, n_age=n_age)
    tg = ee.TimeGrid.aligned(grid, t0=t0, n_steps=n_steps)

    if kernel is None:
        kernel = ee.constant_kernel(grid, m0)
    params = ee.EpiParams(
        mu_S=_field(grid, mu_s, "1/year"),
        mu_R=_field(grid, mu_r, "1/year"),
        mu_I_base=_field(grid, mu_i, "1/year"),
        gamma=_field(grid, gamma, "1/year"),
        beta=_field(grid, beta, "1/year"),
        xi=_field(grid, xi),
        m=kernel,
        saturation=ee.SaturationSpec(xi_cap=xi_cap, psi=psi, smooth=smooth),
    )
    econ = ee.EconParams(
        alpha=_field(grid, alpha),
        e=_field(grid, e_cost),
        delta=delta,
        F=production if production is not None else ee.LinearProduction(a_k=0.0, a_l=0.0),
        phi=phi if phi is not None else ee.PowerLockdown(q=1.0),
        D=congestion if congestion is not None else ee.LinearCongestion(d1=0.0),
    )
    obj = ee.ObjectiveParams(
        rho=rho,
        nu=nu,
        utility=utility if utility is not None else ee.ShiftedCRRAUtility(),
        which=which,
        T_num=T_num,
        composite=composite,
    )
    initial = ee.EpiState(_field(grid, s0, "persons/year"),
                          _field(grid, i0, "persons/year"),
                          _field(grid, r0, "persons/year"), time=t0)
    policy = ee.PolicyField.constant(grid, tg, c=c_level, theta=theta_level,
                                     eta=eta_level)
    search = ee.ControlSearchGrid(theta_levels=tuple(theta_levels),
                                  eta_levels=tuple(eta_levels),
                                  n_age_blocks=search_blocks, c_max=c_max)
    space = ee.hilbert_space_for(params, floor=floor)
    return ee.Scenario(age_grid=grid, time_grid=tg, epi=params, econ=econ, obj=obj,
                       initial=initial, K0=K0, policy=policy, search=search,
                       space=space, n_floor_rel=n_floor_rel)


def band_profile(grid, lo_age, hi_age, value):
    """Constant value on [lo_age, hi_age), zero elsewhere."""
    a = grid.nodes
    return np.where((a >= lo_age) & (a < hi_age), float(value), 0.0)


def random_block_policy(scenario, rng, n_time_blocks=4, n_age_blocks=2,
                        theta_range=(0.3, 1.0), eta_range=(0.3, 1.0),
                        c_range=(0.0, 0.0)):
    """Feasible random piecewise-constant policy surfaces."""
    shape = (n_time_blocks, n_age_blocks)
    blocks = ee.PolicyBlocks(
        c=rng.uniform(*c_range, size=shape),
        theta=rng.uniform(*theta_range, size=shape),
        eta=rng.uniform(*eta_range, size=shape),
    )
    tg, ag = scenario.time_grid, scenario.age_grid
    return ee.PolicyField.from_arrays(
        ag, tg,
        ee.expand_blocks(blocks.c, tg, ag),
        ee.expand_blocks(blocks.theta, tg, ag),
        ee.expand_blocks(blocks.eta, tg, ag),
    )
