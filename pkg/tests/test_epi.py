import numpy as np
import pytest

import epiecon as ee

from util import build_scenario, fit_order, rk4_path, smooth_bump


# ----------------------------------------------------------------------
# pointwise operations
# ----------------------------------------------------------------------

def test_critical_load_examples():
    scen = build_scenario(n_age=20, a_max=100.0, xi=1.0, i0=0.0)
    assert ee.critical_load(scen.initial, scen.epi) == 0.0

    scen = build_scenario(n_age=20, a_max=100.0, xi=1.0, i0=0.3, s0=0.0)
    total_infected = scen.initial.total_population()
    assert ee.critical_load(scen.initial, scen.epi) == pytest.approx(total_infected)

    # COVID-like uniform hospitalization share: 2.9% of 1000 infected -> 29
    scen = build_scenario(n_age=20, a_max=100.0, xi=0.029, i0=10.0, s0=0.0)
    assert scen.initial.total_population() == pytest.approx(1000.0)
    assert ee.critical_load(scen.initial, scen.epi) == pytest.approx(29.0, rel=1e-12)


def test_infection_mortality_saturation():
    scen = build_scenario(mu_i=0.2, psi=0.0, xi_cap=5.0, smooth=1.0)
    assert np.allclose(ee.infection_mortality(scen.epi, 1e9), 0.2)

    scen = build_scenario(mu_i=0.2, psi=1.5, xi_cap=5.0, smooth=1.0)
    # far below capacity the multiplier is within e^{(Xi - cap)/smooth} of 1
    Xi = -20.0
    mult = ee.infection_mortality(scen.epi, Xi)[0] / 0.2
    assert abs(mult - 1.0) <= 1.5 * np.exp((Xi - 5.0) / 1.0) + 1e-15
    # at capacity the softplus evaluates to log 2 exactly
    at_cap = ee.infection_mortality(scen.epi, 5.0)[0]
    assert at_cap == pytest.approx(0.2 * (1.0 + 1.5 * np.log(2.0)), rel=1e-12)


def test_infection_mortality_increasing_lipschitz():
    scen = build_scenario(mu_i=0.3, psi=2.0, xi_cap=3.0, smooth=0.5)
    xs = np.linspace(-10.0, 20.0, 200)
    vals = np.array([ee.infection_mortality(scen.epi, x)[0] for x in xs])
    assert np.all(np.diff(vals) >= 0.0)
    lip = 0.3 * 2.0 / 0.5
    slopes = np.abs(np.diff(vals)) / np.diff(xs)
    assert np.all(slopes <= lip + 1e-12)


def test_force_of_infection_zero_cases():
    scen = build_scenario(m0=5.0, i0=0.0)
    lam = ee.force_of_infection(scen.initial, np.ones(16), np.ones(16), scen.epi)
    assert np.all(lam.values == 0.0)

    scen = build_scenario(m0=5.0, i0=0.1)
    lam = ee.force_of_infection(scen.initial, np.zeros(16), np.ones(16), scen.epi)
    assert np.all(lam.values == 0.0)


def test_force_of_infection_constant_kernel():
    # m = 10/yr, I/N = 0.01 -> lambda = 0.1/yr everywhere
    scen = build_scenario(n_age=16, m0=10.0, s0=0.99, i0=0.01)
    lam = ee.force_of_infection(scen.initial, np.ones(16), np.ones(16), scen.epi)
    assert np.allclose(lam.values, 0.1, rtol=1e-12)


def test_force_of_infection_extinction_guard():
    scen = build_scenario(m0=1.0, s0=0.0, i0=0.0, r0=0.0)
    with pytest.raises(ee.ExtinctPopulation):
        ee.force_of_infection(scen.initial, np.ones(16), np.ones(16), scen.epi,
                              n_floor=1e-9)


# ----------------------------------------------------------------------
# stepping
# ----------------------------------------------------------------------

def test_step_mckendrick_constant_mortality_exact():
    # i = 0, beta = 0, constant mu_S: transport and decay are both exact
    mu0 = 0.08
    scen = build_scenario(n_age=32, a_max=8.0, n_steps=12, mu_s=mu0,
                          s0=lambda a: 1.0 + 0.5 * np.sin(a))
    traj = scen.simulate()
    k = 12
    dt = scen.time_grid.dt
    s0 = scen.initial.s.values
    expected = np.zeros(32)
    expected[k:] = s0[:-k] * np.exp(-mu0 * k * dt)
    assert np.allclose(traj.states[k].s.values, expected, rtol=1e-12, atol=1e-15)


def test_step_pure_infected_decay_with_shift():
    mu1 = 0.4
    scen = build_scenario(n_age=16, n_steps=5, mu_i=mu1, gamma=0.0, psi=0.0,
                          s0=0.0, i0=1.0, theta_level=0.0)
    traj = scen.simulate()
    dt = scen.time_grid.dt
    i5 = traj.states[5].i.values
    expected = np.zeros(16)
    expected[5:] = 1.0 * np.exp(-mu1 * 5 * dt)
    assert np.allclose(i5, expected, rtol=1e-12)


def test_zero_rate_conservation():
    # gamma arbitrary, everything else zero: N exactly conserved before exit
    scen = build_scenario(n_age=24, n_steps=8, gamma=0.5, m0=2.0,
                          s0=lambda a: 1.0 if a < 5.0 else 0.0,
                          i0=lambda a: 0.2 if a < 5.0 else 0.0)
    traj = scen.simulate()
    N0 = traj.N[0]
    assert np.all(np.abs(traj.N - N0) <= 1e-12 * N0)


def test_simulate_zero_steps_identity():
    scen = build_scenario(n_steps=0)
    traj = scen.simulate()
    assert len(traj.states) == 1
    assert traj.states[0] is scen.initial


def test_laissez_faire_unit_controls_bitwise():
    scen = build_scenario(n_age=16, n_steps=10, mu_s=0.01, mu_i=0.2, gamma=0.3,
                          beta=0.02, m0=1.5, i0=0.01, s0=1.0)
    explicit = ee.PolicyField.constant(scen.age_grid, scen.time_grid,
                                       c=0.0, theta=1.0, eta=1.0)
    t1 = scen.simulate()
    t2 = scen.simulate(explicit)
    for k in range(11):
        assert np.array_equal(t1.states[k].s.values, t2.states[k].s.values)
        assert np.array_equal(t1.states[k].i.values, t2.states[k].i.values)
        assert np.array_equal(t1.states[k].r.values, t2.states[k].r.values)


SIR_BETA, SIR_GAMMA = 1.2, 0.4  # contact rate and recovery: R0-like ratio 3


def sir_scenario(n_age=256, horizon=5.0, band=1.2, i_share=0.05):
    """Age-constant epidemic with no demography; aggregates follow scalar SIR.

    The population sits in a young band so no cohort reaches the maximum age
    within the horizon; the aggregate (S, I, R) system is then closed.
    """
    a_max = band + horizon + 0.1
    n0 = 1000.0 / band
    return build_scenario(
        n_age=n_age, a_max=a_max, n_steps=int(round(horizon / (a_max / n_age))),
        gamma=SIR_GAMMA, m0=SIR_BETA,
        s0=lambda a: (1 - i_share) * n0 if a < band else 0.0,
        i0=lambda a: i_share * n0 if a < band else 0.0,
    )


def sir_peak_error(scen):
    """Relative peak mismatch of aggregate I against a fine RK4 oracle."""
    traj = scen.simulate()
    da = scen.age_grid.da
    S = np.array([da * st.s.values.sum() for st in traj.states])
    I = np.array([da * st.i.values.sum() for st in traj.states])
    N = traj.N[0]

    def rhs(t, y):
        s, i, r = y
        return np.array([-SIR_BETA * s * i / N,
                         SIR_BETA * s * i / N - SIR_GAMMA * i,
                         SIR_GAMMA * i])

    n_sub = 100 * scen.time_grid.n_steps
    _, path = rk4_path(rhs, [S[0], I[0], N - S[0] - I[0]], 0.0,
                       scen.time_grid.t_end, n_sub)
    I_oracle = path[::100, 1]
    assert 0 < I_oracle.argmax() < len(I_oracle) - 1  # interior epidemic peak
    assert S[-1] < S[0]
    return abs(I.max() - I_oracle.max()) / I_oracle.max()


def test_homogeneous_sir_against_rk4():
    assert sir_peak_error(sir_scenario(n_age=128)) < 0.02


def test_transmission_shutdown():
    # population confined to young cells so no cohort exits within the horizon
    scen = build_scenario(n_age=16, a_max=8.0, n_steps=5, gamma=0.2, m0=3.0,
                          s0=lambda a: 1.0 if a < 5.0 else 0.0,
                          i0=lambda a: 0.05 if a < 5.0 else 0.0,
                          theta_level=0.0)
    traj = scen.simulate()
    da = scen.age_grid.da
    I = np.array([da * st.i.values.sum() for st in traj.states])
    S = np.array([da * st.s.values.sum() for st in traj.states])
    assert np.all(np.diff(I) <= 1e-14)
    assert S[-1] == pytest.approx(S[0], rel=1e-12)  # no new infections


def test_positivity_random_scenarios():
    rng = np.random.default_rng(100)
    for _ in range(25):
        n_age = int(rng.integers(8, 25))
        scen = build_scenario(
            n_age=n_age,
            a_max=float(rng.uniform(4.0, 12.0)),
            n_steps=int(rng.integers(1, 12)),
            mu_s=float(rng.uniform(0.0, 0.3)),
            mu_r=float(rng.uniform(0.0, 0.3)),
            mu_i=float(rng.uniform(0.0, 0.5)),
            gamma=float(rng.uniform(0.0, 1.0)),
            beta=float(rng.uniform(0.0, 0.1)),
            xi=float(rng.uniform(0.0, 1.0)),
            m0=float(rng.uniform(0.0, 4.0)),
            psi=float(rng.uniform(0.0, 2.0)),
            s0=float(rng.uniform(0.1, 2.0)),
            i0=float(rng.uniform(0.0, 0.5)),
            r0=float(rng.uniform(0.0, 0.5)),
            theta_level=float(rng.uniform(0.0, 1.0)),
            eta_level=float(rng.uniform(0.0, 1.0)),
            c_level=float(rng.uniform(0.0, 0.2)),
        )
        traj = scen.simulate()
        for st in traj.states:
            assert np.all(st.s.values >= 0.0)
            assert np.all(st.i.values >= 0.0)
            assert np.all(st.r.values >= 0.0)


def mckendrick_error(n_age, mu_fn, horizon=2.0, a_max=8.0):
    """Normalized sup error against the closed-form aging solution."""
    scen = build_scenario(
        n_age=n_age, a_max=a_max,
        n_steps=int(round(horizon / (a_max / n_age))),
        mu_s=mu_fn,
        s0=lambda a: smooth_bump(np.array((a - 2.5) / 1.5))[()],
    )
    traj = scen.simulate()
    grid = scen.age_grid
    t_end = scen.time_grid.t_end
    a = grid.nodes
    s0_fn = lambda x: smooth_bump(np.array((x - 2.5) / 1.5))[()]

    from scipy.integrate import quad
    exact = np.zeros(grid.n_age)
    for j, aj in enumerate(a):
        born = aj - t_end
        if born < 0:
            continue
        integral = quad(mu_fn, born, aj)[0]
        exact[j] = s0_fn(born) * np.exp(-integral)

    err = np.max(np.abs(traj.states[-1].s.values - exact))
    return err / np.max(np.abs(exact))


def test_mckendrick_age_dependent_convergence_order():
    mu_fn = lambda age: 0.05 + 0.02 * age
    dts, errs = [], []
    for n_age in (32, 64, 128):
        errs.append(mckendrick_error(n_age, mu_fn))
        dts.append(8.0 / n_age)
    assert errs[0] < 0.05
    assert fit_order(dts, errs) >= 0.9


def test_grid_refinement_aggregate_consistency():
    # controlled run: aggregates at (da, da/2) differ by O(da)
    def run(n_age):
        scen = build_scenario(
            n_age=n_age, a_max=8.0, n_steps=n_age,  # horizon 8 years
            mu_s=0.01, mu_i=0.1, gamma=0.6, beta=0.05, m0=2.0, xi=0.1,
            s0=lambda a: 1.0 + 0.2 * np.cos(a), i0=0.01,
            theta_level=0.7, eta_level=0.8, c_level=0.05,
            production=ee.LinearProduction(a_k=0.04, a_l=1.0), K0=50.0,
        )
        traj = scen.simulate()
        return np.array([traj.N[-1], traj.Xi[-1], traj.K[-1]])

    coarse, mid, fine = run(32), run(64), run(128)
    d1 = np.abs(mid - coarse)
    d2 = np.abs(fine - mid)
    assert np.all(d2 <= 0.75 * d1 + 1e-12)


def test_simulate_extinction_carries_step_index():
    # catastrophic mortality pushes N below the extinction floor
    scen = build_scenario(n_age=8, n_steps=6, mu_s=50.0, mu_r=50.0,
                          s0=1.0, i0=0.0, m0=1.0)
    with pytest.raises(ee.ExtinctPopulation) as exc_info:
        scen.simulate()
    assert exc_info.value.step_index == 1


def test_simulate_overflow_raises_nonfinite():
    scen = build_scenario(n_age=8, n_steps=6, K0=1e308,
                          production=ee.LinearProduction(a_k=200.0, a_l=0.0))
    with np.errstate(over="ignore"):
        with pytest.raises(ee.NonFiniteState) as exc_info:
            scen.simulate()
    assert exc_info.value.step_index == 0


def test_trajectory_aggregates_recomputable():
    rng = np.random.default_rng(31)
    scen = build_scenario(
        n_age=16, n_steps=10, mu_s=0.02, mu_r=0.02, mu_i=0.15, gamma=0.4,
        beta=0.04, xi=0.3, m0=2.0, psi=1.0, i0=0.05,
        production=ee.LinearProduction(a_k=0.03, a_l=1.0),
        congestion=ee.LinearCongestion(d1=0.2), K0=60.0, c_level=0.1,
    )
    from util import random_block_policy
    policy = random_block_policy(scen, rng, n_time_blocks=5, n_age_blocks=2,
                                 c_range=(0.0, 0.2))
    traj = scen.simulate(policy)
    da = scen.age_grid.da
    for k in range(scen.time_grid.n_steps + 1):
        st = traj.states[k]
        c_t, th_t, et_t = policy.at(k)
        assert traj.N[k] == pytest.approx(st.total_population(), rel=1e-10)
        assert traj.Xi[k] == pytest.approx(ee.critical_load(st, scen.epi), rel=1e-10)
        lam = ee.force_of_infection(st, th_t, et_t, scen.epi).values
        assert np.allclose(traj.lam[k], lam, rtol=1e-10)
        assert traj.L[k] == pytest.approx(ee.labor_supply(st, th_t, scen.econ),
                                          rel=1e-10)
        assert traj.Y[k] == pytest.approx(scen.econ.F(traj.K[k], traj.L[k]),
                                          rel=1e-10)
        assert traj.C[k] == pytest.approx(ee.consumption_total(st, c_t), rel=1e-10)
        assert traj.D_cost[k] == pytest.approx(
            ee.testing_cost(st, et_t, scen.econ), rel=1e-10, abs=1e-14)
        assert traj.deaths_flow[k] == pytest.approx(
            ee.u3_deaths(st, scen.epi), rel=1e-10, abs=1e-14)


def test_policy_box_validation():
    grid = ee.AgeGrid(a_max=8.0, n_age=8)
    tg = ee.TimeGrid.aligned(grid, n_steps=2)
    with pytest.raises(ee.ConfigurationError):
        ee.PolicyField.constant(grid, tg, c=-1.0)
    with pytest.raises(ee.ConfigurationError):
        ee.PolicyField.constant(grid, tg, theta=1.4)


def test_simulate_rejects_mismatched_grids():
    scen = build_scenario(n_age=16, n_steps=4)
    short_tg = ee.TimeGrid.aligned(scen.age_grid, n_steps=2)
    short_policy = ee.PolicyField.constant(scen.age_grid, short_tg)
    with pytest.raises(ee.ConfigurationError):
        ee.simulate(scen.initial, scen.K0, short_policy, scen.epi, scen.econ,
                    scen.time_grid)
    misaligned = ee.TimeGrid(t0=0.0, dt=0.3, n_steps=4)
    with pytest.raises(ee.ConfigurationError):
        ee.simulate(scen.initial, scen.K0, scen.policy, scen.epi, scen.econ,
                    misaligned)
