"""Survival-weighted state space: inner products, generator, and adjoint.

The state (s, i, r) lives in a weighted L2 space where the susceptible and
recovered components are weighted by the reciprocal squared survival
probabilities 1/pi_S^2 and 1/pi_R^2 (no weight on the infected component).
The transport-plus-reaction generator A and its adjoint A* are discretized
with mirrored upwind/downwind stencils so that discrete adjointness holds
up to O(da) without assembling matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import AgeGrid

DEFAULT_WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class SurvivalWeights:
    """Sampled survival probabilities pi_S, pi_R with a positivity floor.

    pi(a_j) = max(exp(-int_0^{a_j} mu), floor), the integral accumulated by
    the midpoint rule.  The floor keeps 1/pi^2 finite where the mortality
    integral diverges; it perturbs weighted norms only for cohorts that are
    almost surely dead.
    """

    grid: AgeGrid
    pi_S: np.ndarray
    pi_R: np.ndarray
    floor: float

    @classmethod
    def from_mortality(cls, grid: AgeGrid, mu_S: np.ndarray, mu_R: np.ndarray,
                       floor: float = DEFAULT_WEIGHT_FLOOR) -> "SurvivalWeights":
        if not floor > 0.0:
            raise ConfigurationError(f"weight floor must be > 0, got {floor}")
        return cls(grid, _survival(grid, mu_S, floor), _survival(grid, mu_R, floor), floor)


def _survival(grid: AgeGrid, mu: np.ndarray, floor: float) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (grid.n_age,):
        raise ConfigurationError("mortality field does not match the grid")
    if np.any(mu < 0.0):
        raise ConfigurationError("mortality rates must be nonnegative")
    # cumulative midpoint integral up to node a_j: full cells below j plus half of cell j
    cum = grid.da * np.cumsum(mu) - 0.5 * grid.da * mu
    return np.maximum(np.exp(-cum), floor)


@dataclass(frozen=True, eq=False)
class CostateField:
    """Sampled costate (p1, p2, p3, Q) paired against (s, i, r, K)."""

    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    Q: float

    def triple(self):
        return (self.p1, self.p2, self.p3)

    def boundary_report(self, weights: SurvivalWeights) -> dict:
        """Boundary magnitudes that vanish for costates in the adjoint domain."""
        return {
            "p1_over_piS_at_amax": float(abs(self.p1[-1]) / weights.pi_S[-1]),
            "p2_at_amax": float(abs(self.p2[-1])),
            "p3_over_piR_at_amax": float(abs(self.p3[-1]) / weights.pi_R[-1]),
            "p1_at_zero": float(abs(self.p1[0])),
        }


class HilbertSpace:
    """Weighted space for (s, i, r) triples plus the transport generator.

    Bundles the grid, the demographic coefficients entering the linear
    dynamics (mu_S, mu_R, gamma, beta) and the survival weights, and
    provides the weighted inner product, the discrete generator A, its
    adjoint A*, and the positivity diagnostics.
    """

    def __init__(self, grid: AgeGrid, mu_S, mu_R, gamma, beta,
                 floor: float = DEFAULT_WEIGHT_FLOOR):
        self.grid = grid
        self.mu_S = np.asarray(mu_S, dtype=np.float64)
        self.mu_R = np.asarray(mu_R, dtype=np.float64)
        self.gamma = np.asarray(gamma, dtype=np.float64)
        self.beta = np.asarray(beta, dtype=np.float64)
        for name, arr in (("mu_S", self.mu_S), ("mu_R", self.mu_R),
                          ("gamma", self.gamma), ("beta", self.beta)):
            if arr.shape != (grid.n_age,):
                raise ConfigurationError(f"{name} does not match the grid")
        self.weights = SurvivalWeights.from_mortality(grid, self.mu_S, self.mu_R, floor)
        # reciprocal squared weights used by every weighted product
        self.w1 = 1.0 / self.weights.pi_S**2
        self.w3 = 1.0 / self.weights.pi_R**2

    # ------------------------------------------------------------------
    # inner products and norms
    # ------------------------------------------------------------------

    def inner(self, h, g) -> float:
        """Weighted inner product <h, g>_H."""
        h1, h2, h3 = h
        g1, g2, g3 = g
        da = self.grid.da
        return float(da * ((h1 * g1 * self.w1).sum()
                           + (h2 * g2).sum()
                           + (h3 * g3 * self.w3).sum()))

    def norm(self, h) -> float:
        return float(np.sqrt(max(self.inner(h, h), 0.0)))

    # ------------------------------------------------------------------
    # generator and adjoint
    # ------------------------------------------------------------------

    def apply_A(self, h):
        """Discrete generator: transport -d/da with reaction and birth fold.

        Upwind differencing; the birth boundary value s(0) = int beta n da
        enters the first cell of the susceptible component, zero inflow for
        the other components.
        """
        h1, h2, h3 = h
        da = self.grid.da
        births = da * (self.beta * (h1 + h2 + h3)).sum()
        out1 = -_upwind(h1, births, da) - self.mu_S * h1
        out2 = -_upwind(h2, 0.0, da) - self.gamma * h2
        out3 = self.gamma * h2 - _upwind(h3, 0.0, da) - self.mu_R * h3
        return (out1, out2, out3)

    def apply_A_star(self, p):
        """Discrete adjoint: +d/da downwind with mirrored reaction terms.

        The downwind ghost value zero at a_max encodes the adjoint-domain
        boundary conditions (p1/pi_S, p2, p3/pi_R vanish at a_max) and the
        cohort exit flux of the forward dynamics.
        """
        p1, p2, p3 = p
        da = self.grid.da
        out1 = _downwind(p1, da) + self.mu_S * p1
        out2 = _downwind(p2, da) - self.gamma * p2 + self.gamma * self.w3 * p3
        out3 = _downwind(p3, da) + self.mu_R * p3
        return (out1, out2, out3)

    # ------------------------------------------------------------------
    # constraint geometry
    # ------------------------------------------------------------------

    def cone_distance(self, h) -> float:
        """Unweighted L2 norm of the negative parts; zero iff h is in the cone."""
        da = self.grid.da
        total = 0.0
        for comp in h:
            neg = np.minimum(comp, 0.0)
            total += float((neg * neg).sum())
        return float(np.sqrt(da * total))

    def halfspace_margin(self, h) -> float:
        """Weighted pairing <h, 1>_H; nonnegative on the enlarged halfspace."""
        ones = np.ones(self.grid.n_age)
        return self.inner(h, (ones, ones, ones))


def _upwind(values: np.ndarray, inflow: float, da: float) -> np.ndarray:
    shifted = np.empty_like(values)
    shifted[0] = inflow
    shifted[1:] = values[:-1]
    return (values - shifted) / da


def _downwind(values: np.ndarray, da: float) -> np.ndarray:
    shifted = np.empty_like(values)
    shifted[-1] = 0.0
    shifted[:-1] = values[1:]
    return (shifted - values) / da
