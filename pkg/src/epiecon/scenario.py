"""Scenario bundle: grids, parameters, initial data, and default policy."""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import epi, objectives
from .economy import EconParams
from .grid import AgeGrid, TimeGrid
from .hamiltonian import ControlSearchGrid
from .hilbert import HilbertSpace


@dataclass
class Scenario:
    """Everything needed to simulate and score one policy problem."""

    age_grid: AgeGrid
    time_grid: TimeGrid
    epi: epi.EpiParams
    econ: EconParams
    obj: objectives.ObjectiveParams
    initial: epi.EpiState
    K0: float
    policy: epi.PolicyField
    search: ControlSearchGrid
    space: HilbertSpace
    n_floor_rel: float = 1e-9

    def simulate(self, policy: epi.PolicyField | None = None) -> epi.Trajectory:
        if policy is None:
            policy = self.policy
        return epi.simulate(self.initial, self.K0, policy, self.epi, self.econ,
                            self.time_grid, self.n_floor_rel)

    def evaluate(self, policy: epi.PolicyField | None = None,
                 traj: epi.Trajectory | None = None) -> objectives.EvalReport:
        if policy is None:
            policy = self.policy
        if traj is None:
            traj = self.simulate(policy)
        return objectives.evaluate(traj, policy, self.epi, self.econ, self.obj)

    def with_policy(self, policy: epi.PolicyField) -> "Scenario":
        return replace(self, policy=policy)

    @property
    def c_max(self) -> float:
        return self.search.c_max
