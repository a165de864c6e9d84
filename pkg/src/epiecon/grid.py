"""Age/time discretization, sampled fields, and midpoint quadrature.

Everything downstream shares this substrate: a uniform cell-centered age
mesh, a time mesh locked to the same spacing (so aging is an exact index
shift), 1-d/2-d sampled fields, and the midpoint rule for every age
integral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def _as_readonly(values, shape, what):
    arr = np.array(values, dtype=np.float64)
    if arr.shape != shape:
        raise ConfigurationError(f"{what}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{what}: values must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class AgeGrid:
    """Uniform cell-centered mesh on [0, a_max] with n_age cells.

    Nodes are the cell centers a_j = (j + 1/2) * da.  Sampling at cell
    centers keeps weighted integrands away from a = 0 and a = a_max where
    the survival weights degenerate.
    """

    a_max: float
    n_age: int

    def __post_init__(self):
        if not self.a_max > 0.0:
            raise ConfigurationError(f"a_max must be > 0, got {self.a_max}")
        if int(self.n_age) != self.n_age or self.n_age < 8:
            raise ConfigurationError(f"n_age must be an integer >= 8, got {self.n_age}")

    @property
    def da(self) -> float:
        return self.a_max / self.n_age

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_age) + 0.5) * self.da


@dataclass(frozen=True)
class TimeGrid:
    """Time mesh t_k = t0 + k * dt for k = 0..n_steps.

    The simulation requires dt equal to the companion age grid's da
    (cohort alignment); build with :meth:`aligned` to guarantee it.
    """

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigurationError(f"n_steps must be an integer >= 0, got {self.n_steps}")

    @classmethod
    def aligned(cls, age_grid: AgeGrid, t0: float = 0.0, n_steps: int = 0) -> "TimeGrid":
        return cls(t0=t0, dt=age_grid.da, n_steps=n_steps)

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class Field1D:
    """Real samples per age cell, with the grid they live on."""

    grid: AgeGrid
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        arr = _as_readonly(self.values, (self.grid.n_age,), "Field1D")
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, grid: AgeGrid, value: float, units: str = "") -> "Field1D":
        return cls(grid, np.full(grid.n_age, float(value)), units)

    @classmethod
    def from_function(cls, grid: AgeGrid, fn, units: str = "") -> "Field1D":
        return cls(grid, np.asarray([fn(a) for a in grid.nodes], dtype=np.float64), units)


@dataclass(frozen=True, eq=False)
class Field2D:
    """Samples indexed (time node, age cell); shape (n_steps + 1, n_age)."""

    age_grid: AgeGrid
    time_grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        shape = (self.time_grid.n_steps + 1, self.age_grid.n_age)
        arr = _as_readonly(self.values, shape, "Field2D")
        object.__setattr__(self, "values", arr)


def integrate(f: Field1D) -> float:
    """Midpoint quadrature of a sampled field over [0, a_max].

    Exact for cell-wise-constant fields and, up to roundoff, for fields
    linear in age.
    """
    return f.grid.da * float(f.values.sum())


def integrate_kernel(m: np.ndarray, f: Field1D) -> Field1D:
    """Apply an age-by-age kernel: out(a_j) = da * sum_k m(a_j, a_k) f(a_k)."""
    m = np.asarray(m, dtype=np.float64)
    n = f.grid.n_age
    if m.shape != (n, n):
        raise ConfigurationError(f"kernel shape {m.shape} does not match grid ({n}, {n})")
    return Field1D(f.grid, f.grid.da * (m @ f.values))


def constant_kernel(grid: AgeGrid, m0: float) -> np.ndarray:
    return np.full((grid.n_age, grid.n_age), float(m0))


def separable_kernel(grid: AgeGrid, m0: float, shape_values: np.ndarray) -> np.ndarray:
    """Kernel m(a, tau) = m0 * g(a) * g(tau) sampled on node pairs."""
    g = np.asarray(shape_values, dtype=np.float64)
    if g.shape != (grid.n_age,):
        raise ConfigurationError("separable kernel shape profile must have one value per cell")
    return float(m0) * np.outer(g, g)


def table_kernel(grid: AgeGrid, values) -> np.ndarray:
    n = grid.n_age
    return np.array(_as_readonly(values, (n, n), "contact kernel table"))


def expand_blocks(block_values: np.ndarray, time_grid: TimeGrid, age_grid: AgeGrid) -> np.ndarray:
    """Expand (n_time_blocks, n_age_blocks) values to a (n_steps + 1, n_age) surface.

    Blocks must divide both meshes evenly.  The terminal time node reuses
    the last time block.
    """
    bv = np.asarray(block_values, dtype=np.float64)
    ntb, nab = bv.shape
    n_steps, n_age = time_grid.n_steps, age_grid.n_age
    if n_age % nab != 0:
        raise ConfigurationError(f"{nab} age blocks do not divide n_age = {n_age}")
    if n_steps % ntb != 0:
        raise ConfigurationError(f"{ntb} time blocks do not divide n_steps = {n_steps}")
    rows = np.repeat(bv, n_age // nab, axis=1)
    if n_steps == 0:
        return rows[-1:].copy()
    full = np.repeat(rows, n_steps // ntb, axis=0)
    return np.vstack([full, full[-1:]])
