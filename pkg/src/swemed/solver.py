"""Operator-split finite-volume solver on a uniform 1-D grid.

The transport part is advanced with an explicit SSP Runge-Kutta scheme on a
fluctuation discretisation; the source part by implicit Euler, solved cell by
cell with Newton's method.  Heavy loops live in :mod:`swemed._kernels`.
"""

from __future__ import annotations

import enum
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .model import CM_MAX, SourceMode, velocity_profile
from .params import Parameters

log = logging.getLogger(__name__)

N_GHOST = 2
PROBE_ZETA = np.linspace(0.0, 1.0, 51)


class Boundary(enum.Enum):
    OPEN = "Open"
    PERIODIC = "Periodic"


class Splitting(enum.Enum):
    LIE = "Lie"
    STRANG = "Strang"


class SolverError(RuntimeError):
    """Numerical failure; ``cell`` is the interior index and ``t`` the time, when known."""

    def __init__(self, msg: str, cell: int | None = None, t: float | None = None):
        where = []
        if t is not None:
            where.append(f"t={t:.6g}")
        if cell is not None:
            where.append(f"cell={cell}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.cell = cell
        self.t = t


class AdmissibilityError(SolverError):
    pass


class NewtonDivergence(SolverError):
    pass


def set_threads_from_env() -> None:
    """Honour ``SWEMED1_THREADS`` as a cap on numba worker threads.

    Also silences numba's notice about an outdated TBB install; it falls
    back to another threading layer on its own.
    """
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    raw = os.environ.get("SWEMED1_THREADS")
    if not raw:
        return
    import numba

    n = int(raw)
    if n < 1:
        raise ValueError(f"SWEMED1_THREADS must be >= 1, got {raw!r}")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


@dataclass(frozen=True)
class Grid:
    x_left: float
    x_right: float
    n_cells: int
    boundary: Boundary = Boundary.OPEN

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValueError(f"n_cells: must be >= 4, got {self.n_cells}")
        if not self.x_right > self.x_left:
            raise ValueError(f"x_right: must exceed x_left, got [{self.x_left}, {self.x_right}]")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def dx(self) -> float:
        return (self.x_right - self.x_left) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def interior(self) -> slice:
        return slice(N_GHOST, N_GHOST + self.n_cells)


@dataclass
class Field:
    """Conservative states on interior and ghost cells, shape ``(n + 4, 5)``."""

    grid: Grid
    W: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=float)
        if self.W.shape != (self.grid.n_cells + 2 * N_GHOST, 5):
            raise ValueError(f"W must have shape {(self.grid.n_cells + 2 * N_GHOST, 5)}, got {self.W.shape}")

    @classmethod
    def from_interior(cls, grid: Grid, interior, t: float = 0.0) -> "Field":
        W = np.zeros((grid.n_cells + 2 * N_GHOST, 5))
        W[grid.interior] = interior
        f = cls(grid, W, t)
        f.fill_ghosts()
        return f

    @property
    def interior(self) -> np.ndarray:
        return self.W[self.grid.interior]

    def fill_ghosts(self) -> None:
        K.fill_ghosts(self.W, N_GHOST, self.grid.boundary is Boundary.PERIODIC)

    def copy(self) -> "Field":
        return Field(self.grid, self.W.copy(), self.t)

    def primitives(self) -> dict[str, np.ndarray]:
        w = self.interior
        h = w[:, 0]
        return {
            "h": h.copy(),
            "u_m": w[:, 1] / h,
            "alpha_1": w[:, 2] / h,
            "c_m": w[:, 3] / h,
            "h_b": w[:, 4].copy(),
        }

    def check_admissible(self, p: Parameters) -> None:
        w = self.interior
        bad = np.flatnonzero(~np.all(np.isfinite(w), axis=1) | ~(w[:, 0] >= p.h_min))
        if bad.size:
            raise AdmissibilityError(f"inadmissible state {w[bad[0]]}", cell=int(bad[0]), t=self.t)


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-12
    max_iter: int = 50

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"newton.tol: must be > 0, got {self.tol!r}")
        if self.max_iter < 1:
            raise ValueError(f"newton.max_iter: must be >= 1, got {self.max_iter!r}")


@dataclass(frozen=True)
class RKTableau:
    """Explicit Runge-Kutta method in Shu-Osher form."""

    name: str
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        n = self.beta.shape[0]
        if self.alpha.shape != (n, n) or np.any(np.triu(self.alpha, 1) != 0):
            raise ValueError(f"alpha must be lower triangular with shape {(n, n)}")
        if not np.allclose(self.alpha.sum(axis=1), 1.0, rtol=0, atol=1e-14):
            raise ValueError("rows of alpha must sum to one")


SSPRK34 = RKTableau("SSPRK(4,3)", K.SSPRK34_ALPHA, K.SSPRK34_BETA)
FORWARD_EULER = RKTableau("Euler", np.array([[1.0]]), np.array([1.0]))


@dataclass
class Diagnostics:
    t: float
    eq1: np.ndarray
    eq1_max: float
    total_surface: float
    total_sediment: float
    total_momentum: float
    probe_x: float
    probe_profile: np.ndarray


def eq1_profile(f: Field) -> np.ndarray:
    w = f.interior
    return (np.abs(w[:, 1]) + np.abs(w[:, 2])) / w[:, 0]


def _midpoint(values: np.ndarray, dx: float) -> float:
    # fixed sequential order so sums do not depend on thread count
    return math.fsum(values.tolist()) * dx


def totals(f: Field, p: Parameters) -> tuple[float, float, float]:
    """Midpoint-rule integrals of ``h + h_b``, ``hc_m + (1-psi) h_b`` and ``hu_m``."""
    w = f.interior
    dx = f.grid.dx
    return (
        _midpoint(w[:, 0] + w[:, 4], dx),
        _midpoint(w[:, 3] + (1.0 - p.psi) * w[:, 4], dx),
        _midpoint(w[:, 1], dx),
    )


def diagnostics(f: Field, p: Parameters, probe_x: float = 0.0) -> Diagnostics:
    eq1 = eq1_profile(f)
    surf, sed, mom = totals(f, p)
    centers = f.grid.centers
    i = int(np.argmin(np.abs(centers - probe_x)))
    w = f.interior[i]
    prof = velocity_profile(w[1] / w[0], w[2] / w[0], PROBE_ZETA)
    return Diagnostics(f.t, eq1, float(eq1.max()), surf, sed, mom, float(centers[i]), prof)


def init_relaxation_scenario(n_cells: int, x_left: float = -1.0, x_right: float = 2.0,
                        boundary: Boundary = Boundary.OPEN) -> Field:
    """Dam-break-like start: deeper, sediment-laden water left of ``x = 0``."""
    grid = Grid(x_left, x_right, n_cells, boundary)
    x = grid.centers
    if np.any(x == 0.0):
        raise ValueError("a cell centre lies exactly on x = 0; choose another n_cells")
    left = x < 0.0
    h = np.where(left, 1.5, 1.0)
    c = np.where(left, 0.01, 0.0)
    w = np.column_stack([h, 0.05 * h, -0.01 * h, c * h, np.zeros_like(h)])
    return Field.from_interior(grid, w)


class _Workspace:
    """Scratch arrays reused across steps for one grid size and tableau."""

    def __init__(self, n_total: int, n_stages: int):
        self.stages = np.empty((n_stages + 1, n_total, 5))
        self.rhs = np.zeros((n_total, 5))
        self.radius = np.zeros(n_total)
        self.fm = np.zeros((n_total, 5))
        self.fp = np.zeros((n_total, 5))
        self.mats = np.zeros((n_total, 5, 5))
        self.vecs = np.zeros((n_total, 6, 5))
        self.iters = np.zeros(n_total - 2 * N_GHOST, dtype=np.int64)
        self.clamp = np.zeros(n_total - 2 * N_GHOST)


_WORKSPACES: dict[tuple[int, int], _Workspace] = {}


def _workspace(f: Field, tableau: RKTableau) -> _Workspace:
    key = (f.W.shape[0], tableau.beta.shape[0])
    ws = _WORKSPACES.get(key)
    if ws is None:
        ws = _WORKSPACES[key] = _Workspace(*key)
    return ws


def max_wave_speed(f: Field, p: Parameters) -> float:
    """Largest spectral radius of ``A`` over the interior cells.

    As a side effect the workspace holds the radii of every cell the next
    transport stage reads, which :func:`run` reuses.
    """
    f.check_admissible(p)
    f.fill_ghosts()
    ws = _workspace(f, SSPRK34)
    K.cell_radii(f.W, p.kernel, N_GHOST - 1, N_GHOST + f.grid.n_cells + 1, ws.radius, ws.mats)
    return float(ws.radius[f.grid.interior].max())


def cfl_dt(f: Field, p: Parameters, cfl: float) -> float:
    """Largest stable step ``cfl * dx / max spectral radius of A``."""
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl: must lie in (0, 1], got {cfl!r}")
    speed = max_wave_speed(f, p)
    if not math.isfinite(speed):
        raise SolverError("non-finite wave speed", t=f.t)
    if speed == 0.0:
        return math.inf
    return cfl * f.grid.dx / speed


def transport_step(f: Field, p: Parameters, dt: float, tableau: RKTableau = SSPRK34,
                   _fresh_radii: bool = False) -> Field:
    """Advance ``W_t + A(W) W_x = 0`` by ``dt``; returns a new field."""
    out = f.copy()
    out.fill_ghosts()
    ws = _workspace(out, tableau)
    bad = K.ssp_rk_step(out.W, p.kernel, out.grid.dx, float(dt), N_GHOST,
                        out.grid.boundary is Boundary.PERIODIC,
                        tableau.alpha, tableau.beta, ws.stages, ws.rhs, ws.radius, ws.fm, ws.fp, ws.mats,
                        _fresh_radii and tableau.beta.shape[0] == SSPRK34.beta.shape[0])
    if bad >= 0:
        raise AdmissibilityError("depth fell below h_min during transport", cell=int(bad), t=f.t)
    out.t = f.t + dt
    return out


def source_step(f: Field, p: Parameters, dt: float, newton: NewtonSettings = NewtonSettings(),
                mode: SourceMode = SourceMode.FULL) -> Field:
    """Implicit Euler on ``W_t = S(W)`` in every interior cell; returns a new field."""
    out = f.copy()
    ws = _workspace(out, SSPRK34)
    K.source_step(out.W, p.kernel, float(dt), N_GHOST, int(mode), newton.tol, newton.max_iter,
                  CM_MAX, ws.iters, ws.clamp, ws.vecs, ws.mats)
    failed = np.flatnonzero(ws.iters < 0)
    if failed.size:
        raise NewtonDivergence(f"Newton did not converge in {newton.max_iter} iterations",
                               cell=int(failed[0]), t=f.t)
    clamped = np.flatnonzero(ws.clamp > 0)
    if clamped.size:
        log.warning("c_m clamped into [0, 1) in %d cells at t=%.6g (largest correction %.3e)",
                    clamped.size, f.t, ws.clamp.max())
    out.fill_ghosts()
    out.t = f.t + dt
    return out


StepFn = Callable[[Field, float], Field]


def split_step(f: Field, dt: float, transport: StepFn, source: StepFn,
               splitting: Splitting = Splitting.LIE) -> Field:
    """Compose two sub-step maps. Each map must advance ``f.t`` by the step it is given."""
    splitting = Splitting(splitting)
    t0 = f.t
    if splitting is Splitting.LIE:
        out = source(transport(f, dt), dt)
    else:
        out = source(transport(source(f, 0.5 * dt), dt), 0.5 * dt)
    out.t = t0 + dt
    return out


def step(f: Field, p: Parameters, dt: float, splitting: Splitting = Splitting.LIE,
         newton: NewtonSettings = NewtonSettings(), transport: bool = True,
         source: bool = True) -> Field:
    """One split step. ``transport=False`` or ``source=False`` freezes that operator."""

    def tr(g, h):
        if transport:
            return transport_step(g, p, h)
        g = g.copy()
        g.t += h
        return g

    def src(g, h):
        if source:
            return source_step(g, p, h, newton)
        g = g.copy()
        g.t += h
        return g

    return split_step(f, dt, tr, src, splitting)


@dataclass
class RunResult:
    snapshots: list[tuple[float, Field]] = field(default_factory=list)
    diagnostics: list[Diagnostics] = field(default_factory=list)
    timeseries: list[Diagnostics] = field(default_factory=list)
    n_steps: int = 0
    final: Field | None = None


def run(f: Field, p: Parameters, t_end: float, *, cfl: float = 0.45,
        splitting: Splitting = Splitting.LIE, newton: NewtonSettings = NewtonSettings(),
        snapshot_times: Sequence[float] = (), timeseries_interval: float | None = None,
        max_steps: int | None = None,
        on_snapshot: Callable[[float, Field, Diagnostics], None] | None = None) -> RunResult:
    """Integrate to ``t_end`` and record snapshots exactly at the requested times.

    The step is clipped so every snapshot (and every time-series sample) is
    hit exactly.  ``max_steps`` stops early, which is useful for fixed-step
    experiments.
    """
    stops = sorted({float(t) for t in snapshot_times if f.t <= t <= t_end})
    samples: list[float] = []
    if timeseries_interval:
        n = int(math.floor((t_end - f.t) / timeseries_interval + 1e-9))
        samples = [f.t + k * timeseries_interval for k in range(n + 1)]
    marks = sorted(set(stops) | set(samples) | {float(t_end)})
    splitting = Splitting(splitting)
    snap_set = set(stops)
    sample_set = set(samples)
    result = RunResult()
    f.check_admissible(p)

    def record(g: Field, t: float) -> None:
        d = None
        if t in snap_set:
            d = diagnostics(g, p)
            result.snapshots.append((t, g.copy()))
            result.diagnostics.append(d)
            if on_snapshot is not None:
                on_snapshot(t, g, d)
        if t in sample_set:
            result.timeseries.append(d if d is not None else diagnostics(g, p))

    mi = 0
    while mi < len(marks) and marks[mi] <= f.t:
        record(f, marks[mi])
        mi += 1
    while mi < len(marks):
        if max_steps is not None and result.n_steps >= max_steps:
            break
        target = marks[mi]
        dt = cfl_dt(f, p, cfl)
        hit = f.t + dt >= target - 1e-12 * max(1.0, abs(target))
        if hit:
            dt = target - f.t
        try:
            if splitting is Splitting.LIE:
                # the wave speeds from cfl_dt are those of the first transport stage
                g = transport_step(f, p, dt, _fresh_radii=True)
                f = source_step(g, p, dt, newton)
                f.t = g.t
            else:
                f = step(f, p, dt, splitting, newton)
        except SolverError as exc:
            raise type(exc)(str(exc).split(" (")[0], cell=exc.cell, t=f.t) from exc
        result.n_steps += 1
        if hit:
            f.t = target
            record(f, target)
            mi += 1
    result.final = f
    return result


def lake_at_rest(grid: Grid, surface: float, bed: Callable[[np.ndarray], np.ndarray]) -> Field:
    """Still water over the bed profile ``bed(x)`` with free surface at ``surface``."""
    hb = np.asarray(bed(grid.centers), dtype=float)
    h = surface - hb
    z = np.zeros_like(h)
    return Field.from_interior(grid, np.column_stack([h, z, z, z, hb]))


def uniform_field(grid: Grid, w: Iterable[float]) -> Field:
    w = np.asarray(list(w), dtype=float)
    return Field.from_interior(grid, np.tile(w, (grid.n_cells, 1)))
