"""Time integration of the grid flows with diagnostics, snapshots and terminal statuses."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import FinslerStructure
from .grid import FlowState, SphereBundleGrid, sample_structure
from .rhs import (DiagnosticsRecord, FlowDegeneracyError, background_connection, deturck_rhs,
                  diagnostics, node_geometry, ricci_rhs)

log = logging.getLogger(__name__)

KINDS = ("ricci", "deturck")
STATUSES = ("completed", "degeneracy", "integrability", "non_finite")


class ConfigError(ValueError):
    """Invalid flow configuration."""


@dataclass
class Tolerances:
    integrability: float = 1e-7
    min_eig: float = 1e-6


@dataclass
class FlowConfig:
    """Flow run parameters. ``background`` only matters for DeTurck runs (default: initial data)."""

    kind: str = "ricci"
    dt: float = 1e-3
    t_end: float = 0.1
    Nx: int = 32
    Ntheta: int = 32
    background: FinslerStructure | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    diagnostics_every: int = 10
    snapshot_every: int = 0  # 0 keeps the initial and final states only
    cfl_guard: bool = True
    # keep only fiber modes |m| <= fiber_band in the right-hand side (None: all)
    fiber_band: int | None = None

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be positive")
        if self.diagnostics_every < 1:
            raise ConfigError("diagnostics_every must be at least 1")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be non-negative")
        if self.fiber_band is not None and not 0 <= self.fiber_band <= self.Ntheta // 2:
            raise ConfigError(f"fiber_band must lie in [0, Ntheta/2], got {self.fiber_band}")
        try:
            SphereBundleGrid(self.Nx, self.Ntheta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def grid(self) -> SphereBundleGrid:
        return SphereBundleGrid(self.Nx, self.Ntheta)

    @property
    def nsteps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


class FlowSystem:
    """Right-hand side of one flow kind on one grid.

    For DeTurck runs the background connection is sampled once, with the
    same discretization as the evolving data, and the last stage's DeTurck
    field is kept in ``last_xi``. With ``fiber_band`` set, the right-hand side
    is projected onto fiber modes ``|m| <= fiber_band``.
    """

    def __init__(self, kind: str, grid: SphereBundleGrid, background_W: np.ndarray | None = None,
                 min_eig: float = 0.0, fiber_band: int | None = None):
        if kind not in KINDS:
            raise ConfigError(f"unknown flow kind {kind!r}")
        self.kind = kind
        self.grid = grid
        self.min_eig = min_eig
        self.fiber_band = fiber_band
        self.Gamma_bar = None
        if kind == "deturck":
            if background_W is None:
                raise ConfigError("DeTurck flow needs a background")
            self.Gamma_bar = background_connection(background_W, grid)
        self.last_xi = None

    def __call__(self, W: np.ndarray) -> np.ndarray:
        spec = self.grid.spectral
        geo = node_geometry(W, spec, connection=self.kind == "deturck", check=False)
        lo = geo.eig_low
        if not np.all(lo > self.min_eig):
            bad = np.unravel_index(np.nanargmin(np.where(np.isfinite(lo), lo, -np.inf)), lo.shape)
            raise FlowDegeneracyError(
                f"fundamental tensor eigenvalue {lo[bad]:.6g} below {self.min_eig:g} at node "
                f"{tuple(int(i) for i in bad)}", node=bad, eigenvalue=float(lo[bad]))
        state = FlowState(0.0, W, self.grid)
        if self.kind == "ricci":
            out = ricci_rhs(state, geo)
        else:
            out, self.last_xi = deturck_rhs(state, self.Gamma_bar, geo, return_xi=True)
        if self.fiber_band is not None:
            out = spec.band_limit(out, self.fiber_band)
        return out


def rk4_step(f: Callable, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order step of the autonomous system ``y' = f(y)``."""
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step(state: FlowState, kind: str, background: FinslerStructure | np.ndarray | None, dt: float,
         system: FlowSystem | None = None) -> FlowState:
    """Advance ``state`` by ``dt``; ``background`` is a structure or a grid sample of ``F^2``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if system is None:
        bw = None
        if kind == "deturck":
            if background is None:
                raise ConfigError("DeTurck flow needs a background")
            bw = background if isinstance(background, np.ndarray) else sample_structure(background, state.grid).W
        system = FlowSystem(kind, state.grid, bw)
    return FlowState(state.t + dt, rk4_step(system, state.W, dt), state.grid)


def cfl_limit(state: FlowState) -> float:
    """Largest admissible dt: ``0.25 h^2 min_eig(g) / max |g^ij|`` over nodes."""
    geo = node_geometry(state.W, state.grid.spectral, check=False)
    h = 2 * np.pi / state.grid.Nx
    ginv = geo.ginv
    lo = float(np.min(geo.eig_low))
    if lo <= 0:
        return 0.0
    return 0.25 * h * h * lo / float(np.max(np.abs(ginv)))


@dataclass
class FlowResult:
    status: str
    config: FlowConfig
    records: list
    snapshots: list
    state: FlowState
    message: str = ""
    cfl: float = float("nan")

    @property
    def t_last(self) -> float:
        return self.state.t

    @property
    def ok(self) -> bool:
        return self.status == "completed"


def run_flow(config: FlowConfig, F0: FinslerStructure | FlowState,
             on_step: Callable[[FlowState, FlowSystem], None] | None = None) -> FlowResult:
    """Integrate the configured flow from ``F0`` (a structure or an initial grid state).

    The run ends at ``t_end`` or at the first violated hypothesis, with the
    status naming the reason; ``state`` is the last accepted state.
    ``on_step(state, system)`` is called on every accepted state (including
    the initial one) after its right-hand side has been evaluated, so a
    DeTurck run exposes the field ``system.last_xi`` at that time.
    """
    config.validate()
    grid = config.grid
    state = F0.copy() if isinstance(F0, FlowState) else sample_structure(F0, grid)
    if state.grid != grid:
        raise ConfigError("initial state grid differs from the configured grid")
    tol = config.tolerances
    bw = None
    if config.kind == "deturck":
        bw = state.W if config.background is None else sample_structure(config.background, grid).W
    system = FlowSystem(config.kind, grid, bw, min_eig=tol.min_eig, fiber_band=config.fiber_band)

    records, snapshots = [], [state.copy()]
    cfl = cfl_limit(state)
    log.info("flow %s on %dx%dx%d, dt=%g, CFL guard %g", config.kind, grid.Nx, grid.Nx, grid.Ntheta,
             config.dt, cfl)
    if config.cfl_guard and config.dt > cfl:
        raise ConfigError(f"dt={config.dt:g} exceeds the CFL guard {cfl:.6g}")

    def finish(status, message=""):
        if snapshots[-1].t != state.t:
            snapshots.append(state.copy())
        return FlowResult(status, config, records, snapshots, state, message, cfl)

    def check(rec: DiagnosticsRecord):
        if not (rec.parabolicity_margin > 0 and rec.min_metric_eig > tol.min_eig):
            return "degeneracy", f"min eigenvalue {rec.min_metric_eig:.6g} at t={rec.t:.6g}"
        if not rec.integrability_residual < tol.integrability:
            return "integrability", f"integrability residual {rec.integrability_residual:.3e} at t={rec.t:.6g}"
        return None

    rec = diagnostics(state, 0.0)
    records.append(rec)
    bad = check(rec)
    if bad:
        return finish(*bad)

    n = config.nsteps
    dt = config.t_end / n
    for k in range(1, n + 1):
        try:
            if on_step is not None:
                k1 = system(state.W)
                on_step(state, system)
                f = _first_stage_cached(system, state.W, k1)
                W = rk4_step(f, state.W, dt)
            else:
                W = rk4_step(system, state.W, dt)
        except FlowDegeneracyError as exc:
            return finish("degeneracy", str(exc))
        if not np.all(np.isfinite(W)):
            return finish("non_finite", f"non-finite values at t={state.t + dt:.6g}")
        change = float(np.max(np.abs(W - state.W)))
        state = FlowState(k * dt, W, grid)
        if k % config.diagnostics_every == 0 or k == n:
            rec = diagnostics(state, change)
            records.append(rec)
            bad = check(rec)
            if bad:
                return finish(*bad)
        if config.snapshot_every and k % config.snapshot_every == 0:
            snapshots.append(state.copy())
    if on_step is not None:
        try:
            system(state.W)
        except FlowDegeneracyError as exc:
            return finish("degeneracy", str(exc))
        on_step(state, system)
    return finish("completed")


def _first_stage_cached(system, W0, k1):
    """Wrap ``system`` so the first call at ``W0`` reuses the known value ``k1``."""
    used = [False]

    def f(W):
        if not used[0] and W is W0:
            used[0] = True
            return k1
        return system(W)

    return f
