"""Time integration of the collective dynamics, safety monitors, and run metrics.

The loop is synchronous: every agent's control is evaluated on the same
position snapshot, then all positions advance together. Sensing and field
re-solves happen once at the top of a tick; within the tick the fields are
frozen, so integration stages see a fixed control law.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import controller as ctl
from . import harmonic, interaction, world
from .world import ConfigError, Workspace

EULER = "euler"
RK4 = "rk4"

CONVERGED = "converged"
DEADLOCK = "deadlock"
TIMEOUT = "timeout"
COLLISION = "collision"


class SimulationError(RuntimeError):
    """Control evaluation failed mid-run; the log carries a diagnostic event."""


@dataclass
class SimConfig:
    dt: float = 0.01
    t_max: float = 200.0
    integrator: str = RK4
    v_eps: float | None = None      # None: 1e-3 x mean initial goal-control speed
    w_dead: float = 5.0
    collision_tol: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if self.t_max <= self.dt:
            raise ConfigError("horizon must exceed the time step")
        if self.integrator not in (EULER, RK4):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.v_eps is not None and self.v_eps <= 0:
            raise ConfigError("deadlock speed threshold must be positive")


@dataclass
class TrajectoryLog:
    agent_ids: list
    dim: int
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)   # one (L, dim) array per tick
    controls: list = field(default_factory=list)
    sigma_activity: list = field(default_factory=list)
    events: list = field(default_factory=list)
    outcome: str | None = None

    def append(self, t, x, u, sigma):
        if self.times and t <= self.times[-1]:
            raise ValueError("timestamps must be strictly increasing")
        self.times.append(float(t))
        self.positions.append(np.array(x))
        self.controls.append(np.array(u))
        self.sigma_activity.append(np.array(sigma))

    def add_event(self, t, kind, **data):
        self.events.append({"t": float(t), "kind": kind, **data})

    @property
    def n_ticks(self):
        return len(self.times)

    def position_array(self):
        return np.stack(self.positions) if self.positions else np.empty((0, len(self.agent_ids), self.dim))

    def control_array(self):
        return np.stack(self.controls) if self.controls else np.empty((0, len(self.agent_ids), self.dim))

    def agent_positions(self, agent_id):
        i = self.agent_ids.index(agent_id)
        return self.position_array()[:, i, :]

    def agent_speeds(self, agent_id):
        i = self.agent_ids.index(agent_id)
        return np.linalg.norm(self.control_array()[:, i, :], axis=1)

    def write_csv(self, path):
        axes = "xyz"[: self.dim]
        cols = ["t", "agent_id"] + [a for a in axes] + [f"u{a}" for a in axes] + ["sigma_activity"]
        with open(path, "w", encoding="utf-8") as f:
            f.write(",".join(cols) + "\n")
            for k, t in enumerate(self.times):
                for i, aid in enumerate(self.agent_ids):
                    row = [repr(float(t)), str(aid)]
                    row += [repr(float(v)) for v in self.positions[k][i]]
                    row += [repr(float(v)) for v in self.controls[k][i]]
                    row.append(repr(float(self.sigma_activity[k][i])))
                    f.write(",".join(row) + "\n")

    def write_events(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for ev in self.events:
                f.write(json.dumps(ev, sort_keys=True) + "\n")


@dataclass
class MetricsReport:
    kappa_max: dict
    min_pair_clearance: float
    min_obstacle_clearance: float
    path_lengths: dict
    potential_trace: list | None
    potential_rate: list | None

    def to_dict(self):
        return {
            "kappa_max": {str(k): v for k, v in self.kappa_max.items()},
            "min_pair_clearance": self.min_pair_clearance,
            "min_obstacle_clearance": self.min_obstacle_clearance,
            "path_lengths": {str(k): v for k, v in self.path_lengths.items()},
            "potential_trace": self.potential_trace,
            "potential_rate": self.potential_rate,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


# ---------------------------------------------------------------------------
# Runtime assembly
# ---------------------------------------------------------------------------

class Runtime:
    """A scenario instantiated and ready to integrate."""

    def __init__(self, ws: Workspace, bodies, controllers, params, profile,
                 repulsion, success, config: SimConfig):
        self.ws = ws
        self.bodies = list(bodies)
        self.controllers = list(controllers)
        self.params = params
        self.profile = profile
        self.repulsion = repulsion
        self.success = success
        self.config = config
        self.radii = np.array([b.radius for b in self.bodies], float)
        self.reach = np.array([b.reach for b in self.bodies], float)
        self.dim = ws.dim

    @property
    def n_agents(self):
        return len(self.bodies)

    def positions(self):
        return np.array([b.x for b in self.bodies]) if self.bodies else np.empty((0, self.dim))

    def sync_bodies(self, positions):
        for b, x in zip(self.bodies, positions):
            b.x = np.array(x)

    def eval_controls(self, positions):
        """Controls for all agents on one snapshot. Returns (U, penetration mask)."""
        L = self.n_agents
        U = np.zeros((L, self.dim))
        pen = np.zeros(L, dtype=bool)
        for i, c in enumerate(self.controllers):
            U[i] = ctl.goal_term(c, positions[i])
        if L >= 2:
            suppressed = [i for i, c in enumerate(self.controllers)
                          if not (c.crf_enabled and c.cooperative)]
            if len(suppressed) < L:
                U += interaction.crf_forces(positions, self.radii, self.params,
                                            self.profile, suppressed=suppressed,
                                            reach=self.reach)
        for index, rows in self._repulsion_groups():
            F, p = interaction.repulsion_batch(positions[rows], self.radii[rows],
                                               index, self.repulsion)
            U[rows] += F
            pen[rows] |= p
        return U, pen

    def _repulsion_groups(self):
        if self.repulsion is None:
            return []
        groups = {}
        for i, c in enumerate(self.controllers):
            if c.uo_enabled and c.boundary_index is not None and len(c.boundary_index):
                groups.setdefault(id(c.boundary_index), (c.boundary_index, []))[1].append(i)
        return [(index, np.array(rows)) for index, rows in groups.values()]

    def sigma_activity(self, positions):
        """Per-agent sum of interaction weights against all other agents."""
        L = self.n_agents
        if L < 2:
            return np.zeros(L)
        rel = positions[:, None, :] - positions[None, :, :]
        dist = np.linalg.norm(rel, axis=2)
        contact = np.add.outer(self.radii, self.radii)
        w = interaction.interaction_weights(dist, contact, self.profile)
        np.fill_diagonal(w, 0.0)
        return w.sum(axis=1)


def step(runtime: Runtime, positions, cfg: SimConfig, k1=None):
    """Advance one tick from the snapshot. RK4 re-evaluates controls at each stage."""
    dt = cfg.dt
    if k1 is None:
        k1, _ = runtime.eval_controls(positions)
    if cfg.integrator == EULER:
        return positions + dt * k1
    k2, _ = runtime.eval_controls(positions + 0.5 * dt * k1)
    k3, _ = runtime.eval_controls(positions + 0.5 * dt * k2)
    k4, _ = runtime.eval_controls(positions + dt * k3)
    return positions + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# Monitors
# ---------------------------------------------------------------------------

def detect_deadlock(times, speeds, outside_target, cfg: SimConfig, v_eps) -> bool:
    """True iff every agent stayed below v_eps across a full w_dead window while
    someone is still short of its target."""
    times = np.asarray(times, float)
    speeds = np.asarray(speeds, float)
    if len(times) < 2 or times[-1] - times[0] < cfg.w_dead - 1e-9:
        return False
    if not np.any(outside_target):
        return False
    cutoff = times[-1] - cfg.w_dead
    window = times >= cutoff - 1e-12
    return bool(np.all(speeds[window] < v_eps))


def collision_audit(bodies, ws: Workspace, collision_tol: float) -> list:
    """Body-body overlaps and body-obstacle penetrations beyond the numerical slack."""
    out = []
    for a, b in itertools.combinations(bodies, 2):
        depth = a.radius + b.radius - float(np.linalg.norm(a.x - b.x))
        if depth > collision_tol:
            out.append({"kind": "pair", "agents": [a.id, b.id], "depth": depth})
    if ws.obstacles:
        for a in bodies:
            clearance = float(ws.obstacle_clearance(a.x)) - a.radius
            if clearance < -collision_tol:
                out.append({"kind": "obstacle", "agents": [a.id], "depth": -clearance})
    return out


def curvature_profile(positions, speeds, v_eps):
    """Curvature along a trajectory, resampled uniformly by arc length.

    Samples slower than v_eps are dropped (parked or stalled stretches carry
    no path information). Returns (s, kappa, kappa_max, degenerate_flag).
    """
    positions = np.asarray(positions, float)
    speeds = np.asarray(speeds, float)
    keep = speeds >= v_eps
    pts = positions[keep]
    if len(pts) < 3:
        return np.array([]), np.array([]), 0.0, True
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    mean_step = float(seg.mean())
    if total <= 0 or mean_step <= 0:
        return np.array([]), np.array([]), 0.0, True
    ds = 4.0 * mean_step
    n = int(total / ds)
    if n < 3:
        return np.array([]), np.array([]), 0.0, True
    s_nodes = np.concatenate([[0.0], np.cumsum(seg)])
    s_grid = np.arange(n + 1) * ds
    resampled = np.stack([np.interp(s_grid, s_nodes, pts[:, k]) for k in range(pts.shape[1])], axis=1)
    chords = np.diff(resampled, axis=0)
    lengths = np.linalg.norm(chords, axis=1)
    ok = lengths > 1e-15
    tangents = np.zeros_like(chords)
    tangents[ok] = chords[ok] / lengths[ok, None]
    dtau = np.linalg.norm(np.diff(tangents, axis=0), axis=1)
    kappa = dtau / ds
    return s_grid[1:-1], kappa, float(kappa.max()) if len(kappa) else 0.0, False


def agent_potential(c: ctl.AgentController, x) -> float | None:
    """Goal potential whose negative gradient is the agent's goal control."""
    if c.goal_kind == ctl.SPRING_GOAL:
        r = float(np.linalg.norm(np.asarray(x, float) - c.goal))
        return 0.5 * c.gain * r * r
    if c.goal_kind == ctl.HARMONIC_GOAL:
        return harmonic.value_at(c.field, x)
    return None


def lyapunov_trace(log: TrajectoryLog, controllers):
    """Summed goal potentials along the run, or None when any agent has no
    bounded potential (pure drift). Harmonic terms use the controllers' current
    fields, so for discovery runs prefer the trace recorded during the run."""
    if any(c.goal_kind == ctl.CONSTANT_DRIFT for c in controllers):
        return None
    xs = log.position_array()
    out = []
    for k in range(xs.shape[0]):
        out.append(sum(agent_potential(c, xs[k, i]) for i, c in enumerate(controllers)))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------

def _auto_v_eps(runtime: Runtime) -> float:
    mags = []
    for c, b in zip(runtime.controllers, runtime.bodies):
        m = float(np.linalg.norm(ctl.goal_term(c, b.x)))
        if m > 1e-12:
            mags.append(m)
    typical = float(np.mean(mags)) if mags else 1.0
    return 1e-3 * typical


def _outside_target(runtime: Runtime, positions):
    out = np.zeros(runtime.n_agents, dtype=bool)
    for i, b in enumerate(runtime.bodies):
        if b.goal is None:
            out[i] = True
        else:
            out[i] = np.linalg.norm(positions[i] - b.goal) > b.r_target
    return out


def _converged(runtime: Runtime, positions, speeds, v_eps) -> bool:
    for i, b in enumerate(runtime.bodies):
        if b.goal is None:
            continue
        if np.linalg.norm(positions[i] - b.goal) > b.r_target or speeds[i] >= v_eps:
            return False
    return True


def _horizon_success(runtime: Runtime, start_positions, positions) -> bool:
    check = getattr(runtime.success, "check", None)
    if check != "groups_crossed":
        return True
    drift_x = np.array([
        c.drift[0] if c.drift is not None else 0.0 for c in runtime.controllers
    ])
    left_movers = drift_x < 0
    right_movers = drift_x > 0
    if not np.any(left_movers) or not np.any(right_movers):
        return True
    left_final = positions[left_movers, 0]
    right_final = positions[right_movers, 0]
    return bool(np.all(left_final < start_positions[right_movers, 0].min())
                and np.all(right_final > start_positions[left_movers, 0].max()))


def run(scenario, cfg: SimConfig | None = None, audit: bool = True):
    """Integrate a scenario to its outcome. Returns (TrajectoryLog, MetricsReport)."""
    from .scenarios import build_runtime  # deferred: scenarios imports SimConfig from here

    runtime = build_runtime(scenario)
    if cfg is not None:
        runtime.config = cfg
    config = runtime.config
    violations = world.validate_scenario(runtime.ws, runtime.bodies)
    if violations:
        raise ConfigError("scenario validation failed: " + "; ".join(violations))
    if (getattr(runtime.success, "kind", "converge") == "converge"
            and runtime.bodies and all(b.goal is None for b in runtime.bodies)):
        raise ConfigError("convergence needs at least one agent with a goal; "
                          "use a horizon success criterion for pure drift runs")

    log = TrajectoryLog([b.id for b in runtime.bodies], runtime.dim)
    v_eps = config.v_eps if config.v_eps is not None else _auto_v_eps(runtime)

    if audit and runtime.n_agents >= 2:
        reaches = sorted((b.reach for b in runtime.bodies), reverse=True)
        pass_radius = reaches[0] + reaches[1]
        bad = world.passage_width_audit(runtime.ws, pass_radius)
        if bad:
            log.add_event(0.0, "audit_warning", cells=len(bad), radius=pass_radius)
    harmonic_ctrls = [c for c in runtime.controllers if c.goal_kind == ctl.HARMONIC_GOAL]
    if harmonic_ctrls and runtime.params.mode == interaction.UNIT_MODE:
        stats = [harmonic.field_stats(c.field) for c in harmonic_ctrls]
        warning = interaction.circulation_bound_check(runtime.params.kt, stats)
        if warning:
            log.add_event(0.0, "circulation_warning", message=warning)

    positions = runtime.positions()
    start_positions = positions.copy()
    iu = np.triu_indices(runtime.n_agents, k=1)
    t = 0.0
    slow_time = 0.0
    collided = False
    seen_pairs = set()
    seen_obstacle = set()
    min_pair = np.inf
    min_obstacle = np.inf
    trace = [] if all(c.goal_kind != ctl.CONSTANT_DRIFT for c in runtime.controllers) else None
    outcome = None

    while True:
        runtime.sync_bodies(positions)
        for c, b in zip(runtime.controllers, runtime.bodies):
            if c.goal_kind == ctl.HARMONIC_GOAL:
                n_new = ctl.on_tick_sense(c, b, runtime.ws)
                if n_new:
                    log.add_event(t, "discovery", agent=c.agent_id, new_cells=n_new)

        try:
            U, pen = runtime.eval_controls(positions)
        except (harmonic.FieldQueryError, harmonic.SolverError) as exc:
            log.add_event(t, "error", message=str(exc))
            raise SimulationError(f"control evaluation failed at t={t:g}: {exc}") from exc

        log.append(t, positions, U, runtime.sigma_activity(positions))
        for i in np.where(pen)[0]:
            log.add_event(t, "penetration", agent=runtime.bodies[i].id)

        if runtime.n_agents >= 2:
            diffs = positions[:, None, :] - positions[None, :, :]
            d = np.linalg.norm(diffs, axis=2)
            clearance = d - np.add.outer(runtime.radii, runtime.radii)
            pairc = clearance[iu]
            if pairc.size:
                min_pair = min(min_pair, float(pairc.min()))
            for a, b_ in zip(*iu):
                if clearance[a, b_] < -config.collision_tol and (a, b_) not in seen_pairs:
                    seen_pairs.add((a, b_))
                    collided = True
                    log.add_event(t, "collision",
                                  agents=[runtime.bodies[a].id, runtime.bodies[b_].id])
        if runtime.ws.obstacles:
            oc = runtime.ws.obstacle_clearance(positions) - runtime.radii
            min_obstacle = min(min_obstacle, float(oc.min()))
            for i in np.where(oc < -config.collision_tol)[0]:
                if i not in seen_obstacle:
                    seen_obstacle.add(i)
                    collided = True
                    log.add_event(t, "collision_obstacle", agent=runtime.bodies[i].id)

        if trace is not None:
            trace.append(sum(agent_potential(c, positions[i])
                             for i, c in enumerate(runtime.controllers)))

        speeds = np.linalg.norm(U, axis=1) if runtime.n_agents else np.zeros(0)
        if getattr(runtime.success, "kind", "converge") == "converge":
            if _converged(runtime, positions, speeds, v_eps):
                outcome = CONVERGED
                break
        # incremental deadlock window: consecutive time with every agent slow
        if runtime.n_agents and speeds.max() < v_eps:
            slow_time += config.dt
        else:
            slow_time = 0.0
        if slow_time >= config.w_dead and np.any(_outside_target(runtime, positions)):
            outcome = DEADLOCK
            log.add_event(t, "deadlock")
            break
        if t >= config.t_max - 0.5 * config.dt:
            if getattr(runtime.success, "kind", "converge") == "horizon" \
                    and _horizon_success(runtime, start_positions, positions):
                outcome = CONVERGED
            else:
                outcome = TIMEOUT
            break

        try:
            positions = step(runtime, positions, config, k1=U)
        except (harmonic.FieldQueryError, harmonic.SolverError) as exc:
            log.add_event(t, "error", message=str(exc))
            raise SimulationError(f"integration failed at t={t:g}: {exc}") from exc
        t += config.dt

    log.outcome = COLLISION if collided else outcome

    kappa = {}
    lengths = {}
    pos_arr = log.position_array()
    ctl_arr = log.control_array()
    for i, b in enumerate(runtime.bodies):
        sp = np.linalg.norm(ctl_arr[:, i, :], axis=1)
        _, _, kmax, _ = curvature_profile(pos_arr[:, i, :], sp, v_eps)
        kappa[b.id] = kmax
        lengths[b.id] = float(np.linalg.norm(np.diff(pos_arr[:, i, :], axis=0), axis=1).sum())

    trace_list = [float(v) for v in trace] if trace is not None else None
    rate_list = None
    if trace_list and len(trace_list) > 1:
        rate_list = [float(v) for v in np.diff(trace_list) / config.dt]

    metrics = MetricsReport(
        kappa_max=kappa,
        min_pair_clearance=float(min_pair) if np.isfinite(min_pair) else float("inf"),
        min_obstacle_clearance=float(min_obstacle) if np.isfinite(min_obstacle) else float("inf"),
        path_lengths=lengths,
        potential_trace=trace_list,
        potential_rate=rate_list,
    )
    return log, metrics
