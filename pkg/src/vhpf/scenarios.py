"""Built-in simulation scenarios and the JSON scenario file format.

Each builtin pins every parameter of one canonical setup; the loader accepts
the same structure from a file with defaults for omitted fields. The top-level
keys are `workspace`, `agents`, `crf`, `profile`, `obstacle_repulsion`, `sim`,
and `success`.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from . import controller as ctl
from . import harmonic, interaction, world
from .engine import Runtime, SimConfig
from .interaction import InteractionParams, ObstacleRepulsionParams, WeightProfile
from .world import AgentBody, Ball, Box, ConfigError, KnowledgeMap, Workspace

PRIOR_NONE = "none"
PRIOR_FULL = "full"


@dataclass(frozen=True)
class ShapeSpec:
    kind: str  # "box" | "ball"
    lo: tuple | None = None
    hi: tuple | None = None
    center: tuple | None = None
    radius: float | None = None

    def build(self):
        if self.kind == "box":
            return Box(tuple(self.lo), tuple(self.hi))
        if self.kind == "ball":
            return Ball(tuple(self.center), float(self.radius))
        raise ConfigError(f"unknown obstacle kind {self.kind!r}")


@dataclass(frozen=True)
class WorkspaceSpec:
    lo: tuple
    hi: tuple
    obstacles: tuple = ()
    grid_h: float | None = None


@dataclass(frozen=True)
class GoalSpec:
    kind: str  # "spring" | "drift" | "harmonic"
    gain: float = 1.0
    velocity: tuple | None = None
    drive: str = ctl.RAW_DRIVE
    cruise: float = 1.0


@dataclass(frozen=True)
class AgentSpec:
    id: int
    start: tuple
    radius: float
    ring_width: float
    control: GoalSpec
    goal: tuple | None = None
    r_target: float | None = None
    cooperative: bool = True
    prior_knowledge: str = PRIOR_NONE


@dataclass(frozen=True)
class SuccessSpec:
    kind: str = "converge"  # "converge" | "horizon"
    check: str | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    workspace: WorkspaceSpec
    agents: tuple
    crf: InteractionParams
    profile: WeightProfile
    obstacle_repulsion: ObstacleRepulsionParams | None
    sim: SimConfig
    success: SuccessSpec = SuccessSpec()


# ---------------------------------------------------------------------------
# Runtime assembly
# ---------------------------------------------------------------------------

def build_workspace(spec: ScenarioSpec) -> Workspace:
    h = spec.workspace.grid_h
    if h is None:
        h = min(a.radius for a in spec.agents) / 4.0 if spec.agents else 0.25
    shapes = [s.build() for s in spec.workspace.obstacles]
    return Workspace(spec.workspace.lo, spec.workspace.hi, shapes, h=h)


def build_bodies(spec: ScenarioSpec):
    return [
        AgentBody(a.id, np.asarray(a.start, float), a.radius, a.ring_width,
                  goal=None if a.goal is None else np.asarray(a.goal, float),
                  r_target=a.r_target)
        for a in spec.agents
    ]


def build_runtime(spec: ScenarioSpec) -> Runtime:
    ws = build_workspace(spec)
    bodies = build_bodies(spec)
    repulsion = spec.obstacle_repulsion
    shared_full_index = None
    controllers = []
    for a, body in zip(spec.agents, bodies):
        km = KnowledgeMap(a.id)
        if a.prior_knowledge == PRIOR_FULL:
            km.cells = set(ws.boundary_cells)
        elif a.prior_knowledge != PRIOR_NONE:
            raise ConfigError(f"agent {a.id}: unknown prior_knowledge {a.prior_knowledge!r}")

        field = None
        if a.control.kind == ctl.HARMONIC_GOAL:
            if a.goal is None:
                raise ConfigError(f"agent {a.id}: harmonic control needs a goal")
            # tight tolerance: behind narrow passages the potential varies by
            # less than 1e-8, and the drive direction must outrank residual noise
            field = harmonic.solve_dirichlet(ws.grid, km.cells, np.asarray(a.goal, float),
                                             tol=1e-12, inflate=a.radius)

        index = None
        if repulsion is not None and km.cells:
            if a.prior_knowledge == PRIOR_FULL:
                if shared_full_index is None:
                    shared_full_index = interaction.KnownBoundaryIndex(ws.grid, km.cells)
                index = shared_full_index
            else:
                index = interaction.KnownBoundaryIndex(ws.grid, km.cells)

        controllers.append(ctl.AgentController(
            agent_id=a.id,
            goal_kind=a.control.kind,
            goal=None if a.goal is None else np.asarray(a.goal, float),
            gain=a.control.gain,
            drift=None if a.control.velocity is None else np.asarray(a.control.velocity, float),
            drive=a.control.drive,
            cruise=a.control.cruise,
            slow_radius=0.0 if body.r_target is None else body.r_target,
            field=field,
            knowledge=km,
            boundary_index=index,
            params=spec.crf,
            profile=spec.profile,
            repulsion=repulsion,
            uo_enabled=repulsion is not None,
            cooperative=a.cooperative,
        ))
    return Runtime(ws, bodies, controllers, spec.crf, spec.profile, repulsion,
                   spec.success, dataclasses.replace(spec.sim))


# ---------------------------------------------------------------------------
# Builtins
# ---------------------------------------------------------------------------

def _exchange_pair(profile_kind: str, name: str) -> ScenarioSpec:
    """Two agents swapping places along a line, goal springs plus pair forces."""
    goal_control = GoalSpec(kind=ctl.SPRING_GOAL, gain=0.4)
    agents = (
        AgentSpec(1, (-4.0, 0.0), 1.0, 1.5, goal_control, goal=(4.0, 0.0), r_target=1.0),
        AgentSpec(2, (4.0, 0.0), 1.0, 1.5, goal_control, goal=(-4.0, 0.0), r_target=1.0),
    )
    return ScenarioSpec(
        name=name,
        workspace=WorkspaceSpec((-10.0, -10.0), (10.0, 10.0), grid_h=0.25),
        agents=agents,
        crf=InteractionParams(kr=2.0, kt=1.0, mode=interaction.SPRING_MODE),
        profile=WeightProfile(kind=profile_kind, delta=1.5, beta=0.05),
        obstacle_repulsion=None,
        sim=SimConfig(dt=0.01, t_max=60.0),
    )


def _case1():
    return _exchange_pair(interaction.SPRING, "case1")


def _case2_linear():
    return _exchange_pair(interaction.LINEAR, "case2_linear")


def _case2_sin():
    return _exchange_pair(interaction.SINUSOIDAL, "case2_sin")


def _case2_exp():
    return _exchange_pair(interaction.EXPONENTIAL, "case2_exp")


def _case3_3d():
    goal_control = GoalSpec(kind=ctl.SPRING_GOAL, gain=0.4)
    agents = (
        AgentSpec(1, (-4.0, 0.0, 0.0), 1.0, 1.5, goal_control, goal=(4.0, 0.0, 0.0), r_target=1.0),
        AgentSpec(2, (4.0, 0.0, 0.0), 1.0, 1.5, goal_control, goal=(-4.0, 0.0, 0.0), r_target=1.0),
    )
    return ScenarioSpec(
        name="case3_3d",
        workspace=WorkspaceSpec((-6.0, -6.0, -6.0), (6.0, 6.0, 6.0), grid_h=0.25),
        agents=agents,
        crf=InteractionParams(kr=2.0, kt=1.0, mode=interaction.SPRING_MODE,
                              axis=(0.0, 0.0, 1.0)),
        profile=WeightProfile(kind=interaction.SPRING, delta=1.5),
        obstacle_repulsion=None,
        sim=SimConfig(dt=0.01, t_max=60.0),
    )


def _triangle_vertices(side: float):
    r = side / math.sqrt(3.0)
    angles = (0.5 * math.pi, 0.5 * math.pi + 2 * math.pi / 3, 0.5 * math.pi + 4 * math.pi / 3)
    return [(r * math.cos(a), r * math.sin(a)) for a in angles]


def _case4(malfunction: bool):
    # three symmetric exchanges whose straight-line paths all cross at the centroid
    vertices = _triangle_vertices(8.0)
    goal_control = GoalSpec(kind=ctl.SPRING_GOAL, gain=0.4)
    agents = tuple(
        AgentSpec(i + 1, v, 1.0, 1.5, goal_control,
                  goal=(-v[0], -v[1]), r_target=1.0,
                  cooperative=not (malfunction and i == 1))
        for i, v in enumerate(vertices)
    )
    return ScenarioSpec(
        name="case4_malfunction" if malfunction else "case4",
        workspace=WorkspaceSpec((-8.0, -8.0), (8.0, 8.0), grid_h=0.25),
        agents=agents,
        crf=InteractionParams(kr=2.0, kt=1.0, mode=interaction.SPRING_MODE),
        profile=WeightProfile(kind=interaction.SPRING, delta=1.5),
        obstacle_repulsion=None,
        sim=SimConfig(dt=0.01, t_max=100.0),
    )


def _case5_lanes():
    # two groups of four drifting through each other between soft side rails
    starts = [(2.0, 1.3), (5.0, 1.3), (2.0, -1.3), (5.0, -1.3),
              (-2.0, 1.3), (-5.0, 1.3), (-2.0, -1.3), (-5.0, -1.3)]
    agents = []
    for i, s in enumerate(starts):
        vel = (-1.0, 0.0) if i < 4 else (1.0, 0.0)
        agents.append(AgentSpec(i + 1, s, 1.0, 0.2,
                                GoalSpec(kind=ctl.CONSTANT_DRIFT, velocity=vel),
                                prior_knowledge=PRIOR_FULL))
    rails = (
        ShapeSpec("box", lo=(-30.0, 3.5), hi=(30.0, 6.0)),
        ShapeSpec("box", lo=(-30.0, -6.0), hi=(30.0, -3.5)),
    )
    return ScenarioSpec(
        name="case5_lanes",
        workspace=WorkspaceSpec((-30.0, -6.0), (30.0, 6.0), obstacles=rails, grid_h=0.25),
        agents=tuple(agents),
        crf=InteractionParams(kr=20.0, kt=10.0, mode=interaction.SPRING_MODE),
        profile=WeightProfile(kind=interaction.SPRING, delta=0.2),
        obstacle_repulsion=ObstacleRepulsionParams(strength=60.0, influence=0.5),
        sim=SimConfig(dt=0.002, t_max=16.0, integrator="euler"),
        success=SuccessSpec(kind="horizon", check="groups_crossed"),
    )


def _case6(kt: float, name: str):
    # seven spring-held agents in a hex cluster; one traveler crossing the box
    ring = 3.0
    holders = [(ring * math.cos(k * math.pi / 3), ring * math.sin(k * math.pi / 3))
               for k in range(6)] + [(0.0, 0.0)]
    agents = [
        AgentSpec(i + 1, p, 1.0, 0.5, GoalSpec(kind=ctl.SPRING_GOAL, gain=2.0),
                  goal=p, r_target=1.0)
        for i, p in enumerate(holders)
    ]
    agents.append(AgentSpec(8, (-7.0, 0.0), 1.0, 0.5,
                            GoalSpec(kind=ctl.SPRING_GOAL, gain=0.4),
                            goal=(7.0, 0.0), r_target=1.0))
    return ScenarioSpec(
        name=name,
        workspace=WorkspaceSpec((-11.0, -7.0), (11.0, 7.0), grid_h=0.25),
        agents=tuple(agents),
        crf=InteractionParams(kr=6.0, kt=kt, mode=interaction.UNIT_MODE),
        profile=WeightProfile(kind=interaction.LINEAR, delta=0.5),
        obstacle_repulsion=None,
        sim=SimConfig(dt=0.01, t_max=120.0),
    )


def _room_walls(lo, hi, thickness):
    x0, y0 = lo
    x1, y1 = hi
    t = thickness
    return (
        ShapeSpec("box", lo=(x0, y1 - t), hi=(x1, y1)),
        ShapeSpec("box", lo=(x0, y0), hi=(x1, y0 + t)),
        ShapeSpec("box", lo=(x0, y0), hi=(x0 + t, y1)),
        ShapeSpec("box", lo=(x1 - t, y0), hi=(x1, y1)),
    )


def _case7_unknown():
    # a walled room with two blocks between swapped start/goal pairs; nothing
    # is known up front, so the goal fields grow as the walls are discovered
    obstacles = _room_walls((-10.0, -6.0), (10.0, 6.0), 0.5) + (
        ShapeSpec("box", lo=(-4.0, -1.25), hi=(-2.5, 1.25)),
        ShapeSpec("box", lo=(2.5, -1.25), hi=(4.0, 1.25)),
    )
    goal_control = GoalSpec(kind=ctl.HARMONIC_GOAL, drive=ctl.UNIT_DRIVE, cruise=0.8)
    agents = (
        AgentSpec(1, (-7.0, -0.6), 0.5, 0.5, goal_control, goal=(7.0, 0.6), r_target=0.5),
        AgentSpec(2, (7.0, 0.6), 0.5, 0.5, goal_control, goal=(-7.0, -0.6), r_target=0.5),
    )
    return ScenarioSpec(
        name="case7_unknown",
        workspace=WorkspaceSpec((-10.0, -6.0), (10.0, 6.0), obstacles=obstacles, grid_h=0.125),
        agents=agents,
        crf=InteractionParams(kr=2.0, kt=2.0, mode=interaction.UNIT_MODE),
        profile=WeightProfile(kind=interaction.LINEAR, delta=0.5),
        obstacle_repulsion=ObstacleRepulsionParams(strength=6.0, influence=0.25),
        sim=SimConfig(dt=0.01, t_max=200.0),
    )


def _case8_tight():
    # two rooms joined by a corridor too narrow for two bodies side by side:
    # a head-on meeting inside it has no room to circulate and jams
    obstacles = _room_walls((-10.0, -4.0), (10.0, 4.0), 0.5) + (
        ShapeSpec("box", lo=(-1.0, 0.75), hi=(1.0, 3.5)),
        ShapeSpec("box", lo=(-1.0, -3.5), hi=(1.0, -0.75)),
    )
    goal_control = GoalSpec(kind=ctl.HARMONIC_GOAL, drive=ctl.UNIT_DRIVE, cruise=0.8)
    agents = (
        AgentSpec(1, (-6.0, 0.0), 0.5, 0.5, goal_control, goal=(6.0, 0.0), r_target=0.5,
                  prior_knowledge=PRIOR_FULL),
        AgentSpec(2, (6.0, 0.0), 0.5, 0.5, goal_control, goal=(-6.0, 0.0), r_target=0.5,
                  prior_knowledge=PRIOR_FULL),
    )
    return ScenarioSpec(
        name="case8_tight",
        workspace=WorkspaceSpec((-10.0, -4.0), (10.0, 4.0), obstacles=obstacles, grid_h=0.125),
        agents=agents,
        crf=InteractionParams(kr=2.0, kt=2.0, mode=interaction.UNIT_MODE),
        profile=WeightProfile(kind=interaction.LINEAR, delta=0.5),
        obstacle_repulsion=ObstacleRepulsionParams(strength=6.0, influence=0.25),
        sim=SimConfig(dt=0.01, t_max=150.0),
    )


_BUILTINS = {
    "case1": _case1,
    "case2_linear": _case2_linear,
    "case2_sin": _case2_sin,
    "case2_exp": _case2_exp,
    "case3_3d": _case3_3d,
    "case4": lambda: _case4(False),
    "case4_malfunction": lambda: _case4(True),
    "case5_lanes": _case5_lanes,
    "case6_no_circulation": lambda: _case6(0.0, "case6_no_circulation"),
    "case6_circulation": lambda: _case6(3.0, "case6_circulation"),
    "case7_unknown": _case7_unknown,
    "case8_tight": _case8_tight,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin(name: str) -> ScenarioSpec:
    """A fully pinned built-in scenario. Two calls return equal specs."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose one of {', '.join(BUILTIN_NAMES)}")
    return factory()


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _shape_to_dict(s: ShapeSpec):
    if s.kind == "box":
        return {"kind": "box", "lo": list(s.lo), "hi": list(s.hi)}
    return {"kind": "ball", "center": list(s.center), "radius": s.radius}


def _shape_from_dict(d):
    kind = d.get("kind")
    if kind == "box":
        return ShapeSpec("box", lo=tuple(d["lo"]), hi=tuple(d["hi"]))
    if kind == "ball":
        return ShapeSpec("ball", center=tuple(d["center"]), radius=float(d["radius"]))
    raise ConfigError(f"workspace.obstacles: unknown kind {kind!r}")


def to_dict(spec: ScenarioSpec) -> dict:
    agents = []
    for a in spec.agents:
        control = {"kind": a.control.kind}
        if a.control.kind == ctl.SPRING_GOAL:
            control["gain"] = a.control.gain
        elif a.control.kind == ctl.CONSTANT_DRIFT:
            control["velocity"] = list(a.control.velocity)
        else:
            control["drive"] = a.control.drive
            control["cruise"] = a.control.cruise
            control["gain"] = a.control.gain
        agents.append({
            "id": a.id,
            "start": list(a.start),
            "radius": a.radius,
            "ring_width": a.ring_width,
            "goal": None if a.goal is None else list(a.goal),
            "r_target": a.r_target,
            "control": control,
            "cooperative": a.cooperative,
            "prior_knowledge": a.prior_knowledge,
        })
    out = {
        "name": spec.name,
        "workspace": {
            "lo": list(spec.workspace.lo),
            "hi": list(spec.workspace.hi),
            "obstacles": [_shape_to_dict(s) for s in spec.workspace.obstacles],
            "grid_h": spec.workspace.grid_h,
        },
        "agents": agents,
        "crf": {
            "kr": spec.crf.kr,
            "kt": spec.crf.kt,
            "mode": spec.crf.mode,
            "circulation": spec.crf.circulation,
            "axis": list(spec.crf.axis),
        },
        "profile": {
            "kind": spec.profile.kind,
            "delta": spec.profile.delta,
            "beta": spec.profile.beta,
        },
        "obstacle_repulsion": None if spec.obstacle_repulsion is None else {
            "strength": spec.obstacle_repulsion.strength,
            "influence": spec.obstacle_repulsion.influence,
        },
        "sim": {
            "dt": spec.sim.dt,
            "t_max": spec.sim.t_max,
            "integrator": spec.sim.integrator,
            "v_eps": spec.sim.v_eps,
            "w_dead": spec.sim.w_dead,
            "collision_tol": spec.sim.collision_tol,
        },
        "success": {"kind": spec.success.kind, "check": spec.success.check},
    }
    return out


def from_dict(d: dict) -> ScenarioSpec:
    try:
        ws = d.get("workspace")
        if ws is None:
            raise ConfigError("missing required key 'workspace'")
        workspace = WorkspaceSpec(
            lo=tuple(ws["lo"]),
            hi=tuple(ws["hi"]),
            obstacles=tuple(_shape_from_dict(o) for o in ws.get("obstacles", [])),
            grid_h=ws.get("grid_h"),
        )
        profile_d = d.get("profile", {})
        profile = WeightProfile(
            kind=profile_d.get("kind", interaction.LINEAR),
            delta=float(profile_d.get("delta", 1.5)),
            beta=float(profile_d.get("beta", 0.05)),
        )
        agents = []
        for a in d.get("agents", []):
            ctl_d = a.get("control", {"kind": ctl.SPRING_GOAL})
            kind = ctl_d.get("kind", ctl.SPRING_GOAL)
            goal_control = GoalSpec(
                kind=kind,
                gain=float(ctl_d.get("gain", 1.0)),
                velocity=None if ctl_d.get("velocity") is None else tuple(ctl_d["velocity"]),
                drive=ctl_d.get("drive", ctl.RAW_DRIVE),
                cruise=float(ctl_d.get("cruise", 1.0)),
            )
            agents.append(AgentSpec(
                id=int(a["id"]),
                start=tuple(a["start"]),
                radius=float(a["radius"]),
                ring_width=float(a.get("ring_width", profile.delta)),
                control=goal_control,
                goal=None if a.get("goal") is None else tuple(a["goal"]),
                r_target=None if a.get("r_target") is None else float(a["r_target"]),
                cooperative=bool(a.get("cooperative", True)),
                prior_knowledge=a.get("prior_knowledge", PRIOR_NONE),
            ))
        crf_d = d.get("crf", {})
        crf = InteractionParams(
            kr=float(crf_d.get("kr", 2.0)),
            kt=float(crf_d.get("kt", 1.0)),
            mode=crf_d.get("mode", interaction.UNIT_MODE),
            circulation=crf_d.get("circulation", interaction.CCW),
            axis=tuple(crf_d.get("axis", (0.0, 0.0, 1.0))),
        )
        rep_d = d.get("obstacle_repulsion")
        repulsion = None if rep_d is None else ObstacleRepulsionParams(
            strength=float(rep_d.get("strength", 6.0)),
            influence=float(rep_d.get("influence", 0.25)),
        )
        sim_d = d.get("sim", {})
        sim = SimConfig(
            dt=float(sim_d.get("dt", 0.01)),
            t_max=float(sim_d.get("t_max", 200.0)),
            integrator=sim_d.get("integrator", "rk4"),
            v_eps=None if sim_d.get("v_eps") is None else float(sim_d["v_eps"]),
            w_dead=float(sim_d.get("w_dead", 5.0)),
            collision_tol=float(sim_d.get("collision_tol", 1e-3)),
        )
        succ_d = d.get("success", {})
        success = SuccessSpec(kind=succ_d.get("kind", "converge"), check=succ_d.get("check"))
    except KeyError as exc:
        raise ConfigError(f"scenario field missing: {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed scenario field: {exc}") from exc
    return ScenarioSpec(
        name=d.get("name", "scenario"),
        workspace=workspace,
        agents=tuple(agents),
        crf=crf,
        profile=profile,
        obstacle_repulsion=repulsion,
        sim=sim,
        success=success,
    )


def save(spec: ScenarioSpec, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_dict(spec), f, indent=2)
        f.write("\n")


def load(path) -> ScenarioSpec:
    """Parse, default-fill, and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    spec = from_dict(raw)
    ws = build_workspace(spec)
    bodies = build_bodies(spec)
    violations = world.validate_scenario(ws, bodies)
    if violations:
        raise ConfigError(f"{path}: " + "; ".join(violations))
    return spec
