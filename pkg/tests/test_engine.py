import dataclasses
import json

import numpy as np
import pytest

from vhpf import engine, scenarios
from vhpf.controller import SPRING_GOAL
from vhpf.engine import (
    COLLISION,
    CONVERGED,
    DEADLOCK,
    TIMEOUT,
    SimConfig,
    TrajectoryLog,
    collision_audit,
    curvature_profile,
    detect_deadlock,
    lyapunov_trace,
    run,
    step,
)
from vhpf.interaction import SPRING, SPRING_MODE, InteractionParams, WeightProfile
from vhpf.scenarios import (
    AgentSpec,
    GoalSpec,
    ScenarioSpec,
    SuccessSpec,
    WorkspaceSpec,
    build_runtime,
    builtin,
)
from vhpf.world import AgentBody, ConfigError, Workspace


def two_agent_spec(**overrides):
    spec = builtin("case1")
    return dataclasses.replace(spec, **overrides)


def single_agent_spec(start=(-4.0, 0.0), goal=(4.0, 0.0), gain=0.4, t_max=60.0,
                      integrator="rk4", dt=0.01):
    return ScenarioSpec(
        name="single",
        workspace=WorkspaceSpec((-10.0, -10.0), (10.0, 10.0), grid_h=0.25),
        agents=(AgentSpec(1, start, 1.0, 1.5, GoalSpec(SPRING_GOAL, gain=gain),
                          goal=goal, r_target=1.0),),
        crf=InteractionParams(kr=2.0, kt=1.0, mode=SPRING_MODE),
        profile=WeightProfile(SPRING, delta=1.5),
        obstacle_repulsion=None,
        sim=SimConfig(dt=dt, t_max=t_max, integrator=integrator),
    )


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def test_step_fixed_point_for_zero_control():
    rt = build_runtime(single_agent_spec(start=(4.0, 0.0)))  # already at the goal
    x = rt.positions()
    out = step(rt, x, rt.config)
    assert np.array_equal(out, x)


def test_step_euler_constant_drift():
    spec = ScenarioSpec(
        name="drift",
        workspace=WorkspaceSpec((-10.0, -10.0), (10.0, 10.0), grid_h=0.25),
        agents=(AgentSpec(1, (0.0, 0.0), 1.0, 1.5,
                          GoalSpec("drift", velocity=(1.0, 0.0))),),
        crf=InteractionParams(),
        profile=WeightProfile(SPRING, delta=1.5),
        obstacle_repulsion=None,
        sim=SimConfig(dt=0.1, t_max=1.0, integrator="euler"),
        success=SuccessSpec(kind="horizon"),
    )
    rt = build_runtime(spec)
    out = step(rt, rt.positions(), rt.config)
    assert out[0] == pytest.approx([0.1, 0.0], abs=1e-15)


def test_step_rk4_matches_exponential_decay():
    spec = single_agent_spec(gain=0.5, dt=0.1)
    rt = build_runtime(spec)
    x = rt.positions()
    out = step(rt, x, rt.config)
    # linear spring flow has the exact solution goal + (x - goal) e^{-k dt};
    # fourth-order truncation leaves ~ (k dt)^5 / 5! * |offset| ~ 2e-8
    exact = np.array([4.0, 0.0]) + (x[0] - [4.0, 0.0]) * np.exp(-0.5 * 0.1)
    assert out[0] == pytest.approx(exact, abs=1e-7)


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

def test_case1_run_converges_and_dissipates():
    log, metrics = run(builtin("case1"))
    assert log.outcome == CONVERGED
    assert metrics.min_pair_clearance >= 0.0
    assert np.all(log.sigma_activity[-1] == 0.0)
    final = log.positions[-1]
    assert np.linalg.norm(final[0] - [4.0, 0.0]) <= 1.0
    assert np.linalg.norm(final[1] - [-4.0, 0.0]) <= 1.0


def test_case1_id_swap_mirrors_exactly():
    spec = builtin("case1")
    swapped = dataclasses.replace(
        spec,
        agents=(
            dataclasses.replace(spec.agents[1], id=1),
            dataclasses.replace(spec.agents[0], id=2),
        ),
    )
    log_a, _ = run(spec)
    log_b, _ = run(swapped)
    assert log_a.n_ticks == log_b.n_ticks
    pa = log_a.position_array()
    pb = log_b.position_array()
    # agent k of the swapped run retraces agent k's mirror of the original
    assert np.array_equal(pa[:, 0, :], -pb[:, 0, :])
    assert np.array_equal(pa[:, 1, :], -pb[:, 1, :])


def test_run_is_bitwise_deterministic():
    log_a, _ = run(builtin("case1"))
    log_b, _ = run(builtin("case1"))
    assert log_a.times == log_b.times
    assert np.array_equal(log_a.position_array(), log_b.position_array())
    assert np.array_equal(log_a.control_array(), log_b.control_array())
    assert log_a.outcome == log_b.outcome


def test_dt_refinement_keeps_final_positions():
    spec = builtin("case1")
    log_a, _ = run(spec)
    half = dataclasses.replace(spec, sim=dataclasses.replace(spec.sim, dt=0.005))
    log_b, _ = run(half)
    drift = np.linalg.norm(log_a.positions[-1] - log_b.positions[-1], axis=1).max()
    assert drift < 10 * spec.sim.dt


def test_harmonic_navigation_in_three_dimensions():
    # one agent descends a 3-D grid potential around a central block it has
    # to discover, exercising the volumetric solve, inflation, and sampling
    spec = ScenarioSpec(
        name="room3d",
        workspace=WorkspaceSpec(
            (-3.0, -3.0, -3.0), (3.0, 3.0, 3.0),
            obstacles=(scenarios.ShapeSpec("box", lo=(-0.5, -1.5, -1.5),
                                           hi=(0.5, 1.5, 1.5)),),
            grid_h=0.25,
        ),
        agents=(AgentSpec(1, (-2.0, 0.0, 0.0), 0.4, 0.6,
                          GoalSpec("harmonic", drive="unit", cruise=0.8),
                          goal=(2.0, 0.3, 0.3), r_target=0.4),),
        crf=InteractionParams(mode="unit"),
        profile=WeightProfile("linear", delta=0.6),
        obstacle_repulsion=scenarios.ObstacleRepulsionParams(strength=4.0, influence=0.2),
        sim=SimConfig(dt=0.01, t_max=60.0),
    )
    log, metrics = run(spec)
    assert log.outcome == CONVERGED
    assert any(e["kind"] == "discovery" for e in log.events)
    assert metrics.min_obstacle_clearance >= -spec.sim.collision_tol
    final = log.positions[-1][0]
    assert np.linalg.norm(final - [2.0, 0.3, 0.3]) <= 0.4


def test_empty_agent_list_converges_immediately():
    spec = ScenarioSpec(
        name="empty",
        workspace=WorkspaceSpec((-2.0, -2.0), (2.0, 2.0), grid_h=0.25),
        agents=(),
        crf=InteractionParams(),
        profile=WeightProfile(SPRING, delta=1.5),
        obstacle_repulsion=None,
        sim=SimConfig(dt=0.01, t_max=1.0),
    )
    log, _ = run(spec)
    assert log.outcome == CONVERGED
    assert log.times == [0.0]


def test_goal_free_run_needs_horizon_success():
    spec = builtin("case5_lanes")
    bad = dataclasses.replace(spec, success=SuccessSpec(kind="converge"))
    with pytest.raises(ConfigError, match="horizon"):
        run(bad)


def test_run_rejects_invalid_scenario():
    spec = builtin("case1")
    bad = dataclasses.replace(
        spec,
        agents=(spec.agents[0],
                dataclasses.replace(spec.agents[1], goal=spec.agents[0].goal)),
    )
    with pytest.raises(ConfigError):
        run(bad)


def test_head_on_without_interaction_flags_collision():
    spec = builtin("case1")
    ghost = dataclasses.replace(spec, crf=InteractionParams(kr=0.0, kt=0.0,
                                                            mode=SPRING_MODE))
    log, metrics = run(ghost)
    assert log.outcome == COLLISION
    assert metrics.min_pair_clearance < 0
    assert any(e["kind"] == "collision" for e in log.events)


def test_weak_cushion_logs_penetration_and_obstacle_collision():
    # drift straight at a wall with a cushion too weak to stop the body
    spec = ScenarioSpec(
        name="ram",
        workspace=WorkspaceSpec((-6.0, -6.0), (6.0, 6.0),
                                obstacles=(scenarios.ShapeSpec("box", lo=(2.0, -6.0),
                                                               hi=(6.0, 6.0)),),
                                grid_h=0.25),
        agents=(AgentSpec(1, (-2.0, 0.0), 0.5, 0.5,
                          GoalSpec("drift", velocity=(2.0, 0.0)),
                          prior_knowledge="full"),),
        crf=InteractionParams(),
        profile=WeightProfile(SPRING, delta=0.5),
        obstacle_repulsion=scenarios.ObstacleRepulsionParams(strength=0.5, influence=0.25),
        sim=SimConfig(dt=0.01, t_max=5.0),
        success=SuccessSpec(kind="horizon"),
    )
    log, metrics = run(spec)
    kinds = {e["kind"] for e in log.events}
    assert "penetration" in kinds
    assert "collision_obstacle" in kinds
    assert log.outcome == COLLISION
    assert metrics.min_obstacle_clearance < 0


def test_short_horizon_times_out():
    spec = single_agent_spec(t_max=0.5)
    log, _ = run(spec)
    assert log.outcome == TIMEOUT


def test_symmetric_stalemate_deadlocks():
    # two agents forced head-on with no circulating term and a gain matched
    # so that the radial push balances the goal springs away from the targets
    spec = two_agent_spec(crf=InteractionParams(kr=2.0, kt=0.0, mode=SPRING_MODE))
    spec = dataclasses.replace(spec, sim=dataclasses.replace(spec.sim, t_max=80.0))
    log, _ = run(spec)
    assert log.outcome == DEADLOCK
    final = log.positions[-1]
    assert np.linalg.norm(final[0] - [4.0, 0.0]) > 1.0


# ---------------------------------------------------------------------------
# monitors
# ---------------------------------------------------------------------------

def test_detect_deadlock_parked_is_success_not_deadlock():
    cfg = SimConfig(dt=0.1, t_max=10.0, w_dead=1.0)
    times = np.arange(0, 2.0, 0.1)
    speeds = np.full((len(times), 2), 1e-6)
    assert not detect_deadlock(times, speeds, np.array([False, False]), cfg, 1e-3)
    assert detect_deadlock(times, speeds, np.array([True, False]), cfg, 1e-3)


def test_detect_deadlock_requires_slow_window():
    cfg = SimConfig(dt=0.1, t_max=10.0, w_dead=1.0)
    times = np.arange(0, 2.0, 0.1)
    speeds = np.full((len(times), 2), 1e-2)
    assert not detect_deadlock(times, speeds, np.array([True, True]), cfg, 1e-3)
    short = times[:5]
    assert not detect_deadlock(short, speeds[:5] * 0, np.array([True]), cfg, 1e-3)


def test_collision_audit_reports_overlaps():
    ws = Workspace((-5, -5), (5, 5), [scenarios.Box((2.0, -1.0), (4.0, 1.0))], h=0.25)
    bodies = [
        AgentBody(1, np.array([0.0, 0.0]), 1.0, 0.5),
        AgentBody(2, np.array([1.5, 0.0]), 1.0, 0.5),
        AgentBody(3, np.array([2.0, 0.0]), 1.0, 0.5),
    ]
    out = collision_audit(bodies, ws, collision_tol=1e-3)
    kinds = {(v["kind"], tuple(v["agents"])) for v in out}
    assert ("pair", (1, 2)) in kinds
    assert ("pair", (2, 3)) in kinds
    assert ("obstacle", (3,)) in kinds


def test_collision_audit_clean_for_case1_layout():
    ws = Workspace((-10, -10), (10, 10), h=0.25)
    bodies = [
        AgentBody(1, np.array([-4.0, 0.0]), 1.0, 1.5),
        AgentBody(2, np.array([4.0, 0.0]), 1.0, 1.5),
    ]
    assert collision_audit(bodies, ws, 1e-3) == []


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

def test_curvature_straight_line_is_zero():
    t = np.linspace(0, 10, 500)[:, None]
    pts = t * np.array([[1.0, 0.5]])
    speeds = np.full(len(t), 1.0)
    _, kappa, kmax, degenerate = curvature_profile(pts, speeds, 1e-3)
    assert not degenerate
    assert kmax < 1e-10


def test_curvature_circle_matches_inverse_radius():
    R = 2.0
    theta = np.arange(0, 2 * np.pi, 0.0025)
    pts = R * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    speeds = np.full(len(theta), 1.0)
    _, kappa, kmax, degenerate = curvature_profile(pts, speeds, 1e-3)
    assert not degenerate
    assert kmax == pytest.approx(1.0 / R, rel=0.02)
    assert np.median(kappa) == pytest.approx(1.0 / R, rel=0.02)


def test_curvature_degenerate_trajectory():
    pts = np.zeros((10, 2))
    speeds = np.zeros(10)
    s, kappa, kmax, degenerate = curvature_profile(pts, speeds, 1e-3)
    assert degenerate and kmax == 0.0 and len(s) == 0


# ---------------------------------------------------------------------------
# goal-potential trace
# ---------------------------------------------------------------------------

def test_potential_zero_when_parked_at_goals():
    rt = build_runtime(single_agent_spec(start=(4.0, 0.0)))
    assert engine.agent_potential(rt.controllers[0], np.array([4.0, 0.0])) == 0.0


def test_single_agent_descent_is_monotone():
    log, metrics = run(single_agent_spec())
    trace = np.asarray(metrics.potential_trace)
    assert log.outcome == CONVERGED
    assert np.all(np.diff(trace) <= 1e-12)


def test_case1_trace_decays_three_orders():
    log, metrics = run(builtin("case1"))
    trace = np.asarray(metrics.potential_trace)
    assert trace[0] == pytest.approx(25.6)
    assert trace[-1] < 1e-3 * trace[0]


def test_lyapunov_trace_matches_online_series_for_springs():
    spec = builtin("case1")
    log, metrics = run(spec)
    rt = build_runtime(spec)
    trace = lyapunov_trace(log, rt.controllers)
    assert trace == pytest.approx(np.asarray(metrics.potential_trace), abs=1e-12)


def test_lyapunov_trace_unavailable_for_drift():
    spec = builtin("case5_lanes")
    rt = build_runtime(spec)
    log = TrajectoryLog([a.id for a in spec.agents], 2)
    assert lyapunov_trace(log, rt.controllers) is None


# ---------------------------------------------------------------------------
# log output
# ---------------------------------------------------------------------------

def test_log_rejects_nonincreasing_time():
    log = TrajectoryLog([1], 2)
    log.append(0.0, np.zeros((1, 2)), np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(ValueError):
        log.append(0.0, np.zeros((1, 2)), np.zeros((1, 2)), np.zeros(1))


def test_log_csv_and_events_roundtrip(tmp_path):
    log, metrics = run(single_agent_spec(t_max=0.5))
    csv_path = tmp_path / "traj.csv"
    ev_path = tmp_path / "events.jsonl"
    log.write_csv(csv_path)
    log.write_events(ev_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,agent_id,x,y,ux,uy,sigma_activity"
    assert len(lines) == 1 + log.n_ticks
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and int(first[1]) == 1
    assert float(first[4]) == pytest.approx(3.2)
    for line in ev_path.read_text().splitlines():
        json.loads(line)
    metrics_path = tmp_path / "metrics.json"
    metrics.write_json(metrics_path)
    loaded = json.loads(metrics_path.read_text())
    assert "kappa_max" in loaded and "min_pair_clearance" in loaded
