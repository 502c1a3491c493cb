import numpy as np
import pytest

from planq import pddl
from planq import policy as pol
from planq.models import build_model
from planq.policy import (
    ALL_VISITED,
    DEAD_END,
    SOLVED,
    STEP_LIMIT,
    PolicyConfig,
    RunResult,
    run_policy,
    select_action_q,
    select_action_v,
    write_plan_file,
)
from planq.search import applicable_actions, apply_action, initial_state, is_goal, optimal_cost_oracle
from planq.teacher import DomainMeta, validate_plan


def oracle_select(model, task, s, visited=None, stats=None):
    """Ground-truth greedy selection used as a policy stand-in."""
    best = None
    for a in applicable_actions(task, s):
        succ = apply_action(task, s, a)
        if visited is not None and succ in visited:
            continue
        score = a.cost + optimal_cost_oracle(task, succ)
        if best is None or score < best[0]:
            best = (score, a, succ)
    if best is None:
        return None
    if stats is not None:
        stats.encoder_calls += 1
    return best[1], best[2]


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig("q", 0)
    with pytest.raises(ValueError):
        PolicyConfig("sarsa", 5)


def test_run_policy_oracle_solves_gripper(monkeypatch, gripper_one):
    monkeypatch.setattr(pol, "select_action_q", oracle_select)
    res = run_policy(None, gripper_one, PolicyConfig("q", 50))
    assert res.outcome == SOLVED and res.solved
    assert res.plan_length == 3
    assert is_goal(gripper_one, res.trajectory[-1])
    ok, cost = validate_plan(gripper_one, res.actions)
    assert ok and cost == 3


def test_run_policy_step_limit(monkeypatch, gripper_one):
    monkeypatch.setattr(pol, "select_action_q", oracle_select)
    res = run_policy(None, gripper_one, PolicyConfig("q", 1))
    assert res.outcome == STEP_LIMIT and not res.solved
    assert res.plan_length == 1


def cycle_task():
    dom = pddl.parse_domain(
        "(define (domain cyc) (:predicates (p) (q) (g))"
        "  (:action fwd :parameters () :precondition (and (p)) :effect (and (q) (not (p))))"
        "  (:action back :parameters () :precondition (and (q)) :effect (and (p) (not (q)))))"
    )
    inst = pddl.parse_instance(
        "(define (problem c) (:domain cyc) (:objects o1) (:init (p)) (:goal (and (g))))", dom
    )
    return pddl.ground(dom, inst)


def test_two_cycle_trap_all_visited(monkeypatch):
    task = cycle_task()
    monkeypatch.setattr(pol, "select_action_q", oracle_select)
    res = run_policy(None, task, PolicyConfig("q", 50))
    assert res.outcome == ALL_VISITED
    assert res.plan_length == 1  # reached the second state, then got stuck


def test_cycle_without_revisit_filter_hits_step_limit(monkeypatch):
    task = cycle_task()

    def first_action(model, t, s, visited=None, stats=None):
        a = applicable_actions(t, s)[0]
        return a, apply_action(t, s, a)

    monkeypatch.setattr(pol, "select_action_q", first_action)
    res = run_policy(None, task, PolicyConfig("q", 9, forbid_revisit=False))
    assert res.outcome == STEP_LIMIT and res.plan_length == 9


def test_dead_end_outcome():
    dom = pddl.parse_domain(
        "(define (domain dd) (:predicates (p) (g))"
        "  (:action sink :parameters () :precondition (and (p)) :effect (and (not (p)))))"
    )
    inst = pddl.parse_instance(
        "(define (problem d) (:domain dd) (:objects o1) (:init (p)) (:goal (and (g))))", dom
    )
    task = pddl.ground(dom, inst)
    meta = DomainMeta.from_domain(dom)
    model = build_model(meta, "rgnn", "v", k=2, L=1, seed=0)
    res = run_policy(model, task, PolicyConfig("v", 10))
    assert res.outcome == DEAD_END
    assert res.plan_length == 1


def grip_model(task, head, arch="rgnn", seed=0):
    return build_model(DomainMeta.from_domain(task.domain), arch, head, k=3, L=2, seed=seed)


def test_select_single_action_returned(gripper_one):
    s = initial_state(gripper_one)
    pick = applicable_actions(gripper_one, s)[0]
    s1 = apply_action(gripper_one, s, pick)
    # after picking, restrict candidates by marking all but one successor visited
    acts = applicable_actions(gripper_one, s1)
    succs = [apply_action(gripper_one, s1, a) for a in acts]
    visited = set(succs[1:]) | {s1}
    for head, select in (("v", select_action_v), ("q", select_action_q)):
        m = grip_model(gripper_one, head)
        choice = select(m, gripper_one, s1, visited=visited)
        assert choice is not None and choice[0].name == acts[0].name


def test_select_v_stats_count_candidates(gripper_one):
    from planq.models import ForwardStats

    s = initial_state(gripper_one)
    m = grip_model(gripper_one, "v")
    stats = ForwardStats()
    select_action_v(m, gripper_one, s, stats=stats)
    assert stats.encoder_calls == len(applicable_actions(gripper_one, s))


def test_select_q_single_encoding(gripper_one):
    from planq.models import ForwardStats

    s = initial_state(gripper_one)
    m = grip_model(gripper_one, "q")
    stats = ForwardStats()
    select_action_q(m, gripper_one, s, stats=stats)
    assert stats.encoder_calls == 1


def test_select_q_shift_invariant(gripper_one):
    s = initial_state(gripper_one)
    m = grip_model(gripper_one, "q", seed=5)
    a1 = select_action_q(m, gripper_one, s)[0]
    m.store["readout_q.b1"].data += 100.0  # final-layer bias shift
    a2 = select_action_q(m, gripper_one, s)[0]
    assert a1.name == a2.name


def test_run_policy_counts(gripper_two):
    m = grip_model(gripper_two, "q")
    limit = 12
    res = run_policy(m, gripper_two, PolicyConfig("q", limit))
    selections = res.plan_length if res.outcome in (SOLVED, STEP_LIMIT) else res.plan_length + 1
    if res.outcome == STEP_LIMIT:
        assert res.stats.encoder_calls == limit
    else:
        assert res.stats.encoder_calls == selections
    # V policy: per-step candidate counts, replayed independently
    mv = grip_model(gripper_two, "v")
    resv = run_policy(mv, gripper_two, PolicyConfig("v", limit))
    visited = {resv.trajectory[0]}
    expect = 0
    for s, a in zip(resv.trajectory, resv.actions):
        cands = [x for x in applicable_actions(gripper_two, s)
                 if apply_action(gripper_two, s, x) not in visited]
        expect += len(cands)
        visited.add(apply_action(gripper_two, s, a))
    if resv.outcome not in (SOLVED, STEP_LIMIT):
        s_final = resv.trajectory[-1]
        expect += len([x for x in applicable_actions(gripper_two, s_final)
                       if apply_action(gripper_two, s_final, x) not in visited])
    assert resv.stats.encoder_calls == expect


def test_no_repeated_states_with_forbid_revisit(gripper_two):
    m = grip_model(gripper_two, "q", seed=3)
    res = run_policy(m, gripper_two, PolicyConfig("q", 30))
    assert len(set(res.trajectory)) == len(res.trajectory)


def test_write_plan_file(tmp_path, monkeypatch, gripper_one):
    monkeypatch.setattr(pol, "select_action_q", oracle_select)
    res = run_policy(None, gripper_one, PolicyConfig("q", 50))
    path = tmp_path / "plan.txt"
    write_plan_file(gripper_one, res.actions, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("(pick ball1 rooma")
    assert lines[1] == "(move rooma roomb)"
    assert all(l.startswith("(") and l.endswith(")") for l in lines)


def test_run_result_properties():
    r = RunResult(SOLVED, ["s0", "s1"], ["a"])
    assert r.plan_length == 1 and r.solved
