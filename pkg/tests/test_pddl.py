import itertools

import pytest

from planq import pddl
from planq.teacher import GRIPPER_DOMAIN, BLOCKSWORLD_DOMAIN, builtin_domain

from conftest import GRIPPER_ONE_BALL, GRIPPER_TWO_BALLS


def test_parse_gripper_domain_counts(gripper_domain):
    assert len(gripper_domain.predicates) == 4
    assert len(gripper_domain.schemas) == 3
    # identifiers follow declaration order
    assert [p.index for p in gripper_domain.predicates] == [0, 1, 2, 3]
    assert [p.name for p in gripper_domain.predicates] == ["at-robby", "at", "free", "carry"]


def test_parse_domain_zero_schemas():
    dom = pddl.parse_domain("(define (domain empty) (:predicates (p)))")
    assert dom.schemas == ()
    assert len(dom.predicates) == 1


def test_forall_rejected():
    text = """
    (define (domain bad) (:predicates (p ?x))
      (:action a :parameters (?x)
        :precondition (forall (?y) (p ?y))
        :effect (and (p ?x))))
    """
    with pytest.raises(pddl.PddlError):
        pddl.parse_domain(text)


def test_duplicate_predicate_rejected():
    with pytest.raises(pddl.PddlError):
        pddl.parse_domain("(define (domain bad) (:predicates (p ?x) (p ?x ?y)))")


def test_parse_instance_two_balls(gripper_domain):
    inst = pddl.parse_instance(GRIPPER_TWO_BALLS, gripper_domain)
    assert len(inst.objects) == 6
    assert len(inst.goal) == 2


def test_goal_subset_of_init_accepted(gripper_domain):
    text = """
    (define (problem trivial) (:domain gripper)
      (:objects rooma roomb - room ball1 - ball left right - gripper)
      (:init (at-robby rooma) (at ball1 roomb) (free left) (free right))
      (:goal (and (at ball1 roomb))))
    """
    inst = pddl.parse_instance(text, gripper_domain)
    assert inst.goal <= inst.init


def test_wrong_arity_rejected(gripper_domain):
    text = GRIPPER_ONE_BALL.replace("(at ball1 rooma)", "(at ball1)")
    with pytest.raises(pddl.PddlError):
        pddl.parse_instance(text, gripper_domain)


def test_unknown_object_rejected(gripper_domain):
    text = GRIPPER_ONE_BALL.replace("(at ball1 rooma)", "(at ball9 rooma)")
    with pytest.raises(pddl.PddlError):
        pddl.parse_instance(text, gripper_domain)


def test_ground_gripper_one_ball_action_count(gripper_one):
    # 2 moves (self-loops pruned) + 4 picks + 4 drops
    assert len(gripper_one.actions) == 10
    by_schema = {}
    for a in gripper_one.actions:
        name = gripper_one.domain.schemas[a.schema_index].name
        by_schema[name] = by_schema.get(name, 0) + 1
    assert by_schema == {"move": 2, "pick": 4, "drop": 4}


def test_ground_missing_type_yields_no_actions(gripper_domain):
    text = """
    (define (problem no-balls) (:domain gripper)
      (:objects rooma roomb - room left right - gripper)
      (:init (at-robby rooma) (free left) (free right))
      (:goal (and (at-robby roomb))))
    """
    inst = pddl.parse_instance(text, gripper_domain)
    task = pddl.ground(gripper_domain, inst)
    schemas = {task.domain.schemas[a.schema_index].name for a in task.actions}
    assert schemas == {"move"}


def brute_force_ground(domain, instance):
    """Independent instantiator: typed products, static pruning, degenerate
    add/delete overlap pruning."""
    by_type = {}
    for obj, t in instance.objects:
        for anc in domain.type_and_ancestors(t):
            by_type.setdefault(anc, []).append(obj)
    static = set()
    for p in domain.predicates:
        touched = any(
            any(n == p.name for n, _ in s.add) or any(n == p.name for n, _ in s.delete)
            for s in domain.schemas
        )
        if not touched:
            static.add(p.name)
    names = set()
    for schema in domain.schemas:
        pools = [sorted(by_type.get(t, [])) for _, t in schema.parameters]
        for binding in itertools.product(*pools):
            env = dict(zip([v for v, _ in schema.parameters], binding))
            sub = lambda atoms: {(n, tuple(env[a] for a in args)) for n, args in atoms}
            if sub(schema.add) & sub(schema.delete):
                continue
            if any(n in static and (n, args) not in instance.init for n, args in sub(schema.precondition)):
                continue
            names.add((schema.name, binding))
    return names


def test_ground_matches_brute_force_blocksworld():
    dom = builtin_domain("blocksworld")
    text = """
    (define (problem bw2) (:domain blocksworld)
      (:objects b1 b2 - block)
      (:init (ontable b1) (ontable b2) (clear b1) (clear b2) (handempty))
      (:goal (and (on b1 b2))))
    """
    inst = pddl.parse_instance(text, dom)
    task = pddl.ground(dom, inst)
    got = {(task.domain.schemas[a.schema_index].name, a.binding) for a in task.actions}
    assert got == brute_force_ground(dom, inst)


def test_ground_matches_brute_force_gripper(gripper_domain):
    inst = pddl.parse_instance(GRIPPER_TWO_BALLS, gripper_domain)
    task = pddl.ground(gripper_domain, inst)
    got = {(task.domain.schemas[a.schema_index].name, a.binding) for a in task.actions}
    assert got == brute_force_ground(gripper_domain, inst)


def test_ground_action_sets_within_universe(gripper_two):
    n = gripper_two.num_atoms
    for a in gripper_two.actions:
        for idx in a.precondition | a.add | a.delete:
            assert 0 <= idx < n
        assert not (a.add & a.delete)


def test_ground_deterministic(gripper_domain):
    inst = pddl.parse_instance(GRIPPER_TWO_BALLS, gripper_domain)
    t1 = pddl.ground(gripper_domain, inst)
    t2 = pddl.ground(gripper_domain, inst)
    assert t1.atoms == t2.atoms
    assert [a.name for a in t1.actions] == [a.name for a in t2.actions]


def test_domain_round_trip(gripper_domain):
    text = pddl.format_domain(gripper_domain)
    dom2 = pddl.parse_domain(text)
    assert dom2.name == gripper_domain.name
    assert [(p.name, p.param_types) for p in dom2.predicates] == [
        (p.name, p.param_types) for p in gripper_domain.predicates
    ]
    for s1, s2 in zip(gripper_domain.schemas, dom2.schemas):
        assert (s1.name, s1.parameters, s1.precondition, s1.add, s1.delete, s1.cost) == (
            s2.name, s2.parameters, s2.precondition, s2.add, s2.delete, s2.cost
        )


def test_instance_round_trip(gripper_domain):
    inst = pddl.parse_instance(GRIPPER_TWO_BALLS, gripper_domain)
    inst2 = pddl.parse_instance(pddl.format_instance(inst), gripper_domain)
    assert inst2.objects == inst.objects
    assert inst2.init == inst.init
    assert inst2.goal == inst.goal


def test_atom_string_round_trip():
    for atom in [("at", ("b1", "rooma")), ("handempty", ()), ("clear", ("b2",))]:
        assert pddl.parse_atom_string(pddl.format_atom(atom)) == atom


def test_action_costs_parsed():
    text = """
    (define (domain costed)
      (:requirements :strips :action-costs)
      (:predicates (p) (q))
      (:functions (total-cost))
      (:action a :parameters ()
        :precondition (and (p))
        :effect (and (q) (increase (total-cost) 3))))
    """
    dom = pddl.parse_domain(text)
    assert dom.schemas[0].cost == 3


def test_blocksworld_domain_parses():
    dom = pddl.parse_domain(BLOCKSWORLD_DOMAIN)
    assert len(dom.predicates) == 5
    assert len(dom.schemas) == 4
    assert dom.predicate("handempty").arity == 0
