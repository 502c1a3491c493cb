import random

import numpy as np

from planq import pddl
from planq.encoding import (
    OAE,
    OE,
    RGNN,
    EncodingConfig,
    PredicateTable,
    encode_state,
    encode_task_state,
    extend_with_actions,
    extend_with_goal,
    task_goal_atoms,
)
from planq.search import applicable_actions, initial_state
from planq.teacher import DomainMeta

MINI = DomainMeta(
    name="mini",
    predicates=(("at", 2), ("free", 1), ("flag", 0)),
    schemas=(("go", 1, 1),),
)

TERNARY = DomainMeta(name="tern", predicates=(("p", 3),), schemas=())


def test_predicate_table_layout():
    t = PredicateTable.build(MINI, with_actions=True)
    # base first, goal second, action third
    assert t.names == ("at", "free", "flag", "at@goal", "free@goal", "flag@goal", "go@action")
    assert t.base_id("at") == 0 and t.goal_id("at") == 3 and t.action_id("go") == 6
    assert t.arities[6] == 2  # schema arity + 1 action object
    assert t.size == 7


def test_feature_dim_excludes_actions_for_v():
    assert PredicateTable.build(MINI, with_actions=False).size == 6


def test_extend_with_goal():
    state = [("at", ("b", "r"))]
    goal = [("at", ("b", "r2")), ("free", ("g",))]
    out = extend_with_goal(state, goal)
    assert len(out) == len(state) + len(goal)
    assert ("goal", "at", ("b", "r2")) in out
    assert extend_with_goal(state, []) == [("base", "at", ("b", "r"))]


def test_extend_with_actions():
    atoms, table = extend_with_actions([], [("go", ("a",)), ("go", ("b",)), ("go", ("c",))])
    assert len(atoms) == 3 and len(table) == 3
    assert atoms[0] == ("action", "go", ("@act0", "a"))
    assert table[0] == "@act0"
    assert extend_with_actions([("base", "p", ())], [])[0] == [("base", "p", ())]


def cfg(meta, variant, with_actions=False):
    return EncodingConfig.build(meta, variant, with_actions)


def test_oe_hand_example():
    enc = encode_state(cfg(MINI, OE), ["ball", "rooma"], [("at", ("ball", "rooma"))], [])
    assert enc.num_nodes == 2
    assert enc.edges == [(0, 1, 0)]  # id(at) = 0
    assert not enc.features.any()  # binary atom sets no unary features


def test_oe_unary_only_state():
    enc = encode_state(cfg(MINI, OE), ["a", "b"], [("free", ("a",)), ("free", ("b",))], [])
    assert enc.edges == []
    assert enc.features[0, 1] == 1.0 and enc.features[1, 1] == 1.0
    assert enc.features.sum() == 2.0


def test_oe_ternary_atom_pairs():
    enc = encode_state(cfg(TERNARY, OE), ["a", "b", "c"], [("p", ("a", "b", "c"))], [])
    assert sorted(enc.edges) == [(0, 1, 0), (0, 2, 0), (1, 2, 0)]


def test_oe_duplicate_pairs_collapsed():
    meta = DomainMeta(name="d", predicates=(("p", 2),), schemas=())
    enc = encode_state(cfg(meta, OE), ["a", "b"], [("p", ("a", "b")), ("p", ("b", "a"))], [])
    assert enc.edges == [(0, 1, 0)]


def test_oe_nullary_expansion_over_base_objects_only():
    enc = encode_state(
        cfg(MINI, OE, with_actions=True), ["a", "b"], [("flag", ())], [], actions=[("go", ("a",))]
    )
    fid = 2  # id(flag)
    assert enc.features[0, fid] == 1.0 and enc.features[1, fid] == 1.0
    assert enc.features[2, fid] == 0.0  # the @act0 node gets no unary flag


def test_oae_hand_example():
    enc = encode_state(cfg(MINI, OAE), ["ball", "rooma"], [("at", ("ball", "rooma"))], [])
    assert enc.num_nodes == 3
    assert sorted(enc.edges) == [(0, 2, 0), (1, 2, 1)]
    atom_feat = enc.features[2]
    assert atom_feat.sum() == 1.0 and atom_feat[0] == 1.0


def test_oae_repeated_argument():
    meta = DomainMeta(name="d", predicates=(("p", 2),), schemas=())
    enc = encode_state(cfg(meta, OAE), ["a"], [("p", ("a", "a"))], [])
    assert sorted(enc.edges) == [(0, 1, 0), (0, 1, 1)]


def test_oae_duplicate_atoms_single_node():
    enc = encode_state(cfg(MINI, OAE), ["a", "b"], [("at", ("a", "b")), ("at", ("a", "b"))], [])
    assert enc.num_nodes == 3


def test_rgnn_identity_transform():
    enc = encode_state(cfg(MINI, RGNN), ["ball", "rooma"], [("at", ("ball", "rooma"))], [])
    assert enc.rel_atoms == [(0, (0, 1))]
    assert enc.features is None and enc.edges == []


def test_rgnn_goal_and_action_atoms():
    c = cfg(MINI, RGNN, with_actions=True)
    enc = encode_state(c, ["a", "b"], [("at", ("a", "b"))], [("at", ("a", "b"))], actions=[("go", ("b",))])
    pids = {pid for pid, _ in enc.rel_atoms}
    assert c.table.goal_id("at") in pids
    act_atoms = [args for pid, args in enc.rel_atoms if pid == c.table.action_id("go")]
    assert len(act_atoms) == 1
    assert act_atoms[0][0] == enc.action_nodes[0]  # first argument is o_a


def test_with_actions_node_counts(gripper_one):
    s = initial_state(gripper_one)
    n_act = len(applicable_actions(gripper_one, s))
    n_obj = len(gripper_one.instance.objects)
    meta = DomainMeta.from_domain(gripper_one.domain)
    for variant in (OE, RGNN):
        enc = encode_task_state(cfg(meta, variant, with_actions=True), gripper_one, s)
        assert enc.num_nodes == n_obj + n_act
    enc = encode_task_state(cfg(meta, OAE, with_actions=True), gripper_one, s)
    base = encode_task_state(cfg(meta, OAE, with_actions=False), gripper_one, s)
    assert enc.num_nodes == base.num_nodes + 2 * n_act  # action objects + P_A atoms


def test_feature_dim_constant_across_states(gripper_one):
    meta = DomainMeta.from_domain(gripper_one.domain)
    c = cfg(meta, OAE, with_actions=True)
    from planq.search import apply_action

    s = initial_state(gripper_one)
    dims = set()
    for _ in range(5):
        enc = encode_task_state(c, gripper_one, s)
        dims.add(enc.features.shape[1])
        s = apply_action(gripper_one, s, applicable_actions(gripper_one, s)[0])
    assert dims == {c.table.size}


def rename(mapping, atoms):
    return [(n, tuple(mapping[a] for a in args)) for n, args in atoms]


def test_renaming_equivariance():
    rng = random.Random(11)
    meta = MINI
    objects = ["o1", "o2", "o3"]
    state = [("at", ("o1", "o2")), ("free", ("o3",)), ("flag", ())]
    goal = [("at", ("o1", "o3"))]
    actions = [("go", ("o2",)), ("go", ("o3",))]
    c = cfg(meta, OE, with_actions=True)
    base = encode_state(c, objects, state, goal, actions=actions)
    for _ in range(20):
        names = list(objects)
        rng.shuffle(names)
        pi = dict(zip(objects, names))
        perm_objects = sorted(names)
        enc = encode_state(c, perm_objects, rename(pi, state), rename(pi, goal),
                           actions=[(n, tuple(pi[a] for a in args)) for n, args in actions])
        # node permutation induced by the renaming (action objects map by position)
        node_map = {}
        for i, o in enumerate(objects):
            node_map[i] = perm_objects.index(pi[o])
        for pos, idx in base.action_nodes.items():
            node_map[idx] = enc.action_nodes[pos]
        assert enc.num_nodes == base.num_nodes
        for i in range(base.num_nodes):
            assert np.array_equal(base.features[i], enc.features[node_map[i]])
        remapped = set()
        for u, v, lab in base.edges:
            a, b = node_map[u], node_map[v]
            remapped.add((min(a, b), max(a, b), lab))
        assert remapped == set(enc.edges)


def test_encode_requires_known_variant():
    import pytest

    with pytest.raises(ValueError):
        EncodingConfig.build(MINI, "ilg", False)
