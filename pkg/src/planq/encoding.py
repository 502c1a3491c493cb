"""Graph encodings of planning states: object encoding (OE), object-atom
encoding (OAE), and the raw relational form consumed by the relational GNN.

All three variants share the same state preprocessing: goal atoms are added
under goal versions of each predicate, applicable actions are (optionally)
added as fresh action objects with per-schema action predicates, and nullary
atoms are re-expressed as unary atoms holding for every base object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .search import applicable_actions
from .teacher import DomainMeta

OE = "oe"
OAE = "oae"
RGNN = "rgnn"


@dataclass(frozen=True)
class PredicateTable:
    """Stable identifiers: base predicates first, goal versions second, action
    predicates third.  Feature dimension m is the table size."""

    names: tuple  # display names, index = identifier
    arities: tuple
    kinds: tuple  # base | goal | action
    _base: dict = field(hash=False, compare=False, default_factory=dict)
    _goal: dict = field(hash=False, compare=False, default_factory=dict)
    _action: dict = field(hash=False, compare=False, default_factory=dict)

    @property
    def size(self):
        return len(self.names)

    def base_id(self, name):
        return self._base[name]

    def goal_id(self, name):
        return self._goal[name]

    def action_id(self, schema_name):
        return self._action[schema_name]

    @classmethod
    def build(cls, meta: DomainMeta, with_actions: bool):
        names, arities, kinds = [], [], []
        base, goal, action = {}, {}, {}
        for name, arity in meta.predicates:
            base[name] = len(names)
            names.append(name)
            arities.append(arity)
            kinds.append("base")
        for name, arity in meta.predicates:
            goal[name] = len(names)
            names.append(name + "@goal")
            arities.append(arity)
            kinds.append("goal")
        if with_actions:
            for name, arity, _cost in meta.schemas:
                action[name] = len(names)
                names.append(name + "@action")
                arities.append(arity + 1)  # leading action object
                kinds.append("action")
        return cls(tuple(names), tuple(arities), tuple(kinds), base, goal, action)


@dataclass(frozen=True)
class EncodingConfig:
    variant: str  # oe | oae | rgnn
    with_actions: bool
    table: PredicateTable

    @classmethod
    def build(cls, meta: DomainMeta, variant, with_actions):
        if variant not in (OE, OAE, RGNN):
            raise ValueError(f"unknown encoding variant '{variant}'")
        return cls(variant, with_actions, PredicateTable.build(meta, with_actions))


@dataclass
class EncodedState:
    variant: str
    nodes: list  # node names (objects, then atom nodes for OAE)
    features: np.ndarray | None  # (num_nodes, m) for OE/OAE
    edges: list  # (u, v, label); undirected, stored once
    rel_atoms: list  # (predicate id, node-index tuple) for RGNN
    object_nodes: list  # node indices that are objects (incl. action objects)
    action_nodes: dict  # action position in the applicable list -> node index

    @property
    def num_nodes(self):
        return len(self.nodes)

    def dump(self):
        lines = [f"variant={self.variant} nodes={len(self.nodes)}"]
        for i, n in enumerate(self.nodes):
            feat = ""
            if self.features is not None:
                feat = " " + "".join(str(int(x)) for x in self.features[i])
            lines.append(f"  node {i} {n}{feat}")
        for u, v, lab in sorted(self.edges):
            lines.append(f"  edge {u}-{v} label={lab}")
        for pid, args in sorted(self.rel_atoms):
            lines.append(f"  atom {pid}({','.join(str(a) for a in args)})")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# State preprocessing


def extend_with_goal(state_atoms, goal_atoms):
    """Adds a goal-version copy of each goal atom; atoms are (name, args) with
    goal copies tagged as ('goal', name, args)."""
    atoms = [("base", n, a) for n, a in state_atoms]
    atoms += [("goal", n, a) for n, a in goal_atoms]
    return atoms


def extend_with_actions(atoms, actions):
    """Adds one fresh action object per applicable action and one action-
    predicate atom P_A(o_a, o_0..o_n); returns (atoms, {position: o_a})."""
    out = list(atoms)
    table = {}
    for i, (schema, args) in enumerate(actions):
        o_a = f"@act{i}"
        table[i] = o_a
        out.append(("action", schema, (o_a,) + tuple(args)))
    return out, table


def _resolve(config, tagged_atoms, base_objects):
    """Tagged atoms -> (pred id, args) with nullary-to-unary expansion over the
    base objects (action objects never receive unary atoms)."""
    t = config.table
    resolved = []
    for kind, name, args in tagged_atoms:
        if kind == "base":
            pid = t.base_id(name)
        elif kind == "goal":
            pid = t.goal_id(name)
        else:
            pid = t.action_id(name)
        if len(args) == 0:
            resolved.extend((pid, (o,)) for o in base_objects)
        else:
            resolved.append((pid, tuple(args)))
    return resolved


def encode_state(config: EncodingConfig, objects, state_atoms, goal_atoms, actions=None):
    """Encode one state given symbolic components.

    objects: base object names; state_atoms/goal_atoms: (name, args); actions:
    applicable ground actions (schema, args) in canonical order, required when
    config.with_actions.
    """
    tagged = extend_with_goal(state_atoms, goal_atoms)
    action_objects = {}
    if config.with_actions:
        tagged, action_objects = extend_with_actions(tagged, actions or [])
    resolved = _resolve(config, tagged, list(objects))

    all_objects = list(objects) + [action_objects[i] for i in sorted(action_objects)]
    obj_index = {o: i for i, o in enumerate(all_objects)}
    action_nodes = {i: obj_index[o] for i, o in action_objects.items()}

    if config.variant == RGNN:
        rel = [(pid, tuple(obj_index[a] for a in args)) for pid, args in resolved]
        return EncodedState(RGNN, all_objects, None, [], rel, list(range(len(all_objects))), action_nodes)
    if config.variant == OE:
        return _encode_oe(config, all_objects, obj_index, resolved, action_nodes)
    return _encode_oae(config, all_objects, obj_index, resolved, action_nodes)


def _unary_features(config, num_nodes, obj_index, resolved):
    m = config.table.size
    feats = np.zeros((num_nodes, m))
    for pid, args in resolved:
        if len(args) == 1:
            feats[obj_index[args[0]], pid] = 1.0
    return feats


def _encode_oe(config, all_objects, obj_index, resolved, action_nodes):
    feats = _unary_features(config, len(all_objects), obj_index, resolved)
    edges = set()
    for pid, args in resolved:
        if len(args) < 2:
            continue
        idxs = [obj_index[a] for a in args]
        for i in range(len(idxs)):
            for j in range(i + 1, len(idxs)):
                u, v = idxs[i], idxs[j]
                if u > v:
                    u, v = v, u
                edges.add((u, v, pid))
    return EncodedState(
        OE, all_objects, feats, sorted(edges), [], list(range(len(all_objects))), action_nodes
    )


def _encode_oae(config, all_objects, obj_index, resolved, action_nodes):
    n_obj = len(all_objects)
    m = config.table.size
    atom_list = sorted(set(resolved))
    nodes = list(all_objects) + [f"{config.table.names[pid]}({','.join(args)})" for pid, args in atom_list]
    feats = np.zeros((len(nodes), m))
    feats[:n_obj] = _unary_features(config, n_obj, obj_index, resolved)
    edges = set()
    for k, (pid, args) in enumerate(atom_list):
        atom_node = n_obj + k
        feats[atom_node, pid] = 1.0
        for pos, a in enumerate(args):
            edges.add((obj_index[a], atom_node, pos))
    return EncodedState(OAE, nodes, feats, sorted(edges), [], list(range(n_obj)), action_nodes)


# ---------------------------------------------------------------------------
# GroundTask adapters


def task_goal_atoms(task):
    return [task.atoms[i] for i in sorted(task.goal)]


def encode_task_state(config, task, s, actions=None):
    """Encode a State of a GroundTask; `actions` defaults to the applicable
    ground actions in task order when the config carries actions."""
    objects = [o for o, _ in task.instance.objects]
    state_atoms = task.decode_state(s.atoms)
    acts = None
    if config.with_actions:
        if actions is None:
            actions = applicable_actions(task, s)
        acts = [(task.domain.schemas[a.schema_index].name, a.binding) for a in actions]
    return encode_state(config, objects, state_atoms, task_goal_atoms(task), acts)
