"""Optimal teacher planner, built-in instance generators, and construction of
the supervised training dataset.

The dataset file format is JSON Lines: a header line with domain fingerprint
and provenance, per-instance metadata lines, then one tuple per line of the
form {"instance", "state", "hstar", "teacher", "others", "sib_h"}.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field

from . import pddl
from .pddl import CapacityError, Domain, GroundTask, Instance, format_atom, parse_atom_string
from .search import (
    INF,
    HeuristicEvaluator,
    State,
    apply_action,
    applicable_actions,
    initial_state,
    is_goal,
)

DATASET_FORMAT = "planq-dataset"
DATASET_VERSION = 1


# ---------------------------------------------------------------------------
# Optimal planner


@dataclass
class Plan:
    actions: list  # GroundAction
    cost: int
    states: list  # trajectory s0..sT, len(actions)+1 entries


def astar_optimal(task: GroundTask, heuristic="lmcut", max_expansions=1_000_000):
    """Minimum-cost plan via A* with an admissible heuristic.

    Returns a Plan with the full state trajectory, or None if the task is
    unsolvable.  Ties are broken by lower g, then FIFO insertion order.
    """
    h = HeuristicEvaluator(task, heuristic)
    s0 = initial_state(task)
    h0 = h(s0)
    if h0 == INF:
        return None
    best_g = {s0: 0}
    parent = {s0: None}
    counter = 0
    heap = [(h0, 0, counter, s0)]
    expansions = 0
    while heap:
        f, g, _, cur = heapq.heappop(heap)
        if g > best_g.get(cur, INF):
            continue
        if is_goal(task, cur):
            actions, states = [], [cur]
            node = cur
            while parent[node] is not None:
                prev, act = parent[node]
                actions.append(act)
                states.append(prev)
                node = prev
            actions.reverse()
            states.reverse()
            return Plan(actions=actions, cost=g, states=states)
        expansions += 1
        if expansions > max_expansions:
            raise CapacityError(f"planner exceeded {max_expansions} expansions")
        for a in applicable_actions(task, cur):
            nxt = apply_action(task, cur, a)
            ng = g + a.cost
            if ng < best_g.get(nxt, INF):
                best_g[nxt] = ng
                parent[nxt] = (cur, a)
                hn = h(nxt)
                if hn == INF:
                    continue
                counter += 1
                heapq.heappush(heap, (ng + hn, ng, counter, nxt))
    return None


def validate_plan(task: GroundTask, actions):
    """Replay a plan through the state model; returns (ok, cost)."""
    s = initial_state(task)
    cost = 0
    for a in actions:
        if not a.precondition <= s.as_set:
            return False, cost
        s = apply_action(task, s, a)
        cost += a.cost
    return is_goal(task, s), cost


# ---------------------------------------------------------------------------
# Built-in domains


GRIPPER_DOMAIN = """
(define (domain gripper)
  (:requirements :strips :typing)
  (:types room ball gripper)
  (:predicates (at-robby ?r - room) (at ?b - ball ?r - room)
               (free ?g - gripper) (carry ?b - ball ?g - gripper))
  (:action move
    :parameters (?from - room ?to - room)
    :precondition (and (at-robby ?from))
    :effect (and (at-robby ?to) (not (at-robby ?from))))
  (:action pick
    :parameters (?obj - ball ?room - room ?gripper - gripper)
    :precondition (and (at ?obj ?room) (at-robby ?room) (free ?gripper))
    :effect (and (carry ?obj ?gripper) (not (at ?obj ?room)) (not (free ?gripper))))
  (:action drop
    :parameters (?obj - ball ?room - room ?gripper - gripper)
    :precondition (and (carry ?obj ?gripper) (at-robby ?room))
    :effect (and (at ?obj ?room) (free ?gripper) (not (carry ?obj ?gripper)))))
"""

BLOCKSWORLD_DOMAIN = """
(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block) (clear ?x - block)
               (handempty) (holding ?x - block))
  (:action pick-up
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (holding ?x) (not (ontable ?x)) (not (clear ?x)) (not (handempty))))
  (:action put-down
    :parameters (?x - block)
    :precondition (and (holding ?x))
    :effect (and (ontable ?x) (clear ?x) (handempty) (not (holding ?x))))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (on ?x ?y) (clear ?x) (handempty) (not (holding ?x)) (not (clear ?y))))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (on ?x ?y)) (not (clear ?x)) (not (handempty)))))
"""

FERRY_DOMAIN = """
(define (domain ferry)
  (:requirements :strips :typing)
  (:types car location)
  (:predicates (at-ferry ?l - location) (at ?c - car ?l - location)
               (empty-ferry) (on ?c - car))
  (:action sail
    :parameters (?from - location ?to - location)
    :precondition (and (at-ferry ?from))
    :effect (and (at-ferry ?to) (not (at-ferry ?from))))
  (:action board
    :parameters (?car - car ?loc - location)
    :precondition (and (at ?car ?loc) (at-ferry ?loc) (empty-ferry))
    :effect (and (on ?car) (not (at ?car ?loc)) (not (empty-ferry))))
  (:action debark
    :parameters (?car - car ?loc - location)
    :precondition (and (on ?car) (at-ferry ?loc))
    :effect (and (at ?car ?loc) (empty-ferry) (not (on ?car)))))
"""

VISITALL_DOMAIN = """
(define (domain visitall)
  (:requirements :strips :typing)
  (:types place)
  (:predicates (at-robot ?x - place) (connected ?x - place ?y - place) (visited ?x - place))
  (:action move
    :parameters (?curpos - place ?nextpos - place)
    :precondition (and (at-robot ?curpos) (connected ?curpos ?nextpos))
    :effect (and (at-robot ?nextpos) (visited ?nextpos) (not (at-robot ?curpos)))))
"""

BUILTIN_DOMAINS = {
    "gripper": GRIPPER_DOMAIN,
    "blocksworld": BLOCKSWORLD_DOMAIN,
    "ferry": FERRY_DOMAIN,
    "visitall": VISITALL_DOMAIN,
}

_domain_cache = {}


def builtin_domain(tag) -> Domain:
    if tag not in BUILTIN_DOMAINS:
        raise ValueError(f"unknown builtin domain '{tag}'")
    if tag not in _domain_cache:
        _domain_cache[tag] = pddl.parse_domain(BUILTIN_DOMAINS[tag], filename=f"<builtin:{tag}>")
    return _domain_cache[tag]


# ---------------------------------------------------------------------------
# Instance generators


class InfeasibleSizeError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    domain: str  # gripper | blocksworld | ferry | visitall
    size: int  # object count
    seed: int


def feasible_sizes(domain_tag, lo=2, hi=100):
    out = []
    for n in range(lo, hi + 1):
        try:
            _check_size(domain_tag, n)
        except InfeasibleSizeError:
            continue
        out.append(n)
    return out


def min_size(domain_tag):
    return {"gripper": 5, "blocksworld": 2, "ferry": 3, "visitall": 4}[domain_tag]


def _check_size(tag, size):
    if tag == "gripper":
        if size < 5:
            raise InfeasibleSizeError("gripper needs at least 5 objects (1 ball)")
    elif tag == "blocksworld":
        if size < 2:
            raise InfeasibleSizeError("blocksworld needs at least 2 blocks")
    elif tag == "ferry":
        if size < 3:
            raise InfeasibleSizeError("ferry needs at least 2 locations and 1 car")
    elif tag == "visitall":
        d = round(size ** 0.5)
        if size < 4 or d * d != size:
            raise InfeasibleSizeError("visitall sizes must be perfect squares >= 4")
    else:
        raise ValueError(f"unknown builtin domain '{tag}'")


def generate_instance(spec: GeneratorSpec) -> Instance:
    """Deterministic in (domain, size, seed); the emitted instance never has
    its goal satisfied initially (resampled internally)."""
    _check_size(spec.domain, spec.size)
    for attempt in range(1000):
        rng = random.Random(f"planq:{spec.domain}:{spec.size}:{spec.seed}:{attempt}")
        inst = _GENERATORS[spec.domain](spec.size, rng, f"{spec.domain}-{spec.size}-{spec.seed}")
        if not inst.goal <= inst.init:
            return inst
    raise InfeasibleSizeError(
        f"could not generate a non-trivial {spec.domain} instance of size {spec.size}"
    )


def _gen_gripper(size, rng, name):
    balls = [f"ball{i + 1}" for i in range(size - 4)]
    rooms = ["rooma", "roomb"]
    grippers = ["left", "right"]
    objects = tuple(
        [(r, "room") for r in rooms] + [(b, "ball") for b in balls] + [(g, "gripper") for g in grippers]
    )
    init = {("at-robby", (rng.choice(rooms),))}
    init |= {("free", (g,)) for g in grippers}
    init |= {("at", (b, rng.choice(rooms))) for b in balls}
    goal = {("at", (b, "roomb")) for b in balls}
    return Instance(name, "gripper", objects, frozenset(init), frozenset(goal))


def _random_towers(blocks, rng):
    order = list(blocks)
    rng.shuffle(order)
    towers = []
    i = 0
    while i < len(order):
        width = rng.randint(1, len(order) - i)
        towers.append(order[i : i + width])
        i += width
    return towers


def _tower_atoms(towers):
    atoms = set()
    for tower in towers:
        atoms.add(("ontable", (tower[0],)))
        atoms.add(("clear", (tower[-1],)))
        for below, above in zip(tower, tower[1:]):
            atoms.add(("on", (above, below)))
    return atoms


def _gen_blocksworld(size, rng, name):
    blocks = [f"b{i + 1}" for i in range(size)]
    objects = tuple((b, "block") for b in blocks)
    init = _tower_atoms(_random_towers(blocks, rng)) | {("handempty", ())}
    goal = _tower_atoms(_random_towers(blocks, rng))
    return Instance(name, "blocksworld", objects, frozenset(init), frozenset(goal))


def _gen_ferry(size, rng, name):
    n_locs = rng.randint(2, min(size - 1, max(2, size // 2)))
    locs = [f"l{i + 1}" for i in range(n_locs)]
    cars = [f"c{i + 1}" for i in range(size - n_locs)]
    objects = tuple([(l, "location") for l in locs] + [(c, "car") for c in cars])
    init = {("at-ferry", (rng.choice(locs),)), ("empty-ferry", ())}
    init |= {("at", (c, rng.choice(locs))) for c in cars}
    goal = {("at", (c, rng.choice(locs))) for c in cars}
    return Instance(name, "ferry", objects, frozenset(init), frozenset(goal))


def _gen_visitall(size, rng, name):
    d = round(size ** 0.5)
    cells = {(x, y): f"p{x}-{y}" for x in range(d) for y in range(d)}
    objects = tuple((c, "place") for c in sorted(cells.values()))
    init = set()
    for (x, y), c in cells.items():
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if (x + dx, y + dy) in cells:
                init.add(("connected", (c, cells[(x + dx, y + dy)])))
    start = cells[(rng.randrange(d), rng.randrange(d))]
    init |= {("at-robot", (start,)), ("visited", (start,))}
    goal = {("visited", (c,)) for c in cells.values()}
    return Instance(name, "visitall", objects, frozenset(init), frozenset(goal))


_GENERATORS = {
    "gripper": _gen_gripper,
    "blocksworld": _gen_blocksworld,
    "ferry": _gen_ferry,
    "visitall": _gen_visitall,
}


def generate_unique_instances(domain_tag, size, count, seed):
    """Up to `count` pairwise distinct instances for one size."""
    seen = set()
    out = []
    for k in range(count * 50):
        inst = generate_instance(GeneratorSpec(domain_tag, size, seed + k))
        key = (inst.objects, inst.init, inst.goal)
        if key in seen:
            continue
        seen.add(key)
        out.append(inst)
        if len(out) == count:
            break
    return out


# ---------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class DomainMeta:
    name: str
    predicates: tuple  # ((name, arity), ...)
    schemas: tuple  # ((name, arity, cost), ...)

    @property
    def fingerprint(self):
        blob = json.dumps(
            {"name": self.name, "predicates": self.predicates, "schemas": self.schemas},
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def schema_cost(self, name):
        for n, _, c in self.schemas:
            if n == name:
                return c
        raise KeyError(name)

    @classmethod
    def from_domain(cls, domain: Domain):
        return cls(
            name=domain.name,
            predicates=tuple((p.name, p.arity) for p in domain.predicates),
            schemas=tuple((s.name, s.arity, s.cost) for s in domain.schemas),
        )


@dataclass(frozen=True)
class InstanceRecord:
    id: str
    objects: tuple  # object names
    goal: tuple  # ground atoms (pred_name, args), sorted


@dataclass(frozen=True)
class TrainingTuple:
    instance_id: str
    state: tuple  # ground atoms, sorted
    hstar: int
    teacher: tuple  # ground action (schema_name, args)
    others: tuple  # non-teacher applicable actions, task order
    sibling_heuristics: tuple  # aligned with others, entries int or INF


@dataclass
class Dataset:
    meta: DomainMeta
    instances: dict = field(default_factory=dict)  # id -> InstanceRecord
    tuples: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def instance_for(self, tup: TrainingTuple) -> InstanceRecord:
        return self.instances[tup.instance_id]


def build_dataset(
    domain: Domain,
    instances,
    teacher_heuristic="lmcut",
    sibling_heuristic="lmcut",
    max_expansions=1_000_000,
    provenance=None,
    log=None,
):
    """One TrainingTuple per non-goal state along each optimal trajectory.

    Instances the planner cannot solve within budget are skipped and logged.
    """
    ds = Dataset(meta=DomainMeta.from_domain(domain), provenance=dict(provenance or {}))
    for inst in instances:
        task = pddl.ground(domain, inst)
        try:
            plan = astar_optimal(task, teacher_heuristic, max_expansions)
        except CapacityError as exc:
            if log:
                log(f"skipping {inst.name}: {exc}")
            continue
        if plan is None:
            if log:
                log(f"skipping {inst.name}: unsolvable")
            continue
        rec = InstanceRecord(
            id=inst.name,
            objects=tuple(o for o, _ in inst.objects),
            goal=tuple(sorted(inst.goal)),
        )
        ds.instances[rec.id] = rec
        sib_h = HeuristicEvaluator(task, sibling_heuristic)
        suffix_cost = plan.cost
        for t, (s, a_star) in enumerate(zip(plan.states[:-1], plan.actions)):
            acts = applicable_actions(task, s)
            others, sibs = [], []
            for a in acts:
                if a is a_star:
                    continue
                succ = apply_action(task, s, a)
                others.append((task.domain.schemas[a.schema_index].name, a.binding))
                sibs.append(sib_h(succ))
            ds.tuples.append(
                TrainingTuple(
                    instance_id=rec.id,
                    state=tuple(sorted(task.decode_state(s.atoms))),
                    hstar=suffix_cost,
                    teacher=(task.domain.schemas[a_star.schema_index].name, a_star.binding),
                    others=tuple(others),
                    sibling_heuristics=tuple(sibs),
                )
            )
            suffix_cost -= a_star.cost
    return ds


# ---------------------------------------------------------------------------
# JSONL serialization


def _h_to_json(v):
    return "inf" if v == INF else v


def _h_from_json(v):
    return INF if v == "inf" else v


def save_dataset(ds: Dataset, path):
    with open(path, "w") as f:
        header = {
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "domain": {
                "name": ds.meta.name,
                "predicates": [list(p) for p in ds.meta.predicates],
                "schemas": [list(s) for s in ds.meta.schemas],
                "fingerprint": ds.meta.fingerprint,
            },
            "provenance": ds.provenance,
        }
        f.write(json.dumps(header) + "\n")
        for rec in ds.instances.values():
            f.write(
                json.dumps(
                    {
                        "instance": rec.id,
                        "objects": list(rec.objects),
                        "goal": [format_atom(a) for a in rec.goal],
                    }
                )
                + "\n"
            )
        for tup in ds.tuples:
            f.write(
                json.dumps(
                    {
                        "instance": tup.instance_id,
                        "state": [format_atom(a) for a in tup.state],
                        "hstar": tup.hstar,
                        "teacher": format_atom(tup.teacher),
                        "others": [format_atom(a) for a in tup.others],
                        "sib_h": [_h_to_json(h) for h in tup.sibling_heuristics],
                    }
                )
                + "\n"
            )


def load_dataset(path) -> Dataset:
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"{path} is not a {DATASET_FORMAT} file")
        meta = DomainMeta(
            name=header["domain"]["name"],
            predicates=tuple(tuple(p) for p in header["domain"]["predicates"]),
            schemas=tuple(tuple(s) for s in header["domain"]["schemas"]),
        )
        if meta.fingerprint != header["domain"]["fingerprint"]:
            raise ValueError("domain fingerprint mismatch in dataset header")
        ds = Dataset(meta=meta, provenance=header.get("provenance", {}))
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "state" in rec:
                ds.tuples.append(
                    TrainingTuple(
                        instance_id=rec["instance"],
                        state=tuple(parse_atom_string(s) for s in rec["state"]),
                        hstar=rec["hstar"],
                        teacher=parse_atom_string(rec["teacher"]),
                        others=tuple(parse_atom_string(s) for s in rec["others"]),
                        sibling_heuristics=tuple(_h_from_json(h) for h in rec["sib_h"]),
                    )
                )
            else:
                ds.instances[rec["instance"]] = InstanceRecord(
                    id=rec["instance"],
                    objects=tuple(rec["objects"]),
                    goal=tuple(parse_atom_string(s) for s in rec["goal"]),
                )
    return ds
