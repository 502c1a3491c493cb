"""State representation, successor generation, admissible heuristics, and an
exact optimal-cost oracle over a grounded task.

Heuristic values are integers; dead-ends are signalled with INF (a distinguished
sentinel, not a large number).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .pddl import CapacityError, GroundTask

INF = float("inf")


class State:
    """Canonical immutable set of true atom indices."""

    __slots__ = ("atoms", "_frozen", "_hash")

    def __init__(self, atom_indices):
        self.atoms = tuple(sorted(atom_indices))
        self._frozen = frozenset(self.atoms)
        self._hash = hash(self.atoms)

    def __contains__(self, idx):
        return idx in self._frozen

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self):
        return len(self.atoms)

    def __eq__(self, other):
        return isinstance(other, State) and self.atoms == other.atoms

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"State({list(self.atoms)})"

    @property
    def as_set(self):
        return self._frozen


class InapplicableActionError(Exception):
    pass


def initial_state(task: GroundTask) -> State:
    return State(task.init)


def applicable_actions(task: GroundTask, s: State):
    """Actions whose preconditions hold in s, in the task's canonical order."""
    sset = s.as_set
    return [a for a in task.actions if a.precondition <= sset]


def apply_action(task: GroundTask, s: State, a) -> State:
    if not a.precondition <= s.as_set:
        raise InapplicableActionError(f"{a.name} is not applicable")
    return State((s.as_set - a.delete) | a.add)


def is_goal(task: GroundTask, s: State) -> bool:
    return task.goal <= s.as_set


# ---------------------------------------------------------------------------
# h^max and LM-cut


class _RelaxedTask:
    """Shared per-task tables for the delete-relaxation heuristics.

    One instance is reusable across calls but owns scratch buffers, so a single
    instance must not be shared between concurrent callers.
    """

    def __init__(self, task: GroundTask):
        self.task = task
        n = task.num_atoms
        # Virtual atom n: "true" precondition for actions with empty pre.
        # Virtual atom n+1: artificial goal; action len(actions) achieves it.
        self.true_atom = n
        self.goal_atom = n + 1
        self.num_atoms = n + 2
        self.pre = []
        self.add = []
        for a in task.actions:
            pre = sorted(a.precondition) if a.precondition else [self.true_atom]
            self.pre.append(pre)
            self.add.append(sorted(a.add))
        self.pre.append(sorted(task.goal) if task.goal else [self.true_atom])
        self.add.append([self.goal_atom])
        self.base_costs = [a.cost for a in task.actions] + [0]
        self.num_actions = len(self.pre)
        # atom -> actions having it as precondition / as add effect
        self.consumers = [[] for _ in range(self.num_atoms)]
        self.achievers = [[] for _ in range(self.num_atoms)]
        for ai, pre in enumerate(self.pre):
            for p in pre:
                self.consumers[p].append(ai)
            for q in self.add[ai]:
                self.achievers[q].append(ai)

    def hmax(self, state_atoms, costs):
        """Dijkstra-style h^max; returns (dist, supporter) arrays.

        supporter[ai] is the precondition atom of action ai with maximal dist,
        ties broken by lowest atom index (the last such atom to be popped has
        the lowest index among maximal ones only if we track it explicitly).
        """
        dist = [INF] * self.num_atoms
        supporter = [-1] * self.num_actions
        unsat = [len(p) for p in self.pre]
        heap = []
        for p in state_atoms:
            dist[p] = 0
        dist[self.true_atom] = 0
        for p in set(state_atoms) | {self.true_atom}:
            heapq.heappush(heap, (0, p))
        popped = [False] * self.num_atoms
        while heap:
            d, p = heapq.heappop(heap)
            if popped[p] or d > dist[p]:
                continue
            popped[p] = True
            for ai in self.consumers[p]:
                unsat[ai] -= 1
                if unsat[ai] == 0:
                    # max-h supporter with lowest-atom-index tie-break
                    best = None
                    for q in self.pre[ai]:
                        key = (-dist[q], q)
                        if best is None or key < best[0]:
                            best = (key, q)
                    supporter[ai] = best[1]
                    reach = d + costs[ai]
                    for q in self.add[ai]:
                        if reach < dist[q]:
                            dist[q] = reach
                            heapq.heappush(heap, (reach, q))
        return dist, supporter


def h_max(task: GroundTask, s: State, relaxed: _RelaxedTask | None = None):
    relaxed = relaxed or _RelaxedTask(task)
    dist, _ = relaxed.hmax(s.atoms, relaxed.base_costs)
    return dist[relaxed.goal_atom]


def h_lmcut(task: GroundTask, s: State, relaxed: _RelaxedTask | None = None):
    """Landmark-cut: iterated h^max with justification-graph cut extraction."""
    relaxed = relaxed or _RelaxedTask(task)
    costs = list(relaxed.base_costs)
    total = 0
    while True:
        dist, supporter = relaxed.hmax(s.atoms, costs)
        hval = dist[relaxed.goal_atom]
        if hval == INF:
            return INF
        if hval == 0:
            return total

        # Goal zone: atoms reaching the artificial goal via zero-cost
        # justification edges (supporter -> add effect).
        achieved = [dist[q] < INF for q in range(relaxed.num_atoms)]
        in_goal_zone = [False] * relaxed.num_atoms
        in_goal_zone[relaxed.goal_atom] = True
        stack = [relaxed.goal_atom]
        while stack:
            q = stack.pop()
            for ai in relaxed.achievers[q]:
                sup = supporter[ai]
                if costs[ai] == 0 and sup >= 0 and achieved[sup] and not in_goal_zone[sup]:
                    in_goal_zone[sup] = True
                    stack.append(sup)

        # Before zone: forward reachability from the state along justification
        # edges, never expanding atoms inside the goal zone.
        before = [False] * relaxed.num_atoms
        frontier = [p for p in list(s.atoms) + [relaxed.true_atom] if not in_goal_zone[p]]
        for p in frontier:
            before[p] = True
        cut = set()
        while frontier:
            p = frontier.pop()
            for ai in relaxed.consumers[p]:
                if supporter[ai] != p:
                    continue
                crosses = False
                for q in relaxed.add[ai]:
                    if in_goal_zone[q]:
                        crosses = True
                    elif not before[q] and achieved[q]:
                        before[q] = True
                        frontier.append(q)
                if crosses and costs[ai] > 0:
                    cut.add(ai)

        if not cut:  # should not happen for finite h^max > 0
            return total + hval
        m = min(costs[ai] for ai in cut)
        total += m
        for ai in cut:
            costs[ai] -= m


# ---------------------------------------------------------------------------
# Exact oracle and enumeration


def optimal_cost_oracle(task: GroundTask, s: State, max_expansions=1_000_000):
    """Exact h*(s) by uniform-cost search; INF if no goal is reachable."""
    if is_goal(task, s):
        return 0
    dist = {s: 0}
    heap = [(0, 0, s)]
    tie = 0
    expansions = 0
    while heap:
        g, _, cur = heapq.heappop(heap)
        if g > dist.get(cur, INF):
            continue
        if is_goal(task, cur):
            return g
        expansions += 1
        if expansions > max_expansions:
            raise CapacityError(f"oracle exceeded {max_expansions} expansions")
        for a in applicable_actions(task, cur):
            nxt = apply_action(task, cur, a)
            ng = g + a.cost
            if ng < dist.get(nxt, INF):
                dist[nxt] = ng
                tie += 1
                heapq.heappush(heap, (ng, tie, nxt))
    return INF


def enumerate_states(task: GroundTask, limit=100_000):
    """All states reachable from init, with the transition list.

    Returns (states, transitions) where transitions holds (i, action, j) index
    triples into states.  Raises CapacityError beyond the limit.
    """
    init = initial_state(task)
    index = {init: 0}
    states = [init]
    transitions = []
    frontier = [init]
    while frontier:
        cur = frontier.pop()
        i = index[cur]
        for a in applicable_actions(task, cur):
            nxt = apply_action(task, cur, a)
            j = index.get(nxt)
            if j is None:
                if len(states) >= limit:
                    raise CapacityError(f"reachable state count exceeds {limit}")
                j = len(states)
                index[nxt] = j
                states.append(nxt)
                frontier.append(nxt)
            transitions.append((i, a, j))
    return states, transitions


def exact_goal_distances(task: GroundTask, states, transitions):
    """h* for every enumerated state via backward Dijkstra on the transposed graph."""
    n = len(states)
    rev = [[] for _ in range(n)]
    for i, a, j in transitions:
        rev[j].append((i, a.cost))
    dist = [INF] * n
    heap = []
    for i, s in enumerate(states):
        if is_goal(task, s):
            dist[i] = 0
            heapq.heappush(heap, (0, i))
    while heap:
        d, j = heapq.heappop(heap)
        if d > dist[j]:
            continue
        for i, c in rev[j]:
            nd = d + c
            if nd < dist[i]:
                dist[i] = nd
                heapq.heappush(heap, (nd, i))
    return dist


@dataclass
class HeuristicEvaluator:
    """Reusable heuristic with per-instance scratch tables.

    Not safe for concurrent calls on one instance; create one per worker.
    """

    task: GroundTask
    kind: str = "lmcut"  # lmcut | hmax | blind

    def __post_init__(self):
        if self.kind not in ("lmcut", "hmax", "blind"):
            raise ValueError(f"unknown heuristic '{self.kind}'")
        self._relaxed = _RelaxedTask(self.task) if self.kind != "blind" else None

    def __call__(self, s: State):
        if self.kind == "blind":
            return 0 if is_goal(self.task, s) else min(a.cost for a in self.task.actions) if self.task.actions else 0
        if self.kind == "hmax":
            return h_max(self.task, s, self._relaxed)
        return h_lmcut(self.task, s, self._relaxed)
