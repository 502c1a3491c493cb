"""Greedy execution of learned state-value and Q-value policies, with revisit
filtering and step limits.

V policies encode and evaluate every candidate successor per step; Q policies
encode the action-extended current state once per step.  ForwardStats record
the difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .encoding import encode_state, encode_task_state, task_goal_atoms
from .models import ForwardStats, Model, forward_value
from .search import State, applicable_actions, apply_action, initial_state, is_goal

SOLVED = "solved"
STEP_LIMIT = "step-limit"
DEAD_END = "dead-end"
ALL_VISITED = "all-successors-visited"


@dataclass
class PolicyConfig:
    head: str  # v | q
    step_limit: int
    forbid_revisit: bool = True

    def __post_init__(self):
        if self.step_limit < 1:
            raise ValueError("step limit must be >= 1")
        if self.head not in ("v", "q"):
            raise ValueError(f"unknown head '{self.head}'")


@dataclass
class RunResult:
    outcome: str
    trajectory: list  # states s0..sT
    actions: list  # ground actions taken
    stats: ForwardStats = field(default_factory=ForwardStats)

    @property
    def plan_length(self):
        return len(self.trajectory) - 1

    @property
    def solved(self):
        return self.outcome == SOLVED


def _candidates(task, s, visited):
    """(action, successor) pairs in task order, revisit-filtered when visited
    is not None; also returns whether any action was applicable at all."""
    acts = applicable_actions(task, s)
    pairs = []
    for a in acts:
        succ = apply_action(task, s, a)
        if visited is not None and succ in visited:
            continue
        pairs.append((a, succ))
    return pairs, bool(acts)


def select_action_v(model: Model, task, s: State, visited=None, stats: ForwardStats | None = None):
    """argmin over candidates of cost(a) + V(s'); one encoder call per
    candidate successor.  Returns (action, successor) or None."""
    pairs, _ = _candidates(task, s, visited)
    if not pairs:
        return None
    goal = task_goal_atoms(task)
    objects = [o for o, _ in task.instance.objects]
    best = None
    for a, succ in pairs:  # task order makes lowest-index win on ties
        enc = encode_state(model.config, objects, task.decode_state(succ.atoms), goal)
        v = forward_value(model, enc, stats).item()
        score = a.cost + v
        if best is None or score < best[0]:
            best = (score, a, succ)
    return best[1], best[2]


def select_action_q(model: Model, task, s: State, visited=None, stats: ForwardStats | None = None):
    """argmin Q(s, a) over revisit-filtered candidates; exactly one encoder
    call.  Returns (action, successor) or None."""
    acts = applicable_actions(task, s)
    if not acts:
        return None
    enc = encode_task_state(model.config, task, s, actions=acts)
    q = forward_value(model, enc, stats).data.ravel()
    best = None
    for i, a in enumerate(acts):
        succ = apply_action(task, s, a)
        if visited is not None and succ in visited:
            continue
        if best is None or q[i] < best[0]:
            best = (q[i], a, succ)
    if best is None:
        return None
    return best[1], best[2]


def run_policy(model: Model, task, cfg: PolicyConfig) -> RunResult:
    """Iterated greedy selection from the initial state until goal, step
    limit, or candidate exhaustion."""
    select = select_action_v if cfg.head == "v" else select_action_q
    stats = ForwardStats()
    s = initial_state(task)
    visited = {s} if cfg.forbid_revisit else None
    trajectory = [s]
    actions = []
    for _ in range(cfg.step_limit):
        if is_goal(task, s):
            return RunResult(SOLVED, trajectory, actions, stats)
        choice = select(model, task, s, visited, stats)
        if choice is None:
            _, any_applicable = _candidates(task, s, None)
            outcome = ALL_VISITED if any_applicable else DEAD_END
            return RunResult(outcome, trajectory, actions, stats)
        a, s = choice
        actions.append(a)
        trajectory.append(s)
        if visited is not None:
            visited.add(s)
    if is_goal(task, s):
        return RunResult(SOLVED, trajectory, actions, stats)
    return RunResult(STEP_LIMIT, trajectory, actions, stats)


def write_plan_file(task, actions, path):
    """Standard validator-compatible plan format: one `(name obj ...)` per line."""
    with open(path, "w") as f:
        for a in actions:
            name = task.domain.schemas[a.schema_index].name
            f.write(f"({name}{''.join(' ' + o for o in a.binding)})\n")
