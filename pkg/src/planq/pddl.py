"""STRIPS subset of PDDL: parsing, type checking, and grounding.

Supports `:strips`, `:typing` and `:action-costs` (constant per-schema costs
via `(increase (total-cost) n)`).  Everything else (ADL, quantifiers,
conditional effects, derived predicates, numeric fluents) is rejected with a
diagnostic carrying the source position.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

ROOT_TYPE = "object"

SUPPORTED_REQUIREMENTS = {":strips", ":typing", ":action-costs", ":negative-preconditions"}


class PddlError(Exception):
    """Parse or validation failure, with a source position when known."""

    def __init__(self, message, line=None, col=None, filename=None):
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename
        super().__init__(self.format())

    def format(self):
        prefix = ""
        if self.line is not None:
            prefix = f"{self.filename or '<input>'}:{self.line}:{self.col}: "
        return prefix + self.message


class CapacityError(Exception):
    """Grounding or search exceeded a configured budget."""


# ---------------------------------------------------------------------------
# S-expression reader


@dataclass
class SExpr:
    value: object  # str for atoms, list[SExpr] for lists
    line: int
    col: int

    @property
    def is_list(self):
        return isinstance(self.value, list)


def _tokenize(text):
    line, col = 1, 0
    i, n = 0, len(text)
    tokens = []
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 0
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append((c, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append((text[start:i], line, start_col))
    return tokens


def _read_sexprs(text, filename=None):
    tokens = _tokenize(text)
    pos = 0

    def read_one():
        nonlocal pos
        if pos >= len(tokens):
            raise PddlError("unexpected end of input", filename=filename)
        tok, line, col = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise PddlError("unbalanced parenthesis", line, col, filename)
                if tokens[pos][0] == ")":
                    pos += 1
                    return SExpr(items, line, col)
                items.append(read_one())
        if tok == ")":
            raise PddlError("unexpected ')'", line, col, filename)
        return SExpr(tok.lower(), line, col)

    exprs = []
    while pos < len(tokens):
        exprs.append(read_one())
    return exprs


# ---------------------------------------------------------------------------
# Domain model


@dataclass(frozen=True)
class Predicate:
    name: str
    param_types: tuple
    index: int  # unique identifier, assigned in declaration order

    @property
    def arity(self):
        return len(self.param_types)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple  # ((var, type), ...)
    precondition: frozenset  # lifted atoms (pred_name, args)
    add: frozenset
    delete: frozenset
    cost: int = 1

    @property
    def arity(self):
        return len(self.parameters)


@dataclass(frozen=True)
class Domain:
    name: str
    predicates: tuple  # Predicate, in declaration order
    schemas: tuple  # ActionSchema, in declaration order
    types: dict = field(default_factory=dict, hash=False)  # child -> parent

    def predicate(self, name):
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def type_and_ancestors(self, t):
        seen = [t]
        while t in self.types and self.types[t] != t:
            t = self.types[t]
            seen.append(t)
        if ROOT_TYPE not in seen:
            seen.append(ROOT_TYPE)
        return seen


@dataclass(frozen=True)
class Instance:
    name: str
    domain_name: str
    objects: tuple  # ((name, type), ...)
    init: frozenset  # ground atoms (pred_name, args)
    goal: frozenset


# ---------------------------------------------------------------------------
# Parsing helpers


def _expect_list(expr, what, filename):
    if not expr.is_list:
        raise PddlError(f"expected {what}, got '{expr.value}'", expr.line, expr.col, filename)
    return expr.value


def _atom_name(expr, filename):
    if expr.is_list:
        raise PddlError("expected a name", expr.line, expr.col, filename)
    return expr.value


def _parse_typed_list(items, filename, default_type=ROOT_TYPE):
    """Parse `a b - t c d - t2 e` into ((a,t),(b,t),(c,t2),(d,t2),(e,default))."""
    out = []
    pending = []
    i = 0
    while i < len(items):
        tok = _atom_name(items[i], filename)
        if tok == "-":
            if i + 1 >= len(items):
                raise PddlError("dangling '-' in typed list", items[i].line, items[i].col, filename)
            t = _atom_name(items[i + 1], filename)
            out.extend((name, t) for name in pending)
            pending = []
            i += 2
        else:
            pending.append(tok)
            i += 1
    out.extend((name, default_type) for name in pending)
    return tuple(out)


def _parse_lifted_atom(expr, filename):
    items = _expect_list(expr, "atom", filename)
    if not items:
        raise PddlError("empty atom", expr.line, expr.col, filename)
    name = _atom_name(items[0], filename)
    args = tuple(_atom_name(a, filename) for a in items[1:])
    return (name, args)


_UNSUPPORTED = {"forall", "exists", "when", "or", "imply", "not"}


def _parse_condition(expr, filename, allow_not=False):
    """Flatten a precondition/goal into a set of positive atoms."""
    items = _expect_list(expr, "condition", filename)
    if items and not items[0].is_list and items[0].value == "and":
        atoms = []
        for sub in items[1:]:
            atoms.extend(_parse_condition(sub, filename, allow_not))
        return atoms
    if items and not items[0].is_list and items[0].value in _UNSUPPORTED:
        raise PddlError(
            f"unsupported construct '({items[0].value} ...)' in condition",
            expr.line, expr.col, filename,
        )
    return [_parse_lifted_atom(expr, filename)]


def _parse_effect(expr, filename, schema_name):
    """Returns (add, delete, cost_increase or None)."""
    items = _expect_list(expr, "effect", filename)
    add, delete = [], []
    cost = None

    def walk(e):
        nonlocal cost
        sub = _expect_list(e, "effect", filename)
        if not sub:
            raise PddlError("empty effect", e.line, e.col, filename)
        head = sub[0]
        if not head.is_list and head.value == "and":
            for s in sub[1:]:
                walk(s)
        elif not head.is_list and head.value == "not":
            if len(sub) != 2:
                raise PddlError("malformed (not ...)", e.line, e.col, filename)
            delete.append(_parse_lifted_atom(sub[1], filename))
        elif not head.is_list and head.value == "increase":
            if len(sub) != 3:
                raise PddlError("malformed (increase ...)", e.line, e.col, filename)
            fluent = _parse_lifted_atom(sub[1], filename)
            if fluent[0] != "total-cost":
                raise PddlError(
                    f"only (total-cost) increase is supported, got '{fluent[0]}'",
                    e.line, e.col, filename,
                )
            amount = sub[2]
            if amount.is_list or not amount.value.isdigit():
                raise PddlError(
                    "action cost must be a non-negative integer literal",
                    e.line, e.col, filename,
                )
            cost = int(amount.value)
        elif not head.is_list and head.value in {"forall", "when", "or", "exists"}:
            raise PddlError(
                f"unsupported construct '({head.value} ...)' in effect of '{schema_name}'",
                e.line, e.col, filename,
            )
        else:
            add.append(_parse_lifted_atom(e, filename))

    walk(expr)
    return add, delete, cost


def parse_domain(text, filename=None):
    exprs = _read_sexprs(text, filename)
    if not exprs:
        raise PddlError("empty domain file", filename=filename)
    top = _expect_list(exprs[0], "(define ...)", filename)
    if not top or top[0].is_list or top[0].value != "define":
        raise PddlError("expected (define (domain ...))", exprs[0].line, exprs[0].col, filename)

    name = None
    types = {}
    predicates = []
    schemas = []
    pred_names = set()

    for section in top[1:]:
        items = _expect_list(section, "domain section", filename)
        if not items:
            continue
        head = _atom_name(items[0], filename)
        if head == "domain":
            name = _atom_name(items[1], filename)
        elif head == ":requirements":
            for req in items[1:]:
                r = _atom_name(req, filename)
                if r not in SUPPORTED_REQUIREMENTS:
                    raise PddlError(f"unsupported requirement '{r}'", req.line, req.col, filename)
        elif head == ":types":
            for child, parent in _parse_typed_list(items[1:], filename):
                if child in types:
                    raise PddlError(f"duplicate type '{child}'", section.line, section.col, filename)
                types[child] = parent
        elif head == ":constants":
            raise PddlError("unsupported section ':constants'", section.line, section.col, filename)
        elif head == ":predicates":
            for pexpr in items[1:]:
                psub = _expect_list(pexpr, "predicate declaration", filename)
                pname = _atom_name(psub[0], filename)
                if pname in pred_names:
                    raise PddlError(f"duplicate predicate '{pname}'", pexpr.line, pexpr.col, filename)
                pred_names.add(pname)
                params = _parse_typed_list(psub[1:], filename)
                predicates.append(
                    Predicate(pname, tuple(t for _, t in params), index=len(predicates))
                )
        elif head == ":functions":
            for fexpr in items[1:]:
                fsub = _expect_list(fexpr, "function declaration", filename)
                fname = _atom_name(fsub[0], filename)
                if fname != "total-cost":
                    raise PddlError(
                        f"unsupported function '{fname}' (only total-cost)",
                        fexpr.line, fexpr.col, filename,
                    )
        elif head == ":action":
            schemas.append(_parse_action(items, section, filename))
        else:
            raise PddlError(f"unsupported section '{head}'", section.line, section.col, filename)

    if name is None:
        raise PddlError("missing (domain <name>)", filename=filename)
    if len({s.name for s in schemas}) != len(schemas):
        raise PddlError("duplicate action name", filename=filename)
    dom = Domain(name, tuple(predicates), tuple(schemas), types)
    _validate_domain(dom, filename)
    return dom


def _parse_action(items, section, filename):
    aname = _atom_name(items[1], filename)
    params = ()
    precondition = frozenset()
    add = frozenset()
    delete = frozenset()
    cost = None
    i = 2
    while i < len(items):
        key = _atom_name(items[i], filename)
        if key == ":parameters":
            params = _parse_typed_list(_expect_list(items[i + 1], "parameter list", filename), filename)
        elif key == ":precondition":
            precondition = frozenset(_parse_condition(items[i + 1], filename))
        elif key == ":effect":
            a, d, cost = _parse_effect(items[i + 1], filename, aname)
            add, delete = frozenset(a), frozenset(d)
        else:
            raise PddlError(f"unsupported action keyword '{key}'", items[i].line, items[i].col, filename)
        i += 2
    if add & delete:
        raise PddlError(
            f"action '{aname}' adds and deletes the same atom", section.line, section.col, filename
        )
    return ActionSchema(aname, params, precondition, add, delete, cost if cost is not None else 1)


def _validate_domain(dom, filename):
    declared = {p.name: p for p in dom.predicates}
    for schema in dom.schemas:
        param_vars = {v for v, _ in schema.parameters}
        for atom_set in (schema.precondition, schema.add, schema.delete):
            for pname, args in atom_set:
                if pname not in declared:
                    raise PddlError(
                        f"unknown predicate '{pname}' in action '{schema.name}'", filename=filename
                    )
                if len(args) != declared[pname].arity:
                    raise PddlError(
                        f"arity mismatch for '{pname}' in action '{schema.name}'", filename=filename
                    )
                for a in args:
                    if a.startswith("?") and a not in param_vars:
                        raise PddlError(
                            f"unbound variable '{a}' in action '{schema.name}'", filename=filename
                        )
                    if not a.startswith("?"):
                        raise PddlError(
                            f"constants are unsupported ('{a}' in action '{schema.name}')",
                            filename=filename,
                        )


def parse_instance(text, domain, filename=None):
    exprs = _read_sexprs(text, filename)
    if not exprs:
        raise PddlError("empty problem file", filename=filename)
    top = _expect_list(exprs[0], "(define ...)", filename)
    if not top or top[0].is_list or top[0].value != "define":
        raise PddlError("expected (define (problem ...))", exprs[0].line, exprs[0].col, filename)

    name = None
    domain_name = None
    objects = ()
    init = []
    goal = []

    for section in top[1:]:
        items = _expect_list(section, "problem section", filename)
        if not items:
            continue
        head = _atom_name(items[0], filename)
        if head == "problem":
            name = _atom_name(items[1], filename)
        elif head == ":domain":
            domain_name = _atom_name(items[1], filename)
        elif head == ":objects":
            objects = _parse_typed_list(items[1:], filename)
        elif head == ":init":
            for aexpr in items[1:]:
                sub = _expect_list(aexpr, "init atom", filename)
                if sub and not sub[0].is_list and sub[0].value == "=":
                    continue  # (= (total-cost) 0)
                init.append(_parse_lifted_atom(aexpr, filename))
        elif head == ":goal":
            goal = _parse_condition(items[1], filename)
        elif head == ":metric":
            continue
        else:
            raise PddlError(f"unsupported section '{head}'", section.line, section.col, filename)

    inst = Instance(name or "unnamed", domain_name or domain.name, objects, frozenset(init), frozenset(goal))
    _validate_instance(inst, domain, filename)
    return inst


def _validate_instance(inst, domain, filename):
    obj_types = dict(inst.objects)
    if len(obj_types) != len(inst.objects):
        raise PddlError("duplicate object name", filename=filename)
    for atom_set, where in ((inst.init, "init"), (inst.goal, "goal")):
        for pname, args in atom_set:
            pred = domain.predicate(pname)
            if pred is None:
                raise PddlError(f"unknown predicate '{pname}' in {where}", filename=filename)
            if len(args) != pred.arity:
                raise PddlError(
                    f"arity mismatch: '{pname}' expects {pred.arity} args, got {len(args)} in {where}",
                    filename=filename,
                )
            for arg, want in zip(args, pred.param_types):
                if arg not in obj_types:
                    raise PddlError(f"unknown object '{arg}' in {where}", filename=filename)
                if want != ROOT_TYPE and want not in domain.type_and_ancestors(obj_types[arg]):
                    raise PddlError(
                        f"type mismatch: '{arg}' is {obj_types[arg]}, '{pname}' wants {want}",
                        filename=filename,
                    )


# ---------------------------------------------------------------------------
# Grounding


@dataclass(frozen=True)
class GroundAction:
    name: str  # canonical "schema(o1,o2)" form
    schema_index: int
    binding: tuple
    precondition: frozenset  # atom indices
    add: frozenset
    delete: frozenset
    cost: int


@dataclass
class GroundTask:
    domain: Domain
    instance: Instance
    atoms: tuple  # ground atoms (pred_name, args), index = position
    atom_index: dict  # atom -> index
    actions: tuple  # GroundAction, deterministic order
    init: frozenset  # atom indices
    goal: frozenset  # atom indices

    @property
    def num_atoms(self):
        return len(self.atoms)

    def atom_name(self, idx):
        return format_atom(self.atoms[idx])

    def decode_state(self, atom_indices):
        return [self.atoms[i] for i in sorted(atom_indices)]


def format_atom(atom):
    name, args = atom
    return f"{name}({','.join(args)})"


def parse_atom_string(s):
    name, _, rest = s.partition("(")
    rest = rest.rstrip(")")
    args = tuple(a for a in rest.split(",") if a)
    return (name, args)


def ground(domain, instance, max_actions=1_000_000):
    """Naive type-consistent instantiation with static-predicate pruning.

    Ground actions whose add and delete sets intersect (degenerate self-loops
    such as move(a, a)) are dropped, matching the schema-level invariant.
    """
    obj_types = dict(instance.objects)
    by_type = {}
    for obj, t in instance.objects:
        for anc in domain.type_and_ancestors(t):
            by_type.setdefault(anc, []).append(obj)
    for objs in by_type.values():
        objs.sort()

    static = {
        p.name
        for p in domain.predicates
        if not any(
            any(pname == p.name for pname, _ in s.add) or any(pname == p.name for pname, _ in s.delete)
            for s in domain.schemas
        )
    }
    init_set = instance.init

    ground_actions = []
    for si, schema in enumerate(domain.schemas):
        candidates = [by_type.get(t, []) for _, t in schema.parameters]
        for binding in itertools.product(*candidates):
            env = {v: o for (v, _), o in zip(schema.parameters, binding)}
            pre = frozenset((p, tuple(env[a] for a in args)) for p, args in schema.precondition)
            add = frozenset((p, tuple(env[a] for a in args)) for p, args in schema.add)
            dele = frozenset((p, tuple(env[a] for a in args)) for p, args in schema.delete)
            if add & dele:
                continue
            if any(p in static and atom not in init_set for atom in pre for p in [atom[0]]):
                continue
            ground_actions.append((si, schema, binding, pre, add, dele))
            if len(ground_actions) > max_actions:
                raise CapacityError(f"grounding exceeds {max_actions} actions")

    pred_index = {p.name: p.index for p in domain.predicates}
    universe = set(instance.init) | set(instance.goal)
    for _, _, _, pre, add, dele in ground_actions:
        universe |= pre | add | dele
    atoms = tuple(sorted(universe, key=lambda a: (pred_index[a[0]], a[1])))
    atom_index = {a: i for i, a in enumerate(atoms)}

    actions = tuple(
        GroundAction(
            name=format_atom((schema.name, binding)),
            schema_index=si,
            binding=binding,
            precondition=frozenset(atom_index[a] for a in pre),
            add=frozenset(atom_index[a] for a in add),
            delete=frozenset(atom_index[a] for a in dele),
            cost=schema.cost,
        )
        for si, schema, binding, pre, add, dele in ground_actions
    )

    return GroundTask(
        domain=domain,
        instance=instance,
        atoms=atoms,
        atom_index=atom_index,
        actions=actions,
        init=frozenset(atom_index[a] for a in instance.init),
        goal=frozenset(atom_index[a] for a in instance.goal),
    )


# ---------------------------------------------------------------------------
# Pretty-printing (round-trip support)


def format_domain(domain):
    lines = [f"(define (domain {domain.name})"]
    reqs = [":strips"]
    if domain.types:
        reqs.append(":typing")
    if any(s.cost != 1 for s in domain.schemas):
        reqs.append(":action-costs")
    lines.append(f"  (:requirements {' '.join(reqs)})")
    if domain.types:
        parts = [f"{c} - {p}" for c, p in sorted(domain.types.items())]
        lines.append(f"  (:types {' '.join(parts)})")
    preds = []
    for p in domain.predicates:
        args = " ".join(f"?x{i} - {t}" for i, t in enumerate(p.param_types))
        preds.append(f"({p.name}{' ' + args if args else ''})")
    lines.append(f"  (:predicates {' '.join(preds)})")
    use_costs = any(s.cost != 1 for s in domain.schemas)
    if use_costs:
        lines.append("  (:functions (total-cost))")
    for s in domain.schemas:
        params = " ".join(f"{v} - {t}" for v, t in s.parameters)
        pre = " ".join(format_lifted(a) for a in sorted(s.precondition))
        effs = [format_lifted(a) for a in sorted(s.add)]
        effs += [f"(not {format_lifted(a)})" for a in sorted(s.delete)]
        if use_costs:
            effs.append(f"(increase (total-cost) {s.cost})")
        lines.append(f"  (:action {s.name}")
        lines.append(f"    :parameters ({params})")
        lines.append(f"    :precondition (and {pre})")
        lines.append(f"    :effect (and {' '.join(effs)}))")
    lines.append(")")
    return "\n".join(lines)


def format_lifted(atom):
    name, args = atom
    return f"({name}{''.join(' ' + a for a in args)})"


def format_instance(inst):
    lines = [f"(define (problem {inst.name})", f"  (:domain {inst.domain_name})"]
    objs = " ".join(f"{o} - {t}" for o, t in inst.objects)
    lines.append(f"  (:objects {objs})")
    init = " ".join(format_lifted(a) for a in sorted(inst.init))
    lines.append(f"  (:init {init})")
    goal = " ".join(format_lifted(a) for a in sorted(inst.goal))
    lines.append(f"  (:goal (and {goal}))")
    lines.append(")")
    return "\n".join(lines)
