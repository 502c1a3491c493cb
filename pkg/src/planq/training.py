"""Supervised training: MAE loss, the explicit and heuristic hinge
regularizers on non-teacher Q-values, the Adam loop over seeds, and dynamic
coverage validation.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from . import pddl
from .encoding import encode_state
from .models import Model, build_model, embeddings, readout_q, readout_v, save_model
from .policy import PolicyConfig, run_policy
from .search import INF
from .teacher import Dataset, GeneratorSpec, TrainingTuple, builtin_domain, feasible_sizes, generate_instance
from .util import derive_seed

REG_NONE = "none"
REG_EXPLICIT = "explicit"
REG_HEURISTIC = "heuristic"

DEFAULT_DEAD_END_VALUE = 1120.0  # substituted for infinite sibling heuristics

LOG_COLUMNS = ["epoch", "seed", "mean_loss", "mean_penalty", "err", "diff", "val_score"]


class DataError(Exception):
    """Dataset/encoding inconsistency detected while building a loss."""


@dataclass
class LossConfig:
    head: str  # v | q
    regularizer: str = REG_NONE
    lam: float = 1.0
    dead_end_value: float = DEFAULT_DEAD_END_VALUE

    def __post_init__(self):
        if self.head not in ("v", "q"):
            raise ValueError(f"unknown head '{self.head}'")
        if self.regularizer not in (REG_NONE, REG_EXPLICIT, REG_HEURISTIC):
            raise ValueError(f"unknown regularizer '{self.regularizer}'")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.regularizer != REG_NONE and self.head != "q":
            raise ValueError("regularizers require the Q head")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    learning_rate: float | None = None  # None: per-regularizer default
    clip: float = 0.1  # per-parameter gradient value clip
    seeds: int = 3
    seed: int = 0  # root seed
    hidden_size: int = 32
    layers: int = 30
    aggregator: str = "logsumexp"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        for name in ("epochs", "batch_size", "clip", "seeds", "hidden_size", "layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def default_learning_rate(loss_cfg: LossConfig):
    # regularized Q models train with the higher rate
    return 0.002 if loss_cfg.regularizer != REG_NONE else 0.0002


# ---------------------------------------------------------------------------
# Loss primitives


def mae_v(hstar, v):
    if isinstance(v, ad.Tensor):
        return ad.abs_(ad.add(v, -float(hstar)))
    return abs(hstar - v)


def mae_q(hstar, q_teacher):
    return mae_v(hstar, q_teacher)


def bound_explicit(hstar):
    return hstar + 1


def bound_heuristic(hstar, cost, sib_h, dead_end_value=DEFAULT_DEAD_END_VALUE):
    h = dead_end_value if sib_h == INF else sib_h
    return max(hstar + 1, cost + h)


def omega(q_others, bounds):
    """Hinge penalty sum(max(0, B_i - q_i)); empty sequences give 0."""
    if isinstance(q_others, ad.Tensor):
        b = np.asarray(bounds, dtype=np.float64).reshape(q_others.shape)
        if len(bounds) != q_others.shape[0]:
            raise ValueError("bounds/Q length mismatch")
        return ad.sum_all(ad.relu(ad.sub(ad.tensor(b), q_others)))
    if len(q_others) != len(bounds):
        raise ValueError("bounds/Q length mismatch")
    return sum(max(0.0, b - q) for q, b in zip(q_others, bounds))


@dataclass
class SampleLoss:
    loss: float  # MAE part
    penalty: float  # unweighted regularizer value
    total: float  # loss + lam * penalty
    q_values: list  # teacher-first Q snapshot (Q head), [] for V


def encode_tuple(model: Model, dataset: Dataset, tup: TrainingTuple):
    """Symbolic encoding of one training tuple; for Q heads the teacher action
    is encoded at position 0, the non-teacher actions after it in order."""
    rec = dataset.instance_for(tup)
    actions = None
    if model.head == "q":
        if tup.teacher in tup.others:
            raise DataError(f"teacher action {tup.teacher} also listed as non-teacher")
        actions = [tup.teacher] + list(tup.others)
    return encode_state(model.config, rec.objects, tup.state, rec.goal, actions)


def tuple_bounds(dataset: Dataset, tup: TrainingTuple, cfg: LossConfig):
    if cfg.regularizer == REG_EXPLICIT:
        return [bound_explicit(tup.hstar)] * len(tup.others)
    return [
        bound_heuristic(tup.hstar, dataset.meta.schema_cost(name), sib, cfg.dead_end_value)
        for (name, _args), sib in zip(tup.others, tup.sibling_heuristics)
    ]


def sample_loss(model: Model, dataset: Dataset, tup: TrainingTuple, cfg: LossConfig):
    """Returns (loss tensor for backward, SampleLoss summary)."""
    if model.head != cfg.head:
        raise ValueError(f"model head '{model.head}' does not match loss head '{cfg.head}'")
    enc = encode_tuple(model, dataset, tup)
    emb = embeddings(model, enc)
    if cfg.head == "v":
        v = readout_v(model, emb, enc)
        loss_t = mae_v(tup.hstar, v)
        total = ad.sum_all(loss_t)
        val = total.item()
        return total, SampleLoss(loss=val, penalty=0.0, total=val, q_values=[])

    q = readout_q(model, emb, enc)  # (1 + len(others), 1), teacher first
    q_teacher = ad.gather_rows(q, [0])
    loss_t = ad.sum_all(mae_q(tup.hstar, q_teacher))
    penalty_val = 0.0
    total = loss_t
    if cfg.regularizer != REG_NONE and tup.others:
        q_others = ad.gather_rows(q, list(range(1, 1 + len(tup.others))))
        pen_t = omega(q_others, tuple_bounds(dataset, tup, cfg))
        penalty_val = pen_t.item()
        total = ad.add(loss_t, ad.scale(pen_t, cfg.lam))
    snapshot = [float(x) for x in q.data.ravel()]
    return total, SampleLoss(
        loss=loss_t.item(),
        penalty=penalty_val,
        total=loss_t.item() + cfg.lam * penalty_val,
        q_values=snapshot,
    )


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, clip=None):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.clip = clip
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if self.clip is not None:
                g = np.clip(g, -self.clip, self.clip)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


# ---------------------------------------------------------------------------
# Training loop


class NonFiniteLossError(Exception):
    pass


def train(
    dataset: Dataset,
    architecture: str,
    head: str,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    validation_hook=None,
    log=None,
):
    """Multi-seed Adam training; returns (best model, log rows).

    The validation hook is called with the model after each epoch and must
    return a score (higher is better).  Without a hook, the negative epoch
    mean loss is used.  The best (score, earliest seed, earliest epoch)
    checkpoint across all seeds is returned.
    """
    if not dataset.tuples:
        raise ValueError("dataset is empty")
    lr = train_cfg.learning_rate or default_learning_rate(loss_cfg)
    rows = []
    best = None  # (score, seed_idx, epoch, params snapshot, model_seed)

    for seed_idx in range(train_cfg.seeds):
        model_seed = derive_seed(train_cfg.seed, "model", seed_idx)
        model = build_model(
            dataset.meta,
            architecture,
            head,
            k=train_cfg.hidden_size,
            L=train_cfg.layers,
            seed=model_seed,
            aggregator=train_cfg.aggregator,
        )
        opt = Adam(
            model.params, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.eps, clip=train_cfg.clip
        )
        order = list(range(len(dataset.tuples)))
        try:
            for epoch in range(train_cfg.epochs):
                shuffle_rng = random.Random(derive_seed(train_cfg.seed, "shuffle", seed_idx, epoch))
                shuffle_rng.shuffle(order)
                sum_loss = sum_penalty = sum_err = 0.0
                diff_sum, diff_count = 0.0, 0
                for start in range(0, len(order), train_cfg.batch_size):
                    batch = order[start : start + train_cfg.batch_size]
                    opt.zero_grad()
                    for idx in batch:
                        tup = dataset.tuples[idx]
                        total_t, sl = sample_loss(model, dataset, tup, loss_cfg)
                        if not np.isfinite(sl.total):
                            raise NonFiniteLossError(
                                f"non-finite loss at seed {seed_idx}, epoch {epoch}, tuple {idx}"
                            )
                        ad.scale(total_t, 1.0 / len(batch)).backward()
                        sum_loss += sl.loss
                        sum_penalty += sl.penalty
                        if head == "q" and sl.q_values:
                            sum_err += abs(tup.hstar - sl.q_values[0])
                            for qi in sl.q_values[1:]:
                                diff_sum += abs(sl.q_values[0] - qi)
                                diff_count += 1
                        else:
                            sum_err += sl.loss
                    opt.step()
                n = len(order)
                score = (
                    validation_hook(model) if validation_hook is not None else -sum_loss / n
                )
                row = {
                    "epoch": epoch,
                    "seed": seed_idx,
                    "mean_loss": sum_loss / n,
                    "mean_penalty": sum_penalty / n,
                    "err": sum_err / n,
                    "diff": diff_sum / diff_count if diff_count else 0.0,
                    "val_score": score,
                }
                rows.append(row)
                if best is None or score > best[0]:
                    snapshot = {name: t.data.copy() for name, t in model.store.items()}
                    best = (score, seed_idx, epoch, snapshot, model_seed)
        except NonFiniteLossError as exc:
            if log:
                log(f"aborting seed {seed_idx}: {exc}")
            continue

    if best is None:
        raise NonFiniteLossError("all seeds aborted with non-finite losses")
    _, _, _, snapshot, model_seed = best
    best_model = build_model(
        dataset.meta,
        architecture,
        head,
        k=train_cfg.hidden_size,
        L=train_cfg.layers,
        seed=model_seed,
        aggregator=train_cfg.aggregator,
    )
    for name, data in snapshot.items():
        best_model.store[name].data = data.copy()
    return best_model, rows


def write_training_log(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in LOG_COLUMNS})


def _fmt(x):
    return f"{x:.10g}" if isinstance(x, float) else x


# ---------------------------------------------------------------------------
# Dynamic coverage validation


@dataclass
class ValidationConfig:
    runs_per_size: int = 5
    stop_coverage: float = 0.3
    max_size: int | None = None
    step_limit_base: int = 100
    seed: int = 0
    forbid_revisit: bool = True
    max_expansions_grounding: int = 1_000_000


def dynamic_validation(model: Model, domain_tag, cfg: ValidationConfig | None = None, instance_pool=None):
    """Runs the policy on increasingly large on-the-fly instances; the score
    is the sum of per-size coverages.  Stops once coverage drops below the
    threshold (unsolved runs are failures, never errors)."""
    cfg = cfg or ValidationConfig()
    score = 0.0
    if instance_pool is not None:
        groups = instance_pool  # list of (size, [Instance])
        domain = None
    else:
        domain = builtin_domain(domain_tag)
        sizes = feasible_sizes(domain_tag, hi=cfg.max_size or 100)
        groups = []
        for n in sizes:
            insts = [
                generate_instance(GeneratorSpec(domain_tag, n, derive_seed(cfg.seed, "val", n, j)))
                for j in range(cfg.runs_per_size)
            ]
            groups.append((n, insts))
    for n, insts in groups:
        solved = 0
        for inst in insts:
            d = domain or builtin_domain(inst.domain_name)
            task = pddl.ground(d, inst)
            pc = PolicyConfig(model.head, cfg.step_limit_base + n, cfg.forbid_revisit)
            if run_policy(model, task, pc).solved:
                solved += 1
        cov = solved / len(insts)
        score += cov
        if cov < cfg.stop_coverage:
            break
    return score


# ---------------------------------------------------------------------------
# Estimator facade


class GeneralizedPolicyLearner(BaseEstimator):
    """sklearn-style wrapper: fit on a teacher Dataset, predict actions.

    Hyperparameters mirror LossConfig/TrainConfig; get_params/set_params come
    from BaseEstimator, so the learner composes with the usual tooling.
    """

    def __init__(
        self,
        architecture="rgnn",
        head="q",
        regularizer=REG_EXPLICIT,
        lam=1.0,
        dead_end_value=DEFAULT_DEAD_END_VALUE,
        hidden_size=32,
        layers=30,
        epochs=100,
        batch_size=256,
        learning_rate=None,
        clip=0.1,
        seeds=3,
        seed=0,
        validation_domain=None,
    ):
        self.architecture = architecture
        self.head = head
        self.regularizer = regularizer
        self.lam = lam
        self.dead_end_value = dead_end_value
        self.hidden_size = hidden_size
        self.layers = layers
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.clip = clip
        self.seeds = seeds
        self.seed = seed
        self.validation_domain = validation_domain

    def fit(self, dataset: Dataset, y=None):
        loss_cfg = LossConfig(self.head, self.regularizer, self.lam, self.dead_end_value)
        train_cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            clip=self.clip,
            seeds=self.seeds,
            seed=self.seed,
            hidden_size=self.hidden_size,
            layers=self.layers,
        )
        hook = None
        if self.validation_domain:
            vcfg = ValidationConfig(seed=derive_seed(self.seed, "dynval"))
            hook = lambda model: dynamic_validation(model, self.validation_domain, vcfg)
        self.model_, self.log_ = train(
            dataset, self.architecture, self.head, loss_cfg, train_cfg, validation_hook=hook
        )
        return self

    def predict(self, task, state):
        """Greedy action for one state of a ground task."""
        from .policy import select_action_q, select_action_v

        select = select_action_v if self.model_.head == "v" else select_action_q
        choice = select(self.model_, task, state)
        return choice[0] if choice else None

    def save(self, path):
        save_model(self.model_, path)
