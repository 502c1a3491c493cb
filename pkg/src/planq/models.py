"""Value-network architectures: the relational GNN over raw atoms and the
relational graph convolutional network over the OE/OAE graphs, with V and Q
readout heads, plus checkpoint persistence.

All parameters are float64.  Initialization is uniform in +-sqrt(1/fan_in)
from a seeded generator, so identical seeds give bit-identical models.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .encoding import OAE, OE, RGNN, EncodedState, EncodingConfig
from .teacher import DomainMeta

CHECKPOINT_VERSION = 1
_MAGIC = b"PQCK"


@dataclass
class ForwardStats:
    encoder_calls: int = 0
    node_updates: int = 0  # nodes x layers
    wall_time: float = 0.0

    def merge(self, other):
        self.encoder_calls += other.encoder_calls
        self.node_updates += other.node_updates
        self.wall_time += other.wall_time


class ParamStore:
    """Named parameter tensors with deterministic creation order."""

    def __init__(self, rng=None):
        self.rng = rng
        self.params = {}

    def make(self, name, shape, fan_in):
        bound = np.sqrt(1.0 / max(fan_in, 1))
        data = self.rng.uniform(-bound, bound, size=shape)
        t = ad.parameter(data)
        self.params[name] = t
        return t

    def make_zeros(self, name, shape):
        t = ad.parameter(np.zeros(shape))
        self.params[name] = t
        return t

    def __getitem__(self, name):
        return self.params[name]

    def items(self):
        return self.params.items()


def _make_mlp(store, prefix, dims):
    """Affine layers with Mish between hidden layers; final layer linear."""
    layers = []
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        W = store.make(f"{prefix}.W{i}", (din, dout), fan_in=din)
        b = store.make_zeros(f"{prefix}.b{i}", (1, dout))
        layers.append((W, b))
    return layers


def mlp_forward(layers, x):
    for i, (W, b) in enumerate(layers):
        x = ad.add(ad.matmul(x, W), b)
        if i < len(layers) - 1:
            x = ad.mish(x)
    return x


@dataclass
class Model:
    arch: str  # rgnn | oe | oae
    head: str  # v | q
    k: int
    L: int
    meta: DomainMeta
    config: EncodingConfig
    store: ParamStore
    seed: int
    aggregator: str = "logsumexp"  # rgnn message aggregation: logsumexp | max
    mlps: dict = field(default_factory=dict)

    @property
    def params(self):
        return self.store.params

    def zero_grad(self):
        for t in self.store.params.values():
            t.zero_grad()


def _effective_arity(table, pid):
    return max(table.arities[pid], 1)  # nullary atoms are expanded to unary


def build_model(meta: DomainMeta, arch, head, k=32, L=30, seed=0, aggregator="logsumexp"):
    if arch not in (RGNN, OE, OAE):
        raise ValueError(f"unknown architecture '{arch}'")
    if head not in ("v", "q"):
        raise ValueError(f"unknown head '{head}'")
    config = EncodingConfig.build(meta, arch, with_actions=(head == "q"))
    store = ParamStore(np.random.default_rng(seed))
    model = Model(arch, head, k, L, meta, config, store, seed, aggregator)
    table = config.table

    if arch == RGNN:
        # shared across layers: one message MLP per predicate, one update MLP
        for pid in range(table.size):
            n = _effective_arity(table, pid)
            model.mlps[f"msg.{pid}"] = _make_mlp(store, f"msg.{pid}", (n * k, n * k, n * k))
        model.mlps["update"] = _make_mlp(store, "update", (2 * k, k, k))
    else:
        m = table.size
        store.make("proj.W", (m, k), fan_in=m)
        store.make_zeros("proj.b", (1, k))
        relations = _relations(config)
        for l in range(L):  # separate parameters per layer
            store.make(f"layer{l}.W", (k, k), fan_in=k)
            for r in relations:
                store.make(f"layer{l}.rel{r}.W", (k, k), fan_in=k)

    model.mlps["readout_v"] = _make_mlp(store, "readout_v", (k, k, 1))
    if head == "q":
        model.mlps["readout_q"] = _make_mlp(store, "readout_q", (2 * k, k, 1))
    return model


def _relations(config):
    table = config.table
    if config.variant == OE:
        return [pid for pid in range(table.size) if _effective_arity(table, pid) >= 2]
    # OAE edge labels are argument positions
    max_arity = max(_effective_arity(table, pid) for pid in range(table.size))
    return list(range(max_arity))


# ---------------------------------------------------------------------------
# Forward passes


def rgnn_forward(model: Model, encoded: EncodedState):
    """Object embeddings after L rounds of atom-wise message passing with
    dimension-wise smooth-max aggregation and residual updates."""
    if encoded.variant != RGNN:
        raise ValueError("rgnn_forward needs an RGNN encoding")
    k = model.k
    n_obj = len(encoded.nodes)
    by_pred = {}
    for pid, args in encoded.rel_atoms:
        by_pred.setdefault(pid, []).append(args)
    groups = []
    for pid in sorted(by_pred):
        args = np.array(by_pred[pid], dtype=np.intp)  # (A, n)
        if f"msg.{pid}" not in model.mlps:
            raise KeyError(f"no message network for predicate id {pid}")
        groups.append((pid, args))

    h = ad.tensor(np.zeros((n_obj, k)))
    agg = ad.segment_logsumexp if model.aggregator == "logsumexp" else ad.segment_max
    for _ in range(model.L):
        chunks, segs = [], []
        for pid, args in groups:
            n = args.shape[1]
            x = ad.concat_cols([ad.gather_rows(h, args[:, u]) for u in range(n)])
            y = mlp_forward(model.mlps[f"msg.{pid}"], x)
            for u in range(n):
                chunks.append(ad.slice_cols(y, u * k, (u + 1) * k))
                segs.append(args[:, u])
        if chunks:
            msgs = ad.concat_rows(chunks)
            seg = np.concatenate(segs)
            m = agg(msgs, seg, n_obj, empty_value=0.0)
        else:
            m = ad.tensor(np.zeros((n_obj, k)))
        h = ad.add(h, mlp_forward(model.mlps["update"], ad.concat_cols([h, m])))
    return h


def rgcn_forward(model: Model, encoded: EncodedState):
    """Node embeddings: sigma(W h_v + sum_r max_u W_r h_u) per layer, sigma=Mish;
    labels with an empty neighborhood contribute nothing."""
    if encoded.variant != model.arch:
        raise ValueError(f"model expects {model.arch} encodings, got {encoded.variant}")
    feats = ad.tensor(encoded.features)
    h = ad.add(ad.matmul(feats, model.store["proj.W"]), model.store["proj.b"])
    n = encoded.num_nodes
    by_label = {}
    for u, v, lab in encoded.edges:  # undirected: traverse both ways
        src, dst = by_label.setdefault(lab, ([], []))
        src.extend((u, v))
        dst.extend((v, u))
    for l in range(model.L):
        out = ad.matmul(h, model.store[f"layer{l}.W"])
        for lab in sorted(by_label):
            src, dst = by_label[lab]
            z = ad.matmul(ad.gather_rows(h, src), model.store[f"layer{l}.rel{lab}.W"])
            out = ad.add(out, ad.segment_max(z, dst, n, empty_value=0.0))
        h = ad.mish(out)
    return h


def embeddings(model: Model, encoded: EncodedState):
    if model.arch == RGNN:
        return rgnn_forward(model, encoded)
    return rgcn_forward(model, encoded)


def state_embedding(model: Model, node_embeddings, encoded: EncodedState):
    """Dimension-wise sum over all object nodes (action objects included)."""
    return ad.sum_rows(ad.gather_rows(node_embeddings, encoded.object_nodes))


def readout_v(model: Model, node_embeddings, encoded: EncodedState):
    h_s = state_embedding(model, node_embeddings, encoded)
    return mlp_forward(model.mlps["readout_v"], h_s)  # (1, 1)


class DeadEndStateError(Exception):
    """Q readout on a state with no applicable actions."""


def readout_q(model: Model, node_embeddings, encoded: EncodedState):
    """One scalar per applicable action, ordered by action position; returns a
    (num_actions, 1) tensor."""
    if not encoded.action_nodes:
        raise DeadEndStateError("no applicable actions encoded")
    h_s = state_embedding(model, node_embeddings, encoded)
    positions = sorted(encoded.action_nodes)
    h_a = ad.gather_rows(node_embeddings, [encoded.action_nodes[p] for p in positions])
    h_s_rep = ad.gather_rows(h_s, np.zeros(len(positions), dtype=np.intp))
    return mlp_forward(model.mlps["readout_q"], ad.concat_cols([h_a, h_s_rep]))


def forward_value(model: Model, encoded: EncodedState, stats: ForwardStats | None = None):
    """Full forward pass; V head returns a scalar tensor, Q head a
    (num_actions, 1) tensor in action-position order."""
    t0 = time.perf_counter()
    emb = embeddings(model, encoded)
    out = readout_v(model, emb, encoded) if model.head == "v" else readout_q(model, emb, encoded)
    if stats is not None:
        stats.encoder_calls += 1
        stats.node_updates += encoded.num_nodes * model.L
        stats.wall_time += time.perf_counter() - t0
    return out


def batch_forward(model: Model, encoded_batch, stats: ForwardStats | None = None):
    """Per-item forwards in deterministic order; outputs match single-item
    forwards exactly."""
    return [forward_value(model, e, stats) for e in encoded_batch]


# ---------------------------------------------------------------------------
# Checkpoints


def save_model(model: Model, path):
    manifest = []
    offset = 0
    buffers = []
    for name, t in model.store.items():
        buf = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += len(buf)
        buffers.append(buf)
    header = {
        "version": CHECKPOINT_VERSION,
        "architecture": model.arch,
        "head": model.head,
        "k": model.k,
        "L": model.L,
        "seed": model.seed,
        "aggregator": model.aggregator,
        "domain": {
            "name": model.meta.name,
            "predicates": [list(p) for p in model.meta.predicates],
            "schemas": [list(s) for s in model.meta.schemas],
            "fingerprint": model.meta.fingerprint,
        },
        "manifest": manifest,
    }
    head_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(head_bytes)))
        f.write(head_bytes)
        for buf in buffers:
            f.write(buf)


def load_model(path) -> Model:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a planq checkpoint")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        blob = f.read()
    meta = DomainMeta(
        name=header["domain"]["name"],
        predicates=tuple(tuple(p) for p in header["domain"]["predicates"]),
        schemas=tuple(tuple(s) for s in header["domain"]["schemas"]),
    )
    if meta.fingerprint != header["domain"]["fingerprint"]:
        raise ValueError("domain fingerprint mismatch in checkpoint")
    model = build_model(
        meta,
        header["architecture"],
        header["head"],
        k=header["k"],
        L=header["L"],
        seed=header["seed"],
        aggregator=header.get("aggregator", "logsumexp"),
    )
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=entry["offset"]).reshape(shape)
        model.store[entry["name"]].data = arr.astype(np.float64).copy()
    return model
