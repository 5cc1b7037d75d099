"""Pairwise-ranking embedding model with a progressive-residual head.

Each modality has its own branch computing

    v = W2 @ tanh(W1 @ h + b1) + b2 + alpha * v_src

where ``h`` are the modality's raw features and ``v_src`` is the frozen
embedding from a pretrained source model (an input, never updated).
Frames and sentences are scored by cosine similarity and trained with a
margin hinge over (sentence, positive frame, negative frame) triplets.
Backprop is written out by hand; ``numerical_gradients`` is the
finite-difference check for it.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .metrics import RankList, median_rank_percent, rank_from_scores, recall_at_k
from .synthetic import PairedData

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "semsum-residual-head/1"
BRANCH_PARAMS = ("W1", "b1", "W2", "b2", "alpha")


@dataclass
class TrainConfig:
    margin: float = 0.2
    negatives: int = 50
    epochs: int = 10
    batch_size: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        for name in ("negatives", "epochs", "batch_size", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


@dataclass
class Branch:
    W1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)
    alpha: float

    @property
    def in_dim(self):
        return self.W1.shape[1]

    @property
    def out_dim(self):
        return self.W2.shape[0]


@dataclass
class ResidualHead:
    frame: Branch
    sentence: Branch

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for side in ("frame", "sentence"):
            br = getattr(self, side)
            for name in BRANCH_PARAMS:
                out[f"{side}.{name}"] = np.asarray(getattr(br, name), dtype=np.float64)
        return out

    @classmethod
    def from_params(cls, params: dict) -> "ResidualHead":
        def branch(side):
            kw = {n: np.array(params[f"{side}.{n}"], dtype=np.float64) for n in BRANCH_PARAMS}
            kw["alpha"] = float(kw["alpha"])
            return Branch(**kw)

        return cls(frame=branch("frame"), sentence=branch("sentence"))


def init_branch(rng, in_dim: int, hidden: int, out_dim: int) -> Branch:
    def uniform(fan_in, shape):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape)

    return Branch(
        W1=uniform(in_dim, (hidden, in_dim)),
        b1=np.zeros(hidden),
        W2=uniform(hidden, (out_dim, hidden)),
        b2=np.zeros(out_dim),
        # (0, 0.1]
        alpha=float(0.1 - rng.uniform(0.0, 0.1)),
    )


def init_head(rng, frame_in: int, sent_in: int, embed_dim: int, hidden: int) -> ResidualHead:
    return ResidualHead(
        frame=init_branch(rng, frame_in, hidden, embed_dim),
        sentence=init_branch(rng, sent_in, hidden, embed_dim),
    )


def forward_embed(branch: Branch, h, v_s) -> np.ndarray:
    """Residual embedding for one item (1-D inputs) or a batch of rows."""
    return _branch_forward(branch, h, v_s)[0]


def _branch_forward(branch: Branch, h, v_s):
    h = np.asarray(h, dtype=np.float64)
    v_s = np.asarray(v_s, dtype=np.float64)
    if h.shape[-1] != branch.in_dim:
        raise ValueError(f"feature dim {h.shape[-1]} != branch input dim {branch.in_dim}")
    if v_s.shape[-1] != branch.out_dim:
        raise ValueError(f"source embedding dim {v_s.shape[-1]} != branch output dim {branch.out_dim}")
    act = np.tanh(h @ branch.W1.T + branch.b1)
    return act @ branch.W2.T + branch.b2 + branch.alpha * v_s, act


def _branch_backward(branch: Branch, h, v_s, act, d_out) -> dict[str, np.ndarray]:
    d_act = d_out @ branch.W2
    d_pre = d_act * (1.0 - act**2)
    return {
        "W1": d_pre.T @ h,
        "b1": d_pre.sum(axis=0),
        "W2": d_out.T @ act,
        "b2": d_out.sum(axis=0),
        "alpha": np.asarray(np.sum(d_out * v_s)),
    }


def triplet_loss(s_pos: float, s_neg: float, m: float) -> float:
    return max(0.0, m - s_pos + s_neg)


@dataclass
class TripletBatch:
    """B anchors (sentences), each with one positive frame and K negative frames."""

    anchor_h: np.ndarray  # (B, sent_in)
    anchor_vs: np.ndarray  # (B, d)
    pos_h: np.ndarray  # (B, frame_in)
    pos_vs: np.ndarray  # (B, d)
    neg_h: np.ndarray  # (B, K, frame_in)
    neg_vs: np.ndarray  # (B, K, d)

    def __post_init__(self):
        B = self.anchor_h.shape[0]
        if B == 0:
            raise ValueError("empty triplet batch")
        if self.neg_h.ndim != 3 or self.neg_h.shape[1] < 1:
            raise ValueError("every positive needs at least one negative")
        for name in ("anchor_vs", "pos_h", "pos_vs", "neg_h", "neg_vs"):
            if getattr(self, name).shape[0] != B:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} rows, expected {B}")

    @classmethod
    def from_pairs(cls, data: PairedData, anchors, negatives) -> "TripletBatch":
        """Anchor sentence ``i`` with positive frame ``i`` and negative frames ``negatives[b]``."""
        anchors = np.asarray(anchors)
        negatives = np.asarray(negatives)
        return cls(
            anchor_h=data.sent_h[anchors],
            anchor_vs=data.sent_vs[anchors],
            pos_h=data.frame_h[anchors],
            pos_vs=data.frame_vs[anchors],
            neg_h=data.frame_h[negatives],
            neg_vs=data.frame_vs[negatives],
        )


def _cos(a, b):
    """Row-wise cosine plus the pieces needed for its gradient."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    return np.sum(a * b, axis=-1) / (na * nb), na, nb


def _dcos_da(a, b, c, na, nb):
    return b / (na * nb)[..., None] - c[..., None] * a / (na**2)[..., None]


def _forward_batch(head: ResidualHead, batch: TripletBatch, m: float):
    B, K = batch.neg_h.shape[:2]
    u, act_u = _branch_forward(head.sentence, batch.anchor_h, batch.anchor_vs)
    frame_h = np.concatenate([batch.pos_h, batch.neg_h.reshape(B * K, -1)])
    frame_vs = np.concatenate([batch.pos_vs, batch.neg_vs.reshape(B * K, -1)])
    f, act_f = _branch_forward(head.frame, frame_h, frame_vs)
    p, n = f[:B], f[B:].reshape(B, K, -1)
    s_pos, np_, nu = _cos(p, u)
    u_rep = np.broadcast_to(u[:, None, :], n.shape)
    s_neg, nn_, nu_rep = _cos(n, u_rep)
    hinge = m - s_pos[:, None] + s_neg
    cache = dict(u=u, act_u=act_u, frame_h=frame_h, frame_vs=frame_vs, act_f=act_f, p=p, n=n,
                 u_rep=u_rep, s_pos=s_pos, s_neg=s_neg, np_=np_, nu=nu, nn_=nn_, nu_rep=nu_rep)
    return hinge, cache


def triplet_scores(head: ResidualHead, batch: TripletBatch):
    """Cosine scores of the positives (B,) and negatives (B, K)."""
    _, c = _forward_batch(head, batch, 0.0)
    return c["s_pos"], c["s_neg"]


def batch_loss(head: ResidualHead, batch: TripletBatch, m: float) -> float:
    hinge, _ = _forward_batch(head, batch, m)
    return float(np.maximum(hinge, 0.0).mean())


def gradients(head: ResidualHead, batch: TripletBatch, m: float) -> dict[str, np.ndarray]:
    """Subgradient of ``batch_loss``; a hinge term contributes only when strictly positive."""
    hinge, c = _forward_batch(head, batch, m)
    B, K = hinge.shape
    active = (hinge > 0.0).astype(np.float64) / (B * K)
    d_spos = -active.sum(axis=1)  # (B,)
    d_sneg = active  # (B, K)

    d_u = d_spos[:, None] * _dcos_da(c["u"], c["p"], c["s_pos"], c["nu"], c["np_"])
    d_u += np.einsum("bk,bkd->bd", d_sneg, _dcos_da(c["u_rep"], c["n"], c["s_neg"], c["nu_rep"], c["nn_"]))
    d_p = d_spos[:, None] * _dcos_da(c["p"], c["u"], c["s_pos"], c["np_"], c["nu"])
    d_n = d_sneg[..., None] * _dcos_da(c["n"], c["u_rep"], c["s_neg"], c["nn_"], c["nu_rep"])
    d_f = np.concatenate([d_p, d_n.reshape(B * K, -1)])

    grads = {}
    for side, br, h, vs, act, d_out in (
        ("sentence", head.sentence, batch.anchor_h, batch.anchor_vs, c["act_u"], d_u),
        ("frame", head.frame, c["frame_h"], c["frame_vs"], c["act_f"], d_f),
    ):
        for name, g in _branch_backward(br, h, vs, act, d_out).items():
            grads[f"{side}.{name}"] = g
    return grads


def numerical_gradients(head: ResidualHead, batch: TripletBatch, m: float, step: float = 1e-5):
    """Central finite differences of ``batch_loss`` w.r.t. every parameter entry."""
    params = {k: v.copy() for k, v in head.params().items()}
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = batch_loss(ResidualHead.from_params(params), batch, m)
            flat[i] = orig - step
            down = batch_loss(ResidualHead.from_params(params), batch, m)
            flat[i] = orig
            g.reshape(-1)[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new params and new state."""
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = beta1 * state.m.get(name, np.zeros_like(g)) + (1 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(g)) + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, t)


def embed_all(head: ResidualHead, data: PairedData):
    frames = forward_embed(head.frame, data.frame_h, data.frame_vs)
    sents = forward_embed(head.sentence, data.sent_h, data.sent_vs)
    return frames, sents


def text_to_frame_ranks(head: ResidualHead, data: PairedData) -> RankList:
    """Rank of frame i among all frames for sentence query i."""
    frames, sents = embed_all(head, data)
    fn = frames / np.linalg.norm(frames, axis=1, keepdims=True)
    sn = sents / np.linalg.norm(sents, axis=1, keepdims=True)
    S = sn @ fn.T
    return RankList([rank_from_scores(S[i], i) for i in range(len(data))], len(data))


def frame_to_text_ranks(head: ResidualHead, data: PairedData) -> RankList:
    frames, sents = embed_all(head, data)
    fn = frames / np.linalg.norm(frames, axis=1, keepdims=True)
    sn = sents / np.linalg.norm(sents, axis=1, keepdims=True)
    S = fn @ sn.T
    return RankList([rank_from_scores(S[i], i) for i in range(len(data))], len(data))


def sample_negatives(rng, n_items: int, anchors, count: int) -> np.ndarray:
    """Uniform negatives without replacement per anchor, never the anchor's own frame."""
    count = min(count, n_items - 1)
    out = np.empty((len(anchors), count), dtype=np.intp)
    for b, a in enumerate(anchors):
        pick = rng.choice(n_items - 1, size=count, replace=False)
        out[b] = pick + (pick >= a)
    return out


def evaluate_dev(head, dev: PairedData) -> dict:
    ranks = text_to_frame_ranks(head, dev)
    return {"median_rank_percent": median_rank_percent(ranks), "r_at_1": recall_at_k(ranks, 1)}


def train(data: PairedData, dev: PairedData, config: TrainConfig | None = None):
    """Train a fresh head; returns (best head by dev median rank, per-epoch log).

    The log's first entry (epoch 0) is the untrained head. A checkpoint is
    kept only when the dev median-rank-percent strictly improves.
    """
    config = config or TrainConfig()
    if len(data) < 2 or len(dev) < 1:
        raise ValueError("training needs >= 2 pairs and a non-empty dev set")
    rng = np.random.default_rng(config.seed)
    head = init_head(rng, data.frame_h.shape[1], data.sent_h.shape[1], data.frame_vs.shape[1], config.hidden_dim)
    if data.sent_vs.shape[1] != data.frame_vs.shape[1]:
        raise ValueError("frame and sentence source embeddings must share a dimension")
    params = head.params()
    state = AdamState()

    metrics = evaluate_dev(head, dev)
    best, best_med = copy.deepcopy(head), metrics["median_rank_percent"]
    history = [{"epoch": 0, "train_loss": None, **metrics, "improved": True}]
    log.info("epoch 0: dev %s", metrics)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(order), config.batch_size):
            anchors = order[start:start + config.batch_size]
            negs = sample_negatives(rng, len(data), anchors, config.negatives)
            batch = TripletBatch.from_pairs(data, anchors, negs)
            head = ResidualHead.from_params(params)
            losses.append(batch_loss(head, batch, config.margin))
            grads = gradients(head, batch, config.margin)
            params, state = adam_step(params, grads, state, config.lr, config.beta1, config.beta2, config.eps)
        head = ResidualHead.from_params(params)
        metrics = evaluate_dev(head, dev)
        improved = metrics["median_rank_percent"] < best_med
        if improved:
            best, best_med = copy.deepcopy(head), metrics["median_rank_percent"]
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), **metrics, "improved": improved})
        log.info("epoch %d: loss %.5f dev %s%s", epoch, history[-1]["train_loss"], metrics,
                 " (saved)" if improved else "")
    return best, history


def save_checkpoint(head: ResidualHead, path, config: TrainConfig | None = None, extra: dict | None = None):
    params = head.params()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "dims": {
            "frame_in": head.frame.in_dim,
            "sentence_in": head.sentence.in_dim,
            "hidden": head.frame.W1.shape[0],
            "embed": head.frame.out_dim,
        },
        "shapes": {k: list(v.shape) for k, v in params.items() if not k.endswith("alpha")},
        "params": {k: v.ravel().tolist() for k, v in params.items() if not k.endswith("alpha")},
        "alpha": {"frame": head.frame.alpha, "sentence": head.sentence.alpha},
        "config": asdict(config) if config else None,
        "seed": config.seed if config else None,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path) -> ResidualHead:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a residual-head checkpoint: format={doc.get('format')!r}")
    params = {k: np.asarray(v, dtype=np.float64).reshape(doc["shapes"][k]) for k, v in doc["params"].items()}
    params["frame.alpha"] = np.asarray(doc["alpha"]["frame"])
    params["sentence.alpha"] = np.asarray(doc["alpha"]["sentence"])
    return ResidualHead.from_params(params)
