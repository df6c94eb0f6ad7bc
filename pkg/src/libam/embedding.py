"""Iterative neighborhood-aggregation graph embedding with siamese training.

The same network shape embeds two kinds of attributed graphs: function
CFGs whose nodes carry 7 block-feature counts, and call-graph areas whose
nodes carry 64-dim function vectors. Node states start at zero and are
refined for a fixed number of rounds:

    mu_i(t) = tanh(x_i @ W_in + sigma(sum of mu_j(t-1) over out-neighbors j))

where sigma is a stack of square layers, each followed by rectification.
The graph vector is ``sum_i mu_i(T) @ W_out``. All layers are bias-free,
so an all-zero input provably embeds to the zero vector.

Gradients are computed analytically (see ``triplet_loss_and_grads``) and
verified against central finite differences in the test suite.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fcg import Area, Fcg
from .interchange import FunctionRecord

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
MODEL_MAGIC = b"LIBAMS2V"

DEFAULT_EMBED_DIM = 64
DEFAULT_ITERATIONS = 5
DEFAULT_SIGMA_LAYERS = 2
TRIPLET_MARGIN = 0.2

FUNCTION_INPUT_DIM = 7
AREA_INPUT_DIM = DEFAULT_EMBED_DIM


class ModelMismatchError(ValueError):
    """A model was applied to data of the wrong input dimensionality."""


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttributedGraph:
    """A directed graph whose nodes carry fixed-length feature vectors."""

    features: np.ndarray  # (n, input_dim)
    edges: tuple[tuple[int, int], ...]

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    def adjacency(self) -> np.ndarray:
        n = self.n_nodes
        adj = np.zeros((n, n))
        for src, dst in self.edges:
            adj[src, dst] = 1.0
        return adj


def acfg_graph(fn: FunctionRecord) -> AttributedGraph:
    """Attributed CFG of one function; counts are log-compressed so large
    functions do not saturate the tanh units."""
    feats = np.array([b.as_tuple() for b in fn.blocks], dtype=float)
    return AttributedGraph(features=np.log1p(feats), edges=tuple(fn.cfg_edges))


def area_graph(graph: Fcg, area: Area, vectors: dict[str, np.ndarray], dim: int = AREA_INPUT_DIM) -> AttributedGraph:
    """Attributed area subgraph whose node features are unit-normalized
    function vectors; members without a vector (ineligible functions)
    contribute zero features but still pass messages."""
    index = {fn: i for i, fn in enumerate(area.members)}
    feats = np.zeros((len(area.members), dim))
    for fn, i in index.items():
        vec = vectors.get(fn)
        if vec is not None:
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                feats[i] = vec / norm
    sub = graph.induced_subgraph(area.members)
    edges = tuple(sorted((index[s], index[d]) for s, d in sub.edges))
    return AttributedGraph(features=feats, edges=edges)


@dataclass
class EmbeddingModel:
    """Learned weights of the graph embedding network.

    ``input_dim`` distinguishes the function model (7) from the area
    model (64); the two are never interchangeable and the model file
    records the dimension so they cannot be swapped silently.
    """

    input_dim: int
    embed_dim: int
    iterations: int
    w_in: np.ndarray  # (input_dim, embed_dim)
    sigma: list[np.ndarray]  # each (embed_dim, embed_dim)
    w_out: np.ndarray  # (embed_dim, embed_dim)

    @staticmethod
    def initialize(
        input_dim: int,
        embed_dim: int = DEFAULT_EMBED_DIM,
        iterations: int = DEFAULT_ITERATIONS,
        n_sigma_layers: int = DEFAULT_SIGMA_LAYERS,
        seed: int = 0,
    ) -> "EmbeddingModel":
        rng = np.random.Generator(np.random.PCG64(seed))
        return EmbeddingModel(
            input_dim=input_dim,
            embed_dim=embed_dim,
            iterations=iterations,
            w_in=rng.normal(size=(input_dim, embed_dim)) / np.sqrt(input_dim),
            sigma=[rng.normal(size=(embed_dim, embed_dim)) / np.sqrt(embed_dim) for _ in range(n_sigma_layers)],
            w_out=rng.normal(size=(embed_dim, embed_dim)) / np.sqrt(embed_dim),
        )

    def weights(self) -> list[tuple[str, np.ndarray]]:
        named = [("w_in", self.w_in)]
        named += [(f"sigma{k}", m) for k, m in enumerate(self.sigma)]
        named.append(("w_out", self.w_out))
        return named

    def _weight_blob(self) -> bytes:
        return b"".join(np.ascontiguousarray(m, dtype="<f4").tobytes() for _, m in self.weights())

    def checksum(self) -> str:
        """SHA-256 over the 32-bit float encoding of all weights; also what
        the vector index pins to reject vectors from a different model."""
        return hashlib.sha256(self._weight_blob()).hexdigest()

    def save(self, path: Path) -> None:
        blob = self._weight_blob()
        header = {
            "format_version": MODEL_FORMAT_VERSION,
            "input_dim": self.input_dim,
            "embed_dim": self.embed_dim,
            "iterations": self.iterations,
            "layer_shapes": [[name, list(m.shape)] for name, m in self.weights()],
            "checksum": hashlib.sha256(blob).hexdigest(),
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            fh.write(blob)

    @staticmethod
    def load(path: Path) -> "EmbeddingModel":
        raw = Path(path).read_bytes()
        if raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file")
        (hlen,) = struct.unpack_from("<I", raw, len(MODEL_MAGIC))
        off = len(MODEL_MAGIC) + 4
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
        off += hlen
        blob = raw[off:]
        if hashlib.sha256(blob).hexdigest() != header["checksum"]:
            raise ValueError(f"{path}: weight checksum mismatch")
        mats = []
        pos = 0
        for name, shape in header["layer_shapes"]:
            count = int(np.prod(shape))
            mat = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape).astype(float)
            mats.append((name, mat))
            pos += count * 4
        named = dict(mats)
        sigma = [named[f"sigma{k}"] for k in range(len(mats) - 2)]
        return EmbeddingModel(
            input_dim=int(header["input_dim"]),
            embed_dim=int(header["embed_dim"]),
            iterations=int(header["iterations"]),
            w_in=named["w_in"],
            sigma=sigma,
            w_out=named["w_out"],
        )


def _forward(model: EmbeddingModel, g: AttributedGraph):
    """Run the message-passing rounds, keeping intermediates for backprop."""
    x = np.asarray(g.features, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ModelMismatchError(f"node features have dim {x.shape[-1] if x.ndim == 2 else '?'}, model expects {model.input_dim}")
    if x.shape[0] == 0:
        raise ValueError("cannot embed an empty graph")
    adj = g.adjacency()
    proj = x @ model.w_in
    mu = np.zeros((x.shape[0], model.embed_dim))
    steps = []
    for _ in range(model.iterations):
        agg = adj @ mu
        h = agg
        layers = []
        for mat in model.sigma:
            z = h @ mat
            h = np.maximum(z, 0.0)
            layers.append((z, h))
        mu_new = np.tanh(proj + h)
        steps.append({"mu_prev": mu, "agg": agg, "layers": layers, "mu": mu_new})
        mu = mu_new
    pooled = mu.sum(axis=0)
    out = pooled @ model.w_out
    cache = {"x": x, "adj": adj, "steps": steps, "pooled": pooled}
    return out, cache


def embed_graph(model: EmbeddingModel, g: AttributedGraph) -> np.ndarray:
    """Embed one attributed graph into a vector of length ``embed_dim``."""
    out, _ = _forward(model, g)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("graph embedding is not finite")
    return out


def _zero_grads(model: EmbeddingModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(mat) for name, mat in model.weights()}


def _backward(model: EmbeddingModel, cache: dict, d_out: np.ndarray, grads: dict[str, np.ndarray]) -> None:
    """Accumulate d(loss)/d(weights) for one graph given d(loss)/d(embedding)."""
    pooled = cache["pooled"]
    grads["w_out"] += np.outer(pooled, d_out)
    d_pooled = model.w_out @ d_out
    d_mu = np.tile(d_pooled, (cache["x"].shape[0], 1))
    adj_t = cache["adj"].T
    d_w_in = grads["w_in"]
    for step in reversed(cache["steps"]):
        d_u = d_mu * (1.0 - step["mu"] ** 2)
        d_w_in += cache["x"].T @ d_u
        d_h = d_u
        for k in range(len(model.sigma) - 1, -1, -1):
            z, _ = step["layers"][k]
            d_z = d_h * (z > 0.0)
            prev = step["agg"] if k == 0 else step["layers"][k - 1][1]
            grads[f"sigma{k}"] += prev.T @ d_z
            d_h = d_z @ model.sigma[k].T
        d_mu = adj_t @ d_h


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; defined as 0.0 when either vector is zero so
    trivial functions that embed to zero never become anchors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def hinge_losses(cos_ap: Sequence[float], cos_an: Sequence[float], margin: float = TRIPLET_MARGIN) -> np.ndarray:
    """Per-triple loss max(cos(a,n) - cos(a,p) + margin, 0)."""
    ap = np.asarray(cos_ap, dtype=float)
    an = np.asarray(cos_an, dtype=float)
    return np.maximum((an - ap) + margin, 0.0)


GraphTriple = tuple[AttributedGraph, AttributedGraph, AttributedGraph]


def triplet_loss(model: EmbeddingModel, triples: Sequence[GraphTriple], margin: float = TRIPLET_MARGIN) -> float:
    """Mean hinge loss over (anchor, positive, negative) graph triples."""
    if not triples:
        raise ValueError("empty batch")
    cos_ap = []
    cos_an = []
    for a, p, n in triples:
        ea = embed_graph(model, a)
        cos_ap.append(cosine(ea, embed_graph(model, p)))
        cos_an.append(cosine(ea, embed_graph(model, n)))
    return float(np.mean(hinge_losses(cos_ap, cos_an, margin)))


def _d_cosine(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partials of cos(u, v) w.r.t. u and v; zero when either vector is zero."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return np.zeros_like(u), np.zeros_like(v)
    c = float(np.dot(u, v) / (nu * nv))
    du = v / (nu * nv) - c * u / (nu * nu)
    dv = u / (nu * nv) - c * v / (nv * nv)
    return du, dv


def triplet_loss_and_grads(
    model: EmbeddingModel, triples: Sequence[GraphTriple], margin: float = TRIPLET_MARGIN
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss plus analytic gradients w.r.t. every weight matrix (shared
    parameters: all three graphs of a triple run the same network)."""
    if not triples:
        raise ValueError("empty batch")
    grads = _zero_grads(model)
    losses = []
    m = len(triples)
    for a, p, n in triples:
        ea, cache_a = _forward(model, a)
        ep, cache_p = _forward(model, p)
        en, cache_n = _forward(model, n)
        c_ap = cosine(ea, ep)
        c_an = cosine(ea, en)
        loss = (c_an - c_ap) + margin
        losses.append(max(loss, 0.0))
        if loss <= 0.0:
            continue
        d_ap_a, d_ap_p = _d_cosine(ea, ep)
        d_an_a, d_an_n = _d_cosine(ea, en)
        scale = 1.0 / m
        _backward(model, cache_a, scale * (d_an_a - d_ap_a), grads)
        _backward(model, cache_p, scale * (-d_ap_p), grads)
        _backward(model, cache_n, scale * d_an_n, grads)
    return float(np.mean(losses)), grads


@dataclass
class TrainParams:
    """Optimizer and schedule settings; defaults are desk-scale."""

    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    margin: float = TRIPLET_MARGIN
    embed_dim: int = DEFAULT_EMBED_DIM
    iterations: int = DEFAULT_ITERATIONS
    n_sigma_layers: int = DEFAULT_SIGMA_LAYERS
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainResult:
    model: EmbeddingModel
    history: list[dict] = field(default_factory=list)
    test_loss: Optional[float] = None


def split_dataset(triples: Sequence[GraphTriple], seed: int) -> tuple[list, list, list]:
    """Deterministic 8:1:1 train/validation/test split."""
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(triples))
    n = len(triples)
    n_val = max(n // 10, 1) if n >= 3 else 0
    n_test = n_val
    val_idx = order[:n_val]
    test_idx = order[n_val : n_val + n_test]
    train_idx = order[n_val + n_test :]
    pick = lambda idx: [triples[i] for i in idx]
    return pick(train_idx), pick(val_idx), pick(test_idx)


def train_siamese(triples: Sequence[GraphTriple], params: TrainParams, seed: int = 0) -> TrainResult:
    """Train the shared-parameter network by gradient descent on the
    triplet cosine loss; the returned model is the best-validation epoch.

    Fully reproducible: data order, init and optimizer state all derive
    from ``seed`` and batches run in a fixed reduction order.
    """
    if not triples:
        raise ValueError("empty dataset")
    input_dim = triples[0][0].features.shape[1]
    train, val, test = split_dataset(triples, seed)
    if not train:
        train = list(triples)
    model = EmbeddingModel.initialize(
        input_dim,
        embed_dim=params.embed_dim,
        iterations=params.iterations,
        n_sigma_layers=params.n_sigma_layers,
        seed=seed,
    )
    m_state = _zero_grads(model)
    v_state = _zero_grads(model)
    step = 0
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    best_val = float("inf")
    best_weights = {name: mat.copy() for name, mat in model.weights()}
    history: list[dict] = []
    named = dict(model.weights())
    for epoch in range(params.epochs):
        order = rng.permutation(len(train))
        epoch_losses = []
        for start in range(0, len(train), params.batch_size):
            batch = [train[i] for i in order[start : start + params.batch_size]]
            loss, grads = triplet_loss_and_grads(model, batch, params.margin)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}, step {step}")
            epoch_losses.append(loss)
            step += 1
            for name, mat in named.items():
                g = grads[name]
                m_state[name] = params.adam_beta1 * m_state[name] + (1 - params.adam_beta1) * g
                v_state[name] = params.adam_beta2 * v_state[name] + (1 - params.adam_beta2) * g * g
                m_hat = m_state[name] / (1 - params.adam_beta1**step)
                v_hat = v_state[name] / (1 - params.adam_beta2**step)
                mat -= params.learning_rate * m_hat / (np.sqrt(v_hat) + params.adam_eps)
        train_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        val_loss = triplet_loss(model, val, params.margin) if val else train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.info("epoch %d: train_loss=%.5f val_loss=%.5f", epoch, train_loss, val_loss)
        if val_loss <= best_val:
            best_val = val_loss
            best_weights = {name: mat.copy() for name, mat in model.weights()}
    for name, mat in named.items():
        mat[...] = best_weights[name]
    test_loss = triplet_loss(model, test, params.margin) if test else None
    return TrainResult(model=model, history=history, test_loss=test_loss)


def sample_training_areas(graph: Fcg, min_degree: int = 5) -> list[Area]:
    """One area per node with more than ``min_degree`` distinct neighbors;
    these hubs seed the area-level training samples."""
    return [graph.area_of(n) for n in sorted(graph.nodes) if graph.degree(n) > min_degree]
