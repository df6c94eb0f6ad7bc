"""Persistent store of TPL function vectors with top-k cosine search.

Default search is an exact brute-force scan over contiguous storage; an
approximate mode built on a random-projection tree forest can be enabled
where corpus size warrants it. Approximate results are always re-scored
with exact cosine, so returned scores never disagree with recomputation.

Index file layout (all integers little-endian):

    offset  size  field
    0       8     magic "LIBAMVDB"
    8       4     u32 format version (1)
    12      4     u32 vector dimensionality
    16      32    sha256 of the embedding model weights
    48      8     u64 entry count N
    56      8     u64 string pool length P
    64      16*N  entry table: u32 tpl_off, u32 tpl_len, u32 fn_off, u32 fn_len
    ...     P     string pool (UTF-8)
    ...     4*d*N vector block, float32, row-major

Entries are sorted by (tpl id, function id) and the table is fixed-width,
so other tools can read the file without a JSON parser.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

INDEX_MAGIC = b"LIBAMVDB"
INDEX_FORMAT_VERSION = 1

SEARCH_EXACT = "exact"
SEARCH_APPROX = "approx"


class IndexError_(ValueError):
    """Index construction or query constraint violated."""


class ChecksumMismatchError(IndexError_):
    pass


@dataclass
class ApproxParams:
    n_trees: int = 16
    leaf_size: int = 48
    search_k: int = 0  # 0 = auto: max(64 * k, 2048)
    seed: int = 0


@dataclass
class _Node:
    normal: Optional[np.ndarray] = None
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None
    items: Optional[np.ndarray] = None  # leaf only


@dataclass
class VectorIndex:
    """Immutable after build; concurrent queries are safe."""

    dim: int
    model_checksum: str
    tpl_ids: tuple[str, ...]
    fn_ids: tuple[str, ...]
    vectors: np.ndarray  # (n, dim) float32
    _unit: np.ndarray = field(init=False, repr=False)
    _trees: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        norms = np.linalg.norm(self.vectors.astype(float), axis=1)
        safe = np.where(norms > 0.0, norms, 1.0)
        self._unit = self.vectors.astype(float) / safe[:, None]

    def __len__(self) -> int:
        return len(self.tpl_ids)

    def _check(self, query: np.ndarray, model_checksum: Optional[str]) -> np.ndarray:
        q = np.asarray(query, dtype=float).reshape(-1)
        if q.shape[0] != self.dim:
            raise IndexError_(f"query has dim {q.shape[0]}, index stores dim {self.dim}")
        if model_checksum is not None and model_checksum != self.model_checksum:
            raise ChecksumMismatchError(
                f"query model checksum {model_checksum[:12]}... does not match index {self.model_checksum[:12]}..."
            )
        return q

    def _rank(self, q: np.ndarray, candidates: np.ndarray, k: int) -> list[tuple[str, str, float]]:
        qn = float(np.linalg.norm(q))
        qu = q / qn if qn > 0.0 else q
        scores = self._unit[candidates] @ qu
        tpl = np.array([self.tpl_ids[i] for i in candidates])
        fn = np.array([self.fn_ids[i] for i in candidates])
        order = np.lexsort((fn, tpl, -scores))[:k]
        return [(str(tpl[i]), str(fn[i]), float(scores[i])) for i in order]

    def query_topk(
        self,
        query: np.ndarray,
        k: int,
        model_checksum: Optional[str] = None,
        mode: str = SEARCH_EXACT,
        approx: Optional[ApproxParams] = None,
    ) -> list[tuple[str, str, float]]:
        """Top-k entries by descending cosine; ties break lexicographically
        by (tpl id, function id)."""
        if k < 1:
            raise IndexError_("k must be >= 1")
        q = self._check(query, model_checksum)
        if len(self) == 0:
            return []
        if mode == SEARCH_EXACT:
            candidates = np.arange(len(self))
        elif mode == SEARCH_APPROX:
            candidates = self._approx_candidates(q, k, approx or ApproxParams())
        else:
            raise IndexError_(f"unknown search mode {mode!r}")
        return self._rank(q, candidates, k)

    # -- approximate search ------------------------------------------------

    def build_trees(self, params: ApproxParams) -> None:
        rng_root = np.random.SeedSequence([params.seed, len(self), self.dim])
        self._trees = []
        for child in rng_root.spawn(params.n_trees):
            rng = np.random.Generator(np.random.PCG64(child))
            self._trees.append(self._split(np.arange(len(self)), rng, params.leaf_size))

    def _split(self, indices: np.ndarray, rng: np.random.Generator, leaf_size: int) -> _Node:
        if len(indices) <= leaf_size:
            return _Node(items=indices)
        normal = None
        proj = None
        for _ in range(3):
            a, b = rng.choice(len(indices), size=2, replace=False)
            direction = self._unit[indices[a]] - self._unit[indices[b]]
            norm = float(np.linalg.norm(direction))
            if norm < 1e-12:
                continue
            cand = direction / norm
            p = self._unit[indices] @ cand
            if float(p.max() - p.min()) > 1e-12:
                normal, proj = cand, p
                break
        if normal is None:
            normal = rng.normal(size=self.dim)
            normal /= np.linalg.norm(normal)
            proj = self._unit[indices] @ normal
        threshold = float(np.median(proj))
        left_mask = proj < threshold
        if not left_mask.any() or left_mask.all():
            half = len(indices) // 2
            order = np.argsort(proj, kind="stable")
            left_mask = np.zeros(len(indices), dtype=bool)
            left_mask[order[:half]] = True
        return _Node(
            normal=normal,
            threshold=threshold,
            left=self._split(indices[left_mask], rng, leaf_size),
            right=self._split(indices[~left_mask], rng, leaf_size),
        )

    def _approx_candidates(self, q: np.ndarray, k: int, params: ApproxParams) -> np.ndarray:
        if not self._trees:
            self.build_trees(params)
        search_k = params.search_k or max(64 * k, 2048)
        search_k = min(search_k, len(self))
        qn = float(np.linalg.norm(q))
        qu = q / qn if qn > 0.0 else q
        seen: set[int] = set()
        heap: list[tuple[float, int, _Node]] = []
        counter = 0
        for tree in self._trees:
            heapq.heappush(heap, (-np.inf, counter, tree))
            counter += 1
        while heap and len(seen) < search_k:
            neg_prio, _, node = heapq.heappop(heap)
            prio = -neg_prio
            if node.items is not None:
                seen.update(int(i) for i in node.items)
                continue
            margin = float(qu @ node.normal) - node.threshold
            near, far = (node.right, node.left) if margin >= 0 else (node.left, node.right)
            counter += 1
            heapq.heappush(heap, (-prio, counter, near))
            counter += 1
            heapq.heappush(heap, (-min(prio, abs(margin)), counter, far))
        return np.fromiter(sorted(seen), dtype=int, count=len(seen))

    # -- persistence ---------------------------------------------------------

    def save(self, path: Path) -> None:
        pool = bytearray()
        table = bytearray()
        offsets: dict[str, tuple[int, int]] = {}

        def intern(s: str) -> tuple[int, int]:
            if s not in offsets:
                raw = s.encode("utf-8")
                offsets[s] = (len(pool), len(raw))
                pool.extend(raw)
            return offsets[s]

        for tpl, fn in zip(self.tpl_ids, self.fn_ids):
            t_off, t_len = intern(tpl)
            f_off, f_len = intern(fn)
            table.extend(struct.pack("<IIII", t_off, t_len, f_off, f_len))
        if len(self.model_checksum) != 64:
            raise IndexError_("model checksum must be a sha256 hex digest")
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<II", INDEX_FORMAT_VERSION, self.dim))
            fh.write(bytes.fromhex(self.model_checksum))
            fh.write(struct.pack("<QQ", len(self), len(pool)))
            fh.write(bytes(table))
            fh.write(bytes(pool))
            fh.write(np.ascontiguousarray(self.vectors, dtype="<f4").tobytes())

    @staticmethod
    def load(path: Path) -> "VectorIndex":
        raw = Path(path).read_bytes()
        if raw[:8] != INDEX_MAGIC:
            raise IndexError_(f"{path}: not an index file")
        version, dim = struct.unpack_from("<II", raw, 8)
        if version != INDEX_FORMAT_VERSION:
            raise IndexError_(f"{path}: unsupported format version {version}")
        checksum = raw[16:48].hex()
        count, pool_len = struct.unpack_from("<QQ", raw, 48)
        off = 64
        entries = struct.unpack_from(f"<{4 * count}I", raw, off)
        off += 16 * count
        pool = raw[off : off + pool_len]
        off += pool_len
        vectors = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=off).reshape(count, dim).copy()
        tpl_ids = []
        fn_ids = []
        for i in range(count):
            t_off, t_len, f_off, f_len = entries[4 * i : 4 * i + 4]
            tpl_ids.append(pool[t_off : t_off + t_len].decode("utf-8"))
            fn_ids.append(pool[f_off : f_off + f_len].decode("utf-8"))
        return VectorIndex(
            dim=dim,
            model_checksum=checksum,
            tpl_ids=tuple(tpl_ids),
            fn_ids=tuple(fn_ids),
            vectors=vectors,
        )


def build_index(
    entries: Iterable[tuple[str, str, np.ndarray]],
    model_checksum: str,
    dim: int = 64,
) -> VectorIndex:
    """Build a queryable index from (tpl id, function id, vector) rows."""
    rows = sorted(entries, key=lambda e: (e[0], e[1]))
    seen: set[tuple[str, str]] = set()
    vectors = np.zeros((len(rows), dim), dtype="<f4")
    tpl_ids = []
    fn_ids = []
    for i, (tpl, fn, vec) in enumerate(rows):
        key = (tpl, fn)
        if key in seen:
            raise IndexError_(f"duplicate entry {key}")
        seen.add(key)
        v = np.asarray(vec, dtype=float).reshape(-1)
        if v.shape[0] != dim:
            raise IndexError_(f"entry {key} has dim {v.shape[0]}, expected {dim}")
        vectors[i] = v.astype("<f4")
        tpl_ids.append(tpl)
        fn_ids.append(fn)
    return VectorIndex(
        dim=dim,
        model_checksum=model_checksum,
        tpl_ids=tuple(tpl_ids),
        fn_ids=tuple(fn_ids),
        vectors=vectors,
    )


def filter_candidate_tpls(
    per_function_hits: dict[str, list[tuple[str, str, float]]],
    top_tpls: int = 200,
) -> list[str]:
    """Rank candidate TPLs by summing, per target function, the best
    positive cosine hit into each TPL; keep at most ``top_tpls``."""
    scores: dict[str, float] = {}
    for hits in per_function_hits.values():
        best: dict[str, float] = {}
        for tpl, _fn, score in hits:
            if score > 0.0 and score > best.get(tpl, 0.0):
                best[tpl] = score
        for tpl, score in best.items():
            scores[tpl] = scores.get(tpl, 0.0) + score
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [tpl for tpl, _ in ranked[:top_tpls]]
