"""Hierarchical demonstration retrieval: task -> semantic filter -> geometry.

The three stages move coarse to fine: task retrieval ranks task buckets by
embedding distance, semantic filtering scores each candidate image against
the target image and the object name, and geometrical retrieval picks the
entry whose masked feature map has the smallest mean nearest-neighbor
feature distance to the target's (best viewpoint match).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, EmptyMemory, PipelineError
from .features import (
    DenseFeatureMap,
    Embedding,
    PixelMask,
    cells_in_mask,
    cosine,
    normalize_features,
)
from .formats import load_feature_map, load_mask
from .memory import AffordanceEntry, AffordanceMemory

IMD_AGGREGATION = "mean"  # recorded in reports: per-cell mean, not raw sum


@dataclass
class RetrievalQuery:
    """Target-side inputs to retrieval."""

    instruction_task_embedding: Embedding
    object_name_embedding: Embedding
    target_image_embedding: Embedding
    target_feature_map: DenseFeatureMap
    target_mask: PixelMask | None = None
    fallback_tasks: tuple[str, ...] = ()


@dataclass
class RetrievalResult:
    """Chosen entry plus per-stage diagnostics for the report."""

    entry_id: str
    task: str
    task_score: float  # L2 distance of the chosen entry's task
    semantic_score: float
    imd_score: float
    stage_trace: dict[str, int] = field(default_factory=dict)
    stages: dict[str, list] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    semantic_threshold: float | None = None

    def to_report(self) -> dict:
        # metadata records the defaulted/ambiguous choices so downstream
        # consumers can see what produced this ranking
        return {
            "result": {
                "entry_id": self.entry_id,
                "task": self.task,
                "task_score": self.task_score,
                "semantic_score": self.semantic_score,
                "imd_score": self.imd_score,
            },
            "stage_trace": self.stage_trace,
            "stages": self.stages,
            "metadata": {
                "imd_aggregation": IMD_AGGREGATION,
                "imd_tie_break": "entry_id",
                "semantic_threshold": self.semantic_threshold,
                "warnings": self.warnings,
            },
        }


def retrieve_task(
    query: RetrievalQuery, memory: AffordanceMemory, top_k: int = 1
) -> list[tuple[str, float]]:
    """Rank distinct tasks by L2 distance to the instruction embedding.

    Each task's distance is the minimum over its entries' stored task
    embeddings (entries of one task normally share an embedding, so this is
    also invariant to duplicating entries).  Ties break by task string.
    """
    if len(memory) == 0:
        raise EmptyMemory("cannot retrieve from an empty memory")
    q = query.instruction_task_embedding.values.astype(np.float64)
    distances: dict[str, float] = {}
    for entry in memory.entries:
        d = float(np.linalg.norm(q - entry.task_embedding.values.astype(np.float64)))
        if entry.task not in distances or d < distances[entry.task]:
            distances[entry.task] = d
    ranked = sorted(distances.items(), key=lambda kv: (kv[1], kv[0]))
    return ranked[: max(top_k, 1)]


def semantic_filter(
    entries: list[AffordanceEntry],
    query: RetrievalQuery,
    threshold: float = 0.5,
) -> list[tuple[AffordanceEntry, float]]:
    """Keep entries whose joint image/object-name similarity clears threshold.

    The score is cos(entry image, target image) * cos(entry image, object
    name).  When everything falls below the threshold the single best entry
    is kept (fail-open) so the pipeline always yields a candidate.
    """
    scored = _score_all(entries, query)
    kept = [(e, s) for e, s in scored if s >= threshold]
    if not kept and scored:
        kept = [max(scored, key=lambda es: es[1])]
    return kept


def _masked_cells(fmap: DenseFeatureMap, mask: PixelMask | None) -> np.ndarray:
    cells = fmap.data.reshape(-1, fmap.channels)
    keep = cells_in_mask(fmap, mask).reshape(-1)
    return cells[keep]


def imd(
    source_map: DenseFeatureMap,
    source_mask: PixelMask | None,
    target_map: DenseFeatureMap,
    target_mask: PixelMask | None,
) -> float:
    """Mean nearest-neighbor feature distance from source cells to target cells.

    For every source grid cell inside the source mask, find the closest
    target cell (L2, restricted to the target mask) and average those
    distances over the source cells.  The mean (rather than a raw sum)
    makes scores comparable across mask sizes; the argmin over entries is
    unaffected for equal-sized masks.

    Nearest neighbors are ranked with a float32 matrix product, then each
    matched distance is recomputed exactly in float64, so identical maps
    score exactly 0.0.
    """
    if not source_map.normalized or not target_map.normalized:
        raise ValueError("imd requires normalized feature maps")
    if source_map.channels != target_map.channels:
        raise ValueError(
            f"channel mismatch: {source_map.channels} vs {target_map.channels}"
        )
    src = _masked_cells(source_map, source_mask)
    tgt = _masked_cells(target_map, target_mask)
    if src.shape[0] == 0:
        raise EmptyMask("source mask selects no grid cell")
    if tgt.shape[0] == 0:
        raise EmptyMask("target mask selects no grid cell")

    tgt_sq = np.einsum("ij,ij->i", tgt, tgt, dtype=np.float32)
    total = 0.0
    chunk = 1024
    for lo in range(0, src.shape[0], chunk):
        block = src[lo : lo + chunk]
        # dist^2 = |s|^2 + |t|^2 - 2 s.t; |s|^2 is constant per row, so the
        # row-wise argmin only needs |t|^2 - 2 s.t.
        scores = tgt_sq[None, :] - 2.0 * (block @ tgt.T)
        nn = np.argmin(scores, axis=1)
        diff = block.astype(np.float64) - tgt[nn].astype(np.float64)
        total += float(np.sqrt(np.einsum("ij,ij->i", diff, diff)).sum())
    return total / src.shape[0]


def geometric_retrieve(
    candidates: list[tuple[AffordanceEntry, DenseFeatureMap, PixelMask | None]],
    query: RetrievalQuery,
) -> tuple[AffordanceEntry, float, list[tuple[str, float]]]:
    """Pick the candidate with minimal IMD to the target (ties by entry id).

    Returns the winner, its score, and all (entry_id, imd) pairs.
    """
    if not candidates:
        raise EmptyMemory("no candidate entries for geometric retrieval")
    scores = []
    for entry, fmap, mask in candidates:
        score = imd(fmap, mask, query.target_feature_map, query.target_mask)
        scores.append((entry.id, score))
    best_id, best_score = min(scores, key=lambda pair: (pair[1], pair[0]))
    best_entry = next(e for e, _, _ in candidates if e.id == best_id)
    return best_entry, best_score, scores


def load_entry_features(
    entry: AffordanceEntry,
) -> tuple[DenseFeatureMap, PixelMask | None]:
    """Load an entry's feature map (normalized) and optional mask from disk."""
    fmap = load_feature_map(entry.feature_map_path)
    if not fmap.normalized:
        fmap = normalize_features(fmap)
    mask = load_mask(entry.mask_path) if entry.mask_path is not None else None
    return fmap, mask


def retrieve(
    query: RetrievalQuery,
    memory: AffordanceMemory,
    *,
    top_k_tasks: int = 1,
    semantic_threshold: float = 0.5,
    task_warn_distance: float = 0.5,
    feature_loader=load_entry_features,
) -> RetrievalResult:
    """Run the full three-stage retrieval and assemble the report.

    Stage errors keep their type but gain a ``stage`` attribute.  When the
    query carries fallback task names that exist in memory, their entries
    join the candidate pool (hook for externally-proposed similar tasks).
    """
    warnings: list[str] = []

    target = query.target_feature_map
    if not target.normalized:
        query = RetrievalQuery(
            instruction_task_embedding=query.instruction_task_embedding,
            object_name_embedding=query.object_name_embedding,
            target_image_embedding=query.target_image_embedding,
            target_feature_map=normalize_features(target),
            target_mask=query.target_mask,
            fallback_tasks=query.fallback_tasks,
        )

    try:
        ranked_tasks = retrieve_task(query, memory, top_k=top_k_tasks)
    except PipelineError as exc:
        raise exc.annotate("task")
    task_distance = dict(ranked_tasks)
    if ranked_tasks[0][1] > task_warn_distance:
        warnings.append(
            f"nearest task {ranked_tasks[0][0]!r} is far from the instruction "
            f"(L2 {ranked_tasks[0][1]:.4f} > {task_warn_distance}); "
            "falling back to the nearest task"
        )
    selected_tasks = [t for t, _ in ranked_tasks]
    for fallback in query.fallback_tasks:
        if fallback in memory.task_index and fallback not in selected_tasks:
            selected_tasks.append(fallback)
            task_distance.setdefault(fallback, float("nan"))

    candidates: list[AffordanceEntry] = []
    for task in selected_tasks:
        candidates.extend(memory.entries_for_task(task))

    try:
        scored_all = _score_all(candidates, query)
        filtered = semantic_filter(candidates, query, threshold=semantic_threshold)
    except PipelineError as exc:
        raise exc.annotate("semantic")
    semantic_scores = {e.id: s for e, s in filtered}

    loaded = []
    try:
        for entry, _ in filtered:
            fmap, mask = feature_loader(entry)
            loaded.append((entry, fmap, mask))
        best, best_imd, imd_scores = geometric_retrieve(loaded, query)
    except PipelineError as exc:
        raise exc.annotate("geometric")

    return RetrievalResult(
        entry_id=best.id,
        task=best.task,
        task_score=task_distance.get(best.task, float("nan")),
        semantic_score=semantic_scores[best.id],
        imd_score=best_imd,
        stage_trace={
            "task": len(candidates),
            "semantic": len(filtered),
            "geometric": 1,
        },
        stages={
            "task": [{"task": t, "distance": d} for t, d in ranked_tasks],
            "semantic": [
                {"entry_id": e.id, "score": s, "kept": e.id in semantic_scores}
                for e, s in scored_all
            ],
            "geometric": [{"entry_id": i, "imd": s} for i, s in imd_scores],
        },
        warnings=warnings,
        semantic_threshold=semantic_threshold,
    )


def _score_all(
    entries: list[AffordanceEntry], query: RetrievalQuery
) -> list[tuple[AffordanceEntry, float]]:
    out = []
    for entry in entries:
        score = cosine(entry.image_embedding, query.target_image_embedding) * cosine(
            entry.image_embedding, query.object_name_embedding
        )
        out.append((entry, score))
    return out
