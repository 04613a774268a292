"""Reference-free scoring formulas.

Every function here is a pure function of its arguments. Inputs come from
judge rubrics or embedding pipelines; nothing in this module touches a
backend.
"""

from __future__ import annotations

import math
from typing import Collection, Mapping, Sequence

import numpy as np

from ..errors import DegenerateVariance, EmptyChangeList, NoCrops

COPY_PASTE_THRESHOLD = 0.98


def nsr(levels: Sequence[int]) -> float:
    """Narrative State Resolution over the script's state changes.

    Args:
        levels: one resolution level per state change, each in {0, 1, 2, 3}
            (0 = dropped, 3 = fully resolved on screen).

    Returns:
        Percentage of the maximum attainable resolution, in [0, 100].
    """
    if len(levels) == 0:
        raise EmptyChangeList("nsr needs at least one state change")
    for level in levels:
        if level not in (0, 1, 2, 3):
            raise ValueError(f"resolution level outside {{0..3}}: {level!r}")
    return sum(levels) / (3 * len(levels)) * 100.0


def quantity_multiplier(shot_count: int) -> float:
    """Expansion-volume multiplier applied to the SER dimension mean."""
    if shot_count < 0:
        raise ValueError(f"negative shot count: {shot_count}")
    if shot_count < 15:
        return 0.6
    if shot_count < 25:
        return 0.8
    if shot_count < 40:
        return 1.0
    if shot_count < 55:
        return 1.1
    return 1.2


def ser(dimension_scores: Sequence[float], shot_count: int) -> float:
    """Story Expansion Rate: mean of five expansion dimensions, volume-scaled.

    Args:
        dimension_scores: five judge scores in [0, 5] (plot, character,
            world, pacing, dialogue expansion).
        shot_count: number of shots the story was expanded into.
    """
    if len(dimension_scores) != 5:
        raise ValueError(f"expected 5 dimension scores, got {len(dimension_scores)}")
    for score in dimension_scores:
        if not 0.0 <= score <= 5.0:
            raise ValueError(f"dimension score outside [0, 5]: {score!r}")
    return (sum(dimension_scores) / 5.0) * quantity_multiplier(shot_count)


def map_to_likert(value: float) -> float:
    """Round to the nearest 0.5 (half rounds up), clamped to [1, 5]."""
    snapped = math.floor(value * 2.0 + 0.5) / 2.0
    return min(5.0, max(1.0, snapped))


def ces(features: Sequence[float]) -> float:
    """Creative Elaboration Score from five creative-feature ratings in [1, 5].

    A single maxed-out feature certifies real elaboration, so the mean is
    lifted to at least 3 whenever any feature scores 5, then snapped to the
    0.5-step Likert scale.
    """
    if len(features) != 5:
        raise ValueError(f"expected 5 creative features, got {len(features)}")
    for score in features:
        if not 1.0 <= score <= 5.0:
            raise ValueError(f"creative feature outside [1, 5]: {score!r}")
    mean = sum(features) / 5.0
    if any(score == 5.0 for score in features):
        mean = max(mean, 3.0)
    return map_to_likert(mean)


def nes(grounding: float, synergy: float, atmosphere: float) -> float:
    """Narrative-Audio Synergy score.

    Args:
        grounding: fraction of audio events grounded in the visuals, in [0, 1].
        synergy: audio-visual synergy rating in [1, 5].
        atmosphere: atmosphere rating in [1, 5].

    Hallucinated audio (grounding < 0.5) caps the synergy term at 2 before
    weighting: ungrounded sound cannot earn synergy credit.
    """
    if not 0.0 <= grounding <= 1.0:
        raise ValueError(f"grounding outside [0, 1]: {grounding!r}")
    if not 1.0 <= synergy <= 5.0:
        raise ValueError(f"synergy outside [1, 5]: {synergy!r}")
    if not 1.0 <= atmosphere <= 5.0:
        raise ValueError(f"atmosphere outside [1, 5]: {atmosphere!r}")
    if grounding < 0.5:
        synergy = min(synergy, 2.0)
    return 0.3 * (grounding * 5.0) + 0.4 * synergy + 0.3 * atmosphere


def occm(required: Sequence[Collection[str]], detected: Sequence[Collection[str]]) -> float:
    """On-screen Character Coverage: micro-averaged recall of required cast.

    Args:
        required: per shot, the character ids the script requires on screen.
        detected: per shot, the character ids actually detected.

    Shots that require nobody contribute to neither numerator nor
    denominator. A run with no requirements at all scores 100.
    """
    if len(required) != len(detected):
        raise ValueError("required/detected length mismatch")
    hit = 0
    total = 0
    for need, got in zip(required, detected):
        need_set = set(need)
        total += len(need_set)
        hit += len(need_set & set(got))
    if total == 0:
        return 100.0
    return hit / total * 100.0


def cp(crop_embeddings: Sequence[np.ndarray], anchor_embedding: np.ndarray,
       threshold: float = COPY_PASTE_THRESHOLD) -> float:
    """Copy-Paste rate: fraction of crops nearly identical to the anchor.

    Cosine similarity above the threshold means the generator pasted the
    reference instead of re-rendering the character in context.
    """
    if len(crop_embeddings) == 0:
        raise NoCrops("cp needs at least one crop embedding")
    anchor = np.asarray(anchor_embedding, dtype=np.float64)
    count = 0
    for crop in crop_embeddings:
        if float(np.dot(np.asarray(crop, dtype=np.float64), anchor)) > threshold:
            count += 1
    return count / len(crop_embeddings)


def cids(crops_by_character: Mapping[str, Sequence[np.ndarray]],
         anchors: Mapping[str, np.ndarray]) -> tuple[float, float | None]:
    """Character identity similarity, cross-reference and self-consistency.

    Args:
        crops_by_character: per character, unit-norm embeddings of every
            detected crop of that character across the run.
        anchors: per character, the unit-norm identity anchor embedding.

    Returns:
        (cids_c, cids_s): cids_c averages crop-to-anchor cosine per character
        and then across characters; cids_s averages pairwise crop-to-crop
        cosine per character (characters with fewer than two crops are
        excluded) and is None when no character qualifies.
    """
    populated = {cid: crops for cid, crops in crops_by_character.items() if len(crops) > 0}
    if not populated:
        raise NoCrops("cids needs at least one crop")
    cross_means = []
    for cid, crops in populated.items():
        if cid not in anchors:
            raise ValueError(f"no anchor embedding for character {cid!r}")
        anchor = np.asarray(anchors[cid], dtype=np.float64)
        sims = [float(np.dot(np.asarray(crop, dtype=np.float64), anchor)) for crop in crops]
        cross_means.append(sum(sims) / len(sims))
    cids_c = sum(cross_means) / len(cross_means)

    self_means = []
    for cid, crops in populated.items():
        if len(crops) < 2:
            continue
        vecs = [np.asarray(crop, dtype=np.float64) for crop in crops]
        sims = [
            float(np.dot(vecs[i], vecs[j]))
            for i in range(len(vecs))
            for j in range(i + 1, len(vecs))
        ]
        self_means.append(sum(sims) / len(sims))
    cids_s = sum(self_means) / len(self_means) if self_means else None
    return cids_c, cids_s


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation between two aligned score lists."""
    if len(xs) != len(ys):
        raise ValueError("xs/ys length mismatch")
    n = len(xs)
    if n < 3:
        raise DegenerateVariance(f"need at least 3 pairs, got {n}")
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    ssx = sum(d * d for d in dx)
    ssy = sum(d * d for d in dy)
    if ssx == 0.0 or ssy == 0.0:
        raise DegenerateVariance("a column has zero variance")
    cov = sum(a * b for a, b in zip(dx, dy))
    return cov / math.sqrt(ssx * ssy)
