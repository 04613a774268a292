"""Run evaluation: one finished run directory in, one metrics row out.

Every metric is reference-free: judged rubrics for the subjective axes,
embedding geometry for identity and style, closed-form aggregation for
the rest. A metric whose inputs do not exist in the run (audio scores for
a silent story, separation with a single character) reports the dash
placeholder instead of a fabricated number.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .. import adapters, media, production
from ..errors import NoCrops
from ..store import RunStore, write_json_atomic
from . import formulas

log = logging.getLogger(__name__)

UNAVAILABLE = "-"

COLUMNS = ("NSR", "SER", "CES", "CIDS-C", "CIDS-S", "CSD-S", "CSD-C", "CP",
           "Inc", "OCCM", "Scene", "CA", "Camera", "Atmos.", "Synergy", "Nes",
           "Grounding", "Age", "Emotion", "Prosody", "Clarity")


def _mean(values):
    values = [v for v in values if v is not None]
    if not values:
        return UNAVAILABLE
    return round(float(sum(values)) / len(values), 4)


def _rounded(value):
    return UNAVAILABLE if value is None else round(float(value), 4)


def _pairwise_consecutive_cos(embeddings: list[np.ndarray]):
    if len(embeddings) < 2:
        return None
    cosines = [float(np.dot(a, b)) for a, b in zip(embeddings, embeddings[1:])]
    return sum(cosines) / len(cosines)


def evaluate_run(run_dir: str | Path,
                 registry: adapters.ProviderRegistry) -> dict[str, object]:
    """Score a finished run; returns {column: value} over all COLUMNS."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    if "segments" not in manifest:
        raise ValueError(f"manifest in {run_dir} has no segments; aborted run?")
    store = RunStore(run_dir)
    run_id = manifest["run_id"]
    segments = manifest["segments"]

    # narrative-level rubrics, one judgment per run
    narrative = adapters.judge_structured("eval_narrative_states", {
        "run_id": run_id,
        "script": manifest.get("script", {}),
        "segments": [{"index": s["index"], "scene": s.get("scene", "")}
                     for s in segments],
    }, registry)
    nsr_value = formulas.nsr([int(c["level"]) for c in narrative["changes"]])

    expansion = adapters.judge_structured("eval_story_expansion", {
        "run_id": run_id, "n_segments": len(segments),
    }, registry)
    ser_value = formulas.ser([float(v) for v in expansion["dimension_scores"]],
                             shot_count=len(segments))

    creative = adapters.judge_structured("eval_creative_features", {
        "run_id": run_id,
    }, registry)
    ces_value = formulas.ces([float(v) for v in creative["features"]])

    # per-shot judged rubrics
    scene_scores, action_scores, camera_scores, atmosphere_scores = [], [], [], []
    incoherence_scores = []
    grounding_scores, synergy_scores, nes_scores = [], [], []
    age_scores, emotion_scores, prosody_scores, clarity_scores = [], [], [], []

    for segment in segments:
        video_ref = segment["artifacts"]["video"]
        rubric = adapters.judge_structured("eval_shot_rubric", {
            "run_id": run_id, "shot_ref": video_ref,
            "scene": segment.get("scene", ""),
        }, registry)
        scene_scores.append(float(rubric["scene"]))
        action_scores.append(float(rubric["character_action"]))
        camera_scores.append(float(rubric["camera"]))
        atmosphere_scores.append(float(rubric["atmosphere"]))

        incoherence = adapters.judge_structured("eval_incoherence", {
            "run_id": run_id, "shot_ref": video_ref,
        }, registry)
        incoherence_scores.append(float(incoherence["incoherence"]))

        audio_ref = segment["artifacts"].get("audio")
        if not audio_ref:
            continue
        alignment = adapters.judge_structured("eval_av_alignment", {
            "run_id": run_id, "shot_ref": video_ref, "audio_ref": audio_ref,
        }, registry)
        grounding = float(alignment["grounding"])
        synergy = float(alignment["synergy"])
        grounding_scores.append(grounding)
        synergy_scores.append(synergy)
        atmosphere = max(1.0, min(5.0, float(rubric["atmosphere"])))
        nes_scores.append(formulas.nes(grounding, synergy, atmosphere))

        semantic = adapters.judge_structured("eval_audio_semantic", {
            "run_id": run_id, "shot_ref": audio_ref,
        }, registry)
        age_scores.append(float(semantic["age"]))
        emotion_scores.append(float(semantic["emotion"]))
        prosody_scores.append(float(semantic["prosody"]))
        fidelity = adapters.judge_structured("eval_audio_fidelity", {
            "run_id": run_id, "shot_ref": audio_ref,
        }, registry)
        clarity_scores.append(float(fidelity["clarity"]))

    # identity and style geometry
    anchors: dict[str, np.ndarray] = {}
    for character_id, entry in manifest.get("identity", {}).items():
        views = entry.get("views", {})
        if views:
            first_ref = views[sorted(views)[0]]
            anchors[character_id] = adapters.embed(store.get(first_ref), registry)

    crops_by_character: dict[str, list[np.ndarray]] = {c: [] for c in anchors}
    required_sets, detected_sets = [], []
    scene_embeddings: list[np.ndarray] = []

    for segment in segments:
        image_ref = segment["artifacts"]["image"]
        image_bytes = store.get(image_ref)
        scene_embeddings.append(adapters.embed(image_bytes, registry))
        required = [c for c in segment.get("characters", []) if c in anchors]
        regions_hint = None
        text = media.png_text(image_bytes)
        if media.REGIONS_KEY in text:
            try:
                regions_hint = json.loads(text[media.REGIONS_KEY])
            except ValueError:
                regions_hint = None
        detection = adapters.judge_structured("eval_character_detection", {
            "run_id": run_id, "shot_ref": image_ref, "required": required,
            "regions_hint": regions_hint,
        }, registry)
        boxes = detection.get("boxes", {})
        required_sets.append(set(required))
        detected_sets.append(set(boxes) & set(required))
        for character_id in required:
            if character_id not in boxes:
                continue
            crop = production.crop_region(image_bytes, tuple(boxes[character_id]),
                                          character_id)
            crops_by_character.setdefault(character_id, []).append(
                adapters.embed(crop, registry))

    occm_value = formulas.occm(required_sets, detected_sets)

    cids_c = cids_s = None
    populated = {c: e for c, e in crops_by_character.items() if e}
    if populated:
        try:
            cids_c, cids_s = formulas.cids(populated, anchors)
        except NoCrops:
            pass

    cp_values = []
    for character_id, crops in populated.items():
        try:
            cp_values.append(formulas.cp(crops, anchors[character_id]))
        except NoCrops:
            continue

    csd_s = _pairwise_consecutive_cos(scene_embeddings)
    csd_c_values = [
        _pairwise_consecutive_cos(crops) for crops in populated.values()
        if len(crops) >= 2
    ]

    metrics: dict[str, object] = {
        "NSR": _rounded(nsr_value),
        "SER": _rounded(ser_value),
        "CES": _rounded(ces_value),
        "CIDS-C": _rounded(cids_c) if cids_c is not None else UNAVAILABLE,
        "CIDS-S": _rounded(cids_s) if cids_s is not None else UNAVAILABLE,
        "CSD-S": _rounded(csd_s) if csd_s is not None else UNAVAILABLE,
        "CSD-C": _mean(csd_c_values),
        "CP": _mean(cp_values),
        "Inc": _mean(incoherence_scores),
        "OCCM": _rounded(occm_value),
        "Scene": _mean(scene_scores),
        "CA": _mean(action_scores),
        "Camera": _mean(camera_scores),
        "Atmos.": _mean(atmosphere_scores),
        "Synergy": _mean(synergy_scores),
        "Nes": _mean(nes_scores),
        "Grounding": _mean(grounding_scores),
        "Age": _mean(age_scores),
        "Emotion": _mean(emotion_scores),
        "Prosody": _mean(prosody_scores),
        "Clarity": _mean(clarity_scores),
    }
    assert set(metrics) == set(COLUMNS)
    return metrics


def write_scores(run_dir: str | Path, metrics: dict[str, object]) -> Path:
    path = Path(run_dir) / "scores.json"
    write_json_atomic(path, {"columns": list(COLUMNS), "metrics": metrics})
    return path
