"""Deterministic mock backends.

Every provider below is a pure function of (request content, constructor
seed): identical requests yield identical bytes, which is what makes whole
runs reproducible byte-for-byte. The media they emit are real containers,
so crops, histograms, and tail extraction operate on actual pixels.

The image mock records which identity conditioned each canvas region in PNG
metadata; crops taken by the audit propagate that tag, and the embedder
hashes the tag into its unit-sphere projection. That closed chain is what
lets a clean mock story pass the embedding identity gate without a trained
encoder, while unrelated media still land in unrelated hash buckets.
"""

from __future__ import annotations

import json

import numpy as np
from PIL import Image

from .. import media
from ..preproduction import GENRE_DEFAULTS
from ..store import derive_seed, sha256_hex
from . import GenerationRequest, ProviderConfig, ProviderRegistry, request_hash

EMBED_DIM = 64


def _color(rng: np.random.Generator) -> tuple[int, int, int]:
    return tuple(int(c) for c in rng.integers(30, 220, size=3))


def _color_for(tag: str) -> tuple[int, int, int]:
    return _color(np.random.default_rng(derive_seed("color", tag)))


def _paint_region(arr: np.ndarray, box, color) -> None:
    h, w = arr.shape[:2]
    x0 = max(0, min(w - 1, int(round(box[0] * w))))
    y0 = max(0, min(h - 1, int(round(box[1] * h))))
    x1 = max(x0 + 1, min(w, int(round(box[2] * w))))
    y1 = max(y0 + 1, min(h, int(round(box[3] * h))))
    arr[y0:y1, x0:x1] = color
    # darker block at the top of the figure, so crops are not flat color
    head_h = max(1, (y1 - y0) // 5)
    shade = tuple(max(0, c - 60) for c in color)
    arr[y0:y0 + head_h, x0:x1] = shade


class MockImageProvider:
    name = "mock-image"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def generate(self, request: GenerationRequest) -> bytes:
        self.calls += 1
        rh = request_hash(request)
        rng = np.random.default_rng(derive_seed("image", self.seed, rh))
        if request.purpose == "asset_view":
            width, height = 192, 288
        else:
            width, height = 384, 216
        arr = np.full((height, width, 3), _color(rng), dtype=np.uint8)
        arr[0:4, :] = np.asarray(
            rng.integers(0, 255, size=(4, width, 3)), dtype=np.uint8)

        text: dict[str, str] = {media.REQUEST_KEY: rh[:16]}
        conditioning = request.conditioning
        if conditioning.get("style_id"):
            text[media.STYLE_KEY] = str(conditioning["style_id"])

        if conditioning.get("character_id"):
            tag = str(conditioning["character_id"])
            text[media.IDENTITY_KEY] = tag
            _paint_region(arr, (0.3, 0.08, 0.7, 0.97), _color_for(tag))
        else:
            regions = conditioning.get("layout") or {}
            identity_refs = conditioning.get("identity_refs") or {}
            if not regions and identity_refs:
                # direct render: the conditioned cast still occupies the frame
                names = sorted(identity_refs)
                regions = {
                    name: [0.3 + 0.4 * k / max(1, len(names)), 0.12,
                           0.62 + 0.3 * k / max(1, len(names)), 0.95]
                    for k, name in enumerate(names)
                }
            if regions:
                region_meta = {}
                for name, box in regions.items():
                    _paint_region(arr, tuple(box), _color_for(str(name)))
                    region_meta[str(name)] = {"box": [float(c) for c in box],
                                              "identity": str(name)}
                text[media.REGIONS_KEY] = json.dumps(
                    region_meta, sort_keys=True, separators=(",", ":"))
        return media.encode_png(Image.fromarray(arr), text)


class MockVideoProvider:
    name = "mock-video"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def generate(self, request: GenerationRequest) -> bytes:
        self.calls += 1
        rh = request_hash(request)
        rng = np.random.default_rng(derive_seed("video", self.seed, rh))
        chunk = request.conditioning.get("chunk") or {}
        duration = float(chunk.get("duration", 5.0))
        n_frames = max(2, int(round(duration)))
        base = int(rng.integers(80, 170))
        frames = []
        for idx in range(n_frames):
            arr = np.full((96, 96), base, dtype=np.uint8)
            arr[:8, :] = np.asarray(rng.integers(0, 255, size=(8, 96)), dtype=np.uint8)
            arr[idx * 3 % 96, :] = 255  # moving scanline, frame-distinct
            frames.append(Image.fromarray(arr, mode="L"))
        comment = {
            "rh": rh[:12],
            "chunk_id": chunk.get("chunk_id"),
            "tail": request.conditioning.get("tail"),
            "regions": request.conditioning.get("regions"),
        }
        return media.encode_gif(frames, comment=comment)


class MockVoiceProvider:
    name = "mock-voice"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def generate(self, request: GenerationRequest) -> bytes:
        self.calls += 1
        rng = np.random.default_rng(
            derive_seed("voice", self.seed, request_hash(request)))
        rate = 8000
        t = np.arange(int(rate * 0.25))
        freq = 110.0 + float(rng.integers(0, 130))
        samples = 0.3 * np.sin(2.0 * np.pi * freq * t / rate)
        return media.encode_wav(samples, rate=rate)


class MockEmbedder:
    """Seeded hash-to-sphere projection.

    Inputs sharing a hash bucket (same identity tag, same style tag, or
    byte-identical content) map to the same unit vector; everything else
    lands nearly orthogonal at this dimensionality.
    """

    name = "mock-embedder"

    def __init__(self, seed: int = 0, dim: int = EMBED_DIM):
        self.seed = seed
        self.dim = dim
        self.calls = 0

    def embed(self, data: bytes) -> np.ndarray:
        self.calls += 1
        rng = np.random.default_rng(derive_seed("embed", self.seed, self._bucket(data)))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)

    def _bucket(self, data: bytes) -> list:
        text = media.png_text(data)
        if media.IDENTITY_KEY in text:
            return ["identity", text[media.IDENTITY_KEY]]
        if media.STYLE_KEY in text:
            return ["style", text[media.STYLE_KEY]]
        return ["bytes", sha256_hex(data)]


class FlakyProvider:
    """Wraps a provider; the first `failures` calls raise. For retry tests."""

    def __init__(self, inner, failures: int):
        self.inner = inner
        self.failures = failures
        self.name = f"flaky-{getattr(inner, 'name', type(inner).__name__)}"

    def generate(self, request):
        if self.failures > 0:
            self.failures -= 1
            raise RuntimeError("transient backend failure (scripted)")
        return self.inner.generate(request)


class ScriptedJudge:
    """Canned judge for tests: per-rubric FIFO queues or callables."""

    name = "scripted-judge"

    def __init__(self, responses: dict | None = None, fallback=None):
        self.responses = dict(responses or {})
        self.fallback = fallback
        self.calls: list[str] = []

    def judge(self, rubric_id: str, payload: dict, strict: bool = False):
        self.calls.append(rubric_id)
        entry = self.responses.get(rubric_id)
        if callable(entry):
            return entry(payload, strict)
        if isinstance(entry, list) and entry:
            return entry.pop(0)
        if self.fallback is not None:
            return self.fallback.judge(rubric_id, payload, strict=strict)
        raise RuntimeError(f"no scripted response for rubric {rubric_id!r}")


_NAMES = ("Arthur", "Mira", "Jonas", "Vera", "Elena", "Tomas")

_GENRE_KEYWORDS = {
    "Thriller": ("thriller", "crime", "noir", "chase", "conspiracy"),
    "Daily Life": ("daily", "slice", "family", "routine", "neighborhood"),
    "Period Piece": ("period", "victorian", "historical", "century", "war-time"),
    "Science Fiction": ("sci-fi", "science fiction", "space", "robot", "android", "future"),
    "Fantasy": ("fantasy", "dragon", "magic", "kingdom", "sorcer"),
}


class DefaultScriptedJudge:
    """Deterministic happy-path judge for full mock runs.

    Every response is a pure function of (rubric, payload, seed). A small
    deterministic fraction of segments get a dirty first verdict (sticker
    look, spatial conflict, or boundary leakage) that clears on the next
    attempt, so mock runs exercise the revision machinery without ever
    failing outright. Segments listed in `stubborn` never pass their scene
    audit, forcing the best-of fallback path.
    """

    name = "mock-judge"

    def __init__(self, seed: int = 0, n_segments: int = 3,
                 stubborn: tuple[int, ...] = (), silent: bool = False):
        self.seed = seed
        self.n_segments = max(1, int(n_segments))
        self.stubborn = set(stubborn)
        self.silent = silent
        self.calls: list[str] = []

    # -- plumbing ---------------------------------------------------------

    def judge(self, rubric_id: str, payload: dict, strict: bool = False):
        self.calls.append(rubric_id)
        handler = getattr(self, "_" + rubric_id, None)
        if handler is None:
            raise RuntimeError(f"mock judge has no handler for rubric {rubric_id!r}")
        return handler(payload)

    def _digest(self, *parts) -> int:
        return derive_seed("judge", self.seed, list(parts))

    def _unit(self, *parts) -> float:
        return (self._digest(*parts) % 1000) / 1000.0

    def _flagged(self, kind: str, segment_index: int) -> bool:
        if kind == "sticker":
            return self._digest("sticker", segment_index) % 3 == 0
        if kind == "overlap":
            return self._digest("overlap", segment_index) % 4 == 0
        if kind == "leak":
            return self._digest("leak", segment_index) % 4 == 1
        return False

    # -- planning ---------------------------------------------------------

    def _cast(self) -> tuple[dict, dict]:
        a_name = _NAMES[self.seed % len(_NAMES)]
        b_name = _NAMES[(self.seed + 3) % len(_NAMES)]
        a = {
            "id": a_name,
            "age": "middle-aged",
            "gender": "man" if self.seed % 2 == 0 else "woman",
            "appearance": "tall angular build, short gray-flecked hair, weathered face",
            "attire": "a long gray overcoat over a dark suit",
            "voice": {
                "acoustic": "low gravelly baritone with a dry rasp",
                "rhythmic": "deliberate pacing with long pauses",
            },
        }
        b = {
            "id": b_name,
            "age": "young adult",
            "gender": "woman" if self.seed % 2 == 0 else "man",
            "appearance": "slight build, dark braided hair, quick watchful eyes",
            "attire": "a patched courier jacket with brass buttons",
            "voice": {
                "acoustic": "bright clear alto with a steady core",
                "rhythmic": "quick clipped phrasing that softens at line ends",
            },
        }
        return a, b

    def _genre_for(self, payload: dict) -> str:
        if payload.get("genre"):
            return payload["genre"]
        prompt = str(payload.get("prompt", "")).lower()
        for genre, keywords in _GENRE_KEYWORDS.items():
            if any(k in prompt for k in keywords):
                return genre
        genres = list(_GENRE_KEYWORDS)
        return genres[self.seed % len(genres)]

    def _script_decomposition(self, payload: dict) -> dict:
        a, b = self._cast()
        an, bn = a["id"], b["id"]
        silent = self.silent or "[silent]" in str(payload.get("prompt", ""))
        patterns = [
            {
                "characters": [an], "shot_type": "Wide",
                "scene": f"{an} walks through a rain-slicked market square at dusk",
                "audio": {"mode": "narration", "speaker": None,
                          "transcript": f"The district empties early, and {an} counts the closed stalls."},
                "end_state": f"{an} reaches the shuttered arcade",
            },
            {
                "characters": [an, bn], "shot_type": "Medium",
                "scene": f"{an} and {bn} argue across a cluttered desk strewn with maps",
                "audio": {"mode": "dialogue", "speaker": bn,
                          "transcript": "You knew the route was compromised, and you sent me anyway."},
                "end_state": "the argument breaks off unresolved",
            },
            {
                "characters": [bn], "shot_type": "Close-up",
                "scene": f"close-up on {bn}'s face as doubt hardens into resolve",
                "audio": {"mode": "narration", "speaker": None,
                          "transcript": f"Something in {bn}'s expression settles."},
                "end_state": f"{bn} turns toward the stairwell",
            },
            {
                "characters": [an], "shot_type": "Close-up",
                "scene": f"close-up of {an}'s hands gripping the sealed briefcase handle",
                "audio": {"mode": "narration", "speaker": None,
                          "transcript": "The lock has not been opened in years."},
                "end_state": "the briefcase stays sealed",
            },
            {
                "characters": [an, bn], "shot_type": "Medium",
                "scene": f"{bn} crosses the flooded courtyard toward the iron door while {an} watches from the colonnade",
                "audio": {"mode": "narration", "speaker": None,
                          "transcript": "Nobody crosses the courtyard by accident."},
                "end_state": "the iron door stays closed behind them",
            },
            {
                "characters": [bn], "shot_type": "Wide",
                "scene": f"{bn} stands alone on the empty platform under flickering lights",
                "audio": {"mode": "dialogue", "speaker": bn,
                          "transcript": "If he wants the ledger, he can come down here and take it."},
                "end_state": "the platform light steadies",
            },
        ]
        segments = []
        for i in range(1, self.n_segments + 1):
            base = dict(patterns[(i - 1) % len(patterns)])
            base["audio"] = dict(base["audio"])
            base["index"] = i
            if silent:
                base["audio"] = {"mode": "silent", "speaker": None, "transcript": ""}
            segments.append(base)
        return {
            "title": "The Sealed Ledger",
            "genre": self._genre_for(payload),
            "characters": [a, b],
            "segments": segments,
        }

    def _style_selection(self, payload: dict) -> dict:
        genre = payload.get("genre") or "Daily Life"
        style_id = GENRE_DEFAULTS.get(genre, "watercolor")
        return {"selected_style_id": style_id,
                "reasoning": f"{genre} stories read best in this treatment"}

    # -- identity audits --------------------------------------------------

    def _asset_audit(self, payload: dict) -> dict:
        response = {
            "audit_level": "atomic_asset",
            "visual_critique": {
                "framing_check": {"is_full_body": True, "feet_visible": True,
                                  "head_to_toe_in_frame": True},
                "anatomical_integrity": {"score": 10,
                                         "hands_and_fingers": "clean, five fingers per hand",
                                         "face_structure": "intact, matches description"},
            },
            "audio_critique": None,
            "overall_score": 9.0,
        }
        if payload.get("artifacts", {}).get("vocal"):
            response["audio_critique"] = {
                "voice_match": {"gender_match": True, "age_match": True,
                                "timbre_match": "high"},
                "performance_quality": {"emotion_accuracy": "high", "naturalness": 9},
                "audio_image_consistency": "high",
            }
        return response

    def _cross_character_audit(self, payload: dict) -> dict:
        return {
            "audit_level": "cross_character_consistency",
            "evaluation_metrics": {"visual_style_consistency": "high",
                                   "script_style_match": "high",
                                   "detected_style": payload.get("style_id", "")},
            "overall_consistency_score": 9.5,
            "outlier_character": None,
        }

    def _descriptor_rewrite(self, payload: dict) -> dict:
        return {
            "action": "REWRITE_PROMPT",
            "new_descriptor": {
                "acoustic": "pronounced gravelly vocal fry at the end of phrases, weathered timbre",
                "rhythmic": "slower deliberate pacing with a hard stop before key words",
                "appearance": "tall angular build, short gray-flecked hair, a thin scar over the left eyebrow",
                "attire": "a long gray overcoat over a dark suit",
            },
        }

    # -- production -------------------------------------------------------

    def _layout_mode(self, payload: dict) -> dict:
        desc = str(payload.get("shot_description", "")).lower()
        non_face = any(k in desc for k in ("hand", "hands", "briefcase", "boots",
                                           "prop", "object")) and "face" not in desc
        facial = "face" in desc and payload.get("shot_type") == "Close-up"
        if non_face:
            logic = {"stage_1_non_face": True, "stage_2_facial": False,
                     "stage_3_default": False}
            final = "none"
            reason = "non-face subject focus; direct render preserves detail"
        elif facial:
            logic = {"stage_1_non_face": False, "stage_2_facial": True,
                     "stage_3_default": False}
            final = "layout_guided"
            reason = "facial close-up; single-box layout keeps the face centered"
        else:
            logic = {"stage_1_non_face": False, "stage_2_facial": False,
                     "stage_3_default": True}
            final = "layout_guided"
            reason = "multi-entity staging benefits from layout control"
        return {"task": "determine_layout_mode", "decision_logic": logic,
                "final_decision": final, "reasoning": reason}

    def _layout_proposal(self, payload: dict) -> dict:
        characters = list(payload.get("characters", []))
        desc = str(payload.get("shot_description", "")).lower()
        boxes: dict[str, list[float]] = {}
        if "face" in desc and len(characters) == 1:
            boxes[characters[0]] = [0.35, 0.15, 0.65, 0.6]
            return {"boxes": boxes}
        variant = self._digest("layoutvar", payload.get("shot_description", "")) % 5
        m = max(1, len(characters))
        for k, name in enumerate(characters):
            cx = (k + 1) / (m + 1)
            width = 0.18
            if variant == 0:
                width = 0.10  # too narrow on purpose; the guardrail must widen it
            boxes[name] = [cx - width / 2, 0.25, cx + width / 2, 0.85]
        if variant == 1 and len(characters) >= 2:
            boxes[characters[0]] = [0.37, 0.25, 0.57, 0.85]
            boxes[characters[1]] = [0.43, 0.25, 0.63, 0.85]
        return {"boxes": boxes}

    def _detected_boxes(self, payload: dict) -> dict[str, list[float]]:
        layout = payload.get("layout") or {}
        if layout:
            return {k: list(v) for k, v in layout.items()}
        required = list(payload.get("required_characters", []))
        m = max(1, len(required))
        return {
            name: [0.3 + 0.4 * k / m, 0.15, 0.62 + 0.3 * k / m, 0.95]
            for k, name in enumerate(required)
        }

    def _scene_audit(self, payload: dict) -> dict:
        seg = int(payload.get("segment_index", 0))
        attempt = int(payload.get("attempt", 0))
        required = list(payload.get("required_characters", []))
        detected = self._detected_boxes(payload)
        response = {
            "critique_type": "production_quality_check",
            "spatial_logic_audit": {"bbox_overlap_detected": False,
                                    "overlap_ratio": 0.0,
                                    "conflicting_subjects": [],
                                    "physical_plausibility": True},
            "visual_integration": {"sticker_effect_severity": "None",
                                   "shadow_logic": True, "lighting_match": True},
            "overall_quality": {
                "aesthetic_score": round(7.5 + 0.4 * self._unit("aes", seg, attempt), 2),
                "limb_completeness": "complete",
                "body_structure": "coherent",
            },
            "detected_characters": detected,
        }
        if seg in self.stubborn:
            response["visual_integration"] = {"sticker_effect_severity": "Severe",
                                              "shadow_logic": False,
                                              "lighting_match": False}
            response["overall_quality"]["aesthetic_score"] = 5.0
            return response
        if attempt == 0 and self._flagged("sticker", seg):
            response["visual_integration"] = {"sticker_effect_severity": "Mild",
                                              "shadow_logic": False,
                                              "lighting_match": True}
            response["overall_quality"]["aesthetic_score"] = 6.5
        elif attempt == 0 and self._flagged("overlap", seg) and len(required) >= 2:
            first, second = required[0], required[1]
            detected[first] = [0.40, 0.25, 0.60, 0.85]
            detected[second] = [0.50, 0.25, 0.70, 0.85]
            response["spatial_logic_audit"] = {
                "bbox_overlap_detected": True,
                "overlap_ratio": 0.15,
                "conflicting_subjects": [first, second],
                "physical_plausibility": False,
            }
        return response

    # -- post-production --------------------------------------------------

    def _temporal_plan(self, payload: dict) -> dict:
        seg = int(payload.get("segment_index", 0))
        desc = payload.get("shot_description", "the scene")
        end_state = payload.get("end_state", "the scene settles")
        hint = payload.get("next_segment_hint") or "the story moves on"
        close_up = payload.get("shot_type") == "Close-up"
        n_chunks = 1 + seg % 2
        chunks = []
        for j in range(1, n_chunks + 1):
            last = j == n_chunks
            focus = f"{desc}, beat {j}"
            next_event = hint if last else f"{desc}, beat {j + 1}"
            if close_up and j == 1:
                camera = "Zoom Out"  # deliberately illegal; the planner must veto it
            elif close_up:
                camera = "Static"
            else:
                camera = "Slow Pan" if j % 2 else "Static"
            chunks.append({
                "chunk_id": j,
                "duration": 5.0,
                "narrative_focus": focus,
                "current_goal": end_state if last else f"advance toward: {end_state}",
                "boundary_guard": {
                    "next_scene_event": next_event,
                    "negative_prompt_injection": _leak_negatives(next_event),
                },
                "camera": camera,
                "denoise_strength": 0.5,
            })
        return {"chunks": chunks}

    def _temporal_audit(self, payload: dict) -> dict:
        seg = int(payload.get("segment_index", 0))
        attempt = int(payload.get("attempt", 0))
        tail_stats = payload.get("tail_stats", {})
        chunks = payload.get("chunks", [])
        response = {
            "critique_type": "temporal_integrity_check",
            "leakage_audit": {"leakage_flag": False, "detail": "",
                              "leaked_chunk_id": None, "leaked_at_fraction": None},
            "visual_decay_audit": {
                "histogram_analysis": {
                    "highlight_clipping": float(tail_stats.get("highlight_clipping", 0.0)),
                    "contrast_collapse": False,
                },
            },
            "motion_audit": {"plausible_transition": True, "detail": ""},
            "continuity_score": round(8.2 + 0.4 * self._unit("cont", seg, attempt), 2),
        }
        if attempt == 0 and self._flagged("leak", seg) and chunks:
            event = chunks[-1].get("next_scene_event", "the next scene")
            response["leakage_audit"] = {
                "leakage_flag": True,
                "detail": f"{event} is already visible before the cut",
                "leaked_chunk_id": int(chunks[-1].get("chunk_id", len(chunks))),
                "leaked_at_fraction": 0.9 if seg % 2 == 0 else 0.5,
            }
            response["continuity_score"] = 6.0
        return response

    # -- scoring rubrics --------------------------------------------------

    def _eval_narrative_states(self, payload: dict) -> dict:
        h = self._digest("nsr", payload.get("run_id", ""))
        levels = [3, 2 + h % 2, 3 if h % 3 else 2]
        names = ["the sealed briefcase question", "the compromised route",
                 "the ledger standoff"]
        return {"changes": [{"description": d, "level": lv}
                            for d, lv in zip(names, levels)]}

    def _eval_story_expansion(self, payload: dict) -> dict:
        base = [4.0, 4.3, 4.1, 3.9, 4.4]
        h = payload.get("run_id", "")
        return {"dimension_scores": [
            round(min(5.0, b + 0.2 * self._unit("ser", h, i)), 2)
            for i, b in enumerate(base)
        ]}

    def _eval_creative_features(self, payload: dict) -> dict:
        h = self._digest("ces", payload.get("run_id", ""))
        features = [4.0, 3.5, 4.5, 3.0, 4.0]
        if h % 3 == 0:
            features[2] = 5.0
        return {"features": features}

    def _eval_shot_rubric(self, payload: dict) -> dict:
        key = payload.get("shot_ref", "")
        return {
            "scene": round(min(5.0, 3.8 + 0.8 * self._unit("scene", key)), 2),
            "character_action": round(min(5.0, 3.6 + self._unit("ca", key)), 2),
            "camera": round(min(5.0, 3.5 + self._unit("cam", key)), 2),
            "atmosphere": round(min(5.0, 3.7 + 0.9 * self._unit("atm", key)), 2),
        }

    def _eval_av_alignment(self, payload: dict) -> dict:
        key = payload.get("shot_ref", "")
        return {
            "grounding": round(min(0.95, 0.75 + 0.2 * self._unit("gr", key)), 3),
            "synergy": round(min(5.0, 3.8 + self._unit("syn", key)), 2),
        }

    def _eval_audio_semantic(self, payload: dict) -> dict:
        key = payload.get("shot_ref", "")
        return {
            "age": round(min(5.0, 4.2 + 0.6 * self._unit("age", key)), 2),
            "emotion": round(min(5.0, 3.8 + 0.6 * self._unit("emo", key)), 2),
            "prosody": round(min(5.0, 4.2 + 0.7 * self._unit("pro", key)), 2),
        }

    def _eval_audio_fidelity(self, payload: dict) -> dict:
        key = payload.get("shot_ref", "")
        return {"clarity": round(min(5.0, 4.5 + 0.4 * self._unit("cla", key)), 2)}

    def _eval_incoherence(self, payload: dict) -> dict:
        key = payload.get("shot_ref", "")
        return {"incoherence": round(0.4 + 0.6 * self._unit("inc", key), 2)}

    def _eval_character_detection(self, payload: dict) -> dict:
        hint = payload.get("regions_hint")
        if hint:
            return {"boxes": {k: list(v["box"] if isinstance(v, dict) else v)
                              for k, v in hint.items()}}
        required = list(payload.get("required", []))
        m = max(1, len(required))
        return {"boxes": {
            name: [0.3 + 0.4 * k / m, 0.15, 0.62 + 0.3 * k / m, 0.95]
            for k, name in enumerate(required)
        }}


def _leak_negatives(event: str) -> list[str]:
    words = [w.strip(",.") for w in event.lower().split() if len(w) > 2][:4]
    phrases = [" ".join(words)] if words else []
    if "door" in event.lower():
        phrases.append("open door, interior view")
    phrases.append("early scene transition")
    return phrases


def build_mock_registry(seed: int = 0, n_segments: int = 3,
                        stubborn: tuple[int, ...] = (),
                        silent: bool = False) -> ProviderRegistry:
    """All five roles bound to deterministic mocks sharing one seed."""
    registry = ProviderRegistry()
    registry.bind("image_gen", MockImageProvider(seed), ProviderConfig(retries=1))
    registry.bind("video_gen", MockVideoProvider(seed), ProviderConfig(retries=1))
    registry.bind("voice_synth", MockVoiceProvider(seed), ProviderConfig(retries=1))
    registry.bind("embedder", MockEmbedder(seed), ProviderConfig(retries=1))
    registry.bind("judge", DefaultScriptedJudge(seed, n_segments=n_segments,
                                                stubborn=stubborn, silent=silent),
                  ProviderConfig(retries=1))
    return registry
