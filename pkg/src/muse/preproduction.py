"""Pre-production: script decomposition, style lock, identity anchoring.

Character identity is the one thing the later phases cannot repair, so it
is established up front: three full-body reference views plus a calibrated
voice sample per character, audited and revised in a closed loop until
they pass, then frozen. Everything downstream conditions on these anchors
instead of re-describing the character in prose.
"""

from __future__ import annotations

import copy
import dataclasses
import logging

from . import adapters, loop
from .errors import (
    BackendUnavailable,
    JudgeOutputUnparseable,
    PlannerOutputUnparseable,
    ScriptValidationError,
)
from .model import (
    AudioIntent,
    CharacterProfile,
    ControlBundle,
    GenerationParams,
    IdentityState,
    Phase,
    Script,
    Segment,
    Severity,
    StyleProfile,
    UserPrompt,
    ViolationKind,
    ViolationLocus,
    ViolationSignal,
    VisualAnchor,
    VisualIntent,
    VocalAnchor,
    VocalDescriptor,
    validate_script,
)
from .store import RunStore, derive_seed

log = logging.getLogger(__name__)

# Appended to every reference-sheet prompt; the audit checks each clause.
FRAMING_CONSTRAINT = ("FULL BODY PORTRAIT, Single Character, head-to-toe in "
                      "frame, feet visible, simple neutral background")

QUALITY_BOOSTERS = "detailed, high quality"

# Spoken when the script gives a character no dialogue to calibrate on.
CALIBRATION_SENTENCE = "Counting the days takes longer than living them."

VIEWS = ("front", "side", "back")

ANATOMY_FLOOR = 7.0
CROSS_CHARACTER_FLOOR = 7.0
NATURALNESS_FLOOR = 6.0

STYLE_LIBRARY: dict[str, StyleProfile] = {
    style.id: style for style in (
        StyleProfile(
            id="pixar_3d",
            display_name="Stylized 3D",
            description="rounded stylized 3D animation with soft cinematic lighting",
            char_prompt="3D animated style, Pixar quality, soft studio lighting, "
                        "c4d render, unreal engine 5",
            scene_prompt="3D rendered environment, stylized textures, volumetric "
                         "fog, soft ambient lighting",
            negative_prompt="2d, sketch, realistic, photograph, lowres",
        ),
        StyleProfile(
            id="watercolor",
            display_name="Watercolor",
            description="loose watercolor washes over warm paper",
            char_prompt="soft watercolor illustration, loose washes, warm paper "
                        "texture, gentle ink outlines",
            scene_prompt="watercolor wash background, bleeding pigment edges, "
                         "muted warm palette",
            negative_prompt="3d render, photograph, harsh contrast, neon",
        ),
        StyleProfile(
            id="film_noir",
            display_name="Film Noir",
            description="hard-lit black and white in the 1940s mode",
            char_prompt="high-contrast black and white, hard key light, deep "
                        "shadows, 1940s noir styling",
            scene_prompt="noir cityscape, wet asphalt reflections, venetian-blind "
                         "shadows, drifting haze",
            negative_prompt="color, flat lighting, cartoon, lowres",
        ),
        StyleProfile(
            id="oil_painting",
            display_name="Oil Painting",
            description="classical oils with visible brushwork",
            char_prompt="classical oil painting, visible brushwork, chiaroscuro "
                        "lighting, period costume detail",
            scene_prompt="oil on canvas backdrop, layered glazes, candlelit "
                         "interiors, craquelure texture",
            negative_prompt="photograph, 3d render, modern clothing, plastic sheen",
        ),
        StyleProfile(
            id="neon_scifi",
            display_name="Neon Sci-fi",
            description="chrome-and-neon concept art",
            char_prompt="sleek sci-fi concept art, neon rim lighting, chrome and "
                        "glass materials, cinematic grade",
            scene_prompt="holographic cityscape, volumetric neon fog, rain-slick "
                         "chrome streets, starfield skyline",
            negative_prompt="medieval, sepia, watercolor, lowres",
        ),
    )
}

GENRE_DEFAULTS = {
    "Thriller": "film_noir",
    "Daily Life": "watercolor",
    "Period Piece": "oil_painting",
    "Science Fiction": "neon_scifi",
    "Fantasy": "pixar_3d",
}


def parse_script(raw: dict) -> Script:
    """Planner JSON into domain objects. Light on defaults, no validation."""
    cast = []
    for entry in raw.get("characters", []):
        voice_raw = entry.get("voice") or {}
        cast.append(CharacterProfile(
            id=str(entry["id"]),
            age=str(entry.get("age", "")),
            gender=str(entry.get("gender", "")),
            appearance=str(entry.get("appearance", "")),
            attire=str(entry.get("attire", "")),
            voice=VocalDescriptor(acoustic=str(voice_raw.get("acoustic", "")),
                                  rhythmic=str(voice_raw.get("rhythmic", ""))),
        ))
    segments = []
    for entry in raw.get("segments", []):
        audio_raw = entry.get("audio") or {}
        speaker = audio_raw.get("speaker")
        segments.append(Segment(
            index=int(entry["index"]),
            visual=VisualIntent(
                characters=[str(c) for c in entry.get("characters", [])],
                scene=str(entry.get("scene", "")),
                shot_type=str(entry.get("shot_type", "Medium")),
            ),
            audio=AudioIntent(
                mode=str(audio_raw.get("mode", "narration")),
                transcript=str(audio_raw.get("transcript", "")),
                speaker=None if speaker is None else str(speaker),
            ),
            end_state=str(entry.get("end_state", "")),
        ))
    return Script(segments=segments, cast=cast,
                  genre=raw.get("genre"), title=raw.get("title"))


def decompose_script(prompt: UserPrompt, registry: adapters.ProviderRegistry, *,
                     temperature: float = 0.7) -> Script:
    """One-shot decomposition with a single validation-guided retry."""
    payload = {
        "task": "script_decomposition",
        "prompt": prompt.text,
        "genre": prompt.genre,
        "temperature": temperature,
    }
    problems: list[str] = []
    for _ in range(2):
        raw = adapters.judge_structured("script_decomposition", payload, registry)
        try:
            return validate_script(parse_script(raw))
        except ScriptValidationError as exc:
            problems = exc.problems
            log.warning("script rejected (%s); reprompting with the errors",
                        "; ".join(problems))
            payload = {**payload, "validation_errors": problems}
    raise PlannerOutputUnparseable(
        f"script failed validation after a retry: {problems}")


def select_style(script: Script, prompt: UserPrompt,
                 registry: adapters.ProviderRegistry) -> StyleProfile:
    """Lock one global style for the whole story.

    An explicit override must name a known style. Otherwise the judge
    picks from the library; an unknown pick or an unreachable judge falls
    back to the genre default rather than blocking the run.
    """
    if prompt.style_override:
        if prompt.style_override not in STYLE_LIBRARY:
            raise ValueError(
                f"unknown style override {prompt.style_override!r}; "
                f"known: {sorted(STYLE_LIBRARY)}")
        return STYLE_LIBRARY[prompt.style_override]
    genre = script.genre or prompt.genre or "Daily Life"
    fallback = STYLE_LIBRARY[GENRE_DEFAULTS.get(genre, "watercolor")]
    payload = {
        "task": "style_selection",
        "genre": genre,
        "summary": "; ".join(s.visual.scene for s in script.segments[:3]),
    }
    try:
        raw = adapters.judge_structured("style_selection", payload, registry)
    except (BackendUnavailable, JudgeOutputUnparseable) as exc:
        log.warning("style selection unavailable (%s); using %s", exc, fallback.id)
        return fallback
    style_id = raw["selected_style_id"]
    if style_id not in STYLE_LIBRARY:
        log.warning("judge picked unknown style %r; using %s", style_id, fallback.id)
        return fallback
    return STYLE_LIBRARY[style_id]


def _descriptor_text(profile: CharacterProfile) -> str:
    parts = [f"{profile.age} {profile.gender}".strip(), profile.appearance]
    if profile.attire:
        parts.append(f"wearing {profile.attire}")
    return ", ".join(p for p in parts if p)


def calibration_transcript(profile: CharacterProfile, script: Script) -> str:
    for segment in script.segments:
        if segment.audio.mode == "dialogue" and segment.audio.speaker == profile.id:
            if segment.audio.transcript:
                return segment.audio.transcript
    return CALIBRATION_SENTENCE


def build_visual_anchors(profile: CharacterProfile, style: StyleProfile,
                         registry: adapters.ProviderRegistry, store: RunStore, *,
                         seed: int, descriptor: str) -> list[VisualAnchor]:
    anchors = []
    for view in VIEWS:
        request = adapters.GenerationRequest(
            role="image_gen",
            prompt_parts=[style.char_prompt, FRAMING_CONSTRAINT, descriptor,
                          f"{view} view of the character", QUALITY_BOOSTERS],
            negative_parts=[style.negative_prompt],
            params=GenerationParams(seed=derive_seed(seed, "view", view)),
            conditioning={"character_id": profile.id, "style_id": style.id},
            purpose="asset_view",
        )
        artifact = adapters.generate(request, registry, store)
        embedding = adapters.embed(store.get(artifact.ref), registry)
        anchors.append(VisualAnchor(view=view, artifact_id=artifact.ref,
                                    embedding=embedding))
    return anchors


def build_vocal_anchor(profile: CharacterProfile, style: StyleProfile,
                       registry: adapters.ProviderRegistry, store: RunStore, *,
                       seed: int, transcript: str) -> VocalAnchor | None:
    descriptor = profile.voice
    if not (descriptor.acoustic or descriptor.rhythmic):
        return None
    request = adapters.GenerationRequest(
        role="voice_synth",
        prompt_parts=[p for p in (descriptor.acoustic, descriptor.rhythmic) if p],
        params=GenerationParams(seed=derive_seed(seed, "voice")),
        conditioning={"character_id": profile.id, "transcript": transcript},
        purpose="vocal_anchor",
    )
    artifact = adapters.generate(request, registry, store)
    return VocalAnchor(artifact_id=artifact.ref, descriptor=descriptor,
                       transcript=transcript)


def audit_asset(profile: CharacterProfile, state: IdentityState,
                registry: adapters.ProviderRegistry, *, style_id: str,
                attempt: int = 0) -> tuple[float, list[ViolationSignal]]:
    """Atomic asset audit: four gates over one character's anchors.

    Framing and anatomy guard the visual sheet; performance and cross-modal
    coherence guard the voice. Only these four conditions raise violations,
    and the returned score is the judge's overall figure untouched.
    """
    payload = {
        "audit_level": "atomic_asset",
        "character": {
            "id": profile.id, "age": profile.age, "gender": profile.gender,
            "appearance": profile.appearance, "attire": profile.attire,
            "voice": {"acoustic": profile.voice.acoustic,
                      "rhythmic": profile.voice.rhythmic},
        },
        "style_id": style_id,
        "attempt": attempt,
        "artifacts": {
            "visual": [anchor.artifact_id for anchor in state.visual],
            "vocal": state.vocal.artifact_id if state.vocal else None,
        },
    }
    raw = adapters.judge_structured("asset_audit", payload, registry)
    violations: list[ViolationSignal] = []
    visual = raw["visual_critique"]

    framing = visual["framing_check"]
    if not all(framing.get(k) for k in ("is_full_body", "feet_visible",
                                        "head_to_toe_in_frame")):
        violations.append(ViolationSignal(
            kind=ViolationKind.IDENTITY_MISMATCH, severity=Severity.SEVERE,
            locus=ViolationLocus(character_id=profile.id, region="framing"),
            evidence={"framing_check": framing},
        ))
    anatomy = visual["anatomical_integrity"]
    if float(anatomy["score"]) < ANATOMY_FLOOR:
        violations.append(ViolationSignal(
            kind=ViolationKind.IDENTITY_MISMATCH, severity=Severity.SEVERE,
            locus=ViolationLocus(character_id=profile.id, region="anatomy"),
            evidence={"anatomy": anatomy},
        ))
    audio = raw.get("audio_critique")
    if audio:
        performance = audio.get("performance_quality") or {}
        if (performance.get("emotion_accuracy") == "low"
                or float(performance.get("naturalness", 10)) < NATURALNESS_FLOOR):
            violations.append(ViolationSignal(
                kind=ViolationKind.EMOTION_MISMATCH, severity=Severity.MILD,
                locus=ViolationLocus(character_id=profile.id, region="vocal"),
                evidence={"performance_quality": performance},
            ))
        match = audio.get("voice_match") or {}
        if (audio.get("audio_image_consistency") == "low"
                or match.get("gender_match") is False
                or match.get("age_match") is False
                or match.get("timbre_match") == "low"):
            violations.append(ViolationSignal(
                kind=ViolationKind.IDENTITY_MISMATCH, severity=Severity.MILD,
                locus=ViolationLocus(character_id=profile.id, region="cross_modal"),
                evidence={"voice_match": match,
                          "audio_image_consistency":
                              audio.get("audio_image_consistency")},
            ))
    return float(raw["overall_score"]), violations


def violated_modalities(violations: list[ViolationSignal]) -> set[str]:
    modalities = set()
    for violation in violations:
        region = violation.locus.region or ""
        if region in ("vocal", "cross_modal"):
            modalities.add("vocal")
        else:
            modalities.add("visual")
    return modalities


def rewrite_descriptor(profile: CharacterProfile,
                       violations: list[ViolationSignal],
                       registry: adapters.ProviderRegistry) -> CharacterProfile:
    """Judge-rewritten descriptor, filtered to the violated modalities.

    A visual complaint may only move appearance and attire; a vocal one
    only the acoustic and rhythmic fields. A rewrite the judge cannot
    produce leaves the profile unchanged; the caller still reseeds.
    """
    modalities = violated_modalities(violations)
    payload = {
        "action_request": "descriptor_rewrite",
        "character": {
            "id": profile.id,
            "appearance": profile.appearance,
            "attire": profile.attire,
            "voice": {"acoustic": profile.voice.acoustic,
                      "rhythmic": profile.voice.rhythmic},
        },
        "violations": [{"kind": v.kind.value, "severity": v.severity.value,
                        "region": v.locus.region} for v in violations],
        "modalities": sorted(modalities),
    }
    try:
        raw = adapters.judge_structured("descriptor_rewrite", payload, registry)
    except JudgeOutputUnparseable as exc:
        log.warning("descriptor rewrite unusable for %s (%s); keeping descriptor",
                    profile.id, exc)
        return profile
    new = raw["new_descriptor"]
    updated = profile
    if "visual" in modalities:
        updated = dataclasses.replace(
            updated,
            appearance=str(new.get("appearance", updated.appearance)),
            attire=str(new.get("attire", updated.attire)))
    if "vocal" in modalities:
        updated = dataclasses.replace(updated, voice=VocalDescriptor(
            acoustic=str(new.get("acoustic", updated.voice.acoustic)),
            rhythmic=str(new.get("rhythmic", updated.voice.rhythmic))))
    return updated


def establish_identity(profile: CharacterProfile, script: Script,
                       style: StyleProfile, registry: adapters.ProviderRegistry,
                       store: RunStore, *, base_seed: int,
                       config: loop.LoopConfig,
                       ) -> tuple[IdentityState, CharacterProfile, loop.LoopTrace]:
    """Closed loop over one character's anchors.

    Each revision rewrites only the violated modality's descriptor fields
    and rebuilds only that modality's anchors with a fresh seed; accepted
    anchors from the other modality are kept as-is.
    """
    transcript = calibration_transcript(profile, script)
    current = {"profile": profile, "state": None}
    profiles_by_attempt: dict[int, CharacterProfile] = {}

    def plan(attempt: int) -> ControlBundle:
        return ControlBundle(
            segment_index=0,
            phase=Phase.PRE,
            attempt=attempt,
            positive_prompts=[style.char_prompt, FRAMING_CONSTRAINT,
                              _descriptor_text(current["profile"])],
            negative_prompts=[style.negative_prompt],
            params=GenerationParams(
                seed=derive_seed(base_seed, "identity", profile.id, attempt),
                extra={"rebuild": ["visual", "vocal"]}),
            conditioning={"character_id": profile.id, "style_id": style.id},
        )

    def execute(control: ControlBundle) -> IdentityState:
        profiles_by_attempt[control.attempt] = current["profile"]
        rebuild = set(control.params.extra.get("rebuild") or ("visual", "vocal"))
        previous: IdentityState | None = current["state"]
        if previous is not None and "visual" not in rebuild:
            visual = previous.visual
        else:
            visual = build_visual_anchors(
                current["profile"], style, registry, store,
                seed=control.params.seed,
                descriptor=_descriptor_text(current["profile"]))
        if previous is not None and "vocal" not in rebuild:
            vocal = previous.vocal
        else:
            vocal = build_vocal_anchor(current["profile"], style, registry, store,
                                       seed=control.params.seed,
                                       transcript=transcript)
        state = IdentityState(character_id=profile.id, visual=visual, vocal=vocal)
        current["state"] = state
        return state

    def verify(control: ControlBundle, state: IdentityState):
        score, violations = audit_asset(current["profile"], state, registry,
                                        style_id=style.id, attempt=control.attempt)
        return violations, score

    def revise(control: ControlBundle,
               violations: list[ViolationSignal]) -> ControlBundle:
        current["profile"] = rewrite_descriptor(current["profile"], violations,
                                                registry)
        revised = copy.deepcopy(control)
        revised.positive_prompts = [style.char_prompt, FRAMING_CONSTRAINT,
                                    _descriptor_text(current["profile"])]
        revised.params.seed = derive_seed(base_seed, "identity", profile.id,
                                          control.attempt + 1)
        revised.params.extra["rebuild"] = sorted(violated_modalities(violations))
        return revised

    hooks = loop.PhaseHooks(plan=plan, execute=execute, verify=verify,
                            revise=revise)
    best, trace = loop.run_segment_loop(hooks, config, phase=Phase.PRE,
                                        segment_index=0)
    final_profile = profiles_by_attempt.get(best.attempt, current["profile"])
    return best.artifact, final_profile, trace


def audit_cross_character(states: dict[str, IdentityState], style: StyleProfile,
                          registry: adapters.ProviderRegistry,
                          ) -> tuple[float, list[ViolationSignal]]:
    """Style-coherence barrier across the whole cast."""
    if len(states) < 2:
        raise ValueError("cross-character audit needs at least two identities")
    payload = {
        "audit_level": "cross_character_consistency",
        "style_id": style.id,
        "characters": {
            character_id: [anchor.artifact_id for anchor in state.visual]
            for character_id, state in sorted(states.items())
        },
    }
    raw = adapters.judge_structured("cross_character_audit", payload, registry)
    score = float(raw["overall_consistency_score"])
    violations: list[ViolationSignal] = []
    if score < CROSS_CHARACTER_FLOOR:
        outlier = raw.get("outlier_character") or sorted(states)[0]
        violations.append(ViolationSignal(
            kind=ViolationKind.IDENTITY_MISMATCH, severity=Severity.SEVERE,
            locus=ViolationLocus(character_id=outlier, region="cross_character"),
            evidence={"overall_consistency_score": score},
        ))
    return score, violations
