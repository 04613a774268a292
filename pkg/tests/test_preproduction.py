import numpy as np
import pytest
from helpers import make_profile, make_script

from muse import adapters, loop, preproduction
from muse.adapters import ProviderConfig
from muse.adapters.mocks import DefaultScriptedJudge, ScriptedJudge, build_mock_registry
from muse.errors import PlannerOutputUnparseable
from muse.model import (
    IdentityState,
    Severity,
    UserPrompt,
    ViolationKind,
    VisualAnchor,
    VocalAnchor,
    VocalDescriptor,
)
from muse.store import RunStore


def _scripted_registry(responses, seed=7):
    registry = build_mock_registry(seed=seed)
    judge = ScriptedJudge(responses, fallback=DefaultScriptedJudge(seed))
    registry.bind("judge", judge, ProviderConfig(retries=1))
    return registry, judge


# -- script decomposition ----------------------------------------------


def _script_json(first_index=1):
    return {
        "title": "The Courier",
        "genre": "Thriller",
        "characters": [{
            "id": "Arthur", "age": "40s", "gender": "man",
            "appearance": "weathered face, gray coat",
            "attire": "gray overcoat",
            "voice": {"acoustic": "low gravelly baritone",
                      "rhythmic": "slow, deliberate"},
        }],
        "segments": [
            {"index": first_index, "scene": "a rain-slick alley",
             "end_state": "Arthur reaches the door",
             "characters": ["Arthur"], "shot_type": "Medium",
             "audio": {"mode": "dialogue",
                       "transcript": "I know you are watching.",
                       "speaker": "Arthur"}},
            {"index": 2, "scene": "a rooftop at dawn",
             "end_state": "dawn breaks over the city",
             "characters": ["Arthur"], "shot_type": "Wide",
             "audio": {"mode": "narration", "transcript": "He climbed."}},
        ],
    }


def test_parse_script_builds_domain_objects():
    script = preproduction.parse_script(_script_json())
    assert script.title == "The Courier"
    assert script.genre == "Thriller"
    assert [s.index for s in script.segments] == [1, 2]
    assert script.segments[0].audio.speaker == "Arthur"
    assert script.character("Arthur").voice.acoustic == "low gravelly baritone"


def test_decompose_accepts_valid_script_first_try():
    registry, judge = _scripted_registry(
        {"script_decomposition": [_script_json()]})
    script = preproduction.decompose_script(UserPrompt(text="a courier story"),
                                            registry)
    assert len(script.segments) == 2
    assert judge.calls.count("script_decomposition") == 1


def test_decompose_retries_with_validation_errors():
    payloads = []

    def planner(payload, strict):
        payloads.append(payload)
        return _script_json(first_index=5 if len(payloads) == 1 else 1)

    registry, _ = _scripted_registry({"script_decomposition": planner})
    script = preproduction.decompose_script(UserPrompt(text="a courier story"),
                                            registry)
    assert len(script.segments) == 2
    assert len(payloads) == 2
    assert "validation_errors" in payloads[1]
    assert any("contiguity" in p for p in payloads[1]["validation_errors"])


def test_decompose_gives_up_after_one_retry():
    registry, _ = _scripted_registry(
        {"script_decomposition": lambda payload, strict: _script_json(first_index=9)})
    with pytest.raises(PlannerOutputUnparseable):
        preproduction.decompose_script(UserPrompt(text="a courier story"), registry)


# -- style selection ---------------------------------------------------


def test_style_override_wins():
    registry, judge = _scripted_registry({})
    script = make_script()
    style = preproduction.select_style(
        script, UserPrompt(text="x", style_override="oil_painting"), registry)
    assert style.id == "oil_painting"
    assert "style_selection" not in judge.calls


def test_unknown_style_override_raises():
    registry, _ = _scripted_registry({})
    with pytest.raises(ValueError, match="unknown style override"):
        preproduction.select_style(
            make_script(), UserPrompt(text="x", style_override="claymation"),
            registry)


def test_judge_style_pick_is_honored():
    registry, _ = _scripted_registry(
        {"style_selection": [{"selected_style_id": "neon_scifi"}]})
    style = preproduction.select_style(make_script(), UserPrompt(text="x"),
                                       registry)
    assert style.id == "neon_scifi"


def test_unknown_judge_pick_falls_back_to_genre_default():
    registry, _ = _scripted_registry(
        {"style_selection": [{"selected_style_id": "crayon"}]})
    style = preproduction.select_style(make_script(), UserPrompt(text="x"),
                                       registry)
    assert style.id == preproduction.GENRE_DEFAULTS["Thriller"]


def test_unreachable_judge_falls_back_to_genre_default():
    class Dead:
        def judge(self, rubric_id, payload, strict=False):
            raise ConnectionError("down")

    registry = build_mock_registry(seed=7)
    registry.bind("judge", Dead(), ProviderConfig(retries=0))
    style = preproduction.select_style(make_script(), UserPrompt(text="x"),
                                       registry)
    assert style.id == preproduction.GENRE_DEFAULTS["Thriller"]


def test_style_library_covers_every_genre_default():
    for style_id in preproduction.GENRE_DEFAULTS.values():
        assert style_id in preproduction.STYLE_LIBRARY


# -- anchors -----------------------------------------------------------


def test_calibration_transcript_prefers_own_dialogue():
    script = make_script(mode="dialogue", speaker="Arthur",
                        transcript="Meet me at the bridge.")
    line = preproduction.calibration_transcript(script.cast[0], script)
    assert line == "Meet me at the bridge."


def test_calibration_transcript_stock_sentence_fallback():
    script = make_script(mode="narration")
    line = preproduction.calibration_transcript(script.cast[0], script)
    assert line == preproduction.CALIBRATION_SENTENCE


def test_build_visual_anchors_three_views(tmp_path):
    registry, _ = _scripted_registry({})
    store = RunStore(tmp_path)
    style = preproduction.STYLE_LIBRARY["watercolor"]
    anchors = preproduction.build_visual_anchors(
        make_profile(), style, registry, store, seed=3,
        descriptor="a middle-aged man")
    assert [a.view for a in anchors] == ["front", "side", "back"]
    assert len({a.artifact_id for a in anchors}) == 3
    for anchor in anchors:
        assert store.exists(anchor.artifact_id)
        assert np.linalg.norm(anchor.embedding) == pytest.approx(1.0, abs=1e-9)


def test_build_vocal_anchor_requires_descriptors(tmp_path):
    registry, _ = _scripted_registry({})
    store = RunStore(tmp_path)
    style = preproduction.STYLE_LIBRARY["watercolor"]
    silent = make_profile(voice=VocalDescriptor())
    assert preproduction.build_vocal_anchor(
        silent, style, registry, store, seed=1, transcript="hello") is None
    anchor = preproduction.build_vocal_anchor(
        make_profile(), style, registry, store, seed=1, transcript="hello")
    assert anchor is not None
    assert anchor.transcript == "hello"
    assert store.exists(anchor.artifact_id)


# -- asset audit gates -------------------------------------------------


def _asset_state():
    vec = np.zeros(8)
    vec[0] = 1.0
    return IdentityState(
        character_id="Arthur",
        visual=[VisualAnchor(view="front", artifact_id="f.png", embedding=vec)],
        vocal=VocalAnchor(artifact_id="v.wav", descriptor=VocalDescriptor("a", "b"),
                          transcript="t"),
    )


def _asset_response(framing=True, anatomy=8.5, emotion="high", naturalness=8.0,
                    consistency="high", gender=True, timbre="high", score=8.2):
    return {
        "audit_level": "atomic_asset",
        "visual_critique": {
            "framing_check": {"is_full_body": framing, "feet_visible": framing,
                              "head_to_toe_in_frame": True},
            "anatomical_integrity": {"score": anatomy},
        },
        "audio_critique": {
            "voice_match": {"gender_match": gender, "age_match": True,
                            "timbre_match": timbre},
            "performance_quality": {"emotion_accuracy": emotion,
                                    "naturalness": naturalness},
            "audio_image_consistency": consistency,
        },
        "overall_score": score,
    }


def _run_audit(response):
    registry, _ = _scripted_registry({"asset_audit": [response]})
    return preproduction.audit_asset(make_profile(), _asset_state(), registry,
                                     style_id="watercolor")


def test_audit_asset_clean():
    score, violations = _run_audit(_asset_response())
    assert score == pytest.approx(8.2)
    assert violations == []


def test_audit_asset_framing_gate():
    _, violations = _run_audit(_asset_response(framing=False))
    assert [v.kind for v in violations] == [ViolationKind.IDENTITY_MISMATCH]
    assert violations[0].severity is Severity.SEVERE
    assert violations[0].locus.region == "framing"


def test_audit_asset_anatomy_gate():
    _, violations = _run_audit(_asset_response(anatomy=6.9))
    assert violations[0].locus.region == "anatomy"
    assert violations[0].severity is Severity.SEVERE


def test_audit_asset_vocal_performance_gate():
    _, violations = _run_audit(_asset_response(emotion="low"))
    assert [v.kind for v in violations] == [ViolationKind.EMOTION_MISMATCH]
    assert violations[0].severity is Severity.MILD
    assert violations[0].locus.region == "vocal"

    _, violations = _run_audit(_asset_response(naturalness=5.9))
    assert violations[0].locus.region == "vocal"


def test_audit_asset_cross_modal_gate():
    for kwargs in ({"consistency": "low"}, {"gender": False}, {"timbre": "low"}):
        _, violations = _run_audit(_asset_response(**kwargs))
        assert [v.kind for v in violations] == [ViolationKind.IDENTITY_MISMATCH]
        assert violations[0].severity is Severity.MILD
        assert violations[0].locus.region == "cross_modal"


def test_audit_asset_exactly_four_gates():
    _, violations = _run_audit(_asset_response(
        framing=False, anatomy=5.0, emotion="low", consistency="low", score=4.0))
    regions = [v.locus.region for v in violations]
    assert regions == ["framing", "anatomy", "vocal", "cross_modal"]


def test_violated_modalities_mapping():
    _, violations = _run_audit(_asset_response(framing=False, emotion="low"))
    assert preproduction.violated_modalities(violations) == {"visual", "vocal"}


# -- descriptor rewrite ------------------------------------------------


def test_rewrite_descriptor_filters_by_modality():
    registry, _ = _scripted_registry({"descriptor_rewrite": [{
        "action": "REWRITE_PROMPT",
        "new_descriptor": {"appearance": "sharper jawline",
                           "acoustic": "brighter tenor"},
    }]})
    _, violations = _run_audit(_asset_response(framing=False))
    updated = preproduction.rewrite_descriptor(make_profile(), violations,
                                               registry)
    assert updated.appearance == "sharper jawline"
    # vocal fields untouched on a visual-only complaint
    assert updated.voice.acoustic == make_profile().voice.acoustic


def test_rewrite_descriptor_keeps_profile_when_judge_fails():
    registry, _ = _scripted_registry(
        {"descriptor_rewrite": ["nope", "still nope"]})
    _, violations = _run_audit(_asset_response(framing=False))
    profile = make_profile()
    assert preproduction.rewrite_descriptor(profile, violations, registry) is profile


# -- identity loop -----------------------------------------------------


def _establish(registry, tmp_path, profile=None, script=None):
    script = script or make_script(mode="dialogue", speaker="Arthur",
                                   transcript="Meet me at the bridge.")
    profile = profile or script.cast[0]
    style = preproduction.STYLE_LIBRARY["watercolor"]
    return preproduction.establish_identity(
        profile, script, style, registry, RunStore(tmp_path),
        base_seed=3, config=loop.LoopConfig())


def test_establish_identity_happy_path(tmp_path):
    registry, _ = _scripted_registry({})
    state, profile, trace = _establish(registry, tmp_path)
    assert trace.status == "accepted"
    assert trace.accepted_attempt == 0
    assert [a.view for a in state.visual] == ["front", "side", "back"]
    assert state.vocal is not None
    assert state.vocal.transcript == "Meet me at the bridge."
    assert not state.frozen


def test_establish_identity_recovers_from_framing_failure(tmp_path):
    registry, judge = _scripted_registry({"asset_audit": [
        _asset_response(framing=False, score=5.0)]})
    state, profile, trace = _establish(registry, tmp_path)
    assert trace.status == "accepted"
    assert trace.accepted_attempt == 1
    assert len(trace.records) == 2
    assert len(state.visual) == 3


def test_establish_identity_rebuilds_only_the_violated_modality(tmp_path):
    clean_registry, _ = _scripted_registry({})
    clean_state, _, _ = _establish(clean_registry, tmp_path / "clean")

    # first audit complains about the voice only, below threshold
    registry, _ = _scripted_registry({"asset_audit": [
        _asset_response(emotion="low", score=6.0)]})
    state, _, trace = _establish(registry, tmp_path / "vocal")
    assert trace.accepted_attempt == 1
    # visual anchors from attempt 0 were kept, not re-rendered
    assert [a.artifact_id for a in state.visual] == \
        [a.artifact_id for a in clean_state.visual]
    # the vocal anchor was re-synthesized with a fresh seed
    assert state.vocal.artifact_id != clean_state.vocal.artifact_id


# -- cross-character barrier -------------------------------------------


def test_cross_character_audit_needs_two(tmp_path):
    registry, _ = _scripted_registry({})
    style = preproduction.STYLE_LIBRARY["watercolor"]
    with pytest.raises(ValueError):
        preproduction.audit_cross_character({"Arthur": _asset_state()}, style,
                                            registry)


def test_cross_character_outlier_flagged():
    registry, _ = _scripted_registry({"cross_character_audit": [{
        "audit_level": "cross_character_consistency",
        "overall_consistency_score": 5.5,
        "outlier_character": "Mira",
    }]})
    style = preproduction.STYLE_LIBRARY["watercolor"]
    states = {"Arthur": _asset_state(), "Mira": _asset_state()}
    score, violations = preproduction.audit_cross_character(states, style,
                                                            registry)
    assert score == 5.5
    assert violations[0].locus.character_id == "Mira"
    assert violations[0].severity is Severity.SEVERE


def test_cross_character_clean():
    registry, _ = _scripted_registry({"cross_character_audit": [{
        "audit_level": "cross_character_consistency",
        "overall_consistency_score": 8.8,
        "outlier_character": None,
    }]})
    style = preproduction.STYLE_LIBRARY["watercolor"]
    states = {"Arthur": _asset_state(), "Mira": _asset_state()}
    _, violations = preproduction.audit_cross_character(states, style, registry)
    assert violations == []
