"""JSON schemas for structured judge/planner responses, keyed by rubric id."""

from __future__ import annotations

_BOOL = {"type": "boolean"}
_STR = {"type": "string"}
_LEVEL = {"type": "string", "enum": ["low", "mid", "high"]}
_BOX = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_SCORE_10 = {"type": "number", "minimum": 0, "maximum": 10}
_SCORE_5 = {"type": "number", "minimum": 0, "maximum": 5}
_SCORE_1_5 = {"type": "number", "minimum": 1, "maximum": 5}
_BOX_MAP = {"type": "object", "additionalProperties": _BOX}


def _obj(required: dict, optional: dict | None = None) -> dict:
    properties = dict(required)
    properties.update(optional or {})
    return {"type": "object", "required": list(required), "properties": properties}


SCHEMAS: dict[str, dict] = {
    "script_decomposition": _obj(
        {
            "characters": {
                "type": "array",
                "items": _obj(
                    {"id": _STR, "age": _STR, "gender": _STR, "appearance": _STR},
                    {"attire": _STR,
                     "voice": _obj({}, {"acoustic": _STR, "rhythmic": _STR})},
                ),
            },
            "segments": {
                "type": "array",
                "minItems": 1,
                "items": _obj(
                    {"index": {"type": "integer"}, "scene": _STR, "end_state": _STR},
                    {"characters": {"type": "array", "items": _STR},
                     "shot_type": _STR,
                     "audio": _obj({"mode": _STR},
                                   {"transcript": _STR,
                                    "speaker": {"type": ["string", "null"]}})},
                ),
            },
        },
        {"title": _STR, "genre": _STR},
    ),
    "style_selection": _obj({"selected_style_id": _STR}, {"reasoning": _STR}),
    "asset_audit": _obj(
        {
            "audit_level": {"type": "string", "const": "atomic_asset"},
            "visual_critique": _obj({
                "framing_check": _obj({
                    "is_full_body": _BOOL,
                    "feet_visible": _BOOL,
                    "head_to_toe_in_frame": _BOOL,
                }),
                "anatomical_integrity": _obj(
                    {"score": _SCORE_10},
                    {"hands_and_fingers": _STR, "face_structure": _STR},
                ),
            }),
            "overall_score": _SCORE_10,
        },
        {
            "audio_critique": {
                "type": ["object", "null"],
                "properties": {
                    "voice_match": _obj({}, {"gender_match": _BOOL,
                                             "age_match": _BOOL,
                                             "timbre_match": _LEVEL}),
                    "performance_quality": _obj({}, {"emotion_accuracy": _LEVEL,
                                                     "naturalness": _SCORE_10}),
                    "audio_image_consistency": _LEVEL,
                },
            },
        },
    ),
    "cross_character_audit": _obj(
        {
            "audit_level": {"type": "string", "const": "cross_character_consistency"},
            "overall_consistency_score": _SCORE_10,
        },
        {
            "evaluation_metrics": _obj({}, {"visual_style_consistency": _STR,
                                            "script_style_match": _STR,
                                            "detected_style": _STR}),
            "outlier_character": {"type": ["string", "null"]},
        },
    ),
    "descriptor_rewrite": _obj(
        {
            "action": {"type": "string", "const": "REWRITE_PROMPT"},
            "new_descriptor": _obj({}, {"acoustic": _STR, "rhythmic": _STR,
                                        "appearance": _STR, "attire": _STR}),
        },
    ),
    "layout_mode": _obj(
        {
            "task": {"type": "string", "const": "determine_layout_mode"},
            "decision_logic": _obj({
                "stage_1_non_face": _BOOL,
                "stage_2_facial": _BOOL,
                "stage_3_default": _BOOL,
            }),
            "final_decision": {"type": "string", "enum": ["none", "layout_guided"]},
        },
        {"reasoning": _STR},
    ),
    "layout_proposal": _obj({"boxes": _BOX_MAP}),
    "scene_audit": _obj(
        {
            "critique_type": {"type": "string", "const": "production_quality_check"},
            "spatial_logic_audit": _obj(
                {"bbox_overlap_detected": _BOOL},
                {"overlap_ratio": {"type": "number"},
                 "conflicting_subjects": {"type": "array", "items": _STR},
                 "physical_plausibility": _BOOL},
            ),
            "visual_integration": _obj(
                {"sticker_effect_severity": {"type": "string",
                                             "enum": ["None", "Mild", "Severe"]}},
                {"shadow_logic": _BOOL, "lighting_match": _BOOL},
            ),
            "overall_quality": _obj(
                {"aesthetic_score": _SCORE_10},
                {"limb_completeness": _STR, "body_structure": _STR},
            ),
        },
        {"detected_characters": _BOX_MAP},
    ),
    "temporal_plan": _obj({
        "chunks": {
            "type": "array",
            "minItems": 1,
            "items": _obj(
                {"chunk_id": {"type": "integer"},
                 "narrative_focus": _STR,
                 "current_goal": _STR},
                {"duration": {"type": "number", "exclusiveMinimum": 0},
                 "boundary_guard": _obj({}, {"next_scene_event": _STR,
                                             "negative_prompt_injection":
                                                 {"type": "array", "items": _STR}}),
                 "camera": _STR,
                 "denoise_strength": {"type": "number", "minimum": 0, "maximum": 1}},
            ),
        },
    }),
    "temporal_audit": _obj(
        {
            "critique_type": {"type": "string", "const": "temporal_integrity_check"},
            "leakage_audit": _obj(
                {"leakage_flag": _BOOL},
                {"detail": _STR,
                 "leaked_chunk_id": {"type": ["integer", "null"]},
                 "leaked_at_fraction": {"type": ["number", "null"]}},
            ),
            "visual_decay_audit": _obj({
                "histogram_analysis": _obj(
                    {"contrast_collapse": _BOOL},
                    {"highlight_clipping": {"type": "number"}},
                ),
            }, ),
            "continuity_score": _SCORE_10,
        },
        {"motion_audit": _obj({}, {"plausible_transition": _BOOL, "detail": _STR}),
         "diagnosis": _STR},
    ),
    "eval_narrative_states": _obj({
        "changes": {
            "type": "array",
            "items": _obj({"description": _STR,
                           "level": {"type": "integer", "minimum": 0, "maximum": 3}}),
        },
    }),
    "eval_story_expansion": _obj({
        "dimension_scores": {"type": "array", "items": _SCORE_5,
                             "minItems": 5, "maxItems": 5},
    }),
    "eval_creative_features": _obj({
        "features": {"type": "array", "items": _SCORE_1_5,
                     "minItems": 5, "maxItems": 5},
    }),
    "eval_shot_rubric": _obj({
        "scene": _SCORE_5,
        "character_action": _SCORE_5,
        "camera": _SCORE_5,
        "atmosphere": _SCORE_5,
    }),
    "eval_av_alignment": _obj({
        "grounding": {"type": "number", "minimum": 0, "maximum": 1},
        "synergy": _SCORE_1_5,
    }),
    "eval_audio_semantic": _obj({
        "age": _SCORE_1_5, "emotion": _SCORE_1_5, "prosody": _SCORE_1_5,
    }),
    "eval_audio_fidelity": _obj({"clarity": _SCORE_1_5}),
    "eval_incoherence": _obj({"incoherence": _SCORE_5}),
    "eval_character_detection": _obj({"boxes": _BOX_MAP}),
}
