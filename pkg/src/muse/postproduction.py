"""Post-production: chunked temporal planning and decay control.

Long clips are synthesized as a chain of short chunks, each conditioned on
the previous chunk's final frame. That chain is where two failure modes
live: narrative leakage (the next scene bleeding in before the cut) and
iterative burn-out (highlights saturating as frames are re-encoded chunk
after chunk). Both are detected from the tail frame itself plus a judged
critique, and both map to specific repair actions rather than a generic
retry.
"""

from __future__ import annotations

import copy
import logging

from PIL import Image

from . import adapters, media
from .errors import MissingSpeakerBox
from .model import (
    CLOSE_UP_ENFORCED_MOTION,
    CLOSE_UP_FORBIDDEN_MOTIONS,
    DEFAULT_CHUNK_DURATION,
    BBoxLayout,
    BoundaryGuard,
    CameraConstraint,
    ChunkPlan,
    Segment,
    Severity,
    TailState,
    ViolationKind,
    ViolationLocus,
    ViolationSignal,
)

log = logging.getLogger(__name__)

# fraction of tail-frame pixels at or above near-white luma that marks burn-out
BURNOUT_CLIPPING = 0.8
NEAR_WHITE_LUMA = 250.0

# a leak this close to the cut is cheaper to trim than to regenerate
TRUNCATE_LEAK_FRACTION = 0.8
TAIL_FRACTION = 0.2

DENOISE_STEP = 0.1
FRAME_CONTEXT_RESOLUTION = 1024

REGENERATE_CHUNK = "REGENERATE_CHUNK"
TRUNCATE_TAIL = "TRUNCATE_TAIL"
REDUCE_AND_RESTART = "REDUCE_AND_RESTART"


def camera_constraint_for(shot_type: str) -> CameraConstraint:
    if shot_type == "Close-up":
        return CameraConstraint(shot_type="Close-up",
                                forbidden=CLOSE_UP_FORBIDDEN_MOTIONS,
                                enforced=CLOSE_UP_ENFORCED_MOTION)
    return CameraConstraint(shot_type=shot_type)


def plan_chunks(segment: Segment, registry: adapters.ProviderRegistry, *,
                next_segment_hint: str = "") -> list[ChunkPlan]:
    """Judge-planned chunk schedule, sanitized against camera constraints.

    Chunk ids are renumbered sequentially from 1 no matter what the planner
    claims, the final chunk's goal is pinned to the scripted end state, and
    any camera motion the shot type forbids is replaced with the enforced
    one.
    """
    payload = {
        "task": "temporal_planning",
        "segment_index": segment.index,
        "shot_description": segment.visual.scene,
        "shot_type": segment.visual.shot_type,
        "end_state": segment.end_state,
        "next_segment_hint": next_segment_hint,
    }
    raw = adapters.judge_structured("temporal_plan", payload, registry)
    constraint = camera_constraint_for(segment.visual.shot_type)

    plans: list[ChunkPlan] = []
    for position, chunk in enumerate(raw["chunks"], start=1):
        camera = str(chunk.get("camera", ""))
        if camera in constraint.forbidden:
            log.warning("segment %d chunk %d: camera %r forbidden for %s, using %r",
                        segment.index, position, camera, constraint.shot_type,
                        constraint.enforced)
            camera = constraint.enforced
        guard_raw = chunk.get("boundary_guard") or {}
        plans.append(ChunkPlan(
            chunk_id=position,
            duration=float(chunk.get("duration", DEFAULT_CHUNK_DURATION)),
            narrative_focus=str(chunk.get("narrative_focus", "")),
            current_goal=str(chunk.get("current_goal", "")),
            boundary=BoundaryGuard(
                next_scene_event=str(guard_raw.get("next_scene_event", "")),
                negative_prompts=[str(p) for p in
                                  guard_raw.get("negative_prompt_injection", [])],
            ),
            camera=camera,
            denoise_strength=float(chunk.get("denoise_strength", 0.5)),
        ))
    plans[-1].current_goal = segment.end_state
    if next_segment_hint and not plans[-1].boundary.next_scene_event:
        plans[-1].boundary.next_scene_event = next_segment_hint
    return plans


def square_crop_rect(box, width: int, height: int) -> tuple[int, int, int, int]:
    """Pixel rect of the smallest in-frame square covering a normalized box."""
    x0 = int(round(box[0] * width))
    y0 = int(round(box[1] * height))
    x1 = int(round(box[2] * width))
    y1 = int(round(box[3] * height))
    side = max(x1 - x0, y1 - y0, 1)
    side = min(side, width, height)
    cx = (x0 + x1) // 2
    cy = (y0 + y1) // 2
    rx0 = cx - side // 2
    ry0 = cy - side // 2
    rx0 = max(0, min(rx0, width - side))
    ry0 = max(0, min(ry0, height - side))
    return rx0, ry0, rx0 + side, ry0 + side


def frame_context(image_bytes: bytes, speaker_id: str | None,
                  layout: BBoxLayout | None, shot_type: str, *,
                  resolution: int = FRAME_CONTEXT_RESOLUTION,
                  ) -> tuple[bytes, CameraConstraint]:
    """First-frame conditioning for a talking shot.

    With a speaker, the canvas is recropped to a square around the
    speaker's box and upsampled, so the mouth region carries enough pixels
    to animate. Without one the canvas passes through untouched. Either
    way the shot's camera constraint rides along.
    """
    constraint = camera_constraint_for(shot_type)
    if speaker_id is None:
        return image_bytes, constraint
    entries = layout.entries if layout is not None else {}
    if speaker_id not in entries:
        raise MissingSpeakerBox(
            f"speaker {speaker_id!r} has no box in the layout; "
            f"known: {sorted(entries)}")
    image = media.decode_image(image_bytes)
    rect = square_crop_rect(entries[speaker_id], image.width, image.height)
    crop = image.crop(rect).resize((resolution, resolution), Image.LANCZOS)
    text = media.png_text(image_bytes)
    carried = {media.IDENTITY_KEY: speaker_id}
    if media.STYLE_KEY in text:
        carried[media.STYLE_KEY] = text[media.STYLE_KEY]
    return media.encode_png(crop, carried), constraint


def extract_tail(video_bytes: bytes, *, segment_index: int, chunk_id: int,
                 motion_cue: str = "", store=None) -> TailState:
    """Tail conditioning state measured from the clip's final frame."""
    frame = media.last_frame(video_bytes)
    luma = media.luma_array(frame)
    clipping = float((luma >= NEAR_WHITE_LUMA).mean())
    contrast = float(luma.std())
    frame_ref = ""
    if store is not None:
        frame_ref = store.put(media.encode_png(frame.convert("RGB")), "png")
    return TailState(segment_index=segment_index, chunk_id=chunk_id,
                     frame_ref=frame_ref, motion_cue=motion_cue,
                     highlight_clipping=clipping, contrast=contrast)


def audit_temporal(segment: Segment, chunks: list[ChunkPlan],
                   tail: TailState | None,
                   registry: adapters.ProviderRegistry, *,
                   attempt: int = 0) -> tuple[float, list[ViolationSignal]]:
    """Judge the assembled clip for leakage, decay, and motion troubles.

    Burn-out fires on either route: the measured tail histogram crossing
    the clipping threshold, or the judge reporting contrast collapse.
    Neither route substitutes for the other.
    """
    payload = {
        "critique_type": "temporal_integrity_check",
        "segment_index": segment.index,
        "attempt": attempt,
        "chunks": [{
            "chunk_id": p.chunk_id,
            "narrative_focus": p.narrative_focus,
            "next_scene_event": p.boundary.next_scene_event,
        } for p in chunks],
        "tail_stats": {
            "highlight_clipping": tail.highlight_clipping,
            "contrast": tail.contrast,
        } if tail is not None else {},
    }
    raw = adapters.judge_structured("temporal_audit", payload, registry)

    violations: list[ViolationSignal] = []
    leak = raw["leakage_audit"]
    if leak.get("leakage_flag"):
        violations.append(ViolationSignal(
            kind=ViolationKind.TEMPORAL_LEAKAGE,
            severity=Severity.SEVERE,
            locus=ViolationLocus(chunk_id=leak.get("leaked_chunk_id")),
            evidence={"detail": leak.get("detail", ""),
                      "leaked_at_fraction": leak.get("leaked_at_fraction")},
        ))
    histogram = raw["visual_decay_audit"]["histogram_analysis"]
    measured_clipping = tail.highlight_clipping if tail is not None else float(
        histogram.get("highlight_clipping", 0.0))
    collapsed = bool(histogram.get("contrast_collapse"))
    if measured_clipping > BURNOUT_CLIPPING or collapsed:
        violations.append(ViolationSignal(
            kind=ViolationKind.BURN_OUT,
            severity=Severity.SEVERE,
            locus=ViolationLocus(chunk_id=chunks[-1].chunk_id if chunks else None),
            evidence={"highlight_clipping": measured_clipping,
                      "contrast_collapse": collapsed},
        ))
    motion = raw.get("motion_audit") or {}
    if motion and motion.get("plausible_transition") is False:
        violations.append(ViolationSignal(
            kind=ViolationKind.BOUNDARY_VIOLATION,
            severity=Severity.MILD,
            evidence={"detail": motion.get("detail", "")},
        ))
    return float(raw["continuity_score"]), violations


def _chunk_by_id(plans: list[ChunkPlan], chunk_id: int | None) -> ChunkPlan:
    for plan in plans:
        if plan.chunk_id == chunk_id:
            return plan
    return plans[-1]


def revise_temporal(plans: list[ChunkPlan],
                    violations: list[ViolationSignal],
                    ) -> tuple[list[ChunkPlan], str]:
    """Pick and apply the repair for a temporal violation set.

    Burn-out outranks leakage outranks framing outranks boundary trouble;
    one action per revision. Burn-out merges the last two chunks so fewer
    re-encode generations happen, and lowers the merged chunk's denoise.
    A leak close to the cut is trimmed (plans untouched); an earlier leak
    regenerates its chunk with the leaked event pushed into the negatives.
    """
    if not violations:
        raise ValueError("refusing to revise without violations")
    if not plans:
        raise ValueError("no chunk plans to revise")
    plans = copy.deepcopy(list(plans))
    by_kind = {ViolationKind(v.kind): v for v in reversed(violations)}

    if ViolationKind.BURN_OUT in by_kind:
        if len(plans) >= 2:
            earlier, later = plans[-2], plans[-1]
            merged = ChunkPlan(
                chunk_id=earlier.chunk_id,
                duration=earlier.duration + later.duration,
                narrative_focus=f"{earlier.narrative_focus}; {later.narrative_focus}",
                current_goal=later.current_goal,
                boundary=later.boundary,
                camera=earlier.camera,
                denoise_strength=max(0.0, later.denoise_strength - DENOISE_STEP),
            )
            plans = plans[:-2] + [merged]
        else:
            plans[0].denoise_strength = max(
                0.0, plans[0].denoise_strength - DENOISE_STEP)
        return plans, REDUCE_AND_RESTART

    if ViolationKind.TEMPORAL_LEAKAGE in by_kind:
        violation = by_kind[ViolationKind.TEMPORAL_LEAKAGE]
        fraction = violation.evidence.get("leaked_at_fraction")
        if fraction is not None and fraction >= TRUNCATE_LEAK_FRACTION:
            return plans, TRUNCATE_TAIL
        target = _chunk_by_id(plans, violation.locus.chunk_id)
        leaked = target.boundary.next_scene_event or violation.evidence.get("detail", "")
        for phrase in (f"do not show: {leaked}" if leaked else "",
                       "hold on the current scene"):
            if phrase and phrase not in target.boundary.negative_prompts:
                target.boundary.negative_prompts.append(phrase)
        return plans, REGENERATE_CHUNK

    if ViolationKind.FRAMING_VIOLATION in by_kind:
        violation = by_kind[ViolationKind.FRAMING_VIOLATION]
        target = _chunk_by_id(plans, violation.locus.chunk_id)
        target.camera = CLOSE_UP_ENFORCED_MOTION
        return plans, REGENERATE_CHUNK

    violation = by_kind.get(ViolationKind.BOUNDARY_VIOLATION)
    if violation is None:
        raise ValueError(
            f"no temporal repair for kinds {sorted(k.value for k in by_kind)}")
    target = _chunk_by_id(plans, violation.locus.chunk_id)
    phrase = "abrupt jump cut, teleporting subjects"
    if phrase not in target.boundary.negative_prompts:
        target.boundary.negative_prompts.append(phrase)
    return plans, REGENERATE_CHUNK


def truncate_video_tail(video_bytes: bytes,
                        fraction: float = TAIL_FRACTION) -> bytes:
    """Drop the final fraction of frames, keeping at least one."""
    frames = media.decode_frames(video_bytes)
    dropped = max(1, int(round(len(frames) * fraction)))
    kept = frames[:max(1, len(frames) - dropped)]
    comment = media.clip_comment(video_bytes)
    comment["truncated_frames"] = dropped
    return media.encode_gif(kept, comment=comment)
