"""Story orchestration: one prompt in, a run directory of artifacts out.

The run walks three phases. Pre-production decomposes the prompt, locks a
style, and anchors every character's identity behind a cross-cast audit
barrier; the anchors are then frozen in shared memory and no later phase
may rewrite them. Production and post-production then run the closed loop
per segment: canvas, audio, and chunked clip, each verified and revised
under its own budget. Everything observable lands in the run directory:
content-addressed artifacts, a JSONL trace of every loop decision, and a
manifest that records scores, statuses, and the final exit status.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import adapters, loop, media, postproduction, preproduction, production
from .errors import BackendUnavailable, MuseError, PreproductionFailed
from .memory import StateMemory
from .model import (
    CharacterProfile,
    ControlBundle,
    GenerationParams,
    IdentityState,
    Modality,
    Phase,
    Script,
    Segment,
    ShotArtifact,
    StyleProfile,
    UserPrompt,
    canonical_json,
    to_jsonable,
)
from .store import RunStore, derive_seed, system_clock, write_json_atomic

log = logging.getLogger(__name__)

EXIT_ACCEPTED = 0
EXIT_ABORTED = 1
EXIT_DEGRADED = 2


class TraceLog:
    """Append-only JSONL event log with injectable time."""

    def __init__(self, path: Path, clock: Callable[[], float] = system_clock):
        self.path = Path(path)
        self._clock = clock
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8")

    def event(self, kind: str, **payload: Any) -> None:
        record = {"t": self._clock(), "kind": kind}
        record.update(payload)
        self._handle.write(canonical_json(to_jsonable(record)) + "\n")
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()


def _loop_summary(trace: loop.LoopTrace) -> dict:
    return {
        "status": trace.status,
        "accepted_attempt": trace.accepted_attempt,
        "attempts": [{
            "attempt": r.attempt,
            "score": r.score,
            "violations": [v.kind.value for v in r.violations],
            "error": r.error,
        } for r in trace.records],
    }


@dataclass
class SegmentResult:
    index: int
    image: ShotArtifact
    video: ShotArtifact
    audio: ShotArtifact | None = None
    statuses: dict[str, str] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)
    traces: dict[str, loop.LoopTrace] = field(default_factory=dict)


@dataclass
class StoryBundle:
    run_id: str
    run_dir: Path
    script: Script
    style: StyleProfile
    results: list[SegmentResult]
    identities: dict[str, IdentityState]
    manifest: dict
    manifest_path: Path
    exit_status: int

    @property
    def accepted_all(self) -> bool:
        return self.exit_status == EXIT_ACCEPTED


def _preproduce(prompt: UserPrompt, registry: adapters.ProviderRegistry,
                store: RunStore, memory: StateMemory, trace: TraceLog, *,
                base_seed: int, config: loop.LoopConfig,
                ) -> tuple[Script, StyleProfile, dict[str, IdentityState],
                           dict[str, CharacterProfile], list[str]]:
    try:
        script = preproduction.decompose_script(
            prompt, registry, temperature=config.planner_temperature)
        style = preproduction.select_style(script, prompt, registry)
    except BackendUnavailable as exc:
        raise PreproductionFailed(f"planning backends unreachable: {exc}") from exc
    script.style_id = style.id
    memory.commit("style", "global", {"style_id": style.id,
                                      "char_prompt": style.char_prompt,
                                      "scene_prompt": style.scene_prompt,
                                      "negative_prompt": style.negative_prompt})
    trace.event("style_locked", style=style.id, genre=script.genre)

    identities: dict[str, IdentityState] = {}
    profiles: dict[str, CharacterProfile] = {}
    statuses: list[str] = []
    try:
        for profile in script.cast:
            state, final_profile, identity_trace = preproduction.establish_identity(
                profile, script, style, registry, store,
                base_seed=derive_seed(base_seed, "char", profile.id),
                config=config)
            identities[profile.id] = state
            profiles[profile.id] = final_profile
            statuses.append(identity_trace.status)
            trace.event("identity_established", character=profile.id,
                        **_loop_summary(identity_trace))

        if len(identities) >= 2:
            score, violations = preproduction.audit_cross_character(
                identities, style, registry)
            trace.event("cross_character_audit", score=score,
                        violations=[v.kind.value for v in violations])
            if violations:
                outlier = violations[0].locus.character_id or next(iter(identities))
                log.warning("cross-character audit flagged %s; rebuilding once",
                            outlier)
                profiles[outlier] = preproduction.rewrite_descriptor(
                    profiles[outlier], violations, registry)
                state, final_profile, retry_trace = preproduction.establish_identity(
                    profiles[outlier], script, style, registry, store,
                    base_seed=derive_seed(base_seed, "char-retry", outlier),
                    config=config)
                identities[outlier] = state
                profiles[outlier] = final_profile
                statuses.append(retry_trace.status)
                score, violations = preproduction.audit_cross_character(
                    identities, style, registry)
                if violations:
                    raise PreproductionFailed(
                        f"cast never converged on one style (score {score})")
    except BackendUnavailable as exc:
        raise PreproductionFailed(f"identity backends unreachable: {exc}") from exc

    for character_id, state in identities.items():
        frozen = dataclasses.replace(state, frozen=True)
        memory.commit("identity", character_id, frozen)
        identities[character_id] = frozen
    return script, style, identities, profiles, statuses


def _write_character_sheets(run_dir: Path, profiles: dict[str, CharacterProfile],
                            identities: dict[str, IdentityState]) -> None:
    sheet_dir = run_dir / "characters"
    sheet_dir.mkdir(parents=True, exist_ok=True)
    for character_id, state in sorted(identities.items()):
        profile = profiles[character_id]
        write_json_atomic(sheet_dir / f"{character_id}.json", {
            "profile": to_jsonable(profile),
            "views": {a.view: a.artifact_id for a in state.visual},
            "vocal": state.vocal.artifact_id if state.vocal else None,
            "transcript": state.vocal.transcript if state.vocal else None,
        })


def _produce_canvas(segment: Segment, style: StyleProfile,
                    registry: adapters.ProviderRegistry, store: RunStore,
                    identities: dict[str, IdentityState], *, base_seed: int,
                    config: loop.LoopConfig,
                    ) -> tuple[ShotArtifact, ControlBundle, loop.LoopTrace]:
    def plan(attempt: int) -> ControlBundle:
        bundle, report = production.plan_scene_bundle(
            segment, style, registry, identities,
            base_seed=derive_seed(base_seed, "plan", attempt))
        bundle.attempt = attempt
        if report.actions:
            log.info("segment %d: guardrail adjusted %d box(es)",
                     segment.index, len(report.actions))
        return bundle

    def execute(control: ControlBundle) -> ShotArtifact:
        conditioning: dict[str, Any] = {
            "style_id": style.id,
            "identity_refs": dict(control.conditioning),
        }
        if (control.route is not None and control.route.mode == "layout_guided"
                and control.layout is not None and control.layout.entries):
            conditioning["layout"] = {
                name: list(box) for name, box in control.layout.entries.items()}
        request = adapters.GenerationRequest(
            role="image_gen",
            prompt_parts=list(control.positive_prompts),
            negative_parts=list(control.negative_prompts),
            params=control.params,
            conditioning=conditioning,
            segment_index=segment.index,
            purpose="scene_canvas",
        )
        return adapters.generate(request, registry, store)

    def verify(control: ControlBundle, artifact: ShotArtifact):
        critique, violations = production.audit_scene(
            store.get(artifact.ref), control.layout, segment, registry,
            anchors=identities, attempt=control.attempt)
        return violations, critique.aesthetic_score

    hooks = loop.PhaseHooks(plan=plan, execute=execute, verify=verify)
    best, ltrace = loop.run_segment_loop(hooks, config, phase=Phase.PROD,
                                         segment_index=segment.index)
    artifact: ShotArtifact = best.artifact
    artifact.score = best.score
    return artifact, best.control, ltrace


def _produce_audio(segment: Segment, registry: adapters.ProviderRegistry,
                   store: RunStore, identities: dict[str, IdentityState], *,
                   base_seed: int) -> ShotArtifact | None:
    audio = segment.audio
    if audio.mode == "silent" or not audio.transcript:
        return None
    anchor = None
    if audio.mode == "dialogue" and audio.speaker:
        state = identities.get(audio.speaker)
        if state is not None and state.vocal is not None:
            anchor = state.vocal.artifact_id
    request = adapters.GenerationRequest(
        role="voice_synth",
        prompt_parts=[audio.transcript],
        params=GenerationParams(seed=derive_seed(base_seed, "audio", segment.index)),
        conditioning={"mode": audio.mode, "speaker": audio.speaker,
                      "vocal_anchor": anchor},
        segment_index=segment.index,
        purpose="segment_audio",
    )
    return adapters.generate(request, registry, store)


def _tail_meta(tail) -> dict | None:
    if tail is None:
        return None
    return {"frame_ref": tail.frame_ref, "motion_cue": tail.motion_cue,
            "highlight_clipping": tail.highlight_clipping,
            "contrast": tail.contrast}


def _produce_clip(segment: Segment, style: StyleProfile,
                  registry: adapters.ProviderRegistry, store: RunStore,
                  canvas: ShotArtifact, canvas_control: ControlBundle,
                  prev_tail, *, next_segment_hint: str, base_seed: int,
                  config: loop.LoopConfig,
                  ) -> tuple[ShotArtifact, loop.LoopTrace]:
    """Chunked clip synthesis for one segment, inside the closed loop.

    Chunks chain through extracted tail frames; a chunk whose request is
    unchanged between attempts is reused instead of regenerated, so a
    revision only re-renders from the repaired chunk forward. A pending
    TRUNCATE_TAIL revision is pure artifact surgery: trim the previous
    clip, no backend calls at all.
    """
    speaker = segment.audio.speaker if segment.audio.mode == "dialogue" else None
    canvas_bytes = store.get(canvas.ref)
    layout = canvas_control.layout
    if speaker is not None and (layout is None or not layout.entries):
        first_frame_bytes, constraint = canvas_bytes, postproduction.camera_constraint_for(
            segment.visual.shot_type)
    else:
        first_frame_bytes, constraint = postproduction.frame_context(
            canvas_bytes, speaker, layout, segment.visual.shot_type)
    first_frame_ref = store.put(first_frame_bytes, "png")

    chunk_cache: dict[str, str] = {}
    last_built: dict[str, Any] = {"artifact": None}

    def plan(attempt: int) -> ControlBundle:
        plans = postproduction.plan_chunks(segment, registry,
                                           next_segment_hint=next_segment_hint)
        return ControlBundle(
            segment_index=segment.index,
            phase=Phase.POST,
            attempt=attempt,
            positive_prompts=[style.scene_prompt, segment.visual.scene],
            negative_prompts=[style.negative_prompt],
            params=GenerationParams(
                seed=derive_seed(base_seed, "post", segment.index)),
            temporal=plans,
            conditioning={"canvas": canvas.ref, "first_frame": first_frame_ref},
        )

    def execute(control: ControlBundle) -> ShotArtifact:
        pending = control.params.extra.get("temporal_action")
        previous: ShotArtifact | None = last_built["artifact"]
        if pending == postproduction.TRUNCATE_TAIL and previous is not None:
            trimmed = postproduction.truncate_video_tail(store.get(previous.ref))
            ref = store.put(trimmed, "gif")
            artifact = ShotArtifact(
                segment_index=segment.index, modality=Modality.VIDEO, ref=ref,
                metadata={**previous.metadata, "truncated": True})
            last_built["artifact"] = artifact
            return artifact

        frames = []
        chunk_refs = []
        tail = prev_tail
        for position, chunk_plan in enumerate(control.temporal):
            if position == 0 or tail is None or not tail.frame_ref:
                start_frame = first_frame_ref
            else:
                start_frame = tail.frame_ref
            request = adapters.GenerationRequest(
                role="video_gen",
                prompt_parts=[style.scene_prompt, chunk_plan.narrative_focus,
                              f"goal: {chunk_plan.current_goal}",
                              f"camera: {chunk_plan.camera}"],
                negative_parts=(list(control.negative_prompts)
                                + list(chunk_plan.boundary.negative_prompts)),
                params=GenerationParams(
                    guidance_scale=control.params.guidance_scale,
                    steps=control.params.steps,
                    seed=derive_seed(control.params.seed, "chunk",
                                     chunk_plan.chunk_id),
                    denoise_strength=chunk_plan.denoise_strength,
                ),
                conditioning={
                    "first_frame": start_frame,
                    "tail": _tail_meta(tail),
                    "chunk": {"chunk_id": chunk_plan.chunk_id,
                              "duration": chunk_plan.duration,
                              "camera": chunk_plan.camera,
                              "next_scene_event":
                                  chunk_plan.boundary.next_scene_event},
                    "style_id": style.id,
                },
                segment_index=segment.index,
                purpose="video_chunk",
            )
            request_key = adapters.request_hash(request)
            if request_key in chunk_cache:
                chunk_ref = chunk_cache[request_key]
            else:
                chunk_ref = adapters.generate(request, registry, store).ref
                chunk_cache[request_key] = chunk_ref
            chunk_bytes = store.get(chunk_ref)
            chunk_refs.append(chunk_ref)
            frames.extend(media.decode_frames(chunk_bytes))
            tail = postproduction.extract_tail(
                chunk_bytes, segment_index=segment.index,
                chunk_id=chunk_plan.chunk_id, motion_cue=chunk_plan.camera,
                store=store)
        clip = media.encode_gif(frames, comment={"segment": segment.index,
                                                 "chunks": chunk_refs})
        ref = store.put(clip, "gif")
        artifact = ShotArtifact(
            segment_index=segment.index, modality=Modality.VIDEO, ref=ref,
            metadata={"chunks": chunk_refs, "n_frames": len(frames),
                      "camera_enforced": constraint.enforced or None})
        last_built["artifact"] = artifact
        return artifact

    def verify(control: ControlBundle, artifact: ShotArtifact):
        last_chunk_id = control.temporal[-1].chunk_id if control.temporal else 1
        tail_state = postproduction.extract_tail(
            store.get(artifact.ref), segment_index=segment.index,
            chunk_id=last_chunk_id, store=store)
        score, violations = postproduction.audit_temporal(
            segment, control.temporal, tail_state, registry,
            attempt=control.attempt)
        return violations, score

    hooks = loop.PhaseHooks(plan=plan, execute=execute, verify=verify)
    best, ltrace = loop.run_segment_loop(hooks, config, phase=Phase.POST,
                                         segment_index=segment.index)
    artifact: ShotArtifact = best.artifact
    artifact.score = best.score
    return artifact, ltrace


def run_story(prompt: UserPrompt, registry: adapters.ProviderRegistry, *,
              runs_dir: str | Path, run_id: str,
              config: loop.LoopConfig | None = None,
              base_seed: int = 0,
              clock: Callable[[], float] = system_clock) -> StoryBundle:
    """Execute the full pipeline for one prompt into runs_dir/run_id."""
    config = config or loop.LoopConfig()
    run_dir = Path(runs_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    store = RunStore(run_dir)
    memory = StateMemory(log_path=run_dir / "memory.jsonl", clock=clock)
    trace = TraceLog(run_dir / "trace.jsonl", clock)
    started = clock()
    trace.event("run_started", run_id=run_id, prompt=prompt.text,
                genre=prompt.genre, seed=base_seed)

    manifest: dict[str, Any] = {"run_id": run_id,
                                "prompt": to_jsonable(prompt),
                                "seed": base_seed}
    manifest_path = run_dir / "manifest.json"
    results: list[SegmentResult] = []
    loop_statuses: list[str] = []

    try:
        script, style, identities, profiles, pre_statuses = _preproduce(
            prompt, registry, store, memory, trace,
            base_seed=base_seed, config=config)
        loop_statuses.extend(pre_statuses)
        _write_character_sheets(run_dir, profiles, identities)
        manifest["script"] = {
            "title": script.title, "genre": script.genre, "style": style.id,
            "cast": sorted(identities),
            "n_segments": len(script.segments),
        }

        prev_tail = None
        for position, segment in enumerate(script.segments):
            seg_seed = derive_seed(base_seed, "segment", segment.index)
            canvas, canvas_control, prod_trace = _produce_canvas(
                segment, style, registry, store, identities,
                base_seed=seg_seed, config=config)
            loop_statuses.append(prod_trace.status)
            trace.event("segment_production", segment=segment.index,
                        canvas=canvas.ref, **_loop_summary(prod_trace))
            if canvas_control.layout is not None and canvas_control.layout.entries:
                memory.commit("layout", str(segment.index), {
                    "entries": {k: list(v) for k, v
                                in canvas_control.layout.entries.items()}})
            memory.commit("shot", str(segment.index),
                          {"image": canvas.ref, "score": canvas.score})

            audio = _produce_audio(segment, registry, store, identities,
                                   base_seed=seg_seed)
            if audio is not None:
                memory.commit("audio", str(segment.index),
                              {"audio": audio.ref, "mode": segment.audio.mode})
                trace.event("segment_audio", segment=segment.index,
                            audio=audio.ref, mode=segment.audio.mode)

            next_hint = ""
            if position + 1 < len(script.segments):
                next_hint = script.segments[position + 1].visual.scene
            video, post_trace = _produce_clip(
                segment, style, registry, store, canvas, canvas_control,
                prev_tail, next_segment_hint=next_hint, base_seed=seg_seed,
                config=config)
            loop_statuses.append(post_trace.status)
            trace.event("segment_post", segment=segment.index, video=video.ref,
                        **_loop_summary(post_trace))

            final_tail = postproduction.extract_tail(
                store.get(video.ref), segment_index=segment.index,
                chunk_id=len(video.metadata.get("chunks", [])) or 1,
                store=store)
            memory.commit("tail", str(segment.index), final_tail)
            prev_tail = final_tail

            results.append(SegmentResult(
                index=segment.index, image=canvas, video=video, audio=audio,
                statuses={"production": prod_trace.status,
                          "post": post_trace.status},
                scores={"production": canvas.score or 0.0,
                        "post": video.score or 0.0},
                traces={"production": prod_trace, "post": post_trace},
            ))
    except MuseError as exc:
        manifest.update({
            "aborted": f"{type(exc).__name__}: {exc}",
            "exit_status": EXIT_ABORTED,
            "timings": {"started": started, "finished": clock()},
        })
        write_json_atomic(manifest_path, to_jsonable(manifest))
        trace.event("run_aborted", error=str(exc))
        trace.close()
        raise

    exit_status = (EXIT_ACCEPTED
                   if all(s == "accepted" for s in loop_statuses)
                   else EXIT_DEGRADED)
    manifest["segments"] = [{
        "index": r.index,
        "characters": list(segment.visual.characters),
        "shot_type": segment.visual.shot_type,
        "scene": segment.visual.scene,
        "audio_mode": segment.audio.mode,
        "statuses": r.statuses,
        "scores": r.scores,
        "artifacts": {"image": r.image.ref, "video": r.video.ref,
                      "audio": r.audio.ref if r.audio else None},
    } for segment, r in zip(script.segments, results)]
    manifest["identity"] = {
        character_id: {
            "views": {a.view: a.artifact_id for a in state.visual},
            "vocal": state.vocal.artifact_id if state.vocal else None,
        } for character_id, state in sorted(identities.items())
    }
    manifest["exit_status"] = exit_status
    manifest["memory_version"] = memory.version
    manifest["timings"] = {"started": started, "finished": clock()}
    write_json_atomic(manifest_path, to_jsonable(manifest))
    trace.event("run_finished", exit_status=exit_status)
    trace.close()

    return StoryBundle(run_id=run_id, run_dir=run_dir, script=script,
                       style=style, results=results, identities=identities,
                       manifest=manifest, manifest_path=manifest_path,
                       exit_status=exit_status)
