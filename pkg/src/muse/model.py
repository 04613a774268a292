"""Domain types shared by every pipeline phase."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .errors import ScriptValidationError

GENRES = ("Thriller", "Daily Life", "Period Piece", "Science Fiction", "Fantasy")

SHOT_TYPES = ("Wide", "Medium", "Close-up")

# Camera motions that break a close-up if the video model obeys them.
CLOSE_UP_FORBIDDEN_MOTIONS = frozenset({"Zoom Out", "Pull Back", "Wide Shot"})
CLOSE_UP_ENFORCED_MOTION = "Static or Slight Pan"

DEFAULT_CHUNK_DURATION = 5.0
DEFAULT_GUIDANCE_SCALE = 3.5
DEFAULT_STEPS = 28


class Severity(str, Enum):
    MILD = "mild"
    SEVERE = "severe"


class ViolationKind(str, Enum):
    IDENTITY_MISMATCH = "IdentityMismatch"
    LAYOUT_VIOLATION = "LayoutViolation"
    TEMPORAL_LEAKAGE = "TemporalLeakage"
    STICKER_EFFECT = "StickerEffect"
    SPATIAL_CONFLICT = "SpatialConflict"
    EMOTION_MISMATCH = "EmotionMismatch"
    BURN_OUT = "BurnOut"
    BOUNDARY_VIOLATION = "BoundaryViolation"
    FRAMING_VIOLATION = "FramingViolation"


class Modality(str, Enum):
    IMAGE = "image"
    VIDEO = "video"
    AUDIO = "audio"


class Phase(str, Enum):
    PRE = "pre"
    PROD = "prod"
    POST = "post"


@dataclass(frozen=True)
class UserPrompt:
    text: str
    genre: str | None = None
    style_override: str | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("prompt text must be non-empty")
        if self.genre is not None and self.genre not in GENRES:
            raise ValueError(f"unknown genre: {self.genre!r}")


@dataclass
class VocalDescriptor:
    """Acoustic (timbre/texture) plus rhythmic (pacing/cadence) text pair."""

    acoustic: str = ""
    rhythmic: str = ""


@dataclass
class CharacterProfile:
    id: str
    age: str
    gender: str
    appearance: str
    attire: str = ""
    voice: VocalDescriptor = field(default_factory=VocalDescriptor)


@dataclass
class VisualIntent:
    characters: list[str] = field(default_factory=list)
    scene: str = ""
    shot_type: str = "Medium"


@dataclass
class AudioIntent:
    mode: str = "narration"  # narration | dialogue | silent
    transcript: str = ""
    speaker: str | None = None


@dataclass
class Segment:
    index: int
    visual: VisualIntent
    audio: AudioIntent
    end_state: str


@dataclass
class Script:
    segments: list[Segment]
    cast: list[CharacterProfile]
    style_id: str | None = None
    genre: str | None = None
    title: str | None = None

    def character(self, character_id: str) -> CharacterProfile:
        for profile in self.cast:
            if profile.id == character_id:
                return profile
        raise KeyError(character_id)


@dataclass(frozen=True)
class StyleProfile:
    id: str
    display_name: str
    description: str
    char_prompt: str
    scene_prompt: str
    negative_prompt: str


@dataclass
class VisualAnchor:
    view: str
    artifact_id: str
    embedding: np.ndarray


@dataclass
class VocalAnchor:
    artifact_id: str
    descriptor: VocalDescriptor
    transcript: str


@dataclass
class IdentityState:
    character_id: str
    visual: list[VisualAnchor]
    vocal: VocalAnchor | None = None
    frozen: bool = False


Box = tuple[float, float, float, float]  # (x_min, y_min, x_max, y_max), normalized


@dataclass
class BBoxLayout:
    entries: dict[str, Box] = field(default_factory=dict)

    def __post_init__(self):
        self.entries = {name: tuple(float(c) for c in box) for name, box in self.entries.items()}


@dataclass
class RouteDecision:
    mode: str  # "none" | "layout_guided"
    stage: str  # "non_face" | "facial" | "default"
    reasoning: str = ""

    def __post_init__(self):
        if self.mode not in ("none", "layout_guided"):
            raise ValueError(f"unknown layout mode: {self.mode!r}")
        if self.stage not in ("non_face", "facial", "default"):
            raise ValueError(f"unknown routing stage: {self.stage!r}")
        if self.stage == "non_face" and self.mode != "none":
            raise ValueError("non-face focus must bypass layout control")


@dataclass
class BoundaryGuard:
    next_scene_event: str = ""
    negative_prompts: list[str] = field(default_factory=list)


@dataclass
class ChunkPlan:
    chunk_id: int
    duration: float = DEFAULT_CHUNK_DURATION
    narrative_focus: str = ""
    current_goal: str = ""
    boundary: BoundaryGuard = field(default_factory=BoundaryGuard)
    camera: str = ""
    denoise_strength: float = 0.5


@dataclass
class TailState:
    segment_index: int
    chunk_id: int
    frame_ref: str
    motion_cue: str
    highlight_clipping: float
    contrast: float


@dataclass(frozen=True)
class CameraConstraint:
    shot_type: str
    forbidden: frozenset[str] = frozenset()
    enforced: str = ""


@dataclass
class ViolationLocus:
    artifact_id: str | None = None
    character_id: str | None = None
    region: str | None = None
    chunk_id: int | None = None


@dataclass
class ViolationSignal:
    kind: ViolationKind
    severity: Severity
    locus: ViolationLocus = field(default_factory=ViolationLocus)
    evidence: dict[str, Any] = field(default_factory=dict)


@dataclass
class GenerationParams:
    guidance_scale: float = DEFAULT_GUIDANCE_SCALE
    steps: int = DEFAULT_STEPS
    seed: int = 0
    denoise_strength: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class ControlBundle:
    segment_index: int
    phase: Phase
    attempt: int = 0
    route: RouteDecision | None = None
    layout: BBoxLayout | None = None
    positive_prompts: list[str] = field(default_factory=list)
    negative_prompts: list[str] = field(default_factory=list)
    params: GenerationParams = field(default_factory=GenerationParams)
    temporal: list[ChunkPlan] = field(default_factory=list)
    conditioning: dict[str, str] = field(default_factory=dict)

    @property
    def positive_prompt(self) -> str:
        return ", ".join(p for p in self.positive_prompts if p)

    @property
    def negative_prompt(self) -> str:
        return ", ".join(p for p in self.negative_prompts if p)


@dataclass
class ShotArtifact:
    segment_index: int
    modality: Modality
    ref: str  # content-addressed id inside the run store
    metadata: dict[str, Any] = field(default_factory=dict)
    score: float | None = None

    def __post_init__(self):
        if self.score is not None and not 0.0 <= self.score <= 10.0:
            raise ValueError(f"quality score outside [0, 10]: {self.score}")


def validate_script(script: Script) -> Script:
    """Check structural invariants; raise ScriptValidationError listing every problem."""
    problems: list[str] = []
    if not script.segments:
        problems.append("script has no segments")
    cast_ids = [profile.id for profile in script.cast]
    duplicates = {cid for cid in cast_ids if cast_ids.count(cid) > 1}
    if duplicates:
        problems.append(f"duplicate cast ids: {sorted(duplicates)}")
    known = set(cast_ids)
    speakers: set[str] = set()
    for position, segment in enumerate(script.segments, start=1):
        label = f"segment {position}"
        if segment.index != position:
            problems.append(f"{label}: index {segment.index} breaks 1-based contiguity")
        for cid in segment.visual.characters:
            if cid not in known:
                problems.append(f"{label}: unknown character {cid!r}")
        if segment.audio.mode == "dialogue":
            speaker = segment.audio.speaker
            if not speaker:
                problems.append(f"{label}: dialogue without a speaker")
            elif speaker not in segment.visual.characters:
                problems.append(f"{label}: speaker {speaker!r} not present in the segment")
            else:
                speakers.add(speaker)
        elif segment.audio.mode not in ("narration", "silent"):
            problems.append(f"{label}: unknown audio mode {segment.audio.mode!r}")
        if not segment.end_state.strip():
            problems.append(f"{label}: empty end-state description")
    for profile in script.cast:
        if profile.id in speakers:
            if not profile.voice.acoustic.strip() or not profile.voice.rhythmic.strip():
                problems.append(f"speaking character {profile.id!r} has an empty vocal descriptor")
    if problems:
        raise ScriptValidationError(problems)
    return script


def to_jsonable(value: Any) -> Any:
    """Convert domain objects to plain JSON-serializable structures, deterministically."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.ndarray):
        return [float(x) for x in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (frozenset, set)):
        return sorted(to_jsonable(v) for v in value)
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def canonical_json(value: Any) -> str:
    """Stable serialization used for hashing and log records."""
    return json.dumps(to_jsonable(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
