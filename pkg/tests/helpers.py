"""Factories shared across the test modules."""

from muse.model import (
    AudioIntent,
    CharacterProfile,
    Script,
    Segment,
    VisualIntent,
    VocalDescriptor,
)


def make_profile(cid="Arthur", **overrides):
    base = dict(
        id=cid,
        age="middle-aged",
        gender="man",
        appearance="weathered face, short gray hair, steady eyes",
        attire="gray overcoat, worn leather boots",
        voice=VocalDescriptor(acoustic="low gravelly baritone",
                              rhythmic="slow, deliberate pacing"),
    )
    base.update(overrides)
    return CharacterProfile(**base)


def make_segment(index=1, characters=("Arthur",), scene="a rain-slick alley at night",
                 shot_type="Medium", mode="narration", transcript="He waited in the rain.",
                 speaker=None, end_state="Arthur reaches the iron door"):
    return Segment(
        index=index,
        visual=VisualIntent(characters=list(characters), scene=scene,
                            shot_type=shot_type),
        audio=AudioIntent(mode=mode, transcript=transcript, speaker=speaker),
        end_state=end_state,
    )


def make_script(n_segments=2, cast_ids=("Arthur",), **segment_overrides):
    cast = [make_profile(cid) for cid in cast_ids]
    segments = [make_segment(index=i, characters=cast_ids, **segment_overrides)
                for i in range(1, n_segments + 1)]
    return Script(segments=segments, cast=cast, genre="Thriller")
