"""Minimal deterministic media containers.

Mock backends emit real decodable files (PNG stills, multi-frame GIF clips,
PCM WAV) so that crop, histogram, and tail math in the pipeline runs on
actual pixels. Encoders here avoid every nondeterministic field (no
timestamps, fixed compression settings) because run reproducibility is
checked byte-for-byte.

PNG text chunks carry structured metadata. Two keys are load-bearing for
mock runs: REGIONS_KEY maps layout entities to their conditioning identity
on a composed canvas, and IDENTITY_KEY tags a single-subject image (or a
crop taken out of a tagged canvas) with its identity. Scripted audits and
the mock embedder key off these tags.
"""

from __future__ import annotations

import io
import json
from typing import Any

import numpy as np
from PIL import Image, ImageSequence
from PIL.PngImagePlugin import PngInfo

from .errors import UndecodableVideo

REGIONS_KEY = "muse:regions"
IDENTITY_KEY = "muse:identity"
REQUEST_KEY = "muse:request"
STYLE_KEY = "muse:style"


def encode_png(image: Image.Image, text: dict[str, str] | None = None) -> bytes:
    info = PngInfo()
    for key, value in (text or {}).items():
        info.add_text(key, value)
    buf = io.BytesIO()
    image.save(buf, format="PNG", pnginfo=info, compress_level=6)
    return buf.getvalue()


def decode_image(data: bytes) -> Image.Image:
    img = Image.open(io.BytesIO(data))
    img.load()
    return img


def png_text(data: bytes) -> dict[str, str]:
    try:
        img = decode_image(data)
    except Exception:
        return {}
    return {k: v for k, v in getattr(img, "text", {}).items()}


def encode_gif(frames: list[Image.Image], comment: Any = None,
               frame_ms: int = 200) -> bytes:
    if not frames:
        raise ValueError("a clip needs at least one frame")
    kwargs: dict[str, Any] = {
        "format": "GIF",
        "save_all": True,
        "duration": frame_ms,
        "loop": 0,
    }
    if comment is not None:
        payload = comment if isinstance(comment, (bytes, str)) else json.dumps(
            comment, sort_keys=True, separators=(",", ":"))
        kwargs["comment"] = payload.encode("utf-8") if isinstance(payload, str) else payload
    buf = io.BytesIO()
    first, rest = frames[0], frames[1:]
    first.save(buf, append_images=rest, **kwargs)
    return buf.getvalue()


def decode_frames(data: bytes) -> list[Image.Image]:
    """All frames of a clip (or the single frame of a still)."""
    try:
        img = Image.open(io.BytesIO(data))
        frames = [frame.copy() for frame in ImageSequence.Iterator(img)]
    except Exception as exc:
        raise UndecodableVideo(str(exc)) from exc
    if not frames:
        raise UndecodableVideo("clip decoded to zero frames")
    return frames


def last_frame(data: bytes) -> Image.Image:
    return decode_frames(data)[-1]


def clip_comment(data: bytes) -> dict[str, Any]:
    try:
        img = Image.open(io.BytesIO(data))
    except Exception as exc:
        raise UndecodableVideo(str(exc)) from exc
    raw = img.info.get("comment", b"")
    if not raw:
        return {}
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return {}


def encode_wav(samples: np.ndarray, rate: int = 8000) -> bytes:
    import wave

    pcm = np.asarray(samples)
    if pcm.dtype != np.int16:
        pcm = np.clip(pcm, -1.0, 1.0)
        pcm = (pcm * 32767.0).astype(np.int16)
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(pcm.tobytes())
    return buf.getvalue()


def luma_array(frame: Image.Image) -> np.ndarray:
    """Frame luma on the 0..255 scale as float64."""
    return np.asarray(frame.convert("L"), dtype=np.float64)
