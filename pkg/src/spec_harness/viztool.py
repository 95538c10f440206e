"""The spectral visualization tool: session cache plus on-demand re-rendering.

A session pins one spectrum's raw arrays; renders slice the cached arrays
and rasterize the requested wavelength window. Renders never mutate the
cache, and identical (spectrum, range, label) requests yield byte-identical
PNGs, so each session memoizes its renders.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .errors import BadArguments, EmptyRange, SessionNotFound
from .render import render_view
from .spectrum import Spectrum, WavelengthRange

TOOL_NAME = "spectral_visualization_tool"
MAX_LABEL_LEN = 64


@dataclass(frozen=True)
class ToolCall:
    """A validated render request: wavelength window plus optional label."""

    range: WavelengthRange
    label: Optional[str] = None

    def __post_init__(self):
        if self.label is not None:
            if len(self.label) > MAX_LABEL_LEN:
                raise BadArguments(f"label longer than {MAX_LABEL_LEN} chars")
            if any(ord(c) < 32 or ord(c) == 127 for c in self.label):
                raise BadArguments("label contains control characters")

    def to_request(self) -> dict:
        args: dict = {
            "lambda_min": self.range.lambda_min,
            "lambda_max": self.range.lambda_max,
        }
        if self.label is not None:
            args["label"] = self.label
        return {"name": TOOL_NAME, "arguments": args}


@dataclass(frozen=True)
class RenderedView:
    png: bytes
    range: WavelengthRange
    sample_count: int
    label: Optional[str] = None


@dataclass
class Session:
    session_id: str
    spectrum: Spectrum
    created_at: float
    render_count: int = 0
    _render_cache: dict = field(default_factory=dict, repr=False)


class SessionStore:
    """Concurrent map of live sessions; each session is driven by one rollout."""

    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._next = 0

    def live_count(self) -> int:
        with self._lock:
            return len(self._sessions)

    def _get(self, session_id: str) -> Session:
        with self._lock:
            sess = self._sessions.get(session_id)
        if sess is None:
            raise SessionNotFound(f"no live session {session_id!r}")
        return sess

    def open_session(self, spec: Spectrum) -> tuple[Session, RenderedView]:
        """Cache the spectrum and render the initial full-range view."""
        with self._lock:
            self._next += 1
            sess = Session(
                session_id=f"sess-{self._next:06d}",
                spectrum=spec,
                created_at=time.time(),
            )
            self._sessions[sess.session_id] = sess
        view = self._render(sess, rng=None, label=None)
        return sess, view

    def render_range(self, session_id: str, call: ToolCall) -> RenderedView:
        sess = self._get(session_id)
        return self._render(sess, rng=call.range, label=call.label)

    def _render(self, sess: Session, rng: Optional[WavelengthRange], label: Optional[str]) -> RenderedView:
        key = (
            None if rng is None else (rng.lambda_min, rng.lambda_max),
            label,
        )
        cached = sess._render_cache.get(key)
        if cached is None:
            png, n, actual = render_view(sess.spectrum, rng, label)
            cached = RenderedView(png=png, range=actual, sample_count=n, label=label)
            sess._render_cache[key] = cached
        with self._lock:
            sess.render_count += 1
        return cached

    def close_session(self, session_id: str) -> None:
        with self._lock:
            if self._sessions.pop(session_id, None) is None:
                raise SessionNotFound(f"no live session {session_id!r}")


def parse_tool_request(obj) -> ToolCall:
    """Validate a wire-format tool request object into a ToolCall.

    Raises BadArguments on any schema or value violation.
    """
    if not isinstance(obj, dict):
        raise BadArguments("tool request must be a JSON object")
    if obj.get("name") != TOOL_NAME:
        raise BadArguments(f"unknown tool name {obj.get('name')!r}")
    args = obj.get("arguments")
    if not isinstance(args, dict):
        raise BadArguments("missing 'arguments' object")
    unknown = set(args) - {"lambda_min", "lambda_max", "label"}
    if unknown:
        raise BadArguments(f"unknown argument(s): {sorted(unknown)}")
    for key in ("lambda_min", "lambda_max"):
        if not isinstance(args.get(key), (int, float)) or isinstance(args.get(key), bool):
            raise BadArguments(f"'{key}' must be a number")
    lo, hi = float(args["lambda_min"]), float(args["lambda_max"])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo <= 0 or hi <= 0 or not lo < hi:
        raise BadArguments(f"invalid wavelength window [{lo}, {hi}]")
    label = args.get("label")
    if label is not None and not isinstance(label, str):
        raise BadArguments("'label' must be a string")
    return ToolCall(range=WavelengthRange(lo, hi), label=label)


def ok_response(view: RenderedView, image_ref: str) -> dict:
    return {
        "status": "ok",
        "range": [view.range.lambda_min, view.range.lambda_max],
        "sample_count": view.sample_count,
        "image_ref": image_ref,
    }


def error_response(code: str, message: str) -> dict:
    return {"status": "error", "code": code, "message": message}


def response_json(resp: dict) -> str:
    """Canonical single-line serialization of a tool response."""
    return json.dumps(resp, separators=(",", ":"))


def handle_tool_request(store: SessionStore, session_id: str, raw: dict) -> tuple[Optional[dict], Optional[RenderedView]]:
    """Wire-level entry point: validate and render one request.

    Returns (error_response, None) on failure or (None, view) on success;
    the caller assigns the image ref and builds the ok response. EmptyRange
    and argument problems come back as structured error objects; only a dead
    session is an exception (the caller's bug, not the model's).
    """
    try:
        call = parse_tool_request(raw)
    except BadArguments as exc:
        return error_response("BadArguments", str(exc)), None
    try:
        view = store.render_range(session_id, call)
    except EmptyRange as exc:
        return error_response("EmptyRange", str(exc)), None
    return None, view
