"""Interleaved trajectory model: turn parsing, format validation, JSONL records.

A trajectory is the ordered interleaving of model turns and tool
observations, ending (when well-formed) in an answer turn whose verdict sits
inside a \\boxed{YES} / \\boxed{NO} token. The parser is total: any string
classifies into blocks plus diagnostics, never an exception.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import SchemaMismatch
from .spectrum import TaskLabel, WavelengthRange
from .viztool import ToolCall, BadArguments, parse_tool_request

RECORD_VERSION = 1

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_TOOL_RE = re.compile(r"<tool_call>(.*?)</tool_call>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_BOXED = "\\boxed{"


class Prediction(str, enum.Enum):
    YES = "YES"
    NO = "NO"
    INVALID = "INVALID"


class StepKind(str, enum.Enum):
    THINK = "think"
    TOOL_CALL = "tool_call"
    TOOL_RESULT = "tool_result"
    ANSWER = "answer"
    PLAIN_TEXT = "plain_text"


@dataclass(frozen=True)
class Step:
    """One trajectory element.

    text carries the think/answer/plain content; for TOOL_CALL it is the raw
    inner block text (kept even when `call` parsed cleanly, so the model's
    exact emission survives serialization; `call` is None for unparseable
    calls). TOOL_RESULT text is the tool response JSON, with image_ref set
    for successful renders. A TOOL_RESULT always immediately follows its
    TOOL_CALL.
    """

    kind: StepKind
    text: str = ""
    call: Optional[ToolCall] = None
    image_ref: Optional[str] = None


@dataclass(frozen=True)
class ViewRef:
    """Serialized reference to a rendered view (bytes live in the asset dir)."""

    image_ref: str
    range: tuple[float, float]
    sample_count: int
    label: Optional[str] = None


@dataclass
class Trajectory:
    prompt: str
    initial_view: ViewRef
    steps: list[Step]
    prediction: Prediction = Prediction.INVALID
    gold: Optional[TaskLabel] = None
    tool_call_count: int = 0
    format_ok: bool = False

    @property
    def truncated(self) -> bool:
        """True when the trajectory never reached an answer turn."""
        return not self.steps or self.steps[-1].kind is not StepKind.ANSWER


# --- turn parsing -----------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str


@dataclass
class ParsedTurn:
    """Total classification of one raw model turn.

    diagnostics is empty iff the turn obeys the response grammar; stray holds
    any text that sits outside recognized tags (including demoted duplicate
    blocks), in emission order together with its character position.
    """

    raw: str
    think: Optional[str] = None
    call: Optional[ToolCall] = None
    call_text: Optional[str] = None
    answer: Optional[str] = None
    stray: list[tuple[int, str]] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def has_tool_block(self) -> bool:
        return self.call_text is not None

    @property
    def grammar_ok(self) -> bool:
        return not self.diagnostics

    def diagnostic_codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]


def parse_turn(raw: str) -> ParsedTurn:
    """Classify a raw turn into think / tool-call / answer blocks.

    Never raises; grammar violations (multiple tool calls, malformed JSON,
    stray text, missing think, answer combined with a call, ...) are reported
    as diagnostics and the offending content is preserved as stray text.
    """
    turn = ParsedTurn(raw=raw)
    spans: list[tuple[int, int]] = []
    demoted: set[int] = set()  # stray positions that came from demoted tag blocks

    def demote(m: re.Match) -> None:
        turn.stray.append((m.start(), m.group(0)))
        demoted.add(m.start())
        spans.append(m.span())

    thinks = list(_THINK_RE.finditer(raw))
    tools = list(_TOOL_RE.finditer(raw))
    answers = list(_ANSWER_RE.finditer(raw))

    if thinks:
        turn.think = thinks[0].group(1)
        spans.append(thinks[0].span())
        if len(thinks) > 1:
            turn.diagnostics.append(Diagnostic("MultipleThinkBlocks", f"{len(thinks)} <think> blocks"))
            for m in thinks[1:]:
                demote(m)

    if tools:
        turn.call_text = tools[0].group(1)
        spans.append(tools[0].span())
        if len(tools) > 1:
            turn.diagnostics.append(
                Diagnostic("MultipleToolCalls", f"{len(tools)} <tool_call> blocks; only one call per turn is allowed")
            )
            for m in tools[1:]:
                demote(m)
        else:
            _parse_call_json(turn)

    if answers:
        if len(answers) > 1:
            turn.diagnostics.append(Diagnostic("MultipleAnswerBlocks", f"{len(answers)} <answer> blocks"))
            for m in answers[1:]:
                demote(m)
        if tools:
            # one action per turn; the tool branch wins, the answer is demoted
            turn.diagnostics.append(Diagnostic("ToolCallAndAnswer", "turn contains both a tool call and an answer"))
            demote(answers[0])
        else:
            turn.answer = answers[0].group(1)
            spans.append(answers[0].span())

    if turn.think is None and (tools or answers):
        turn.diagnostics.append(Diagnostic("MissingThink", "turn has no leading <think> block"))
    if thinks and (tools or answers):
        first_action = min(m.start() for m in tools + answers)
        if thinks[0].start() > first_action:
            turn.diagnostics.append(Diagnostic("OutOfOrder", "<think> must precede the tool call or answer"))

    # anything outside recognized spans is stray
    spans.sort()
    cursor = 0
    for start, end in spans:
        gap = raw[cursor:start]
        if gap.strip():
            turn.stray.append((cursor, gap))
        cursor = max(cursor, end)
    tail = raw[cursor:]
    if tail.strip():
        turn.stray.append((cursor, tail))
    if any(pos not in demoted for pos, _ in turn.stray):
        turn.diagnostics.append(Diagnostic("StrayText", "text outside recognized tags"))
    if not spans and not raw.strip():
        turn.diagnostics.append(Diagnostic("EmptyTurn", "turn is empty"))

    turn.stray.sort(key=lambda p: p[0])
    return turn


def _parse_call_json(turn: ParsedTurn) -> None:
    try:
        obj = json.loads(turn.call_text)
    except json.JSONDecodeError as exc:
        turn.diagnostics.append(Diagnostic("MalformedToolJson", f"tool call is not valid JSON: {exc}"))
        return
    try:
        turn.call = parse_tool_request(obj)
    except BadArguments as exc:
        turn.diagnostics.append(Diagnostic("BadArguments", str(exc)))


def parse_boxed(text: str) -> Prediction:
    """Strict \\boxed{} verdict: exactly one token, uppercase YES/NO.

    Whitespace inside the braces is tolerated; case variants and anything
    else map to INVALID.
    """
    count = text.count(_BOXED)
    if count != 1:
        return Prediction.INVALID
    start = text.index(_BOXED) + len(_BOXED)
    end = text.find("}", start)
    if end < 0:
        return Prediction.INVALID
    inner = text[start:end].strip()
    if inner == "YES":
        return Prediction.YES
    if inner == "NO":
        return Prediction.NO
    return Prediction.INVALID


def steps_from_turn(parsed: ParsedTurn) -> list[Step]:
    """Model-authored steps for one parsed turn, in emission order.

    Tool results are appended separately by whoever executes the call. The
    answer step (when the turn is an answer turn) is included here.
    """
    pieces: list[tuple[int, Step]] = []
    if parsed.think is not None:
        pos = parsed.raw.index("<think>")
        pieces.append((pos, Step(kind=StepKind.THINK, text=parsed.think)))
    if parsed.has_tool_block:
        pos = parsed.raw.index("<tool_call>")
        pieces.append((pos, Step(kind=StepKind.TOOL_CALL, text=parsed.call_text, call=parsed.call)))
    elif parsed.answer is not None:
        pos = parsed.raw.index("<answer>")
        pieces.append((pos, Step(kind=StepKind.ANSWER, text=parsed.answer)))
    for pos, text in parsed.stray:
        pieces.append((pos, Step(kind=StepKind.PLAIN_TEXT, text=text)))
    pieces.sort(key=lambda p: p[0])
    return [s for _, s in pieces]


# --- trajectory-level checks --------------------------------------------------


def validate_format(traj: Trajectory) -> bool:
    """The format predicate used by the reward.

    True iff the step sequence is (THINK TOOL_CALL TOOL_RESULT)* THINK ANSWER
    with every tool call parse-valid and the answer carrying exactly one
    strict \\boxed{YES|NO}. Stray text, malformed calls, think-only turns,
    and truncation all fail.
    """
    steps = traj.steps
    n = len(steps)
    if n < 2:
        return False
    i = 0
    while i + 2 < n:
        if (
            steps[i].kind is StepKind.THINK
            and steps[i + 1].kind is StepKind.TOOL_CALL
            and steps[i + 2].kind is StepKind.TOOL_RESULT
        ):
            if steps[i + 1].call is None:
                return False
            i += 3
        else:
            break
    if i != n - 2:
        return False
    if steps[i].kind is not StepKind.THINK or steps[i + 1].kind is not StepKind.ANSWER:
        return False
    return parse_boxed(steps[i + 1].text) is not Prediction.INVALID


def extract_prediction(traj: Trajectory) -> Prediction:
    """Verdict of the final answer step; INVALID when absent or ill-formed."""
    answers = [s for s in traj.steps if s.kind is StepKind.ANSWER]
    if not answers:
        return Prediction.INVALID
    return parse_boxed(answers[-1].text)


# --- serialization -----------------------------------------------------------


def _call_to_json(call: Optional[ToolCall]) -> Optional[dict]:
    if call is None:
        return None
    return {
        "lambda_min": call.range.lambda_min,
        "lambda_max": call.range.lambda_max,
        "label": call.label,
    }


def _call_from_json(d: Optional[dict]) -> Optional[ToolCall]:
    if d is None:
        return None
    return ToolCall(
        range=WavelengthRange(d["lambda_min"], d["lambda_max"]),
        label=d.get("label"),
    )


def serialize(traj: Trajectory) -> dict:
    """Trajectory -> versioned JSON record (one line of a .traj.jsonl file)."""
    return {
        "version": RECORD_VERSION,
        "prompt": traj.prompt,
        "initial_view": {
            "image_ref": traj.initial_view.image_ref,
            "range": list(traj.initial_view.range),
            "sample_count": traj.initial_view.sample_count,
            "label": traj.initial_view.label,
        },
        "steps": [
            {
                "kind": s.kind.value,
                "text": s.text,
                "call": _call_to_json(s.call),
                "image_ref": s.image_ref,
            }
            for s in traj.steps
        ],
        "prediction": traj.prediction.value,
        "gold": traj.gold.to_dict() if traj.gold is not None else None,
        "format_ok": traj.format_ok,
        "tool_call_count": traj.tool_call_count,
    }


def deserialize(record: dict) -> Trajectory:
    """JSON record -> Trajectory; SchemaMismatch on unknown versions or shape."""
    if not isinstance(record, dict):
        raise SchemaMismatch("trajectory record must be a JSON object")
    version = record.get("version")
    if version != RECORD_VERSION:
        raise SchemaMismatch(f"unsupported trajectory record version {version!r}")
    required = ("prompt", "initial_view", "steps", "prediction", "format_ok", "tool_call_count")
    for key in required:
        if key not in record:
            raise SchemaMismatch(f"trajectory record missing field {key!r}")
    iv = record["initial_view"]
    try:
        view = ViewRef(
            image_ref=iv["image_ref"],
            range=(float(iv["range"][0]), float(iv["range"][1])),
            sample_count=int(iv["sample_count"]),
            label=iv.get("label"),
        )
        steps = [
            Step(
                kind=StepKind(s["kind"]),
                text=s.get("text", ""),
                call=_call_from_json(s.get("call")),
                image_ref=s.get("image_ref"),
            )
            for s in record["steps"]
        ]
        gold = record.get("gold")
        return Trajectory(
            prompt=record["prompt"],
            initial_view=view,
            steps=steps,
            prediction=Prediction(record["prediction"]),
            gold=TaskLabel.from_dict(gold) if gold is not None else None,
            tool_call_count=int(record["tool_call_count"]),
            format_ok=bool(record["format_ok"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"malformed trajectory record: {exc}") from exc


def write_trajectories(trajs: Iterable[Trajectory], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajs:
            fh.write(json.dumps(serialize(traj), separators=(",", ":")) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(deserialize(json.loads(line)))
    return out
