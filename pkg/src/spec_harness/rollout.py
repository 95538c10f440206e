"""The interleaved rollout loop: policy turns in, rendered views back.

One rollout opens a tool session, shows the initial full-range view, then
alternates policy turns with tool renders until an answer arrives or the
budget runs out. Groups fan the same item out G times for advantage
computation; batches run many items with bounded parallelism and write the
trajectory archive.
"""

from __future__ import annotations

import base64
import csv
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .bench import BenchItem
from .errors import AllRolloutsFailed, PolicyFailure, SessionNotFound
from .policies import Message, Policy
from .spectrum import Spectrum, load_spectrum
from .trajectory import (
    ParsedTurn,
    Step,
    StepKind,
    Trajectory,
    ViewRef,
    extract_prediction,
    parse_turn,
    steps_from_turn,
    validate_format,
    write_trajectories,
)
from .viztool import (
    RenderedView,
    SessionStore,
    error_response,
    ok_response,
    response_json,
)

log = logging.getLogger(__name__)

# extra turns beyond the tool-call cap: one to answer after the last call
# plus one recovery turn
EXTRA_TURNS = 2


@dataclass(frozen=True)
class RolloutConfig:
    max_tool_calls: int = 8
    group_size: int = 8
    per_item_seed: int = 0
    concurrency: int = 8

    def __post_init__(self):
        if self.max_tool_calls < 1:
            raise ValueError("max_tool_calls must be >= 1")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")


class AssetSink:
    """Assigns stable refs to rendered PNGs and stores the bytes."""

    def put(self, item_id: str, group_index: int, tag: str, png: bytes) -> str:
        raise NotImplementedError


class MemoryAssetSink(AssetSink):
    def __init__(self):
        self.blobs: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def put(self, item_id: str, group_index: int, tag: str, png: bytes) -> str:
        ref = f"assets/{item_id}/g{group_index}_{tag}.png"
        with self._lock:
            self.blobs[ref] = png
        return ref


class DirAssetSink(AssetSink):
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def put(self, item_id: str, group_index: int, tag: str, png: bytes) -> str:
        ref = f"assets/{item_id}/g{group_index}_{tag}.png"
        path = self.root / ref
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(png)
        return ref


def _image_part(png: bytes) -> dict:
    b64 = base64.b64encode(png).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}


def run_rollout(
    spec: Spectrum,
    prompt: str,
    cfg: RolloutConfig,
    policy: Policy,
    store: SessionStore,
    sink: AssetSink,
    item_id: str = "item",
    group_index: int = 0,
    seed: Optional[int] = None,
) -> Trajectory:
    """Execute one interleaved rollout and assemble the trajectory.

    Policy failures propagate to the caller; every exit path closes the
    tool session.
    """
    if seed is None:
        seed = cfg.per_item_seed
    session, init_view = store.open_session(spec)
    try:
        init_ref = sink.put(item_id, group_index, "init", init_view.png)
        initial = ViewRef(
            image_ref=init_ref,
            range=(init_view.range.lambda_min, init_view.range.lambda_max),
            sample_count=init_view.sample_count,
            label=None,
        )
        history: list[Message] = [
            {
                "role": "user",
                "content": [{"type": "text", "text": prompt}, _image_part(init_view.png)],
            }
        ]
        steps: list[Step] = []
        calls_done = 0

        for _turn in range(cfg.max_tool_calls + EXTRA_TURNS):
            raw = policy.next_turn(history, spectrum=spec, seed=seed)
            parsed = parse_turn(raw)
            turn_steps = steps_from_turn(parsed)

            if parsed.has_tool_block:
                if calls_done >= cfg.max_tool_calls:
                    # budget exhausted: keep the reasoning text, drop the call
                    steps.extend(s for s in turn_steps if s.kind is not StepKind.TOOL_CALL)
                    break
                resp, ref, view = _execute_call(
                    parsed, store, session.session_id, sink, item_id, group_index, calls_done + 1
                )
                steps.extend(turn_steps)
                steps.append(Step(kind=StepKind.TOOL_RESULT, text=response_json(resp), image_ref=ref))
                calls_done += 1
                history.append({"role": "assistant", "content": raw})
                tool_content: list[dict] = [{"type": "text", "text": response_json(resp)}]
                if view is not None:
                    tool_content.append(_image_part(view.png))
                history.append({"role": "tool", "content": tool_content})
                continue

            steps.extend(turn_steps)
            if parsed.answer is not None:
                break
            # plain text / think-only turn: record and keep going
            history.append({"role": "assistant", "content": raw})

        traj = Trajectory(
            prompt=prompt,
            initial_view=initial,
            steps=steps,
            gold=spec.label,
            tool_call_count=calls_done,
        )
        traj.prediction = extract_prediction(traj)
        traj.format_ok = validate_format(traj)
        return traj
    finally:
        try:
            store.close_session(session.session_id)
        except SessionNotFound:
            pass


def _execute_call(
    parsed: ParsedTurn,
    store: SessionStore,
    session_id: str,
    sink: AssetSink,
    item_id: str,
    group_index: int,
    ordinal: int,
) -> tuple[dict, Optional[str], Optional[RenderedView]]:
    """Run (or refuse) the turn's tool call; always yields an observation."""
    codes = parsed.diagnostic_codes()
    if "MultipleToolCalls" in codes:
        return error_response("MultipleToolCalls", "only one tool call per turn is allowed"), None, None
    if "MalformedToolJson" in codes:
        msg = next(d.message for d in parsed.diagnostics if d.code == "MalformedToolJson")
        return error_response("MalformedToolJson", msg), None, None
    if parsed.call is None:
        msg = next((d.message for d in parsed.diagnostics if d.code == "BadArguments"), "invalid arguments")
        return error_response("BadArguments", msg), None, None
    try:
        view = store.render_range(session_id, parsed.call)
    except Exception as exc:  # EmptyRange is the only expected failure here
        return error_response(type(exc).__name__, str(exc)), None, None
    ref = sink.put(item_id, group_index, f"t{ordinal}", view.png)
    return ok_response(view, ref), ref, view


@dataclass
class RolloutFailure:
    item_id: str
    group_index: int
    reason: str


def run_group(
    spec: Spectrum,
    prompt: str,
    cfg: RolloutConfig,
    policy: Policy,
    store: SessionStore,
    sink: AssetSink,
    item_id: str = "item",
) -> tuple[list[Trajectory], list[RolloutFailure]]:
    """G independent rollouts with seeds per_item_seed + i.

    Failed rollouts are reported and excluded; AllRolloutsFailed when the
    whole group dies.
    """
    trajs: list[Trajectory] = []
    failures: list[RolloutFailure] = []
    for i in range(cfg.group_size):
        try:
            trajs.append(
                run_rollout(
                    spec, prompt, cfg, policy, store, sink,
                    item_id=item_id, group_index=i, seed=cfg.per_item_seed + i,
                )
            )
        except PolicyFailure as exc:
            log.warning("rollout %s/g%d failed: %s", item_id, i, exc)
            failures.append(RolloutFailure(item_id=item_id, group_index=i, reason=str(exc)))
    if not trajs:
        raise AllRolloutsFailed(f"all {cfg.group_size} rollouts failed for item {item_id!r}")
    return trajs, failures


@dataclass
class BatchResult:
    groups: list[tuple[BenchItem, list[Trajectory]]]
    failures: list[RolloutFailure] = field(default_factory=list)
    failed_items: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        if self.failed_items and not self.groups:
            return 3
        if self.failed_items or self.failures:
            return 2
        return 0


def run_batch(
    items: Sequence[BenchItem],
    cfg: RolloutConfig,
    policy_for_item,
    base_dir: Path,
    out_dir: Path,
    store: Optional[SessionStore] = None,
) -> BatchResult:
    """Roll out every item with bounded parallelism and write the archive.

    policy_for_item: callable BenchItem -> Policy (scripted policies differ
    per task; an HTTP policy is typically shared). Writes
    trajectories.traj.jsonl, per-item PNG assets, and predictions.csv into
    out_dir. Items that fail entirely are reported, not fatal.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = store or SessionStore()
    sink = DirAssetSink(out_dir)

    def one(item: BenchItem):
        spec = load_spectrum(Path(base_dir) / item.spectrum_ref)
        policy = policy_for_item(item)
        return run_group(spec, item.prompt, cfg, policy, store, sink, item_id=item.id)

    result = BatchResult(groups=[])
    ordered = sorted(items, key=lambda it: it.id)
    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        futures = {pool.submit(one, item): item for item in ordered}
        outcomes: dict[str, tuple[BenchItem, list[Trajectory], list[RolloutFailure]]] = {}
        for fut, item in futures.items():
            try:
                trajs, fails = fut.result()
                outcomes[item.id] = (item, trajs, fails)
            except Exception as exc:
                log.error("item %s failed: %s", item.id, exc)
                result.failed_items.append(item.id)

    for item in ordered:
        if item.id in outcomes:
            it, trajs, fails = outcomes[item.id]
            result.groups.append((it, trajs))
            result.failures.extend(fails)

    all_trajs = [t for _, trajs in result.groups for t in trajs]
    write_trajectories(all_trajs, out_dir / "trajectories.traj.jsonl")
    _write_predictions(result.groups, out_dir / "predictions.csv")
    return result


def _write_predictions(groups, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "group_index", "task", "prediction", "gold", "tool_call_count", "format_ok"])
        for item, trajs in groups:
            for g, traj in enumerate(trajs):
                w.writerow(
                    [
                        item.id,
                        g,
                        item.task.value,
                        traj.prediction.value,
                        int(item.gold),
                        traj.tool_call_count,
                        int(traj.format_ok),
                    ]
                )


def read_predictions(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["gold"] = bool(int(row["gold"]))
        row["format_ok"] = bool(int(row["format_ok"]))
        row["tool_call_count"] = int(row["tool_call_count"])
        row["group_index"] = int(row["group_index"])
    return rows
