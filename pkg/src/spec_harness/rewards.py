"""Outcome rewards, group-relative advantages, and loss-mask export.

The reward is the four-case rule over (correct, format-ok) with a
configurable format penalty alpha. Advantages normalize each group of
rollouts by its own mean and population std. Masks are character spans over
a canonical serialization of the model-visible response stream, marking
every tool observation so a trainer can exclude it from the loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyGroup
from .spectrum import TaskLabel
from .trajectory import Prediction, StepKind, Trajectory, extract_prediction

ADVANTAGE_EPS = 1e-8
ZERO_STD = 1e-12


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class RewardOutcome:
    reward: float
    correct: bool
    format_ok: bool


@dataclass(frozen=True)
class AdvantageGroup:
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    mean: float
    std: float


def compute_reward(traj: Trajectory, gold: TaskLabel, cfg: RewardConfig) -> RewardOutcome:
    """Four-case outcome reward: 1, 1-alpha, 0, or -alpha.

    Correct means the extracted verdict matches the gold polarity; INVALID
    is never correct. Format status comes from the trajectory's validator
    result.
    """
    pred = extract_prediction(traj)
    if pred is Prediction.INVALID:
        correct = False
    else:
        correct = (pred is Prediction.YES) == gold.is_positive
    fmt = traj.format_ok
    if correct and fmt:
        reward = 1.0
    elif correct and not fmt:
        reward = 1.0 - cfg.alpha
    elif fmt:
        reward = 0.0
    else:
        reward = -cfg.alpha
    return RewardOutcome(reward=reward, correct=correct, format_ok=fmt)


def compute_group_advantages(rewards: Sequence[float], normalize: bool = True) -> AdvantageGroup:
    """Center (and by default std-normalize) a group of rollout rewards.

    advantage_i = (r_i - mean) / (std + 1e-8) with population std; a group
    with (numerically) zero variance gets all-zero advantages instead of
    epsilon-scaled noise.
    """
    if len(rewards) == 0:
        raise EmptyGroup("cannot compute advantages over an empty group")
    arr = np.asarray(rewards, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std())
    if std < ZERO_STD:
        adv = np.zeros_like(arr)
    else:
        adv = arr - mean
        if normalize:
            adv = adv / (std + ADVANTAGE_EPS)
    return AdvantageGroup(
        rewards=tuple(float(r) for r in arr),
        advantages=tuple(float(a) for a in adv),
        mean=mean,
        std=std,
    )


# --- conversation serialization and masking ----------------------------------


@dataclass(frozen=True)
class MaskedSample:
    """Character-span loss mask over one serialized conversation.

    mask_spans cover exactly the tool observations (response JSON plus image
    placeholder, wrapper tags included); target_spans cover everything the
    model authored. Together they tile [0, len(conversation)) with no gaps
    or overlaps.
    """

    conversation: str
    mask_spans: tuple[tuple[int, int], ...]
    target_spans: tuple[tuple[int, int], ...]


def serialize_conversation(traj: Trajectory) -> tuple[str, list[tuple[int, int, bool]]]:
    """Canonical text of the response stream plus (start, end, masked) segments.

    The prompt and initial view are the model's input, not its response, so
    they are not part of this serialization.
    """
    parts: list[str] = []
    segments: list[tuple[int, int, bool]] = []
    pos = 0

    def emit(text: str, masked: bool) -> None:
        nonlocal pos
        if not text:
            return
        parts.append(text)
        segments.append((pos, pos + len(text), masked))
        pos += len(text)

    for step in traj.steps:
        if step.kind is StepKind.THINK:
            emit(f"<think>{step.text}</think>", masked=False)
        elif step.kind is StepKind.TOOL_CALL:
            emit(f"<tool_call>{step.text}</tool_call>", masked=False)
        elif step.kind is StepKind.TOOL_RESULT:
            placeholder = f"<image:{step.image_ref}>" if step.image_ref else ""
            emit(f"<tool_response>{step.text}{placeholder}</tool_response>", masked=True)
        elif step.kind is StepKind.ANSWER:
            emit(f"<answer>{step.text}</answer>", masked=False)
        else:
            emit(step.text, masked=False)
    return "".join(parts), segments


def _merge_adjacent(spans: list[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    merged: list[tuple[int, int]] = []
    for start, end in spans:
        if merged and merged[-1][1] == start:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    return tuple(merged)


def build_masked_sample(traj: Trajectory) -> MaskedSample:
    """Mask spans over tool observations; target spans over model text."""
    conversation, segments = serialize_conversation(traj)
    mask = _merge_adjacent([(s, e) for s, e, m in segments if m])
    target = _merge_adjacent([(s, e) for s, e, m in segments if not m])
    return MaskedSample(conversation=conversation, mask_spans=mask, target_spans=target)


# --- batch export --------------------------------------------------------------


def export_rl_batch(
    groups: Iterable[tuple[object, Sequence[Trajectory]]],
    cfg: RewardConfig,
    path: str | Path,
    normalize: bool = True,
) -> int:
    """Write one JSONL record per trajectory for an external trainer.

    Each group entry is (item, trajectories); the item provides id and gold
    (a BenchItem, or anything with .id / .gold_label()). Returns the number
    of records written. Output bytes are deterministic for a fixed input.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item, trajs in groups:
            if len(trajs) == 0:
                raise EmptyGroup(f"item {getattr(item, 'id', item)!r} has no trajectories")
            gold = item.gold_label() if hasattr(item, "gold_label") else None
            outcomes = [
                compute_reward(t, gold if gold is not None else t.gold, cfg) for t in trajs
            ]
            group = compute_group_advantages([o.reward for o in outcomes], normalize=normalize)
            for g, (traj, outcome) in enumerate(zip(trajs, outcomes)):
                sample = build_masked_sample(traj)
                record = {
                    "item_id": getattr(item, "id", str(item)),
                    "group_index": g,
                    "conversation": sample.conversation,
                    "mask_spans": [list(s) for s in sample.mask_spans],
                    "reward": outcome.reward,
                    "advantage": group.advantages[g],
                    "format_ok": outcome.format_ok,
                    "correct": outcome.correct,
                }
                fh.write(json.dumps(record, separators=(",", ":"), ensure_ascii=True) + "\n")
                count += 1
    return count


def export_sft_samples(trajs: Iterable[Trajectory], path: str | Path) -> int:
    """Cold-start export: conversation plus mask spans, no rewards."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajs:
            sample = build_masked_sample(traj)
            record = {
                "conversation": sample.conversation,
                "mask_spans": [list(s) for s in sample.mask_spans],
            }
            fh.write(json.dumps(record, separators=(",", ":"), ensure_ascii=True) + "\n")
            count += 1
    return count
