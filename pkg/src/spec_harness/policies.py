"""Decision-makers that drive rollouts.

Three flavors: an HTTP client speaking the chat-completions wire shape to a
hosted VLM, a deterministic scripted policy used for tests and dataset
bootstrapping, and an LLM-judge client that scores finished trajectories on
the 0-5 rubric.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import httpx
import numpy as np

from .errors import (
    EndpointUnavailable,
    ResponseTruncated,
    TurnTimeout,
    UnparseableScore,
)
from .spectrum import Spectrum, Task, WavelengthRange
from .viztool import TOOL_NAME

Message = dict  # chat-completions message: {"role": ..., "content": [...]}


@dataclass(frozen=True)
class PolicyConfig:
    endpoint_url: str
    model_name: str
    temperature: float = 0.0
    max_turn_tokens: int = 2048
    request_timeout: float = 60.0
    retry_limit: int = 2
    backoff_base: float = 0.25

    def __post_init__(self):
        if self.retry_limit < 0 or self.retry_limit > 5:
            raise ValueError(f"retry_limit must be in [0, 5], got {self.retry_limit}")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_turn_tokens < 1:
            raise ValueError("max_turn_tokens must be positive")


class Policy(Protocol):
    """What the rollout engine needs from any decision-maker."""

    def next_turn(self, history: Sequence[Message], *, spectrum: Spectrum, seed: int) -> str:
        ...


class HttpPolicy:
    """Chat-completions client with retry/backoff.

    Retries connect failures and 5xx responses up to retry_limit with
    exponential backoff; 4xx responses and timeouts are terminal (a timeout
    is treated as a spent turn deadline, not a transient blip).
    """

    def __init__(self, config: PolicyConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self._client = httpx.Client(timeout=config.request_timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def next_turn(self, history: Sequence[Message], *, spectrum: Spectrum = None, seed: int = 0) -> str:
        body = {
            "model": self.config.model_name,
            "messages": list(history),
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_turn_tokens,
            "seed": seed,
        }
        return self._post_for_content(body)

    def _post_for_content(self, body: dict) -> str:
        cfg = self.config
        last_err: Optional[Exception] = None
        for attempt in range(cfg.retry_limit + 1):
            try:
                resp = self._client.post(cfg.endpoint_url, json=body)
            except httpx.TimeoutException as exc:
                raise TurnTimeout(f"no response within {cfg.request_timeout}s") from exc
            except httpx.TransportError as exc:
                last_err = exc
                if attempt < cfg.retry_limit:
                    time.sleep(cfg.backoff_base * (2**attempt))
                continue
            if resp.status_code >= 500:
                last_err = EndpointUnavailable(f"server error {resp.status_code}")
                if attempt < cfg.retry_limit:
                    time.sleep(cfg.backoff_base * (2**attempt))
                continue
            if resp.status_code >= 400:
                raise EndpointUnavailable(f"endpoint rejected request: {resp.status_code} {resp.text[:200]}")
            return self._extract_content(resp)
        raise EndpointUnavailable(f"gave up after {cfg.retry_limit + 1} attempts: {last_err}")

    @staticmethod
    def _extract_content(resp: httpx.Response) -> str:
        try:
            payload = resp.json()
            choice = payload["choices"][0]
            content = choice["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ResponseTruncated(f"malformed completion payload: {exc}") from exc
        if not isinstance(content, str):
            raise ResponseTruncated("completion content missing or non-string")
        if choice.get("finish_reason") == "length":
            raise ResponseTruncated("completion hit the token limit")
        return content


# --- scripted policy ----------------------------------------------------------


@dataclass(frozen=True)
class DecisionRule:
    """Threshold test on sliced flux statistics.

    YES iff mean flux inside feature_range is above (direction 'above') or
    below ('below') min_ratio times the mean flux inside reference_range.
    """

    feature_range: WavelengthRange
    reference_range: WavelengthRange
    min_ratio: float
    direction: str = "above"

    def __post_init__(self):
        if self.direction not in ("above", "below"):
            raise ValueError(f"direction must be 'above' or 'below', got {self.direction!r}")

    def decide(self, spec: Spectrum) -> bool:
        feat = _mean_flux(spec, self.feature_range)
        ref = _mean_flux(spec, self.reference_range)
        threshold = self.min_ratio * ref
        return feat > threshold if self.direction == "above" else feat < threshold

    def describe(self, spec: Spectrum) -> str:
        feat = _mean_flux(spec, self.feature_range)
        ref = _mean_flux(spec, self.reference_range)
        op = ">" if self.direction == "above" else "<"
        return (
            f"mean flux {feat:.6g} in [{self.feature_range.lambda_min:g}, "
            f"{self.feature_range.lambda_max:g}] vs threshold {op} "
            f"{self.min_ratio:g} x {ref:.6g} from [{self.reference_range.lambda_min:g}, "
            f"{self.reference_range.lambda_max:g}]"
        )


def _mean_flux(spec: Spectrum, rng: WavelengthRange) -> float:
    mask = (spec.wavelength >= rng.lambda_min) & (spec.wavelength <= rng.lambda_max)
    if not mask.any():
        return 0.0
    return float(np.mean(spec.flux[mask]))


@dataclass(frozen=True)
class Probe:
    range: WavelengthRange
    label: Optional[str] = None


@dataclass(frozen=True)
class ScriptedRule:
    """Deterministic stand-in for a trained model on one task."""

    task: Task
    probes: tuple[Probe, ...]
    decision: DecisionRule

    def __post_init__(self):
        if not self.probes:
            raise ValueError("a scripted rule needs at least one probe range")


def scripted_turn(rule: ScriptedRule, history: Sequence[Message], spectrum: Spectrum) -> str:
    """Next well-formed turn for a scripted rule.

    Probes run in order (one per turn, counted via tool messages already in
    history); after the last probe the decision threshold is evaluated on
    the actual flux arrays and emitted as the boxed answer.
    """
    done = sum(1 for m in history if m.get("role") == "tool")
    if done < len(rule.probes):
        probe = rule.probes[done]
        args = {"lambda_min": probe.range.lambda_min, "lambda_max": probe.range.lambda_max}
        if probe.label is not None:
            args["label"] = probe.label
        call = json.dumps({"name": TOOL_NAME, "arguments": args}, separators=(",", ":"))
        where = probe.label or f"{probe.range.lambda_min:g}-{probe.range.lambda_max:g} A"
        return f"<think>Zooming into {where} to check the diagnostic region.</think><tool_call>{call}</tool_call>"
    verdict = "YES" if rule.decision.decide(spectrum) else "NO"
    evidence = rule.decision.describe(spectrum)
    return (
        f"<think>All probes inspected; applying the decision threshold: {evidence}.</think>"
        f"<answer>\\boxed{{{verdict}}} Decision from the configured threshold on the probed regions.</answer>"
    )


class ScriptedPolicy:
    """Policy adapter around a ScriptedRule (ignores the seed; fully deterministic)."""

    def __init__(self, rule: ScriptedRule):
        self.rule = rule

    def next_turn(self, history: Sequence[Message], *, spectrum: Spectrum, seed: int = 0) -> str:
        return scripted_turn(self.rule, history, spectrum)


# --- LLM judge ----------------------------------------------------------------


@dataclass(frozen=True)
class JudgeScore:
    score: int
    rationale: str

    def __post_init__(self):
        if self.score not in (0, 1, 2, 3, 4, 5):
            raise ValueError(f"score must be an integer 0-5, got {self.score}")


DEFAULT_RUBRIC = """Rate the reasoning trajectory for coherence and physical consistency on a 0-5 scale:
0: entirely wrong or physically impossible; the narrative is invented.
1: mostly wrong; only isolated statements hold up.
2: wrong outweighs right; some valid observations but the logic fails.
3: mostly right; sound overall reasoning with clear mistakes.
4: nearly right; accurate reasoning with only minor slips.
5: fully right; coherent, accurate, and physically consistent throughout.
Reply with a line of the form `score: <n>` followed by a short justification."""


def judge_trajectory(config: PolicyConfig, traj, rubric: str = DEFAULT_RUBRIC,
                     transport: Optional[httpx.BaseTransport] = None) -> JudgeScore:
    """Score a finished trajectory with an external judge endpoint.

    The judge sees the rubric plus the serialized conversation (images as
    placeholders). One retry on an unparseable reply, then UnparseableScore.
    """
    from .rewards import serialize_conversation

    convo, _ = serialize_conversation(traj)
    prompt = f"{rubric}\n\nTrajectory to evaluate:\n{traj.prompt}\n{convo}"
    client = HttpPolicy(config, transport=transport)
    try:
        for attempt in range(2):
            reply = client._post_for_content(
                {
                    "model": config.model_name,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": config.temperature,
                    "max_tokens": config.max_turn_tokens,
                }
            )
            score = _parse_score_line(reply)
            if score is not None:
                return JudgeScore(score=score, rationale=reply.strip())
        raise UnparseableScore(f"no usable `score:` line in judge reply: {reply[:200]!r}")
    finally:
        client.close()


def _parse_score_line(reply: str) -> Optional[int]:
    for line in reply.splitlines():
        stripped = line.strip().lower()
        if not stripped.startswith("score:"):
            continue
        rest = stripped[len("score:"):].strip()
        digits = ""
        for ch in rest:
            if ch.isdigit():
                digits += ch
            else:
                break
        if not digits:
            continue
        value = int(digits)
        return value if 0 <= value <= 5 else None
    return None
