"""Task prompt construction from the per-task criteria registry.

Each task's diagnostic checklist lives in a data file under criteria/; new
inspection tasks are added by dropping in a criteria file, not by editing
code. The assembled prompt states the verification question, the checklist,
and the strict response protocol.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional

from .spectrum import Task

LONG_NAMES = {
    Task.CV: "Cataclysmic Variable (CV)",
    Task.CS: "Carbon Star (CS)",
    Task.SS: "S-type Star (SS)",
    Task.MG: "M-type Giant (MG)",
    Task.WD: "White Dwarf (WD)",
    Task.O: "O-type Star",
    Task.B: "B-type Star",
    Task.A: "A-type Star",
}

PROTOCOL = """Think first, and call spectral_visualization_tool whenever you need a closer look at a wavelength region. Your response must obey these strict rules:
1. Structure every turn as <think>...</think> followed by either exactly one <tool_call>...</tool_call> or your final <answer>...</answer>.
2. At most one tool call per turn, and never a tool call together with an answer.
3. Inside <answer>, state the verdict as \\boxed{YES} or \\boxed{NO}, then give a short justification.
A tool call is JSON: {"name": "spectral_visualization_tool", "arguments": {"lambda_min": <number>, "lambda_max": <number>, "label": <optional string>}}."""


def load_criteria(task: Task, registry_dir: Optional[Path] = None) -> str:
    """Criteria text for a task, from a directory or the packaged registry."""
    if registry_dir is not None:
        return (Path(registry_dir) / f"{task.value}.md").read_text(encoding="utf-8")
    ref = resources.files("spec_harness").joinpath(f"criteria/{task.value}.md")
    return ref.read_text(encoding="utf-8")


def build_prompt(task: Task, registry_dir: Optional[Path] = None) -> str:
    criteria = load_criteria(task, registry_dir).strip()
    name = LONG_NAMES[task]
    return (
        "<image>\n"
        f"Inspect the spectrum shown above and decide whether it is a {name}.\n\n"
        f"{criteria}\n\n"
        f"{PROTOCOL}"
    )
