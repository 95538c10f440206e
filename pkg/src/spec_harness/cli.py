"""Command-line entry points: synth, build, rollout, score, export-rl, serve."""

from __future__ import annotations

import json
import sys
from collections import defaultdict
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import bench as bench_mod
from .bench import (
    Split,
    assemble_splits,
    load_bench,
    rejection_sample,
    snr_filter,
    train_weak_classifier,
    write_bench,
)
from .metrics import score_task, write_report_csv, write_report_json
from .policies import (
    DecisionRule,
    HttpPolicy,
    PolicyConfig,
    Probe,
    ScriptedPolicy,
    ScriptedRule,
)
from .rewards import RewardConfig, export_rl_batch
from .rollout import RolloutConfig, read_predictions, run_batch
from .spectrum import Spectrum, Task, TaskLabel, WavelengthRange, load_spectrum
from .synth import task_negative_recipe, task_positive_recipe, synth_spectrum
from .trajectory import Prediction, read_trajectories


@click.group()
def main():
    """Spectral inspection harness."""


@main.command()
@click.option("--task", "task_name", required=True, type=click.Choice([t.value for t in Task]))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--positives", default=60, show_default=True)
@click.option("--negatives", default=140, show_default=True)
@click.option("--confuser-fraction", default=0.25, show_default=True,
              help="fraction of negatives given a weakened look-alike feature")
@click.option("--seed", default=7, show_default=True)
def synth(task_name: str, out_dir: Path, positives: int, negatives: int,
          confuser_fraction: float, seed: int):
    """Generate a synthetic survey pool plus the task's official catalog."""
    task = Task(task_name)
    out_dir.mkdir(parents=True, exist_ok=True)
    catalog: list[str] = []
    for i in range(positives):
        sid = f"{task.value.lower()}-pos-{i:05d}"
        spec = synth_spectrum(
            sid, task_positive_recipe(task), seed=seed * 1_000_003 + i,
            label=TaskLabel(task, True),
        )
        bench_mod.save_spectrum(spec, out_dir / f"{sid}.specvi.json")
        catalog.append(sid)
    n_confusers = int(negatives * confuser_fraction)
    for i in range(negatives):
        sid = f"{task.value.lower()}-neg-{i:05d}"
        recipe = task_negative_recipe(task, confuser=i < n_confusers)
        spec = synth_spectrum(
            sid, recipe, seed=seed * 2_000_003 + i, label=TaskLabel(task, False),
        )
        bench_mod.save_spectrum(spec, out_dir / f"{sid}.specvi.json")
    (out_dir / "catalog.txt").write_text("\n".join(catalog) + "\n", encoding="utf-8")
    click.echo(f"wrote {positives + negatives} spectra and catalog.txt to {out_dir}")


@main.command()
@click.option("--task", "task_name", required=True, type=click.Choice([t.value for t in Task]))
@click.option("--pool", "pool_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--threshold", default=0.8, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--train-pos", default=20, show_default=True)
@click.option("--train-neg", default=20, show_default=True)
@click.option("--test-pos", default=20, show_default=True)
@click.option("--test-neg", default=60, show_default=True)
@click.option("--exclude", "exclude_path", type=click.Path(exists=True, path_type=Path),
              help="ids to keep out of both splits (cold-start spectra)")
@click.option("--seed", default=7, show_default=True)
def build(task_name, pool_dir, catalog_path, threshold, out_dir,
          train_pos, train_neg, test_pos, test_neg, exclude_path, seed):
    """Build a verification bench: screen the pool, keep hard negatives, split."""
    task = Task(task_name)
    pool = [load_spectrum(p) for p in sorted(pool_dir.glob("*.specvi.json"))]
    pool = snr_filter(pool)
    catalog_ids = set(catalog_path.read_text(encoding="utf-8").split())
    exclude_ids = set(exclude_path.read_text(encoding="utf-8").split()) if exclude_path else set()

    positives = [s for s in pool if s.id in catalog_ids]
    others = [s for s in pool if s.id not in catalog_ids]
    clf = train_weak_classifier(positives, others, task, seed=seed)
    negatives, report = rejection_sample(clf, others, catalog_ids, threshold=threshold)
    click.echo(
        f"rejection sampling: {report.accepted}/{report.candidates_seen} accepted "
        f"({report.acceptance_rate:.2%}) at threshold {report.threshold}"
    )

    provenance = {s.id: {"source": "catalog"} for s in positives}
    provenance.update(
        {s.id: {"source": "rejection_sample", "score": clf.score(s)} for s in negatives}
    )
    train, test = assemble_splits(
        positives, negatives, task, train_pos, train_neg, test_pos, test_neg,
        exclude_ids=exclude_ids, seed=seed, provenance=provenance,
    )
    spectra = {s.id: s for s in positives + negatives}
    manifest = write_bench(train + test, spectra, out_dir, seed=seed)
    click.echo(f"wrote {len(train)} train / {len(test)} test items to {manifest}")


def load_policy_config(path: Path):
    """Parse a policy TOML into a BenchItem -> Policy factory."""
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    kind = cfg.get("kind", "http")
    if kind == "http":
        http = cfg.get("http", {})
        pc = PolicyConfig(
            endpoint_url=http["endpoint_url"],
            model_name=http["model_name"],
            temperature=http.get("temperature", 0.0),
            max_turn_tokens=http.get("max_turn_tokens", 2048),
            request_timeout=http.get("request_timeout", 60.0),
            retry_limit=http.get("retry_limit", 2),
        )
        policy = HttpPolicy(pc)
        return lambda item: policy
    if kind == "scripted":
        rules: dict[Task, ScriptedRule] = {}
        for task_name, spec in cfg.get("scripted", {}).get("rules", {}).items():
            task = Task(task_name)
            probes = tuple(
                Probe(
                    range=WavelengthRange(p[0], p[1]),
                    label=p[2] if len(p) > 2 else None,
                )
                for p in spec["probes"]
            )
            dec = spec["decision"]
            rules[task] = ScriptedRule(
                task=task,
                probes=probes,
                decision=DecisionRule(
                    feature_range=WavelengthRange(*dec["feature_range"]),
                    reference_range=WavelengthRange(*dec["reference_range"]),
                    min_ratio=dec["min_ratio"],
                    direction=dec.get("direction", "above"),
                ),
            )
        return lambda item: ScriptedPolicy(rules[item.task])
    raise click.ClickException(f"unknown policy kind {kind!r}")


@main.command()
@click.option("--items", "bench_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--split", default="TEST", type=click.Choice(["TRAIN", "TEST", "ALL"]), show_default=True)
@click.option("--group-size", default=8, show_default=True)
@click.option("--max-tool-calls", default=8, show_default=True)
@click.option("--concurrency", default=8, show_default=True)
@click.option("--seed", default=17, show_default=True)
def rollout(bench_dir, policy_path, out_dir, split, group_size, max_tool_calls, concurrency, seed):
    """Run rollouts over bench items; exit 0 ok, 2 partial failure, 3 total."""
    items = load_bench(bench_dir, None if split == "ALL" else Split(split))
    if not items:
        click.echo("no items selected")
        sys.exit(0)
    policy_for_item = load_policy_config(policy_path)
    cfg = RolloutConfig(
        max_tool_calls=max_tool_calls,
        group_size=group_size,
        per_item_seed=seed,
        concurrency=concurrency,
    )
    result = run_batch(items, cfg, policy_for_item, base_dir=bench_dir, out_dir=out_dir)
    click.echo(
        f"{len(result.groups)}/{len(items)} items completed, "
        f"{len(result.failures)} rollout failures, archive in {out_dir}"
    )
    sys.exit(result.exit_code)


@main.command()
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--csv", "csv_path", type=click.Path(path_type=Path))
def score(pred_path, out_path, csv_path):
    """Score a predictions table into per-task and macro metrics."""
    rows = read_predictions(pred_path)
    by_task: dict[str, list] = defaultdict(list)
    for row in rows:
        by_task[row["task"]].append(row)
    reports = []
    for task_name in sorted(by_task):
        task_rows = by_task[task_name]
        preds = [Prediction(r["prediction"]) for r in task_rows]
        golds = [r["gold"] for r in task_rows]
        reports.append(score_task(Task(task_name), preds, golds))
    write_report_json(reports, out_path)
    if csv_path:
        write_report_csv(reports, csv_path)
    for r in reports:
        click.echo(f"{r.task.value}: acc={r.acc:.4f} f1={r.f1:.4f} invalid={r.n_invalid}")


@main.command("export-rl")
@click.option("--archive", "archive_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--alpha", default=0.1, show_default=True)
@click.option("--raw-advantages", is_flag=True, help="center rewards without std-normalizing")
def export_rl(archive_dir, out_path, alpha, raw_advantages):
    """Turn a rollout archive into a masked, advantage-weighted training batch."""
    trajs = read_trajectories(archive_dir / "trajectories.traj.jsonl")
    rows = read_predictions(archive_dir / "predictions.csv")
    if len(trajs) != len(rows):
        raise click.ClickException("archive and predictions table disagree in length")

    class _Item:
        def __init__(self, item_id, task, gold):
            self.id = item_id
            self._label = TaskLabel(Task(task), gold)

        def gold_label(self):
            return self._label

    grouped: dict[str, tuple[_Item, list]] = {}
    for traj, row in zip(trajs, rows):
        entry = grouped.setdefault(
            row["item_id"], (_Item(row["item_id"], row["task"], row["gold"]), [])
        )
        entry[1].append(traj)
    n = export_rl_batch(
        grouped.values(), RewardConfig(alpha=alpha), out_path, normalize=not raw_advantages
    )
    click.echo(f"wrote {n} records to {out_path}")


@main.command()
@click.option("--archive", "archive_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--store", "store_path", required=True, type=click.Path(path_type=Path))
@click.option("--bind", default="127.0.0.1:8600", show_default=True)
@click.option("--reveal-gold", is_flag=True)
def serve(archive_dir, store_path, bind, reveal_gold):
    """Serve trajectories and collect expert annotations."""
    from .service import serve as run_service

    run_service(archive_dir, store_path, bind_addr=bind, reveal_gold=reveal_gold)


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
def openapi(out_path):
    """Write the annotation service's OpenAPI schema to a file."""
    import tempfile

    from .service import AnnotationStore, create_app

    with tempfile.TemporaryDirectory() as tmp:
        app = create_app(tmp, AnnotationStore(Path(tmp) / "store.jsonl"))
    Path(out_path).write_text(json.dumps(app.openapi(), indent=2) + "\n", encoding="utf-8")
    click.echo(f"wrote schema to {out_path}")


if __name__ == "__main__":
    main()
