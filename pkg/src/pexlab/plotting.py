"""Figure rendering for run logs: score curves, cross-seed aggregates with
a std band, and policy-usage fractions. Files are written as SVG next to
the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import bridge


def render_all(logs, aggregates, fig_dir, usage_bucket: int) -> list[Path]:
    fig_dir = Path(fig_dir)
    written = [render_scores(logs, fig_dir / "scores.svg")]
    written.append(render_aggregate(aggregates, fig_dir / "aggregate.svg"))
    usage_path = render_usage(logs, fig_dir / "usage.svg", usage_bucket)
    if usage_path is not None:
        written.append(usage_path)
    return written


def render_scores(logs, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    for log in logs:
        steps = [r.env_step for r in log.eval_records]
        scores = [r.normalized_score for r in log.eval_records]
        ax.plot(steps, scores, label=f"{log.strategy_kind} seed {log.seed}", alpha=0.8)
    ax.set_xlabel("env step")
    ax.set_ylabel("normalized score")
    ax.set_title(", ".join(sorted({log.env_id for log in logs})))
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_aggregate(aggregates, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    for strategy_kind, rows in aggregates.items():
        steps = [r[0] for r in rows]
        means = [r[1] for r in rows]
        stds = [r[2] for r in rows]
        ax.plot(steps, means, label=strategy_kind)
        ax.fill_between(
            steps,
            [m - s for m, s in zip(means, stds)],
            [m + s for m, s in zip(means, stds)],
            alpha=0.2,
        )
    ax.set_xlabel("env step")
    ax.set_ylabel("normalized score (mean over tasks, then seeds)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_usage(logs, path: Path, usage_bucket: int) -> Path | None:
    with_selection = [log for log in logs if log.selection]
    if not with_selection:
        return None
    fig, ax = plt.subplots(figsize=(7, 4))
    for log in with_selection:
        usage = bridge.usage_summary(log.selection, usage_bucket)
        starts = [log.selection[i * usage_bucket].env_step for i in range(len(usage))]
        ax.plot(starts, usage, label=f"{log.strategy_kind} seed {log.seed}", alpha=0.8)
    ax.set_xlabel("env step")
    ax.set_ylabel("offline-policy usage fraction")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
