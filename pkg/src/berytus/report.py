"""Rendering of attack-matrix results: human table, JSON-lines, and a PNG figure."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import MATRIX_ATTACKS, AttackReport, build_matrix

_CHECK = "yes"
_CROSS = "no"


def matrix_text(rows: list[dict]) -> str:
    headers = ["Mitigation", *MATRIX_ATTACKS, "Basis"]
    body = []
    for row in rows:
        body.append(
            [
                row["mitigation"],
                *[(_CHECK if row[a] else _CROSS) for a in MATRIX_ATTACKS],
                row["kind"],
            ]
        )
    widths = [max(len(str(line[i])) for line in [headers, *body]) for i in range(len(headers))]
    def fmt(line):
        return "  ".join(str(cell).ljust(width) for cell, width in zip(line, widths)).rstrip()
    rule = "  ".join("-" * width for width in widths)
    return "\n".join([fmt(headers), rule, *[fmt(line) for line in body]])


def write_matrix_jsonl(reports: list[AttackReport], path: str | Path) -> Path:
    """One line per run-level report, then one line per matrix row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for report in reports:
            fh.write(json.dumps({"type": "run", **report.to_record()}) + "\n")
        for row in build_matrix(reports):
            fh.write(json.dumps({"type": "matrixRow", **row}) + "\n")
    return path


def render_matrix_png(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [row["mitigation"] for row in rows]
    grid = [[1 if row[a] else 0 for a in MATRIX_ATTACKS] for row in rows]

    fig, ax = plt.subplots(figsize=(7.2, 3.2))
    ax.imshow(grid, cmap="RdYlGn", vmin=0, vmax=1, aspect="auto")
    ax.set_xticks(range(len(MATRIX_ATTACKS)), MATRIX_ATTACKS)
    ax.set_yticks(range(len(names)), names)
    for y, row in enumerate(rows):
        for x, attack in enumerate(MATRIX_ATTACKS):
            ax.text(
                x,
                y,
                "mitigated" if row[attack] else "exposed",
                ha="center",
                va="center",
                fontsize=8,
            )
    ax.set_title("Credential-theft mitigation by attack position")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def phishing_text(reports: list[AttackReport]) -> str:
    lines = []
    for report in reports:
        verdict = "credential transferred" if report.credential_observed else "nothing transferred"
        lines.append(f"{report.attack}: {verdict}")
        for label, location in report.observed_items:
            lines.append(f"    {label} -> {location}")
        if report.detail:
            lines.append(f"    ({report.detail})")
    return "\n".join(lines)


def vectors_text(results) -> str:
    lines = [
        f"{'PASS' if result.ok else 'FAIL'} {result.name}"
        + (f"  [{result.detail}]" if result.detail and not result.ok else "")
        for result in results
    ]
    passed = sum(1 for result in results if result.ok)
    lines.append(f"{passed}/{len(results)} vectors passed")
    return "\n".join(lines)
