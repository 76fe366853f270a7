"""Command-line entry point.

Exit codes: 0 success, 2 expectation failure, 3 parse/config error.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import click

from . import harness, report
from .errors import BerytusError, ParseError
from .manager import CredentialStore
from .scenario import ScenarioConfig, ScenarioRunner, write_transcript

EXIT_OK = 0
EXIT_EXPECTATION = 2
EXIT_PARSE = 3


DEFAULT_SEED = bytes(32)


@click.group()
@click.option(
    "--seed",
    default=None,
    metavar="HEX",
    help="Master seed, hex bytes. Overrides the seed embedded in scenario files.",
)
@click.option(
    "--transcript-dir",
    type=click.Path(path_type=Path),
    default=None,
    help="Write JSON-lines wire transcripts and step logs here.",
)
@click.option(
    "--insecure-transcript",
    is_flag=True,
    help="Also write a plaintext shadow of sealed traffic (debugging only).",
)
@click.pass_context
def main(ctx, seed, transcript_dir, insecure_transcript):
    seed_bytes = None
    if seed is not None:
        try:
            seed_bytes = bytes.fromhex(seed)
        except ValueError:
            click.echo(f"--seed is not valid hex: {seed!r}", err=True)
            ctx.exit(EXIT_PARSE)
        if not seed_bytes:
            click.echo("--seed must not be empty", err=True)
            ctx.exit(EXIT_PARSE)
    ctx.obj = {
        "seed": seed_bytes,
        "transcript_dir": transcript_dir,
        "insecure_transcript": insecure_transcript,
    }


def _resolve_scenario(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("berytus.scenarios").joinpath(f"{name}.json")
    if bundled.is_file():
        return Path(str(bundled))
    raise ParseError(f"no scenario file or bundled scenario named {name!r}")


def _execute_scenario(name: str, options: dict) -> tuple[str, bool, str]:
    config = ScenarioConfig.from_path(_resolve_scenario(name))
    if options["seed"] is not None:
        config.seed = options["seed"]
    runner = ScenarioRunner(
        config,
        shadow_log=options["insecure_transcript"],
        journal_dir=options["transcript_dir"],
    )
    result = runner.run()
    if options["transcript_dir"] is not None:
        write_transcript(
            result,
            options["transcript_dir"],
            insecure_plain=runner.plain_entries if options["insecure_transcript"] else None,
        )
    lines = [f"scenario {config.name}: {'ok' if result.ok else 'FAILED'}"]
    for step in result.steps:
        marker = "+" if step.ok else "!"
        detail = f"  ({step.detail})" if step.detail else ""
        lines.append(f"  {marker} {step.step}{detail}")
    if not result.ok:
        lines.append(f"  expectation diff: {result.expectation_diff}")
    return config.name, result.ok, "\n".join(lines)


@main.command()
@click.argument("scenarios", nargs=-1, required=True)
@click.option("--parallel", type=int, default=1, show_default=True, help="Worker pool size.")
@click.pass_context
def run(ctx, scenarios, parallel):
    """Execute one or more scenario files (paths or bundled names)."""
    options = ctx.obj
    try:
        if parallel > 1 and len(scenarios) > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                outcomes = list(
                    pool.map(lambda name: _execute_scenario(name, options), scenarios)
                )
        else:
            outcomes = [_execute_scenario(name, options) for name in scenarios]
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        ctx.exit(EXIT_PARSE)
    except BerytusError as exc:
        click.echo(f"{exc.code}: {exc}", err=True)
        ctx.exit(EXIT_EXPECTATION)
    failed = False
    for _name, ok, text in outcomes:
        click.echo(text)
        failed = failed or not ok
    if failed:
        ctx.exit(EXIT_EXPECTATION)
    ctx.exit(EXIT_OK)


@main.command("attack-matrix")
@click.option("--runs", type=int, default=20, show_default=True)
@click.option(
    "--out",
    type=click.Path(path_type=Path),
    default=Path("reports"),
    show_default=True,
    help="Directory for matrix.jsonl and matrix.png.",
)
@click.option("--parallel", type=int, default=1, show_default=True)
@click.pass_context
def attack_matrix(ctx, runs, out, parallel):
    """Reproduce the credential-theft mitigation matrix."""
    if runs < 1:
        click.echo("--runs must be positive", err=True)
        ctx.exit(EXIT_PARSE)
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else DEFAULT_SEED
    reports = harness.run_attack_matrix(seed, runs=runs, parallel=parallel)
    rows = harness.build_matrix(reports)
    jsonl_path = report.write_matrix_jsonl(reports, out / "matrix.jsonl")
    png_path = report.render_matrix_png(rows, out / "matrix.png")
    click.echo(report.matrix_text(rows))
    click.echo(f"\nwrote {jsonl_path} and {png_path}")
    if not harness.matrix_matches_expected(rows):
        click.echo("matrix does NOT match the expected mitigation pattern", err=True)
        ctx.exit(EXIT_EXPECTATION)
    ctx.exit(EXIT_OK)


@main.command()
@click.option(
    "--strategy",
    type=click.Choice(["domain", "appkey", "all"], case_sensitive=False),
    default="all",
    show_default=True,
)
@click.pass_context
def phishing(ctx, strategy):
    """Demonstrate account-mapping behavior against lookalike and partner actors."""
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else b"\x07" * 32
    if strategy.lower() == "all":
        reports = harness.run_phishing_suite(seed)
    else:
        reports = [
            harness.run_phishing_scenario(
                "Domain" if strategy.lower() == "domain" else "AppKey", seed
            )
        ]
    click.echo(report.phishing_text(reports))
    ctx.exit(EXIT_OK)


@main.command()
@click.pass_context
def vectors(ctx):
    """Check the bundled RFC-derived crypto vectors bit-for-bit."""
    results = harness.run_vectors()
    click.echo(report.vectors_text(results))
    if not results or not all(r.ok for r in results):
        ctx.exit(EXIT_EXPECTATION)
    ctx.exit(EXIT_OK)


@main.command("dump-journal")
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def dump_journal(ctx, path):
    """Replay a manager journal and summarize the stored accounts."""
    try:
        store = CredentialStore.replay(path)
    except (BerytusError, ValueError, OSError) as exc:
        click.echo(f"cannot replay journal: {exc}", err=True)
        ctx.exit(EXIT_PARSE)
    total = 0
    for mapping_id in sorted(store.records):
        for stored in store.records[mapping_id]:
            total += 1
            kinds = ",".join(sorted({f["kind"] for f in stored.account["fields"]}))
            click.echo(
                f"{mapping_id}  label={stored.label}  strategy={stored.mapping_strategy}"
                f"  createdAt={stored.created_at}  fields=[{kinds}]"
            )
    click.echo(f"{total} account(s)")
    ctx.exit(EXIT_OK)


if __name__ == "__main__":
    main()
