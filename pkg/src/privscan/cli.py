"""``privscan`` command line: scan, serve, bench.

Exit codes: 0 on a presented or empty scan, 1 on usage errors, 2 when the
scan (or bench) fails.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .client import CaptureInsets, ScanClient, SessionState, save_image
from .errors import PrivScanError
from .imaging import load_png
from .model import BoundingBox, parse_sidecar

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
NO_CPP_ELEMENTS = "NO_CPP_ELEMENTS"
DEFAULT_ENDPOINT = "http://127.0.0.1:8080"


def _parse_insets(value: str | None) -> tuple[int, int]:
    if not value:
        return 0, 0
    try:
        top, bottom = (int(v) for v in value.split(","))
    except ValueError:
        raise click.BadParameter("expected TOP,BOTTOM pixel counts, e.g. 60,40") from None
    return top, bottom


def _parse_box(value: str) -> BoundingBox:
    try:
        return BoundingBox.from_list([int(v) for v in value.split(",")])
    except ValueError as exc:
        raise click.BadParameter(f"expected L,T,R,B: {exc}") from None


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="privscan")
def cli():
    """Contextual privacy policy scanner."""


@cli.command()
@click.option("--screenshot", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="PNG capture of the current screen.")
@click.option("--policy-url", required=True, help="URL of the app's privacy policy.")
@click.option("--sidecar", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='UI-text sidecar JSON ({"elements": [{"box": [l,t,r,b], "text": ...}]}).')
@click.option("--insets", help="Status/navigation bar heights to crop, as TOP,BOTTOM.")
@click.option("--exclude", multiple=True, help="Capture region to blank before upload, as L,T,R,B (repeatable).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory for the per-type overlay PNGs.")
@click.option("--stem", default="scan", show_default=True, help="File name stem for saved images.")
@click.option("--endpoint", default=lambda: os.environ.get("PRIVSCAN_ENDPOINT", DEFAULT_ENDPOINT),
              show_default="$PRIVSCAN_ENDPOINT or " + DEFAULT_ENDPOINT, help="Scan service base URL.")
@click.option("--timeout", default=60.0, show_default=True, help="Request timeout in seconds.")
def scan(screenshot, policy_url, sidecar, insets, exclude, out_dir, stem, endpoint, timeout):
    """Scan one screenshot and save one overlay image per data type."""
    top, bottom = _parse_insets(insets)
    boxes = tuple(_parse_box(v) for v in exclude)
    try:
        capture = load_png(screenshot)
        elements = parse_sidecar(json.loads(sidecar.read_text("utf-8"))) if sidecar else None
    except (PrivScanError, ValueError, OSError) as exc:
        raise click.BadParameter(str(exc)) from None

    client = ScanClient(endpoint, timeout=timeout)
    try:
        try:
            future = client.submit_scan(capture, policy_url, CaptureInsets(top, bottom, boxes), elements)
        except PrivScanError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FAILED)
        session = future.result()
    finally:
        client.close()

    if session.state is SessionState.FAILED:
        click.echo(f"scan failed: {session.error}", err=True)
        sys.exit(EXIT_FAILED)
    if session.state is SessionState.EMPTY:
        click.echo(NO_CPP_ELEMENTS)
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        for page in session.pages:
            path = save_image(page, out_dir, stem)
            click.echo(f"[{page.data_type}] {page.card['summary']}")
            click.echo(f"    -> {path}")
    click.echo(f"Full privacy policy: {policy_url}")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None, help="Defaults to $PRIVSCAN_PORT or 8080.")
def serve(host, port):
    """Run the scan service."""
    from .service import serve as run

    run(host, port)


@cli.command()
@click.option("--endpoint", default=None, help="Scan service to bench; omit to start a loopback service.")
@click.option("--policy-url", default=None, help="Policy URL for a remote endpoint.")
@click.option("--n", "n", default=3, show_default=True, type=click.IntRange(min=1), help="Runs per condition.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the JSON report here (a .csv table and .png chart are written alongside).")
@click.option("--figure", type=click.Path(dir_okay=False, path_type=Path), help="Chart path override.")
def bench(endpoint, policy_url, n, out, figure):
    """Time the three pipeline stages over the bundled dummy-app screens."""
    from .bench import LATENCY_BUDGET_MS, local_stack, run_bench, write_outputs

    if endpoint and not policy_url:
        raise click.UsageError("--policy-url is required with --endpoint")
    try:
        if endpoint:
            report = run_bench(endpoint, policy_url, n)
        else:
            with local_stack() as (local_endpoint, local_policy):
                report = run_bench(local_endpoint, local_policy, n)
    except PrivScanError as exc:
        click.echo(f"bench failed: {exc}", err=True)
        sys.exit(EXIT_FAILED)
    click.echo(report.render_table())
    overall = report.average["overall_ms"]
    verdict = "within" if overall <= LATENCY_BUDGET_MS else "OVER"
    click.echo(f"average overall {overall / 1000:.3f}s, {verdict} the {LATENCY_BUDGET_MS / 1000:.0f}s budget")
    for path in write_outputs(report, out, figure):
        click.echo(f"wrote {path}")


def cli_main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="privscan", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        ctx = exc.ctx
        if ctx is not None:
            click.echo("\n" + ctx.get_help(), err=True)
        return EXIT_USAGE
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return EXIT_FAILED
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
