"""Per-component latency bench over the three dummy-app conditions.

Each condition is scanned ``n`` times through the SDK after one untimed
warm-up scan (so the policy comes from the cache), and the server-reported
stage timings are averaged.
"""

from __future__ import annotations

import contextlib
import csv
import json
import socket
import tempfile
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from statistics import fmean
from typing import Iterator

from .client import ScanClient, SessionState
from .errors import BenchAbortedError
from .fixtures import Fixture, condition_fixtures, policy_html
from .policy import CacheStore

COMPONENTS = (
    ("context_detection_ms", "Context Detection"),
    ("segment_extraction_ms", "Segment Extraction"),
    ("cpp_presentation_ms", "CPP Presentation"),
    ("overall_ms", "Overall"),
)
CONDITIONS = (("icon_only", "Icon Only"), ("text_only", "Text Only"), ("mixed", "Mixed"))

LATENCY_BUDGET_MS = 12_000


@dataclass
class BenchReport:
    n: int
    means: dict[str, dict[str, float]]  # condition -> component -> mean ms

    @property
    def average(self) -> dict[str, float]:
        return {c: fmean(self.means[cond][c] for cond, _ in CONDITIONS) for c, _ in COMPONENTS}

    def rows(self) -> list[tuple[str, list[float]]]:
        """Four rows (components) by four columns (conditions + average), in ms."""
        avg = self.average
        return [(label, [self.means[cond][key] for cond, _ in CONDITIONS] + [avg[key]])
                for key, label in COMPONENTS]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "unit": "ms",
            "columns": [label for _, label in CONDITIONS] + ["Average"],
            "conditions": {cond: {k: round(v, 3) for k, v in self.means[cond].items()} for cond, _ in CONDITIONS},
            "average": {k: round(v, 3) for k, v in self.average.items()},
            "rows": {label: [round(v, 3) for v in values] for label, values in self.rows()},
        }

    def render_table(self) -> str:
        header = ["Component"] + [f"{label} (s)" for _, label in CONDITIONS] + ["Average (s)"]
        body = [[label] + [f"{v / 1000:.3f}" for v in values] for label, values in self.rows()]
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]

        def fmt(r):
            return "  ".join(r[0].ljust(widths[0]) if i == 0 else r[i].rjust(widths[i])
                             for i in range(len(r)))

        rule = "-" * len(fmt(header))
        lines = [fmt(header), rule] + [fmt(r) for r in body[:-1]] + [rule, fmt(body[-1])]
        return "\n".join(lines) + f"\n(mean of {self.n} run(s) per screenshot)"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component"] + [c for c, _ in CONDITIONS] + ["average"])
            for label, values in self.rows():
                w.writerow([label] + [f"{v:.3f}" for v in values])

    def plot(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        columns = [label for _, label in CONDITIONS] + ["Average"]
        rows = self.rows()
        fig, ax = plt.subplots(figsize=(6.4, 3.6), dpi=120)
        bottom = [0.0] * len(columns)
        for (label, values), color in zip(rows[:-1], ("#4C72B0", "#DD8452", "#55A868")):
            secs = [v / 1000 for v in values]
            ax.bar(columns, secs, bottom=bottom, label=label, color=color, width=0.6)
            bottom = [b + s for b, s in zip(bottom, secs)]
        overall = [v / 1000 for v in rows[-1][1]]
        ax.scatter(columns, overall, marker="_", s=900, color="black", zorder=3, label="Overall")
        ax.set_ylabel("Execution time (s)")
        ax.set_title(f"Per-component execution time (mean of {self.n})")
        ax.legend(frameon=False, fontsize=8, loc="upper left", bbox_to_anchor=(1.0, 1.0))
        ax.spines[["top", "right"]].set_visible(False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def _scan_once(client: ScanClient, fixture: Fixture, policy_url: str, timeout: float):
    future = client.submit_scan(fixture.capture, policy_url, fixture.insets, list(fixture.sidecar))
    session = future.result(timeout=timeout)
    client.dismiss()
    if session.state is SessionState.FAILED:
        raise BenchAbortedError(f"scan of {fixture.name} failed: {session.error}")
    return session.result.timings


def run_bench(endpoint: str, policy_url: str, n: int = 3, fixtures: dict[str, Fixture] | None = None,
              client: ScanClient | None = None, timeout: float = 120.0) -> BenchReport:
    """Sequential scans; any failure aborts the whole report."""
    if n < 1:
        raise ValueError("n must be at least 1")
    fixtures = fixtures or condition_fixtures()
    own = client is None
    client = client or ScanClient(endpoint, timeout=timeout)
    try:
        try:
            _scan_once(client, fixtures["mixed"], policy_url, timeout)  # warm the policy cache
            means = {}
            for cond, _ in CONDITIONS:
                runs = [_scan_once(client, fixtures[cond], policy_url, timeout) for _ in range(n)]
                means[cond] = {key: fmean(getattr(t, key) for t in runs) for key, _ in COMPONENTS}
        except BenchAbortedError:
            raise
        except Exception as exc:
            raise BenchAbortedError(f"bench aborted: {type(exc).__name__}: {exc}") from None
    finally:
        if own:
            client.close()
    return BenchReport(n, means)


class _PolicyHandler(BaseHTTPRequestHandler):
    body = b""

    def do_GET(self):
        if self.path.rstrip("/") != "/privacy":
            self.send_error(404)
            return
        self.send_response(200)
        self.send_header("Content-Type", "text/html; charset=utf-8")
        self.send_header("Content-Length", str(len(self.body)))
        self.end_headers()
        self.wfile.write(self.body)

    def log_message(self, *args):
        pass


@contextlib.contextmanager
def local_stack(cache_dir=None) -> Iterator[tuple[str, str]]:
    """Loopback scan service plus a static server for the dummy policy.

    Yields ``(endpoint, policy_url)``.
    """
    import uvicorn

    from .service import ScanService, create_app

    handler = type("Handler", (_PolicyHandler,), {"body": policy_html()})
    policy_server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    policy_thread = threading.Thread(target=policy_server.serve_forever, daemon=True)
    policy_thread.start()

    with contextlib.ExitStack() as stack:
        if cache_dir is None:
            cache_dir = stack.enter_context(tempfile.TemporaryDirectory(prefix="privscan-cache-"))
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        app = create_app(ScanService(cache=CacheStore(cache_dir)))
        server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
        thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]}, daemon=True)
        thread.start()
        deadline = time.monotonic() + 30
        while not server.started:
            if not thread.is_alive() or time.monotonic() > deadline:
                raise RuntimeError("local scan service failed to start")
            time.sleep(0.02)
        try:
            yield f"http://127.0.0.1:{port}", f"http://127.0.0.1:{policy_server.server_port}/privacy"
        finally:
            server.should_exit = True
            thread.join(timeout=10)
            sock.close()
            policy_server.shutdown()
            policy_server.server_close()


def write_outputs(report: BenchReport, out: str | Path | None, figure: str | Path | None = None) -> list[Path]:
    """JSON report plus a CSV table and a bar-chart PNG next to it."""
    if out is None:
        return []
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_json(), indent=2) + "\n")
    csv_path = out.with_suffix(".csv")
    report.write_csv(csv_path)
    fig_path = Path(figure) if figure else out.with_suffix(".png")
    report.plot(fig_path)
    return [out, csv_path, fig_path]

