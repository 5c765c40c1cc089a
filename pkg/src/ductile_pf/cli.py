"""Command-line client.

Every command is a request to the HTTP service: a remote one when
``--server`` (or ``DUCTILE_PF_SERVER``) is given, otherwise an in-process
instance of the same application.

Exit codes
----------
0  success
1  error (invalid config, missing files, service error)
2  usage error
3  a run failed at a load step, or some campaign points failed
4  every campaign point failed
5  the service could not be reached
"""

from __future__ import annotations

import json
import math
import os
import sys
import time
from pathlib import Path

import click

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_STEP_FAILED = 3
EXIT_ALL_FAILED = 4
EXIT_UNREACHABLE = 5

SERVER_ENV = "DUCTILE_PF_SERVER"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "VECLIB_MAXIMUM_THREADS",
                "NUMEXPR_NUM_THREADS")


def pin_threads() -> None:
    """Single-threaded BLAS; must run before numpy is imported to take effect."""
    for v in _THREAD_VARS:
        os.environ[v] = "1"


class ServiceError(click.ClickException):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.exit_code = code


class Client:
    """Small wrapper over an HTTP or in-process transport."""

    def __init__(self, server: str | None = None, workdir: str | None = None):
        if server:
            import httpx

            self.http = httpx.Client(base_url=server.rstrip("/"), timeout=120.0)
            self.remote = True
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # starlette deprecation notice on import
                from fastapi.testclient import TestClient

            from .service import create_app

            self.http = TestClient(create_app(workdir))
            self.remote = False

    def call(self, method: str, path: str, **kw):
        import httpx

        try:
            r = self.http.request(method, path, **kw)
        except httpx.TransportError as exc:
            raise ServiceError(f"cannot reach service: {exc}", EXIT_UNREACHABLE) from exc
        if r.status_code >= 400:
            try:
                detail = r.json().get("detail", r.text)
            except ValueError:
                detail = r.text
            raise ServiceError(f"{detail}")
        return r.json()


def _client(ctx) -> Client:
    obj = ctx.find_root().obj
    if "client" not in obj:
        obj["client"] = Client(obj.get("server"), obj.get("workdir"))
    return obj["client"]


def _fmt(v, width=11):
    if v is None:
        return "-".rjust(width)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan".rjust(width)
        return f"{v:.5g}".rjust(width)
    return str(v).rjust(width)


@click.group()
@click.option("--server", envvar=SERVER_ENV, default=None, help="Base URL of a running service.")
@click.option("--workdir", type=click.Path(file_okay=False), default=None,
              help="Where default output directories are created (in-process mode).")
@click.option("-v", "--verbose", count=True)
@click.version_option(package_name="ductile-pf")
@click.pass_context
def cli(ctx, server, workdir, verbose):
    """Phase-field fracture of elastic-plastic solids."""
    import logging

    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj.update(server=server, workdir=workdir)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@cli.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Run directory.")
@click.option("--snapshot-every", type=click.IntRange(min=0), default=None, help="Field snapshot period in steps.")
@click.option("--deterministic/--no-deterministic", default=None,
              help="Single-threaded BLAS (the default for the CLI).")
@click.option("--scheme", type=click.Choice(["aup", "upa"]), default=None)
@click.option("--quiet", is_flag=True, help="Only print the final status.")
@click.pass_context
def run(ctx, config, out_dir, snapshot_every, deterministic, scheme, quiet):
    """Execute a configuration file."""
    import yaml

    try:
        data = yaml.safe_load(Path(config).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ServiceError(f"cannot read {config}: {exc}") from exc
    c = _client(ctx)
    body = {"config": data, "scheme": scheme, "snapshot_every": snapshot_every, "deterministic": deterministic,
            "out_dir": str(Path(out_dir).resolve()) if out_dir else None}
    job = c.call("POST", "/runs", json=body)
    if not quiet:
        click.echo(f"run {job['id']} -> {job['out_dir']}")
        click.echo("".join(_fmt(h) for h in ("step", "t", "J", "crack", "max_alpha", "total", "am_its")))
    seen = -1
    while True:
        job = c.call("GET", f"/runs/{job['id']}")
        row = job.get("last_row")
        if row and job["step"] > seen and not quiet:
            seen = job["step"]
            click.echo("".join(_fmt(v) for v in (int(row["step"]), row["t"], row["J"], row["crack_length"],
                                                 row["max_alpha"], row["total"], int(row["am_iterations"]))))
        if job["state"] in ("ok", "failed"):
            break
        time.sleep(0.2)
    if job["state"] == "ok":
        click.echo(f"ok: {job['out_dir']}")
        ctx.exit(EXIT_OK)
    click.echo(f"failed: {job['error']}", err=True)
    ctx.exit(EXIT_STEP_FAILED if job.get("failed_step") is not None else EXIT_ERROR)


# ---------------------------------------------------------------------------
# inspection
# ---------------------------------------------------------------------------

_DEFAULT_COLUMNS = "step,t,J,crack_length,tip_x,max_alpha,elastic,surface,plastic,total"


@cli.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--columns", default=_DEFAULT_COLUMNS, show_default=True)
@click.option("--tail", type=int, default=0, help="Only the last N rows.")
@click.option("--csv", "as_csv", is_flag=True, help="Print all columns as CSV.")
@click.pass_context
def ledger(ctx, run_dir, columns, tail, as_csv):
    """Print the per-step ledger of a run."""
    res = _client(ctx).call("POST", "/inspect/ledger", json={"run_dir": str(Path(run_dir).resolve())})
    cols, rows = res["columns"], res["rows"]
    if tail:
        rows = rows[-tail:]
    if as_csv:
        click.echo(",".join(cols))
        for r in rows:
            click.echo(",".join("" if v is None else repr(v) for v in r))
        return
    want = [c.strip() for c in columns.split(",") if c.strip()]
    bad = [c for c in want if c not in cols]
    if bad:
        raise ServiceError(f"unknown columns {bad}; available: {', '.join(cols)}")
    idx = [cols.index(c) for c in want]
    click.echo("".join(_fmt(c, 13) for c in want))
    for r in rows:
        click.echo("".join(_fmt(int(r[i]) if want[j] == "step" else r[i], 13) for j, i in enumerate(idx)))


@cli.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--step", type=int, default=None, help="Snapshot step (default: latest).")
@click.pass_context
def snapshot(ctx, run_dir, step):
    """Summarise a stored field snapshot (energies recomputed from the fields)."""
    res = _client(ctx).call("POST", "/inspect/snapshot", json={"run_dir": str(Path(run_dir).resolve()), "step": step})
    click.echo(f"snapshots: {res['available']}")
    for k in ("step", "elastic", "surface", "plastic", "total", "max_alpha", "max_eps_eq"):
        click.echo(f"{k:>11}: {res[k]}")
    for f in res["files"]:
        click.echo(f"       file: {f}")


@cli.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--step", type=int, default=None, help="Refit the hoop stress of this snapshot.")
@click.option("--window", type=float, nargs=2, default=None, help="Fit window in tip mesh sizes.")
@click.pass_context
def kfit(ctx, run_dir, step, window):
    """Generalized stress intensity of a notch run."""
    body = {"run_dir": str(Path(run_dir).resolve()), "step": step, "window": list(window) if window else None}
    res = _client(ctx).call("POST", "/inspect/kfit", json=body)
    for k in ("lam", "k_formula", "k_c", "k_c_fit", "nucleation_step", "step", "k", "residual", "n_samples"):
        if res.get(k) is not None:
            click.echo(f"{k:>16}: {res[k]}")


# ---------------------------------------------------------------------------
# campaigns
# ---------------------------------------------------------------------------


@cli.group()
def campaign():
    """Named presets and sweeps."""


@campaign.command("list")
@click.pass_context
def campaign_list(ctx):
    """List the available presets and their sweep points."""
    for p in _client(ctx).call("GET", "/presets"):
        click.echo(f"{p['name']:<22} {p['n_points']:>3} points  {p['description']}")


@campaign.command("run")
@click.argument("name")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--scale", type=float, default=1.0, show_default=True, help="Domain enlargement factor.")
@click.option("--jobs", type=click.IntRange(min=1), default=None,
              help="Worker processes (default: $DUCTILE_PF_JOBS or 1).")
@click.pass_context
def campaign_run(ctx, name, out_dir, scale, jobs):
    """Run every point of a preset; exit 3 if some points fail, 4 if all do."""
    c = _client(ctx)
    body = {"name": name, "scale": scale, "jobs": jobs, "out_dir": str(Path(out_dir).resolve()) if out_dir else None}
    job = c.call("POST", "/campaigns", json=body)
    click.echo(f"campaign {job['id']} ({job['n_points']} points) -> {job['out_dir']}")
    while job["state"] not in ("ok", "failed"):
        time.sleep(0.5)
        job = c.call("GET", f"/campaigns/{job['id']}")
    if job.get("error"):
        click.echo(f"failed: {job['error']}", err=True)
        ctx.exit(EXIT_ERROR)
    for p in job["points"]:
        s = p["summary"]
        extra = "" if p["status"] == "ok" else f"  {p['error']}"
        click.echo(f"{p['label']:<28} {p['status']:<7} peak_J={_fmt(s.get('peak_J'), 0)} "
                   f"crack={_fmt(s.get('final_crack_length'), 0)}{extra}")
    ctx.exit(job["exit_code"])


@campaign.command("compare")
@click.argument("a", type=click.Path(exists=True))
@click.argument("b", type=click.Path(exists=True))
@click.option("--csv", "csv_out", type=click.Path(dir_okay=False), default=None, help="Plot-ready CSV output.")
@click.option("--min-jump", type=float, default=None, help="Crack jump threshold (default 2 ell).")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def campaign_compare(ctx, a, b, csv_out, min_jump, as_json):
    """Compare two run directories: peak J, crack jumps, energies."""
    body = {"a": str(Path(a).resolve()), "b": str(Path(b).resolve()), "min_jump": min_jump,
            "csv_out": str(Path(csv_out).resolve()) if csv_out else None}
    rep = _client(ctx).call("POST", "/compare", json=body)
    if as_json:
        click.echo(json.dumps(rep, indent=2))
        return
    keys = ("steps", "peak_J", "final_crack_length", "n_jumps", "mean_jump", "max_increment", "final_total_energy")
    click.echo(f"{'':<20}{'A':>14}{'B':>14}")
    for k in keys:
        click.echo(f"{k:<20}{_fmt(rep['A'].get(k), 14)}{_fmt(rep['B'].get(k), 14)}")
    click.echo(f"peak J relative difference: {rep['peak_J_rel_diff']:.4g}")
    if rep.get("csv"):
        click.echo(f"csv: {rep['csv']}")


# ---------------------------------------------------------------------------
# server
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.pass_context
def serve(ctx, host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ctx.find_root().obj.get("workdir")), host=host, port=port)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--no-deterministic" not in argv:
        pin_threads()
    try:
        rc = cli.main(args=argv, prog_name="ductile-pf", standalone_mode=False)
    except click.exceptions.Exit as exc:
        rc = exc.exit_code
    except click.ClickException as exc:
        exc.show()
        rc = exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        rc = 130
    sys.exit(rc or 0)


if __name__ == "__main__":
    main()
