"""FastAPI service wrapping the simulation core.

Runs and campaigns are queued on a single background worker (one
simulation at a time; campaigns fan out to their own process pool).
Inspection endpoints read run directories on the server's filesystem.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException

from ..campaigns import PRESETS, campaign_exit_code, compare, preset, run_campaign
from ..config import SimulationConfig, load_config
from ..driver import Simulation, StepFailure
from ..postproc import LEDGER_COLUMNS
from .. import rundir
from .schemas import (
    CampaignRequest,
    CampaignStatus,
    CompareRequest,
    KFitRequest,
    KFitResponse,
    LedgerResponse,
    PointStatus,
    PresetInfo,
    RunDirRequest,
    RunRequest,
    RunStatus,
    SnapshotRequest,
    SnapshotResponse,
)

log = logging.getLogger(__name__)


def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", s).strip("_") or "run"


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _finite(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


class JobStore:
    def __init__(self, workdir: Path):
        self.workdir = workdir
        self.pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix="ductile-pf")
        self.lock = threading.Lock()
        self.runs: dict[str, RunStatus] = {}
        self.campaigns: dict[str, CampaignStatus] = {}
        self._ids = itertools.count(1)

    def new_id(self, prefix: str) -> str:
        return f"{prefix}{next(self._ids)}"

    def update_run(self, job_id: str, **fields):
        with self.lock:
            self.runs[job_id] = self.runs[job_id].model_copy(update=fields)

    def update_campaign(self, job_id: str, **fields):
        with self.lock:
            self.campaigns[job_id] = self.campaigns[job_id].model_copy(update=fields)


def _build_config(req: RunRequest) -> SimulationConfig:
    if (req.config is None) == (req.config_path is None):
        raise ValueError("give exactly one of 'config' and 'config_path'")
    cfg = load_config(req.config_path) if req.config_path else SimulationConfig.from_dict(req.config)
    if req.scheme is not None:
        cfg = cfg.replace(solver=dataclasses.replace(cfg.solver, scheme=req.scheme))
    out = cfg.output
    if req.snapshot_every is not None:
        out = dataclasses.replace(out, snapshot_every=req.snapshot_every)
    if req.deterministic is not None:
        out = dataclasses.replace(out, deterministic=req.deterministic)
    return cfg.replace(output=out)


def create_app(workdir=None) -> FastAPI:
    """Application factory; ``workdir`` hosts default output directories."""
    store = JobStore(Path(workdir) if workdir is not None else Path.cwd() / "ductile_pf_runs")
    app = FastAPI(title="ductile-pf", version="0.1.0")
    app.state.store = store

    # -- runs ---------------------------------------------------------------

    def execute_run(job_id: str, cfg: SimulationConfig, out_dir: str):
        store.update_run(job_id, state="running")

        def progress(sim):
            row = dataclasses.asdict(sim.ledger[-1])
            store.update_run(job_id, step=sim.state.step, last_row=_finite(row))

        try:
            Simulation(cfg).run(out_dir, on_step=progress)
        except StepFailure as exc:
            store.update_run(job_id, state="failed", error=str(exc), failed_step=exc.step)
            return
        except Exception as exc:
            log.exception("run %s failed", job_id)
            store.update_run(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")
            return
        store.update_run(job_id, state="ok")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/runs", response_model=RunStatus, status_code=202)
    def submit_run(req: RunRequest):
        try:
            cfg = _build_config(req)
        except (ValueError, TypeError, KeyError, OSError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        job_id = store.new_id("r")
        out_dir = req.out_dir or str(store.workdir / f"{_slug(cfg.name)}-{job_id}")
        status = RunStatus(id=job_id, state="queued", name=cfg.name, out_dir=out_dir,
                           n_steps=cfg.load.n_steps + 1)
        with store.lock:
            store.runs[job_id] = status
        store.pool.submit(execute_run, job_id, cfg, out_dir)
        return status

    @app.get("/runs/{job_id}", response_model=RunStatus)
    def run_status(job_id: str):
        if job_id not in store.runs:
            raise HTTPException(status_code=404, detail=f"no run {job_id}")
        return store.runs[job_id]

    @app.get("/runs", response_model=list[RunStatus])
    def list_runs():
        return list(store.runs.values())

    # -- campaigns ----------------------------------------------------------

    @app.get("/presets", response_model=list[PresetInfo])
    def presets():
        out = []
        for name in PRESETS:
            c = preset(name)
            labels = [label for label, _ in c.configs()]
            out.append(PresetInfo(name=name, description=c.description, n_points=len(labels), points=labels))
        return out

    def execute_campaign(job_id: str, req: CampaignRequest, out_dir: str):
        store.update_campaign(job_id, state="running")
        try:
            results = run_campaign(preset(req.name), out_dir, jobs=req.jobs, scale=req.scale)
        except Exception as exc:
            log.exception("campaign %s failed", job_id)
            store.update_campaign(job_id, state="failed", error=f"{type(exc).__name__}: {exc}", exit_code=1)
            return
        pts = [PointStatus(label=r.label, status=r.status, out_dir=r.out_dir, error=r.error,
                           summary=_finite(r.summary)) for r in results]
        code = campaign_exit_code(results)
        store.update_campaign(job_id, state="ok" if code == 0 else "failed", points=pts, exit_code=code)

    @app.post("/campaigns", response_model=CampaignStatus, status_code=202)
    def submit_campaign(req: CampaignRequest):
        try:
            camp = preset(req.name)
            n = len(camp.configs(req.scale))
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc).strip("'\"")) from exc
        job_id = store.new_id("c")
        out_dir = req.out_dir or str(store.workdir / f"{_slug(req.name)}-{job_id}")
        status = CampaignStatus(id=job_id, state="queued", name=req.name, out_dir=out_dir, n_points=n)
        with store.lock:
            store.campaigns[job_id] = status
        store.pool.submit(execute_campaign, job_id, req, out_dir)
        return status

    @app.get("/campaigns/{job_id}", response_model=CampaignStatus)
    def campaign_status(job_id: str):
        if job_id not in store.campaigns:
            raise HTTPException(status_code=404, detail=f"no campaign {job_id}")
        return store.campaigns[job_id]

    @app.post("/compare")
    def compare_runs(req: CompareRequest):
        try:
            return compare(req.a, req.b, csv_out=req.csv_out, min_jump=req.min_jump)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    # -- inspection ---------------------------------------------------------

    def _inspect(fn, *args):
        try:
            return fn(*args)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/inspect/ledger", response_model=LedgerResponse)
    def ledger(req: RunDirRequest):
        led = _inspect(rundir.read_ledger, req.run_dir)
        # JSON has no NaN: undefined cells (k of surfing runs) are sent as null
        rows = [[_num(getattr(r, c)) for c in LEDGER_COLUMNS] for r in led]
        return LedgerResponse(run_dir=req.run_dir, columns=LEDGER_COLUMNS, rows=rows)

    @app.post("/inspect/snapshot", response_model=SnapshotResponse)
    def snapshot(req: SnapshotRequest):
        avail = _inspect(rundir.list_snapshots, req.run_dir)
        if not avail:
            raise HTTPException(status_code=404, detail=f"no snapshots in {req.run_dir}")
        info = _inspect(rundir.snapshot_summary, req.run_dir, req.step)
        return SnapshotResponse(run_dir=req.run_dir, **info)

    @app.post("/inspect/kfit", response_model=KFitResponse)
    def kfit(req: KFitRequest):
        info = _inspect(rundir.kfit, req.run_dir, req.step, req.window)
        return KFitResponse(run_dir=req.run_dir, **_finite(info))

    return app
