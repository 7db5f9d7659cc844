"""Seeded replication loops over the simulation designs.

Each replicate draws a dataset, fits OverGFM and the principal-components
linear factor model, and records the trace statistics. Rows are appended
to a CSV and flushed one replicate at a time, so an interrupted run keeps
everything finished so far.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import FitConfig, validate
from .driver import fit
from .metrics import fit_lfm, trace_statistic, trace_statistic_upsilon
from .selectq import DEFAULT_Q_MAX, select_num_factors
from .simulate import generate_dataset, scenario1, scenario7, scenario8

log = logging.getLogger(__name__)

SCENARIOS = ("1", "2", "3", "4", "8", "timing")

FIELDS = (
    "scenario", "setting", "n", "p", "sigma2", "method", "replicate", "seed",
    "tr_h", "tr_gamma", "q_hat", "hit", "iterations", "converged", "seconds", "seconds_per_iter",
)
METRICS = ("tr_h", "tr_gamma", "q_hat", "hit", "iterations", "seconds", "seconds_per_iter")


@dataclass(frozen=True)
class Setting:
    label: str
    make_spec: Callable  # seed -> SimSpec
    kind: str = "accuracy"  # "accuracy", "select" or "timing"


def replicate_seed(seed: int, setting_index: int, replicate: int) -> int:
    """Independent integer seed per (setting, replicate)."""
    ss = np.random.SeedSequence([int(seed), int(setting_index), int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def settings_for(scenario: str, sizes=None) -> list:
    scenario = str(scenario)
    if scenario == "1":
        return [Setting(f"sigma2={s}", lambda sd, s=s: scenario1(sigma2=s, seed=sd)) for s in (0.3, 0.5, 0.7)]
    if scenario == "2":
        out = [Setting(f"n={n},p=500", lambda sd, n=n: scenario1(sigma2=0.7, n=n, p=500, seed=sd))
               for n in (300, 500, 700)]
        out += [Setting(f"n=500,p={p}", lambda sd, p=p: scenario1(sigma2=0.7, n=500, p=p, seed=sd))
                for p in (300, 400, 500)]
        return out
    if scenario == "3":
        return [Setting(f"c={c}", lambda sd, c=c: scenario1(sigma2=0.7, c=c, seed=sd)) for c in (0.75, 1, 1.5, 2)]
    if scenario == "4":
        out = []
        for s in (0.1, 1, 3, 5):
            out.append(Setting(f"case1,sigma2={s}",
                               lambda sd, s=s: scenario1(sigma2=s, n=300, p=300, seed=sd), "select"))
        for s in (0.1, 1, 3, 5):
            out.append(Setting(f"case2,sigma2={s}",
                               lambda sd, s=s: scenario7("poisson+binary", sigma2=s, seed=sd), "select"))
        return out
    if scenario == "8":
        return [Setting(f"{case},sigma2={s}", lambda sd, c=case, s=s: scenario8(c, sigma2=s, seed=sd))
                for case in ("gaussian", "poisson") for s in (0, 1)]
    if scenario == "timing":
        grid = tuple(sizes) if sizes else (500, 1000, 2000)
        out = [Setting(f"n={n},p=500", lambda sd, n=n: scenario1(sigma2=0.7, n=n, p=500, seed=sd), "timing")
               for n in grid]
        out += [Setting(f"n=500,p={p}", lambda sd, p=p: scenario1(sigma2=0.7, n=500, p=p, seed=sd), "timing")
                for p in grid]
        return out
    raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")


def _row(scenario, st, spec, method, r, seed, **vals):
    row = dict(scenario=scenario, setting=st.label, n=spec.n, p=spec.p, sigma2=spec.sigma2,
               method=method, replicate=r, seed=seed)
    row.update(vals)
    return row


def run_replicate(scenario: str, st: Setting, r: int, seed: int, fit_kwargs=None) -> list:
    fit_kwargs = dict(fit_kwargs or {})
    spec = st.make_spec(seed)
    sim = generate_dataset(spec)
    ds = validate(sim.data, sim.schema)
    rows = []
    if st.kind == "select":
        t0 = time.perf_counter()
        rep = select_num_factors(ds, q_max=DEFAULT_Q_MAX, **fit_kwargs)
        secs = time.perf_counter() - t0
        rows.append(_row(scenario, st, spec, "OverGFM-SVR", r, seed, q_hat=rep.q_hat,
                         hit=int(rep.q_hat == spec.q), seconds=secs))
        return rows

    res = fit(ds, config=FitConfig(q=spec.q, **fit_kwargs))
    d = res.diagnostics
    vals = dict(iterations=res.iterations, converged=int(res.converged),
                seconds=d["seconds"], seconds_per_iter=d["seconds_per_iter"])
    if st.kind != "timing":
        vals["tr_h"] = trace_statistic(res.params.H, sim.H0)
        vals["tr_gamma"] = trace_statistic_upsilon(res.params.B, res.params.mu, sim.B0, sim.mu0)
    rows.append(_row(scenario, st, spec, "OverGFM", r, seed, **vals))
    if st.kind != "timing":
        t0 = time.perf_counter()
        H, B, mu = fit_lfm(ds.X, spec.q)
        rows.append(_row(scenario, st, spec, "LFM", r, seed,
                         tr_h=trace_statistic(H, sim.H0),
                         tr_gamma=trace_statistic_upsilon(B, mu, sim.B0, sim.mu0),
                         seconds=time.perf_counter() - t0))
    return rows


def summarize(rows) -> list:
    """Mean and standard deviation (ddof=1) of each metric per setting and method."""
    groups = {}
    for row in rows:
        groups.setdefault((row["setting"], row["method"]), []).append(row)
    out = []
    for (setting, method), rs in groups.items():
        s = dict(setting=setting, method=method, n=rs[0]["n"], p=rs[0]["p"],
                 sigma2=rs[0]["sigma2"], replicates=len(rs))
        for m in METRICS:
            v = np.array([float(x[m]) for x in rs if x.get(m, "") not in ("", None)])
            if v.size:
                s[f"{m}_mean"] = float(v.mean())
                s[f"{m}_sd"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
        out.append(s)
    return out


def run_benchmark(scenario, replicates: int = 20, seed: int = 0, out_dir=None, sizes=None,
                  fit_kwargs=None, progress=None) -> tuple:
    """Run every setting of ``scenario``; returns ``(rows, summary)``.

    With ``out_dir`` the replicate rows go to ``replicates.csv`` as they
    finish.
    """
    scenario = str(scenario)
    settings = settings_for(scenario, sizes)
    rows = []
    fh = writer = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        fh = open(Path(out_dir) / "replicates.csv", "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=FIELDS, lineterminator="\n")
        writer.writeheader()
        fh.flush()
    try:
        for si, st in enumerate(settings):
            for r in range(replicates):
                rs = run_replicate(scenario, st, r, replicate_seed(seed, si, r), fit_kwargs)
                rows.extend(rs)
                if writer is not None:
                    for row in rs:
                        writer.writerow({k: row.get(k, "") for k in FIELDS})
                    fh.flush()
                if progress is not None:
                    progress(st, r, rs)
                log.info("scenario %s %s replicate %d done", scenario, st.label, r)
    finally:
        if fh is not None:
            fh.close()
    return rows, summarize(rows)
