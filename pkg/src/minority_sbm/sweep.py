"""Phase-diagram sweeps over (rho, delta) grids.

Work is split into (cell, replicate, method) tasks.  Each finished task is
written to ``out_dir/cells`` as its own JSON file (write-then-rename), so an
interrupted sweep resumes where it stopped.  Aggregation reads the task files
back in sorted key order, which makes ``results.csv`` independent of the
number of workers and of scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .errors import InfeasibleParameters, MinoritySBMError
from .graphgen import Partition, sample_consistent_degree, sample_direct, sample_via_background
from .metrics import ami, confusion_matrix
from .theory import MinorityModel, Scenario, closed_form_spectrum, feasible_delta_range

__all__ = [
    "METHODS",
    "Method",
    "detect",
    "SweepSpec",
    "PRESETS",
    "preset",
    "linear_grid",
    "run_replicate",
    "run_cell",
    "run_grid",
    "SweepResult",
    "theory_overlays",
    "graph_seed",
    "method_seed",
]

# stable ids feed the seed derivation, so never renumber them
METHODS = {"bh+nec": 0, "bh+mfe": 1, "bh+mdl": 2, "bp+nec": 3, "bp+mfe": 4, "bp+mdl": 5}
PROBE_ROW = 2**31 - 1
CURVES = (("SNR", 2), ("lambda3", 3), ("lambda4", 4))


@dataclass(frozen=True)
class Method:
    detector: str
    order: str

    @classmethod
    def parse(cls, text):
        key = text.strip().lower().replace("-", "+").replace(":", "+")
        if key not in METHODS:
            raise ValueError(f"unknown method {text!r}; choose from {', '.join(METHODS)}")
        d, o = key.split("+")
        return cls(d, o)

    @property
    def key(self):
        return f"{self.detector}+{self.order}"

    @property
    def id(self):
        return METHODS[self.key]


def _nec_count(graph):
    from .spectral import bethe_hessian, negative_count
    eta = float(np.sqrt(graph.mean_degree()))
    return max(negative_count(bethe_hessian(graph, eta)) + negative_count(bethe_hessian(graph, -eta)), 1)


def _fixed_q(graph, detector, q, seed, t):
    if q == 1:
        return Partition(np.zeros(graph.n, dtype=np.int64), 1)
    if detector == "bh":
        from .spectral import bh_partition_at
        return bh_partition_at(graph, q, seed)
    from .bp import em_fit
    state, _ = em_fit(graph, q, t, seed)
    return state.partition()


def detect(graph, method, seed, q_max=6, t=5):
    """Run one detector / order-selection pair.  Returns ``(partition, q,
    diagnostics)``."""
    m = method if isinstance(method, Method) else Method.parse(method)
    if m.key == "bh+nec":
        from .spectral import detect_bh
        part, diag = detect_bh(graph, seed)
        return part, diag.q, diag.to_dict()
    if m.key == "bp+mfe":
        from .bp import detect_bp
        part, diag = detect_bp(graph, q_max, t, seed)
        return part, diag.q, diag.to_dict()
    if m.order == "nec":
        q = _nec_count(graph)
        return _fixed_q(graph, m.detector, q, seed, t), q, {"q": q}
    if m.order == "mfe":
        from .bp import mfe_select
        q, trace = mfe_select(graph, q_max, t, seed)
        return _fixed_q(graph, m.detector, q, seed, t), q, {"q": q, "trace": trace.to_dict()}
    from .mdl import mdl_select
    cands = {q: _fixed_q(graph, m.detector, q, seed, t) for q in range(1, q_max + 1)}
    res = mdl_select(graph, cands)
    return cands[res.q], res.q, res.to_dict()


def linear_grid(lo, hi, k):
    return tuple(float(x) for x in np.linspace(lo, hi, k))


@dataclass(frozen=True)
class SweepSpec:
    n: int
    q_s: int
    q_b: int
    d: float
    rhos: tuple
    deltas: tuple
    replicates: int = 10
    methods: tuple = ("bh+nec",)
    master_seed: int = 0
    scenario: str = Scenario.CONSISTENT_POUT.value
    sampler: str = "direct"
    q_max: int = 6
    bp_restarts: int = 5
    probes: tuple = ()
    name: str = "custom"
    approximate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))
        object.__setattr__(self, "deltas", tuple(float(x) for x in self.deltas))
        object.__setattr__(self, "methods", tuple(Method.parse(m).key for m in self.methods))
        object.__setattr__(self, "probes", tuple((float(r), float(x)) for r, x in self.probes))
        object.__setattr__(self, "scenario", Scenario(self.scenario).value)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.rhos or not self.deltas:
            raise ValueError("empty grid")
        if not self.methods:
            raise ValueError("no methods")
        if self.sampler not in ("direct", "background"):
            raise ValueError("sampler must be 'direct' or 'background'")

    def model(self, rho, delta):
        """Model at (rho, delta); raises InfeasibleParameters off the band."""
        return MinorityModel(self.n, self.q_s, self.q_b, rho, delta, self.d, self.scenario)

    def valid(self, rho, delta):
        try:
            self.model(rho, delta)
        except InfeasibleParameters:
            return False
        return True

    def cells(self):
        return [(i, j) for i in range(len(self.rhos)) for j in range(len(self.deltas))]

    def point(self, i, j):
        if i == PROBE_ROW:
            return self.probes[j]
        return self.rhos[i], self.deltas[j]

    def to_dict(self):
        d = asdict(self)
        d["rhos"] = list(self.rhos)
        d["deltas"] = list(self.deltas)
        d["methods"] = list(self.methods)
        d["probes"] = [list(p) for p in self.probes]
        return d

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def with_(self, **changes):
        return replace(self, **changes)


def _scaled(n, n_delta):
    return tuple(float(x) / n for x in n_delta)


def preset(name, scale="desk"):
    """Named phase-diagram grids.

    ``scale="desk"`` gives n=3000, 10 replicates and a 15x15 grid;
    ``scale="full"`` gives n=6000, 50 replicates and a 30x30 grid.  The
    delta axis is set in units of ``n * delta`` (the spectrum depends on
    ``n`` and ``delta`` only through that product), and probe points given at
    n=6000 are rescaled the same way.
    """
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    if scale not in ("desk", "full"):
        raise ValueError("scale must be 'desk' or 'full'")
    base = PRESETS[name]
    n, reps, k = (3000, 10, 15) if scale == "desk" else (6000, 50, 30)
    rho_lo, rho_hi = base["rho"]
    nd_lo, nd_hi = base["n_delta"]
    probes = tuple((r, x * 6000 / n) for r, x in base.get("probes", ()))
    return SweepSpec(
        n=n, q_s=base["q_s"], q_b=base["q_b"], d=5.0,
        rhos=linear_grid(rho_lo, rho_hi, k),
        deltas=_scaled(n, np.linspace(nd_lo, nd_hi, k)),
        replicates=reps, methods=base["methods"], scenario=base.get("scenario", "consistent_pout"),
        probes=probes, name=f"{name}-{scale}", approximate=True,
    )


PRESETS = {
    "fig2": dict(q_s=1, q_b=1, rho=(0.02, 0.48), n_delta=(0.5, 15.0), methods=("bh+nec",)),
    "fig3": dict(q_s=1, q_b=2, rho=(0.02, 0.64), n_delta=(0.5, 15.0), methods=("bh+nec",),
                 probes=((0.17, 0.0014), (0.32, 0.0014))),
    "fig4": dict(q_s=2, q_b=1, rho=(0.02, 0.64), n_delta=(0.5, 15.0), methods=("bh+nec",),
                 probes=((0.5, 0.0014), (0.65, 0.0014))),
    "fig5": dict(q_s=2, q_b=2, rho=(0.02, 0.48), n_delta=(0.5, 15.0), methods=("bh+nec",),
                 probes=((0.25, 0.0019), (0.39, 0.0019), (0.44, 0.0019))),
    "fig7": dict(q_s=2, q_b=2, rho=(0.02, 0.48), n_delta=(0.5, 15.0), methods=tuple(METHODS)),
    "fig8": dict(q_s=2, q_b=3, rho=(0.02, 0.38), n_delta=(0.5, 15.0), scenario="consistent_degree",
                 methods=("bh+nec", "bp+mfe"), probes=((0.24, 0.0022),)),
}


def graph_seed(spec, i, j, rep):
    """Graphs depend on the cell and replicate only, so every method in a
    sweep sees the same graphs."""
    return (spec.master_seed, i, j, rep)


def method_seed(spec, i, j, rep, method):
    return (spec.master_seed, i, j, rep, Method.parse(method).id + 1)


def _sample(spec, model, seed):
    if spec.scenario == Scenario.CONSISTENT_DEGREE.value:
        return sample_consistent_degree(model, seed=seed)
    if spec.sampler == "background":
        return sample_via_background(model, seed=seed)
    return sample_direct(model, seed=seed)


def run_replicate(spec, i, j, rep, method, confusion=False):
    """One graph, one method.  Failures are caught and reported in the
    returned record rather than raised."""
    rho, delta = spec.point(i, j)
    rec = {"i": i, "j": j, "rep": rep, "method": Method.parse(method).key}
    try:
        model = spec.model(rho, delta)
        graph = _sample(spec, model, graph_seed(spec, i, j, rep))
        part, q, _ = detect(graph, method, method_seed(spec, i, j, rep, method),
                            q_max=spec.q_max, t=spec.bp_restarts)
        rec.update(q=int(q), ami=float(ami(graph.planted, part)), error=None)
        if confusion:
            rec["confusion"] = confusion_matrix(graph.planted, part).to_dict()
    except (MinoritySBMError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rec.update(q=None, ami=None, error=f"{type(exc).__name__}: {exc}")
    return rec


def _aggregate(spec, i, j, method, records):
    rho, delta = spec.point(i, j)
    row = {"method": method, "i_rho": i, "i_delta": j, "rho": rho, "delta": delta,
           "valid": spec.valid(rho, delta)}
    ok = [r for r in records if r["error"] is None]
    row["n_ok"] = len(ok)
    row["n_fail"] = len(records) - len(ok)
    if row["valid"] and ok:
        amis = np.array([r["ami"] for r in ok])
        qs = np.array([r["q"] for r in ok], dtype=float)
        row["mean_ami"] = float(amis.mean())
        row["std_ami"] = float(amis.std(ddof=1)) if amis.size > 1 else 0.0
        row["mean_q"] = float(qs.mean())
    else:
        row["mean_ami"] = row["std_ami"] = row["mean_q"] = None
    return row


def run_cell(spec, i, j, method):
    """Statistics of one grid cell for one method (serial, no checkpoint)."""
    rho, delta = spec.point(i, j)
    if not spec.valid(rho, delta):
        return _aggregate(spec, i, j, Method.parse(method).key, [])
    recs = [run_replicate(spec, i, j, r, method) for r in range(spec.replicates)]
    return _aggregate(spec, i, j, Method.parse(method).key, recs)


def _task_path(out, i, j, rep, method):
    tag = "probe" if i == PROBE_ROW else f"r{i:03d}"
    return out / "cells" / f"{tag}_d{j:03d}_k{rep:03d}_{method.replace('+', '-')}.json"


def _atomic_write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _check_cache(out, spec):
    """Refuse to mix task files from a sweep with different parameters.

    Method list, replicate count and name may change between runs; anything
    that alters a task's result may not.
    """
    key = {k: v for k, v in spec.to_dict().items()
           if k not in ("methods", "replicates", "name", "approximate")}
    path = out / "cells" / "_sweep.json"
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            old = json.load(fh)
        if old != json.loads(json.dumps(key)):
            diff = sorted(k for k in set(old) | set(key) if old.get(k) != key.get(k))
            raise ValueError(f"{out} holds tasks of a different sweep (differs in {', '.join(diff)})")
    else:
        _atomic_write(path, json.dumps(key, sort_keys=True))


def _do_task(args):
    spec_dict, out, i, j, rep, method = args
    spec = SweepSpec.from_dict(spec_dict)
    rec = run_replicate(spec, i, j, rep, method, confusion=i == PROBE_ROW)
    _atomic_write(_task_path(Path(out), i, j, rep, method), json.dumps(rec, sort_keys=True))
    return i, j, rep, method


def _tasks(spec):
    out = []
    for method in spec.methods:
        for i, j in spec.cells():
            if spec.valid(*spec.point(i, j)):
                out.extend((i, j, r, method) for r in range(spec.replicates))
        for k, (rho, delta) in enumerate(spec.probes):
            if spec.valid(rho, delta):
                out.extend((PROBE_ROW, k, r, method) for r in range(spec.replicates))
    return out


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list
    overlays: list
    probes: list = field(default_factory=list)

    def table(self, method):
        """``(len(rhos), len(deltas))`` arrays of mean q and mean AMI (NaN
        where masked)."""
        shape = (len(self.spec.rhos), len(self.spec.deltas))
        q, a = np.full(shape, np.nan), np.full(shape, np.nan)
        for r in self.rows:
            if r["method"] == method and r["mean_q"] is not None:
                q[r["i_rho"], r["i_delta"]] = r["mean_q"]
                a[r["i_rho"], r["i_delta"]] = r["mean_ami"]
        return q, a


RESULT_FIELDS = ("method", "i_rho", "i_delta", "rho", "delta", "valid",
                 "mean_ami", "std_ami", "mean_q", "n_ok", "n_fail")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in RESULT_FIELDS])
    return buf.getvalue()


def overlays_csv(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("curve", "delta", "rho"))
    for c, delta, rho in points:
        w.writerow((c, repr(float(delta)), repr(float(rho))))
    return buf.getvalue()


def _versions():
    import numba
    import scipy
    import sklearn
    return {"minority_sbm": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "numba": numba.__version__}


def run_grid(spec, out_dir=None, workers=1, progress=None, config=None):
    """Run every valid (cell, replicate, method) task and write the output
    file set to ``out_dir`` (results.csv, overlays.csv, probes/*.json,
    manifest.json).  Finished task files found in ``out_dir`` are reused.

    Without ``out_dir`` the sweep runs serially in memory.
    """
    tasks = _tasks(spec)
    records = {}
    if out_dir is None:
        for i, j, r, m in tasks:
            records[(i, j, r, m)] = run_replicate(spec, i, j, r, m, confusion=i == PROBE_ROW)
            if progress:
                progress(len(records), len(tasks))
    else:
        out = Path(out_dir)
        (out / "cells").mkdir(parents=True, exist_ok=True)
        _check_cache(out, spec)
        todo = [t for t in tasks if not _task_path(out, *t).exists()]
        done = len(tasks) - len(todo)
        payload = [(spec.to_dict(), str(out), *t) for t in todo]
        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for _ in pool.map(_do_task, payload, chunksize=1):
                    done += 1
                    if progress:
                        progress(done, len(tasks))
        else:
            for p in payload:
                _do_task(p)
                done += 1
                if progress:
                    progress(done, len(tasks))
        for t in tasks:
            with open(_task_path(out, *t), encoding="utf-8") as fh:
                records[t] = json.load(fh)
    return _finish(spec, records, out_dir, config)


def _finish(spec, records, out_dir, config):
    rows = []
    for method in spec.methods:
        for i, j in spec.cells():
            recs = [records[(i, j, r, method)] for r in range(spec.replicates)
                    if (i, j, r, method) in records]
            rows.append(_aggregate(spec, i, j, method, recs))
    probes = []
    for method in spec.methods:
        for k, (rho, delta) in enumerate(spec.probes):
            recs = [records[(PROBE_ROW, k, r, method)] for r in range(spec.replicates)
                    if (PROBE_ROW, k, r, method) in records]
            probes.append(_probe_summary(spec, k, method, recs))
    overlays = theory_overlays(spec)
    result = SweepResult(spec, rows, overlays, probes)
    if out_dir is not None:
        out = Path(out_dir)
        _atomic_write(out / "results.csv", results_csv(rows))
        _atomic_write(out / "overlays.csv", overlays_csv(overlays))
        for p in probes:
            name = f"probe{p['index']:02d}_{p['method'].replace('+', '-')}.json"
            _atomic_write(out / "probes" / name, json.dumps(p, sort_keys=True, indent=1))
        manifest = {"spec": spec.to_dict(), "master_seed": spec.master_seed,
                    "approximate": spec.approximate, "versions": _versions(),
                    "config": config or {}, "argv": None,
                    "files": ["results.csv", "overlays.csv", "probes/", "cells/"]}
        _atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1))
    return result


def _probe_summary(spec, k, method, recs):
    rho, delta = spec.probes[k]
    ok = [r for r in recs if r["error"] is None]
    summary = {"index": k, "method": method, "rho": rho, "delta": delta,
               "n_ok": len(ok), "n_fail": len(recs) - len(ok),
               "replicates": [{"rep": r["rep"], "q": r["q"], "ami": r["ami"],
                               "confusion": r.get("confusion")} for r in ok]}
    if ok:
        summary["mean_q"] = float(np.mean([r["q"] for r in ok]))
        summary["mean_ami"] = float(np.mean([r["ami"] for r in ok]))
        mats = [np.asarray(r["confusion"]["counts"]) for r in ok if r.get("confusion")]
        if mats:
            # detected q varies by replicate; pad matched columns with zeros
            width = max(m.shape[1] for m in mats)
            total = sum(np.pad(m, ((0, 0), (0, width - m.shape[1]))) for m in mats)
            summary["counts_sum"] = total.tolist()
    return summary


def _ratio(spec, rho, delta, k):
    try:
        rep = closed_form_spectrum(spec.model(rho, delta))
    except InfeasibleParameters:
        return None
    r = rep.ratio(k)
    return None if r is None else r - 1.0


def theory_overlays(spec, resolution=400):
    """Points ``(curve, delta, rho)`` where the ordinal ratio
    ``lambda_k^2 / lambda_1`` crosses one, for k = 2 (SNR), 3 and 4.

    For each delta on the grid, rho is scanned over ``(0, q_s/q)`` and every
    sign change between two feasible scan points is refined by Brent's
    method.  Roots whose re-evaluated residual exceeds 1e-10 are dropped.
    """
    q = spec.q_s + spec.q_b
    top = spec.q_s / q
    if spec.scenario == Scenario.CONSISTENT_DEGREE.value:
        top = min(top, 0.5)
    scan = np.linspace(0.0, top, resolution + 2)[1:-1]
    points = []
    for name, k in CURVES:
        for delta in spec.deltas:
            vals = [_ratio(spec, r, delta, k) for r in scan]
            for a, b, fa, fb in zip(scan[:-1], scan[1:], vals[:-1], vals[1:]):
                if fa is None or fb is None or fa == 0 or (fa > 0) == (fb > 0):
                    continue
                root = brentq(lambda r: _ratio(spec, r, delta, k), a, b,
                              xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                res = _ratio(spec, root, delta, k)
                if res is not None and abs(res) < 1e-10:
                    points.append((name, float(delta), float(root)))
    return points
