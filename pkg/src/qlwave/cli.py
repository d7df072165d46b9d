"""Configuration-driven experiment runner.

Usage::

    qlwave run config.yaml --out results/
    qlwave sweep config.yaml --axis eps --values 1e-3 5e-4 2.5e-4
    qlwave audit config.yaml

Exit codes: 0 success, 2 invalid configuration, 3 solver abort, 4 I/O failure.
"""

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .errors import DomainError, SolverAbort
from .geometry import tortoise_of_r
from .multiplier import default_spec, positivity_audit
from .norms import ModeData, SpacetimeRegion, energy_evaluate, norm_evaluate, weighted_sup
from .perturbation import SphericalProfile
from .solver import (
    EvolutionConfig,
    Grid1D,
    ModeState,
    QuasilinearState,
    energy_monotonicity,
    evolve_linear,
    evolve_quasilinear,
    exponent_fit,
    flat_space_oracle,
    gaussian_pulse,
    killing_energy,
)

log = logging.getLogger("qlwave")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 2, 3, 4
WORKER_ENV = "QLWAVE_MAX_WORKERS"


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Strict):
    rstar_min: float = -80.0
    rstar_max: float = 300.0
    h: float = Field(0.1, gt=0)
    n: Optional[int] = Field(None, ge=8)    # when set, overrides h

    @property
    def spacing(self):
        if self.n is not None:
            return (self.rstar_max - self.rstar_min) / (self.n - 1)
        return self.h


class EvolutionSpec(_Strict):
    cfl: float = Field(0.5, gt=0, le=0.9)
    scheme: Literal["leapfrog2", "mol_rk4_fd4"] = "leapfrog2"
    bc_left: Literal["sommerfeld", "reflecting"] = "sommerfeld"
    bc_right: Literal["sommerfeld", "reflecting"] = "sommerfeld"
    t_end: float = Field(200.0, gt=0)
    record_every: int = Field(10, ge=1)


class DataSpec(_Strict):
    ell: int = Field(0, ge=0)
    center: float = -5.0
    width: float = Field(1.5, gt=0)
    amplitude: float = 1.0


class ProfileSpec(_Strict):
    shape: Literal["photon_sphere", "far_field", "zero"] = "photon_sphere"
    c_tt: float = 1.0
    c_tr: float = 0.0
    c_rr: float = 1.0
    r0: float = 2.5
    r1: float = 3.5
    decay: float = 0.5


class NormRequest(_Strict):
    kind: Literal["LE", "LE1", "LEstar", "LE_S1", "LE_S_star", "LE_S_m"]
    t0: float = 0.0
    t1: Optional[float] = None
    r_min: float = 2.5
    m: float = 0.1
    R1: float = 20.0


class AuditSpec(_Strict):
    r_min: float = 1.9
    r_max: float = 100.0
    n: int = Field(10_000, ge=10)
    overrides: dict = Field(default_factory=dict)


class ExperimentConfig(_Strict):
    """Schema of an experiment file (YAML)."""

    kind: Literal["linear", "quasilinear", "flat_oracle", "audit", "norms_only"] = "linear"
    mass: float = Field(1.0, ge=0)
    grid: GridSpec = Field(default_factory=GridSpec)
    evolution: EvolutionSpec = Field(default_factory=EvolutionSpec)
    data: DataSpec = Field(default_factory=DataSpec)
    profile: ProfileSpec = Field(default_factory=ProfileSpec)
    eps: float = Field(1e-3, gt=0)
    r_qmin: float = 2.2
    delta: float = 0.1
    r_e: float = 1.9
    R1: float = 20.0
    norms: List[NormRequest] = Field(default_factory=list)
    weighted_sup_T: List[float] = Field(default_factory=list)
    fit_times: List[float] = Field(default_factory=lambda: [3.125 * 2 ** k for k in range(8)])
    refinement_levels: int = Field(3, ge=2)
    audit: AuditSpec = Field(default_factory=AuditSpec)
    out: str = "qlwave_out"

    def canonical(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def scaled(self, k):
        """The same experiment with grid spacing h/k (records at the same times)."""
        if k == 1:
            return self
        d = self.model_dump()
        if self.grid.n is not None:
            d["grid"]["n"] = int(round((self.grid.n - 1) * k)) + 1
        else:
            d["grid"]["h"] = self.grid.h / k
        d["evolution"]["record_every"] = int(round(self.evolution.record_every * k))
        return ExperimentConfig(**d)


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError("the configuration must be a mapping")
    return ExperimentConfig(**raw)


# ---------------------------------------------------------------------------
# report bundle
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(rows):
    if not rows:
        return ""
    cols = list(rows[0].keys())
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


class ReportBundle:
    """A directory of CSV tables plus manifest.json.

    The manifest is written first with status 'incomplete' and rewritten
    with status 'complete' (and table checksums) only after every table is
    on disk.
    """

    def __init__(self, out_dir, cfg):
        self.dir = Path(out_dir)
        self.cfg = cfg
        self.tables = {}
        self.summary = {}
        self.dir.mkdir(parents=True, exist_ok=True)
        self._write_manifest("incomplete")

    def add(self, name, rows, grid_meta):
        rows = [{**r, **grid_meta} for r in rows]
        text = _csv_text(rows)
        (self.dir / f"{name}.csv").write_text(text)
        self.tables[name] = hashlib.sha256(text.encode()).hexdigest()

    def _write_manifest(self, status, error=None):
        man = {
            "status": status,
            "version": __version__,
            "kind": self.cfg.kind,
            "config_sha256": self.cfg.digest(),
            "config": self.cfg.model_dump(mode="json"),
            "tables": self.tables,
            "summary": self.summary,
        }
        if error:
            man["error"] = error
        (self.dir / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True, default=float))

    def close(self, status="complete", error=None):
        self._write_manifest(status, error)


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def _grid(cfg, h=None, M=None):
    M = cfg.mass if M is None else M
    lo = cfg.grid.rstar_min if M > 0 else max(cfg.grid.rstar_min, 0.0)
    return Grid1D.with_spacing(lo, cfg.grid.rstar_max, h or cfg.grid.spacing, M)


def _evo(cfg, **kw):
    d = cfg.evolution.model_dump()
    d.update(kw)
    return EvolutionConfig(**d)


def _meta(h, dt):
    return {"h": h, "dt": dt}


def _norm_rows(cfg, data, meta):
    reqs = cfg.norms or [NormRequest(kind=k) for k in ("LE", "LE1", "LEstar", "LE_S1", "LE_S_star", "LE_S_m")]
    rows = []
    for q in reqs:
        t1 = data.t[-1] if q.t1 is None else q.t1
        reg = SpacetimeRegion.time_slab(q.t0, t1, r_lo=q.r_min, M=cfg.mass)
        rep = norm_evaluate(q.kind, data, reg, {"m": q.m, "R1": q.R1, "r_min": q.r_min})
        rows.append({"kind": q.kind, "region": reg.descriptor(), "value": rep.value})
    return rows


def _linear(cfg, bundle):
    g = _grid(cfg)
    ev = _evo(cfg)
    psi0 = cfg.data.amplitude * gaussian_pulse(g.nodes, cfg.data.center, cfg.data.width)
    if cfg.mass == 0:
        psi0[g.r_nodes <= 0] = 0.0
    arch = evolve_linear(cfg.mass, cfg.data.ell, g, ModeState(cfg.data.ell, psi0, np.zeros(g.n)), ev)
    meta = _meta(g.h, arch.dt)
    data = arch.to_mode_data(r_min=2.5 * cfg.mass if cfg.mass > 0 else None)
    ek = killing_energy(arch)
    rows = [{"t": t, "killing_energy": e, "slice_energy_r_ge_5M/2": energy_evaluate("slice", data, t)}
            for t, e in zip(arch.times, ek)]
    if arch.energy is not None:
        for row, e in zip(rows, arch.energy):
            row["discrete_energy"] = e
    bundle.add("energies", rows, meta)
    bundle.add("norms", _norm_rows(cfg, data, meta), meta)
    ws = []
    for T in cfg.weighted_sup_T:
        if 2 * T <= data.t[-1]:
            w = weighted_sup(data, T)
            ws.append({"T": T, "sup_u_weight": w["sup_u_weight"], "sup_du_weight": w["sup_du_weight"]})
            bundle.summary[f"sup_u_weight_T{T:g}"] = w["sup_u_weight"]
            bundle.summary[f"sup_du_weight_T{T:g}"] = w["sup_du_weight"]
    bundle.add("weighted_sup", ws, meta)
    bundle.summary.update({"final_killing_energy": float(ek[-1])})
    if arch.energy is not None:
        bundle.summary["energy_max_increase"] = energy_monotonicity(arch)


def _quasilinear(cfg, bundle):
    M = cfg.mass
    if M <= 0:
        raise DomainError("quasilinear runs need mass > 0")
    g = Grid1D.with_spacing(tortoise_of_r(M, cfg.r_qmin * M), cfg.grid.rstar_max, cfg.grid.spacing, M)
    ev = _evo(cfg, scheme="mol_rk4_fd4")
    u0 = cfg.data.amplitude * gaussian_pulse(g.nodes, cfg.data.center, cfg.data.width)
    lin = evolve_linear(M, 0, g, ModeState(0, u0 * g.r_nodes, np.zeros(g.n)), ev, form="u")
    prof = SphericalProfile(M, shape=cfg.profile.shape, c_tt=cfg.profile.c_tt, c_tr=cfg.profile.c_tr,
                            c_rr=cfg.profile.c_rr, r0=cfg.profile.r0, r1=cfg.profile.r1,
                            decay=cfg.profile.decay, eps=cfg.eps, delta=cfg.delta)
    q = evolve_quasilinear(M, g, QuasilinearState(cfg.eps * u0, np.zeros(g.n)), ev, prof)
    meta = _meta(g.h, q.dt)
    dl = lin.to_mode_data(r_min=2.5 * M, second=False)
    dq = q.to_mode_data(r_min=2.5 * M, second=False)
    rows = []
    for i, t in enumerate(q.times):
        el = energy_evaluate("slice", dl, t)
        eq = energy_evaluate("slice", dq, t) / cfg.eps ** 2
        rows.append({"t": t, "energy_linear": el, "energy_quasilinear_scaled": eq,
                     "ratio": eq / el if el > 0 else float("nan"), "hyperbolicity_margin": q.margin[i]})
    bundle.add("energies", rows, meta)
    ts = [t for t in cfg.fit_times if t <= q.times[-1]]
    ratio = [energy_evaluate("slice", dq, t) / cfg.eps ** 2 / energy_evaluate("slice", dl, t) for t in ts]
    fit = exponent_fit(ts, ratio)
    boot = exponent_fit(ts, ratio, "bootstrap", cfg.eps)
    bundle.add("exponent_fit", [{"eps": cfg.eps, "exponent": fit["exponent"], "exponent_over_eps": boot["exponent"],
                                 "residual": fit["residual"]}], meta)
    bundle.add("norms", _norm_rows(cfg, dq, meta), meta)
    bundle.summary.update({"exponent": fit["exponent"], "exponent_over_eps": boot["exponent"],
                           "min_hyperbolicity_margin": float(np.min(q.margin))})


def _flat_oracle(cfg, bundle):
    c, w = cfg.data.center, cfg.data.width
    if c - 4 * w <= 0:
        raise DomainError("flat oracle data must sit in r > 0")
    phi = lambda x: cfg.data.amplitude * gaussian_pulse(x, c, w)
    rows = []
    for k in range(cfg.refinement_levels):
        h = cfg.grid.spacing / 2 ** k
        g = _grid(cfg, h=h, M=0.0)
        ev = _evo(cfg, bc_left="reflecting", record_every=10 ** 9)
        psi0 = phi(g.nodes) * (g.nodes > 0)
        arch = evolve_linear(0.0, 0, g, ModeState(0, psi0, np.zeros(g.n)), ev)
        err = np.sqrt(g.h * np.sum((arch.values[-1] - flat_space_oracle(phi, arch.times[-1], g.nodes)) ** 2))
        row = {"level": k, "n": g.n, "l2_error": err, "h": g.h, "dt": arch.dt}
        if rows:
            row["observed_order"] = np.log2(rows[-1]["l2_error"] / err) if err > 0 else float("inf")
        rows.append(row)
    bundle.add("convergence", rows, {"scheme": cfg.evolution.scheme})
    orders = [r["observed_order"] for r in rows[1:]]
    bundle.summary.update({"l2_error": rows[-1]["l2_error"], "h": rows[-1]["h"],
                           "observed_order": float(min(orders))})


def _audit(cfg, bundle):
    spec = default_spec(cfg.mass or 1.0, **cfg.audit.overrides)
    M = spec.M
    r = np.linspace(cfg.audit.r_min * M, cfg.audit.r_max * M, cfg.audit.n)
    rep = positivity_audit(spec, r)
    bundle.add("audit", rep.rows, {"n": cfg.audit.n, "h": float(r[1] - r[0])})
    bundle.summary.update({"min_relative_eigenvalue": rep.min_relative_eigenvalue, "worst_r": rep.worst_r,
                           "positive": bool(rep.positive)})


def _norms_only(cfg, bundle):
    """Norms of the outgoing analytic field u = A phi(r* - t)/r on the grid."""
    g = _grid(cfg)
    t = np.arange(0.0, cfg.evolution.t_end + 1e-12, cfg.evolution.cfl * g.h * cfg.evolution.record_every)
    keep = g.r_nodes >= (2.5 * cfg.mass if cfg.mass > 0 else g.h)
    r, rs = g.r_nodes[keep], g.nodes[keep]
    F = 1 - 2 * cfg.mass / r
    A, c, w = cfg.data.amplitude, cfg.data.center, cfg.data.width
    x = rs[None, :] - t[:, None] - c
    p = A * np.exp(-(x / w) ** 2)
    p1 = -2 * x / w ** 2 * p
    data = ModeData(t, r, p / r, ut=-p1 / r, ur=(p1 / F - p / r) / r, ell=cfg.data.ell, M=cfg.mass)
    meta = _meta(g.h, float(t[1] - t[0]) if t.size > 1 else 0.0)
    bundle.add("norms", _norm_rows(cfg, data, meta), meta)


PIPELINES = {
    "linear": _linear,
    "quasilinear": _quasilinear,
    "flat_oracle": _flat_oracle,
    "audit": _audit,
    "norms_only": _norms_only,
}


def execute(cfg, out_dir):
    """Run one validated configuration into ``out_dir``; returns (exit code, summary)."""
    try:
        bundle = ReportBundle(out_dir, cfg)
    except OSError as exc:
        log.error("cannot write to %s: %s", out_dir, exc)
        return EXIT_IO, {}
    try:
        PIPELINES[cfg.kind](cfg, bundle)
    except SolverAbort as exc:
        try:
            bundle.add("abort", [{"error": type(exc).__name__, "message": str(exc), "t": exc.t}], {})
            bundle.close("aborted", str(exc))
        except OSError:
            pass
        log.error("solver abort: %s", exc)
        return EXIT_ABORT, {"error": str(exc)}
    except DomainError as exc:
        bundle.close("invalid", str(exc))
        log.error("invalid experiment: %s", exc)
        return EXIT_CONFIG, {"error": str(exc)}
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO, {"error": str(exc)}
    bundle.close()
    return EXIT_OK, bundle.summary


def run_experiment(config_path, out=None, resolution_scale=1.0, kind=None):
    """Load, validate and run one configuration file; returns the exit status."""
    try:
        cfg = load_config(config_path)
        if kind is not None:
            cfg = cfg.model_copy(update={"kind": kind})
        cfg = cfg.scaled(resolution_scale)
    except OSError as exc:
        log.error("cannot read %s: %s", config_path, exc)
        return EXIT_IO
    except (ValidationError, ValueError, yaml.YAMLError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    code, _ = execute(cfg, out or cfg.out)
    return code


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _set_path(d, path, value):
    keys = path.split(".")
    node = d
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ValueError(f"axis {path!r} does not address a config field")
        node = node[k]
    if keys[-1] not in node or isinstance(node[keys[-1]], (dict, list)):
        raise ValueError(f"axis {path!r} does not address a scalar config field")
    node[keys[-1]] = value


def _sweep_task(args):
    cfg_dict, out_dir = args
    logging.basicConfig(level=logging.WARNING)
    cfg = ExperimentConfig(**cfg_dict)
    return execute(cfg, out_dir)


def worker_count(threads=None):
    cap = os.environ.get(WORKER_ENV)
    n = threads or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def sweep(config_path, axis, values, out=None, threads=None, resolution_scale=1.0):
    """Run the base configuration once per axis value and aggregate summaries."""
    try:
        base = load_config(config_path).scaled(resolution_scale)
        out_root = Path(out or base.out)
        jobs = []
        for v in values:
            d = copy.deepcopy(base.model_dump())
            _set_path(d, axis, v)
            ExperimentConfig(**d)
            jobs.append((d, str(out_root / f"{axis}={v}")))
    except OSError as exc:
        log.error("cannot read %s: %s", config_path, exc)
        return EXIT_IO
    except (ValidationError, ValueError, yaml.YAMLError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    n = worker_count(threads)
    if n == 1 or len(jobs) == 1:
        results = [_sweep_task(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
            results = list(pool.map(_sweep_task, jobs))
    rows = []
    for v, (code, summary) in zip(values, results):
        rows.append({axis: v, "exit_code": code, **{k: s for k, s in summary.items() if np.isscalar(s)}})
    if axis in ("grid.h", "grid.n") and all("l2_error" in r for r in rows) and len(rows) > 1:
        for a, b in zip(rows[:-1], rows[1:]):
            b["observed_order"] = np.log(a["l2_error"] / b["l2_error"]) / np.log(a["h"] / b["h"])
    if base.kind == "quasilinear" and axis == "eps":
        for r in rows:
            if "exponent" in r:
                r["exponent_over_eps"] = r["exponent"] / r["eps"]
    try:
        out_root.mkdir(parents=True, exist_ok=True)
        (out_root / "sweep.csv").write_text(_csv_text(rows))
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    codes = [c for c, _ in results]
    return max(codes) if any(codes) else EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _axis_value(text):
    """Parse one sweep value; '1e-3' is a float even though YAML reads it as text."""
    v = yaml.safe_load(text)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="qlwave", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker processes for sweeps")
    common.add_argument("--resolution-scale", type=float, default=1.0, help="divide grid spacing by this factor")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("run", parents=[common], help="run one experiment")
    sw = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    sw.add_argument("--axis", required=True, help="dotted config path, e.g. eps or grid.h")
    sw.add_argument("--values", nargs="+", required=True, type=_axis_value)
    sub.add_parser("audit", parents=[common], help="multiplier positivity audit")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep":
        return sweep(args.config, args.axis, args.values, args.out, args.threads, args.resolution_scale)
    kind = "audit" if args.command == "audit" else None
    return run_experiment(args.config, args.out, args.resolution_scale, kind)


if __name__ == "__main__":
    sys.exit(main())
