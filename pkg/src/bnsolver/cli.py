"""Batch front door: config parsing, sweep orchestration, reporting.

Config files are line-oriented `key = value` text with `[section]` headers
and `#` comments.  A run executes the requested searches on every
(lambda, mu) cell, isolates per-cell failures, and writes solution records
as JSON plus a sweep-level CSV; `report` post-processes a run directory
into plot-ready CSV tables.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import BNSolverError, ConfigurationError
from .functional import Params, fibering_profile
from .grid import (
    AnnulusD,
    Box,
    DomainSpec,
    build_domain,
    compute_spectral_data,
    dump_field,
    load_field,
)
from .lift import BumpOnBoundary, Constant, load_node_table, solve_lift
from .nehari import find_roots
from .solve import (
    ContinuationConfig,
    SeedKind,
    ground_state,
    minimax_gamma,
    minimize_on_Nminus,
    minimize_on_Nplus,
    multistart_Nminus,
    trace_existence_boundary,
)
from .verify import (
    certify_solution,
    convexity_ball_check,
    nonexistence_certificate,
    threshold_report,
)

THREADS_ENV = "BNSOLVER_THREADS"
KNOWN_SEARCHES = ("nplus", "nminus", "multistart", "minimax", "mu_star")


def _fmt(x) -> str:
    return repr(float(x))


# -- config ------------------------------------------------------------------


class ConfigFile:
    """Line-oriented `[section]` / `key = value` text, with line-anchored errors."""

    def __init__(self, path):
        self.path = str(path)
        self.sections = {}
        self.lines = {}
        section = None
        with open(path) as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.split("#")[0].strip()
                if not line:
                    continue
                if line.startswith("[") and line.endswith("]"):
                    section = line[1:-1].strip().lower()
                    self.sections.setdefault(section, {})
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"{self.path}:{lineno}: expected 'key = value'")
                if section is None:
                    raise ConfigurationError(f"{self.path}:{lineno}: key outside any [section]")
                key, val = (s.strip() for s in line.split("=", 1))
                self.sections[section][key.lower()] = val
                self.lines[(section, key.lower())] = lineno

    def error(self, section, key, msg):
        lineno = self.lines.get((section, key))
        anchor = f"{self.path}:{lineno}" if lineno else f"{self.path}:[{section}] {key}"
        return ConfigurationError(f"{anchor}: {msg}")

    def get(self, section, key, default=None, required=False):
        val = self.sections.get(section, {}).get(key, default)
        if required and val is None:
            raise ConfigurationError(f"{self.path}: missing [{section}] {key}")
        return val


def _parse_values(cfg, section, key, text, lambda1=None):
    """Number list; supports `linspace a b n` and `c*lambda1` entries."""
    toks = text.split()
    if toks and toks[0].lower() == "linspace":
        if len(toks) != 4:
            raise cfg.error(section, key, "linspace needs: linspace start stop count")
        a, b, n = float(toks[1]), float(toks[2]), int(toks[3])
        return [float(x) for x in np.linspace(a, b, n)]
    out = []
    for tok in toks:
        t = tok.lower().replace(" ", "")
        if t.endswith("*lambda1"):
            if lambda1 is None:
                raise cfg.error(section, key, "lambda1-relative value not allowed here")
            out.append(float(t[: -len("*lambda1")]) * lambda1)
        else:
            try:
                out.append(float(tok))
            except ValueError:
                raise cfg.error(section, key, f"not a number: {tok!r}") from None
    return out


@dataclass
class RunConfig:
    domain_spec: DomainSpec
    boundary: object
    lambdas_text: str
    mus_text: str
    searches: List[str]
    directions: int = 6
    epsilon: float = 0.2
    out_dir: str = "out"
    dump_fields: bool = False
    seed: int = 0
    budget_factor: float = 1.0
    mu_star_cells: int = 24
    cfg: Optional[ConfigFile] = dc_field(default=None, repr=False)


def parse_config(path) -> RunConfig:
    cfg = ConfigFile(path)

    shape_name = cfg.get("domain", "shape", required=True).lower()
    dim = int(cfg.get("domain", "dimension", required=True))
    res = int(cfg.get("domain", "resolution", required=True))
    if shape_name == "box":
        sides = [float(s) for s in cfg.get("domain", "sides", required=True).split()]
        shape = Box(tuple(sides))
    elif shape_name == "annulus":
        shape = AnnulusD(float(cfg.get("domain", "delta0", required=True)))
    else:
        raise cfg.error("domain", "shape", f"unknown shape {shape_name!r}")
    spec = DomainSpec(shape, dim, res)

    kind = cfg.get("boundary", "kind", "constant").lower()
    if kind == "constant":
        boundary = Constant(float(cfg.get("boundary", "value", "1.0")))
    elif kind == "bump":
        direction = tuple(float(x) for x in cfg.get("boundary", "direction", required=True).split())
        boundary = BumpOnBoundary(
            direction,
            float(cfg.get("boundary", "width", required=True)),
            float(cfg.get("boundary", "amplitude", "1.0")),
        )
    elif kind == "table":
        boundary = ("table", cfg.get("boundary", "file", required=True))
    else:
        raise cfg.error("boundary", "kind", f"unknown boundary kind {kind!r}")

    searches = cfg.get("searches", "run", required=True).split()
    if not searches:
        raise cfg.error("searches", "run", "empty searches set")
    for s in searches:
        if s not in KNOWN_SEARCHES:
            raise cfg.error("searches", "run",
                            f"unknown search {s!r} (known: {', '.join(KNOWN_SEARCHES)})")

    return RunConfig(
        domain_spec=spec,
        boundary=boundary,
        lambdas_text=cfg.get("parameters", "lambdas", required=True),
        mus_text=cfg.get("parameters", "mus", "0.0"),
        searches=searches,
        directions=int(cfg.get("searches", "directions", "6")),
        epsilon=float(cfg.get("searches", "epsilon", "0.2")),
        out_dir=cfg.get("output", "directory", "out"),
        dump_fields=cfg.get("output", "dump_fields", "false").lower() in ("true", "1", "yes"),
        seed=int(cfg.get("random", "seed", "0")),
        budget_factor=float(cfg.get("searches", "budget_factor", "1.0")),
        mu_star_cells=int(cfg.get("searches", "mu_star_cells", "24")),
        cfg=cfg,
    )


# -- run ----------------------------------------------------------------------


def _axis_directions(ndim, count):
    dirs = []
    for k in range(ndim):
        for s in (+1.0, -1.0):
            e = np.zeros(ndim)
            e[k] = s
            dirs.append(e)
    if count > len(dirs):
        for signs in np.ndindex(*(2,) * ndim):
            v = np.array([1.0 if s == 0 else -1.0 for s in signs])
            dirs.append(v / np.linalg.norm(v))
    return dirs[:count]


def _run_cell(ci, lam, mu, spectral, lift, rc: RunConfig, searches=None):
    """One (lambda, mu) cell; never raises (failures are recorded)."""
    searches = rc.searches if searches is None else searches
    cell = {
        "index": ci,
        "lambda": lam,
        "mu": mu,
        "mode": "search",
        "status": "ok",
        "records": [],
        "certificates": [],
        "threshold": None,
        "error": None,
    }
    try:
        if lam >= spectral.lambda1:
            cell["mode"] = "nonexistence"
            p = Params(lam=lam, mu=mu, spectral=spectral, lift=lift)
            cert = nonexistence_certificate(p, candidate=None)
            probe = nonexistence_certificate(p, candidate=spectral.e1)
            cell["certificates"] = [cert.to_json_dict(), probe.to_json_dict()]
            cell["status"] = "nonexistence" if cert.overall and probe.overall else "failed"
            return cell

        p = Params(lam=lam, mu=mu, spectral=spectral, lift=lift)
        records = []
        rec_plus = rec_minus = None
        if "nplus" in searches and mu > 0:
            rec_plus = minimize_on_Nplus(p, budget_factor=rc.budget_factor)
            records.append(rec_plus)
        if "nminus" in searches:
            gs = ground_state(lam, spectral, lift, budget_factor=rc.budget_factor)
            rec_minus = minimize_on_Nminus(
                p, gs, seed_kind=SeedKind.GROUND_STATE_RAY, budget_factor=rc.budget_factor
            )
            records.append(rec_minus)
        if "multistart" in searches:
            if rec_plus is None:
                raise ConfigurationError("multistart needs the nplus search in the same run")
            dirs = _axis_directions(p.domain.ndim, rc.directions)
            extra = multistart_Nminus(
                p, dirs, rc.epsilon, rec_plus, budget_factor=rc.budget_factor
            )
            records.extend(extra)
        if "minimax" in searches:
            if rec_plus is None or rec_minus is None:
                raise ConfigurationError("minimax needs nplus and nminus in the same run")
            mm = minimax_gamma(p, rc.epsilon, rec_plus, rec_minus,
                               budget_factor=rc.budget_factor)
            cell["minimax"] = {
                "found": mm.found,
                "gamma_estimate": mm.gamma_estimate,
                "window": list(mm.window),
                "reason": mm.reason,
            }
            if mm.found:
                records.append(mm.record)

        certs = [certify_solution(r, p) for r in records]
        cell["records"] = [r.to_json_dict() for r in records]
        cell["certificates"] = [c.to_json_dict() for c in certs]
        cell["_fields"] = [r.v for r in records]
        if rec_plus is not None:
            cell["convexity"] = convexity_ball_check(
                p, trials=100, seed=rc.seed, nplus_records=[rec_plus]
            ).to_json_dict()
        if rec_plus is not None and rec_minus is not None:
            cell["threshold"] = threshold_report(p, records).to_json_dict()
        if records and not all(c["overall"] for c in cell["certificates"]):
            cell["status"] = "uncertified"
    except BNSolverError as e:
        cell["status"] = "failed"
        cell["error"] = f"{type(e).__name__}: {e}"
    except Exception as e:  # crash isolation: a failing cell never kills the sweep
        cell["status"] = "failed"
        cell["error"] = f"{type(e).__name__}: {e}\n{traceback.format_exc()}"
    return cell


def run(config_path, out_dir_override=None) -> int:
    rc = parse_config(config_path)
    if out_dir_override:
        rc.out_dir = out_dir_override
    out = Path(rc.out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    shutil.copy(config_path, out / "config.ini")

    domain = build_domain(rc.domain_spec)
    spectral = compute_spectral_data(domain)
    boundary = rc.boundary
    if isinstance(boundary, tuple) and boundary[0] == "table":
        boundary = load_node_table(boundary[1], domain)
    lift = solve_lift(boundary, domain)

    lambdas = _parse_values(rc.cfg, "parameters", "lambdas", rc.lambdas_text,
                            lambda1=spectral.lambda1)
    mus = _parse_values(rc.cfg, "parameters", "mus", rc.mus_text, lambda1=spectral.lambda1)
    for lam in lambdas:
        if lam <= 0:
            raise ConfigurationError(f"lambda values must be positive, got {lam}")
    for mu in mus:
        if mu < 0:
            raise ConfigurationError(f"mu values must be nonnegative, got {mu}")

    cells = [(i, lam, mu) for i, (lam, mu) in enumerate(
        (lam, mu) for lam in lambdas for mu in mus)]
    cell_searches = [s for s in rc.searches if s != "mu_star"]
    results = []
    if cell_searches:
        workers = max(1, int(os.environ.get(THREADS_ENV, "1")))
        if workers == 1:
            results = [_run_cell(i, lam, mu, spectral, lift, rc, cell_searches)
                       for i, lam, mu in cells]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(
                    lambda t: _run_cell(t[0], t[1], t[2], spectral, lift, rc, cell_searches),
                    cells))
        results.sort(key=lambda c: c["index"])

    # single-writer output pass
    sweep_rows = []
    for cell in results:
        fields = cell.pop("_fields", [])
        if rc.dump_fields:
            for k, f in enumerate(fields):
                fp = out / "cells" / f"cell_{cell['index']:04d}_field_{k}.txt"
                dump_field(f, fp)
                cell["records"][k]["field_dump"] = str(fp.name)
        with open(out / "cells" / f"cell_{cell['index']:04d}.json", "w") as f:
            json.dump(cell, f, indent=1)
        m_plus = min((r["energy"] for r in cell["records"] if r["class"] == "PLUS"),
                     default=float("nan"))
        m_minus = min((r["energy"] for r in cell["records"] if r["class"] == "MINUS"),
                      default=float("nan"))
        certified = sum(1 for c in cell["certificates"] if c.get("overall"))
        sweep_rows.append(
            [
                _fmt(cell["lambda"]), _fmt(cell["mu"]), cell["mode"],
                _fmt(m_plus), _fmt(m_minus), _fmt(spectral.s_quantum),
                str(len(cell["records"])), str(certified), cell["status"],
            ]
        )
    with open(out / "sweep.csv", "w") as f:
        f.write("lambda,mu,mode,m_plus,m_minus,s_quantum,n_records,n_certified,status\n")
        for row in sweep_rows:
            f.write(",".join(row) + "\n")

    exit_code = 0
    if any(c["status"] == "failed" for c in results):
        exit_code = 1

    if "mu_star" in rc.searches:
        cfg = ContinuationConfig(max_cells=rc.mu_star_cells,
                                 budget_factor=rc.budget_factor)
        boundary = trace_existence_boundary(
            [lam for lam in lambdas if lam < spectral.lambda1], spectral, lift, cfg)
        with open(out / "mu_star.csv", "w") as f:
            f.write("lambda,mu_star,n_cells\n")
            for lam, mu_star in zip(boundary.lambda_grid, boundary.mu_star_estimates):
                f.write(f"{_fmt(lam)},{_fmt(mu_star)},{len(boundary.branch_data[lam])}\n")
        with open(out / "mu_star_branches.csv", "w") as f:
            f.write("lambda,mu,energy_plus,energy_minus,plus_converged,minus_converged\n")
            for lam in boundary.lambda_grid:
                for r in boundary.branch_data[lam]:
                    f.write(
                        f"{_fmt(lam)},{_fmt(r.mu)},{_fmt(r.energy_plus)},"
                        f"{_fmt(r.energy_minus)},{r.plus_converged},{r.minus_converged}\n"
                    )

    print(f"run complete: {len(results)} cells -> {out}")
    for cell in results:
        line = f"  cell {cell['index']:3d} lambda={cell['lambda']:.6g} mu={cell['mu']:.6g}: "
        line += f"{cell['status']} ({len(cell['records'])} records)"
        if cell["error"]:
            line += f" [{cell['error'].splitlines()[0]}]"
        print(line)
    return exit_code


# -- report --------------------------------------------------------------------


def report(run_dir) -> int:
    out = Path(run_dir)
    sweep = out / "sweep.csv"
    cells_dir = out / "cells"
    if not cells_dir.is_dir() and not (out / "mu_star.csv").exists():
        print(f"error: {run_dir} does not look like a completed run", file=sys.stderr)
        return 1

    cells = []
    if cells_dir.is_dir():
        for fp in sorted(cells_dir.glob("cell_*.json")):
            if fp.name.endswith(".json"):
                try:
                    with open(fp) as f:
                        cells.append(json.load(f))
                except json.JSONDecodeError as e:
                    print(f"error: corrupt cell file {fp}: {e}", file=sys.stderr)
                    return 1

    with open(out / "heatmap.csv", "w") as f:
        f.write("lambda,mu,n_solutions,status\n")
        for c in cells:
            f.write(f"{_fmt(c['lambda'])},{_fmt(c['mu'])},{len(c['records'])},{c['status']}\n")

    with open(out / "branches.csv", "w") as f:
        f.write("lambda,mu,class,energy,grad_norm,positive,seed\n")
        for c in cells:
            for r in c["records"]:
                f.write(
                    f"{_fmt(c['lambda'])},{_fmt(c['mu'])},{r['class']},{_fmt(r['energy'])},"
                    f"{_fmt(r['grad_norm'])},{r['positive']},{r['seed']}\n"
                )

    with open(out / "barycenters.csv", "w") as f:
        f.write("cell,record,class,seed," +
                ",".join(f"beta_{i}" for i in range(8)) + "\n")
        for c in cells:
            for k, r in enumerate(c["records"]):
                beta = r["barycenter"]
                cols = [str(c["index"]), str(k), r["class"], r["seed"]]
                cols += [_fmt(x) for x in beta] + ["" for _ in range(8 - len(beta))]
                f.write(",".join(cols) + "\n")

    n_rec = sum(len(c["records"]) for c in cells)
    print(f"report: {len(cells)} cells, {n_rec} records")
    if sweep.exists():
        with open(sweep) as f:
            print(f.read().rstrip())
    if (out / "mu_star.csv").exists():
        print("solvability boundary (mu_star.csv):")
        with open(out / "mu_star.csv") as f:
            print(f.read().rstrip())
    return 0


# -- fibering profile and certify ------------------------------------------------


def fibering_profile_cmd(config_path, ray_path, samples=200, tmax_factor=2.0,
                         out_path=None) -> int:
    rc = parse_config(config_path)
    domain = build_domain(rc.domain_spec)
    spectral = compute_spectral_data(domain)
    boundary = rc.boundary
    if isinstance(boundary, tuple) and boundary[0] == "table":
        boundary = load_node_table(boundary[1], domain)
    lift = solve_lift(boundary, domain)
    lambdas = _parse_values(rc.cfg, "parameters", "lambdas", rc.lambdas_text,
                            lambda1=spectral.lambda1)
    mus = _parse_values(rc.cfg, "parameters", "mus", rc.mus_text, lambda1=spectral.lambda1)
    p = Params(lam=lambdas[0], mu=mus[0], spectral=spectral, lift=lift)

    v = load_field(ray_path, domain)
    prof = fibering_profile(v, p)
    rr = find_roots(v, p, profile=prof)
    ts = np.linspace(0.0, tmax_factor * rr.t_minus, samples)
    T, dT, d2T = prof.T(ts), prof.dT(ts), prof.d2T(ts)

    lines = ["t,T,T1,T2"]
    for i in range(len(ts)):
        lines.append(f"{_fmt(ts[i])},{_fmt(T[i])},{_fmt(dT[i])},{_fmt(d2T[i])}")
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    print(f"# t0={_fmt(prof.t0)} t_minus={_fmt(rr.t_minus)} "
          f"t_plus={'' if rr.t_plus is None else _fmt(rr.t_plus)} "
          f"pairing={_fmt(rr.pairing_sign)}", file=sys.stderr)
    return 0


def certify_cmd(record_path) -> int:
    rec_path = Path(record_path)
    with open(rec_path) as f:
        cell = json.load(f)
    run_dir = rec_path.parent.parent
    cfg_path = run_dir / "config.ini"
    if not cfg_path.exists():
        print(f"error: no config.ini next to the run ({cfg_path})", file=sys.stderr)
        return 1
    rc = parse_config(cfg_path)
    domain = build_domain(rc.domain_spec)
    spectral = compute_spectral_data(domain)
    boundary = rc.boundary
    if isinstance(boundary, tuple) and boundary[0] == "table":
        boundary = load_node_table(boundary[1], domain)
    lift = solve_lift(boundary, domain)

    p = Params(lam=cell["lambda"], mu=cell["mu"], spectral=spectral, lift=lift)
    ok = True
    n = 0
    for k, r in enumerate(cell.get("records", [])):
        dumpname = r.get("field_dump")
        if not dumpname:
            print(f"record {k}: no field dump stored (rerun with dump_fields = true)")
            ok = False
            continue
        v = load_field(rec_path.parent / dumpname, domain)
        from .solve import _build_record  # rebuild with fresh diagnostics

        seed_kind = SeedKind(r.get("seed", "user"))
        rebuilt = _build_record(p, v.values, gn=float("nan"),
                                seed_kind=seed_kind, iterations=0)
        cert = certify_solution(rebuilt, p)
        n += 1
        print(f"record {k} ({r['class']}, energy {_fmt(r['energy'])}):")
        print(cert)
        ok = ok and cert.overall
    if n == 0:
        print("no records with field dumps found", file=sys.stderr)
        return 1
    return 0 if ok else 1


# -- entry point ----------------------------------------------------------------


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="bnsolver",
        description="Nehari-manifold solver and verification harness for the "
                    "critical-exponent problem with nonnegative boundary data",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    ap_run = sub.add_parser("run", help="execute a sweep from a config file")
    ap_run.add_argument("config")
    ap_run.add_argument("--out", default=None, help="override output directory")

    ap_rep = sub.add_parser("report", help="summarize a completed run directory")
    ap_rep.add_argument("rundir")

    ap_fib = sub.add_parser("fibering-profile", help="dump (t, T, T', T'') for a ray")
    ap_fib.add_argument("config")
    ap_fib.add_argument("--ray", required=True, help="field dump file for the ray")
    ap_fib.add_argument("--samples", type=int, default=200)
    ap_fib.add_argument("--tmax", type=float, default=2.0,
                        help="sample up to tmax * t_minus")
    ap_fib.add_argument("--out", default=None)

    ap_cert = sub.add_parser("certify", help="re-certify records from a cell JSON")
    ap_cert.add_argument("record", help="cells/cell_XXXX.json from a run with field dumps")

    args = ap.parse_args(argv)
    try:
        if args.cmd == "run":
            return run(args.config, out_dir_override=args.out)
        if args.cmd == "report":
            return report(args.rundir)
        if args.cmd == "fibering-profile":
            return fibering_profile_cmd(args.config, args.ray, samples=args.samples,
                                        tmax_factor=args.tmax, out_path=args.out)
        if args.cmd == "certify":
            return certify_cmd(args.record)
    except BNSolverError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
