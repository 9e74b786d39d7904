"""Command line: ``harnacklab <subcommand> --config <path> [overrides]``.

Exit status 0 when every verdict passes, 1 when some verdict fails, 2 on
errors (bad configuration, solver failure, unreadable input).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import acf, config, corpus, domains, pipeline
from .bhi import ladder_csv
from .errors import ConfigError, HarnackLabError, IncomparableError
from .freeboundary import save_solution
from .grid import build_grid, load_field, save_field
from .hypotheses import full_report

SUBCOMMANDS = ("gen-domain", "check-hypotheses", "solve", "chain", "acf", "verify-bhi", "report")
MANIFEST = "manifest.json"


# ---- output helpers -------------------------------------------------------


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (list, tuple)):
        return " ".join(str(int(c)) for c in v)
    return v


class Output:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str):
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(content)

    def json(self, name: str, obj):
        self.text(name, dumps(obj))

    def field(self, name: str, phi):
        save_field(self.root / name, phi)

    def manifest(self):
        """Hash every file under the output directory (except the manifest itself)."""
        entries = {}
        for p in sorted(self.root.rglob("*")):
            rel = p.relative_to(self.root).as_posix()
            if p.is_file() and rel != MANIFEST:
                data = p.read_bytes()
                entries[rel] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        self.text(MANIFEST, dumps({"files": entries}))


def threads() -> int:
    raw = os.environ.get("HARNACKLAB_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"HARNACKLAB_THREADS={raw!r} is not an integer") from None
    if k < 1:
        raise ConfigError("HARNACKLAB_THREADS must be at least 1")
    return k


# ---- domain resolution -------------------------------------------------------


def resolve_domain(cfg):
    """Return (phi, description, corpus entry or None)."""
    d = cfg["domain"]
    dim, n = cfg["grid"]["dim"], cfg["grid"]["n"]
    if d["file"] is not None:
        phi = load_field(d["file"])
        if phi.role != "state":
            raise ConfigError(f"{d['file']} does not hold a state function")
        return phi, {"source": "file", "path": Path(d["file"]).name}, None
    if d["design"] is not None:
        entry = corpus.cached(d["design"], dim, n, float(d["Lambda"]))
        return entry.phi, {"source": "freeboundary", "design": d["design"], "Lambda": d["Lambda"]}, entry
    if d["builtin"] is None:
        raise ConfigError("no domain source: set domain.builtin, domain.design or domain.file")
    try:
        phi = domains.builtin(d["builtin"], dim, n, **d["params"])
    except TypeError as exc:
        raise ConfigError(f"domain.params: {exc}") from None
    return phi, {"source": "builtin", "builtin": d["builtin"], "params": d["params"]}, None


def _bhi_center(cfg, phi, entry):
    c = cfg["bhi"]["center"]
    if c is not None:
        return np.asarray(c, dtype=float)
    if entry is not None:
        return phi.grid.point(entry.anchor())
    return np.zeros(phi.grid.dim)


# ---- subcommands ---------------------------------------------------------------


def cmd_gen_domain(cfg, out: Output) -> int:
    phi, info, entry = resolve_domain(cfg)
    info.update(dim=phi.grid.dim, n=phi.grid.n, h=phi.grid.h, support_nodes=int(np.sum(phi.values > 0)))
    ok = True
    if entry is not None:
        sol = entry.solution
        save_solution(out.root / "freeboundary", sol, {"design": entry.name, "Lambda": sol.Lambda})
        info.update(energy=sol.energy, converged=sol.converged, iterations=sol.iterations)
        ok = sol.converged
    out.field("domain.fld", phi)
    out.json("domain.json", info)
    return 0 if ok else 1


def cmd_check_hypotheses(cfg, out: Output) -> int:
    phi, info, _ = resolve_domain(cfg)
    rep = full_report(phi, cfg["thresholds"])
    d = rep.to_dict()
    d["domain"] = info
    out.json("hypotheses.json", d)
    return 0 if rep.all_pass else 1


def cmd_solve(cfg, out: Output) -> int:
    phi, info, _ = resolve_domain(cfg)
    s = cfg["solver"]
    u = pipeline.data_function(phi, cfg["data"]["u"], s["tol"], s["method"])
    out.field("u.fld", u)
    out.json("solve.json", {"domain": info, "data": cfg["data"]["u"], "method": s["method"],
                            "residual": getattr(u, "residual", None), "min": float(u.values.min()),
                            "max": float(u.values.max())})
    return 0


def _chain_run(cfg, phi, seed):
    c = cfg["chains"]
    g = phi.grid
    H = c["H_cfg"]
    if H is None:
        H = pipeline.calibrated_harnack(g.dim, g.n, c["fields"], c["seeds"], c["delta"], c["sigma_min"], seed)
    fields = pipeline.harmonic_fields(phi, c["fields"], seed, cfg["solver"]["tol"])
    return pipeline.run_chains(phi, fields, H, c["seeds"], c["delta"], c["sigma_min"], np.random.default_rng(seed))


CHAIN_HEADER = ["seed_node", "N", "sigma_achieved", "worst_step_ratio", "worst_end_to_end", "passed"]


def cmd_chain(cfg, out: Output) -> int:
    phi, info, _ = resolve_domain(cfg)
    run = _chain_run(cfg, phi, cfg["seed"])
    out.json("chains.json", {"domain": info, "summary": run.summary(),
                             "chains": [c.to_dict() for c in run.chains]})
    out.text("chains.csv", _csv(CHAIN_HEADER, run.rows()))
    return 0 if run.passed else 1


def _acf_pair(cfg, phi_source):
    a = cfg["acf"]
    dim, n = cfg["grid"]["dim"], cfg["grid"]["n"]
    g = build_grid(dim, n)
    if a["pair"] == "halfplane":
        return acf.halfplane_pair(g), 0.0
    if a["pair"] == "sector":
        if dim != 2:
            raise ConfigError("the sector pair is two-dimensional")
        return acf.sector_pair(g), acf.homogeneous_exponent(2, 2)
    phi = phi_source()
    seeds = [phi.grid.node(np.asarray(p, dtype=float)) for p in a["seeds"]]
    if len(seeds) != 2:
        raise ConfigError("acf.seeds needs exactly two points for pair 'domain'")
    return tuple(acf.truncate_component(phi, a["level"], s) for s in seeds), None


def cmd_acf(cfg, out: Output) -> int:
    a = cfg["acf"]
    (p1, p2), exponent = _acf_pair(cfg, lambda: resolve_domain(cfg)[0])
    radii = a["radii"] or [round(0.1 * k, 10) for k in range(1, 10)]
    prof = acf.acf_phi(p1, p2, radii)
    verdict = acf.check_monotone(prof, a["tol"])
    out.text("acf.csv", prof.to_csv())
    out.json("acf.json", {"pair": a["pair"], "verdict": verdict.to_dict(), "slope": prof.slope(),
                          "expected_slope": exponent, "radii": list(prof.radii),
                          "phi": list(prof.phi_values), "alpha": list(prof.alpha_values)})
    return 0 if verdict.passed else 1


def cmd_verify_bhi(cfg, out: Output) -> int:
    phi, info, entry = resolve_domain(cfg)
    s = cfg["solver"]
    try:
        u = pipeline.data_function(phi, cfg["data"]["u"], s["tol"], s["method"])
        v = pipeline.data_function(phi, cfg["data"]["v"], s["tol"], s["method"])
        rep, ok = pipeline.run_bhi(phi, u, v, cfg["bhi"], _bhi_center(cfg, phi, entry))
    except IncomparableError as exc:
        out.json("bhi.json", {"domain": info, "passed": False, "error": str(exc)})
        return 1
    d = rep.to_dict()
    d.update(domain=info, passed=ok)
    out.json("bhi.json", d)
    out.text("bhi_ladder.csv", ladder_csv(rep.levels))
    return 0 if ok else 1


def _report_domain(cfg, name, kind, n, seed):
    """Hypotheses, chains and BHI for one domain; returns (summary, csv rows)."""
    local = json.loads(json.dumps(cfg))
    local["grid"]["n"] = n
    local["domain"].update(builtin=name if kind == "builtin" else None,
                           design=name if kind == "design" else None, file=None, params={})
    phi, info, entry = resolve_domain(local)
    hyp = full_report(phi, cfg["thresholds"])
    summary = {"domain": info, "hypotheses": hyp.to_dict()}
    rows = {"chains": [], "ladder": []}
    ok = hyp.all_pass
    run = _chain_run(local, phi, seed)
    summary["chains"] = run.summary()
    rows["chains"] = [[name] + list(r) for r in run.rows()]
    ok &= run.passed
    u, v = pipeline.harmonic_fields(phi, 2, seed + 1, cfg["solver"]["tol"])
    rep, bhi_ok = pipeline.run_bhi(phi, u, v, cfg["bhi"], _bhi_center(local, phi, entry))
    summary["bhi"] = rep.to_dict() | {"passed": bhi_ok}
    rows["ladder"] = [[name, lv.r, lv.osc, lv.decay_factor, lv.M_hat, lv.within] for lv in rep.levels]
    ok &= bhi_ok
    summary["passed"] = bool(ok)
    return summary, rows


def cmd_report(cfg, out: Output) -> int:
    r = cfg["report"]
    n, seed = r["n"], cfg["seed"]
    designs = r["designs"] if r["designs"] is not None else sorted(corpus.DESIGNS)
    for d in designs:
        if d not in corpus.DESIGNS:
            raise ConfigError(f"report.designs: unknown design {d!r}")
    jobs = [(b, "builtin") for b in r["builtins"]] + [(d, "design") for d in designs]
    # calibrate once so every domain uses the same per-step constant
    local = json.loads(json.dumps(cfg))
    if local["chains"]["H_cfg"] is None:
        c = local["chains"]
        local["chains"]["H_cfg"] = pipeline.calibrated_harnack(
            cfg["grid"]["dim"], n, c["fields"], c["seeds"], c["delta"], c["sigma_min"], seed)
    # minimizers first (they dominate the cost), then the per-domain checks
    with ThreadPoolExecutor(max_workers=threads()) as pool:
        list(pool.map(lambda d: corpus.cached(d, cfg["grid"]["dim"], n, float(cfg["domain"]["Lambda"])), designs))
        results = list(pool.map(lambda j: _report_domain(local, j[0], j[1], n, seed), jobs))

    acf_runs = {}
    for pair in ("halfplane", "sector") if cfg["grid"]["dim"] == 2 else ("halfplane",):
        lc = json.loads(json.dumps(local))
        lc["grid"]["n"] = n
        lc["acf"]["pair"] = pair
        (p1, p2), exponent = _acf_pair(lc, None)
        prof = acf.acf_phi(p1, p2, [round(0.1 * k, 10) for k in range(1, 10)])
        verdict = acf.check_monotone(prof, cfg["acf"]["tol"])
        out.text(f"acf_{pair}.csv", prof.to_csv())
        acf_runs[pair] = {"verdict": verdict.to_dict(), "slope": prof.slope(), "expected_slope": exponent}

    summary = {
        "seed": seed,
        "n": n,
        "dim": cfg["grid"]["dim"],
        "H_cfg": local["chains"]["H_cfg"],
        "domains": {name: res[0] for (name, _), res in zip(jobs, results)},
        "acf": acf_runs,
    }
    ok = all(res[0]["passed"] for res in results) and all(a["verdict"]["passed"] for a in acf_runs.values())
    summary["passed"] = ok
    out.json("summary.json", summary)
    hyp_rows = []
    for (name, _), (s, _) in zip(jobs, results):
        h = s["hypotheses"]
        hyp_rows.append([name, h["L_hat"], h["kappa_hat"], h["subharmonic_defect"], h["mu_hat"],
                         h["Lambda_hat"], h["eta_hat"], all(v["pass"] for v in h["verdicts"].values())])
    out.text("hypotheses.csv", _csv(["domain", "L_hat", "kappa_hat", "subharmonic_defect", "mu_hat",
                                     "Lambda_hat", "eta_hat", "all_pass"], hyp_rows))
    out.text("chains.csv", _csv(["domain"] + CHAIN_HEADER, [row for _, rows in results for row in rows["chains"]]))
    out.text("bhi_ladder.csv", _csv(["domain", "r", "osc", "decay_factor", "M_hat", "within"],
                                    [row for _, rows in results for row in rows["ladder"]]))
    return 0 if ok else 1


COMMANDS = {
    "gen-domain": cmd_gen_domain,
    "check-hypotheses": cmd_check_hypotheses,
    "solve": cmd_solve,
    "chain": cmd_chain,
    "acf": cmd_acf,
    "verify-bhi": cmd_verify_bhi,
    "report": cmd_report,
}


# ---- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harnacklab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML experiment file (defaults apply when omitted)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any key, e.g. bhi.rho=0.3 (repeatable)")
        s.add_argument("--dim", type=int)
        s.add_argument("--n", type=int)
        s.add_argument("--builtin", help=f"builtin domain: {', '.join(sorted(domains.BUILTINS))}")
        s.add_argument("--design", help=f"free-boundary design: {', '.join(sorted(corpus.DESIGNS))}")
        s.add_argument("--file", help="FLD1 file holding a state function")
        s.add_argument("--output", "-o")
        s.add_argument("--seed", type=int)
    return p


def _overrides(args) -> list[str]:
    sets = []
    for flag, key in (("dim", "grid.dim"), ("n", "grid.n"), ("output", "output"), ("seed", "seed")):
        val = getattr(args, flag)
        if val is not None:
            sets.append(f"{key}={json.dumps(val)}")
    # a domain flag on the command line replaces whatever source the file chose
    for flag in ("builtin", "design", "file"):
        val = getattr(args, flag)
        if val is not None:
            sets += ["domain.builtin=null", "domain.design=null", "domain.file=null"]
            sets.append(f"domain.{flag}={json.dumps(val)}")
    return sets + list(args.set)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config.load(args.config) if args.config else config.defaults()
        cfg = config.override(cfg, _overrides(args))
        out = Output(cfg["output"])
        status = COMMANDS[args.command](cfg, out)
        out.manifest()
        return status
    except (HarnackLabError, ValueError, OSError) as exc:
        print(f"harnacklab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
