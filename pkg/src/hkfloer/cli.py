"""Command-line front end: ``hkfloer <command> [--config PATH] [--out DIR] ...``.

Every command writes ``summary.json`` plus CSV data (and SVG plots where
useful) into the output directory.  Exit status: 0 when every asserted check
passes, 1 on a failed check or numerical failure, 2 on a usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import floer as floer_mod
from .dirac import mode_block, spectrum
from .domain import ConfigurationError, DomainKind, build_sphere_domain, build_torus_domain, verify_hypercontact
from .dynamics import (
    adiabatic_experiment,
    connect_orbit_bvp,
    cylinder_ball_check,
    decay_rate,
    find_critical_points,
    heinz_monitor,
    monitor_apriori,
    separable_critical_points,
    sphere_slice_check,
)
from .dynamics.bvp import ds_norms, endpoint_gaps
from .dynamics.monitors import pointwise_fields
from .field import Target, random_bandlimited
from .hamiltonian import HamiltonianSpec
from .specflow import floer_index_report, index_family, trajectories, trajectories_csv, trajectories_svg
from .svgplot import line_plot

log = logging.getLogger("hkfloer")

COMMANDS = (
    "verify-hypercontact",
    "spectrum",
    "critical-points",
    "index",
    "connect",
    "adiabatic",
    "floer",
    "monitors",
    "slice-check",
)
SPHERE_COMMANDS = {"verify-hypercontact", "spectrum", "slice-check"}

DEFAULTS = {
    "command": None,
    "domain": {"kind": None, "degree": 2, "res": None, "N": 6, "frame": None},
    "target": {"n": 1, "lattice": 1.0},
    "hamiltonian": "cosine",
    "solver": {"degree": 1, "tol": 1e-10, "max_iter": 25, "h": 0.2, "boundary_tol": 1e-6, "S": None},
    "tolerances": {
        "hypercontact": 1e-12,
        "eigen": 1e-8,
        "torus_eigen": 1e-10,
        "critical_residual": 1e-10,
        "bvp_residual": 1e-8,
        "energy": 1e-6,
        "oscillation": 1e-8,
        "decay": 0.1,
        "ratio_drift": 0.25,
        "slice": 1e-8,
    },
    "eps": 0.1,
    "eps_list": [0.2, 0.1, 0.05],
    "pair": [[0.5, 0.5, 0.5, 0.5], [0.0, 0.5, 0.5, 0.5]],
    "family": {"count": 0, "seed": 0, "coupling": 0.0},
    "slice": {"r": 0.7, "fields": 100, "degree": 2, "amplitude": 1.0},
    "seed": 0,
    "threads": 1,
    "out": "out",
}

HAMILTONIAN_PRESETS = {
    "cosine": lambda dim: HamiltonianSpec.cosine_sum([0.02 + 0.001 * i for i in range(dim)]),
    "two-well": lambda dim: floer_mod.two_well_factor(dim=dim),
    "zero": lambda dim: HamiltonianSpec.zero(dim),
}


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration (exit status 2)."""


# -- configuration ------------------------------------------------------------------


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "hamiltonian":
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _positive(value, name):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def validate(cfg: dict) -> dict:
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"unknown command {cfg['command']!r}; choose from {', '.join(COMMANDS)}")
    for name, val in cfg["tolerances"].items():
        _positive(val, f"tolerances.{name}")
    for name in ("tol", "h", "boundary_tol"):
        _positive(cfg["solver"][name], f"solver.{name}")
    _positive(cfg["eps"], "eps")
    if not cfg["eps_list"] or any(not isinstance(e, (int, float)) or e <= 0 for e in cfg["eps_list"]):
        raise ConfigError("eps_list must be a nonempty list of positive numbers")
    if cfg["domain"]["kind"] not in (None, "sphere", "torus"):
        raise ConfigError("domain.kind must be 'sphere' or 'torus'")
    for name in ("seed", "threads"):
        if not isinstance(cfg[name], int) or cfg[name] < (1 if name == "threads" else 0):
            raise ConfigError(f"{name} must be a {'positive' if name == 'threads' else 'nonnegative'} integer")
    _positive(cfg["slice"]["r"], "slice.r")
    h = cfg["hamiltonian"]
    if isinstance(h, str) and h not in HAMILTONIAN_PRESETS:
        raise ConfigError(f"unknown Hamiltonian preset {h!r}")
    if not isinstance(h, (str, dict)):
        raise ConfigError("hamiltonian must be a preset name or a term dictionary")
    return cfg


def load_config(path, overrides: dict) -> dict:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = _merge(DEFAULTS, data)
    cfg = _merge(cfg, overrides)
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _domain(cfg):
    dc = cfg["domain"]
    kind = dc["kind"] or ("sphere" if cfg["command"] in SPHERE_COMMANDS else "torus")
    if kind == "sphere":
        res = tuple(dc["res"]) if dc["res"] else None
        return build_sphere_domain(int(dc["degree"]), res)
    return build_torus_domain(dc["frame"], N=int(dc["N"]), degree=int(dc["degree"]))


def _target(cfg):
    t = cfg["target"]
    return Target(int(t["n"]), None if t["lattice"] is None else float(t["lattice"]))


def _hamiltonian(cfg, target):
    h = cfg["hamiltonian"]
    if isinstance(h, str):
        H = HAMILTONIAN_PRESETS[h](target.dim)
    else:
        try:
            H = HamiltonianSpec.from_dict(h)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad hamiltonian: {exc}") from exc
    if H.dim != target.dim:
        raise ConfigError(f"Hamiltonian dimension {H.dim} differs from target dimension {target.dim}")
    return H


# -- output normalisation -------------------------------------------------------------


def normalize(obj, digits: int = 12):
    """JSON-ready copy with floats rounded to ``digits`` significant figures."""
    if isinstance(obj, dict):
        return {str(k): normalize(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return normalize(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.{digits}g}") + 0.0
    return obj


def dump_json(obj) -> str:
    return json.dumps(normalize(obj), sort_keys=True, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


class Outcome:
    def __init__(self):
        self.results: dict = {}
        self.checks: dict = {}
        self.warnings: list = []
        self.files: dict = {}

    def check(self, name: str, ok) -> None:
        self.checks[name] = bool(ok)

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)


# -- commands -------------------------------------------------------------------------


def cmd_verify_hypercontact(cfg, out: Outcome):
    d = _domain(cfg)
    rep = verify_hypercontact(d)
    tol = cfg["tolerances"]["hypercontact"]
    out.results = rep.as_dict()
    out.check("max_violation", rep.max_violation() <= tol)
    if d.kind is DomainKind.SPHERE3:
        out.check("kappa", rep.kappa == 2.0)
    out.files["hypercontact.csv"] = _csv(["quantity", "value"], sorted(rep.as_dict().items()))


def cmd_spectrum(cfg, out: Outcome):
    d = _domain(cfg)
    tol = cfg["tolerances"]
    sp_ = spectrum(d, d.degree, n=_target(cfg).n)
    w = sp_.eigenvalues
    out.results = {"size": len(w), "multiplicities": sp_.multiplicities(), "max_residual": float(sp_.residuals.max())}
    out.check("residuals", sp_.residuals.max() <= tol["eigen"])
    if d.kind is DomainKind.SPHERE3:
        expected = [0.0, 1.0, -3.0] + ([-4.0] if d.degree >= 2 else [])
        out.check("expected_eigenvalues", all(sp_.contains(v, tol["eigen"]) for v in expected))
        levels = np.array([k * (k + 2) for k in range(d.degree + 1)], dtype=float)
        rel = np.abs((w**2 + 2 * w)[:, None] - levels[None, :]).min(axis=1)
        out.results["degree_relation_defect"] = float(rel.max())
        out.check("degree_relation", rel.max() <= tol["eigen"])
    else:
        K = min(3, d.degree)
        closed = [mode_block(d, k) for k in d.modes if np.abs(k).max() <= K]
        out.check("mode_blocks", all(b.verified(tol["torus_eigen"]) for b in closed))
        allowed = np.concatenate([[0.0]] + [[b.closed_form_ev, -b.closed_form_ev] for b in closed])
        if K == d.degree:
            gap = np.abs(w[:, None] - allowed[None, :]).min(axis=1).max()
            out.results["closed_form_defect"] = float(gap)
            out.check("closed_form", gap <= tol["torus_eigen"])
    out.files["spectrum.csv"] = sp_.to_csv()
    out.files["spectrum.svg"] = line_plot([(np.arange(len(w)), w)], title="Dirac spectrum",
                                          xlabel="index", ylabel="eigenvalue", hline=0.0)


def cmd_critical_points(cfg, out: Outcome):
    d, target = _domain(cfg), _target(cfg)
    H = _hamiltonian(cfg, target)
    s = cfg["solver"]
    pts = find_critical_points(H, d, target, eps=cfg["eps"], degree=s["degree"], tol=s["tol"],
                               max_iter=s["max_iter"])
    rows = [p.as_dict() for p in pts]
    out.results = {"count": len(pts), "points": rows}
    out.check("residuals", all(p.residual <= cfg["tolerances"]["critical_residual"] for p in pts))
    bad = [p.position.tolist() for p in pts if not p.nondegenerate]
    for b in bad:
        out.warn(f"degenerate critical point at {b}")
    out.check("nondegenerate", not bad)
    if target.is_torus:
        out.check("betti_bound", len(pts) >= 2 ** target.dim)
    if H.y_independent:
        out.check("index_formula", all(p.mu == target.dim - p.morse_index for p in pts if p.mu is not None))
    out.files["critical_points.csv"] = _csv(
        ["slot", *[f"x{i}" for i in range(target.dim)], "mu", "morse_index", "residual", "action"],
        [[j, *map(float, p.position), p.mu, p.morse_index, p.residual, p.action_value] for j, p in enumerate(pts)],
    )


def cmd_index(cfg, out: Outcome):
    d, target = _domain(cfg), _target(cfg)
    H = _hamiltonian(cfg, target)
    eps = cfg["eps"]
    Hs = H.scaled(eps)
    low = max(1, d.degree - 1)
    reps = [floer_index_report(x, Hs, d, degrees=(low, d.degree)) for x, _ in separable_critical_points(H)]
    out.results = {"points": [{"x": r.x, "mu": r.mu, "mu_by_degree": {str(k): v for k, v in r.mu_by_degree.items()},
                               "morse_index": r.morse_index, "expected": r.expected} for r in reps]}
    out.check("stable_across_degrees", all(r.stable for r in reps))
    out.check("mu_equals_dim_minus_ind", all(r.agrees for r in reps))
    out.files["index.csv"] = _csv(["slot", "mu", "morse_index", "expected"],
                                  [[j, r.mu, r.morse_index, r.expected] for j, r in enumerate(reps)])
    if reps:
        fam = index_family(d, reps[0].x, Hs, degree=low, target=target)
        ts, lam = trajectories(fam, window=2.0 * fam.epsilon + 1.0)
        out.files["flow.csv"] = trajectories_csv(ts, lam)
        out.files["flow.svg"] = trajectories_svg(ts, lam)


def _solve_pair(cfg, eps):
    d, target = _domain(cfg), _target(cfg)
    H = _hamiltonian(cfg, target)
    s = cfg["solver"]
    xm, xp = (np.asarray(p, dtype=float) for p in cfg["pair"])
    sol = connect_orbit_bvp(xm, xp, H, eps, d=d, target=target, degree=s["degree"], h=s["h"], S=s["S"],
                            tol=s["tol"], max_iter=s["max_iter"], boundary_tol=s["boundary_tol"])
    return sol


def cmd_connect(cfg, out: Outcome):
    tol = cfg["tolerances"]
    sol = _solve_pair(cfg, cfg["eps"])
    out.results = sol.summary()
    out.check("residual", sol.residual <= tol["bvp_residual"])
    out.check("energy", sol.energy_error() <= tol["energy"])
    out.check("monotone", sol.monotone())
    out.check("oscillation", sol.oscillation() <= tol["oscillation"])
    rates, gaps = decay_rate(sol), endpoint_gaps(sol)
    out.results["decay"] = list(rates)
    out.results["gaps"] = list(gaps)
    out.check("decay", all(abs(r - g) <= tol["decay"] * g for r, g in zip(rates, gaps)))
    out.files["diagnostics.csv"] = sol.diagnostics_csv()
    out.files["decay.svg"] = line_plot([(sol.points, ds_norms(sol))], title="|d_s u| along the trajectory",
                                       xlabel="s", ylabel="log10 norm", logy=True)


def cmd_adiabatic(cfg, out: Outcome):
    d, target = _domain(cfg), _target(cfg)
    H = _hamiltonian(cfg, target)
    tol = cfg["tolerances"]
    s = cfg["solver"]
    rep = adiabatic_experiment(H, cfg["eps_list"], cfg["pair"], d, target, s["degree"], s["h"])
    out.results = rep.as_dict()
    drift = tol["ratio_drift"]
    out.check("oscillation", max(rep.oscillation) <= tol["oscillation"])
    out.check("ratio_drift", all(abs(r - 1) <= drift for r in rep.ratios))
    out.check("energy", max(rep.energy_errors) <= tol["energy"])
    out.check("decay", all(abs(r - g) <= tol["decay"] * g
                           for rr, gg in zip(rep.decay, rep.gaps) for r, g in zip(rr, gg)))
    out.files["adiabatic.csv"] = _csv(
        ["eps", "oscillation", "frame_sup", "probe_frame_sup", "constant", "energy_error"],
        [[e, o, f, p, c, er] for e, o, f, p, c, er in zip(rep.eps, rep.oscillation, rep.frame_sup,
                                                          rep.probe_frame_sup, rep.constants, rep.energy_errors)],
    )
    out.files["adiabatic.svg"] = line_plot(
        [(rep.eps, rep.probe_frame_sup)], title="sup |d_v u| of the probed solve against eps",
        xlabel="eps", ylabel="log10 sup", logy=True)


def cmd_floer(cfg, out: Outcome):
    d, target = _domain(cfg), _target(cfg)
    H = _hamiltonian(cfg, target)
    deg = cfg["solver"]["degree"]
    cx = floer_mod.build_complex(H, cfg["eps"], d, target, deg)
    dims = floer_mod.homology(cx)
    out.results = {"multiplicities": cx.multiplicities, "homology": dims, "generators": cx.total,
                   "boundary_zero": cx.is_zero, "boundary_squared_zero": floer_mod.verify_boundary_squared(cx)}
    out.check("boundary_squared", out.results["boundary_squared_zero"])
    out.check("betti", floer_mod.betti_compare(dims, target))
    out.check("generator_bound", cx.total >= sum(floer_mod.torus_betti(target.dim)))
    fam = cfg["family"]
    if fam["count"]:
        Hs = floer_mod.admissible_family(fam["count"], fam["seed"], target.dim, fam["coupling"])

        def one(h):
            c = floer_mod.build_complex(h, cfg["eps"], d, target, deg)
            return c.total, floer_mod.verify_boundary_squared(c), floer_mod.homology(c)

        with ThreadPoolExecutor(cfg["threads"]) as pool:
            family = list(pool.map(one, Hs))
        out.results["family"] = [{"generators": g, "boundary_squared_zero": b, "homology": h} for g, b, h in family]
        out.check("family_boundary_squared", all(b for _, b, _ in family))
        out.check("family_homology", all(h == dims for *_, h in family))
        out.check("family_generator_bound", all(g >= sum(floer_mod.torus_betti(target.dim)) for g, *_ in family))
    out.files["complex.json"] = cx.to_json() + "\n"
    out.files["boundary.csv"] = cx.boundary_csv()


def cmd_monitors(cfg, out: Outcome):
    sol = _solve_pair(cfg, cfg["eps"])
    rep = monitor_apriori(sol)
    fields = pointwise_fields(sol)
    A = rep["ler"]["A_min"]
    hz = heinz_monitor(fields["e"], A, 0.0, 1.5, sol.domain, s=fields["s"])
    out.results = {"apriori": rep, "heinz": hz, "trajectory": sol.summary()}
    out.check("ddu", rep["ddu"]["holds"])
    out.check("dudsu", rep["dudsu"]["holds"])
    if not hz["holds"]:
        out.warn("mean-value hypothesis violated on the grid with the fitted constants")
    out.files["monitors.csv"] = _csv(["s", "e_max", "ds_sq_max"],
                                     [[float(a), float(b), float(c)] for a, b, c in
                                      zip(fields["s"], fields["e"].max(axis=1), fields["ds_sq"].max(axis=1))])


def cmd_slice_check(cfg, out: Outcome):
    d = _domain(cfg)
    if d.kind is not DomainKind.SPHERE3:
        raise ConfigError("slice-check runs on the sphere domain")
    sc = cfg["slice"]
    tol = cfg["tolerances"]["slice"]
    target = Target(int(cfg["target"]["n"]))
    rows, iso, are, rad = [], [], [], []
    deg = min(int(sc["degree"]), d.degree)
    for j in range(int(sc["fields"])):
        f = random_bandlimited(d, target, deg, float(sc["amplitude"]), cfg["seed"] + j)
        rep = sphere_slice_check(f, float(sc["r"]))
        iso.append(rep.isoperimetric)
        are.append(rep.are_residual)
        rad.append(rep.radial_residual)
        rows.append([j, rep.energy, rep.action, rep.isoperimetric_margin, rep.are_residual, rep.radial_residual])
    cyl = cylinder_ball_check(d, r=float(sc["r"]), seed=cfg["seed"])
    out.results = {"fields": len(rows), "isoperimetric_all": all(iso), "max_are_residual": max(are, default=0.0),
                   "max_radial_residual": max(rad, default=0.0), "cylinder_ball": cyl.as_dict()}
    out.check("isoperimetric", all(iso))
    out.check("are_identity", max(are, default=0.0) <= tol)
    out.check("radial_identity", max(rad, default=0.0) <= tol)
    out.check("cylinder_ball", cyl.ball_residual <= tol)
    out.files["slice.csv"] = _csv(["field", "energy", "action", "isoperimetric_margin", "are_residual",
                                   "radial_residual"], rows)


HANDLERS = {
    "verify-hypercontact": cmd_verify_hypercontact,
    "spectrum": cmd_spectrum,
    "critical-points": cmd_critical_points,
    "index": cmd_index,
    "connect": cmd_connect,
    "adiabatic": cmd_adiabatic,
    "floer": cmd_floer,
    "monitors": cmd_monitors,
    "slice-check": cmd_slice_check,
}


# -- entry point ----------------------------------------------------------------------


def _target_flag(value: str) -> dict:
    v = value.lower()
    if len(v) >= 2 and v[0] in "th" and v[1:].isdigit() and int(v[1:]) % 4 == 0 and int(v[1:]) > 0:
        return {"n": int(v[1:]) // 4, "lattice": 1.0 if v[0] == "t" else None}
    raise argparse.ArgumentTypeError(f"target must look like t4 or h4, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkfloer", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--strict", action="store_true", help="treat monitor warnings as failures")
    p.add_argument("--domain", choices=("sphere", "torus"))
    p.add_argument("--degree", type=int)
    p.add_argument("--target", type=_target_flag)
    p.add_argument("--eps", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    o: dict = {"command": args.command}
    for name in ("out", "seed", "threads", "eps"):
        val = getattr(args, name)
        if val is not None:
            o[name] = val
    dom = {}
    if args.domain:
        dom["kind"] = args.domain
    if args.degree is not None:
        dom["degree"] = args.degree
    if dom:
        o["domain"] = dom
    if args.target:
        o["target"] = args.target
    return o


def _write(outdir: Path, name: str, text: str):
    (outdir / name).write_text(text)


def run(command: str, cfg: dict, strict: bool = False) -> tuple[int, dict]:
    """Execute one command with a validated config; returns (exit status, summary)."""
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    out = Outcome()
    try:
        HANDLERS[command](cfg, out)
    except (ConfigError, ConfigurationError):
        raise
    except Exception as exc:  # numerical failure: report and exit 1
        err = {"command": command, "config_hash": config_hash(cfg), "error": type(exc).__name__,
               "message": str(exc), "passed": False}
        _write(outdir, "summary.json", dump_json(err))
        return 1, err
    passed = all(out.checks.values()) and not (strict and out.warnings)
    summary = {
        "command": command,
        "config_hash": config_hash(cfg),
        "tolerances": cfg["tolerances"],
        "solver": cfg["solver"],
        "results": out.results,
        "checks": out.checks,
        "warnings": out.warnings,
        "strict": strict,
        "passed": passed,
        "files": sorted(out.files),
    }
    for name in sorted(out.files):
        _write(outdir, name, out.files[name])
    _write(outdir, "summary.json", dump_json(summary))
    return (0 if passed else 1), summary


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        status, summary = run(cfg["command"], cfg, args.strict)
    except (ConfigError, ConfigurationError) as exc:
        sys.stderr.write(dump_json({"error": "ConfigError", "message": str(exc), "passed": False}))
        return 2
    stream = sys.stdout if status == 0 else sys.stderr
    brief = {k: summary[k] for k in ("command", "passed", "checks", "error", "message") if k in summary}
    stream.write(dump_json(brief))
    return status


if __name__ == "__main__":
    sys.exit(main())
