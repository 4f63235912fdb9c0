"""Command-line entry point.

Each command writes one artifact.  Outputs are deterministic for a given
config and seed, written atomically, and start with a provenance header.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import scan_energies, spike_locations, verify_construction
from .coeffs import (
    CoeffKey,
    EvalPoint,
    check_convolution_identities,
    check_h_expansion,
    check_reflection,
    default_engine,
)
from .errors import EmbeddedEigenError
from .integrator import (
    Trajectory,
    integrate_coupled_construction,
    integrate_prufer,
    shoot_psi_initial,
)
from .model import PotentialModel
from .phase_sets import PhaseSet, build_resonance_set
from .potential import ConstructionPlan, PotentialSpec, plan_construction
from .rational import RationalParseError, format_rational, parse_rational, parse_rational_list

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILED = 3
EXIT_ERROR = 4

CSV_HEADER = "x,theta,logR,xi,psi"


class ConfigError(ValueError):
    def __init__(self, path, line, column, reason):
        self.line, self.column = line, column
        super().__init__(f"{path}: line {line}, column {column}: {reason}")


# -- artifact plumbing ---------------------------------------------------------

def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(args, text: str) -> None:
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def provenance(args, config_text: str | None) -> dict:
    h = hashlib.sha256()
    h.update((config_text or "").encode())
    h.update(json.dumps(_relevant_args(args), sort_keys=True).encode())
    return {"config_hash": h.hexdigest(), "seed": args.seed, "version": __version__,
            "command": args.command}


_INPUT_FILES = ("plan", "traj")


def _relevant_args(args) -> dict:
    # input files enter by content so that provenance does not depend on paths
    skip = {"func", "out", "config"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if k in _INPUT_FILES and v is not None:
            v = "sha256:" + hashlib.sha256(Path(v).read_bytes()).hexdigest()
        elif not isinstance(v, (int, float, str, bool, type(None), list)):
            v = str(v)
        out[k] = v
    return out


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def csv_header(prov: dict) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in prov.items())


def fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(float(v), ".17g")


# -- config --------------------------------------------------------------------

def load_config(path) -> tuple[dict, str]:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(path, exc.lineno, exc.colno, exc.msg) from None
    if not isinstance(doc, dict):
        raise ConfigError(path, 1, 1, "top level must be an object")
    return doc, text


def _locate(text: str, needle: str) -> tuple[int, int]:
    idx = text.find(needle)
    if idx < 0:
        return 1, 1
    line = text.count("\n", 0, idx) + 1
    col = idx - (text.rfind("\n", 0, idx) + 1) + 1
    return line, col


def spec_from_config(doc: dict, text: str, path) -> PotentialSpec:
    body = doc.get("spec", doc)
    try:
        return PotentialSpec.from_json(body).validate()
    except RationalParseError as exc:
        line, col = _locate(text, json.dumps(exc.text)[1:-1])
        raise ConfigError(path, line, col + exc.column - 1, exc.reason) from None
    except KeyError as exc:
        raise ConfigError(path, 1, 1, f"missing field {exc}") from None


def _setting(args, doc, name, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return doc.get(name, default)


# -- commands ------------------------------------------------------------------

def cmd_resonance_set(args) -> int:
    phases = parse_rational_list(args.phases)
    a = PhaseSet.of(phases)
    if not a.is_symmetric():
        raise ValueError("phase set must be symmetric (A = -A)")
    rs = build_resonance_set(a, args.p)
    doc = {
        "order": rs.order,
        "phases": [format_rational(x) for x in a.phases],
        "energies": [format_rational(e) for e in rs.energies],
        "etas": [format_rational(e) for e in rs.etas()],
        "representations": {format_rational(e): [[format_rational(x) for x in r] for r in reps]
                            for e, reps in rs.representations.items()},
        "zero_representations": [[format_rational(x) for x in r]
                                 for r in rs.zero_representations],
    }
    emit(args, dump_json(doc))
    return EXIT_OK


def _coeff_which(args):
    for name in ("f", "g", "F", "G"):
        v = getattr(args, "c_" + name)
        if v is not None:
            return name, v
    raise ValueError("choose one of --f/--g/--F/--G I K")


def cmd_coeffs(args) -> int:
    if args.sub == "eval":
        name, (I, K) = _coeff_which(args)
        eta = parse_rational(args.eta)
        # phases default to zero, the base cases do not depend on them
        phis = tuple(parse_rational_list(args.phis)) if args.phis else (Fraction(0),) * I
        if len(phis) != I:
            raise ValueError(f"need exactly I={I} phases, got {len(phis)}")
        fn = {"f": default_engine.f, "g": default_engine.g,
              "F": default_engine.F, "G": default_engine.G}[name]
        v = fn(CoeffKey(I, K), EvalPoint(eta, phis))
        text = format_rational(v.value) if v.finite else "non-finite"
        if not v.finite and v.hyperplanes:
            planes = "; ".join(f"{k}*eta = " + " + ".join(format_rational(x) for x in S)
                               for k, S in v.hyperplanes)
            text += f" (hyperplane {planes})"
        emit(args, text + "\n")
        return EXIT_OK if v.finite else EXIT_FAILED
    if args.sub == "check":
        if args.identity == "reflection":
            reports = [check_reflection(args.I, args.trials, args.seed)]
        else:
            rf, rg = check_convolution_identities(args.I, args.K, args.k, args.trials, args.seed)
            reports = {"F": [rf], "G": [rg], "both": [rf, rg]}[args.identity]
        lines = [f"{r.name} {r.params}: {r.summary()}" for r in reports]
        for r in reports:
            for pt, lhs, rhs in r.violations[:5]:
                lines.append(f"  violation at eta={pt.eta}, phis={pt.phis}: {lhs} != {rhs}")
        if len(reports) == 1:
            lines = [reports[0].summary()] + lines[1:]
        emit(args, "\n".join(lines) + "\n")
        return EXIT_OK if all(r.ok for r in reports) else EXIT_FAILED
    if args.sub == "oracle":
        rep = check_h_expansion(args.I, args.trials, args.seed)
        text = f"path-sum vs recursion I={args.I}: {rep.summary()} (skipped {rep.skipped})\n"
        emit(args, text)
        return EXIT_OK if rep.ok else EXIT_FAILED
    raise ValueError(f"unknown coeffs subcommand {args.sub}")


def cmd_build(args) -> int:
    doc, text = load_config(args.config)
    spec = spec_from_config(doc, text, args.config)
    plan = plan_construction(spec)
    out = {"provenance": provenance(args, text), "spec": spec.to_json(), "plan": plan.to_json()}
    emit(args, dump_json(out))
    return EXIT_OK


def _load_plan(args, spec) -> ConstructionPlan | None:
    if getattr(args, "plan", None):
        doc = json.loads(Path(args.plan).read_text())
        return ConstructionPlan.from_json(doc.get("plan", doc))
    try:
        return plan_construction(spec)
    except EmbeddedEigenError:
        return None


def trajectory_csv(traj: Trajectory, prov: dict) -> str:
    rows = [csv_header(prov), CSV_HEADER + "\n"]
    xi = traj.xi if traj.xi is not None else [None] * len(traj.x)
    psi = traj.psi if traj.psi is not None else [None] * len(traj.x)
    for a, b, c, d, e in zip(traj.x, traj.theta, traj.logR, xi, psi):
        rows.append(f"{fmt(a)},{fmt(b)},{fmt(c)},{fmt(d)},{fmt(e)}\n")
    return "".join(rows)


def read_trajectory_csv(path, E: float) -> Trajectory:
    cols = {"x": [], "theta": [], "logR": [], "xi": [], "psi": []}
    header = None
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            if header != CSV_HEADER.split(","):
                raise ValueError(f"unexpected CSV header {line!r}")
            continue
        for name, v in zip(header, line.split(",")):
            cols[name].append(float(v) if v else float("nan"))
    arr = {k: np.array(v) for k, v in cols.items()}
    has_xi = arr["xi"].size and not np.all(np.isnan(arr["xi"]))
    return Trajectory(E, 2.0 * math.sqrt(E), arr["x"], arr["theta"], arr["logR"],
                      xi=arr["xi"] if has_xi else None, psi=arr["psi"] if has_xi else None)


def cmd_simulate(args) -> int:
    doc, text = load_config(args.config)
    spec = spec_from_config(doc, text, args.config)
    plan = _load_plan(args, spec)
    x_max = float(_setting(args, doc, "x_max", 1e4))
    tol = float(_setting(args, doc, "tol", 1e-10))
    n = int(_setting(args, doc, "samples", 400))
    theta0 = float(_setting(args, doc, "theta0", 0.0))
    x0 = spec.x0
    mesh = np.geomspace(x0, x_max, n)
    model = PotentialModel.from_spec(spec, plan)
    E = float(spec.E)
    dynamic = plan is not None and model.xi_weight != 0
    prov = provenance(args, text)
    if dynamic:
        if args.xi0 is not None:
            traj = integrate_coupled_construction(model, E, theta0, args.xi0, mesh, tol=tol)
            prov["xi0"] = fmt(args.xi0)
        else:
            target = plan.target_psi + (math.pi if args.wrong_target else 0.0)
            shot = shoot_psi_initial(model, E, mesh, target, ode_tol=tol)
            traj = shot.trajectory
            prov["xi0"] = fmt(shot.xi0)
            prov["shooting_residual"] = fmt(shot.residual)
    else:
        traj = integrate_prufer(model, E, theta0, 0.0, mesh, tol=tol)
    prov["sup_logR"] = fmt(traj.sup_logR)
    emit(args, trajectory_csv(traj, prov))
    return EXIT_OK


def cmd_verify(args) -> int:
    doc, text = load_config(args.config)
    spec = spec_from_config(doc, text, args.config)
    plan = _load_plan(args, spec)
    if plan is None:
        raise ValueError("verify needs a construction plan")
    traj = read_trajectory_csv(args.traj, float(spec.E))
    env_tol = float(_setting(args, doc, "envelope_tol", 0.15))
    report = verify_construction(spec, plan, traj, envelope_tol=env_tol)
    report = {"provenance": provenance(args, text), **report}
    emit(args, dump_json(report))
    return EXIT_OK if report["all_pass"] else EXIT_FAILED


GNUPLOT = """# sup log R against energy
set datafile separator ","
set datafile commentschars "#"
set xlabel "E"
set ylabel "sup log R"
set grid
set key autotitle columnhead
plot "{csv}" using 1:2 with linespoints pt 7 ps 0.5
"""


def cmd_scan(args) -> int:
    doc, text = load_config(args.config)
    spec = spec_from_config(doc, text, args.config)
    model = PotentialModel.from_spec(spec, None)
    grid = doc.get("grid", {})
    e_min = float(args.e_min if args.e_min is not None else grid.get("e_min", 0.2))
    e_max = float(args.e_max if args.e_max is not None else grid.get("e_max", 3.0))
    n = int(args.n if args.n is not None else grid.get("n", 57))
    x_max = float(_setting(args, doc, "x_max", 1e3))
    tol = float(_setting(args, doc, "tol", 1e-9))
    E_grid = np.linspace(e_min, e_max, n)
    rows = scan_energies(model, E_grid, (spec.x0, x_max), tol=tol, workers=args.workers)
    prov = provenance(args, text)
    prov["spikes"] = ";".join(fmt(e) for e in spike_locations(rows))
    out = [csv_header(prov), "E,sup_logR,status\n"]
    out += [f"{fmt(r.E)},{fmt(r.sup_logR)},{r.status}\n" for r in rows]
    emit(args, "".join(out))
    if args.out:
        gp = Path(args.out).with_suffix(".gp")
        atomic_write(gp, GNUPLOT.format(csv=Path(args.out).name))
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_FAILED


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (spec plus settings)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--x-max", dest="x_max", type=float, default=None)
    common.add_argument("--out", help="output path (default: stdout)")

    ap = argparse.ArgumentParser(prog="embedded-eigen", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resonance-set", parents=[common], help="candidate energies S_p")
    p.add_argument("--phases", required=True, help="comma separated rationals, e.g. 2,-2")
    p.add_argument("--p", type=int, required=True)
    p.set_defaults(func=cmd_resonance_set)

    p = sub.add_parser("coeffs", help="exact coefficient functions")
    csub = p.add_subparsers(dest="sub", required=True)
    e = csub.add_parser("eval", parents=[common])
    for name in ("f", "g", "F", "G"):
        e.add_argument(f"--{name}", dest=f"c_{name}", nargs=2, type=int, metavar=("I", "K"))
    e.add_argument("--eta", required=True)
    e.add_argument("--phis", default="", help="comma separated rationals (I of them); write --phis=-2,5 "
                   "when the first entry is negative")
    c = csub.add_parser("check", parents=[common])
    c.add_argument("--identity", choices=("F", "G", "both", "reflection"), default="both")
    c.add_argument("--I", type=int, required=True)
    c.add_argument("--K", type=int, default=2)
    c.add_argument("--k", type=int, default=1)
    c.add_argument("--trials", type=int, default=100)
    o = csub.add_parser("oracle", parents=[common])
    o.add_argument("--I", type=int, required=True)
    o.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("build", parents=[common], help="construction plan JSON")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("simulate", parents=[common], help="trajectory CSV")
    p.add_argument("--plan")
    p.add_argument("--xi0", type=float, default=None, help="skip shooting, use this xi(x0)")
    p.add_argument("--wrong-target", action="store_true",
                   help="shoot for the growing branch (control run)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="verification report JSON")
    p.add_argument("--plan")
    p.add_argument("--traj", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scan", parents=[common], help="sup log R over an energy grid")
    p.add_argument("--e-min", dest="e_min", type=float)
    p.add_argument("--e-max", dest="e_max", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_scan)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    needs_config = args.command in ("build", "simulate", "verify", "scan")
    if needs_config and not args.config:
        ap.error(f"{args.command} requires --config")
    try:
        return args.func(args)
    except (ConfigError, RationalParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmbeddedEigenError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
