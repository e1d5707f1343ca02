"""Command-line front end.

Every subcommand takes an instance file path or a bundled instance name and
prints either an aligned table or a JSON run artifact (``--format records``).
Exit status: 0 success, 2 invalid input, 3 enumeration cap exceeded, 1 other.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import bounds as rb
from . import coding
from .distortion import DEFAULT_CAP, compute_D0, compute_D1
from .errors import CapExceeded, InfeasibleTarget, ValidationError
from .instance import load_instance

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_CAP = 0, 1, 2, 3
DEFAULT_SIM_EPS = 1.0
DEFAULT_SIM_DELTA = 0.032


def _num(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _endpoints(inst, args):
    return (compute_D0(inst, cap=args.cap, heuristic=args.heuristic),
            compute_D1(inst, cap=args.cap, heuristic=args.heuristic))


def cmd_validate(inst, args):
    res = rb.factorization_residuals(inst)
    return [{
        "name": inst.name, **{f"size_{k}": v for k, v in inst.sizes.items()},
        "d_max": inst.d_max, "special_case": rb.detect_special_case(inst).value,
        "residual_y_only": res["adversary_on_Y_only"], "residual_z_only": res["adversary_on_Z_only"],
    }]


def cmd_endpoints(inst, args):
    d0, d1 = _endpoints(inst, args)
    rows = []
    for label, ep in (("D0", d0), ("D1", d1)):
        rows.append({"endpoint": label, "value": ep.value, "certified": ep.certified,
                     "estimator": ep.estimator.table.tolist(), "jammer": ep.jammer.tolist()})
    return rows


def cmd_bounds(inst, args):
    eps = _endpoints(inst, args)
    lo = rb.rate_lower_bound(inst, args.d, endpoints=eps, resolution=args.resolution)
    up = rb.rate_upper_bound(inst, args.d, endpoints=eps, resolution=args.resolution, extra_q=[lo.witness])
    rows = []
    for c in (lo, up):
        rows.append({"kind": c.kind, "D": c.d_target, "rate": c.rate, "certified": c.certified,
                     "grid_resolution": c.grid_resolution, "worst_q": c.worst_q.tolist()})
    rows[1]["robust_distortion"] = rb.robust_distortion(inst, up.test_channel)
    return rows


def cmd_curve(inst, args):
    curve = rb.rd_curve(inst, points=args.points, above=args.above,
                        lower_kw={"resolution": args.resolution}, upper_kw={"resolution": args.resolution})
    return [{"D": d, "R_lower": lo, "R_upper": up, "certified_lower": c, "grid_res_upper": g}
            for d, lo, up, c, g in zip(curve.d_grid, curve.lower, curve.upper, curve.certified_lower, curve.grid_res_upper)]


def cmd_special_case(inst, args):
    case = rb.detect_special_case(inst)
    row = {"special_case": case.value, **{f"residual_{k}": v for k, v in rb.factorization_residuals(inst).items()}}
    if case is not rb.SpecialCase.NONE:
        curve = rb.rd_curve(inst, points=args.points, above=args.above,
                            lower_kw={"resolution": args.resolution}, upper_kw={"resolution": args.resolution})
        row["max_gap"] = float(np.max(curve.upper - curve.lower))
        row["points"] = int(curve.d_grid.size)
    return [row]


def _strategy(inst, tc, up, name):
    if name == "iid":
        return coding.JammingStrategy.iid(up.worst_q, "iid-worst")
    if name == "map":
        return coding.JammingStrategy.deterministic_map(coding.worst_deterministic_map(inst, tc), "map-worst")
    return coding.JammingStrategy.sequence_search(label="search")


def cmd_simulate(inst, args):
    eps = _endpoints(inst, args)
    lo = rb.rate_lower_bound(inst, args.d, endpoints=eps)
    up = rb.rate_upper_bound(inst, args.d, endpoints=eps, extra_q=[lo.witness])
    tc = up.test_channel
    slack = coding.SlackSchedule.from_eps(args.eps, inst.sizes, delta=args.delta)
    cfg = coding.SimConfig(args.n, args.trials, args.seed, slack)
    cb = coding.build_codebook(inst, tc, args.n, slack, args.seed)
    rows = []
    for name in args.strategy:
        rep = coding.run_trials(inst, tc, _strategy(inst, tc, up, name), cfg, codebook=cb, workers=args.workers,
                                keep_records=bool(args.log),
                                bounds={"D": args.d, "R_lower": lo.rate, "R_upper": up.rate})
        if args.log:
            path = args.log if len(args.strategy) == 1 else f"{args.log}.{name}"
            _atomic_write(path, "\n".join(rep.log_lines()) + "\n")
        d = rep.to_dict()
        rows.append({"strategy": name, **{k: v for k, v in d.items() if not isinstance(v, dict)},
                     "R_lower": lo.rate, "R_upper": up.rate})
    return rows


COMMANDS = {
    "validate": cmd_validate,
    "endpoints": cmd_endpoints,
    "bounds": cmd_bounds,
    "curve": cmd_curve,
    "simulate": cmd_simulate,
    "special-case": cmd_special_case,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avrs", description="Rate-distortion bounds and coding simulation for jammed remote sources.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("instance", help="instance JSON path or bundled name")
    common.add_argument("--cap", type=int, default=DEFAULT_CAP, help="estimator-table enumeration cap")
    common.add_argument("--heuristic", action="store_true", help="allow non-certified endpoints above the cap")
    common.add_argument("--eps", type=float, default=DEFAULT_SIM_EPS, help="simulator rate slack epsilon")
    common.add_argument("--resolution", type=int, default=rb.DEFAULT_RESOLUTION, help="jammer grid steps per unit")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="write output here (atomically) instead of stdout")
    common.add_argument("--format", choices=("table", "records"), default="table")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="load and check an instance")
    sub.add_parser("endpoints", parents=[common], help="minimax distortions D0 and D1")
    b = sub.add_parser("bounds", parents=[common], help="lower and upper rate bounds at one distortion")
    b.add_argument("--d", type=float, required=True)
    for name in ("curve", "special-case"):
        c = sub.add_parser(name, parents=[common])
        c.add_argument("--points", type=int, default=33)
        c.add_argument("--above", type=int, default=3)
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo run of the binned code")
    s.add_argument("--d", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--delta", type=float, default=DEFAULT_SIM_DELTA, help="typicality slack (default decoupled from eps)")
    s.add_argument("--strategy", nargs="+", choices=("iid", "map", "search"), default=["iid", "map", "search"])
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--log", help="per-trial tab-separated log path")
    return p


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return json.dumps(v, separators=(",", ":"))
    return str(v)


def render_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    cells = [[_fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def render_records(argv: list[str], inst, seed: int, rows: list[dict]) -> str:
    results = [{"instance_hash": inst.digest, "seed": seed, **{k: _num(v) for k, v in r.items()}} for r in rows]
    artifact = {"command": argv, "instance_hash": inst.digest, "seed": seed,
                "tool_version": __version__, "results": results}
    return json.dumps(artifact, sort_keys=True, indent=1) + "\n"


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".avrs-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        inst = load_instance(args.instance)
        rows = [{k: _num(v) for k, v in r.items()} for r in COMMANDS[args.command](inst, args)]
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleTarget as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CapExceeded as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = render_records(argv, inst, args.seed, rows) if args.format == "records" else render_table(rows)
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
