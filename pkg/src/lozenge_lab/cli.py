"""Command-line front end: ``lozenge-lab <command> [options]``.

Exit codes: 0 success, 2 invalid input or parameters, 3 an acceptance gate
failed.  Result tables are written as CSV under ``--out`` with a
``lozenge-lab/v1`` first line and the run parameters as ``#`` comments;
figures are written next to them as PNG.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import LozengeError

SCHEMA = "lozenge-lab/v1"
EXIT_OK, EXIT_INVALID, EXIT_GATE = 0, 2, 3

log = logging.getLogger("lozenge_lab")

# per-command defaults; a JSON --config file and then explicit flags override them
DEFAULTS = {
    "enumerate": {"domain": "hex:1,1,1", "cap": 10 ** 6},
    "mixtime": {"domain": "hex:1,1,1", "mode": "exact", "replicas": 1000},
    "scaling": {"sizes": [8, 12, 16, 24, 32], "slope": [-1 / 3, -1 / 3], "replicas": 64,
                "gate": True},
    "relax": {"n": 24, "slope": [-1 / 3, -1 / 3], "replicas": 32},
    "fluct": {"sizes": [12, 24], "slope": [-1 / 3, -1 / 3], "replicas": 64, "snapshots": 8,
              "exact_check": True, "gate": True},
    "ptrf": {"sizes": [8, 12, 16], "widths": [2, 4], "slope": [-1 / 3, -1 / 3], "replicas": 64},
    "perturb": {"profile": "curved", "xi": 0.25, "w": [0.0, 0.0], "eps": 0.005, "r": 0.08,
                "grid": 65, "base_grid": 257, "schedule": None, "ratio": False},
    "render": {"input": None, "sample": None, "time": None, "contours": False, "output": None},
}


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of option values")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="lozenge-lab", parents=[common],
                                description="Glauber dynamics on lozenge tilings")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    e = sub.add_parser("enumerate", parents=[common], help="enumerate all tilings")
    e.add_argument("--domain", default=S)
    e.add_argument("--cap", type=int, default=S)

    m = sub.add_parser("mixtime", parents=[common], help="exact or coupling mixing time")
    m.add_argument("--domain", default=S)
    m.add_argument("--mode", choices=("exact", "coupling"), default=S)
    m.add_argument("--replicas", type=int, default=S)

    s = sub.add_parser("scaling", parents=[common], help="coupling time against size")
    s.add_argument("--sizes", type=_ints, default=S)
    s.add_argument("--slope", type=_floats, default=S)
    s.add_argument("--replicas", type=int, default=S)
    s.add_argument("--no-gate", dest="gate", action="store_false", default=S)

    r = sub.add_parser("relax", parents=[common], help="sup-distance to the limit shape")
    r.add_argument("--n", type=int, default=S)
    r.add_argument("--slope", type=_floats, default=S)
    r.add_argument("--replicas", type=int, default=S)

    f = sub.add_parser("fluct", parents=[common], help="equilibrium moments at the centre")
    f.add_argument("--sizes", type=_ints, default=S)
    f.add_argument("--slope", type=_floats, default=S)
    f.add_argument("--replicas", type=int, default=S)
    f.add_argument("--snapshots", type=int, default=S)
    f.add_argument("--no-exact-check", dest="exact_check", action="store_false", default=S)
    f.add_argument("--no-gate", dest="gate", action="store_false", default=S)

    c = sub.add_parser("ptrf", parents=[common], help="censored coupling between bands")
    c.add_argument("--sizes", type=_ints, default=S)
    c.add_argument("--widths", type=_ints, default=S)
    c.add_argument("--slope", type=_floats, default=S)
    c.add_argument("--replicas", type=int, default=S)

    q = sub.add_parser("perturb", parents=[common], help="perturbation expansion check")
    q.add_argument("--profile", choices=("affine", "curved"), default=S)
    q.add_argument("--xi", type=float, default=S)
    q.add_argument("--w", type=_floats, default=S)
    q.add_argument("--eps", type=float, default=S)
    q.add_argument("--r", type=float, default=S)
    q.add_argument("--grid", type=int, default=S)
    q.add_argument("--base-grid", dest="base_grid", type=int, default=S)
    q.add_argument("--schedule", type=_floats, default=S,
                   help="delta,eta,eps0,i: take (eps, r) from the schedule")
    q.add_argument("--ratio", action="store_true", default=S, help="also run eps/2")

    d = sub.add_parser("render", parents=[common], help="SVG of a height dump or a sample")
    d.add_argument("--input", default=S, help="height CSV dump")
    d.add_argument("--sample", default=S, help="domain spec to sample from")
    d.add_argument("--time", type=float, default=S, help="sampling time (default 5 n^2)")
    d.add_argument("--contours", action="store_true", default=S)
    d.add_argument("--output", default=S, help="SVG path (default OUT/render.svg)")
    return p


def resolve(ns):
    """Merge defaults, the JSON config and explicit flags (in that order)."""
    opts = {"seed": 0, "threads": None, "deterministic": False, "out": "out", "verbose": False}
    opts.update(DEFAULTS[ns.command])
    given = vars(ns)
    if "config" in given:
        try:
            cfg = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise LozengeError(f"cannot read config {given['config']}: {exc}") from None
        if not isinstance(cfg, dict):
            raise LozengeError("config must be a JSON object")
        section = cfg.get(ns.command, {})
        glob = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        for src in (glob, section):
            for k, v in src.items():
                key = k.replace("-", "_")
                if key not in opts:
                    raise LozengeError(f"unknown config key {k!r} for {ns.command}")
                opts[key] = v
    for k, v in given.items():
        if k not in ("command", "config"):
            opts[k] = v
    opts["command"] = ns.command
    return opts


# ---------------------------------------------------------------------------
# output helpers

def _header(opts):
    lines = [SCHEMA, f"# command={opts['command']}"]
    for k in sorted(opts):
        if k in ("out", "command", "verbose", "output", "input", "threads"):
            continue
        lines.append(f"# {k}={json.dumps(opts[k])}")
    if not opts["deterministic"]:
        now = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        lines.append(f"# timestamp={now}")
    return lines


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(opts, name, rows):
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    buf = io.StringIO()
    for line in _header(opts):
        buf.write(line + "\n")
    if rows:
        cols = list(rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
    path.write_text(buf.getvalue())
    return path


def read_csv(path):
    """Rows of a file written by write_csv (header and comments skipped)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != SCHEMA:
        raise LozengeError(f"{path} is not a {SCHEMA} file")
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    return list(csv.DictReader(body))


def _figure(opts, name, fn, *args):
    path = Path(opts["out"]) / name
    try:
        fn(*args, path)
    except Exception as exc:   # figures never decide the exit code
        log.warning("figure %s failed: %s", name, exc)
    return path


# ---------------------------------------------------------------------------
# commands

def cmd_enumerate(opts):
    from .exact import enumerate_states, macmahon
    from .lattice import DomainSpec, build_domain
    from .height import forced_boundary
    spec = DomainSpec.parse(opts["domain"])
    S = enumerate_states(forced_boundary(build_domain(spec)), int(opts["cap"]))
    print(len(S))
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "enumerate_states.csv").write_text("\n".join(_header(opts)) + "\n" + S.to_csv())
    if spec.variant == "hexagon":
        log.info("MacMahon count %d", macmahon(*spec.params))
    return EXIT_OK


def cmd_mixtime(opts):
    from .experiments import coupling_mixtime, exact_mixtime
    from .lattice import DomainSpec
    from . import plotting
    spec = DomainSpec.parse(opts["domain"])
    if opts["mode"] == "exact":
        t = exact_mixtime(spec)
        print(f"{t:.6f}")
        write_csv(opts, "mixtime.csv", [{"domain": opts["domain"], "mode": "exact", "t_mix": t}])
        return EXIT_OK
    res = coupling_mixtime(spec, replicas=int(opts["replicas"]), seed=opts["seed"])
    rows = res.rows() + [{"quantile": "ci_median_low", "time": res.stats.ci_low},
                         {"quantile": "ci_median_high", "time": res.stats.ci_high}]
    for r in rows:
        print(f"{r['quantile']}: {r['time']:.6f}")
    write_csv(opts, "mixtime.csv", rows)
    write_csv(opts, "mixtime_times.csv", [{"replica": i, "time": float(t)}
                                          for i, t in enumerate(res.times)])
    _figure(opts, "mixtime.png", plotting.plot_mixtime, res.times, None)
    return EXIT_OK


def cmd_scaling(opts):
    from .experiments import scaling
    from . import plotting
    res = scaling(opts["sizes"], tuple(opts["slope"]), int(opts["replicas"]), opts["seed"])
    write_csv(opts, "scaling.csv", res.rows())
    summ = res.summary()
    write_csv(opts, "scaling_fit.csv", [summ])
    _figure(opts, "scaling.png", plotting.plot_scaling, res)
    for k, v in summ.items():
        print(f"{k}={v}")
    ok = 1.8 <= res.exponent <= 2.6 and res.monotone
    return EXIT_OK if ok or not opts["gate"] else EXIT_GATE


def cmd_relax(opts):
    from .experiments import relax
    from . import plotting
    res = relax(int(opts["n"]), tuple(opts["slope"]), replicas=int(opts["replicas"]),
                seed=opts["seed"])
    write_csv(opts, "relax.csv", res.rows())
    _figure(opts, "relax.png", plotting.plot_relax, res)
    print(f"initial={res.initial}")
    for eps in (0.1, 0.05):
        print(f"entry_time(eps={eps})={res.entry_time(eps)}")
    return EXIT_OK


def cmd_fluct(opts):
    from .experiments import exact_fluct_check, fluct
    from . import plotting
    res = fluct(opts["sizes"], tuple(opts["slope"]), int(opts["replicas"]),
                int(opts["snapshots"]), opts["seed"])
    rows = res.rows()
    write_csv(opts, "fluct.csv", rows)
    _figure(opts, "fluct.png", plotting.plot_fluct, res)
    for r in rows:
        print(f"n={r['n']} central_m1={r['central_m1']:.6g} (stderr {r['stderr_m1']:.2g})")
    ok = res.jensen_ok()
    sizes = list(opts["sizes"])
    for (a, b), ratio in zip(zip(sizes, sizes[1:]), res.ratio(1)):
        print(f"ratio m1 {a}->{b} = {ratio:.4f}")
        if b == 2 * a and ratio < 1.4:
            ok = False
    if opts["exact_check"]:
        ex = exact_fluct_check(seed=opts["seed"])
        print(f"exact hex:1,1,2 m1={ex.exact:.6f} simulated={ex.simulated:.6f} z={ex.z:.2f}")
        write_csv(opts, "fluct_exact.csv", [{"exact": ex.exact, "simulated": ex.simulated,
                                             "stderr": ex.stderr, "z": ex.z}])
        ok = ok and ex.z <= 3
    return EXIT_OK if ok or not opts["gate"] else EXIT_GATE


def cmd_ptrf(opts):
    from .experiments import ptrf_sweep
    from . import plotting
    res = ptrf_sweep(opts["sizes"], opts["widths"], tuple(opts["slope"]), int(opts["replicas"]),
                     opts["seed"])
    write_csv(opts, "ptrf.csv", res.rows())
    _figure(opts, "ptrf.png", plotting.plot_ptrf, res)
    print(f"C_hat={res.C_hat:.6g} spread={res.spread:.3f} holds={res.holds}")
    return EXIT_OK if res.holds else EXIT_GATE


def cmd_perturb(opts):
    from .experiments import perturb
    from .surface import build_schedule
    eps, r = float(opts["eps"]), float(opts["r"])
    if opts["schedule"]:
        vals = list(opts["schedule"])
        if len(vals) != 4:
            raise LozengeError("--schedule expects delta,eta,eps0,i")
        sch = build_schedule(vals[0], vals[1], vals[2])
        i = int(vals[3])
        if not 0 <= i <= sch.i_max:
            raise LozengeError(f"schedule index {i} outside 0..{sch.i_max}")
        eps, r = float(sch.eps[i]), float(sch.r[i])
    args = (opts["profile"], float(opts["xi"]), tuple(opts["w"]))
    rep = perturb(*args, eps, r, int(opts["grid"]), int(opts["base_grid"]), opts["seed"])
    reports = [rep]
    if opts["ratio"]:
        reports.append(perturb(*args, eps / 2, r, int(opts["grid"]), int(opts["base_grid"]),
                               opts["seed"]))
    rows = [x.as_record() for x in reports]
    for row in rows:
        row["w"] = ",".join(str(c) for c in row["w"])
    write_csv(opts, "perturb.csv", rows)
    Path(opts["out"], "perturb.txt").write_text("".join(x.to_text() + "\n" for x in reports))
    sys.stdout.write(rep.to_text())
    if opts["ratio"]:
        ratio = rep.R / reports[1].R if reports[1].R > 0 else float("nan")
        print(f"ratio={ratio}")
    ok = all(x.R <= 10 * x.budget and x.a < 0.25 for x in reports)
    return EXIT_OK if ok else EXIT_GATE


def cmd_render(opts):
    from .render import domain_for_dump, render_svg
    if opts["input"]:
        try:
            text = Path(opts["input"]).read_text()
        except OSError as exc:
            raise LozengeError(f"cannot read {opts['input']}: {exc}") from None
        h = domain_for_dump(text)
    elif opts["sample"]:
        from .glauber import sample_states
        from .height import HeightFunction, dump_height_csv, extremal_heights, forced_boundary
        from .lattice import DomainSpec, build_domain
        dom = build_domain(DomainSpec.parse(opts["sample"]))
        _, top = extremal_heights(forced_boundary(dom))
        n = max(1.0, dom.diameter() / dom.mesh)
        t = float(opts["time"]) if opts["time"] is not None else 5.0 * n * n
        h = HeightFunction(dom, sample_states(top, t, seed=opts["seed"])[0])
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "sample_height.csv").write_text(
            dump_height_csv(h, [f"seed={opts['seed']}", f"time={t!r}", f"domain={opts['sample']}"]))
    else:
        raise LozengeError("render needs --input or --sample")
    svg = render_svg(h, contours=bool(opts["contours"]))
    target = Path(opts["output"]) if opts["output"] else Path(opts["out"]) / "render.svg"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(svg)
    print(target)
    return EXIT_OK


COMMANDS = {"enumerate": cmd_enumerate, "mixtime": cmd_mixtime, "scaling": cmd_scaling,
            "relax": cmd_relax, "fluct": cmd_fluct, "ptrf": cmd_ptrf, "perturb": cmd_perturb,
            "render": cmd_render}


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        opts = resolve(ns)
    except LozengeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if opts["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if opts["threads"]:
        import numba
        numba.set_num_threads(int(opts["threads"]))
    try:
        return COMMANDS[opts["command"]](opts)
    except (LozengeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
