"""Command-line front end.

Subcommands: mesh-info, solve, study, gradcheck.  Configuration comes
from defaults, then an optional key=value config file, then flags; every
run is a pure function of (argv, config file contents).

Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.
"""

import argparse
import sys

import numpy as np

from .mesh import MeshError, build_lshape_mesh
from .fem import SolverError
from .measure import MeasureError, TimeGrid
from .control import Bounds, OptimizerConfig, projected_gradient_solve
from .verify import (PROBLEMS, gradient_fd_check, level_precompute,
                     run_convergence_study, study_time_steps)


class ConfigError(ValueError):
    """Bad config file or option combination."""


class RunConfig:
    """Everything a run needs, before command-specific defaults."""

    def __init__(self):
        self.command = None
        self.problem = "lshape-measure"
        self.n = None
        self.levels = None
        self.alpha = 1.0
        self.u_a = -0.5
        self.u_b = 0.1
        self.step = None
        self.tol = 1e-8
        self.max_iter = 500
        self.out = None
        self.steps = None

    def optimizer_config(self):
        try:
            bounds = Bounds(self.u_a, self.u_b)
            return OptimizerConfig(alpha=self.alpha, bounds=bounds,
                                   step=self.step, tol=self.tol,
                                   max_iter=self.max_iter)
        except ValueError as exc:
            raise ConfigError(str(exc))

    def get_problem(self):
        if self.problem not in PROBLEMS:
            raise ConfigError("unknown problem %r (have: %s)"
                              % (self.problem, ", ".join(sorted(PROBLEMS))))
        return PROBLEMS[self.problem]()


def _parse_levels(text):
    try:
        return [int(p) for p in str(text).split(",") if p.strip() != ""]
    except ValueError:
        raise ConfigError("invalid value for levels: %r" % text)


_CONFIG_KEYS = {
    "problem": str,
    "n": int,
    "levels": _parse_levels,
    "alpha": float,
    "u_a": float,
    "u_b": float,
    "step": float,
    "tol": float,
    "max_iter": int,
    "out": str,
}


def parse_config(text):
    """Parse key=value lines (# comments) into a RunConfig.

    Unknown keys and type mismatches raise ConfigError naming the key;
    bound ordering is validated here so a config-only run fails early.
    """
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key=value, got %r"
                              % (lineno, raw.strip()))
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError("line %d: unknown key %r" % (lineno, key))
        conv = _CONFIG_KEYS[key]
        try:
            setattr(cfg, key, conv(val))
        except (ValueError, TypeError):
            raise ConfigError("line %d: invalid value for %s: %r"
                              % (lineno, key, val))
    try:
        Bounds(cfg.u_a, cfg.u_b)  # validate ordering
    except ValueError as exc:
        raise ConfigError(str(exc))
    return cfg


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def _build_parser():
    parser = _Parser(prog="measopt",
                     description="parabolic optimal control with "
                                 "measure-in-time data on an L-shape")
    sub = parser.add_subparsers(dest="command")

    def common(p, with_n=True):
        if with_n:
            p.add_argument("--n", type=int, default=None,
                           help="grid parameter (spacing 1/n, n even)")
        p.add_argument("--problem", default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--ua", type=float, default=None)
        p.add_argument("--ub", type=float, default=None)
        p.add_argument("--step", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--config", default=None,
                       help="key=value config file")

    p = sub.add_parser("mesh-info", help="print mesh counts for --n")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("solve", help="run the projected-gradient solve")
    common(p)
    p.add_argument("--steps", type=int, default=None,
                   help="time steps (default: ceil(T/h^2) rounded even)")

    p = sub.add_parser("study", help="convergence study over --levels")
    common(p, with_n=False)
    p.add_argument("--levels", default=None, help="comma list, e.g. 4,8,16")

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    return parser


def _merge(args):
    text = None
    if getattr(args, "config", None):
        with open(args.config) as fh:
            text = fh.read()
    cfg = parse_config(text) if text is not None else RunConfig()
    cfg.command = args.command
    for flag, attr in [("n", "n"), ("problem", "problem"),
                       ("alpha", "alpha"), ("ua", "u_a"), ("ub", "u_b"),
                       ("step", "step"), ("tol", "tol"),
                       ("max_iter", "max_iter"), ("out", "out"),
                       ("steps", "steps")]:
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)
    if getattr(args, "levels", None) is not None:
        cfg.levels = _parse_levels(args.levels)
    return cfg


def _write(path, content):
    with open(path, "w", newline="\n") as fh:
        fh.write(content)


def _cmd_mesh_info(cfg):
    n = cfg.n if cfg.n is not None else 8
    m = build_lshape_mesh(n)
    print("n: %d" % n)
    print("vertices: %d" % m.n_vertices)
    print("triangles: %d" % m.n_triangles)
    print("interior dof: %d" % m.interior_indices().size)
    print("h: %.6g" % m.h)
    return 0


def _cmd_solve(cfg):
    n = cfg.n if cfg.n is not None else 8
    problem = cfg.get_problem()
    ocfg = cfg.optimizer_config()
    N = cfg.steps if cfg.steps is not None else study_time_steps(n, problem.T)
    m = build_lshape_mesh(n)
    grid = TimeGrid(problem.T, N)
    op, mu_loads, yd_loads, yd_quad = level_precompute(problem, m, grid)
    u, ytraj, ztraj, rep = projected_gradient_solve(
        problem, ocfg, m, grid, op=op, mu_loads=mu_loads,
        yd_loads=yd_loads, yd_quad=yd_quad)
    prefix = cfg.out if cfg.out is not None else "solve"
    _write(prefix + "_control.csv", u.to_csv())
    _write(prefix + "_state.csv", ytraj.to_csv())
    _write(prefix + "_costate.csv", ztraj.to_csv())
    print("problem: %s  n=%d  N=%d" % (problem.name, n, N))
    print("iterations: %d (%s)" % (rep.iterations,
                                   "converged" if rep.converged
                                   else "NOT converged"))
    print("cost: %.10g" % rep.cost_history[-1])
    print("kkt residual: %.3e" % rep.kkt)
    print("wrote %s_control.csv, %s_state.csv, %s_costate.csv"
          % (prefix, prefix, prefix))
    if not rep.converged:
        return 2
    return 0


def svg_loglog(rows):
    """Minimal log-log SVG: error curves vs h plus a slope-0.5 guide."""
    series = [("err_y", "#1f77b4", [(r.h, r.err_y) for r in rows]),
              ("err_z", "#d62728", [(r.h, r.err_z) for r in rows]),
              ("err_u", "#2ca02c", [(r.h, r.err_u) for r in rows])]
    ref_h = [rows[0].h, rows[-1].h]
    ref_e0 = rows[0].err_y * 0.7
    ref = [(h, ref_e0 * (h / ref_h[0]) ** 0.5) for h in ref_h]
    xs = [np.log10(h) for r in rows for h in [r.h]]
    ys = [np.log10(v) for _, _, pts in series for (_, v) in pts]
    ys += [np.log10(v) for (_, v) in ref]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    xpad = 0.08 * max(x1 - x0, 1e-6)
    ypad = 0.08 * max(y1 - y0, 1e-6)
    x0, x1 = x0 - xpad, x1 + xpad
    y0, y1 = y0 - ypad, y1 + ypad
    W, H, ML, MB, MT, MR = 480, 360, 60, 40, 16, 16

    def px(h):
        return ML + (np.log10(h) - x0) / (x1 - x0) * (W - ML - MR)

    def py(v):
        return H - MB - (np.log10(v) - y0) / (y1 - y0) * (H - MB - MT)

    out = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">'
           % (W, H)]
    out.append('<rect width="%d" height="%d" fill="white"/>' % (W, H))
    out.append('<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>'
               % (ML, H - MB, W - MR, H - MB))
    out.append('<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>'
               % (ML, MT, ML, H - MB))
    out.append('<text x="%d" y="%d" font-size="12">h (log)</text>'
               % (W // 2, H - 8))
    out.append('<text x="12" y="%d" font-size="12" transform="rotate(-90 '
               '12 %d)">error (log)</text>' % (H // 2, H // 2))
    for r in rows:
        out.append('<text x="%.1f" y="%d" font-size="10" '
                   'text-anchor="middle">%.3g</text>'
                   % (px(r.h), H - MB + 14, r.h))
    p1, p2 = ref
    out.append('<line x1="%.1f" y1="%.1f" x2="%.1f" y2="%.1f" '
               'stroke="#888" stroke-dasharray="5,4"/>'
               % (px(p1[0]), py(p1[1]), px(p2[0]), py(p2[1])))
    out.append('<text x="%.1f" y="%.1f" font-size="10" fill="#888">'
               'slope 0.5</text>' % (px(p2[0]) + 4, py(p2[1])))
    for idx, (name, color, pts) in enumerate(series):
        path = " ".join("%.1f,%.1f" % (px(h), py(v)) for h, v in pts)
        out.append('<polyline points="%s" fill="none" stroke="%s" '
                   'stroke-width="1.5"/>' % (path, color))
        for h, v in pts:
            out.append('<circle cx="%.1f" cy="%.1f" r="3" fill="%s"/>'
                       % (px(h), py(v), color))
        out.append('<text x="%d" y="%d" font-size="11" fill="%s">%s</text>'
                   % (W - MR - 60, MT + 14 * (idx + 1), color, name))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _cmd_study(cfg):
    levels = cfg.levels if cfg.levels is not None else [4, 8, 16, 32]
    problem = cfg.get_problem()
    ocfg = cfg.optimizer_config()
    report = run_convergence_study(levels, cfg=ocfg, problem=problem,
                                   progress=lambda s: print(s,
                                                            file=sys.stderr))
    out = cfg.out if cfg.out is not None else "report.csv"
    _write(out, report.to_csv())
    svg_path = (out[:-4] if out.endswith(".csv") else out) + ".svg"
    ok_rows = [r for r in report.rows if r.error is None]
    if ok_rows:
        _write(svg_path, svg_loglog(ok_rows))
    print(report.to_text(), end="")
    print("wrote %s and %s" % (out, svg_path))
    if any(r.error is not None for r in report.rows):
        return 2
    return 0


def _cmd_gradcheck(cfg):
    n = cfg.n if cfg.n is not None else 4
    N = cfg.steps if cfg.steps is not None else 4
    problem = cfg.get_problem()
    worst = gradient_fd_check(problem, n, N)
    print("max relative fd error: %.3e" % worst)
    if worst > 1e-4:
        return 2
    return 0


def dispatch(argv):
    """Run one command; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgError as exc:
        print("error: %s" % exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = _merge(args)
        if args.command == "mesh-info":
            return _cmd_mesh_info(cfg)
        if args.command == "solve":
            return _cmd_solve(cfg)
        if args.command == "study":
            return _cmd_study(cfg)
        if args.command == "gradcheck":
            return _cmd_gradcheck(cfg)
        print("error: unknown command %r" % args.command, file=sys.stderr)
        return 1
    except (ConfigError, MeshError, MeasureError, ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (SolverError, FloatingPointError, RuntimeError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
