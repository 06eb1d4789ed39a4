"""Command-line front end: ``solve``, ``check-field`` and ``plot``.

Configuration files are flat ``key = value`` text with dotted keys::

    field.builtin = steady_parabolic
    problem.A = 0, 0
    problem.B = -0.5, -6
    solver.tau = 1e-4

Exit codes: 0 success, 1 usage or configuration error, 2 no extremal found.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from . import fieldexpr as fx
from .flowfield import FlowField, builtin, check_assumption_h, from_expressions, scan_safeguards
from .problem import ProblemSpec
from .shooting import ExtremalField, sweep

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EMPTY = 2

MODE_LABELS = {0: "I", 1: "B+", -1: "B-"}
CSV_HEADER = ["t", "x1", "x2", "psi1", "psi2", "mu", "u1", "u2", "mode"]
CLASS_COLORS = {"Inner": "#1f5fbf", "RightBoundary": "#202020", "LeftBoundary": "#2a9d3a"}
OPTIMAL_COLOR = "#d62728"

SOLVER_KEYS = {
    "tau": float,
    "theta_step": float,
    "terminal_tol": float,
    "junction_tol": float,
    "eps_sing": float,
    "t_max": float,
    "departure_stride": int,
    "max_boundary_visits": int,
    "bound": float,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    field_builtin: Optional[str] = None
    field_vx: Optional[str] = None
    field_vy: Optional[str] = None
    A: tuple = (0.0, 0.0)
    B: Optional[tuple] = None
    solver: dict = field(default_factory=dict)
    out_dir: Path = Path("out")
    plot_width: int = 480
    plot_height: int = 720
    check_assumption: bool = True
    source: Optional[Path] = None

    def build_field(self) -> FlowField:
        if self.field_builtin is not None:
            return builtin(self.field_builtin)
        return from_expressions(self.field_vx, self.field_vy)

    def problem(self, f: Optional[FlowField] = None) -> ProblemSpec:
        if self.B is None:
            raise ConfigError("problem.B is required")
        return ProblemSpec(field=f or self.build_field(), A=self.A, B=self.B, **self.solver)


def _pair(key: str, text: str) -> tuple:
    parts = [p.strip() for p in text.strip().strip("()").split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected two comma-separated numbers, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"{key}: not a number pair: {text!r}") from None


def _bool(key: str, text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def parse_config(text: str, source: Optional[Path] = None) -> RunConfig:
    """Parse the key-value configuration format into a :class:`RunConfig`."""
    cfg = RunConfig(source=source)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        value = value.strip('"').strip("'")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        group, _, name = key.partition(".")
        if group == "field" and name in ("builtin", "vx", "vy"):
            setattr(cfg, f"field_{name}", value)
        elif group == "problem" and name in ("A", "B"):
            setattr(cfg, name, _pair(key, value))
        elif (group == "solver" and name in SOLVER_KEYS) or key == "problem.bound":
            try:
                cfg.solver[name] = SOLVER_KEYS[name](value)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} is not a valid {SOLVER_KEYS[name].__name__}") from None
        elif key == "output.dir":
            cfg.out_dir = Path(value)
        elif key in ("plot.width", "plot.height"):
            try:
                setattr(cfg, f"plot_{name}", int(value))
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} must be an integer") from None
        elif key == "report.assumption":
            cfg.check_assumption = _bool(key, value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    has_builtin = cfg.field_builtin is not None
    has_expr = cfg.field_vx is not None or cfg.field_vy is not None
    if has_builtin == has_expr:
        raise ConfigError("give exactly one of field.builtin or field.vx + field.vy")
    if has_expr and (cfg.field_vx is None or cfg.field_vy is None):
        raise ConfigError("field.vx and field.vy must both be given")
    for name, v in cfg.solver.items():
        if not v > 0:
            raise ConfigError(f"solver.{name} must be positive")
    if cfg.plot_width <= 0 or cfg.plot_height <= 0:
        raise ConfigError("plot dimensions must be positive")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path)


# ---------------------------------------------------------------------------
# serialisation


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _json(obj, indent: int = 0) -> str:
    """JSON text with every real printed to 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_csv(path: Path, samples: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in samples:
            w.writerow([_num(v) for v in r[:8]] + [MODE_LABELS[int(r[8])]])


def read_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ConfigError(f"{path}: unexpected CSV header")
    return np.array([[float(v) for v in r[:3]] for r in rows[1:]]).reshape(-1, 3)


def summary_dict(fld: ExtremalField, csv_names: list) -> dict:
    exts = []
    for e, name in zip(fld.extremals, csv_names):
        d = e.summary()
        d["csv"] = name
        exts.append(d)
    return {
        "tool": "flowshoot",
        "tool_version": __version__,
        "problem": fld.problem.to_dict(),
        "extremal_count": len(fld.extremals),
        "classification_counts": fld.counts(),
        "optimal_index": fld.optimal_index,
        "optimal_time": None if fld.optimal is None else fld.optimal.T,
        "extremals": exts,
        "diagnostics": fld.diagnostics,
    }


# ---------------------------------------------------------------------------
# SVG


def render_svg(
    f: FlowField,
    spec_A,
    spec_B,
    paths: list,
    width: int = 480,
    height: int = 720,
) -> str:
    """Self-contained SVG of the strip, the field at t = 0 and the extremals.

    ``paths`` holds ``(xy, classification, T, is_optimal)`` tuples.
    """
    pts = [np.asarray(spec_A), np.asarray(spec_B)] + [p[0] for p in paths]
    ys = np.concatenate([np.atleast_2d(p)[:, 1] for p in pts])
    y_lo, y_hi = float(ys.min()) - 0.5, float(ys.max()) + 0.5
    x_lo, x_hi = -1.5, 1.5
    margin = 30.0
    sx = (width - 2 * margin) / (x_hi - x_lo)
    sy = (height - 2 * margin) / (y_hi - y_lo)
    s = min(sx, sy)

    def X(x):
        return margin + (x - x_lo) * s

    def Y(y):
        return margin + (y_hi - y) * s

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
        f'<rect x="{X(-1):.2f}" y="{Y(y_hi):.2f}" width="{2 * s:.2f}" height="{(y_hi - y_lo) * s:.2f}" '
        'fill="none" stroke="#888" stroke-width="1.5" stroke-dasharray="6 3"/>',
    ]
    # arrows at t = 0
    out.append('<g stroke="#999" stroke-width="0.8" fill="none">')
    step = 0.25
    grid_x = np.arange(-1.0, 1.0 + 1e-9, step)
    grid_y = np.arange(math.ceil(y_lo / 0.5) * 0.5, y_hi, 0.5)
    for gx in grid_x:
        for gy in grid_y:
            try:
                v1, v2 = f.velocity(0.0, (gx, gy))
            except ArithmeticError:
                continue
            n = math.hypot(v1, v2)
            if not math.isfinite(n) or n < 1e-12:
                continue
            L = 0.18 * min(1.0, n) / n
            x0, y0, x1, y1 = X(gx), Y(gy), X(gx + L * v1), Y(gy + L * v2)
            ang = math.atan2(y1 - y0, x1 - x0)
            h = 3.0
            hx1, hy1 = x1 - h * math.cos(ang - 0.5), y1 - h * math.sin(ang - 0.5)
            hx2, hy2 = x1 - h * math.cos(ang + 0.5), y1 - h * math.sin(ang + 0.5)
            out.append(
                f'<path d="M{x0:.2f},{y0:.2f} L{x1:.2f},{y1:.2f} M{hx1:.2f},{hy1:.2f} '
                f'L{x1:.2f},{y1:.2f} L{hx2:.2f},{hy2:.2f}"/>'
            )
    out.append("</g>")
    # extremals, optimal drawn last
    for xy, cls, T, opt in sorted(paths, key=lambda p: p[3]):
        xy = np.atleast_2d(xy)
        stride = max(1, len(xy) // 800)
        sel = np.concatenate([xy[::stride], xy[-1:]])
        color = OPTIMAL_COLOR if opt else CLASS_COLORS.get(cls, "#444")
        width_px = 2.5 if opt else 1.4
        pts_s = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in sel)
        out.append(
            f'<polyline class="extremal {cls}{" optimal" if opt else ""}" fill="none" '
            f'stroke="{color}" stroke-width="{width_px}" points="{pts_s}"/>'
        )
        mid = sel[len(sel) // 2]
        out.append(
            f'<text x="{X(mid[0]) + 4:.2f}" y="{Y(mid[1]):.2f}" font-size="12" '
            f'fill="{color}" font-family="sans-serif">{T:.2f}</text>'
        )
    for (px, py), name in ((spec_A, "A"), (spec_B, "B")):
        out.append(f'<circle cx="{X(px):.2f}" cy="{Y(py):.2f}" r="3.5" fill="black"/>')
        out.append(
            f'<text x="{X(px) + 6:.2f}" y="{Y(py) - 6:.2f}" font-size="13" font-family="sans-serif">{name}</text>'
        )
    if not paths:
        out.append(
            f'<text x="{width / 2:.2f}" y="{margin - 10:.2f}" text-anchor="middle" font-size="14" '
            'font-family="sans-serif" fill="#b00">no extremals</text>'
        )
    out.append(
        f'<text x="{margin:.2f}" y="{height - 10:.2f}" font-size="10" font-family="sans-serif" fill="#555">'
        f"{escape(f.describe())} (arrows at t = 0)</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands


def _apply_overrides(cfg: RunConfig, args) -> None:
    for opt, key in (("theta_step", "theta_step"), ("tau", "tau"), ("tmax", "t_max")):
        v = getattr(args, opt, None)
        if v is not None:
            if not v > 0:
                raise ConfigError(f"--{opt.replace('_', '-')} must be positive")
            cfg.solver[key] = v
    if getattr(args, "out", None):
        cfg.out_dir = Path(args.out)


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def cmd_solve(cfg: RunConfig, args) -> int:
    f = cfg.build_field()
    spec = cfg.problem(f)
    if cfg.check_assumption:
        rep = check_assumption_h(f)
        if rep.violated:
            w = rep.witnesses[0]
            _say(
                args,
                f"warning: |v1| < 1 fails on the scan grid (sup |v1| = {rep.sup_abs_v1:.4g}, "
                f"e.g. t={w[0]:g}, x=({w[1]:g}, {w[2]:g})); continuing",
            )

    def progress(k, n):
        if k == n or k % 50 == 0:
            _say(args, f"shots {k}/{n}")

    fld = sweep(spec, progress=None if args.quiet else progress)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for k, e in enumerate(fld.extremals):
        name = f"extremal_{k:02d}.csv"
        write_csv(out / name, e.samples)
        names.append(name)
    summary = summary_dict(fld, names)
    (out / "summary.json").write_text(_json(summary) + "\n")
    paths = [(e.samples[:, 1:3], e.classification, e.T, k == fld.optimal_index) for k, e in enumerate(fld.extremals)]
    (out / "field.svg").write_text(render_svg(f, spec.A, spec.B, paths, cfg.plot_width, cfg.plot_height))
    if fld.optimal is None:
        _say(args, f"no extremal found; artifacts in {out}")
        return EXIT_EMPTY
    _say(
        args,
        f"{len(fld.extremals)} extremal(s) {fld.counts()}; optimal T = {fld.optimal.T:.4f} "
        f"({fld.optimal.classification}); artifacts in {out}",
    )
    return EXIT_OK


def cmd_check_field(cfg: RunConfig, args) -> int:
    f = cfg.build_field()
    rep = check_assumption_h(f)
    scan = scan_safeguards(f)
    print(f"field: {f.describe()} [{f.jacobian_source} Jacobian]")
    print(f"grid: {rep.grid}")
    print(f"sup |v1| = {rep.sup_abs_v1:.6g}")
    if rep.violated:
        w = rep.witnesses[0]
        print(f"|v1| < 1: VIOLATED at {len(rep.witnesses)} grid points, e.g. t={w[0]:g}, x=({w[1]:g}, {w[2]:g})")
    else:
        print("|v1| < 1: holds on the grid")
    if rep.eval_failures:
        print(f"evaluation failed at {len(rep.eval_failures)} grid points")
    for label, n_zero, ident in (
        ("dv1/dx2", scan.dv1_dx2_zero, scan.dv1_dx2_identically_zero),
        ("dv2/dx1", scan.dv2_dx1_zero, scan.dv2_dx1_identically_zero),
    ):
        if ident:
            print(f"{label} = 0 identically on the scan grid")
        elif n_zero:
            extra = ""
            if label == "dv2/dx1" and scan.dv2_dx1_zero_x1:
                extra = " (x1 in {" + ", ".join(f"{v:g}" for v in scan.dv2_dx1_zero_x1) + "})"
            print(f"{label} = 0 at {n_zero}/{scan.n_points} scan points{extra}")
        else:
            print(f"{label} != 0 on the scan grid")
    if scan.dv1_dx2_identically_zero and scan.dv2_dx1_identically_zero:
        print("notice: both safeguard derivatives vanish everywhere; singular arcs are not ruled out anywhere")
    return EXIT_OK


def cmd_plot(cfg: RunConfig, args) -> int:
    src = Path(args.from_)
    try:
        summary = json.loads(src.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read summary {src}: {exc}") from None
    f = cfg.build_field()
    prob = summary.get("problem", {})
    A = tuple(prob.get("A", cfg.A))
    B = tuple(prob.get("B", cfg.B or (0.0, 0.0)))
    paths = []
    for k, e in enumerate(summary.get("extremals", [])):
        path = src.parent / e["csv"]
        if not path.exists():
            raise ConfigError(f"missing trajectory file {path}")
        xy = read_csv(path)[:, 1:3]
        paths.append((xy, e["classification"], float(e["T"]), k == summary.get("optimal_index")))
    target = Path(args.out) / "field.svg" if args.out else src.parent / "field.svg"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(render_svg(f, A, B, paths, cfg.plot_width, cfg.plot_height))
    _say(args, f"wrote {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowshoot", description="Time-optimal navigation in a channel flow by shooting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="key-value configuration file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")

    sp = sub.add_parser("solve", help="compute the field of extremals")
    common(sp)
    sp.add_argument("--theta-step", type=float, dest="theta_step")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--tmax", type=float)
    sp = sub.add_parser("check-field", help="report on |v1| < 1 and the singular-control safeguards")
    common(sp)
    sp = sub.add_parser("plot", help="redraw the SVG from a previous solve")
    common(sp)
    sp.add_argument("--from", dest="from_", required=True, help="summary.json of a previous solve")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        handler = {"solve": cmd_solve, "check-field": cmd_check_field, "plot": cmd_plot}[args.command]
        return handler(cfg, args)
    except (ConfigError, fx.ExprError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
