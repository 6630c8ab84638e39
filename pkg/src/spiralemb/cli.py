"""Command-line front end.

    spiralemb spiral --A 1 --B 1 --lambda 0.05 --grid 200 --out pts.csv
    spiralemb chain-verify --epsilon 0.05 --samples 1000000 --out report.json
    spiralemb plan --mode family --epsilon 0.1
    spiralemb figure --name square-to-ball --out fig.svg

Exit status: 0 on success, 1 when a check fails or a file cannot be written
(the report is still written when possible), 2 on bad usage.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .chain import F_DOMAIN, ChainConfig, ChainSampler, check_nesting, f_map, plan_family, plan_kh
from .chain import verify_main_bound
from .double_spiral import DoubleSpiralConfig, beta1_map, beta2_map, double_spiral_eval, tuck_map
from .maps_core import BallRegion, PlanarMap, RectRegion, SpiralembError, identity
from .spiral import SpiralParams, inner_avoid_radius, radius_bound, spiral_map
from .torus_strip import EPS0, FlowMap, build_cutoff, sample_domain
from .verifier import (
    ANALYTIC_TOL,
    FD_TOL,
    RNG_NAME,
    SampleGrid,
    VerificationReport,
    check_area,
    check_avoids,
    check_contained,
    check_fd_agreement,
    check_injective,
    check_symplectic,
)

CSV_FMT = "%.11e"   # 12 significant digits
JSON_FMT = "%.16e"  # 17 significant digits, enough to round-trip a double

FIGURES = ("spiral", "square-to-ball", "double-spiral", "domain-model")
MAPS = ("identity", "spiral", "F", "beta1", "beta2", "tuck", "flow")
CHECKS = ("symplectic", "fd", "injective", "contained", "avoids", "area")


class _Failed(Exception):
    """Raised after output is written when a check did not pass."""


# ---------------------------------------------------------------- serialization


def _json_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return JSON_FMT % x


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float in fixed scientific notation.

    Key order is kept, so equal inputs give identical bytes.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _json_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_text(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    Path(out).write_text(text, encoding="utf-8")


def write_report(report, out: str | None) -> None:
    d = report.as_dict() if hasattr(report, "as_dict") else report
    write_text(dumps(d) + "\n", out)


def read_report(path: str) -> VerificationReport:
    return VerificationReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def csv_text(rows: np.ndarray, header: str = "x,y,u,v") -> str:
    buf = io.StringIO()
    np.savetxt(buf, rows, fmt=CSV_FMT, delimiter=",", header=header, comments="")
    return buf.getvalue()


# ---------------------------------------------------------------- svg

_PALETTE = ("#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555")


def _num(x: float) -> str:
    return "%.6g" % x


def render_svg(polylines, circles=(), out: str | None = None, colors=None,
               extent: float | None = None, size: int = 800) -> str:
    """Standalone SVG of polylines (world coordinates) and circle outlines.

    ``circles`` holds ``(role, radius)`` pairs centred at the origin.  The view
    box is fitted to the largest circle, or to the bounding box of the
    geometry when there are no circles or ``extent`` is given.
    """
    polylines = [np.asarray(p, dtype=float) for p in polylines]
    polylines = [p for p in polylines if len(p)]
    circles = [(role, float(r)) for role, r in circles]
    if not polylines and not circles:
        raise SpiralembError("nothing to draw")
    if extent is None and circles:
        extent = max(r for _, r in circles)
    if extent is not None:
        x0 = y0 = -1.05 * extent
        w = h = 2.1 * extent
    else:
        allpts = np.concatenate(polylines)
        lo, hi = allpts.min(axis=0), allpts.max(axis=0)
        margin = 0.05 * float((hi - lo).max())
        x0, y0 = lo - margin
        w, h = (hi - lo) + 2 * margin
    stroke = max(w, h) / 800
    colors = colors or [_PALETTE[0]] * len(polylines)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" '
        f'height="{_num(size * h / w)}" viewBox="{_num(x0)} {_num(-(y0 + h))} {_num(w)} {_num(h)}">',
        '<g transform="scale(1,-1)" fill="none" stroke-linejoin="round">',
    ]
    for role, r in circles:
        if r > 0:
            lines.append(f'<circle class="{role}" cx="0" cy="0" r="{_num(r)}" '
                         f'stroke="#444444" stroke-dasharray="{_num(4 * stroke)}" '
                         f'stroke-width="{_num(stroke)}"/>')
    for k, p in enumerate(polylines):
        pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in p)
        lines.append(f'<polyline stroke="{colors[k % len(colors)]}" '
                     f'stroke-width="{_num(stroke)}" points="{pts}"/>')
    lines += ["</g>", "</svg>", ""]
    text = "\n".join(lines)
    if out is not None:
        write_text(text, out)
    return text


def _rows(region: RectRegion, rows: int, per_row: int) -> list[np.ndarray]:
    """Horizontal sample rows of ``region`` in grid order, one polyline each."""
    xs = region.x0 + (np.arange(per_row) + 0.5) * region.width / per_row
    ys = region.y0 + (np.arange(rows) + 0.5) * region.height / rows
    return [np.column_stack([xs, np.full(per_row, y)]) for y in ys]


def _strand_rows(m: PlanarMap, region: RectRegion, lam: float, rows: int, grid: int):
    per_row = max(grid, int(math.ceil(96 * region.width / lam)))
    dom = _rows(region, rows, per_row)
    return dom, [m.apply(p) for p in dom]


def figure_geometry(name: str, eps: float, rows: int = 3, grid: int = 400) -> dict:
    """Domain rows, image polylines and decoration circles for a named figure."""
    if name in ("spiral", "square-to-ball"):
        if name == "spiral":
            params = SpiralParams(1.0, 1.0, eps, delta=eps / 2, r=eps)
        else:
            params = SpiralParams(1.0, 1.0, 0.01)
        dom, img = _strand_rows(spiral_map(params), params.domain, params.lam, rows, grid)
        circles = [("outer", radius_bound(params, params.A)),
                   ("inner", inner_avoid_radius(params))]
        return {"params": params.as_dict(), "domain": dom, "image": img, "circles": circles,
                "colors": None}
    if name == "double-spiral":
        cfg = DoubleSpiralConfig(1.0, eps)
        dom, img, colors = [], [], []
        for color, mk, region in ((_PALETTE[0], beta1_map, cfg.model.R1),
                                  (_PALETTE[1], beta2_map, cfg.model.R2)):
            d, i = _strand_rows(mk(cfg), region, cfg.lam, rows, grid)
            dom += d
            img += i
            colors += [color] * len(i)
        circles = [("outer", cfg.outer_radius), ("inner", cfg.free_radius)]
        return {"params": cfg.as_dict(), "domain": dom, "image": img, "circles": circles,
                "colors": colors}
    if name == "domain-model":
        cfg = DoubleSpiralConfig(1.0, eps)
        model = cfg.model
        named = [("R1", model.R1), ("R2", model.R2), ("W", model.W_rect)]
        named += [(f"strand{k}", r) for k, r in enumerate(model.strands())]
        outlines = []
        for _, r in named:
            x0, y0 = r.anchor
            outlines.append(np.array([[x0, y0], [x0 + r.width, y0], [x0 + r.width, y0 + r.height],
                                      [x0, y0 + r.height], [x0, y0]]))
        colors = [_PALETTE[0], _PALETTE[1], _PALETTE[2]] + [_PALETTE[5]] * (len(named) - 3)
        return {"params": cfg.as_dict(), "domain": outlines, "image": outlines, "circles": [],
                "colors": colors, "labels": [n for n, _ in named]}
    raise SpiralembError(f"unknown figure {name!r}")


# ---------------------------------------------------------------- map lookup


def _spiral_params(a) -> SpiralParams:
    return SpiralParams(a.A, a.B, a.lam, a.delta, a.r, orientation=a.orientation)


def build_target(a):
    """Map, sample region and natural balls for ``verify``.

    Returns ``(map, region, contain_radius, avoid_radius, area)``; a ``None``
    radius means the map has no natural ball for that check.
    """
    name = a.map
    if name == "identity":
        region = RectRegion(a.A, a.B)
        return identity().with_domain(region), region, None, None, region.area
    if name == "spiral":
        p = _spiral_params(a)
        L = a.A if a.L is None else a.L
        region = RectRegion(L, p.B)
        return (spiral_map(p).with_domain(region), region, radius_bound(p, L),
                inner_avoid_radius(p), p.A * p.B)
    if name == "F":
        cfg = ChainConfig(a.epsilon, A=a.A, M=a.M)
        return (f_map(cfg), F_DOMAIN, radius_bound(cfg.step1, cfg.step1.A), 0.0, F_DOMAIN.area)
    if name in ("beta1", "beta2", "tuck"):
        cfg = DoubleSpiralConfig(a.A, a.epsilon, M=a.M, orientation=a.orientation)
        model = cfg.model
        if name == "tuck":
            w = model.W_rect
            return tuck_map(cfg), w, cfg.free_radius, None, w.area
        m = beta1_map(cfg) if name == "beta1" else beta2_map(cfg)
        region = model.R1 if name == "beta1" else model.R2
        return m, region, cfg.outer_radius, cfg.free_radius, region.area
    if name == "flow":
        return FlowMap(build_cutoff(a.A, a.epsilon, max(EPS0, a.epsilon))), None, None, None, None
    raise SpiralembError(f"unknown map {name!r}")


# ---------------------------------------------------------------- subcommands


def _check(report) -> None:
    passed = report.passed if hasattr(report, "passed") else report["passed"]
    if not passed:
        raise _Failed()


def cmd_spiral(a) -> None:
    p = _spiral_params(a)
    if a.format == "json":
        write_report({"params": p.as_dict(), "outer_radius": radius_bound(p, p.A),
                      "inner_radius": inner_avoid_radius(p), "area": p.A * p.B}, a.out)
        return
    if a.format == "svg":
        dom, img = _strand_rows(spiral_map(p), p.domain, p.lam, a.rows, a.grid)
        render_svg(img, [("outer", radius_bound(p, p.A)), ("inner", inner_avoid_radius(p))],
                   a.out)
        return
    pts = p.domain.grid(a.grid)
    write_text(csv_text(np.column_stack([pts, spiral_map(p).apply(pts)])), a.out)


def cmd_double_spiral(a) -> None:
    cfg = DoubleSpiralConfig(a.A, a.epsilon, M=a.M, orientation=a.orientation)
    if a.format == "json":
        write_report(dict(cfg.as_dict(), outer_radius=cfg.outer_radius,
                          free_radius=cfg.free_radius, W_area=cfg.model.W_area), a.out)
        return
    if a.format == "svg":
        g = figure_geometry("double-spiral", a.epsilon, a.rows, a.grid)
        render_svg(g["image"], g["circles"], a.out, colors=g["colors"])
        return
    tags = sample_domain(cfg.model, a.grid)
    img = double_spiral_eval(cfg, tags.points, tags)
    write_text(csv_text(np.column_stack([tags.points, img])), a.out)


def cmd_flow(a) -> None:
    fl = FlowMap(build_cutoff(a.A, a.epsilon, max(EPS0, a.epsilon)))
    rng = np.random.Generator(np.random.PCG64(a.seed))
    q = rng.uniform(-a.box, a.box, (a.samples, 4))
    if a.format == "csv":
        write_text(csv_text(np.column_stack([q, fl.apply(q)]),
                            header="x1,y1,x2,y2,u1,v1,u2,v2"), a.out)
        return
    rep = check_symplectic(fl, q, tol=a.tol)
    rep.params.update(seed=a.seed, rng=RNG_NAME, box=a.box, A=a.A, epsilon=a.epsilon)
    write_report(rep, a.out)
    _check(rep)


def cmd_chain_verify(a) -> None:
    cfg = ChainConfig(a.epsilon, A=a.A, M=a.M)
    model = cfg.model
    probe = ChainSampler(model, domain_res=a.grid, n_random=0)
    n_grid = len(probe.p1_grid) * len(probe.b_grid)
    n_random = max(a.samples - n_grid, a.samples // 10)
    sampler = ChainSampler(model, domain_res=a.grid, n_random=n_random, seed=a.seed)
    rep = verify_main_bound(cfg, sampler)
    d = rep.as_dict()
    d["params"] = dict(d["params"], seed=a.seed, rng=RNG_NAME, grid=a.grid)
    write_report(d, a.out)
    _check(rep)


def cmd_verify(a) -> None:
    m, region, r_in, r_avoid, area = build_target(a)
    if a.map == "flow":
        if a.check not in ("symplectic", "fd"):
            raise SpiralembError("the flow supports only the symplectic and fd checks")
        rng = np.random.Generator(np.random.PCG64(a.seed))
        samples = rng.uniform(-a.box, a.box, (a.samples or 1000, 4))
    else:
        samples = SampleGrid(region, a.grid, a.samples, a.seed)
    chk = a.check
    if chk == "symplectic":
        rep = check_symplectic(m, samples, tol=a.tol or ANALYTIC_TOL)
    elif chk == "fd":
        rep = check_fd_agreement(m, samples, tol=a.tol or FD_TOL, fd_step=a.fd_step)
    elif chk == "injective":
        rep = check_injective(m, samples, image_tol=a.tol or 1e-9, domain_sep=a.domain_sep)
    elif chk == "contained":
        radius = a.radius if a.radius is not None else r_in
        if radius is None:
            raise SpiralembError(f"no natural ball for {a.map}; pass --radius")
        rep = check_contained(m, samples, BallRegion(radius), tol=a.tol or 0.0)
    elif chk == "avoids":
        radius = a.radius if a.radius is not None else r_avoid
        if radius is None:
            raise SpiralembError(f"no natural ball for {a.map}; pass --radius")
        rep = check_avoids(m, samples, BallRegion(radius, closed=True))
    else:
        rep = check_area(m, region, area, rtol=a.tol or 0.02,
                         samples=a.samples or 1_000_000, seed=a.seed)
    write_report(rep, a.out)
    _check(rep)


def cmd_plan(a) -> None:
    if a.mode == "kh":
        write_report(plan_kh(a.epsilon, a.T, A=a.A).as_dict(), a.out)
    elif a.mode == "family":
        write_report(plan_family(a.epsilon, A=a.A).as_dict(), a.out)
    else:
        eps_list = [float(s) for s in a.eps_list.split(",") if s.strip()]
        probes = [tuple(float(v) for v in s.split(",")) for s in a.probe or ()]
        if any(len(p) != 2 for p in probes):
            raise SpiralembError("--probe takes two comma-separated radii")
        rep = check_nesting(eps_list, probes)
        write_report(rep.as_dict(), a.out)
        _check(rep.as_dict())


def cmd_figure(a) -> None:
    g = figure_geometry(a.name, a.epsilon, a.rows, a.grid)
    if a.format == "csv":
        rows = np.concatenate([np.column_stack([d, i]) for d, i in zip(g["domain"], g["image"])])
        write_text(csv_text(rows), a.out)
    elif a.format == "json":
        write_report({"name": a.name, "params": g["params"],
                      "circles": [{"role": r, "radius": v} for r, v in g["circles"]],
                      "polylines": len(g["image"]),
                      "points": int(sum(len(p) for p in g["image"]))}, a.out)
    else:
        render_svg(g["image"], g["circles"], a.out, colors=g["colors"])


# ---------------------------------------------------------------- parser


def _positive_int(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="spiralemb", formatter_class=fmt,
                                     description="Spiral symplectic embeddings and their checks.")
    parser.add_argument("--config", help="JSON file whose keys (flag names) supply defaults")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, formats=("json",), default_format=None):
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=formats, default=default_format or formats[0])
        p.add_argument("--config", help=argparse.SUPPRESS)

    def rect(p):
        p.add_argument("--A", type=float, default=1.0, help="rectangle length")
        p.add_argument("--B", type=float, default=1.0, help="rectangle height")
        p.add_argument("--lambda", dest="lam", type=float, default=0.05, help="strand width")
        p.add_argument("--delta", type=float, default=0.0, help="gap between strands")
        p.add_argument("--r", type=float, default=0.0, help="action of the inner hole")
        p.add_argument("--orientation", type=int, choices=(1, -1), default=1)

    p = sub.add_parser("spiral", help="sample the simple spiral", formatter_class=fmt)
    rect(p)
    p.add_argument("--grid", type=_positive_int, default=200, help="grid points per axis")
    p.add_argument("--rows", type=_positive_int, default=3, help="svg: strand rows drawn")
    common(p, ("csv", "json", "svg"))
    p.set_defaults(func=cmd_spiral)

    p = sub.add_parser("double-spiral", help="sample the glued double spiral", formatter_class=fmt)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--M", type=float, default=None, help="hole size; default max(8, minimum)")
    p.add_argument("--orientation", type=int, choices=(1, -1), default=1)
    p.add_argument("--grid", type=_positive_int, default=200)
    p.add_argument("--rows", type=_positive_int, default=3)
    common(p, ("csv", "json", "svg"))
    p.set_defaults(func=cmd_double_spiral)

    p = sub.add_parser("flow", help="time-1 flow of the cut-off Hamiltonian", formatter_class=fmt)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--samples", type=_positive_int, default=1000, help="random states")
    p.add_argument("--box", type=float, default=1.2, help="states drawn from [-box, box]^4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=ANALYTIC_TOL)
    common(p, ("json", "csv"))
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("chain-verify", help="sample the main ball bound", formatter_class=fmt)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--M", type=float, default=None)
    p.add_argument("--samples", type=_positive_int, default=1_000_000, help="minimum total samples")
    p.add_argument("--grid", type=_positive_int, default=48, help="domain grid per axis")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_chain_verify)

    p = sub.add_parser("verify", help="run one generic check on one map", formatter_class=fmt)
    p.add_argument("--check", choices=CHECKS, required=True)
    p.add_argument("--map", choices=MAPS, required=True)
    rect(p)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--M", type=float, default=None)
    p.add_argument("--L", type=float, default=None, help="spiral: sub-rectangle length")
    p.add_argument("--radius", type=float, default=None, help="override the ball radius")
    p.add_argument("--tol", type=float, default=None, help="check tolerance (check default)")
    p.add_argument("--fd-step", default="auto", help="finite-difference step or 'auto'")
    p.add_argument("--domain-sep", type=float, default=None)
    p.add_argument("--grid", type=_positive_int, default=300)
    p.add_argument("--samples", type=int, default=0, help="random supplement / area samples")
    p.add_argument("--box", type=float, default=1.2)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plan", help="parameter planners", formatter_class=fmt)
    p.add_argument("--mode", choices=("kh", "family", "nesting"), required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--eps-list", default="0.1,0.05,0.02,0.01")
    p.add_argument("--probe", action="append", help="'rho1,rho2'; repeatable")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("figure", help="render a figure", formatter_class=fmt)
    p.add_argument("--name", choices=FIGURES, required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--grid", type=_positive_int, default=400, help="minimum points per row")
    p.add_argument("--rows", type=_positive_int, default=3)
    common(p, ("svg", "csv", "json"))
    p.set_defaults(func=cmd_figure)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(cfg, dict):
        parser.error("config must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if "lambda" in cfg:
        cfg["lam"] = cfg.pop("lambda")
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subs.choices.values():
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for k, v in cfg.items():
            act = actions.get(k)
            if act is None:
                continue
            if act.type is not None and v is not None and not isinstance(v, (list, dict)):
                try:
                    v = act.type(v)
                except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                    parser.error(f"config key {k!r}: {exc}")
            defaults[k] = v
        sp.set_defaults(**defaults)


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except _Failed:
        return 1
    except OSError as exc:
        print(f"spiralemb: {exc}", file=sys.stderr)
        return 1
    except (SpiralembError, ValueError) as exc:
        print(f"spiralemb {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
