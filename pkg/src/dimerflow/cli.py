"""Command-line front end: experiments to CSV tables, plots, and SVG
tiling renders.

Every run echoes its configuration and the content hashes of the files
it wrote into a `<name>.meta.txt` next to the outputs, so runs are
reproducible byte for byte given the same config and seed.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from fractions import Fraction
from pathlib import Path

from .errors import (
    CapExceeded,
    ComputeBudgetExceeded,
    ConfigError,
    DegenerateZero,
    DimerflowError,
    HorizonExceeded,
    NoTorusZero,
    NumericalError,
    SingularGrid,
)

EXIT_CONFIG = 2
EXIT_CAP = 3
EXIT_NUMERICAL = 4

_CAP_ERRORS = (CapExceeded, ComputeBudgetExceeded, HorizonExceeded)
_NUM_ERRORS = (NumericalError, DegenerateZero, NoTorusZero, SingularGrid)


class ExperimentConfig(dict):
    """Flat key=value experiment configuration.

    Built from an optional config file with command-line flags layered
    on top; echoed verbatim into run metadata.
    """

    @classmethod
    def load(cls, path):
        cfg = cls()
        if path is None:
            return cfg
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"config: cannot read {path}: {e}")
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config:{ln}: expected key = value")
            k, v = line.split("=", 1)
            cfg[k.strip()] = v.strip()
        return cfg

    def resolve(self, args, name, cast=str, default=None, required=False):
        val = getattr(args, name.replace("-", "_"), None)
        if val is None and name in self:
            val = self[name]
        if val is None:
            if required:
                raise ConfigError(f"config: missing required field {name}")
            val = default
        if isinstance(val, str) and cast is not str:
            try:
                val = cast(val)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"config: field {name}: {e}")
        self[name] = val
        return val


def _bool(text):
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes", "on"):
        return True
    if str(text).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text):
    return [int(p) for p in str(text).split(",") if p != ""]


def _float_pair(text):
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated values: {text!r}")
    return float(parts[0]), float(parts[1])


def _int_pair(text):
    a, b = _float_pair(text)
    return int(a), int(b)


def _write_meta(out_dir, name, cfg, seed, files):
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    if seed is not None:
        lines.append(f"seed = {seed}")
    for path in files:
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        lines.append(f"sha256:{Path(path).name} = {digest}")
    meta = Path(out_dir) / f"{name}.meta.txt"
    meta.write_text("\n".join(lines) + "\n")
    return meta


def _out_dir(cfg, args):
    out = Path(cfg.resolve(args, "out", str, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# ---------------------------------------------------------------------------
# subcommands


def cmd_count(args):
    from .exact import enumerate_matchings
    from .lattice import SquareRegion, build_lattice, carve_domain
    from .matching import block_domain, lozenge_domain, periodic_matching

    cfg = ExperimentConfig.load(args.config)
    kind = cfg.resolve(args, "lattice", str, required=True)
    region = cfg.resolve(args, "region", str, "square")
    L = cfg.resolve(args, "L", int, required=True)
    if region == "square" and kind == "square":
        dom = block_domain(L)
    elif region == "lozenge":
        if kind != "hexagon":
            raise ConfigError("config: field region: lozenge needs the "
                              "hexagon lattice")
        dom = lozenge_domain(L)
    elif region in ("square", "carve"):
        lat = build_lattice(kind)
        dom = carve_domain(lat, SquareRegion(), L, periodic_matching(lat))
    else:
        raise ConfigError(f"config: field region: unknown region {region}")
    print(enumerate_matchings(dom))
    return 0


def cmd_sample(args):
    from .exact import exact_sample
    from .lattice import SquareRegion, build_lattice, carve_domain
    from .matching import flatten_to_plane, periodic_matching, \
        write_matching

    cfg = ExperimentConfig.load(args.config)
    kind = cfg.resolve(args, "lattice", str, required=True)
    L = cfg.resolve(args, "L", int, required=True)
    seed = cfg.resolve(args, "seed", int, 0)
    slope = cfg.resolve(args, "slope", _float_pair)
    out = _out_dir(cfg, args)
    lat = build_lattice(kind)
    if slope is not None:
        sl = (Fraction(slope[0]).limit_denominator(64),
              Fraction(slope[1]).limit_denominator(64))
        m = flatten_to_plane(kind, sl, L)
    else:
        m = periodic_matching(lat)
    dom = carve_domain(lat, SquareRegion(), L, m)
    import numpy as np

    M = exact_sample(dom, np.random.default_rng(seed))
    path = out / "sample.txt"
    with open(path, "w") as fh:
        write_matching(M, fh, window=dom.box, f0=dom.f0)
    _write_meta(out, "sample", cfg, seed, [path])
    print(path)
    return 0


def cmd_mixtime(args):
    from .analysis import mixing_scaling, write_scaling_csv

    cfg = ExperimentConfig.load(args.config)
    dyn = cfg.resolve(args, "dynamics", str, "sync")
    kind = cfg.resolve(args, "lattice", str, required=True)
    Ls = cfg.resolve(args, "Ls", _int_list, required=True)
    H = cfg.resolve(args, "H", int)
    replicas = cfg.resolve(args, "replicas", int, 50)
    seed = cfg.resolve(args, "seed", int, 0)
    jobs = cfg.resolve(args, "jobs", int, 1)
    out = _out_dir(cfg, args)
    res = mixing_scaling(dyn, kind, Ls, H=H, replicas=replicas,
                         seed=seed, jobs=jobs)
    path = out / "mixtime.csv"
    with open(path, "w") as fh:
        write_scaling_csv(res["rows"], fh)
    plt = _figure()
    Lv = [r[0] for r in res["rows"]]
    med = [r[1] for r in res["rows"]]
    fig, ax = plt.subplots()
    ax.loglog(Lv, med, "o-")
    ax.set_xlabel("L")
    ax.set_ylabel("median coalescence time")
    ax.set_title(f"slope {res['slope']:.3f} "
                 f"ci [{res['slope_ci'][0]:.2f}, {res['slope_ci'][1]:.2f}]")
    fig.savefig(out / "mixtime.png", dpi=120)
    plt.close(fig)
    _write_meta(out, "mixtime", cfg, seed, [path])
    print(f"slope={res['slope']:.4f}")
    return 0


def cmd_drift(args):
    from .analysis import single_rotation_drift
    from .matching import apply_rotation, pyramid

    cfg = ExperimentConfig.load(args.config)
    kind = cfg.resolve(args, "lattice", str, required=True)
    L = cfg.resolve(args, "L", int, required=True)
    cfg.resolve(args, "pyramid", _bool, True)
    out = _out_dir(cfg, args)
    p, dom = pyramid(kind, L)
    rows = []
    for f in sorted(dom.interior_faces):
        try:
            M1 = apply_rotation(p, f, "-", dom)
        except DimerflowError:
            continue
        rows.append((f, single_rotation_drift(M1, f, dom, "async")))
    path = out / "drift.csv"
    with open(path, "w") as fh:
        fh.write("face_x,face_y,drift\n")
        for f, d in rows:
            fh.write(f"{f[0]},{f[1]},{d}\n")
    _write_meta(out, "drift", cfg, None, [path])
    for f, d in rows:
        print(f"{f[0]:5d} {f[1]:5d}  {d}")
    return 0


def cmd_kinv(args):
    from .exact import asymptotic_kinv, build_torus_kasteleyn, \
        characteristic_zeros, kinv_integral

    cfg = ExperimentConfig.load(args.config)
    kind = cfg.resolve(args, "lattice", str, required=True)
    weights = cfg.resolve(args, "weights", _float_pair, (1.0, 1.0))
    dists = cfg.resolve(args, "distances", _int_list,
                        [5, 10, 20, 35, 50])
    out = _out_dir(cfg, args)
    tk = build_torus_kasteleyn(kind, weights)
    sd = characteristic_zeros(tk)
    dirs = [(1, 0), (0, 1), (1, 1), (1, -1),
            (-1, 0), (0, -1), (-1, -1), (-1, 1)]
    path = out / "kinv.csv"
    table = []
    with open(path, "w") as fh:
        fh.write("x,y,kinv_re,kinv_im,asymptotic,scaled_diff\n")
        for d in dists:
            for ux, uy in dirs:
                x, y = d * ux, d * uy
                val, err = kinv_integral(tk, 0, 0, x, y)
                asy = asymptotic_kinv(sd, 0, 0, x, y)
                scaled = abs(val.real - asy) * (x * x + y * y)
                fh.write(f"{x},{y},{val.real!r},{val.imag!r},"
                         f"{asy!r},{scaled!r}\n")
                table.append((math.hypot(x, y), scaled))
    plt = _figure()
    fig, ax = plt.subplots()
    ax.plot([t[0] for t in table], [t[1] for t in table], ".")
    ax.set_xlabel("distance")
    ax.set_ylabel("|kinv - asymptotic| (x^2+y^2)")
    fig.savefig(out / "kinv.png", dpi=120)
    plt.close(fig)
    _write_meta(out, "kinv", cfg, None, [path])
    print(path)
    return 0


def cmd_fluctuations(args):
    from .analysis import fluctuation_moments

    cfg = ExperimentConfig.load(args.config)
    kind = cfg.resolve(args, "lattice", str, required=True)
    weights = cfg.resolve(args, "weights", _float_pair, (1.0, 1.0))
    L = cfg.resolve(args, "L", int, required=True)
    f = cfg.resolve(args, "face-a", _int_pair, required=True)
    g = cfg.resolve(args, "face-b", _int_pair, required=True)
    n = cfg.resolve(args, "samples", int, 2000)
    source = cfg.resolve(args, "source", str, "exact")
    seed = cfg.resolve(args, "seed", int, 0)
    out = _out_dir(cfg, args)
    rep = fluctuation_moments(kind, weights, L, f, g, n,
                              source=source, seed=seed)
    path = out / "fluctuations.csv"
    with open(path, "w") as fh:
        rep.write_csv(fh)
    plt = _figure()
    fig, ax = plt.subplots()
    even = [(o, m, s, gref) for o, m, s, gref in
            zip(rep.orders, rep.moments, rep.ses, rep.gaussian)
            if o % 2 == 0]
    ax.errorbar([e[0] for e in even], [e[1] for e in even],
                yerr=[3 * e[2] for e in even], fmt="o", label="empirical")
    ax.plot([e[0] for e in even], [e[3] for e in even], "x",
            label="gaussian")
    ax.set_xlabel("moment order")
    ax.legend()
    fig.savefig(out / "fluctuations.png", dpi=120)
    plt.close(fig)
    _write_meta(out, "fluctuations", cfg, seed, [path])
    print(f"distance={rep.distance:.4f} variance={rep.variance:.4f}")
    return 0


def cmd_erosion(args):
    from .analysis import pyramid_erosion

    cfg = ExperimentConfig.load(args.config)
    kind = cfg.resolve(args, "lattice", str, required=True)
    L = cfg.resolve(args, "L", int, required=True)
    horizon = cfg.resolve(args, "horizon", float, 4.0)
    seed = cfg.resolve(args, "seed", int, 0)
    out = _out_dir(cfg, args)
    trace, rate = pyramid_erosion(kind, L, horizon, seed=seed)
    path = out / "erosion.csv"
    with open(path, "w") as fh:
        trace.write_csv(fh)
    plt = _figure()
    fig, ax = plt.subplots()
    ax.plot(trace.times, trace.volumes, "-")
    ax.set_xlabel("time")
    ax.set_ylabel("eroded volume")
    ax.set_title(f"rate {rate:.3f}")
    fig.savefig(out / "erosion.png", dpi=120)
    plt.close(fig)
    _write_meta(out, "erosion", cfg, seed, [path])
    print(f"rate={rate:.4f}")
    return 0


def cmd_fksums(args):
    from .analysis import fk_sums

    cfg = ExperimentConfig.load(args.config)
    k = cfg.resolve(args, "k", int, required=True)
    Ls = cfg.resolve(args, "Ls", _int_list, required=True)
    out = _out_dir(cfg, args)
    rows = fk_sums(k, Ls)
    path = out / "fksums.csv"
    with open(path, "w") as fh:
        fh.write("k,L,F,F_open,open_bound_ok,growth_ratio\n")
        for row in rows:
            L = row["L"]
            for kk in sorted(row["F"]):
                F, Ft = row["F"][kk], row["Ft"][kk]
                ok = 1 if kk == 1 or Ft <= L * row["F"][kk - 1] else 0
                denom = math.log(L) ** (kk // 2) if L > 1 else 1.0
                fh.write(f"{kk},{L},{F},{Ft},{ok},"
                         f"{float(F) / denom!r}\n")
    _write_meta(out, "fksums", cfg, None, [path])
    print(path)
    return 0


# ---------------------------------------------------------------------------
# SVG rendering


def _vertex_xy(v):
    return float(v[0]), float(-v[1])


def render_tiling(M, lattice, heights=None, regions=None, width=0.3):
    """Deterministic SVG document: one polygon per dimer.

    `regions` optionally maps each edge to a label; polygons are grouped
    by label into <g id="region-..."> elements.
    """
    edges = sorted(M.edges)
    if edges:
        xs = [c for e in edges for v in e for c in (_vertex_xy(v)[0],)]
        ys = [c for e in edges for v in e for c in (_vertex_xy(v)[1],)]
        x0, x1 = min(xs) - 1, max(xs) + 1
        y0, y1 = min(ys) - 1, max(ys) + 1
    else:
        x0, y0, x1, y1 = -1, -1, 1, 1
    groups = {}
    for e in edges:
        label = regions.get(e, "main") if regions else "main"
        groups.setdefault(label, []).append(e)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{x0:.2f} {y0:.2f} {x1 - x0:.2f} {y1 - y0:.2f}">',
    ]
    palette = ["#4477aa", "#ee6677", "#228833", "#ccbb44",
               "#66ccee", "#aa3377"]
    for gi, label in enumerate(sorted(groups)):
        parts.append(f'<g id="region-{label}">')
        fill = palette[gi % len(palette)]
        for e in groups[label]:
            (ax, ay), (bx, by) = _vertex_xy(e[0]), _vertex_xy(e[1])
            dx, dy = bx - ax, by - ay
            n = math.hypot(dx, dy) or 1.0
            px, py = -dy / n * width, dx / n * width
            pts = [(ax + px, ay + py), (bx + px, by + py),
                   (bx - px, by - py), (ax - px, ay - py)]
            body = " ".join(f"{x:.3f},{y:.3f}" for x, y in pts)
            parts.append(f'<polygon points="{body}" fill="{fill}" '
                         f'stroke="black" stroke-width="0.05"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _pyramid_regions(lattice, edges):
    """Label each dimer by the extremal plane its face sits on."""
    from .matching import extremal_planes, plane_height

    planes = extremal_planes(lattice)
    out = {}
    for e in edges:
        f = lattice.edge_faces(e)[0]
        vals = [plane_height(lattice, slope, reph, f)
                for slope, reph in planes]
        out[e] = str(min(range(len(vals)), key=lambda i: (vals[i], i)))
    return out


def cmd_render(args):
    from .lattice import build_lattice
    from .matching import pyramid, read_matching

    cfg = ExperimentConfig.load(args.config)
    out = _out_dir(cfg, args)
    use_pyramid = cfg.resolve(args, "pyramid", _bool, False)
    if use_pyramid:
        kind = cfg.resolve(args, "lattice", str, required=True)
        L = cfg.resolve(args, "L", int, required=True)
        p, dom = pyramid(kind, L)
        lat = dom.lattice
        b = dom.box
        edges = set()
        for v in dom.active_vertices():
            e = p.covering_edge(v)
            if e is not None:
                edges.add(e)
        for x in range(b[0], b[1] + 1):
            for y in range(b[2], b[3] + 1):
                e = p.covering_edge((x, y))
                if e is not None:
                    edges.add(e)
        M = p.with_edges(remove=(), add=edges)
        regions = _pyramid_regions(lat, sorted(edges))
    else:
        inp = cfg.resolve(args, "input", str, required=True)
        with open(inp) as fh:
            M, meta = read_matching(fh)
        lat = build_lattice(meta["lattice"])
        regions = None
    doc = render_tiling(M, lat, regions=regions)
    path = out / "tiling.svg"
    path.write_text(doc)
    _write_meta(out, "render", cfg, None, [path])
    print(path)
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    ap = argparse.ArgumentParser(
        prog="dimerflow",
        description="dimer experiments: sampling, counting, mixing, "
                    "drift, and rendering")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--out")
        for flag, kw in flags:
            p.add_argument(flag, **kw)
        p.set_defaults(fn=fn)
        return p

    add("count", cmd_count, [
        ("--lattice", {}), ("--region", {}), ("--L", {})])
    add("sample", cmd_sample, [
        ("--lattice", {}), ("--L", {}), ("--seed", {}), ("--slope", {})])
    add("mixtime", cmd_mixtime, [
        ("--lattice", {}), ("--dynamics", {}), ("--Ls", {}), ("--H", {}),
        ("--replicas", {}), ("--seed", {}), ("--jobs", {})])
    add("drift", cmd_drift, [
        ("--lattice", {}), ("--L", {}),
        ("--pyramid", {"action": "store_true", "default": None})])
    add("kinv", cmd_kinv, [
        ("--lattice", {}), ("--weights", {}), ("--distances", {})])
    add("fluctuations", cmd_fluctuations, [
        ("--lattice", {}), ("--weights", {}), ("--L", {}),
        ("--face-a", {}), ("--face-b", {}), ("--samples", {}),
        ("--source", {}), ("--seed", {})])
    add("erosion", cmd_erosion, [
        ("--lattice", {}), ("--L", {}), ("--horizon", {}), ("--seed", {})])
    add("fksums", cmd_fksums, [("--k", {}), ("--Ls", {})])
    add("render", cmd_render, [
        ("--input", {}), ("--lattice", {}), ("--L", {}),
        ("--pyramid", {"action": "store_true", "default": None})])
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _CAP_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAP
    except _NUM_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DimerflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
