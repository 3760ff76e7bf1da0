"""CSV and SVG artifacts.

Every CSV starts with a ``# config-hash: <hex>`` comment line followed by a
header row. Floats are written with 17 significant digits, infinities as
``inf`` / ``-inf``, cell sets as space-separated sorted integers.
"""
import csv
import hashlib
import json

import numpy as np

from .core import DiscreteSystem

HASH_PREFIX = "# config-hash: "


def config_hash(config):
    """First 16 hex digits of the SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if isinstance(value, (set, frozenset)):
        return " ".join(str(int(z)) for z in sorted(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows, chash):
    with open(path, "w", newline="") as fh:
        fh.write(f"{HASH_PREFIX}{chash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    """Return ``(config_hash, header, rows)`` with rows as lists of strings."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(HASH_PREFIX):
            raise ValueError(f"{path}: missing config-hash line")
        rows = list(csv.reader(fh))
    return first[len(HASH_PREFIX):].strip(), rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return fmt(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _describe(params):
    return json.dumps(_jsonable(params), sort_keys=True, separators=(",", ":"), default=str)


def cell_rows(cover):
    return [(z, cover.regions[z].kind, _describe(cover.regions[z].describe()),
             _describe(cover.labels[z] if not isinstance(cover.labels[z], (int, np.integer))
                       else int(cover.labels[z])))
            for z in range(len(cover))]


def write_cells(path, cover, chash):
    write_csv(path, ["cell", "kind", "parameters", "label"], cell_rows(cover), chash)


def write_phi(path, D, times, chash):
    rows = [(float(t), z, D.phi(float(t), z)) for t in times for z in D.states]
    write_csv(path, ["time", "source", "targets"], rows, chash)


def read_phi(path, tags=()):
    """Rebuild a table-backed :class:`DiscreteSystem` from ``phi.csv``."""
    chash, header, rows = read_csv(path)
    if header != ["time", "source", "targets"]:
        raise ValueError(f"{path}: unexpected header {header}")
    table = {}
    for t, z, targets in rows:
        table[(float(t), int(z))] = frozenset(int(v) for v in targets.split())
    return chash, DiscreteSystem.from_table(table, tags=tags)


def write_boxmap(path, family, boxmap, chash):
    l = len(family)
    header = [f"z{i + 1}" for i in range(l)]
    for i in range(l):
        header += [f"lower{i + 1}", f"upper{i + 1}"]
    header.append("empty")
    rows = []
    for z in family.index_vectors():
        box = boxmap.get(z)
        vals = list(z)
        if box is None:
            vals += [""] * (2 * l) + [True]
        else:
            for a, b in box.intervals:
                vals += [a, b]
            vals.append(False)
        rows.append(vals)
    write_csv(path, header, rows, chash)


def write_order(path, order, chash):
    rows = [(k, a, w) for k, (a, w) in enumerate(order.pairs)]
    write_csv(path, ["cell", "alpha", "omega"], rows, chash)


def write_violations(path, reports, chash):
    rows = []
    for rep in reports:
        for v in rep.violations:
            rows.append((v.kind, v.time, v.source, v.observed, frozenset(v.predicted),
                         () if v.point is None else tuple(v.point)))
    write_csv(path, ["kind", "time", "source", "observed", "predicted", "point"], rows, chash)


def write_conservativeness(path, estimate, chash):
    rows = [(t, z, est, se) for t, row in sorted(estimate.per_time.items())
            for z, (est, se) in sorted(row.items())]
    write_csv(path, ["time", "cell", "excess_volume", "std_error"], rows, chash)


def write_trajectories(path, times, paths, chash):
    """``paths`` has shape ``(len(times), n, d)``."""
    d = paths.shape[2]
    rows = [(k, float(t)) + tuple(paths[j, k]) for k in range(paths.shape[1])
            for j, t in enumerate(times)]
    write_csv(path, ["trajectory", "time"] + [f"x{i}" for i in range(d)], rows, chash)


def _boundary_segments(labels, xs, ys):
    """Unit segments separating raster pixels of different cells."""
    segs = []
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    ny, nx = labels.shape
    for j in range(ny):
        for k in np.flatnonzero(labels[j, 1:] != labels[j, :-1]):
            x = xs[k] + 0.5 * dx
            segs.append((x, ys[j] - 0.5 * dy, x, ys[j] + 0.5 * dy))
    for k in range(nx):
        diff = labels[1:, k] != labels[:-1, k]
        for j in np.flatnonzero(diff):
            y = ys[j] + 0.5 * dy
            segs.append((xs[k] - 0.5 * dx, y, xs[k] + 0.5 * dx, y))
    return segs


def write_cells_svg(path, cover, D, t, resolution=160, size=480, chash=""):
    """Cell outlines traced on a raster of the min-index map, with arrows ``z -> Phi(t, z)``."""
    space = cover.space
    (x0, x1), (y0, y1) = space.bounds
    xs = x0 + (np.arange(resolution) + 0.5) * (x1 - x0) / resolution
    ys = y0 + (np.arange(resolution) + 0.5) * (y1 - y0) / resolution
    XX, YY = np.meshgrid(xs, ys)
    labels = cover.abstract(np.column_stack([XX.ravel(), YY.ravel()])).reshape(XX.shape)

    def px(x, y):
        return ((x - x0) / (x1 - x0) * size, (y1 - y) / (y1 - y0) * size)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f"<!-- config-hash: {chash} time: {fmt(float(t))} -->",
           f'<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="black"/>',
           '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" '
           'orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="steelblue"/></marker></defs>']
    for a, b, c, d in _boundary_segments(labels, xs, ys):
        (p, q), (r, s) = px(a, b), px(c, d)
        out.append(f'<line x1="{p:.2f}" y1="{q:.2f}" x2="{r:.2f}" y2="{s:.2f}" '
                   f'stroke="black" stroke-width="1"/>')
    centroids = {}
    for z in range(len(cover)):
        mask = labels == z
        if mask.any():
            centroids[z] = (float(XX[mask].mean()), float(YY[mask].mean()))
    for z, (cx, cy) in sorted(centroids.items()):
        p, q = px(cx, cy)
        out.append(f'<g class="cell" data-cell="{z}"><text x="{p:.2f}" y="{q:.2f}" '
                   f'font-size="10" text-anchor="middle">{z}</text></g>')
        for w in sorted(D.phi(float(t), z)):
            if w == z or w not in centroids:
                continue
            r, s = px(*centroids[w])
            out.append(f'<line x1="{p:.2f}" y1="{q:.2f}" x2="{r:.2f}" y2="{s:.2f}" '
                       f'stroke="steelblue" stroke-width="1" marker-end="url(#head)"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return len(centroids)
