"""Point walk: chain every row to its nearest unvisited neighbour.

Counting labels in consecutive windows of the walk shows whether rows of the
same category sit next to each other in a feature space.
"""

import csv
from collections import Counter
from dataclasses import dataclass, field
from html import escape

import numpy as np

from .exceptions import ConfigError, DataFormatError


@dataclass
class WalkHistogram:
    window_size: int
    windows: list = field(default_factory=list)
    visit_order: np.ndarray = None

    def labels(self):
        return sorted({label for w in self.windows for label in w})


def walk_order(X, start):
    """Greedy nearest-unvisited-neighbour order starting at row ``start``.

    Ties go to the lowest row index.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    current = int(start)
    sq_norms = (X * X).sum(axis=1)
    for step in range(n):
        order[step] = current
        visited[current] = True
        if step == n - 1:
            break
        d = sq_norms - 2.0 * X @ X[current] + sq_norms[current]
        d[visited] = np.inf
        current = int(np.argmin(d))
    return order


def point_walk(X, labels, window_size, seed=0, start=None):
    """Walk all rows and count labels in windows of ``window_size`` visits.

    The start row is drawn with ``seed`` unless given. Every visited row,
    the start included, is counted once; the last window may be short.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=object)
    if len(X) < 2:
        raise ConfigError("point walk needs at least two rows")
    if int(window_size) < 1:
        raise ConfigError(f"window size must be >= 1, got {window_size}")
    if len(labels) != len(X):
        raise ConfigError(f"{len(X)} rows but {len(labels)} labels")
    if start is None:
        start = int(np.random.default_rng(seed).integers(len(X)))
    order = walk_order(X, start)
    w = int(window_size)
    windows = [dict(Counter(str(label) for label in labels[order[i:i + w]]))
               for i in range(0, len(order), w)]
    return WalkHistogram(w, windows, order)


def emit_histogram(hist, path, svg_path=None):
    """Write ``window_index,label,count`` rows (zeros included) and an optional SVG chart."""
    labels = hist.labels()
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["window_index", "label", "count"])
            for i, window in enumerate(hist.windows):
                for label in labels:
                    writer.writerow([i, label, window.get(label, 0)])
        if svg_path is not None:
            with open(svg_path, "w", encoding="utf-8") as fh:
                fh.write(render_svg(hist))
    except OSError as exc:
        raise OSError(f"cannot write histogram: {exc}") from exc


def read_histogram(path, window_size=None):
    """Parse a histogram CSV back into a :class:`WalkHistogram` (zero counts dropped)."""
    windows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["window_index", "label", "count"]:
            raise DataFormatError(f"{path}: unexpected header {header}")
        for row in reader:
            i, label, count = int(row[0]), row[1], int(row[2])
            window = windows.setdefault(i, {})
            if count:
                window[label] = count
    ordered = [windows[i] for i in sorted(windows)]
    return WalkHistogram(window_size or 0, ordered)


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def render_svg(hist, width=640, height=320, pad=40):
    """One polyline per label: window index on x, count on y."""
    labels = hist.labels()
    n = max(len(hist.windows), 1)
    top = max([max(w.values()) for w in hist.windows if w] or [1])
    sx = (width - 2 * pad) / max(n - 1, 1)
    sy = (height - 2 * pad) / top
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    for k, label in enumerate(labels):
        pts = " ".join(f"{pad + i * sx:.2f},{height - pad - w.get(label, 0) * sy:.2f}"
                       for i, w in enumerate(hist.windows))
        colour = _PALETTE[k % len(_PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{colour}" points="{pts}"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * k}" font-size="10" '
                     f'fill="{colour}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
