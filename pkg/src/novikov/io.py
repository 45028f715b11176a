"""Run configurations, provenance headers and text/pixmap artifacts.

Every artifact starts with a provenance header holding the canonical
configuration and its hash.  Worker counts and output paths are excluded
from the hash so that they cannot change artifact bytes.  Reals are written
with 17 significant digits.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .gasket import ProjTriangle, format_triangle
from .stability import CHARTS, CellOutcome, StereographicMap, chart_lattice

# keys that affect wall-clock or file placement only
VOLATILE_KEYS = frozenset({"jobs", "out", "command_line"})


def fmt(x: float) -> str:
    """Real number with 17 significant digits."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RunConfig:
    """Serializable description of one CLI run."""

    command: str
    params: dict = dc_field(default_factory=dict)

    def canonical(self) -> dict:
        kept = {k: v for k, v in sorted(self.params.items()) if k not in VOLATILE_KEYS}
        return {"command": self.command, "params": kept, "version": __version__}

    def to_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=str)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        return cls(d["command"], dict(d.get("params", {})))

    def header(self, extra: dict | None = None) -> list[str]:
        """Provenance lines without comment markers."""
        lines = [f"novikov {__version__} {self.command}", f"config_hash={self.hash}", f"config={self.to_json()}"]
        for k, v in sorted((extra or {}).items()):
            lines.append(f"{k}={json.dumps(v, sort_keys=True, default=str)}")
        return lines


def _commented(lines: Iterable[str]) -> str:
    return "".join(f"# {ln}\n" for ln in lines)


def write_text(path, body: str, config: RunConfig, extra: dict | None = None) -> None:
    """Write ``body`` behind a ``#`` provenance header."""
    Path(path).write_text(_commented(config.header(extra)) + body)


# ---------------------------------------------------------------------- maps
MAP_COLUMNS = ("i", "j", "Bx", "By", "Bz", "status", "lx", "ly", "lz")


def map_csv(m: StereographicMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MAP_COLUMNS)
    for s, o in zip(m.samples, m.outcomes):
        soul = o.soul if o.soul is not None else ("", "", "")
        w.writerow([s.i, s.j, *s.direction, o.status, *soul])
    return buf.getvalue()


def write_map_csv(m: StereographicMap, path, config: RunConfig) -> None:
    """Map CSV; for the sphere lattice rows come chart by chart (x, y, z)."""
    extra = {"chart": m.chart, "n": m.n, "provenance": m.provenance}
    write_text(path, map_csv(m), config, extra)


def read_map_csv(path) -> StereographicMap:
    """Rebuild a map (without per-cell notes) from :func:`write_map_csv` output."""
    text = Path(path).read_text()
    meta = {}
    body = []
    for ln in text.splitlines():
        if ln.startswith("# "):
            k, _, v = ln[2:].partition("=")
            meta[k] = v
        else:
            body.append(ln)
    chart, n = json.loads(meta["chart"]), int(json.loads(meta["n"]))
    samples = chart_lattice(chart, n)
    rows = list(csv.DictReader(body))
    if len(rows) != len(samples):
        raise ValueError(f"{path}: {len(rows)} rows, expected {len(samples)} for chart {chart} n={n}")
    outcomes = []
    for s, r in zip(samples, rows):
        if (int(r["i"]), int(r["j"])) != (s.i, s.j) or tuple(int(r[k]) for k in ("Bx", "By", "Bz")) != s.direction:
            raise ValueError(f"{path}: row order does not match the lattice")
        soul = tuple(int(r[k]) for k in ("lx", "ly", "lz")) if r["lx"] else None
        outcomes.append(CellOutcome(r["status"], soul))
    prov = json.loads(meta.get("provenance", "{}"))
    return StereographicMap(chart, n, samples, outcomes, prov)


TRIVIAL_RGB = (255, 255, 255)
CHAOTIC_RGB = (0, 0, 0)
UNDETERMINED_RGB = (128, 128, 128)
ERROR_RGB = (255, 0, 0)


def soul_color(soul) -> tuple[int, int, int]:
    """Deterministic color of a soul, kept away from white, black and grey."""
    h = hashlib.sha256(",".join(str(int(x)) for x in soul).encode()).digest()
    rgb = [40 + b % 176 for b in h[:3]]
    if max(rgb) - min(rgb) < 48:  # too close to grey
        rgb[h[3] % 3] = 40 if rgb[h[3] % 3] > 128 else 215
    return tuple(rgb)


def cell_color(o: CellOutcome | None) -> tuple[int, int, int]:
    if o is None:
        return ERROR_RGB
    return {"Trivial": TRIVIAL_RGB, "ChaoticCandidate": CHAOTIC_RGB, "Undetermined": UNDETERMINED_RGB,
            "Error": ERROR_RGB}.get(o.status) or soul_color(o.soul)


def map_pixels(m: StereographicMap) -> np.ndarray:
    """RGB raster: one pixel per cell, j growing upwards; sphere charts side by side."""
    charts = CHARTS if m.chart == "sphere" else (m.chart,)
    side = m.n + 1
    img = np.zeros((side, side * len(charts), 3), dtype=np.uint8)
    for p, ch in enumerate(charts):
        g = m.grid(ch)
        for i in range(side):
            for j in range(side):
                img[side - 1 - j, p * side + i] = cell_color(g[i][j])
    return img


def render_map(m: StereographicMap, path, config: RunConfig) -> Path:
    """Binary PPM with a provenance comment, plus a ``.legend`` sidecar.

    Returns:
        The legend path.
    """
    img = map_pixels(m)
    h, w, _ = img.shape
    head = f"P6\n# config_hash={config.hash}\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(head + img.tobytes())
    counts: dict = {}
    for o in m.outcomes:
        if o.status == "Soul":
            counts[o.soul] = counts.get(o.soul, 0) + 1
    lines = ["soul lx ly lz r g b samples"]
    for name, rgb in (("Trivial", TRIVIAL_RGB), ("ChaoticCandidate", CHAOTIC_RGB),
                      ("Undetermined", UNDETERMINED_RGB), ("Error", ERROR_RGB)):
        lines.append(f"{name} - - - {rgb[0]} {rgb[1]} {rgb[2]} "
                     f"{sum(o.status == name for o in m.outcomes)}")
    for soul in sorted(counts, key=lambda s: (-counts[s], s)):
        r, g, b = soul_color(soul)
        lines.append(f"Soul {soul[0]} {soul[1]} {soul[2]} {r} {g} {b} {counts[soul]}")
    legend = Path(str(path) + ".legend")
    write_text(legend, "\n".join(lines) + "\n", config)
    return legend


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM written by :func:`render_map`."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(fields[1]), int(fields[2])
    pix = np.frombuffer(data[pos + 1:pos + 1 + 3 * w * h], dtype=np.uint8)
    return pix.reshape(h, w, 3)


# ---------------------------------------------------------------------- trajectories and gaskets
def trajectory_text(points: np.ndarray, direction: str, offset, status: str) -> str:
    pts = np.asarray(points, dtype=float)
    head = f"traj B={direction} s={offset if isinstance(offset, str) else fmt(offset)} status={status} n={len(pts)}\n"
    return head + "".join(" ".join(fmt(x) for x in p) + "\n" for p in pts)


def write_trajectory(traj, path, config: RunConfig) -> None:
    """Trajectory dump: ``traj`` header line, then one lift point per line."""
    write_text(path, trajectory_text(traj.points, str(traj.direction), traj.offset, traj.status), config)


def read_trajectory(path) -> tuple[dict, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    head = dict(kv.split("=", 1) for kv in lines[0].split()[1:])
    pts = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    return head, pts


def gasket_text(triangles: Iterable[ProjTriangle]) -> str:
    return "".join(format_triangle(t) + "\n" for t in triangles)
