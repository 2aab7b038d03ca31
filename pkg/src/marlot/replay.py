"""Top-down replay frames (SVG) and a summary plot for recorded episodes."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .harness import EpisodeTrace
from .road import RoadNetwork, build_scenario

COLORS = {0: "#d62728"}
SV_COLOR = "#1f77b4"


def _box(v: dict, length: float, width: float) -> list[tuple[float, float]]:
    c, s = math.cos(v["heading"]), math.sin(v["heading"])
    hl, hw = length / 2, width / 2
    return [(v["x"] + a * c - b * s, v["y"] + a * s + b * c)
            for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]


def _fmt(pts) -> str:
    # y is flipped so north is up in SVG space
    return " ".join(f"{x:.3f},{-y:.3f}" for x, y in pts)


def _road_edges(network: RoadNetwork, step: float = 2.0) -> list[list[tuple[float, float]]]:
    edges = []
    for sec in network.sections:
        n = max(int(math.ceil((sec.s1 - sec.s0) / step)), 1)
        ss = [sec.s0 + (sec.s1 - sec.s0) * i / n for i in range(n + 1)]
        for k in range(sec.lane_count + 1):
            lat = -k * network.lane_width
            edges.append([network.point(s, lat)[:2] for s in ss])
    return edges


def render_frame(trace: EpisodeTrace, index: int, network: RoadNetwork, view: float = 60.0) -> str:
    rec = trace.steps[index]
    sim = trace.header.get("config", {}).get("sim", {})
    length, width = sim.get("vehicle_length", 4.8), sim.get("vehicle_width", 1.9)
    ego = rec["vehicles"][0]
    x0, y0 = ego["x"] - view / 2, -ego["y"] - view / 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.3f} {y0:.3f} {view} {view}" '
             f'width="600" height="600">',
             f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{view}" height="{view}" fill="#f4f4f4"/>']
    for edge in _road_edges(network):
        parts.append(f'<polyline fill="none" stroke="#888" stroke-width="0.15" points="{_fmt(edge)}"/>')
    path = trace.ego_path()[: index + 1]
    parts.append(f'<polyline id="ego-path" fill="none" stroke="#d62728" stroke-width="0.2" '
                 f'points="{_fmt(path)}"/>')
    for v in rec["vehicles"]:
        color = COLORS.get(v["vid"], SV_COLOR)
        parts.append(f'<polygon id="veh-{v["vid"]}" fill="{color}" fill-opacity="0.8" '
                     f'points="{_fmt(_box(v, length, width))}"/>')
    label = escape(f'step {rec["step"]}  t={rec["t"]:.1f}s  ego {ego["speed"]:.1f} m/s')
    parts.append(f'<text x="{x0 + 1:.3f}" y="{y0 + 3:.3f}" font-size="2.5">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def parse_ego_path(svg: str) -> list[tuple[float, float]]:
    """World coordinates of the ego-path polyline in a rendered frame."""
    import xml.etree.ElementTree as ET

    root = ET.fromstring(svg)
    for el in root.iter():
        if el.get("id") == "ego-path":
            pts = []
            for pair in el.get("points", "").split():
                x, y = pair.split(",")
                pts.append((float(x), -float(y)))
            return pts
    raise ValueError("no ego-path polyline in frame")


def network_for(trace: EpisodeTrace) -> RoadNetwork:
    cfg = trace.header.get("config", {})
    seed = cfg.get("harness", {}).get("seed", 0)
    width = cfg.get("sim", {}).get("lane_width", 3.5)
    return build_scenario(trace.header["road"], trace.header["lanes"], seed, width)


def render_replay(trace: EpisodeTrace, out_dir: str | Path, network: RoadNetwork | None = None,
                  summary: bool = True) -> list[Path]:
    """One SVG per step plus ``summary.png`` of ego speed and gaps over time."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write replay to {out}: {exc}") from exc
    network = network or network_for(trace)
    files = []
    for i in range(len(trace.steps)):
        p = out / f"frame_{i:05d}.svg"
        p.write_text(render_frame(trace, i, network))
        files.append(p)
    if summary and trace.steps:
        files.append(render_summary(trace, out / "summary.png"))
    return files


def render_summary(trace: EpisodeTrace, path: str | Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = [s["t"] for s in trace.steps]
    speed = [s["vehicles"][0]["speed"] for s in trace.steps]
    gaps = []
    for s in trace.steps:
        ego = s["vehicles"][0]
        gaps.append(min((math.hypot(v["x"] - ego["x"], v["y"] - ego["y"]) for v in s["vehicles"][1:]),
                        default=float("nan")))
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    a1.plot(t, speed, color="#d62728")
    a1.set_ylabel("ego speed (m/s)")
    a2.plot(t, gaps, color=SV_COLOR)
    a2.set_ylabel("nearest SV (m)")
    a2.set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
