"""SVG snapshot rendering: obstacles, agents, connectivity, fading past states.

Pure string assembly with fixed number formatting, so identical inputs yield
identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import CircleObstacle, RectangleObstacle
from .sim import ScenarioConfig, StepRecord

_SCALE = 200.0  # pixels per meter
_PAD = 0.6      # meters of padding around the drawn extent

_PALETTE = ("#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
            "#8c564b", "#e377c2", "#bcbd22", "#7f7f7f", "#1f77b4")


def _fmt(value: float) -> str:
    return f"{value:.3f}"


class _Canvas:
    def __init__(self, xmin, xmax, ymin, ymax):
        self.xmin, self.ymax = xmin, ymax
        self.width = (xmax - xmin) * _SCALE
        self.height = (ymax - ymin) * _SCALE
        self.parts: list[str] = []

    def to_px(self, point) -> tuple[float, float]:
        return ((point[0] - self.xmin) * _SCALE, (self.ymax - point[1]) * _SCALE)

    def circle(self, center, radius_m, **attrs):
        cx, cy = self.to_px(center)
        attrs.setdefault("fill", "none")
        parts = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in sorted(attrs.items()))
        self.parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(radius_m * _SCALE)}" {parts}/>'
        )

    def rect(self, lo, hi, **attrs):
        x, y = self.to_px((lo[0], hi[1]))
        attrs.setdefault("fill", "none")
        parts = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in sorted(attrs.items()))
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt((hi[0] - lo[0]) * _SCALE)}" '
            f'height="{_fmt((hi[1] - lo[1]) * _SCALE)}" {parts}/>'
        )

    def line(self, a, b, **attrs):
        x1, y1 = self.to_px(a)
        x2, y2 = self.to_px(b)
        parts = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in sorted(attrs.items()))
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" {parts}/>'
        )

    def star(self, center, radius_m, **attrs):
        cx, cy = self.to_px(center)
        r_out = radius_m * _SCALE
        r_in = 0.4 * r_out
        points = []
        for k in range(10):
            radius = r_out if k % 2 == 0 else r_in
            angle = -np.pi / 2 + k * np.pi / 5
            points.append(f"{_fmt(cx + radius * np.cos(angle))},{_fmt(cy + radius * np.sin(angle))}")
        parts = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in sorted(attrs.items()))
        self.parts.append(f'<polygon points="{" ".join(points)}" {parts}/>')

    def document(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(self.width)}" '
            f'height="{_fmt(self.height)}" viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">\n'
            f'<rect x="0" y="0" width="{_fmt(self.width)}" height="{_fmt(self.height)}" fill="#ffffff"/>\n'
            f"{body}\n</svg>\n"
        )


def _extent(config: ScenarioConfig, snapshots) -> tuple[float, float, float, float]:
    points = [config.leader_path.waypoints]
    for states in snapshots.values():
        points.append(np.array([s[:2] for s in states.values()]))
    for obs in config.environment.obstacles:
        if isinstance(obs, CircleObstacle):
            reach = obs.radius + obs.margin
            points.append(obs.center + np.array([[reach, reach], [-reach, -reach]]))
        else:
            points.append(np.array([obs.min_corner - obs.margin, obs.max_corner + obs.margin]))
    stacked = np.vstack(points)
    return (float(stacked[:, 0].min()) - _PAD, float(stacked[:, 0].max()) + _PAD,
            float(stacked[:, 1].min()) - _PAD, float(stacked[:, 1].max()) + _PAD)


def build_snapshot_svg(records: Sequence[StepRecord], config: ScenarioConfig,
                       times: Sequence[int]) -> str:
    """Overlay snapshots at the given steps, earlier ones at reduced opacity."""
    by_step: dict[int, dict[int, tuple]] = {}
    neighbor_sets: dict[int, dict[int, tuple[int, ...]]] = {}
    for record in records:
        by_step.setdefault(record.step, {})[record.agent] = record.state
        neighbor_sets.setdefault(record.step, {})[record.agent] = record.neighbors
    times = sorted(dict.fromkeys(int(t) for t in times))
    if not times:
        raise ValueError("at least one snapshot time is required")
    for t in times:
        if t not in by_step:
            raise ValueError(f"snapshot time {t} is outside the trace range")

    snapshots = {t: by_step[t] for t in times}
    canvas = _Canvas(*_extent(config, snapshots))
    leaders = set(config.leader_ids())
    agent_ids = sorted(snapshots[times[0]])
    colors = {i: _PALETTE[idx % len(_PALETTE)] for idx, i in enumerate(agent_ids)}

    for obs in config.environment.obstacles:
        if isinstance(obs, CircleObstacle):
            canvas.circle(obs.center, obs.radius, fill="#202020")
            canvas.circle(obs.center, obs.radius + obs.margin,
                          stroke="#202020", stroke_dasharray="2,3")
        else:
            canvas.rect(obs.min_corner, obs.max_corner, fill="#202020")
            canvas.rect(obs.min_corner - obs.margin, obs.max_corner + obs.margin,
                        stroke="#202020", stroke_dasharray="2,3")

    r_sep = config.mpc.separation_radius
    for order, t in enumerate(times):
        opacity = 1.0 if len(times) == 1 else 0.25 + 0.75 * order / (len(times) - 1)
        states = snapshots[t]
        drawn = set()
        for i in sorted(states):
            for j in neighbor_sets[t].get(i, ()):
                if j in states and (j, i) not in drawn:
                    drawn.add((i, j))
                    canvas.line(states[i][:2], states[j][:2], stroke="#555555",
                                stroke_dasharray="4,4", stroke_width="1",
                                opacity=_fmt(opacity))
        if t == times[-1]:
            for i in sorted(states):
                canvas.circle(states[i][:2], config.detection_radius,
                              stroke="#9ecae1", stroke_width="1", opacity="0.5")
        for i in sorted(states):
            if i in leaders:
                canvas.star(states[i][:2], 1.6 * r_sep, fill="#1f77b4",
                            opacity=_fmt(opacity))
            else:
                canvas.circle(states[i][:2], r_sep, fill=colors[i],
                              stroke="#303030", stroke_width="1", opacity=_fmt(opacity))
    return canvas.document()


def render_snapshots(records: Sequence[StepRecord], config: ScenarioConfig,
                     times: Sequence[int], path) -> None:
    Path(path).write_text(build_snapshot_svg(records, config, times), encoding="utf-8")
