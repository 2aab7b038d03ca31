"""Independent reference implementations used only by the tests.

None of these import the package; they recompute quantities from first
principles so the package can be checked against them.
"""

from __future__ import annotations

import math
import re

import numpy as np


def point_in_polygon(px: float, py: float, poly: list[tuple[float, float]]) -> bool:
    """Even-odd ray casting towards +x."""
    inside = False
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < x_cross:
                inside = not inside
    return inside


def angular_polygon(agents: np.ndarray, center: np.ndarray) -> list[tuple[float, float]]:
    ang = [math.atan2(a[1] - center[1], a[0] - center[0]) for a in agents]
    order = sorted(range(len(agents)), key=lambda i: ang[i])
    return [tuple(agents[i]) for i in order]


def clip_polygon(subject: list[tuple[float, float]], clip: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW ``clip``."""

    def inside(p, a, b):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0

    def intersect(p, q, a, b):
        x1, y1, x2, y2 = *p, *q
        x3, y3, x4, y4 = *a, *b
        den = (x1 - x2) * (y3 - y4) - (y1 - y2) * (x3 - x4)
        t = ((x1 - x3) * (y3 - y4) - (y1 - y3) * (x3 - x4)) / den
        return (x1 + t * (x2 - x1), y1 + t * (y2 - y1))

    out = list(subject)
    for i in range(len(clip)):
        a, b = clip[i], clip[(i + 1) % len(clip)]
        inp, out = out, []
        if not inp:
            break
        s = inp[-1]
        for e in inp:
            if inside(e, a, b):
                if not inside(s, a, b):
                    out.append(intersect(s, e, a, b))
                out.append(e)
            elif inside(s, a, b):
                out.append(intersect(s, e, a, b))
            s = e
    return out


def shoelace(poly) -> float:
    if len(poly) < 3:
        return 0.0
    s = 0.0
    for i in range(len(poly)):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % len(poly)]
        s += x1 * y2 - x2 * y1
    return 0.5 * abs(s)


def box_corners(x, y, heading, length, width) -> list[tuple[float, float]]:
    """CCW corners of an oriented rectangle."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    return [(x + a * c - b * s, y + a * s + b * c) for a, b in ((hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw))]


def boxes_overlap_by_clipping(a, b, eps: float = 1e-9) -> bool:
    """True when the clipped intersection has positive area or the boxes touch."""
    inter = clip_polygon(a, b)
    if shoelace(inter) > eps:
        return True
    # touching boxes have a degenerate intersection; detect via vertex containment
    return len(inter) > 0


def idm_direct(v, gap, dv, v0, T, a, b, delta, s0) -> float:
    s_star = s0 + v * T + v * dv / (2 * math.sqrt(a * b))
    return a * (1 - (v / v0) ** delta - (s_star / gap) ** 2)


def brute_min_distance(points: np.ndarray, i: int) -> float:
    best = math.inf
    for j in range(len(points)):
        if j != i:
            best = min(best, math.sqrt((points[i][0] - points[j][0]) ** 2 + (points[i][1] - points[j][1]) ** 2))
    return best


def brute_dominates(a, b) -> bool:
    ge = all(x >= y for x, y in zip(a, b))
    gt = any(x > y for x, y in zip(a, b))
    return ge and gt


# Pattern automata written out by hand as regular expressions over maneuver
# symbols (A accelerate, D decelerate, B brake, L/R lane changes). A run cut
# short by the step horizon must be a prefix of some accepted word.
_K = 15
PATTERN_LANGUAGES = {
    "Ahead": rf"D{{{_K}}}|B{{{_K}}}|L{{{_K}}}R{{{_K}}}|R{{{_K}}}L{{{_K}}}",
    "SideFront": rf"L{{{_K}}}(D{{{_K}}}|B{{{_K}}}|R{{{_K}}})|R{{{_K}}}(D{{{_K}}}|B{{{_K}}}|L{{{_K}}})",
    "Behind": rf"A*(L{{{_K}}}|R{{{_K}}}|D{{{_K}}})A*",
    "SideBehind": r"A+",
}


# Prefixes of accepted words, for runs cut short by the horizon. Only Behind
# and SideBehind contain unbounded loops, so only they can be truncated.
PREFIX_LANGUAGES = {
    "Behind": rf"A*(L{{1,{_K}}}|R{{1,{_K}}}|D{{1,{_K}}})?|{PATTERN_LANGUAGES['Behind']}",
    "SideBehind": r"A+",
}


def accepts(kind: str, word: str, truncated: bool = False) -> bool:
    if truncated:
        lang = PREFIX_LANGUAGES.get(kind)
        return lang is not None and re.fullmatch(lang, word) is not None
    return re.fullmatch(PATTERN_LANGUAGES[kind], word) is not None
