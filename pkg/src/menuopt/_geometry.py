"""Small 2-D polygon helpers: half-plane clipping, areas, centroids.

Everything here works on plain vertex lists ``[(x, y), ...]`` in
counter-clockwise order.  Polygons stay tiny (a handful of vertices), so
pure-Python loops are fine and keep the arithmetic easy to audit.
"""

from __future__ import annotations

import math

Point = tuple[float, float]

# Vertices closer than this are considered coincident when deduplicating.
VERTEX_TOL = 1e-12


def clip_halfplane(poly: list[Point], a: float, b: float, rhs: float) -> list[Point]:
    """Clip a polygon against the half-plane ``a*x + b*y <= rhs``.

    Standard Sutherland-Hodgman step.  Returns the (possibly empty) clipped
    vertex list; orientation is preserved.
    """
    if not poly:
        return []
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % n]
        dp = a * px + b * py - rhs
        dq = a * qx + b * qy - rhs
        p_in = dp <= VERTEX_TOL
        q_in = dq <= VERTEX_TOL
        if p_in:
            out.append((px, py))
        if p_in != q_in:
            # Edge crosses the boundary; dp != dq here because the two
            # endpoints sit on opposite sides.
            t = dp / (dp - dq)
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return dedup_vertices(out)


def dedup_vertices(poly: list[Point]) -> list[Point]:
    """Drop consecutive duplicate vertices (closing edge included)."""
    if len(poly) < 2:
        return poly
    out: list[Point] = []
    for p in poly:
        if not out or abs(p[0] - out[-1][0]) > VERTEX_TOL or abs(p[1] - out[-1][1]) > VERTEX_TOL:
            out.append(p)
    while len(out) >= 2 and abs(out[0][0] - out[-1][0]) <= VERTEX_TOL and abs(out[0][1] - out[-1][1]) <= VERTEX_TOL:
        out.pop()
    return out


def polygon_area(poly: list[Point]) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    if len(poly) < 3:
        return 0.0
    s = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def polygon_centroid(poly: list[Point]) -> Point:
    """Area centroid; falls back to the vertex mean for degenerate polygons."""
    a = polygon_area(poly)
    if abs(a) < 1e-300 or len(poly) < 3:
        xs = sum(p[0] for p in poly) / len(poly)
        ys = sum(p[1] for p in poly) / len(poly)
        return (xs, ys)
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        w = x0 * y1 - x1 * y0
        cx += (x0 + x1) * w
        cy += (y0 + y1) * w
    return (cx / (6.0 * a), cy / (6.0 * a))


def point_in_polygon(poly: list[Point], p: Point, tol: float = 1e-9) -> bool:
    """Inclusion test for a convex CCW polygon, with a boundary tolerance."""
    if len(poly) < 3:
        return False
    x, y = p
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < -tol:
            return False
    return True


def clip_segment_to_polygon(p0: Point, p1: Point, poly: list[Point]) -> tuple[float, float] | None:
    """Clip the segment p0->p1 to a convex CCW polygon.

    Returns the parameter interval ``(t0, t1)`` of the part inside the
    polygon, or None if the intersection is empty or a single point.
    """
    if len(poly) < 3:
        return None
    t0, t1 = 0.0, 1.0
    dx = p1[0] - p0[0]
    dy = p1[1] - p0[1]
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        # Inside of edge (a, b) for a CCW polygon is the left side:
        # cross(b - a, q - a) >= 0.
        ex, ey = bx - ax, by - ay
        f0 = ex * (p0[1] - ay) - ey * (p0[0] - ax)
        deriv = ex * dy - ey * dx  # d/dt of the cross product along the segment
        if abs(deriv) < 1e-15:
            if f0 < -1e-12:
                return None
            continue
        t_hit = -f0 / deriv
        if deriv > 0:
            t0 = max(t0, t_hit)
        else:
            t1 = min(t1, t_hit)
        if t0 >= t1 - 1e-15:
            return None
    return (t0, t1)


def segment_length(p0: Point, p1: Point) -> float:
    return math.hypot(p1[0] - p0[0], p1[1] - p0[1])
