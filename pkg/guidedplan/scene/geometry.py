"""
Planar geometry helpers shared by the scene, encoders and simulator
"""

from typing import Tuple

import numpy as np


def wrap_to_pi(x):
    """ Wrap angles to (-pi, pi] """

    x = np.asarray(x, dtype=np.float64)
    out = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def to_local(points: np.ndarray, origin: np.ndarray,
             theta: float) -> np.ndarray:
    """ Express global points [..., 2] in the frame at <origin> rotated by <theta> """

    points = np.asarray(points, dtype=np.float64)
    return (points - np.asarray(origin)[:2]) @ rotation(theta)


def to_global(points: np.ndarray, origin: np.ndarray,
              theta: float) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ rotation(theta).T + np.asarray(origin)[:2]


def rotate_vectors(vectors: np.ndarray, theta: float) -> np.ndarray:
    """ Rotate free vectors [..., 2] (velocities, accelerations) by theta """

    return np.asarray(vectors, dtype=np.float64) @ rotation(theta).T


def arc_lengths(points: np.ndarray) -> np.ndarray:
    """ Cumulative arc length along a polyline [K, >=2], starting at 0 """

    seg = np.linalg.norm(np.diff(points[:, :2], axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_to_polyline_distance(point: np.ndarray, points: np.ndarray) -> float:
    """ Euclidean distance from a point to the segments of a polyline """

    p = np.asarray(point, dtype=np.float64)[:2]
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    if len(pts) == 1:
        return float(np.linalg.norm(pts[0] - p))
    a, b = pts[:-1], pts[1:]
    ab = b - a
    denom = np.maximum((ab**2).sum(axis=1), 1e-18)
    t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.linalg.norm(closest - p, axis=1).min())


def project_to_polyline(point: np.ndarray,
                        points: np.ndarray) -> Tuple[float, float, float]:
    """ Project a point onto a polyline

    Returns:
        (s, lateral, heading): arc length of the foot point, signed lateral
        offset (positive to the left of travel) and the segment heading
    """

    p = np.asarray(point, dtype=np.float64)[:2]
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    s_cum = arc_lengths(pts)
    a, b = pts[:-1], pts[1:]
    ab = b - a
    seg_len2 = np.maximum((ab**2).sum(axis=1), 1e-18)
    t = np.clip(((p - a) * ab).sum(axis=1) / seg_len2, 0.0, 1.0)
    closest = a + t[:, None] * ab
    dist = np.linalg.norm(closest - p, axis=1)
    i = int(np.argmin(dist))
    heading = float(np.arctan2(ab[i, 1], ab[i, 0]))
    d = p - closest[i]
    lateral = float(-np.sin(heading) * d[0] + np.cos(heading) * d[1])
    s = float(s_cum[i] + t[i] * np.sqrt(seg_len2[i]))
    return s, lateral, heading


def interpolate_polyline(points: np.ndarray, s: float) -> Tuple[float, float, float]:
    """ (x, y, heading) at arc length s; beyond the ends the end segments extend linearly """

    pts = np.asarray(points, dtype=np.float64)[:, :2]
    s_cum = arc_lengths(pts)
    i = int(np.clip(np.searchsorted(s_cum, s, side='right') - 1, 0,
                    len(pts) - 2))
    seg = pts[i + 1] - pts[i]
    length = max(float(np.linalg.norm(seg)), 1e-12)
    heading = float(np.arctan2(seg[1], seg[0]))
    xy = pts[i] + seg / length * (s - s_cum[i])
    return float(xy[0]), float(xy[1]), heading


def box_corners(x: float, y: float, heading: float, length: float,
                width: float) -> np.ndarray:
    """ Corners [4, 2] of an oriented rectangle, counter-clockwise """

    half = np.array([[length / 2, width / 2], [-length / 2, width / 2],
                     [-length / 2, -width / 2], [length / 2, -width / 2]])
    return half @ rotation(heading).T + np.array([x, y])
