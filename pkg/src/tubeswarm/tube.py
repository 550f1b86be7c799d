"""Curve virtual tube geometry.

A tube is a generating curve (stored as a uniform arc-length polyline) swept by
symmetric cross sections of half-width ``r_t(s)``. Every robot is assigned to
the cross section through its nearest point on the curve.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ContractError, TubeConstructionError

HalfWidth = Union[float, Callable[[np.ndarray], np.ndarray]]

# relative slack used when breaking nearest-point ties
_TIE_RTOL = 1e-12


class TubeValidityWarning(UserWarning):
    """The centerline folds back within one tube width of itself."""


@dataclass(frozen=True)
class GeneratingCurve:
    """Uniformly resampled centerline.

    ``points`` has shape (n, 2), ``arc`` the matching arc-length coordinates
    and ``tangents`` the unit forward tangents at each sample. For a closed
    curve the last sample repeats the first one.
    """

    points: np.ndarray
    arc: np.ndarray
    tangents: np.ndarray
    closed: bool = False

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    @property
    def normals(self) -> np.ndarray:
        return _rot90(self.tangents)


@dataclass(frozen=True)
class TubeQueryResult:
    arc_length: float
    tangent: np.ndarray
    normal: np.ndarray
    middle: np.ndarray
    half_width: float
    lateral_offset: float
    boundary_distance: float


@dataclass(frozen=True)
class TubeSpec:
    """The static environment: centerline, width profile and finishing line.

    ``half_widths`` holds r_t at every curve sample; :meth:`half_width`
    interpolates it. ``finishing_arc_length`` is ``None`` for closed tubes.
    """

    curve: GeneratingCurve
    half_widths: np.ndarray
    finishing_arc_length: Optional[float] = None
    resample_step: float = 0.01

    def __post_init__(self):
        pts = self.curve.points
        seg = pts[1:] - pts[:-1]
        object.__setattr__(self, "_seg_start", pts[:-1])
        object.__setattr__(self, "_seg_vec", seg)
        object.__setattr__(self, "_seg_len2", np.einsum("ij,ij->i", seg, seg))
        object.__setattr__(self, "_seg_len", np.sqrt(self._seg_len2))

    @property
    def closed(self) -> bool:
        return self.curve.closed

    @property
    def length(self) -> float:
        return self.curve.length

    def half_width(self, s):
        return np.interp(s, self.curve.arc, self.half_widths)

    def boundary(self):
        """Left and right boundary polylines, each of shape (n, 2)."""
        offset = self.half_widths[:, None] * self.curve.normals
        return self.curve.points + offset, self.curve.points - offset


def _rot90(v):
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def _central_tangents(points, closed):
    n = len(points)
    diff = np.empty_like(points)
    if closed:
        # points[-1] duplicates points[0]; wrap over the n-1 distinct samples
        prev = np.vstack([points[-2], points[:-2]])
        nxt = points[1:]
        diff[:-1] = nxt - prev
        diff[-1] = diff[0]
    else:
        diff[1:-1] = points[2:] - points[:-2]
        diff[0] = points[1] - points[0]
        diff[-1] = points[-1] - points[-2]
    norm = np.linalg.norm(diff, axis=1)
    if n > 2 and np.any(norm == 0):
        raise TubeConstructionError("curve folds back onto itself (zero central difference)")
    return diff / norm[:, None]


def build_tube(
    waypoints: Sequence[Sequence[float]],
    half_width_profile: HalfWidth = 1.0,
    closed: bool = False,
    resample_step: float = 0.01,
    finishing_arc_length: Optional[float] = None,
) -> TubeSpec:
    """Build a tube from a centerline polyline.

    Args:
        waypoints: ordered 2-D points of the generating curve (meters).
        half_width_profile: constant half-width, or a callable mapping an array
            of arc lengths to half-widths.
        closed: join the last waypoint back to the first.
        resample_step: upper bound on the spacing of the resampled curve.
        finishing_arc_length: arc length of the finishing cross section for
            open tubes; defaults to the full curve length.

    Raises:
        TubeConstructionError: fewer than two waypoints, or coincident
            consecutive waypoints.
    """
    if resample_step <= 0:
        raise ContractError("resample_step must be positive")
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise TubeConstructionError("need at least two 2-D waypoints")
    if not np.all(np.isfinite(pts)):
        raise TubeConstructionError("waypoints must be finite")
    if closed and not np.array_equal(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    bad = np.flatnonzero(seg == 0)
    if bad.size:
        raise TubeConstructionError(f"waypoints {bad[0]} and {bad[0] + 1} coincide")
    if closed and len(pts) < 4:
        raise TubeConstructionError("a closed tube needs at least three distinct waypoints")

    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    n_seg = max(int(np.ceil(total / resample_step - 1e-9)), 2 if closed else 1)
    arc = np.linspace(0.0, total, n_seg + 1)
    points = np.column_stack([np.interp(arc, cum, pts[:, 0]), np.interp(arc, cum, pts[:, 1])])
    if closed:
        points[-1] = points[0]
    curve = GeneratingCurve(points, arc, _central_tangents(points, closed), closed)

    if callable(half_width_profile):
        widths = np.asarray(half_width_profile(arc), dtype=float) * np.ones_like(arc)
    else:
        widths = np.full_like(arc, float(half_width_profile))
    if np.any(~np.isfinite(widths)) or np.any(widths <= 0):
        raise TubeConstructionError("half-width must be positive everywhere")

    if closed:
        if finishing_arc_length is not None:
            raise ContractError("closed tubes have no finishing line")
    else:
        if finishing_arc_length is None:
            finishing_arc_length = total
        if not 0 < finishing_arc_length <= total:
            raise ContractError("finishing_arc_length must lie on the curve")

    tube = TubeSpec(curve, widths, finishing_arc_length, resample_step)
    _warn_if_self_overlapping(tube)
    return tube


def _warn_if_self_overlapping(tube):
    # Two samples closer than a full width but far apart along the curve mean
    # the swept cross sections overlap.
    from scipy.spatial import cKDTree

    pts = tube.curve.points[:-1] if tube.closed else tube.curve.points
    arc = tube.curve.arc[: len(pts)]
    width = float(np.max(tube.half_widths))
    pairs = cKDTree(pts).query_pairs(2.0 * width, output_type="ndarray")
    if pairs.size == 0:
        return
    sep = np.abs(arc[pairs[:, 0]] - arc[pairs[:, 1]])
    if tube.closed:
        sep = np.minimum(sep, tube.length - sep)
    if np.any(sep > np.pi * width + tube.resample_step):
        warnings.warn(
            "centerline comes within one tube width of itself; cross sections overlap",
            TubeValidityWarning,
            stacklevel=3,
        )


def query(tube: TubeSpec, point) -> TubeQueryResult:
    """Project ``point`` onto the generating curve and describe its cross section.

    Defined over the whole plane: points outside the tube get
    ``|lateral_offset| > half_width`` and a negative ``boundary_distance``.
    Equidistant projections resolve to the smallest arc length.
    """
    p = np.asarray(point, dtype=float)
    px, py = float(p[0]), float(p[1])
    sx, sy = tube._seg_start[:, 0], tube._seg_start[:, 1]
    vx, vy = tube._seg_vec[:, 0], tube._seg_vec[:, 1]
    t = ((px - sx) * vx + (py - sy) * vy) / tube._seg_len2
    np.clip(t, 0.0, 1.0, out=t)
    dx = px - (sx + t * vx)
    dy = py - (sy + t * vy)
    d2 = dx * dx + dy * dy
    best = d2.min()
    k = int(np.argmax(d2 <= best * (1.0 + _TIE_RTOL) + 1e-300))
    tk = float(t[k])

    curve = tube.curve
    s = float(curve.arc[k] + tk * tube._seg_len[k])
    if tube.closed and s >= curve.length:
        s = 0.0
    t0, t1 = curve.tangents[k], curve.tangents[k + 1]
    tx = (1.0 - tk) * t0[0] + tk * t1[0]
    ty = (1.0 - tk) * t0[1] + tk * t1[1]
    tn = math.hypot(tx, ty)
    tx, ty = tx / tn, ty / tn
    tangent = np.array([tx, ty])
    normal = np.array([-ty, tx])
    mx, my = float(sx[k] + tk * vx[k]), float(sy[k] + tk * vy[k])
    middle = np.array([mx, my])
    r_t = float((1.0 - tk) * tube.half_widths[k] + tk * tube.half_widths[k + 1])
    lateral = (px - mx) * -ty + (py - my) * tx
    return TubeQueryResult(s, tangent, normal, middle, r_t, lateral, r_t - abs(lateral))


def has_passed(tube: TubeSpec, point) -> bool:
    """True once ``point`` projects at or beyond the finishing cross section."""
    if tube.finishing_arc_length is None:
        raise ContractError("has_passed is undefined for a closed tube")
    return query(tube, point).arc_length >= tube.finishing_arc_length


def write_boundary_csv(tube: TubeSpec, path) -> None:
    """Export both boundary polylines as rows of ``side,x,y``."""
    left, right = tube.boundary()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["side", "x", "y"])
        for side, line in (("left", left), ("right", right)):
            for x, y in line:
                w.writerow([side, repr(float(x)), repr(float(y))])
