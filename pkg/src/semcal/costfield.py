"""Semantic consistency cost over labeled point-cloud / label-image pairs.

The per-point cost couples a label-consistency test with the minimum
Manhattan distance from the projected pixel to any image pixel carrying the
point's class, weighted by the squared range of the original sensor-frame
point.  Distance lookups are served by per-class exact L1 distance
transforms precomputed once per image.

Failure modes fold into finite penalties so the aggregate loss stays total:
a point behind the camera, or one whose class is absent from the image,
costs ``(width + height) * |p|^2``, at least as much as any in-image
misprojection can.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os

import numpy as np

from .errors import CalibrationError, EmptyClass, ZeroDenominator
from .geometry import EPS_DEPTH, CameraIntrinsics, Extrinsics, PixelCoord
from .scene import IGNORE_CLASS, FramePair, LabelImage


def _worker_count(threads: int) -> int:
    return os.cpu_count() or 1 if threads == 0 else max(1, threads)


@dataclass(frozen=True)
class DistanceField:
    """Exact L1 distance transform of one class of a label image.

    ``d[row, col]`` is the minimum Manhattan distance from pixel
    ``(col, row)`` to any pixel labeled ``class_id``; zero exactly on such
    pixels.  When the class is absent, ``empty_class`` is set and every
    cell holds ``inf``.
    """

    class_id: int
    d: np.ndarray  # (height, width) float64
    empty_class: bool

    def __post_init__(self):
        self.d.setflags(write=False)

    @property
    def width(self) -> int:
        return self.d.shape[1]

    @property
    def height(self) -> int:
        return self.d.shape[0]


def _sweep_axis(d: np.ndarray, axis: int) -> np.ndarray:
    # Forward then backward raster propagation with unit step cost along one
    # axis: out[l] = min_k d[k] + |l - k|.
    n = d.shape[axis]
    shape = [1, 1]
    shape[axis] = n
    idx = np.arange(n, dtype=float).reshape(shape)
    fwd = np.minimum.accumulate(d - idx, axis=axis) + idx
    rev = np.flip(np.minimum.accumulate(np.flip(d + idx, axis=axis), axis=axis), axis=axis) - idx
    return np.minimum(fwd, rev)


def build_distance_field(image: LabelImage, class_id: int) -> DistanceField:
    """Exact L1 distance transform for one class of a label image.

    Two raster sweeps per axis (forward then backward, unit axial weights)
    propagate the distances; for the Manhattan metric this is exact, which
    the test suite checks against the brute-force definition.
    """
    mask = image.labels == class_id
    if not mask.any():
        return DistanceField(class_id, np.full(mask.shape, np.inf), True)
    d = np.where(mask, 0.0, np.inf)
    d = _sweep_axis(d, axis=1)
    d = _sweep_axis(d, axis=0)
    return DistanceField(class_id, d, False)


def build_distance_fields(image: LabelImage, classes, threads: int = 1) -> dict[int, DistanceField]:
    """Distance fields for several classes of one image, keyed by class id."""
    class_list = list(classes)
    if threads != 1 and len(class_list) > 1:
        with ThreadPoolExecutor(max_workers=_worker_count(threads)) as pool:
            fields = list(pool.map(lambda c: build_distance_field(image, c), class_list))
    else:
        fields = [build_distance_field(image, c) for c in class_list]
    return dict(zip(class_list, fields))


def query_distance(field: DistanceField, pixel) -> float:
    """Distance-field lookup at a real-valued pixel coordinate.

    In-range coordinates are rounded to the nearest cell.  Out-of-range
    coordinates decompose exactly as the clamped-cell value plus the axis
    offsets, which is valid for L1 because the clamped coordinate lies
    between the query and every in-image pixel on that axis.
    """
    if field.empty_class:
        raise EmptyClass(f"no pixel labeled {field.class_id} in this image")
    if isinstance(pixel, PixelCoord):
        u, v = pixel.u, pixel.v
    else:
        u, v = float(pixel[0]), float(pixel[1])
    u_c = min(max(u, 0.0), field.width - 1.0)
    v_c = min(max(v, 0.0), field.height - 1.0)
    base = field.d[round(v_c), round(u_c)]
    return float(base + abs(u - u_c) + abs(v - v_c))


def query_distances(field: DistanceField, uv: np.ndarray) -> np.ndarray:
    """Vectorized :func:`query_distance` over an ``(n, 2)`` coordinate array."""
    if field.empty_class:
        raise EmptyClass(f"no pixel labeled {field.class_id} in this image")
    uv = np.asarray(uv, dtype=float)
    u_c = np.clip(uv[:, 0], 0.0, field.width - 1.0)
    v_c = np.clip(uv[:, 1], 0.0, field.height - 1.0)
    base = field.d[np.rint(v_c).astype(np.intp), np.rint(u_c).astype(np.intp)]
    return base + np.abs(uv[:, 0] - u_c) + np.abs(uv[:, 1] - v_c)


def consistency(l_point: int, l_pixel: int, epsilon: float | None = None) -> float:
    """Label-consistency penalty factor in ``[0, 1]``.

    The default (``epsilon=None``) is the exact binary limit: 0 when the
    labels agree, 1 otherwise.  A positive ``epsilon`` selects the smooth
    exponential form ``1 - exp(-|l_point - l_pixel| / epsilon)`` for callers
    that want a differentiable surrogate.
    """
    if epsilon is None:
        return 0.0 if l_point == l_pixel else 1.0
    if epsilon <= 0:
        raise CalibrationError("epsilon must be positive")
    return 1.0 - math.exp(-abs(l_point - l_pixel) / epsilon)


def behind_camera_penalty(k: CameraIntrinsics, sq_norm: float) -> float:
    """Flat penalty for a point that cannot be scored against the image."""
    return float((k.width + k.height) * sq_norm)


def point_cost(
    p,
    class_id: int,
    ext: Extrinsics,
    k: CameraIntrinsics,
    fields: dict[int, DistanceField],
    image: LabelImage | None = None,
    epsilon: float | None = None,
    range_weighting: bool = True,
) -> float:
    """Cost contributed by a single labeled point under the given extrinsics.

    The projected pixel is rounded to the nearest integer cell for both the
    label comparison and the distance lookup.  Without ``image`` the label
    comparison uses the fact that the field is zero exactly on same-class
    pixels; the smooth consistency mode needs the actual pixel labels, so
    ``epsilon`` requires ``image``.
    """
    if class_id == IGNORE_CLASS:
        raise CalibrationError("the ignore class carries no cost")
    if epsilon is not None and image is None:
        raise CalibrationError("smooth consistency needs the label image")
    p = np.asarray(p, dtype=float)
    sq_norm = float(p @ p) if range_weighting else 1.0
    r, t = ext.matrix()
    cam = r @ p + t
    if cam[2] <= EPS_DEPTH:
        return behind_camera_penalty(k, sq_norm)
    field_c = fields[class_id]
    if field_c.empty_class:
        return behind_camera_penalty(k, sq_norm)
    u = round(k.fx * cam[0] / cam[2] + k.cx)
    v = round(k.fy * cam[1] / cam[2] + k.cy)
    if 0 <= u < k.width and 0 <= v < k.height:
        dist = float(field_c.d[v, u])
        if image is not None:
            factor = consistency(class_id, int(image.labels[v, u]), epsilon)
        else:
            factor = 0.0 if dist == 0.0 else 1.0
        return factor * dist * sq_norm
    return query_distance(field_c, (u, v)) * sq_norm


@dataclass
class PairBreakdown:
    """Cost tally for one frame pair: sums plus diagnostic point counts."""

    frame_id: str
    numerator: float = 0.0
    denominator: int = 0
    per_class: dict[int, tuple[float, int]] = field(default_factory=dict)
    n_consistent: int = 0
    n_inconsistent: int = 0
    n_behind_camera: int = 0
    n_out_of_image: int = 0
    n_empty_field: int = 0


@dataclass
class CostBreakdown:
    """Aggregate loss over all pairs with per-class and per-pair subtotals."""

    total: float
    numerator: float
    denominator: int
    per_class: dict[int, tuple[float, int]]
    per_pair: dict[str, PairBreakdown]
    n_consistent: int = 0
    n_inconsistent: int = 0
    n_behind_camera: int = 0
    n_out_of_image: int = 0
    n_empty_field: int = 0


class _PairPrep:
    """Immutable per-pair precomputation: class point blocks and fields."""

    __slots__ = ("frame_id", "k", "labels", "blocks", "denominator", "per_class_den")

    def __init__(self, pair: FramePair, classes, range_weighting: bool, threads: int):
        self.frame_id = pair.frame_id
        self.k = pair.intrinsics
        self.labels = pair.image.labels
        fields = build_distance_fields(pair.image, classes, threads=threads)
        self.blocks = []
        self.per_class_den = {}
        total = 0
        for cid in classes:
            mask = pair.cloud.labels == cid
            pts = pair.cloud.points[mask]
            n = pts.shape[0]
            if range_weighting:
                sqn = np.einsum("ij,ij->i", pts, pts)
            else:
                sqn = np.ones(n)
            fld = fields[cid]
            self.blocks.append((cid, pts, sqn, fld))
            self.per_class_den[cid] = n
            total += n
        self.denominator = total

    def evaluate(self, r: np.ndarray, t: np.ndarray, epsilon, counts: bool):
        """Numerator (and optionally diagnostics) for one extrinsics sample."""
        out = PairBreakdown(self.frame_id, denominator=self.denominator) if counts else None
        k = self.k
        w, h = k.width, k.height
        penalty_scale = w + h
        numerator = 0.0
        per_class = {}
        for cid, pts, sqn, fld in self.blocks:
            n = pts.shape[0]
            if n == 0:
                per_class[cid] = 0.0
                continue
            cam = pts @ r.T + t
            z = cam[:, 2]
            front = z > EPS_DEPTH
            cost = np.empty(n)
            cost[~front] = penalty_scale * sqn[~front]
            if fld.empty_class:
                cost[front] = penalty_scale * sqn[front]
                if counts:
                    out.n_behind_camera += int(n - front.sum())
                    out.n_empty_field += int(front.sum())
            else:
                fidx = np.nonzero(front)[0]
                cf = cam[fidx]
                u = np.rint(k.fx * cf[:, 0] / cf[:, 2] + k.cx).astype(np.intp)
                v = np.rint(k.fy * cf[:, 1] / cf[:, 2] + k.cy).astype(np.intp)
                in_img = (u >= 0) & (u < w) & (v >= 0) & (v < h)
                oidx = fidx[~in_img]
                if oidx.size:
                    uo, vo = u[~in_img], v[~in_img]
                    uc = np.clip(uo, 0, w - 1)
                    vc = np.clip(vo, 0, h - 1)
                    dist = fld.d[vc, uc] + np.abs(uo - uc) + np.abs(vo - vc)
                    cost[oidx] = dist * sqn[oidx]
                iidx = fidx[in_img]
                ui, vi = u[in_img], v[in_img]
                pix = self.labels[vi, ui]
                cons = pix == cid
                cost[iidx[cons]] = 0.0
                bad = iidx[~cons]
                if bad.size:
                    dist = fld.d[vi[~cons], ui[~cons]]
                    if epsilon is None:
                        cost[bad] = dist * sqn[bad]
                    else:
                        factor = 1.0 - np.exp(-np.abs(cid - pix[~cons]) / epsilon)
                        cost[bad] = factor * dist * sqn[bad]
                if counts:
                    out.n_behind_camera += int(n - front.sum())
                    out.n_out_of_image += int(oidx.size)
                    out.n_consistent += int(cons.sum())
                    out.n_inconsistent += int(bad.size)
            block_sum = float(cost.sum())
            per_class[cid] = block_sum
            numerator += block_sum
        if counts:
            out.numerator = numerator
            out.per_class = {
                cid: (per_class[cid], self.per_class_den[cid]) for cid in per_class
            }
            return out
        return numerator


def _validated_classes(classes) -> tuple[int, ...]:
    ids = tuple(dict.fromkeys(int(c) for c in classes))
    if not ids:
        raise CalibrationError("the class set must not be empty")
    if IGNORE_CLASS in ids:
        raise CalibrationError("the ignore class cannot be scored")
    return ids


class CostEvaluator:
    """Prepared multi-pair cost function, reusable across many extrinsics.

    Distance fields and per-class point blocks are built once at
    construction; :meth:`evaluate_total` is the cheap path intended for
    optimizer and sweep loops, :meth:`evaluate` additionally assembles the
    full breakdown.  Both produce bit-identical totals.  Instances are
    immutable after construction and safe to call from multiple threads.
    """

    def __init__(
        self,
        pairs,
        classes,
        epsilon: float | None = None,
        range_weighting: bool = True,
        threads: int = 1,
    ):
        pairs = list(pairs)
        if not pairs:
            raise CalibrationError("at least one frame pair is required")
        self.classes = _validated_classes(classes)
        self.epsilon = epsilon
        self._threads = threads
        if threads != 1 and len(pairs) > 1:
            with ThreadPoolExecutor(max_workers=_worker_count(threads)) as pool:
                self._preps = list(
                    pool.map(
                        lambda p: _PairPrep(p, self.classes, range_weighting, 1), pairs
                    )
                )
        else:
            self._preps = [
                _PairPrep(p, self.classes, range_weighting, threads) for p in pairs
            ]
        self.denominator = sum(p.denominator for p in self._preps)
        if self.denominator == 0:
            raise ZeroDenominator(
                "no points carry any of the requested classes "
                f"{list(self.classes)} in any pair"
            )

    def evaluate_total(self, ext: Extrinsics) -> float:
        """Aggregate cost only; the hot path for optimization loops."""
        r, t = ext.matrix()
        total = 0.0
        for prep in self._preps:
            total += prep.evaluate(r, t, self.epsilon, counts=False)
        return total / self.denominator

    def evaluate(self, ext: Extrinsics) -> CostBreakdown:
        """Aggregate cost with per-class / per-pair subtotals and counts."""
        r, t = ext.matrix()
        if self._threads != 1 and len(self._preps) > 1:
            with ThreadPoolExecutor(max_workers=_worker_count(self._threads)) as pool:
                pair_results = list(
                    pool.map(lambda p: p.evaluate(r, t, self.epsilon, True), self._preps)
                )
        else:
            pair_results = [p.evaluate(r, t, self.epsilon, True) for p in self._preps]
        per_class: dict[int, tuple[float, int]] = {c: (0.0, 0) for c in self.classes}
        numerator = 0.0
        breakdown = CostBreakdown(
            total=0.0,
            numerator=0.0,
            denominator=self.denominator,
            per_class=per_class,
            per_pair={},
        )
        for pb in pair_results:
            breakdown.per_pair[pb.frame_id] = pb
            numerator += pb.numerator
            for cid, (num, den) in pb.per_class.items():
                acc_num, acc_den = per_class[cid]
                per_class[cid] = (acc_num + num, acc_den + den)
            breakdown.n_consistent += pb.n_consistent
            breakdown.n_inconsistent += pb.n_inconsistent
            breakdown.n_behind_camera += pb.n_behind_camera
            breakdown.n_out_of_image += pb.n_out_of_image
            breakdown.n_empty_field += pb.n_empty_field
        breakdown.numerator = numerator
        breakdown.total = numerator / self.denominator
        return breakdown


def pair_cost(
    pair: FramePair,
    ext: Extrinsics,
    classes,
    epsilon: float | None = None,
    range_weighting: bool = True,
) -> PairBreakdown:
    """Numerator and denominator for a single pair.

    Raises :class:`ZeroDenominator` when the pair holds no point of any
    requested class.
    """
    prep = _PairPrep(pair, _validated_classes(classes), range_weighting, 1)
    if prep.denominator == 0:
        raise ZeroDenominator(
            f"frame {pair.frame_id!r} has no points in classes {list(classes)}"
        )
    r, t = ext.matrix()
    return prep.evaluate(r, t, epsilon, counts=True)


def total_cost(
    pairs,
    ext: Extrinsics,
    classes,
    epsilon: float | None = None,
    range_weighting: bool = True,
    threads: int = 1,
) -> CostBreakdown:
    """One-shot aggregate cost over several pairs.

    Builds the distance fields afresh; use :class:`CostEvaluator` directly
    when evaluating many candidate extrinsics against the same pairs.
    """
    evaluator = CostEvaluator(
        pairs, classes, epsilon=epsilon, range_weighting=range_weighting, threads=threads
    )
    return evaluator.evaluate(ext)
