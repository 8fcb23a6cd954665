"""Shared fixture builders for the test suite."""

import numpy as np

from semcal.geometry import CameraIntrinsics, Extrinsics, RotationAngles, Translation
from semcal.scene import FramePair, LabelImage, LabeledPointCloud


def brute_min_l1(labels, class_id, queries):
    """Reference minimum L1 distance from each (u, v) query to the class.

    Row-at-a-time broadcasting keeps 64x64 grids cheap while staying a
    direct transcription of the definition.
    """
    rows, cols = np.nonzero(np.asarray(labels) == class_id)
    queries = np.asarray(queries, dtype=float)
    if rows.size == 0:
        return np.full(queries.shape[0], np.inf)
    out = np.empty(queries.shape[0])
    for i, (u, v) in enumerate(queries):
        out[i] = np.min(np.abs(cols - u) + np.abs(rows - v))
    return out


def brute_distance_grid(labels, class_id):
    """Full-grid version of :func:`brute_min_l1`."""
    labels = np.asarray(labels)
    h, w = labels.shape
    rows, cols = np.nonzero(labels == class_id)
    if rows.size == 0:
        return np.full((h, w), np.inf)
    out = np.empty((h, w))
    col_d = np.abs(cols[None, :] - np.arange(w)[:, None])  # (w, n)
    for r in range(h):
        out[r] = np.min(np.abs(rows[None, :] - r) + col_d, axis=1)
    return out


def make_planar_pairs(seed, n_frames=4, n_classes=3, k=None, gt=None):
    """Frame pairs whose centroid correspondences are exact and coplanar.

    Each (frame, class) is a single labeled 3D point paired with a single
    labeled pixel.  The point is built by casting the ray of an integer
    pixel onto a camera-facing plane and mapping the hit back to the sensor
    frame, so the pixel centroid equals the projected 3D centroid exactly
    and all 3D centroids lie on one plane.  Returns (pairs, gt, classes).
    """
    rng = np.random.default_rng(seed)
    if k is None:
        k = CameraIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0, width=640, height=480)
    if gt is None:
        angles = rng.uniform(-0.25, 0.25, size=3)
        trans = rng.uniform(-0.5, 0.5, size=3)
        gt = Extrinsics(RotationAngles(*angles), Translation(*trans))
    r, t = gt.matrix()

    # Camera-facing plane, tilted a little so the layout is generic.
    n_c = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1.0])
    n_c /= np.linalg.norm(n_c)
    d_c = float(n_c @ np.array([0.0, 0.0, 8.0]))

    classes = tuple(range(1, n_classes + 1))
    pairs = []
    for f in range(n_frames):
        us = rng.choice(np.arange(40, k.width - 40, 16), size=n_classes, replace=False)
        vs = rng.choice(np.arange(40, k.height - 40, 16), size=n_classes, replace=False)
        points = []
        image = np.zeros((k.height, k.width), dtype=int)
        for cid, u, v in zip(classes, us, vs):
            ray = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
            depth = d_c / float(n_c @ ray)
            p_cam = depth * ray
            points.append(r.T @ (p_cam - t))
            image[int(v), int(u)] = cid
        cloud = LabeledPointCloud(points=np.array(points), labels=np.array(classes))
        pairs.append(FramePair(cloud, LabelImage(labels=image), k, f"frame_{f:04d}"))
    return pairs, gt, classes
