"""Dense matrix kernels: thin SVD, seeded kmeans++, and small utilities.

Everything here runs in float64; the training path may downcast, the
oracle path must not.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SvdConvergenceError", "thin_svd", "kmeans", "frobenius_relerr"]

_EPS = np.finfo(np.float64).eps


class SvdConvergenceError(ArithmeticError):
    """The SVD iteration hit its cap without converging."""


def thin_svd(matrix, rank: int):
    """Top-`rank` singular triple of a dense real matrix.

    Returns (left, singulars, right) with orthonormal columns and singular
    values sorted descending; matrix ~ left @ diag(singulars) @ right.T on
    the retained subspace.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("thin_svd: input contains non-finite values")
    if not 1 <= rank <= min(m.shape):
        raise ValueError(f"rank {rank} out of range for shape {m.shape}")
    try:
        left, sing, right_t = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(f"SVD failed to converge: {exc}") from exc
    return left[:, :rank], sing[:rank], right_t[:rank].T


def _pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """kmeans++ seeding; degenerate all-zero distances fall back to the
    lowest unchosen index so the result stays deterministic."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centers[0] = points[first]
    chosen[first] = True
    dist_sq = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = dist_sq.sum()
        if total <= 0.0:
            idx = int(np.argmin(chosen))  # first unchosen index
        else:
            idx = int(rng.choice(n, p=dist_sq / total))
        centers[j] = points[idx]
        chosen[idx] = True
        dist_sq = np.minimum(dist_sq, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (np.sum(points * points, axis=1)[:, None]
         + np.sum(centers * centers, axis=1)[None, :]
         - 2.0 * points @ centers.T)
    np.maximum(d, 0.0, out=d)
    return d


def _lloyd(points: np.ndarray, centers: np.ndarray,
           max_iter: int = 300) -> tuple[np.ndarray, float, list[float]]:
    """Lloyd iterations from given centers; returns (labels, wcss, history).

    Empty clusters are re-seeded to the point farthest from its assigned
    center. The objective history is non-increasing by construction.
    """
    k = centers.shape[0]
    centers = centers.copy()
    history: list[float] = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(points, centers)
        new_labels = np.argmin(d, axis=1)  # ties -> lowest cluster index
        # Re-seed empty clusters to the farthest point.
        counts = np.bincount(new_labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            own = d[np.arange(points.shape[0]), new_labels]
            far = int(np.argmax(own))
            centers[empty] = points[far]
            d = _sq_dists(points, centers)
            new_labels = np.argmin(d, axis=1)
            counts = np.bincount(new_labels, minlength=k)
        wcss = float(d[np.arange(points.shape[0]), new_labels].sum())
        if history and wcss > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise AssertionError("kmeans objective increased across iterations")
        history.append(wcss)
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
    return labels, history[-1], history


def kmeans(points, k: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Best-of-`restarts` kmeans++ assignment, deterministic given seed."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError(f"kmeans expects a non-empty 2-D array, got {pts.shape}")
    if not 1 <= k <= pts.shape[0]:
        raise ValueError(f"k={k} out of range for {pts.shape[0]} points")
    rng = np.random.default_rng(seed)
    best_labels, best_wcss = None, np.inf
    for _ in range(max(restarts, 1)):
        centers = _pp_init(pts, k, rng)
        labels, wcss, _ = _lloyd(pts, centers)
        if wcss < best_wcss:
            best_labels, best_wcss = labels, wcss
    return best_labels


def frobenius_relerr(a, b) -> float:
    """||a - b||_F / max(||b||_F, machine epsilon)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), _EPS))
