"""Symmetric eigensolver, PCA and RBF kernel PCA."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

# Above this size the cyclic Jacobi sweep is too slow in Python; LAPACK takes over.
JACOBI_MAX_DIM = 64


def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a real symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching unit
    eigenvectors as columns.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise ArithmeticError("Jacobi eigensolver did not converge")
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]


def symmetric_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenpairs; Jacobi for small matrices, LAPACK for large ones."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] <= JACOBI_MAX_DIM:
        return jacobi_eigh(a)
    values, vectors = np.linalg.eigh(0.5 * (a + a.T))
    return values[::-1].copy(), vectors[:, ::-1].copy()


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    vectors = np.array(vectors, copy=True)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            vectors[:, j] = -col
    return vectors


class PCAModel:
    def __init__(self, mean: np.ndarray, components: np.ndarray, eigenvalues: np.ndarray,
                 total_variance: float):
        self.mean = mean
        self.components = components      # (p, k)
        self.eigenvalues = eigenvalues    # (k,)
        self.total_variance = total_variance

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.ones_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) @ self.components.T + self.mean


def pca(x: np.ndarray, k: int) -> PCAModel:
    x = np.asarray(x, dtype=np.float64)
    n, p = x.shape
    if not 1 <= k <= min(n, p):
        raise ValueError(f"k={k} must lie in [1, min(N, p)] = [1, {min(n, p)}]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / max(n - 1, 1)
    values, vectors = symmetric_eigh(cov)
    values = np.maximum(values, 0.0)
    return PCAModel(mean, fix_signs(vectors[:, :k]), values[:k], float(values.sum()))


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class KPCAModel:
    def __init__(self, train: np.ndarray, gamma: float, alphas: np.ndarray, eigenvalues: np.ndarray,
                 kernel_col_mean: np.ndarray, kernel_mean: float):
        self.train = train
        self.gamma = gamma
        self.alphas = alphas                  # (N, k) eigenvectors / sqrt(eigenvalue)
        self.eigenvalues = eigenvalues
        self.kernel_col_mean = kernel_col_mean
        self.kernel_mean = kernel_mean

    @property
    def k(self) -> int:
        return self.alphas.shape[1]

    def center(self, kx: np.ndarray) -> np.ndarray:
        return kx - self.kernel_col_mean[None, :] - kx.mean(axis=1, keepdims=True) + self.kernel_mean

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.center(rbf_kernel(x, self.train, self.gamma)) @ self.alphas


def kpca(x: np.ndarray, k: int, gamma: float) -> tuple[KPCAModel, np.ndarray]:
    """Fit RBF kernel PCA; returns the model and the in-sample projections."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, N] = [1, {n}]")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    kernel = rbf_kernel(x, x, gamma)
    col_mean = kernel.mean(axis=0)
    total_mean = float(kernel.mean())
    centered = kernel - col_mean[None, :] - col_mean[:, None] + total_mean
    values, vectors = symmetric_eigh(centered)
    values, vectors = values[:k], fix_signs(vectors[:, :k])
    floor = 1e-12 * max(1.0, abs(values[0]))
    positive = values > floor
    if not positive.all():
        keep = int(np.argmin(positive)) if not positive[0] else int(positive.sum())
        log.warning("kernel PCA: %d of %d requested components have non-positive eigenvalues; "
                    "reducing k to %d", k - keep, k, keep)
        if keep == 0:
            raise ValueError("kernel PCA found no positive eigenvalue")
        values, vectors = values[:keep], vectors[:, :keep]
    alphas = vectors / np.sqrt(values)
    model = KPCAModel(x.copy(), gamma, alphas, values, col_mean, total_mean)
    return model, centered @ alphas
