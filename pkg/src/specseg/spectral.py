"""Spectral clustering of the patch graph.

The symmetric normalized Laplacian of the affinity matrix,

    L = D^{-1/2} (D - W) D^{-1/2},

is eigendecomposed and the patch embedding given by the smallest
non-trivial eigenvectors is k-means clustered into the requested
number of segments.  The Laplacian is invariant to a global rescaling
of W, so the affinity is normalized by its maximum before use.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from sklearn.base import BaseEstimator, ClusterMixin

from .cluster import kmeans, relabel_by_size
from .errors import ConfigError, DegenerateGraphError, ShapeError, SolverError
from .validation import check_affinity

SOLVERS = ("dense", "lanczos")


@dataclass(frozen=True)
class SpectralDecomposition:
    """The ``n`` algebraically smallest eigenpairs of a Laplacian."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]


def normalized_laplacian(w):
    """Symmetric normalized Laplacian of an affinity matrix.

    A node with zero degree makes the normalization undefined and
    raises :class:`DegenerateGraphError` naming the node.
    """
    w = check_affinity(w)
    degree = w.sum(axis=1)
    if np.any(degree <= 0):
        node = int(np.argmin(degree))
        raise DegenerateGraphError(
            f"node {node} is isolated (zero degree); cannot normalize"
        )
    inv_sqrt = 1.0 / np.sqrt(degree)
    lap = (np.diag(degree) - w) * np.outer(inv_sqrt, inv_sqrt)
    return (lap + lap.T) / 2.0


def _fix_signs(vecs):
    # flip each eigenvector so its largest-magnitude entry is positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eigendecompose(lap, n, solver="dense", residual_tol=1e-6):
    """Smallest ``n`` eigenpairs of a symmetric matrix, ascending.

    ``dense`` uses a direct symmetric solver; ``lanczos`` uses ARPACK
    and raises :class:`SolverError` on non-convergence.  Either way the
    residual ``|L v - lambda v|`` of every pair is checked against
    ``residual_tol * |L|_F``.  Eigenvector signs are fixed so the
    largest-magnitude entry of each vector is positive.
    """
    lap = np.asarray(lap, dtype=np.float64)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ShapeError(f"matrix must be square, got shape {lap.shape}")
    dim = lap.shape[0]
    if not 1 <= n <= dim:
        raise ConfigError(f"cannot extract {n} eigenpairs from a {dim}x{dim} matrix")
    if solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {solver!r}")

    if solver == "lanczos" and n < dim - 1:
        maxiter = max(1000, 20 * dim)
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(
                lap, k=n, which="SA", maxiter=maxiter, tol=0
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise SolverError(
                f"Lanczos iteration failed to converge within {maxiter} "
                f"iterations ({len(exc.eigenvalues)}/{n} pairs converged)"
            ) from exc
    else:
        # ARPACK cannot return nearly-full spectra; fall back to dense
        vals, vecs = scipy.linalg.eigh(lap, subset_by_index=(0, n - 1))

    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = _fix_signs(vecs[:, order])

    scale = np.linalg.norm(lap)
    if scale == 0:
        scale = 1.0
    residual = np.linalg.norm(lap @ vecs - vecs * vals[None, :], axis=0)
    worst = float(residual.max())
    if worst > residual_tol * scale:
        raise SolverError(
            f"eigenpair residual {worst:.3e} exceeds "
            f"{residual_tol:.1e} * |L|_F = {residual_tol * scale:.3e}"
        )
    return SpectralDecomposition(eigenvalues=vals, eigenvectors=vecs)


def oversegment(decomposition, n_segments, seed=0):
    """K-means over the non-trivial eigenvector embedding.

    The first (constant-direction) eigenvector is dropped; the
    remaining columns embed each patch and are clustered into
    ``n_segments`` groups.  Labels are renumbered by descending segment
    size.  Requires at least ``n_segments`` eigenvectors beyond the
    first.
    """
    if n_segments < 1:
        raise ConfigError(f"n_segments must be >= 1, got {n_segments}")
    emb = decomposition.eigenvectors[:, 1:]
    if n_segments == 1:
        return np.zeros(emb.shape[0], dtype=np.int64)
    if emb.shape[1] < n_segments:
        raise ConfigError(
            f"decomposition has {emb.shape[1]} non-trivial eigenvectors, "
            f"need {n_segments}"
        )
    labels, _ = kmeans(emb, n_segments, seed=seed)
    return relabel_by_size(labels)


def eigensegment_masks(decomposition, grid_shape):
    """Binary support (e > 0) of each non-trivial eigenvector on the grid."""
    n_h, n_w = grid_shape
    vecs = decomposition.eigenvectors[:, 1:]
    if vecs.shape[0] != n_h * n_w:
        raise ShapeError(
            f"decomposition covers {vecs.shape[0]} patches, grid is {n_h}x{n_w}"
        )
    return (vecs.T > 0).reshape(-1, n_h, n_w)


class SpectralOversegmenter(BaseEstimator, ClusterMixin):
    """Affinity matrix in, per-patch segment labels out.

    ``fit`` expects a square affinity matrix; ``labels_`` then holds
    one segment id per graph node, numbered by descending segment size.
    """

    def __init__(self, n_segments=15, solver="dense", random_state=0):
        self.n_segments = n_segments
        self.solver = solver
        self.random_state = random_state

    def fit(self, X, y=None):
        w = check_affinity(X)
        if self.n_segments > 1 and w.shape[0] < self.n_segments + 1:
            raise ConfigError(
                f"{w.shape[0]} nodes cannot support {self.n_segments} segments; "
                f"lower n_segments"
            )
        peak = w.max()
        if peak > 0:
            w = w / peak
        lap = normalized_laplacian(w)
        need = min(self.n_segments + 1, lap.shape[0])
        dec = eigendecompose(lap, need, solver=self.solver)
        self.decomposition_ = dec
        self.labels_ = oversegment(dec, self.n_segments, seed=self.random_state)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X, y).labels_
