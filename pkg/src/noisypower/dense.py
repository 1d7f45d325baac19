"""Dense linear algebra used throughout the package.

Everything here works on plain ``numpy.ndarray`` values. Symmetric matrices
are normalised by :func:`as_symmetric`, which mirrors the upper triangle so
that symmetry holds bit-exactly. Orthonormal bases are ``d x p`` arrays whose
columns pass :func:`check_orthonormal`.

The eigensolver is a cyclic Jacobi method (round-robin pair ordering, so each
round rotates ``d/2`` disjoint pairs at once). It serves as the ground-truth
oracle for eigenvectors and singular values in every experiment.
"""
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, NoConvergence, RankDeficient

RANK_TOL = 1e-12
ORTHO_TOL = 1e-10
JACOBI_TOL = 1e-12


@dataclass(frozen=True)
class SpectrumSummary:
    """Eigenpairs sorted by descending (signed) eigenvalue.

    ``eigenvectors[:, i]`` belongs to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def by_magnitude(self):
        """Reorder the pairs by non-increasing ``|eigenvalue|``.

        This is the ordering of the singular values of a symmetric matrix and
        the one the power method converges along.
        """
        order = np.argsort(-np.abs(self.eigenvalues), kind="stable")
        return SpectrumSummary(self.eigenvalues[order], self.eigenvectors[:, order])

    def singular_values(self):
        return np.abs(self.by_magnitude().eigenvalues)

    def top(self, k):
        """Top-``k`` eigenvectors by magnitude, as a ``d x k`` basis."""
        return self.by_magnitude().eigenvectors[:, :k]


def as_matrix(M, name="matrix"):
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_symmetric(A, rtol=1e-10):
    """Validate ``A`` as a symmetric matrix and return an exactly symmetric copy.

    Entries above the diagonal are authoritative; the lower triangle is
    overwritten by their mirror image. ``rtol`` bounds the asymmetry accepted
    relative to ``max(1, max|A|)``.
    """
    A = as_matrix(A, "symmetric matrix")
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"symmetric matrix must be square, got {A.shape}")
    if A.size:
        scale = max(1.0, float(np.max(np.abs(A))))
        if np.max(np.abs(A - A.T)) > rtol * scale:
            raise ValueError("matrix is not symmetric")
    upper = np.triu(A)
    return upper + np.triu(A, 1).T


def check_orthonormal(Q, tol=ORTHO_TOL):
    """Raise ``ValueError`` unless ``Q`` has orthonormal columns."""
    Q = as_matrix(Q, "basis")
    d, p = Q.shape
    if not 1 <= p <= d:
        raise DimensionMismatch(f"basis width must satisfy 1 <= p <= d, got {Q.shape}")
    err = np.max(np.abs(Q.T @ Q - np.eye(p)))
    if err > tol:
        raise ValueError(f"columns are not orthonormal (max deviation {err:.3g})")
    return Q


def _gs_pass(V):
    d, p = V.shape
    V = V.copy()
    Q = np.empty_like(V)
    R = np.zeros((p, p))
    col_norms = np.sqrt(np.sum(V * V, axis=0))
    for i in range(p):
        r_ii = np.sqrt(V[:, i] @ V[:, i])
        if not r_ii > RANK_TOL * col_norms[i]:
            raise RankDeficient(
                f"column {i} has norm {r_ii:.3g} after deflation "
                f"(original norm {col_norms[i]:.3g})"
            )
        R[i, i] = r_ii
        q = V[:, i] / r_ii
        Q[:, i] = q
        if i + 1 < p:
            r = q @ V[:, i + 1 :]
            R[i, i + 1 :] = r
            V[:, i + 1 :] -= np.outer(q, r)
    return Q, R


def gram_schmidt_qr(V):
    """QR factorisation by Gram-Schmidt with in-place deflation.

    Column ``i`` is normalised, then its component is removed from every later
    column before those are visited. If the result is not orthonormal to
    ``ORTHO_TOL`` the factorisation is repeated on ``Q`` and the triangular
    factors are combined.

    Parameters
    ----------
    V : array-like, (d, p)
        Matrix with ``p <= d`` linearly independent columns.

    Returns
    -------
    Q : ndarray, (d, p)
        Orthonormal columns spanning ``range(V)``.
    R : ndarray, (p, p)
        Upper triangular with positive diagonal, ``Q @ R == V``.

    Raises
    ------
    RankDeficient
        If a deflated column norm falls below ``RANK_TOL`` times the column's
        original norm.
    """
    V = as_matrix(V)
    d, p = V.shape
    if p > d or p == 0:
        raise DimensionMismatch(f"need 1 <= cols <= rows, got shape {V.shape}")
    Q, R = _gs_pass(V)
    if np.max(np.abs(Q.T @ Q - np.eye(p))) > ORTHO_TOL:
        Q, R2 = _gs_pass(Q)
        R = R2 @ R
    return Q, R


@lru_cache(maxsize=64)
def _round_robin(n):
    """Pairings (P, Q) for the rounds of one cyclic sweep over ``n`` indices."""
    m = n + (n % 2)
    order = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(order[i], order[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        P = np.array([a for a, _ in pairs], dtype=int)
        Q = np.array([b for _, b in pairs], dtype=int)
        rounds.append((P, Q))
        order = [order[0], order[-1]] + order[1:-1]
    return tuple(rounds)


def _off_norm(A):
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return np.sqrt(np.sum(off * off))


def symmetric_eig(A, tol=JACOBI_TOL, max_sweeps=None):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps continue until the off-diagonal Frobenius norm is at most
    ``tol * ||A||_F``. The result is deterministic for a given input.

    Raises
    ------
    NoConvergence
        After ``max_sweeps`` sweeps (default ``100 * d**2``).
    """
    A = as_symmetric(A)
    d = A.shape[0]
    if d == 0:
        raise DimensionMismatch("empty matrix")
    V = np.eye(d)
    target = tol * np.sqrt(np.sum(A * A))
    if max_sweeps is None:
        max_sweeps = 100 * d * d
    rounds = _round_robin(d)
    sweeps = 0
    while _off_norm(A) > target:
        if sweeps >= max_sweeps:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not np.any(active):
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            colP, colQ = A[:, P], A[:, Q]
            A[:, P] = c * colP - s * colQ
            A[:, Q] = s * colP + c * colQ
            rowP, rowQ = A[P, :], A[Q, :]
            A[P, :] = c[:, None] * rowP - s[:, None] * rowQ
            A[Q, :] = s[:, None] * rowP + c[:, None] * rowQ
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vP, vQ = V[:, P], V[:, Q]
            V[:, P] = c * vP - s * vQ
            V[:, Q] = s * vP + c * vQ
        sweeps += 1
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return SpectrumSummary(w[order], V[:, order])


def spectral_norm(M):
    """Largest singular value, from the top eigenvalue of the smaller Gram matrix."""
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    gram = M.T @ M if M.shape[0] >= M.shape[1] else M @ M.T
    if not np.any(gram):
        return 0.0
    top = symmetric_eig(gram).eigenvalues[0]
    return float(np.sqrt(max(top, 0.0)))


def singular_values(M):
    """All singular values of ``M`` (min(rows, cols) of them), descending."""
    M = as_matrix(M)
    gram = M.T @ M if M.shape[0] >= M.shape[1] else M @ M.T
    w = symmetric_eig(gram).eigenvalues
    return np.sqrt(np.clip(w, 0.0, None))


def random_orthonormal_basis(d, p, rng):
    """Haar-random ``d x p`` frame: Gram-Schmidt of an i.i.d. Gaussian matrix."""
    if not 1 <= p <= d:
        raise DimensionMismatch(f"need 1 <= p <= d, got d={d}, p={p}")
    try:
        return gram_schmidt_qr(rng.standard_normal((d, p)))[0]
    except RankDeficient:
        return gram_schmidt_qr(rng.standard_normal((d, p)))[0]


def random_orthogonal(d, rng):
    return random_orthonormal_basis(d, d, rng)


def max_abs_entry(M):
    M = np.asarray(M, dtype=float)
    return float(np.max(np.abs(M))) if M.size else 0.0


def coherence(A, rank=None, spectrum=None):
    """Coherence ``d * max_ij U_ij**2`` of a symmetric matrix.

    ``U`` holds the eigenvectors of the ``rank`` largest-magnitude eigenvalues.
    By default ``rank`` counts eigenvalues with ``|lambda| > 1e-10 * ||A||``;
    the zero matrix falls back to the full eigenbasis. For repeated
    eigenvalues the value depends on which eigenbasis Jacobi returns.
    """
    if spectrum is None:
        spectrum = symmetric_eig(A)
    d = spectrum.dim
    mags = spectrum.singular_values()
    if rank is None:
        rank = int(np.sum(mags > 1e-10 * mags[0])) if mags[0] > 0 else d
    if not 1 <= rank <= d:
        raise DimensionMismatch(f"rank must be in [1, {d}], got {rank}")
    U = spectrum.top(rank)
    return float(d * max_abs_entry(U) ** 2)


def symmetrize(B):
    """Embed an ``m x n`` matrix as the symmetric ``[[0, B], [B.T, 0]]``."""
    B = as_matrix(B)
    m, n = B.shape
    A = np.zeros((m + n, m + n))
    A[:m, m:] = B
    A[m:, :m] = B.T
    return A


def dct_basis(d):
    """Orthonormal DCT-II basis as the columns of a ``d x d`` matrix.

    Every entry is at most ``sqrt(2/d)`` in magnitude, so matrices diagonal in
    this basis have coherence at most 2.
    """
    j = np.arange(d)[:, None]
    f = np.arange(d)[None, :]
    C = np.sqrt(2.0 / d) * np.cos(np.pi * (2 * j + 1) * f / (2 * d))
    C[:, 0] = 1.0 / np.sqrt(d)
    return C


def with_spectrum(eigenvalues, basis):
    """Symmetric matrix ``basis @ diag(eigenvalues) @ basis.T``."""
    basis = np.asarray(basis, dtype=float)
    return as_symmetric((basis * np.asarray(eigenvalues, dtype=float)) @ basis.T)


def load_matrix(path):
    """Read the plain-text matrix format.

    The first line is either ``d`` (a symmetric ``d x d`` matrix follows) or
    ``m n`` (a general matrix). One whitespace-separated row per line follows.

    Returns
    -------
    M : ndarray
    symmetric : bool
        True when the header declared a symmetric matrix; in that case ``M``
        has passed :func:`as_symmetric`.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    header = lines[0].split()
    if len(header) == 1:
        rows = cols = int(header[0])
    elif len(header) == 2:
        rows, cols = int(header[0]), int(header[1])
    else:
        raise ValueError(f"{path}: header must be 'd' or 'm n'")
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"{path}: expected {rows} rows, found {len(body)}")
    M = np.array([[float(x) for x in ln.split()] for ln in body]) if rows else np.zeros((0, cols))
    if M.shape != (rows, cols):
        raise ValueError(f"{path}: expected shape {(rows, cols)}, got {M.shape}")
    if len(header) == 1:
        return as_symmetric(M), True
    return as_matrix(M), False


def save_matrix(path, M, symmetric=None):
    """Write ``M`` in the format read by :func:`load_matrix`."""
    M = as_matrix(M)
    if symmetric is None:
        symmetric = M.shape[0] == M.shape[1] and np.array_equal(M, M.T)
    header = f"{M.shape[0]}" if symmetric else f"{M.shape[0]} {M.shape[1]}"
    rows = [" ".join(f"{x:.17g}" for x in row) for row in M]
    Path(path).write_text("\n".join([header, *rows]) + "\n")
