"""Streaming PCA with the block power method.

Samples arrive from a :class:`SampleStream`. Each of the ``L`` blocks of
``T = n // L`` samples is folded into ``Y = sum_i z_i (z_i^T X)`` a few rows at
a time, so the working set is ``O(p d)``: the ``d x d`` block covariance is
never formed.
"""
from dataclasses import dataclass
import math
from pathlib import Path

import numpy as np

from .dense import (
    as_matrix,
    as_symmetric,
    check_orthonormal,
    gram_schmidt_qr,
    max_abs_entry,
    random_orthonormal_basis,
    spectral_norm,
    symmetric_eig,
)
from .errors import (
    CalibrationFailed,
    ConfigInvalid,
    DimensionMismatch,
    RankDeficient,
    StreamExhausted,
)
from .npm import ConvergenceTrace, TraceRecord

C_TRUNC = 8.0


# -- spiked covariance model ---------------------------------------------------

@dataclass(frozen=True)
class SpikedCovarianceModel:
    """``N(0, (U diag(lambdas)**2 U^T + sigma**2 I) / D)`` with ``D = sum lambdas**2 + d sigma**2``.

    The normaliser makes ``E ||z||**2 == 1``.
    """

    U: np.ndarray
    lambdas: np.ndarray
    sigma: float

    def __post_init__(self):
        U = check_orthonormal(self.U)
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if lam.shape != (U.shape[1],):
            raise DimensionMismatch(f"need {U.shape[1]} lambdas, got {lam.shape[0]}")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise ValueError("lambdas must be positive and non-increasing")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "sigma", float(self.sigma))

    @classmethod
    def random(cls, d, lambdas, sigma, rng):
        lambdas = np.asarray(lambdas, dtype=float)
        return cls(random_orthonormal_basis(d, len(lambdas), rng), lambdas, sigma)

    @property
    def d(self):
        return self.U.shape[0]

    @property
    def k(self):
        return self.U.shape[1]

    @property
    def D(self):
        return float(np.sum(self.lambdas**2) + self.d * self.sigma**2)

    def eigenvalues(self):
        """Covariance eigenvalues: ``(lambda_i**2 + sigma**2)/D`` then ``sigma**2/D``."""
        ev = np.full(self.d, self.sigma**2 / self.D)
        ev[: self.k] = (self.lambdas**2 + self.sigma**2) / self.D
        return ev

    def cov_matvec(self, X):
        """Covariance times ``X`` in ``O(d p)`` memory."""
        X = np.asarray(X, dtype=float)
        return ((self.U * self.lambdas**2) @ (self.U.T @ X) + self.sigma**2 * X) / self.D

    def covariance(self):
        return self.cov_matvec(np.eye(self.d))

    def sample(self, rng, size=None):
        """One sample (``size=None``) or a ``size x d`` block of samples."""
        m = 1 if size is None else size
        g = rng.standard_normal((m, self.k))
        noise = self.sigma * rng.standard_normal((m, self.d))
        Z = ((g * self.lambdas) @ self.U.T + noise) / math.sqrt(self.D)
        return Z[0] if size is None else Z


def sample_spiked(model, rng):
    return model.sample(rng)


@dataclass(frozen=True)
class RoundnessParams:
    B: float
    p: int


def spiked_roundness(model):
    """``B = (lambda_1**2 + sigma**2) / (sum(lambda**2)/d + sigma**2)`` with ``p = k``."""
    lam, s2 = model.lambdas, model.sigma**2
    B = (lam[0] ** 2 + s2) / (np.sum(lam**2) / model.d + s2)
    return RoundnessParams(B=float(B), p=model.k)


# -- streams -------------------------------------------------------------------

class SampleStream:
    """Source of ``d``-dimensional samples.

    Subclasses implement ``_draw(m)`` returning up to ``m`` rows; an empty
    result signals the end of the stream.
    """

    kind = "abstract"

    def __init__(self, dim):
        self.dim = dim

    def take(self, m):
        Z = np.asarray(self._draw(m), dtype=float).reshape(-1, self.dim)
        if not np.all(np.isfinite(Z)):
            raise ValueError(f"{self.kind} stream produced non-finite entries")
        return Z

    def __iter__(self):
        while True:
            Z = self.take(1)
            if Z.shape[0] == 0:
                return
            yield Z[0]


class SpikedStream(SampleStream):
    kind = "spiked"

    def __init__(self, model, rng):
        super().__init__(model.d)
        self.model = model
        self.rng = rng

    def _draw(self, m):
        return self.model.sample(self.rng, m)


class ArrayStream(SampleStream):
    """Replays the rows of a fixed array, then ends."""

    kind = "deterministic-replay"

    def __init__(self, samples):
        samples = as_matrix(samples, "samples")
        super().__init__(samples.shape[1])
        self.samples = samples
        self.pos = 0

    def _draw(self, m):
        Z = self.samples[self.pos : self.pos + m]
        self.pos += Z.shape[0]
        return Z


class FileStream(SampleStream):
    """One whitespace-separated vector per line, read lazily."""

    kind = "file-backed"

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path)
        first = self._next_line()
        if first is None:
            raise StreamExhausted(f"{path}: no samples")
        self._pending = first
        super().__init__(first.shape[0])

    def _next_line(self):
        for line in self._fh:
            line = line.strip()
            if line and not line.startswith("#"):
                return np.array([float(x) for x in line.split()])
        return None

    def _draw(self, m):
        rows = []
        while len(rows) < m:
            row = self._pending if self._pending is not None else self._next_line()
            self._pending = None
            if row is None:
                break
            if row.shape[0] != self.dim:
                raise DimensionMismatch(f"{self.path}: row of length {row.shape[0]}, expected {self.dim}")
            rows.append(row)
        return np.array(rows).reshape(-1, self.dim)

    def close(self):
        self._fh.close()


class FunctionStream(SampleStream):
    """Wraps a raw source ``fn(rng) -> vector``, optionally scaled by ``scale``."""

    kind = "scaled-generic"

    def __init__(self, fn, rng, dim, scale=1.0):
        super().__init__(dim)
        self.fn = fn
        self.rng = rng
        self.scale = scale

    def _draw(self, m):
        return np.array([self.scale * np.asarray(self.fn(self.rng), dtype=float) for _ in range(m)])


def sample_generic_scaled(raw_source, rng, scale):
    return scale * np.asarray(raw_source(rng), dtype=float)


def calibrate_scale(raw_source, rng, pilot=10_000, ts=(1.0, 2.0, 4.0), lo=1e-6, hi=1e6):
    """Largest ``s`` in ``[lo, hi]`` whose pilot tail obeys ``P(s||z|| > t) <= exp(-t)``.

    The tail is checked empirically at each ``t`` in ``ts`` over ``pilot``
    draws of ``raw_source(rng)``.

    Raises
    ------
    CalibrationFailed
        If even ``s = lo`` violates the check.
    """
    norms = np.array([np.linalg.norm(raw_source(rng)) for _ in range(pilot)])

    def ok(s):
        return all(np.mean(s * norms > t) <= math.exp(-t) for t in ts)

    if not ok(lo):
        raise CalibrationFailed(f"no scale in [{lo:g}, {hi:g}] satisfies the tail check")
    if ok(hi):
        return hi
    a, b = math.log(lo), math.log(hi)
    for _ in range(80):
        mid = 0.5 * (a + b)
        if ok(math.exp(mid)):
            a = mid
        else:
            b = mid
    return math.exp(a)


# -- the streaming power method -------------------------------------------------

@dataclass(frozen=True)
class SpmConfig:
    n: int
    L: int
    p: int
    k: int
    seed: int = 0
    chunk: int = 0

    @property
    def T(self):
        return self.n // self.L

    @property
    def rows_per_chunk(self):
        return self.chunk if self.chunk > 0 else 8 * self.p

    def validate(self, d):
        if not 1 <= self.k <= self.p <= d:
            raise DimensionMismatch(f"need 1 <= k <= p <= d, got k={self.k}, p={self.p}, d={d}")
        if self.L < 1 or self.T < 1:
            raise ValueError(f"need L >= 1 and n // L >= 1, got n={self.n}, L={self.L}")


class _Reference:
    """Covariance used only for tracing: top-k basis plus ``cov @ X``."""

    def __init__(self, ref, k):
        if isinstance(ref, SpikedCovarianceModel):
            if ref.k < k:
                raise DimensionMismatch(f"model has {ref.k} spikes, trace needs k={k}")
            self.U = ref.U[:, :k]
            self.matvec = ref.cov_matvec
        else:
            A = as_symmetric(ref)
            self.U = symmetric_eig(A).top(k)
            self.matvec = lambda X: A @ X


def empirical_covariance(samples):
    Z = as_matrix(samples, "samples")
    return Z.T @ Z / Z.shape[0]


def spm_run(stream, cfg, reference=None, X0=None, rng=None):
    """Run the streaming power method on ``cfg.L * cfg.T`` samples.

    Parameters
    ----------
    stream : SampleStream
    cfg : SpmConfig
    reference : SpikedCovarianceModel or array-like, optional
        True (or held-out estimated) covariance, used only for the trace. With
        no reference the angle and noise columns are NaN.
    X0 : array-like, optional
        Starting basis; random from ``rng`` (default ``default_rng(cfg.seed)``)
        when omitted.

    Returns
    -------
    X : ndarray, (d, p)
    trace : ConvergenceTrace
        Noise columns hold ``G_l = Y_l / T - A X_{l-1}``.

    Raises
    ------
    StreamExhausted
        If the stream ends before ``L * T`` samples.
    RankDeficient
        If a block product loses rank; carries the iteration and partial trace.
    """
    d = stream.dim
    cfg.validate(d)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    X = random_orthonormal_basis(d, cfg.p, rng) if X0 is None else check_orthonormal(X0)
    ref = _Reference(reference, cfg.k) if reference is not None else None
    T = cfg.T
    trace = ConvergenceTrace(k=cfg.k, meta={"noise": "sampling", "T": T, "n_used": T * cfg.L})
    for ell in range(1, cfg.L + 1):
        Y = np.zeros((d, cfg.p))
        remaining = T
        while remaining:
            Z = stream.take(min(cfg.rows_per_chunk, remaining))
            if Z.shape[0] == 0:
                raise StreamExhausted(
                    f"stream ended in block {ell}: needed {cfg.L * T} samples"
                )
            Y += Z.T @ (Z @ X)
            remaining -= Z.shape[0]
        X_prev = X
        try:
            X, _ = gram_schmidt_qr(Y)
        except RankDeficient as e:
            raise RankDeficient(f"iteration {ell}: {e}", iteration=ell, trace=trace) from e
        if ref is not None:
            trace.add(ell, ref.U, X, Y / T - ref.matvec(X_prev))
        else:
            nan = math.nan
            trace.records.append(TraceRecord(ell, nan, nan, nan, nan, nan, max_abs_entry(X)))
    return X, trace


def split_blocks(samples, L):
    """The ``L`` consecutive blocks of ``len(samples) // L`` rows used by :func:`spm_run`."""
    samples = as_matrix(samples, "samples")
    T = samples.shape[0] // L
    return [samples[i * T : (i + 1) * T] for i in range(L)]


# -- error terms ---------------------------------------------------------------

def measure_error_terms(A, U, X, samples):
    """``(||(A - A_hat) X||, ||U^T (A - A_hat) X||)`` for the empirical covariance ``A_hat``.

    ``A`` may be a matrix or a :class:`SpikedCovarianceModel`; ``A_hat`` is
    applied as ``Z^T (Z X) / n`` without being formed.
    """
    Z = as_matrix(samples, "samples")
    if Z.shape[0] == 0:
        raise ValueError("need at least one sample")
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    AX = A.cov_matvec(X) if isinstance(A, SpikedCovarianceModel) else np.asarray(A, dtype=float) @ X
    G = AX - Z.T @ (Z @ X) / Z.shape[0]
    return spectral_norm(G), spectral_norm(U.T @ G)


def truncation_mask(Z, X, U, B, p, n, C=C_TRUNC):
    """Boolean mask of the rows of ``Z`` that the truncated distribution zeroes."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    d = Z.shape[1]
    big = C * math.log(n)
    proj = big * math.sqrt(B * p / d)
    return (
        (np.linalg.norm(Z, axis=1) > big)
        | (np.linalg.norm(Z @ U, axis=1) > proj)
        | (np.linalg.norm(Z @ X, axis=1) > proj)
    )


def truncate_sample(z, X, U, B, p, n, C=C_TRUNC):
    """Return ``z``, or the zero vector when any of the three norms exceeds its threshold.

    Thresholds are ``C log n`` for ``||z||`` and ``C log n sqrt(B p / d)`` for
    ``||U^T z||`` and ``||z^T X||``.
    """
    z = np.asarray(z, dtype=float)
    if truncation_mask(z, X, U, B, p, n, C)[0]:
        return np.zeros_like(z)
    return z


def matrix_chernoff_probe(sampler, mean, R, n_values, t, trials, rng):
    """Empirical tail of ``||mean of n i.i.d. matrices - E X||`` against ``d exp(-c n t**2)``.

    ``sampler(rng, n)`` returns an ``(n, d, d)`` stack of symmetric matrices
    bounded by ``R`` in spectral norm. For each ``n`` the fraction of
    ``trials`` with deviation ``>= t R`` is recorded; ``c`` is the largest
    constant for which every observed fraction stays under the bound
    (``inf`` when no deviation was seen at all).
    """
    mean = np.asarray(mean, dtype=float)
    d = mean.shape[0]
    fractions = []
    for n in n_values:
        hits = 0
        for _ in range(trials):
            dev = sampler(rng, n).mean(axis=0) - mean
            if np.max(np.abs(np.linalg.eigvalsh(dev))) >= t * R:
                hits += 1
        fractions.append(hits / trials)
    cs = [math.log(d / f) / (n * t * t) for n, f in zip(n_values, fractions) if f > 0]
    return {"n": list(n_values), "fractions": fractions, "c": min(cs) if cs else math.inf}


# -- sample-size sweep ---------------------------------------------------------

def sweep_samples(model, n_grid, seeds, p, L, k=None):
    """Median final residual of :func:`spm_run` at each sample budget.

    Each seed draws its own stream and starting basis; the model (and hence the
    target subspace) is shared across the sweep.

    Returns
    -------
    list of (n, median_residual, residuals)
    """
    n_grid = list(n_grid)
    seeds = list(seeds)
    if len(n_grid) < 2:
        raise ConfigInvalid("n_grid", "n_grid needs at least 2 points")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigInvalid("n_grid", "n_grid must be strictly ascending")
    if len(seeds) < 5:
        raise ConfigInvalid("seeds", "need at least 5 seeds")
    k = model.k if k is None else k
    rows = []
    for n in n_grid:
        residuals = []
        for seed in seeds:
            rng = np.random.default_rng([seed, n])
            cfg = SpmConfig(n=n, L=L, p=p, k=k, seed=seed)
            _, trace = spm_run(SpikedStream(model, rng), cfg, reference=model, rng=rng)
            residuals.append(trace.final.residual)
        rows.append((n, float(np.median(residuals)), residuals))
    return rows
