"""Noisy power method: ``X_l = QR(A X_{l-1} + G_l)`` with pluggable noise.

A noise source is any callable ``noise(ell, X_prev, rng) -> G`` returning a
``d x p`` matrix; it may inspect the current iterate, so adaptive and
adversarial perturbations are expressible. The classes below cover the cases
used by the streaming and private variants.
"""
from dataclasses import asdict, dataclass, field, fields
import csv
import io
import math
from pathlib import Path

import numpy as np

from .angles import angle_report, orthonormalize, residual_norm, tan_theta_k
from .dense import (
    as_symmetric,
    check_orthonormal,
    gram_schmidt_qr,
    max_abs_entry,
    random_orthogonal,
    random_orthonormal_basis,
    spectral_norm,
    symmetric_eig,
    with_spectrum,
)
from .errors import DimensionMismatch, GapNonpositive, PreconditionUnmet, RankDeficient

C_ITER = 2.0
C_CONJ = 10.0
SLACK = 1e-9


# -- noise sources -----------------------------------------------------------

class ZeroNoise:
    kind = "zero"

    def __call__(self, ell, X, rng):
        return np.zeros_like(X)


class FixedNoise:
    """Replays a fixed sequence of matrices, ``matrices[ell - 1]`` at step ``ell``.

    ``matrices`` may instead be a function ``(ell, X) -> G``, which allows
    adversarial perturbations that look at the iterate.
    """

    kind = "adversarial-fixed"

    def __init__(self, matrices):
        self.matrices = matrices

    def __call__(self, ell, X, rng):
        if callable(self.matrices):
            return np.asarray(self.matrices(ell, X), dtype=float)
        return np.asarray(self.matrices[ell - 1], dtype=float)


class _Schedule:
    def __init__(self, scale):
        self.scale = scale

    def scale_at(self, ell):
        if np.ndim(self.scale) == 0:
            return float(self.scale)
        return float(self.scale[ell - 1])


class GaussianNoise(_Schedule):
    """I.i.d. ``N(0, scale**2)`` entries; ``scale`` may be a per-step schedule."""

    kind = "gaussian"

    def __call__(self, ell, X, rng):
        return self.scale_at(ell) * rng.standard_normal(X.shape)


class LaplacianNoise(_Schedule):
    """I.i.d. ``Lap(0, scale)`` entries (variance ``2 * scale**2``)."""

    kind = "laplacian"

    def __call__(self, ell, X, rng):
        return rng.laplace(0.0, self.scale_at(ell), size=X.shape)


class EntrywiseScaledGaussian(_Schedule):
    """``N(0, ||X_{l-1}||_inf**2 * sigma**2)`` entries, as in the private power method."""

    kind = "gaussian-entrywise-scaled"

    def __call__(self, ell, X, rng):
        return self.scale_at(ell) * max_abs_entry(X) * rng.standard_normal(X.shape)


class SamplingNoise:
    """Noise induced by replacing ``A`` with a per-block empirical covariance.

    ``blocks[ell - 1]`` is a ``T x d`` array of samples and
    ``G = (Z^T Z / T - A) X``, so that ``A X + G`` is the block-covariance
    product. The ``d x d`` empirical covariance is never formed.
    """

    kind = "sampling"

    def __init__(self, A, blocks):
        self.A = np.asarray(A, dtype=float)
        self.blocks = blocks

    def __call__(self, ell, X, rng):
        Z = np.asarray(self.blocks[ell - 1], dtype=float)
        return Z.T @ (Z @ X) / Z.shape[0] - self.A @ X


class BudgetedGaussianNoise:
    """Gaussian direction rescaled to sit on an admissibility budget.

    Each step draws ``N(0, 1)`` entries and rescales them so that
    ``||G|| <= max_norm`` and ``||U^T G|| <= max_proj`` with the tighter of the
    two met with equality, then multiplies by ``factor``.
    """

    kind = "gaussian-budgeted"

    def __init__(self, U, max_norm, max_proj, factor=1.0):
        self.U = np.asarray(U, dtype=float)
        self.max_norm = max_norm
        self.max_proj = max_proj
        self.factor = factor

    def __call__(self, ell, X, rng):
        G = rng.standard_normal(X.shape)
        if self.factor == 0:
            return np.zeros_like(G)
        c = min(self.max_norm / spectral_norm(G), self.max_proj / spectral_norm(self.U.T @ G))
        return (self.factor * c) * G


# -- configuration and trace -------------------------------------------------

@dataclass(frozen=True)
class NpmConfig:
    L: int
    p: int
    k: int
    seed: int = 0
    record_noise_norms: bool = True

    def validate(self, d):
        if not 1 <= self.k <= self.p <= d:
            raise DimensionMismatch(f"need 1 <= k <= p <= d, got k={self.k}, p={self.p}, d={d}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    tan_theta: float
    cos_theta: float
    residual: float
    noise_norm: float
    noise_proj_norm: float
    x_inf_norm: float


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRecord))


def _fmt(x):
    if isinstance(x, int):
        return str(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


@dataclass
class ConvergenceTrace:
    """Per-iteration record of angles, residuals and noise magnitudes.

    ``meta`` carries run-level values (noise scale, number of noisy products)
    that writers copy into summaries.
    """

    k: int
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def final(self):
        return self.records[-1]

    def add(self, ell, U, X, G, record_noise=True):
        rep = angle_report(U, X)
        if record_noise:
            g, ug = spectral_norm(G), spectral_norm(U.T @ G)
        else:
            g = ug = math.nan
        self.records.append(TraceRecord(
            iter=ell,
            tan_theta=rep.tan_theta_k,
            cos_theta=rep.cos_theta_k,
            residual=rep.residual,
            noise_norm=g,
            noise_proj_norm=ug,
            x_inf_norm=max_abs_entry(X),
        ))

    def to_csv(self, path=None):
        """CSV text with one row per iteration (17 significant digits).

        Written to ``path`` when given; the text is returned either way.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(v) for v in asdict(r).values()])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, k):
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        recs = [
            TraceRecord(int(r["iter"]), *(float(r[c]) for c in TRACE_COLUMNS[1:]))
            for r in rows
        ]
        return cls(k=k, records=recs)


# -- the method ----------------------------------------------------------------

def target_basis(A, k, spectrum=None):
    """Top-``k`` eigenvectors of ``A`` (by magnitude) from the Jacobi oracle."""
    if spectrum is None:
        spectrum = symmetric_eig(A)
    return spectrum.top(k)


def npm_run(A, cfg, noise=None, X0=None, *, rng=None, U=None, spectrum=None):
    """Run ``cfg.L`` steps of the noisy power method on symmetric ``A``.

    Parameters
    ----------
    A : array-like, (d, d)
    cfg : NpmConfig
    noise : callable, optional
        ``noise(ell, X_prev, rng) -> G``; defaults to :class:`ZeroNoise`.
    X0 : array-like, (d, p), optional
        Starting basis. Drawn with :func:`random_orthonormal_basis` from
        ``rng`` when omitted.
    rng : numpy.random.Generator, optional
        Defaults to ``default_rng(cfg.seed)``.
    U : array-like, (d, k), optional
        Target subspace for the trace; computed from ``spectrum`` (or the
        Jacobi oracle) when omitted.

    Returns
    -------
    X : ndarray, (d, p)
        Final orthonormal iterate.
    trace : ConvergenceTrace
        Exactly ``cfg.L`` records.

    Raises
    ------
    RankDeficient
        When some ``Y_l`` loses column rank; carries ``iteration`` and the
        partial ``trace``.
    """
    A = as_symmetric(A)
    d = A.shape[0]
    cfg.validate(d)
    if noise is None:
        noise = ZeroNoise()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if U is None:
        U = target_basis(A, cfg.k, spectrum)
    X = random_orthonormal_basis(d, cfg.p, rng) if X0 is None else check_orthonormal(X0)
    if X.shape != (d, cfg.p):
        raise DimensionMismatch(f"X0 must be {d}x{cfg.p}, got {X.shape}")
    trace = ConvergenceTrace(k=cfg.k, meta={"noise": getattr(noise, "kind", "custom")})
    for ell in range(1, cfg.L + 1):
        G = noise(ell, X, rng)
        if G.shape != X.shape:
            raise DimensionMismatch(f"noise at step {ell} has shape {G.shape}, expected {X.shape}")
        try:
            X, _ = gram_schmidt_qr(A @ X + G)
        except RankDeficient as e:
            raise RankDeficient(f"iteration {ell}: {e}", iteration=ell, trace=trace) from e
        trace.add(ell, U, X, G, cfg.record_noise_norms)
    return X, trace


# -- checkers ----------------------------------------------------------------

@dataclass(frozen=True)
class DecreaseCheck:
    holds: bool
    lhs: float
    rhs: float

    @property
    def margin(self):
        return self.rhs - self.lhs


def _sigmas(A, spectrum):
    if spectrum is None:
        spectrum = symmetric_eig(A)
    return spectrum, spectrum.singular_values()


def _sigma(s, i):
    """1-based singular value, zero past the end."""
    return float(s[i - 1]) if i <= len(s) else 0.0


def check_decrease(A, X, G, k, eps, spectrum=None):
    """Evaluate the one-step decrease bound for ``tan theta_k``.

    With ``gap = sigma_k - sigma_{k+1}``, requires ``4||U^T G|| <= gap cos theta_k(U, X)``
    and ``4||G|| <= gap * eps`` with ``eps < 1``; then checks

        tan theta_k(U, AX + G) <= max(eps, max(eps, (sigma_{k+1}/sigma_k)**0.25) tan theta_k(U, X))

    up to ``1e-9``.

    Raises
    ------
    PreconditionUnmet
        When the hypotheses fail; this is not a violation of the bound.
    """
    A = as_symmetric(A)
    X = check_orthonormal(X)
    G = np.asarray(G, dtype=float)
    spectrum, s = _sigmas(A, spectrum)
    U = spectrum.top(k)
    s_k, s_k1 = _sigma(s, k), _sigma(s, k + 1)
    gap = s_k - s_k1
    if not eps < 1:
        raise PreconditionUnmet(f"eps must be < 1, got {eps}")
    rep = angle_report(U, X)
    if 4 * spectral_norm(U.T @ G) > gap * rep.cos_theta_k:
        raise PreconditionUnmet("4||U^T G|| exceeds gap * cos theta_k(U, X)")
    if 4 * spectral_norm(G) > gap * eps:
        raise PreconditionUnmet("4||G|| exceeds gap * eps")
    lhs = tan_theta_k(U, orthonormalize(A @ X + G))
    rate = (s_k1 / s_k) ** 0.25 if s_k > 0 else 1.0
    rhs = max(eps, max(eps, rate) * rep.tan_theta_k)
    return DecreaseCheck(holds=lhs <= rhs + SLACK, lhs=lhs, rhs=rhs)


def required_iterations(sigma_k, sigma_k1, d, tau, eps, c_iter=C_ITER):
    """``ceil(c_iter * sigma_k / (sigma_k - sigma_{k+1}) * ln(d tau / eps))``."""
    if not sigma_k > sigma_k1:
        raise GapNonpositive(f"need sigma_k > sigma_k+1, got {sigma_k} <= {sigma_k1}")
    if sigma_k1 < 0:
        raise ValueError("singular values must be non-negative")
    if not 0 < eps <= 0.5:
        raise ValueError(f"eps must lie in (0, 1/2], got {eps}")
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    return max(1, math.ceil(c_iter * sigma_k / (sigma_k - sigma_k1) * math.log(d * tau / eps)))


def noise_admissible(A, U, G, eps, p, k, tau, spectrum=None, rtol=1e-12):
    """Whether ``G`` meets the per-step noise budget for a random start.

    True iff ``5||G|| <= eps * gap`` and
    ``5||U^T G|| <= gap (sqrt(p) - sqrt(k-1)) / (tau sqrt(d))``, each up to a
    relative ``rtol`` so exact boundary cases are not lost to rounding.
    """
    A = as_symmetric(A)
    d = A.shape[0]
    _, s = _sigmas(A, spectrum)
    gap = _sigma(s, k) - _sigma(s, k + 1)
    G = np.asarray(G, dtype=float)
    U = np.asarray(U, dtype=float)
    lim_g = eps * gap
    lim_u = gap * (math.sqrt(p) - math.sqrt(k - 1)) / (tau * math.sqrt(d))
    ok_g = 5 * spectral_norm(G) <= lim_g * (1 + rtol)
    ok_u = 5 * spectral_norm(U.T @ G) <= lim_u * (1 + rtol)
    return bool(ok_g and ok_u)


# -- conjecture probes ---------------------------------------------------------

@dataclass
class ConjectureProbeReport:
    conjecture: int
    trials: int
    violations: int
    worst_margin: float
    L: int
    rank_failures: int = 0
    margins: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "conjecture": self.conjecture,
            "trials": self.trials,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "L": self.L,
            "rank_failures": self.rank_failures,
        }


def conjecture_iterations(conj_id, s, k, p, d, eps, c_iter=C_ITER):
    if conj_id == 1:
        s_k, s_p1 = _sigma(s, k), _sigma(s, p + 1)
        if not s_k > s_p1:
            raise GapNonpositive("conjecture 1 needs sigma_k > sigma_{p+1}")
        return max(1, math.ceil(c_iter * s_k / (s_k - s_p1) * math.log(d / eps)))
    return max(1, math.ceil(c_iter * _sigma(s, k + 1) / eps * math.log(d)))


def probe_conjecture(conj_id, trials, d, k, p, spectrum, eps, rng,
                     noise_scale=1.0, c_iter=C_ITER, c_conj=C_CONJ, basis=None):
    """Randomised check of the two open conjectures on gap-free convergence.

    ``A`` has the given non-increasing, non-negative ``spectrum`` in a random
    orthonormal eigenbasis (or ``basis``). Every trial starts from a fresh
    random basis and uses Gaussian noise rescaled to the conjectured budget
    (times ``noise_scale``):

    * ``conj_id=1`` (``p > k``): ``100||G|| <= eps (sigma_k - sigma_{p+1})`` and
      ``100||U^T G|| <= (sqrt(p) - sqrt(k-1)) / sqrt(d)``; success means
      ``||(I - X X^T) U|| <= eps``.
    * ``conj_id=2`` (``p = 2k``): ``||G|| <= eps`` and ``||U^T G|| <= eps sqrt(k/d)``;
      success means ``||(I - X X^T) A|| <= sigma_{k+1} + c_conj * eps``.

    Violations are counted, never raised. ``worst_margin`` is the smallest
    ``bound - achieved`` over completed trials.
    """
    if conj_id not in (1, 2):
        raise ValueError(f"conjecture id must be 1 or 2, got {conj_id}")
    if conj_id == 1 and not p > k:
        raise ValueError("conjecture 1 needs p > k")
    if conj_id == 2 and p != 2 * k:
        raise ValueError("conjecture 2 needs p == 2k")
    s = np.asarray(spectrum, dtype=float)
    if s.shape != (d,) or np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("spectrum must hold d non-negative, non-increasing values")
    Q = random_orthogonal(d, rng) if basis is None else np.asarray(basis, dtype=float)
    A = with_spectrum(s, Q)
    U = Q[:, :k]
    L = conjecture_iterations(conj_id, s, k, p, d, eps, c_iter)
    if conj_id == 1:
        max_norm = eps * (s[k - 1] - _sigma(s, p + 1)) / 100
        max_proj = (math.sqrt(p) - math.sqrt(k - 1)) / (100 * math.sqrt(d))
    else:
        max_norm = eps
        max_proj = eps * math.sqrt(k / d)
    noise = BudgetedGaussianNoise(U, max_norm, max_proj, noise_scale)
    cfg = NpmConfig(L=L, p=p, k=k, record_noise_norms=False)
    report = ConjectureProbeReport(conj_id, trials, 0, math.inf, L)
    for child in rng.spawn(trials):
        try:
            X, _ = npm_run(A, cfg, noise, rng=child, U=U)
        except RankDeficient:
            report.violations += 1
            report.rank_failures += 1
            continue
        if conj_id == 1:
            margin = eps - residual_norm(U, X)
        else:
            margin = _sigma(s, k + 1) + c_conj * eps - spectral_norm(A - X @ (X.T @ A))
        report.margins.append(margin)
        report.worst_margin = min(report.worst_margin, margin)
        if margin < 0:
            report.violations += 1
    return report
