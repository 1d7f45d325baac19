"""Differentially private power iteration.

Three mechanisms are supported:

``gaussian-entry-scaled``
    Entry-level privacy. Step ``l`` adds ``N(0, ||X_{l-1}||_inf**2 sigma**2)``
    noise with ``sigma = sqrt(4 p L log(1/delta)) / epsilon``.
``gaussian-spectral``
    Privacy under unit spectral-norm changes, plain ``N(0, sigma**2)`` noise.
``laplacian-spectral``
    Pure ``(epsilon, 0)`` privacy under unit spectral-norm changes with
    ``Lap(0, lambda)`` noise, ``lambda = 10 p L sqrt(d) / epsilon``.

Only the calibration and the noise distributions are implemented and tested
here; the privacy guarantee itself is not checked at run time.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .dense import as_symmetric, coherence, spectral_norm, symmetric_eig
from .errors import InvalidBudget
from .npm import (
    EntrywiseScaledGaussian,
    GaussianNoise,
    LaplacianNoise,
    NpmConfig,
    npm_run,
    required_iterations,
)

MECHANISMS = {
    "gaussian-entry-scaled": "single-entry",
    "gaussian-spectral": "unit-spectral",
    "laplacian-spectral": "unit-spectral",
}


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float
    mechanism: str = "gaussian-entry-scaled"
    neighborhood: str = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise InvalidBudget(f"unknown mechanism {self.mechanism!r}")
        expected = MECHANISMS[self.mechanism]
        if self.neighborhood is None:
            object.__setattr__(self, "neighborhood", expected)
        elif self.neighborhood != expected:
            raise InvalidBudget(
                f"mechanism {self.mechanism} requires neighborhood {expected!r}, "
                f"got {self.neighborhood!r}"
            )
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidBudget(f"epsilon must be positive and finite, got {self.epsilon}")
        lo_ok = self.delta >= 0 if self.is_laplacian else self.delta > 0
        if not (lo_ok and self.delta < 1):
            raise InvalidBudget(f"delta {self.delta} out of range for {self.mechanism}")

    @property
    def is_laplacian(self):
        return self.mechanism == "laplacian-spectral"


@dataclass(frozen=True)
class NoiseScale:
    value: float
    formula: str


def gaussian_sigma(epsilon, delta, p, L):
    """``sqrt(4 p L ln(1/delta)) / epsilon``."""
    if not epsilon > 0:
        raise InvalidBudget(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise InvalidBudget(f"delta must be in (0, 1), got {delta}")
    if p < 1 or L < 1:
        raise InvalidBudget(f"need p >= 1 and L >= 1, got p={p}, L={L}")
    return NoiseScale(math.sqrt(4 * p * L * math.log(1 / delta)) / epsilon, "gaussian")


def laplacian_lambda(epsilon, p, L, d):
    """``10 p L sqrt(d) / epsilon``."""
    if not epsilon > 0:
        raise InvalidBudget(f"epsilon must be positive, got {epsilon}")
    if p < 1 or L < 1 or d < 1:
        raise InvalidBudget(f"need p, L, d >= 1, got p={p}, L={L}, d={d}")
    return NoiseScale(10 * p * L * math.sqrt(d) / epsilon, "laplacian")


def privacy_ledger(priv, scale, noisy_products):
    return {
        "epsilon": priv.epsilon,
        "delta": priv.delta,
        "mechanism": priv.mechanism,
        "noisy_products": noisy_products,
        "sigma_or_lambda": scale.value,
    }


def ppm_run(A, p, L, priv, rng, k=None, X0=None, spectrum=None):
    """Private power method with entrywise-scaled Gaussian noise.

    Runs ``L`` noisy iterations, then one more noisy product
    ``Y = A X_L + G_{L+1}``. The noise scale is calibrated for all ``L + 1``
    products. ``k`` (default ``p``) only selects the target for the trace.

    Returns
    -------
    X : ndarray, (d, p)
    trace : ConvergenceTrace
        ``trace.meta`` holds ``sigma`` and the privacy ledger.
    Y : ndarray, (d, p)
        The extra noisy product.
    """
    if priv.mechanism != "gaussian-entry-scaled":
        raise InvalidBudget(f"ppm_run needs gaussian-entry-scaled, got {priv.mechanism}")
    A = as_symmetric(A)
    scale = gaussian_sigma(priv.epsilon, priv.delta, p, L + 1)
    noise = EntrywiseScaledGaussian(scale.value)
    cfg = NpmConfig(L=L, p=p, k=p if k is None else k)
    X, trace = npm_run(A, cfg, noise, X0, rng=rng, spectrum=spectrum)
    Y = A @ X + noise(L + 1, X, rng)
    trace.meta.update(sigma=scale.value, ledger=privacy_ledger(priv, scale, L + 1))
    return X, trace, Y


def spectral_ppm_run(A, p, L, priv, rng, k=None, X0=None, spectrum=None):
    """Power method private under unit spectral-norm changes.

    Noise entries are i.i.d. ``N(0, sigma**2)`` or ``Lap(0, lambda)``
    depending on ``priv.mechanism``, with no ``||X||_inf`` scaling.
    """
    A = as_symmetric(A)
    if priv.mechanism == "gaussian-spectral":
        scale = gaussian_sigma(priv.epsilon, priv.delta, p, L)
        noise = GaussianNoise(scale.value)
    elif priv.mechanism == "laplacian-spectral":
        scale = laplacian_lambda(priv.epsilon, p, L, A.shape[0])
        noise = LaplacianNoise(scale.value)
    else:
        raise InvalidBudget(f"spectral_ppm_run needs a spectral mechanism, got {priv.mechanism}")
    cfg = NpmConfig(L=L, p=p, k=p if k is None else k)
    X, trace = npm_run(A, cfg, noise, X0, rng=rng, spectrum=spectrum)
    trace.meta.update(sigma_or_lambda=scale.value, ledger=privacy_ledger(priv, scale, L))
    return X, trace


@dataclass
class LowRankResult:
    B: np.ndarray
    error: float
    X: np.ndarray
    Y: np.ndarray
    L: int
    trace: object = field(repr=False)


def private_low_rank(A, k, priv, rng, L=None, tau=1.0, eps_target=0.1, spectrum=None):
    """Rank-``2k`` private approximation ``B = X_L Y_{L+1}^T``.

    Runs :func:`ppm_run` with ``p = 2k``. When ``L`` is omitted it comes from
    :func:`required_iterations` on the true spectrum, which is convenient for
    experiments but is not itself private; pass ``L`` for a private pipeline.
    """
    A = as_symmetric(A)
    d = A.shape[0]
    if spectrum is None:
        spectrum = symmetric_eig(A)
    if L is None:
        s = spectrum.singular_values()
        s_k1 = float(s[k]) if k < d else 0.0
        L = required_iterations(float(s[k - 1]), s_k1, d, tau, eps_target)
    X, trace, Y = ppm_run(A, 2 * k, L, priv, rng, k=k, spectrum=spectrum)
    B = X @ Y.T
    return LowRankResult(B=B, error=spectral_norm(A - B), X=X, Y=Y, L=L, trace=trace)


# -- sign symmetry and incoherence ---------------------------------------------

@dataclass(frozen=True)
class SignProfile:
    """Fraction of runs with ``sign(<u_i, x>) = +1`` for each eigenvector ``u_i``."""

    runs: int
    frequencies: np.ndarray
    column: int = 0


def sign_profile(A, p, L, sigma_schedule, runs, rng, column=0, spectrum=None):
    """Empirical sign distribution of ``<u_i, x>`` for one column ``x`` of ``X_L``.

    Each run is an independent Gaussian-noise power iteration (noise scale
    ``sigma_schedule``, a scalar or one value per step) from a random start.
    """
    A = as_symmetric(A)
    if spectrum is None:
        spectrum = symmetric_eig(A)
    V = spectrum.eigenvectors
    cfg = NpmConfig(L=L, p=p, k=1, record_noise_norms=False)
    noise = GaussianNoise(sigma_schedule)
    plus = np.zeros(A.shape[0])
    for child in rng.spawn(runs):
        X, _ = npm_run(A, cfg, noise, rng=child, U=spectrum.top(1))
        plus += V.T @ X[:, column] > 0
    return SignProfile(runs=runs, frequencies=plus / runs, column=column)


@dataclass
class IncoherenceReport:
    per_run_max: list
    mu: float
    threshold: float

    @property
    def max(self):
        return max(self.per_run_max)

    @property
    def within(self):
        return sum(m <= self.threshold for m in self.per_run_max)

    def to_dict(self):
        return {
            "runs": len(self.per_run_max),
            "max_x_inf": self.max,
            "mu": self.mu,
            "threshold": self.threshold,
            "runs_within": self.within,
            "violations": len(self.per_run_max) - self.within,
            "worst_margin": self.threshold - self.max,
        }


def incoherence_threshold(mu, d):
    """``4 sqrt(mu ln d / d)``, the coordinate bound for iterates of a Gaussian-noise run."""
    return 4 * math.sqrt(mu * math.log(d) / d)


def incoherence_trace(A, p, L, priv, runs, rng, k=1, spectrum=None):
    """Largest ``||X_l||_inf`` over ``l = 1..L`` for each of ``runs`` private runs.

    ``priv`` selects entry-scaled (:func:`ppm_run`) or spectral
    (:func:`spectral_ppm_run`) Gaussian noise. The report carries the
    coherence of ``A`` and the matching threshold.
    """
    A = as_symmetric(A)
    if priv.is_laplacian:
        raise InvalidBudget("incoherence_trace needs a Gaussian mechanism")
    if spectrum is None:
        spectrum = symmetric_eig(A)
    mu = coherence(A, spectrum=spectrum)
    maxima = []
    for child in rng.spawn(runs):
        if priv.mechanism == "gaussian-entry-scaled":
            _, trace, _ = ppm_run(A, p, L, priv, child, k=k, spectrum=spectrum)
        else:
            _, trace = spectral_ppm_run(A, p, L, priv, child, k=k, spectrum=spectrum)
        maxima.append(float(trace.column("x_inf_norm").max()))
    return IncoherenceReport(per_run_max=maxima, mu=mu, threshold=incoherence_threshold(mu, A.shape[0]))
