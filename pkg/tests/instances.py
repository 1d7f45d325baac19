"""Random instances shared by the unit and acceptance suites."""
from dataclasses import dataclass

import numpy as np

from noisypower.angles import cos_theta_k
from noisypower.dense import random_orthonormal_basis, spectral_norm


@dataclass
class DecreaseInstance:
    A: np.ndarray
    s: np.ndarray
    k: int
    p: int
    X: np.ndarray
    G: np.ndarray
    eps: float

    @property
    def U(self):
        return np.eye(len(self.s))[:, : self.k]

    @property
    def gap(self):
        s_k1 = self.s[self.k] if self.k < len(self.s) else 0.0
        return self.s[self.k - 1] - s_k1


def gapped_spectrum(d, k, rng):
    """Positive non-increasing spectrum with a relative gap of at least 5% after index k."""
    top = np.sort(rng.uniform(1.0, 10.0, k))[::-1]
    rest = np.sort(rng.uniform(0.0, top[-1] * rng.uniform(0.05, 0.95), d - k))[::-1]
    return np.concatenate([top, rest])


def decrease_instance(rng, d_max=20):
    """Diagonal ``A`` with a gapped spectrum, a random basis ``X`` and noise meeting
    both hypotheses of the one-step decrease bound (sometimes with equality)."""
    d = int(rng.integers(2, d_max + 1))
    k = int(rng.integers(1, min(d - 1, 4) + 1))
    p = int(rng.integers(k, min(d, k + 3) + 1))
    s = gapped_spectrum(d, k, rng)
    A = np.diag(s)
    X = random_orthonormal_basis(d, p, rng)
    eps = float(rng.uniform(0.01, 0.99))
    gap = s[k - 1] - (s[k] if k < d else 0.0)
    Z = rng.standard_normal((d, p))
    U = np.eye(d)[:, :k]
    c = cos_theta_k(U, X)
    scale = min(gap * eps / (4 * spectral_norm(Z)), gap * c / (4 * spectral_norm(U.T @ Z)))
    shrink = 1.0 if rng.random() < 0.2 else float(rng.uniform(0.0, 1.0))
    # stay a hair inside the boundary so rounding cannot flip the hypotheses
    G = Z * scale * shrink * (1 - 1e-12)
    return DecreaseInstance(A=A, s=s, k=k, p=p, X=X, G=G, eps=eps)


def decrease_suite(count, seed):
    rng = np.random.default_rng(seed)
    return [decrease_instance(rng) for _ in range(count)]
