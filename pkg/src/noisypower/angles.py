"""Principal angles between a target subspace and an iterate.

``U`` (``d x k``) and ``X`` (``d x p``, ``p >= k``) are orthonormal bases.
The cosines of the ``k`` principal angles are the singular values of
``U.T @ X``; their sines are the singular values of ``(I - X X^T) U``. The
largest angle ``theta_k`` drives every convergence statement in this package.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import minimize

from .dense import as_matrix, gram_schmidt_qr, singular_values, spectral_norm
from .errors import BudgetExceeded, DimensionMismatch

COS_FLOOR = 1e-14


@dataclass(frozen=True)
class AngleReport:
    k: int
    cos_theta_k: float
    tan_theta_k: float
    residual: float


def _shapes(U, X):
    U = as_matrix(U, "U")
    X = as_matrix(X, "X")
    if U.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"ambient dimensions differ: {U.shape[0]} vs {X.shape[0]}")
    if U.shape[1] > X.shape[1]:
        raise DimensionMismatch(f"need k <= p, got k={U.shape[1]}, p={X.shape[1]}")
    return U, X


def cos_theta_k(U, X):
    """Cosine of the largest principal angle: k-th singular value of ``U.T X``."""
    U, X = _shapes(U, X)
    k = U.shape[1]
    s = singular_values(U.T @ X)
    return float(min(s[k - 1], 1.0))


def residual_norm(U, X):
    """Spectral norm of ``(I - X X^T) U``, i.e. ``sin theta_k(U, X)``."""
    U, X = _shapes(U, X)
    return spectral_norm(U - X @ (X.T @ U))


def tan_theta_k(U, X):
    """Tangent of the largest principal angle, ``inf`` when ``cos <= 1e-14``.

    The sine is taken from the projection residual rather than from
    ``sqrt(1 - cos**2)``, which would round to zero for angles below ~1e-8.
    """
    return angle_report(U, X).tan_theta_k


def angle_report(U, X):
    U, X = _shapes(U, X)
    c = cos_theta_k(U, X)
    r = residual_norm(U, X)
    t = math.inf if c <= COS_FLOOR else r / c
    return AngleReport(k=U.shape[1], cos_theta_k=c, tan_theta_k=t, residual=r)


def orthonormalize(Y):
    """Orthonormal basis of ``range(Y)`` for a full-column-rank ``Y``."""
    return gram_schmidt_qr(Y)[0]


# Brute-force oracle over the recursive definition. Used by the test suite to
# cross-check the singular-value route above.

def _sphere_point(angles, m):
    if m == 1:
        return np.ones(1)
    if m == 2:
        (phi,) = angles
        return np.array([math.cos(phi), math.sin(phi)])
    theta, phi = angles
    return np.array([
        math.sin(theta) * math.cos(phi),
        math.sin(theta) * math.sin(phi),
        math.cos(theta),
    ])


def _grid(m, n):
    if m == 2:
        return [(phi,) for phi in np.linspace(0.0, math.pi, 4 * n, endpoint=False)]
    return [
        (theta, phi)
        for theta in np.linspace(0.0, math.pi / 2, n + 1)
        for phi in np.linspace(0.0, 2 * math.pi, 2 * n, endpoint=False)
    ]


def _complement(v):
    """Orthonormal basis (as columns) of the complement of unit ``v`` in R^m."""
    m = v.shape[0]
    Q, _ = np.linalg.qr(np.column_stack([v, np.eye(m)]))
    return Q[:, 1:m]


def angle_oracle(U, X, grid=60):
    """Principal angles from the recursive arccos-max definition.

    Each angle maximises ``<x, y>`` over unit ``x`` in the remaining part of
    ``range(U)`` and unit ``y`` in the remaining part of ``range(X)``. The
    inner maximum over ``y`` is the length of the projection of ``x``; the
    outer one is searched over the unit sphere (at most 2-dimensional) by a
    grid followed by Nelder-Mead refinement. The maximising pair is then
    removed from both subspaces.

    Only for tests: limited to ``d <= 12`` and ``k <= 3``.
    """
    U, X = _shapes(U, X)
    d, k = U.shape
    if d > 12 or k > 3:
        raise BudgetExceeded(f"angle_oracle supports d <= 12, k <= 3 (got d={d}, k={k})")
    Ub, Xb = U.copy(), X.copy()
    angles = []
    for _ in range(k):
        m = Ub.shape[1]

        def proj_len(a, Ub=Ub, Xb=Xb):
            return float(np.linalg.norm(Xb.T @ (Ub @ a)))

        if m == 1:
            a = np.ones(1)
        else:
            best = max(_grid(m, grid), key=lambda ang: proj_len(_sphere_point(ang, m)))
            res = minimize(
                lambda ang: -proj_len(_sphere_point(ang, m)),
                np.array(best),
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000},
            )
            a = _sphere_point(res.x, m)
        x = Ub @ a
        b = Xb.T @ x
        cos = min(float(np.linalg.norm(b)), 1.0)
        angles.append(math.acos(cos))
        if len(angles) == k:
            break
        b = b / np.linalg.norm(b) if cos > 0 else np.eye(Xb.shape[1])[:, 0]
        Ub = Ub @ _complement(a)
        Xb = Xb @ _complement(b)
    return angles
