"""SU(2) and su(2) arithmetic in the first-row convention.

A group element is stored as the first row ``{z, w}`` of the matrix

    [[ z,       w     ],
     [-conj(w), conj(z)]]

and a tangent element ``{t, w}`` (Lie algebra) as the first row of

    [[ i t,      w    ],
     [-conj(w), -i t  ]].

Besides the scalar value types there is a small set of ``*_arrays``
functions that apply the same formulas elementwise to numpy arrays; the
dynamics and grid code use them for batch evaluation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import NearAntipode

UNIT_TOL = 1e-12
ANTIPODE_TOL = 1e-9
RENORM_EVERY = 1024


@dataclass(frozen=True)
class SU2:
    z: complex
    w: complex

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "w", complex(self.w))
        n2 = abs(self.z) ** 2 + abs(self.w) ** 2
        if abs(n2 - 1.0) > 1e-6:
            raise ValueError(f"not a unit element: |z|^2+|w|^2 = {n2!r}")

    @classmethod
    def identity(cls) -> "SU2":
        return cls(1.0, 0.0)

    def norm_defect(self) -> float:
        return abs(abs(self.z) ** 2 + abs(self.w) ** 2 - 1.0)

    def renormalized(self) -> "SU2":
        n = math.sqrt(abs(self.z) ** 2 + abs(self.w) ** 2)
        return SU2(self.z / n, self.w / n)

    def inverse(self) -> "SU2":
        return SU2(self.z.conjugate(), -self.w)

    def __neg__(self) -> "SU2":
        return SU2(-self.z, -self.w)

    def __matmul__(self, other: "SU2") -> "SU2":
        return compose(self, other)

    def matrix(self) -> np.ndarray:
        return np.array([[self.z, self.w], [-self.w.conjugate(), self.z.conjugate()]])

    @classmethod
    def from_matrix(cls, m) -> "SU2":
        return cls(complex(m[0][0]), complex(m[0][1]))

    def quaternion(self) -> tuple[float, float, float, float]:
        return (self.z.real, self.z.imag, self.w.real, self.w.imag)


@dataclass(frozen=True)
class Su2Tangent:
    t: float
    w: complex

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "w", complex(self.w))

    def norm(self) -> float:
        return math.sqrt(self.t * self.t + abs(self.w) ** 2)

    def __add__(self, other: "Su2Tangent") -> "Su2Tangent":
        return Su2Tangent(self.t + other.t, self.w + other.w)

    def __sub__(self, other: "Su2Tangent") -> "Su2Tangent":
        return Su2Tangent(self.t - other.t, self.w - other.w)

    def __mul__(self, c: float) -> "Su2Tangent":
        return Su2Tangent(self.t * c, self.w * c)

    __rmul__ = __mul__

    def matrix(self) -> np.ndarray:
        return np.array([[1j * self.t, self.w], [-self.w.conjugate(), -1j * self.t]])


def compose(u: SU2, v: SU2) -> SU2:
    """First row of the matrix product ``u @ v``."""
    z = u.z * v.z - u.w * v.w.conjugate()
    w = u.z * v.w + u.w * v.z.conjugate()
    n2 = (z.real * z.real + z.imag * z.imag) + (w.real * w.real + w.imag * w.imag)
    if abs(n2 - 1.0) > UNIT_TOL:
        n = math.sqrt(n2)
        z, w = z / n, w / n
    return SU2(z, w)


def inverse(u: SU2) -> SU2:
    return u.inverse()


def exp_su2(x: Su2Tangent) -> SU2:
    n = x.norm()
    if n < 1e-8:
        # series: sin(n)/n = 1 - n^2/6 + ...
        sinc = 1.0 - n * n / 6.0
    else:
        sinc = math.sin(n) / n
    return SU2(complex(math.cos(n), sinc * x.t), sinc * x.w)


def log_su2(u: SU2) -> Su2Tangent:
    """Principal logarithm, norm in [0, pi).

    Raises NearAntipode within 1e-9 of -Id instead of picking a branch.
    """
    if math.sqrt(abs(u.z + 1.0) ** 2 + abs(u.w) ** 2) < ANTIPODE_TOL:
        raise NearAntipode("logarithm requested at -Id (residual is antipodal, norm pi)")
    s = math.sqrt(u.z.imag ** 2 + abs(u.w) ** 2)
    n = math.atan2(s, u.z.real)
    factor = n / s if s > 1e-300 else 1.0
    if s < 1e-8 and u.z.real > 0:
        factor = 1.0 + s * s / 6.0
    return Su2Tangent(factor * u.z.imag, factor * u.w)


def adjoint(u: SU2, x: Su2Tangent) -> Su2Tangent:
    """u x u^* (the adjoint action)."""
    m = u.matrix() @ x.matrix() @ u.matrix().conj().T
    return Su2Tangent(m[0, 0].imag, m[0, 1])


def dist_so3(u: SU2, v: SU2) -> float:
    """Frobenius distance between u and the nearer of +v, -v."""
    dp = abs(u.z - v.z) ** 2 + abs(u.w - v.w) ** 2
    dm = abs(u.z + v.z) ** 2 + abs(u.w + v.w) ** 2
    return math.sqrt(2.0 * min(dp, dm))


def dist_to_pm_identity(u: SU2) -> float:
    return dist_so3(u, SU2.identity())


def diag(a: float) -> SU2:
    """{e^{2 pi i a}, 0}."""
    return SU2(cmath.exp(2j * math.pi * a), 0.0)


def d_matrix(theta: float, phi: float) -> SU2:
    """{cos(theta/2), e^{2 pi i phi} sin(theta/2)}."""
    return SU2(math.cos(theta / 2.0), cmath.exp(2j * math.pi * phi) * math.sin(theta / 2.0))


def conjugator_eval(k: int, theta: float, phi: float, x) -> SU2:
    """B_k(x) D(theta, phi) B_k(x)^* evaluated at a torus point.

    Conjugating by the diagonal loop B_k multiplies the off-diagonal entry of
    D by e^{4 pi i k x}, so only 2*k*x mod 1 is needed. ``x`` may be a
    TorusAngle (exact reduction) or a float.
    """
    frac = _frac_times(2 * k, x)
    c = math.cos(theta / 2.0)
    s = math.sin(theta / 2.0)
    return SU2(c, s * cmath.exp(2j * math.pi * (phi + frac)))


def _frac_times(m: int, x) -> float:
    if hasattr(x, "times"):
        return x.times(m).to_float()
    return (m * x) % 1.0


# --- elementwise versions on numpy arrays ------------------------------------


def compose_arrays(z1, w1, z2, w2):
    return z1 * z2 - w1 * np.conj(w2), z1 * w2 + w1 * np.conj(z2)


def inverse_arrays(z, w):
    return np.conj(z), -w


def renormalize_arrays(z, w):
    n = np.sqrt(np.abs(z) ** 2 + np.abs(w) ** 2)
    return z / n, w / n


def exp_arrays(t, w):
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=complex)
    n = np.sqrt(t * t + np.abs(w) ** 2)
    small = n < 1e-8
    sinc = np.where(small, 1.0 - n * n / 6.0, np.sin(n) / np.where(small, 1.0, n))
    return np.cos(n) + 1j * sinc * t, sinc * w


def log_arrays(z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(np.sqrt(np.abs(z + 1.0) ** 2 + np.abs(w) ** 2) < ANTIPODE_TOL):
        raise NearAntipode("logarithm requested at -Id (residual is antipodal, norm pi)")
    s = np.sqrt(z.imag ** 2 + np.abs(w) ** 2)
    n = np.arctan2(s, z.real)
    small = s < 1e-8
    factor = np.where(small, 1.0 + s * s / 6.0, n / np.where(small, 1.0, s))
    return factor * z.imag, factor * w


def dist_so3_arrays(z1, w1, z2, w2):
    dp = np.abs(z1 - z2) ** 2 + np.abs(w1 - w2) ** 2
    dm = np.abs(z1 + z2) ** 2 + np.abs(w1 + w2) ** 2
    return np.sqrt(2.0 * np.minimum(dp, dm))


def adjoint_arrays(uz, uw, t, w):
    """Elementwise u X u^* for X = {t, w}."""
    u00, u01 = uz, uw
    u10, u11 = -np.conj(uw), np.conj(uz)
    p00 = u00 * (1j * t) - u01 * np.conj(w)
    p01 = u00 * w - u01 * (1j * t)
    r00 = p00 * np.conj(u00) + p01 * np.conj(u01)
    r01 = p00 * np.conj(u10) + p01 * np.conj(u11)
    return np.real(r00 / 1j), r01
