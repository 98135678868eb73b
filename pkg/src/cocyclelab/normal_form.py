"""Finite-depth KAM normal form: planning, backward synthesis, verification.

A planned spec has levels i = 1..N. Level i carries a resonance k_i, the
angle and phase (theta_i, phi_i) of its conjugator

    G_i(x) = B_{k_i}(x) D(theta_i, phi_i) B_{k_i}(x)^*,

and the normal-form data (a_i, fhat_i) describing the cocycle at that level.
The top of the tower is the constant E(a_top) = {e^{2 pi i a_top}, 0}
(optionally carrying one resonant mode). The cocycle is synthesized from the
top down,

    M_N(x) = top(x),   M_{i-1}(x) = G_i(x + alpha)^* M_i(x) G_i(x),

so every conjugacy identity G_i(x+alpha) M_{i-1}(x) G_i(x)^* = M_i(x) is
exact up to roundoff, and the base cocycle is A(x) = M_0(x). The map M_{i-1}
is the level-i normal form A_i e^{F_i}.

Convention: B_k conjugation doubles off-diagonal frequencies, so the
resonant Fourier mode of level i sits at frequency 2*k_i.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import algebra as alg
from .algebra import SU2
from .errors import FastPathUnavailable, NoDominantMode, NoValidTau
from .points import ExplicitPoints, GridPoints, OrbitPoints
from .torus import (
    RotationSpec,
    TorusAngle,
    angle_times_int,
    cf_convergents,
    diophantine_scan,
    dist_mod,
)

TWO_PI = 2.0 * math.pi
DEFAULT_THETA = (2.0, 1.2, 0.8)
TOP_SEARCH_BITS = 20


@dataclass(frozen=True)
class PlanParams:
    alpha: RotationSpec
    depth: int = 3
    ks: tuple | None = None
    cf_positions: tuple | None = None
    first_position: int = 9
    growth: tuple | None = None
    theta: tuple = DEFAULT_THETA
    phi: tuple | None = None
    epsilon: float = 0.05
    top_mode: str = "zero"
    top_magnitude: float = 0.0
    top_k: int | None = None
    top_offset: float | None = None
    couple_fhat_to_next_iterate: bool = False
    scan_K: int = 1000


@dataclass(frozen=True)
class NormalFormLevel:
    k: int
    theta: float
    phi: float
    a: TorusAngle
    fhat: complex
    n: int
    tau_adjust: int = 0
    orientation: int = 1

    def d(self) -> SU2:
        return alg.d_matrix(self.theta, self.phi)


@dataclass(frozen=True)
class CocycleSpec:
    alpha: RotationSpec
    levels: tuple
    a_top: TorusAngle
    epsilon: float = 0.05
    top_mode: str = "zero"
    top_magnitude: float = 0.0
    top_k: int = 0
    tau_bound: float = 1.0

    @property
    def precision_bits(self) -> int:
        return self.alpha.precision_bits

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def ks(self) -> tuple:
        return tuple(lv.k for lv in self.levels)

    # -- serialization

    def to_dict(self) -> dict:
        return {
            "format": "cocyclelab.spec/1",
            "alpha": self.alpha.text(),
            "precision_bits": self.precision_bits,
            "epsilon": self.epsilon,
            "tau_bound": self.tau_bound,
            "a_top": str(self.a_top.numerator),
            "top": {"mode": self.top_mode, "magnitude": self.top_magnitude, "k": self.top_k},
            "levels": [
                {
                    "k": lv.k,
                    "theta": lv.theta,
                    "phi": lv.phi,
                    "a": str(lv.a.numerator),
                    "fhat": [lv.fhat.real, lv.fhat.imag],
                    "n": lv.n,
                    "tau_adjust": lv.tau_adjust,
                    "orientation": lv.orientation,
                }
                for lv in self.levels
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CocycleSpec":
        bits = int(d["precision_bits"])
        alpha = RotationSpec.parse(d["alpha"], bits)
        levels = tuple(
            NormalFormLevel(
                k=int(lv["k"]),
                theta=float(lv["theta"]),
                phi=float(lv["phi"]),
                a=TorusAngle(int(lv["a"]), bits),
                fhat=complex(*lv["fhat"]),
                n=int(lv["n"]),
                tau_adjust=int(lv["tau_adjust"]),
                orientation=int(lv["orientation"]),
            )
            for lv in d["levels"]
        )
        top = d["top"]
        return cls(
            alpha=alpha,
            levels=levels,
            a_top=TorusAngle(int(d["a_top"]), bits),
            epsilon=float(d["epsilon"]),
            top_mode=top["mode"],
            top_magnitude=float(top["magnitude"]),
            top_k=int(top["k"]),
            tau_bound=float(d["tau_bound"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "CocycleSpec":
        return cls.from_dict(json.loads(text))


# --- planning ---------------------------------------------------------------------


def _schedule(params: PlanParams) -> list[int]:
    N = params.depth
    if params.ks is not None:
        ks = [int(k) for k in params.ks[:N]]
        if len(ks) < N:
            raise ValueError("explicit schedule shorter than depth")
        return ks
    if params.cf_positions is not None:
        positions = list(params.cf_positions[:N])
    else:
        positions = [params.first_position * 2 ** i for i in range(N)]
    if len(positions) < N:
        raise ValueError("convergent positions shorter than depth")
    if not positions:
        return []
    convs = cf_convergents(params.alpha, max(positions))
    if len(convs) < max(positions):
        raise ValueError("alpha has too few convergents for the requested schedule")
    return [convs[m - 1][1] for m in positions]


def _validate_schedule(ks: list[int], growth) -> None:
    for i in range(1, len(ks)):
        s = 2.0 if growth is None else float(growth[i - 1])
        if s < 2:
            raise ValueError("growth exponents must be at least 2")
        if ks[i] <= ks[i - 1] or ks[i] <= ks[i - 1] ** s:
            raise ValueError(f"resonance k_{i + 1} = {ks[i]} violates k_(i+1) > k_i^{s:g}")
    if ks and ks[0] < 1:
        raise ValueError("resonances must be positive")


def landmark_margin(k: int, n: int, alpha: RotationSpec) -> float:
    """dist(k * n * alpha, Z/2), the margin required to stay >= epsilon."""
    return dist_mod(angle_times_int(k * n, alpha), "Z/2")


def _choose_iterate(level: int, k: int, k_prev: int, alpha, epsilon, tau_bound) -> tuple[int, int]:
    base = k - k_prev
    if landmark_margin(k, base, alpha) >= epsilon:
        return base, 0
    for tau in range(1, max(0, math.ceil(tau_bound) - 1) + 1):
        n = k ** tau * base
        if landmark_margin(k, n, alpha) >= epsilon:
            return n, tau
    raise NoValidTau(level)


def _search_top_offset(ks, ns, alpha, epsilon) -> float:
    """Smallest offset j * 2^-20 with dist(n_l a_top, Z/2) >= epsilon at every level."""
    P = alpha.precision_bits
    base = angle_times_int(ks[-1], alpha)
    for j in range(1, 1 << (TOP_SEARCH_BITS - 1)):
        a_top = base + TorusAngle(j << (P - TOP_SEARCH_BITS), P)
        if all(dist_mod(a_top.times(n), "Z/2") >= epsilon for n in ns):
            return j / (1 << TOP_SEARCH_BITS)
    raise NoValidTau(len(ks), "no admissible top offset found")


def plan_levels(params: PlanParams) -> CocycleSpec:
    alpha = params.alpha
    N = params.depth
    est = diophantine_scan(alpha, params.scan_K)
    thetas = list(params.theta)
    phis = list(params.phi) if params.phi is not None else [0.0] * N
    if len(thetas) < N or len(phis) < N:
        raise ValueError("theta and phi need at least `depth` entries")
    if params.top_mode not in ("zero", "resonant"):
        raise ValueError(f"unknown top_mode {params.top_mode!r}")
    ks = _schedule(params)
    _validate_schedule(ks, params.growth)
    P = alpha.precision_bits

    ns, taus = [], []
    k_prev = 0
    for i, k in enumerate(ks, start=1):
        n, tau = _choose_iterate(i, k, k_prev, alpha, params.epsilon, est.tau)
        ns.append(n)
        taus.append(tau)
        k_prev = k

    if N == 0:
        off = params.top_offset if params.top_offset is not None else 0.0
        a_top = TorusAngle.from_float(off % 1.0, P)
    else:
        off = params.top_offset
        if off is None:
            off = _search_top_offset(ks, ns, alpha, params.epsilon)
        a_top = angle_times_int(ks[-1], alpha) + TorusAngle.from_float(off % 1.0, P)

    levels = [None] * N
    a_next = a_top
    for idx in range(N - 1, -1, -1):
        k = ks[idx]
        theta, phi = float(thetas[idx]), float(phis[idx]) % 1.0
        k_alpha = angle_times_int(k, alpha)
        b = (a_next - k_alpha).signed()
        sigma = -1 if b < 0 else 1
        r = abs(b)
        if params.couple_fhat_to_next_iterate and idx < N - 1 and r > 0:
            theta = math.asin(min(1.0, 1.0 / (ns[idx + 1] * r)))
        offset = sigma * r * math.cos(theta)
        a_i = k_alpha + TorusAngle.from_float(offset % 1.0, P)
        fhat = r * math.sin(theta) * complex(math.cos(TWO_PI * phi), math.sin(TWO_PI * phi))
        levels[idx] = NormalFormLevel(k, theta, phi, a_i, fhat, ns[idx], taus[idx], sigma)
        a_next = a_i

    top_k = params.top_k if params.top_k is not None else (ks[-1] ** 2 if ks else 1)
    return CocycleSpec(
        alpha=alpha,
        levels=tuple(levels),
        a_top=a_top,
        epsilon=params.epsilon,
        top_mode=params.top_mode,
        top_magnitude=params.top_magnitude if params.top_mode == "resonant" else 0.0,
        top_k=top_k if params.top_mode == "resonant" else 0,
        tau_bound=est.tau,
    )


def reconstruct_theta(level: NormalFormLevel, alpha: RotationSpec) -> float:
    """theta from (a, fhat, k alpha): tan(theta) = sigma |fhat| / (a - k alpha)."""
    delta = (level.a - angle_times_int(level.k, alpha)).signed()
    return math.atan2(abs(level.fhat), level.orientation * delta)


# --- evaluation -------------------------------------------------------------------


def _conj_arrays(level: NormalFormLevel, frac2k: np.ndarray):
    c = math.cos(level.theta / 2.0)
    s = math.sin(level.theta / 2.0)
    w = s * np.exp(1j * TWO_PI * (level.phi + frac2k))
    return np.full(frac2k.shape, c, dtype=complex), w


class Cocycle:
    """The assembled map x -> A(x) of a CocycleSpec.

    Immutable; safe for concurrent use. Batch methods take a point set
    (GridPoints, OrbitPoints, ExplicitPoints) and return (z, w) arrays.
    """

    def __init__(self, spec: CocycleSpec):
        self.spec = spec
        self.alpha = spec.alpha
        self.alpha_angle = angle_times_int(1, spec.alpha)
        self._d = [lv.d() for lv in spec.levels]

    @property
    def depth(self) -> int:
        return self.spec.depth

    @property
    def has_fast_path(self) -> bool:
        return self.spec.top_mode == "zero" or self.spec.top_magnitude == 0.0

    # -- batch pieces

    def conjugator_arrays(self, i: int, pts):
        """G_i on a point set, i in 1..N."""
        lv = self.spec.levels[i - 1]
        return _conj_arrays(lv, pts.frac(2 * lv.k))

    def tower_arrays(self, lo: int, hi: int, pts):
        """Ordered product G_hi ... G_lo (identity when lo > hi)."""
        n = len(pts)
        z = np.ones(n, dtype=complex)
        w = np.zeros(n, dtype=complex)
        for i in range(lo, hi + 1):
            gz, gw = self.conjugator_arrays(i, pts)
            z, w = alg.compose_arrays(gz, gw, z, w)
        return z, w

    def top_arrays(self, pts):
        n = len(pts)
        e = complex(math.cos(TWO_PI * self.spec.a_top.to_float()), math.sin(TWO_PI * self.spec.a_top.to_float()))
        z = np.full(n, e, dtype=complex)
        w = np.zeros(n, dtype=complex)
        if self.spec.top_mode == "resonant" and self.spec.top_magnitude:
            f = TWO_PI * self.spec.top_magnitude
            mz, mw = alg.exp_arrays(np.zeros(n), 1j * f * np.exp(1j * TWO_PI * pts.frac(2 * self.spec.top_k)))
            z, w = alg.compose_arrays(z, w, mz, mw)
        return z, w

    def level_map_arrays(self, j: int, pts, pts_next=None):
        """M_j = (G_N...G_{j+1})^*(x+alpha) top(x) (G_N...G_{j+1})(x); M_0 = A."""
        if pts_next is None:
            pts_next = _shift_one(pts, self)
        N = self.depth
        kz1, kw1 = self.tower_arrays(j + 1, N, pts_next)
        tz, tw = self.top_arrays(pts)
        kz0, kw0 = self.tower_arrays(j + 1, N, pts)
        iz, iw = alg.inverse_arrays(kz1, kw1)
        z, w = alg.compose_arrays(iz, iw, tz, tw)
        return alg.compose_arrays(z, w, kz0, kw0)

    def arrays(self, pts, pts_next=None):
        return self.level_map_arrays(0, pts, pts_next)

    # -- scalar evaluation

    def h(self, depth: int, x: TorusAngle) -> SU2:
        return h_eval(self.spec, depth, x)

    def at(self, x: TorusAngle) -> SU2:
        z, w = self.arrays(ExplicitPoints([x]))
        return SU2(z[0], w[0])

    def level_map_at(self, j: int, x: TorusAngle) -> SU2:
        z, w = self.level_map_arrays(j, ExplicitPoints([x]))
        return SU2(z[0], w[0])

    def top_power(self, n: int) -> SU2:
        if not self.has_fast_path:
            raise FastPathUnavailable("top level carries a resonant mode; no closed-form power")
        return alg.diag(self.spec.a_top.times(n).to_float())

    def level_power(self, j: int, x: TorusAngle, n: int) -> SU2:
        """M_j^{(n)}(x) through the closed form; O(N) cost for any n."""
        K0 = _tower_scalar(self.spec, j + 1, self.depth, x)
        K1 = _tower_scalar(self.spec, j + 1, self.depth, x + angle_times_int(n, self.alpha))
        return alg.compose(alg.compose(K1.inverse(), self.top_power(n)), K0)


def _shift_one(pts, cocycle: "Cocycle"):
    if isinstance(pts, OrbitPoints):
        return pts.shifted(1)
    return pts.shifted(cocycle.alpha_angle)


def _tower_scalar(spec: CocycleSpec, lo: int, hi: int, x: TorusAngle) -> SU2:
    u = SU2.identity()
    for i in range(lo, hi + 1):
        lv = spec.levels[i - 1]
        u = alg.compose(alg.conjugator_eval(lv.k, lv.theta, lv.phi, x), u)
    return u


def h_eval(spec: CocycleSpec, depth: int, x: TorusAngle) -> SU2:
    """H_i(x) = G_i(x) ... G_1(x)."""
    if depth > spec.depth:
        raise ValueError("depth exceeds the number of levels")
    return _tower_scalar(spec, 1, depth, x)


def assemble(spec: CocycleSpec) -> Cocycle:
    return Cocycle(spec)


# --- verification -----------------------------------------------------------------


@dataclass
class LevelReport:
    level: int
    k: int
    grid_size: int
    conjugacy_residual: float
    forward_residual: float
    sup_norm: float
    fourier_l1: float
    dominant_frequency: int
    dominant_magnitude: float
    expected_frequency: int
    frequency_ok: bool
    mode_removed_residual: float
    measured_fhat: complex
    measured_offset: float
    plan_mismatch: float

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["measured_fhat"] = [self.measured_fhat.real, self.measured_fhat.imag]
        return d


def _grid_dist(z1, w1, z2, w2) -> float:
    return float(np.max(np.sqrt(2.0 * (np.abs(z1 - z2) ** 2 + np.abs(w1 - w2) ** 2))))


def verify_level(cocycle: Cocycle, i: int, grid_size: int = 4096) -> LevelReport:
    """Check the level-i conjugacy identity and measure the Fourier structure of F_i."""
    spec = cocycle.spec
    if not 1 <= i <= spec.depth:
        raise ValueError(f"level {i} outside 1..{spec.depth}")
    lv = spec.levels[i - 1]
    bits = spec.precision_bits
    pts = GridPoints(grid_size, bits=bits)
    nxt = pts.shifted(cocycle.alpha_angle)

    m_prev = cocycle.level_map_arrays(i - 1, pts, nxt)
    m_here = cocycle.level_map_arrays(i, pts, nxt)
    gz0, gw0 = cocycle.conjugator_arrays(i, pts)
    gz1, gw1 = cocycle.conjugator_arrays(i, nxt)
    lz, lw = alg.compose_arrays(gz1, gw1, *m_prev)
    lz, lw = alg.compose_arrays(lz, lw, *alg.inverse_arrays(gz0, gw0))
    conj_res = _grid_dist(lz, lw, *m_here)

    # independent route: forward re-conjugation of the base map by H_{i-1}
    az, aw = cocycle.arrays(pts, nxt)
    hz0, hw0 = cocycle.tower_arrays(1, i - 1, pts)
    hz1, hw1 = cocycle.tower_arrays(1, i - 1, nxt)
    fz, fw = alg.compose_arrays(hz1, hw1, az, aw)
    fz, fw = alg.compose_arrays(fz, fw, *alg.inverse_arrays(hz0, hw0))
    fwd_res = _grid_dist(fz, fw, *m_prev)

    # resonant frame: E(-k alpha) M_{i-1}(x) = exp(Y(x))
    k_alpha = angle_times_int(lv.k, spec.alpha)
    ez = complex(math.cos(-TWO_PI * k_alpha.to_float()), math.sin(-TWO_PI * k_alpha.to_float()))
    yz, yw = alg.compose_arrays(np.full(grid_size, ez), np.zeros(grid_size, dtype=complex), *m_prev)
    t, w = alg.log_arrays(yz, yw)
    demod = w * np.exp(-1j * TWO_PI * pts.frac(2 * lv.k))
    coeffs = np.fft.fft(demod) / grid_size
    t_mean = float(np.mean(t))
    mags = np.abs(coeffs)
    idx = int(np.argmax(mags))
    signed_idx = idx if idx <= grid_size // 2 else idx - grid_size
    w0 = coeffs[0]
    removed = np.sqrt((t - t_mean) ** 2 + np.abs(demod - w0) ** 2)
    sup = float(np.max(np.sqrt((t - t_mean) ** 2 + np.abs(w) ** 2)))
    l1 = float(np.sum(mags) + np.sum(np.abs(np.fft.fft(t - t_mean) / grid_size)))

    measured_fhat = w0 / (TWO_PI * 1j * lv.orientation)
    measured_offset = t_mean / TWO_PI
    planned_offset = (lv.a - k_alpha).signed()
    mismatch = max(abs(measured_fhat - lv.fhat), abs(measured_offset - planned_offset))
    return LevelReport(
        level=i,
        k=lv.k,
        grid_size=grid_size,
        conjugacy_residual=conj_res,
        forward_residual=fwd_res,
        sup_norm=sup,
        fourier_l1=l1,
        dominant_frequency=2 * lv.k + signed_idx,
        dominant_magnitude=float(mags[idx]) / TWO_PI,
        expected_frequency=2 * lv.k,
        frequency_ok=signed_idx == 0,
        mode_removed_residual=float(np.max(removed)),
        measured_fhat=complex(measured_fhat),
        measured_offset=measured_offset,
        plan_mismatch=float(mismatch),
    )


# --- forward KAM step ---------------------------------------------------------------


@dataclass
class KamStepResult:
    a_new: SU2
    t_new: np.ndarray
    w_new: np.ndarray
    k: int
    theta: float
    phi: float
    a_in: float
    fhat: complex
    norm_in: float
    norm_out: float


def _sup_tangent(t, w) -> float:
    return float(np.max(np.sqrt(np.asarray(t) ** 2 + np.abs(w) ** 2)))


def kam_step(A: SU2, t: np.ndarray, w: np.ndarray, alpha: RotationSpec, dominance: float = 10.0) -> KamStepResult:
    """One reduction step for the cocycle x -> A exp(F(x)) sampled on a uniform grid.

    F = {t, w} is given on x_j = j/G. The step finds the dominant off-diagonal
    mode 2k, moves to the resonant frame with B_k, rotates the mean by
    D(theta, phi) with theta, phi read off the tan / phase formulas, removes
    the remaining non-resonant modes by solving the linearized cohomological
    equation, and re-conjugates numerically. Returns the new constant, the
    residual F' on the same grid and the recovered level data.
    """
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=complex)
    G = t.size
    if abs(A.w) > 1e-12:
        raise ValueError("kam_step expects a diagonal constant")
    a = (math.atan2(A.z.imag, A.z.real) / TWO_PI) % 1.0
    norm_in = _sup_tangent(t, w)
    if norm_in == 0.0:
        return KamStepResult(A, t.copy(), w.copy(), 0, 0.0, 0.0, a, 0j, 0.0, 0.0)
    if norm_in > 0.1:
        raise ValueError("kam_step expects sup norm of F at most 0.1")

    bits = alpha.precision_bits
    pts = GridPoints(G, bits=bits)
    alpha_angle = angle_times_int(1, alpha)
    nxt = pts.shifted(alpha_angle)
    freqs = np.fft.fftfreq(G, d=1.0 / G).astype(int)

    cw = np.fft.fft(w) / G
    order = np.argsort(-np.abs(cw), kind="stable")
    top, second = np.abs(cw[order[0]]), np.abs(cw[order[1]])
    m = int(freqs[order[0]])
    if second > 0 and top / second < dominance:
        raise NoDominantMode(f"mode ratio {top / second:.3g} below {dominance:g}")
    if m % 2:
        raise NoDominantMode(f"dominant off-diagonal frequency {m} is odd; no loop B_k produces it")
    k = m // 2

    # resonant frame: P(x) = B(x+alpha)^* A e^{F(x)} B(x)
    ez, ew = alg.exp_arrays(t, w)
    ez, ew = alg.compose_arrays(np.full(G, A.z), np.full(G, A.w), ez, ew)
    b0 = np.exp(1j * TWO_PI * pts.frac(k))
    b1 = np.exp(-1j * TWO_PI * nxt.frac(k))
    pz, pw = alg.compose_arrays(b1, np.zeros(G, dtype=complex), ez, ew)
    pz, pw = alg.compose_arrays(pz, pw, b0, np.zeros(G, dtype=complex))

    yt, yw = alg.log_arrays(pz, pw)
    tau_mean, zeta = float(np.mean(yt)), complex(np.mean(yw))
    theta = math.atan2(abs(zeta), tau_mean)
    phi = (math.atan2((zeta / 1j).imag, (zeta / 1j).real) / TWO_PI) % 1.0 if zeta != 0 else 0.0
    D = alg.d_matrix(theta, phi)
    fhat = zeta / (TWO_PI * 1j)

    # rotate the mean onto the diagonal
    qz, qw = alg.compose_arrays(np.full(G, D.z), np.full(G, D.w), pz, pw)
    qz, qw = alg.compose_arrays(qz, qw, *alg.inverse_arrays(np.full(G, D.z), np.full(G, D.w)))
    qt, _ = alg.log_arrays(qz, qw)
    b2 = float(np.mean(qt)) / TWO_PI
    sz, sw = alg.compose_arrays(np.full(G, np.exp(-1j * TWO_PI * b2)), np.zeros(G, dtype=complex), qz, qw)
    ft, fw = alg.log_arrays(sz, sw)

    # linearized cohomological equation for the non-resonant modes
    ea = np.exp(1j * TWO_PI * ((freqs * alpha_angle.to_float()) % 1.0))
    ct = np.fft.fft(ft) / G
    cfw = np.fft.fft(fw) / G
    div_t = ea - 1.0
    div_w = ea * np.exp(-2j * TWO_PI * b2) - 1.0
    yt_hat = np.zeros(G, dtype=complex)
    yw_hat = np.zeros(G, dtype=complex)
    nz = freqs != 0
    yt_hat[nz] = -ct[nz] / div_t[nz]
    yw_hat[nz] = -cfw[nz] / div_w[nz]
    y_t0 = np.real(np.fft.ifft(yt_hat) * G)
    y_w0 = np.fft.ifft(yw_hat) * G
    y_t1 = np.real(np.fft.ifft(yt_hat * ea) * G)
    y_w1 = np.fft.ifft(yw_hat * ea) * G

    e1z, e1w = alg.exp_arrays(y_t1, y_w1)
    e0z, e0w = alg.exp_arrays(-y_t0, -y_w0)
    rz, rw = alg.compose_arrays(e1z, e1w, qz, qw)
    rz, rw = alg.compose_arrays(rz, rw, e0z, e0w)
    rt, _ = alg.log_arrays(rz, rw)
    b3 = float(np.mean(rt)) / TWO_PI
    uz, uw = alg.compose_arrays(np.full(G, np.exp(-1j * TWO_PI * b3)), np.zeros(G, dtype=complex), rz, rw)
    t_new, w_res = alg.log_arrays(uz, uw)
    # back to the original frame: off-diagonal picks up e(2 k x)
    w_new = w_res * np.exp(1j * TWO_PI * pts.frac(2 * k))
    a_new = alg.diag((k * alpha_angle.to_float() + b3) % 1.0)
    if k:
        a_new = alg.diag((angle_times_int(k, alpha).to_float() + b3) % 1.0)
    return KamStepResult(
        a_new=a_new,
        t_new=np.asarray(t_new),
        w_new=w_new,
        k=k,
        theta=theta,
        phi=phi,
        a_in=a,
        fhat=fhat,
        norm_in=norm_in,
        norm_out=_sup_tangent(t_new, w_new),
    )


def normal_form_tangent(cocycle: Cocycle, i: int, grid_size: int):
    """(A_i, t, w): level-i map written as A_i exp(F_i(x)) on a grid, A_i = E(a_i)."""
    lv = cocycle.spec.levels[i - 1]
    pts = GridPoints(grid_size, bits=cocycle.spec.precision_bits)
    mz, mw = cocycle.level_map_arrays(i - 1, pts)
    a_i = alg.diag(lv.a.to_float())
    z, w = alg.compose_arrays(np.full(grid_size, a_i.z.conjugate()), np.zeros(grid_size, dtype=complex), mz, mw)
    t, w = alg.log_arrays(z, w)
    return a_i, t, w


def with_level(spec: CocycleSpec, i: int, **changes) -> CocycleSpec:
    levels = list(spec.levels)
    levels[i - 1] = replace(levels[i - 1], **changes)
    return replace(spec, levels=tuple(levels))


def constant_spec(alpha: RotationSpec, a: TorusAngle, epsilon: float = 0.05) -> CocycleSpec:
    """The depth-0 spec of the constant diagonal cocycle x -> {e^{2 pi i a}, 0}."""
    return CocycleSpec(alpha=alpha, levels=(), a_top=a, epsilon=epsilon)
