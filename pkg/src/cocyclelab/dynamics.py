"""Orbits, cocycle products and Birkhoff averages of the skew product.

The skew product is (x, S) -> (x + alpha, A(x) S). Base points are always
advanced in fixed point (x_n = x_0 + n*alpha exactly); the fiber is
advanced in chunks: the cocycle is sampled on a block of orbit points, the
block's prefix products are formed by a log-depth scan, and a carry matrix
links consecutive blocks (renormalized once per block).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import algebra as alg
from .algebra import SU2
from .errors import FastPathUnavailable
from .normal_form import Cocycle
from .points import OrbitPoints
from .torus import TorusAngle, angle_times_int

SCAN_CHUNK = alg.RENORM_EVERY
EVAL_BLOCK = 64 * SCAN_CHUNK
DIRECT_THRESHOLD = 1 << 16


# --- observables --------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """A bounded test function on T x SU(2).

    kind is one of ``abs11sq`` (|S_11|^2), ``trace_real`` (Re tr S / 2,
    normalized into [-1, 1]), ``x_harmonic`` (e^{2 pi i m x}) and ``product``
    (x_harmonic(m) times the fiber observable ``fiber``). ``one`` is the
    constant 1.
    """

    kind: str
    m: int = 0
    fiber: str = "abs11sq"

    KINDS = ("one", "abs11sq", "trace_real", "x_harmonic", "product")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.kind == "product" and self.fiber not in ("abs11sq", "trace_real"):
            raise ValueError("product observables take a fiber kind abs11sq or trace_real")

    @property
    def is_real(self) -> bool:
        return self.kind in ("one", "abs11sq", "trace_real")

    @classmethod
    def parse(cls, text: str) -> "Observable":
        """``abs11sq``, ``trace_real``, ``one``, ``x_harmonic:3``, ``product:3:trace_real``."""
        parts = text.split(":")
        if parts[0] == "x_harmonic" and len(parts) == 2:
            return cls("x_harmonic", int(parts[1]))
        if parts[0] == "product" and len(parts) in (2, 3):
            return cls("product", int(parts[1]), parts[2] if len(parts) == 3 else "abs11sq")
        if len(parts) == 1:
            return cls(parts[0])
        raise ValueError(f"cannot parse observable {text!r}")

    def text(self) -> str:
        if self.kind == "x_harmonic":
            return f"x_harmonic:{self.m}"
        if self.kind == "product":
            return f"product:{self.m}:{self.fiber}"
        return self.kind

    def _fiber(self, kind: str, z, w):
        if kind == "abs11sq":
            return np.abs(z) ** 2
        return np.real(z)

    def evaluate(self, frac_mx, z, w):
        """Values at points with base phase frac(m x) (used only by harmonics) and fiber (z, w)."""
        if self.kind == "one":
            return np.ones(np.shape(z))
        if self.kind in ("abs11sq", "trace_real"):
            return self._fiber(self.kind, z, w)
        harmonic = np.exp(2j * math.pi * frac_mx)
        if self.kind == "x_harmonic":
            return harmonic
        return harmonic * self._fiber(self.fiber, z, w)

    def at(self, x: TorusAngle, s: SU2):
        frac = np.array([x.times(self.m).to_float()])
        v = self.evaluate(frac, np.array([s.z]), np.array([s.w]))[0]
        return float(v.real) if self.is_real else complex(v)


# --- chunked prefix products ------------------------------------------------------


def _scan_rows(z, w):
    """Inclusive prefix products along axis 1: P[j] = M[j] ... M[0]."""
    z = z.copy()
    w = w.copy()
    width = z.shape[1]
    d = 1
    while d < width:
        nz, nw = alg.compose_arrays(z[:, d:], w[:, d:], z[:, :-d], w[:, :-d])
        z[:, d:] = nz
        w[:, d:] = nw
        d *= 2
    return z, w


def _prefix_products(cocycle: Cocycle, x0: TorusAngle, n: int, carry: SU2):
    """Yield (offset, z, w) with (z[j], w[j]) = A^{(offset+j+1)}(x0) * carry."""
    cz, cw = carry.z, carry.w
    done = 0
    while done < n:
        count = min(EVAL_BLOCK, n - done)
        pts = OrbitPoints(x0, cocycle.alpha, done, count)
        az, aw = cocycle.arrays(pts)
        rows = -(-count // SCAN_CHUNK)
        pad = rows * SCAN_CHUNK - count
        if pad:
            az = np.concatenate([az, np.ones(pad, dtype=complex)])
            aw = np.concatenate([aw, np.zeros(pad, dtype=complex)])
        pz, pw = _scan_rows(az.reshape(rows, SCAN_CHUNK), aw.reshape(rows, SCAN_CHUNK))
        outz = np.empty_like(pz)
        outw = np.empty_like(pw)
        for r in range(rows):
            oz, ow = alg.compose_arrays(pz[r], pw[r], cz, cw)
            outz[r], outw[r] = oz, ow
            # renormalize the carry once per chunk
            nrm = math.sqrt(abs(oz[-1]) ** 2 + abs(ow[-1]) ** 2)
            cz, cw = complex(oz[-1]) / nrm, complex(ow[-1]) / nrm
        yield done, outz.reshape(-1)[:count], outw.reshape(-1)[:count]
        done += count


# --- orbits -----------------------------------------------------------------------


@dataclass
class OrbitSample:
    points: list
    stride: int
    start: tuple

    def steps(self) -> list[int]:
        return [j * self.stride for j in range(len(self.points))]

    def max_unitarity_defect(self) -> float:
        return max(s.norm_defect() for _, s in self.points)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["step", "x", "re_z", "im_z", "re_w", "im_w"])
            for step, (x, s) in zip(self.steps(), self.points):
                out.writerow([step, repr(x.to_float()), repr(s.z.real), repr(s.z.imag), repr(s.w.real), repr(s.w.imag)])


def iterate_orbit(cocycle: Cocycle, x0: TorusAngle, S0: SU2, n: int, stride: int = 1) -> OrbitSample:
    """Every stride-th point (x_j, S_j), j = 0..n, of the orbit of (x0, S0)."""
    if n < 0 or stride < 1:
        raise ValueError("need n >= 0 and stride >= 1")
    points = [(x0, S0)]
    alpha = cocycle.alpha
    for offset, z, w in _prefix_products(cocycle, x0, n, S0):
        # steps offset+1 .. offset+len(z); keep those divisible by stride
        first = (-(offset + 1)) % stride
        for j in range(first, len(z), stride):
            step = offset + j + 1
            points.append((x0 + angle_times_int(step, alpha), SU2(z[j], w[j])))
    return OrbitSample(points=points, stride=stride, start=(x0, S0))


def _direct_product(cocycle: Cocycle, x: TorusAngle, n: int) -> SU2:
    if n == 0:
        return SU2.identity()
    z = w = None
    acc = SU2.identity()
    for offset in range(0, n, EVAL_BLOCK):
        count = min(EVAL_BLOCK, n - offset)
        z, w = cocycle.arrays(OrbitPoints(x, cocycle.alpha, offset, count))
        # pairwise tree reduction: later factors on the left
        while len(z) > 1:
            if len(z) % 2:
                z = np.append(z, 1.0 + 0j)
                w = np.append(w, 0j)
            z, w = alg.compose_arrays(z[1::2], w[1::2], z[0::2], w[0::2])
        acc = alg.compose(SU2(z[0], w[0]).renormalized(), acc)
    return acc


def product_at(cocycle: Cocycle, x: TorusAngle, n: int, method: str = "auto", direct_threshold: int = DIRECT_THRESHOLD) -> SU2:
    """A^{(n)}(x) = A(x + (n-1) alpha) ... A(x).

    ``method`` is ``direct`` (sample and multiply), ``fast`` (closed form
    through the normal form tower) or ``auto`` (direct up to
    ``direct_threshold``, fast above).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if method not in ("auto", "direct", "fast"):
        raise ValueError(f"unknown method {method!r}")
    use_fast = method == "fast" or (method == "auto" and n > direct_threshold)
    if use_fast:
        if not cocycle.has_fast_path:
            raise FastPathUnavailable(f"n = {n} exceeds the direct threshold and the top level is not constant")
        return cocycle.level_power(0, x, n)
    return _direct_product(cocycle, x, n)


# --- Birkhoff averages --------------------------------------------------------------


def default_checkpoints(n: int, landmarks=()) -> list[int]:
    pts = {1 << e for e in range(n.bit_length()) if (1 << e) <= n}
    pts.update(m for m in landmarks if 1 <= m <= n)
    pts.add(n)
    return sorted(pts)


@dataclass
class BirkhoffSeries:
    observable: str
    checkpoints: list
    averages: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            if all(isinstance(v, float) for v in self.averages):
                out.writerow(["step", "value"])
                for m, v in zip(self.checkpoints, self.averages):
                    out.writerow([m, repr(v)])
            else:
                out.writerow(["step", "value_re", "value_im"])
                for m, v in zip(self.checkpoints, self.averages):
                    v = complex(v)
                    out.writerow([m, repr(v.real), repr(v.imag)])


def _fsum_complex(values) -> complex:
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return complex(math.fsum(values.real.tolist()), math.fsum(values.imag.tolist()))
    return math.fsum(values.tolist())


def birkhoff(cocycle: Cocycle, obs: Observable, x0: TorusAngle, S0: SU2, n: int, checkpoints=None) -> BirkhoffSeries:
    """Running averages (1/m) sum_{j<m} obs(x_j, S_j) at each checkpoint m <= n.

    Single pass over the orbit. Each stretch between checkpoints is summed
    with math.fsum, and the stretch sums are combined with fsum again.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if checkpoints is None:
        checkpoints = default_checkpoints(n, [lv.n for lv in cocycle.spec.levels])
    cps = sorted({int(m) for m in checkpoints if 1 <= int(m) <= n})
    partial_sums: list = []
    averages: list = []
    cp_iter = iter(cps)
    target = next(cp_iter, None)

    # orbit index j uses S_j; S_0 = S0, S_j = A^{(j)}(x0) S0 for j >= 1
    first = obs.evaluate(np.array([x0.times(obs.m).to_float()]), np.array([S0.z]), np.array([S0.w]))
    pending = [first]
    consumed = 1

    def emit():
        partial_sums.append(_fsum_complex(np.concatenate(pending)))
        pending.clear()
        total = _fsum_complex(np.asarray(partial_sums))
        return total

    if target == 1:
        averages.append(_as_scalar(emit(), obs))
        target = next(cp_iter, None)

    for offset, z, w in _prefix_products(cocycle, x0, n - 1, S0):
        if target is None:
            break
        # these are S_j for j = offset+1 .. offset+len(z)
        frac = OrbitPoints(x0, cocycle.alpha, offset + 1, len(z)).frac(obs.m) if obs.m else np.zeros(len(z))
        vals = obs.evaluate(frac, z, w)
        pos = 0
        while target is not None and target <= consumed + len(vals) - pos:
            take = target - consumed
            pending.append(vals[pos:pos + take])
            pos += take
            consumed += take
            averages.append(_as_scalar(emit() / target, obs))
            target = next(cp_iter, None)
        if pos < len(vals):
            pending.append(vals[pos:])
            consumed += len(vals) - pos
    return BirkhoffSeries(observable=obs.text(), checkpoints=cps, averages=averages)


def _as_scalar(v, obs: Observable):
    return float(np.real(v)) if obs.is_real else complex(v)
