"""Fixed-point arithmetic on T = R/Z and continued fractions of the base rotation.

Every mod-1 quantity (k*alpha, orbit base points, rotation numbers) lives in
a ``TorusAngle``: an integer numerator over 2**P. The rotation itself is
realized once at 2P bits so that k*alpha stays correct to the last of the P
stored bits for |k| up to 2**(P/2 - 32).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import cached_property
from typing import Iterator

from .errors import InsufficientPrecision, PrecisionOverflow, RationalAlpha

DEFAULT_PRECISION = 256


@dataclass(frozen=True, order=True)
class TorusAngle:
    numerator: int
    precision_bits: int = DEFAULT_PRECISION

    def __post_init__(self):
        mod = 1 << self.precision_bits
        if not 0 <= self.numerator < mod:
            object.__setattr__(self, "numerator", self.numerator % mod)

    @classmethod
    def zero(cls, bits: int = DEFAULT_PRECISION) -> "TorusAngle":
        return cls(0, bits)

    @classmethod
    def from_fraction(cls, value, bits: int = DEFAULT_PRECISION) -> "TorusAngle":
        """Floor of value * 2**bits, reduced mod 1. Accepts Fraction, int or str."""
        f = Fraction(value)
        return cls((f.numerator << bits) // f.denominator, bits)

    @classmethod
    def from_float(cls, value: float, bits: int = DEFAULT_PRECISION) -> "TorusAngle":
        return cls.from_fraction(Fraction(value), bits)

    @property
    def modulus(self) -> int:
        return 1 << self.precision_bits

    def _check(self, other: "TorusAngle"):
        if other.precision_bits != self.precision_bits:
            raise ValueError("precision mismatch between torus angles")

    def __add__(self, other: "TorusAngle") -> "TorusAngle":
        self._check(other)
        return TorusAngle((self.numerator + other.numerator) % self.modulus, self.precision_bits)

    def __sub__(self, other: "TorusAngle") -> "TorusAngle":
        self._check(other)
        return TorusAngle((self.numerator - other.numerator) % self.modulus, self.precision_bits)

    def __neg__(self) -> "TorusAngle":
        return TorusAngle((-self.numerator) % self.modulus, self.precision_bits)

    def times(self, k: int) -> "TorusAngle":
        return TorusAngle((k * self.numerator) % self.modulus, self.precision_bits)

    def to_float(self) -> float:
        return self.numerator / self.modulus

    def to_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.modulus)

    def signed(self) -> float:
        """Representative in [-1/2, 1/2)."""
        half = self.modulus >> 1
        n = self.numerator
        return (n - self.modulus) / self.modulus if n >= half else n / self.modulus

    def frac64(self) -> int:
        """Top 64 bits of the numerator, rounded to nearest (wraps at 1)."""
        shift = self.precision_bits - 64
        if shift <= 0:
            return (self.numerator << -shift) % (1 << 64)
        return ((self.numerator + (1 << (shift - 1))) >> shift) % (1 << 64)

    def dist(self, grid: str = "Z") -> float:
        return dist_mod(self, grid)


def dist_mod(t: TorusAngle, grid: str = "Z") -> float:
    """Distance to the nearest point of Z (grid "Z") or of Z/2 (grid "Z/2")."""
    if grid == "Z":
        period = t.modulus
    elif grid in ("Z/2", "Z2"):
        period = t.modulus >> 1
    else:
        raise ValueError(f"unknown grid {grid!r}")
    r = t.numerator % period
    return min(r, period - r) / t.modulus


def dist_int_fraction(x: Fraction) -> Fraction:
    r = x - math.floor(x)
    return min(r, 1 - r)


# --- rotation specs -------------------------------------------------------------

_QUAD_RE = re.compile(
    r"^\(?\s*([+-]?\d+)\s*([+-])\s*(\d*)\s*\*?\s*sqrt\(\s*(\d+)\s*\)\s*\)?\s*/\s*(\d+)$"
)
_CF_RE = re.compile(r"^\[\s*(\d+)\s*;(.*)\]$")


@dataclass(frozen=True)
class RotationSpec:
    """Base rotation alpha in (0, 1), known exactly.

    kind is one of "quadratic" (params (a, b, c, d) for (a + b sqrt c)/d),
    "cf" (params (a0, prefix, period); an empty period means a finite
    expansion), "rational" (params (p, q)) or "decimal" (params (text,)).
    """

    kind: str
    params: tuple
    precision_bits: int = DEFAULT_PRECISION

    def __post_init__(self):
        if self.precision_bits < 96:
            raise ValueError("precision_bits must be at least 96")
        if self.kind == "quadratic":
            a, b, c, d = self.params
            if c <= 0 or math.isqrt(c) ** 2 == c:
                raise ValueError("quadratic irrational needs a positive non-square discriminant")
            if b == 0 or d == 0:
                raise ValueError("degenerate quadratic irrational")
        elif self.kind == "cf":
            a0, prefix, period = self.params
            if any(x <= 0 for x in list(prefix) + list(period)):
                raise ValueError("partial quotients after a0 must be positive")
        elif self.kind == "rational":
            p, q = self.params
            if q <= 0:
                raise ValueError("denominator must be positive")
        elif self.kind != "decimal":
            raise ValueError(f"unknown rotation kind {self.kind!r}")
        lo, hi = self._bracket()
        if not (0 < lo and hi < 1):
            raise ValueError("alpha must lie strictly inside (0, 1)")

    # -- parsing / printing

    @classmethod
    def parse(cls, text: str, precision_bits: int = DEFAULT_PRECISION) -> "RotationSpec":
        text = text.strip().replace("−", "-")
        if text == "golden":
            return cls("quadratic", (-1, 1, 5, 2), precision_bits)
        kind, sep, body = text.partition(":")
        if not sep:
            raise ValueError(f"rotation text needs a kind prefix: {text!r}")
        body = body.strip().strip('"').replace(" ", "")
        if kind == "quadratic":
            m = _QUAD_RE.match(body)
            if not m:
                raise ValueError(f"cannot parse quadratic irrational {body!r}")
            a, sign, b, c, d = m.groups()
            bval = int(b) if b else 1
            if sign == "-":
                bval = -bval
            return cls("quadratic", (int(a), bval, int(c), int(d)), precision_bits)
        if kind == "cf":
            m = _CF_RE.match(body)
            if not m:
                raise ValueError(f"cannot parse continued fraction {body!r}")
            a0 = int(m.group(1))
            rest = m.group(2)
            period: list[int] = []
            if "(" in rest:
                head, _, tail = rest.partition("(")
                period = [int(x) for x in tail.rstrip(")").split(",") if x]
                rest = head
            items = [x for x in rest.split(",") if x]
            if items and items[-1] in ("...", "…"):
                items = items[:-1]
                if not items:
                    raise ValueError("'...' needs a preceding partial quotient to repeat")
                period = [int(items[-1])]
                items = items[:-1]
            prefix = [int(x) for x in items]
            prefix, period = _normalize_period(prefix, period)
            return cls("cf", (a0, tuple(prefix), tuple(period)), precision_bits)
        if kind == "rational":
            p, _, q = body.partition("/")
            f = Fraction(int(p), int(q or 1))
            return cls("rational", (f.numerator, f.denominator), precision_bits)
        if kind == "decimal":
            Decimal(body)
            return cls("decimal", (body,), precision_bits)
        raise ValueError(f"unknown rotation kind {kind!r}")

    def text(self) -> str:
        if self.kind == "quadratic":
            a, b, c, d = self.params
            coef = "" if abs(b) == 1 else f"{abs(b)}*"
            return f"quadratic:({a}{'+' if b > 0 else '-'}{coef}sqrt({c}))/{d}"
        if self.kind == "cf":
            a0, prefix, period = self.params
            parts = [str(x) for x in prefix]
            if period:
                parts.append("(" + ",".join(str(x) for x in period) + ")")
            return f"cf:[{a0};{','.join(parts)}]"
        if self.kind == "rational":
            return f"rational:{self.params[0]}/{self.params[1]}"
        return f"decimal:{self.params[0]}"

    def with_precision(self, bits: int) -> "RotationSpec":
        return RotationSpec(self.kind, self.params, bits)

    # -- exact structure

    @property
    def is_rational(self) -> bool:
        return self.kind in ("rational", "decimal") or (self.kind == "cf" and not self.params[2])

    def exact_fraction(self) -> Fraction:
        if self.kind == "rational":
            return Fraction(*self.params)
        if self.kind == "decimal":
            return Fraction(Decimal(self.params[0]))
        if self.kind == "cf" and not self.params[2]:
            p, q = 1, 0
            for a in reversed([self.params[0], *self.params[1]]):
                p, q = a * p + q, p
            return Fraction(p, q)
        raise ValueError("alpha is irrational")

    def partial_quotients(self) -> Iterator[int]:
        """Exact continued-fraction digits a0, a1, ... (finite iff alpha is rational)."""
        if self.kind == "cf":
            a0, prefix, period = self.params
            yield a0
            yield from prefix
            while period:
                yield from period
            return
        if self.is_rational:
            f = self.exact_fraction()
            p, q = f.numerator, f.denominator
            while q:
                a = p // q
                yield a
                p, q = q, p - a * q
            return
        # quadratic: x = (P + sqrt(D)) / Q with Q | D - P^2
        a, b, c, d = self.params
        s = 1 if b > 0 else -1
        P, D, Q = s * a, b * b * c, s * d
        P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
        r = math.isqrt(D)
        while True:
            if Q > 0:
                digit = (P + r) // Q
            else:
                digit = -((P + r) // (-Q)) - 1
            yield digit
            P = digit * Q - P
            Q = (D - P * P) // Q

    def _bracket(self) -> tuple[Fraction, Fraction]:
        if self.is_rational:
            f = self.exact_fraction()
            return f, f
        if self.kind == "quadratic":
            a, b, c, d = self.params
            sh = 1 << 64
            r = math.isqrt(b * b * c * sh * sh)
            lo = Fraction(a * sh + (r if b > 0 else -(r + 1)), d * sh)
            hi = Fraction(a * sh + (r + 1 if b > 0 else -r), d * sh)
            return (lo, hi) if lo < hi else (hi, lo)
        convs = []
        for p, q in _convergents(self.partial_quotients()):
            convs.append(Fraction(p, q))
            if len(convs) == 4:
                break
        return min(convs[-2:]), max(convs[-2:])

    # -- realization

    @property
    def fine_bits(self) -> int:
        return 2 * self.precision_bits

    @cached_property
    def fine(self) -> tuple[int, int]:
        """(numerator at 2P bits, error bound in units of 2**-2P)."""
        F = self.fine_bits
        if self.is_rational:
            f = self.exact_fraction()
            return (f.numerator << F) // f.denominator, 1
        if self.kind == "quadratic":
            a, b, c, d = self.params
            root = math.isqrt((b * b * c) << (2 * F))
            scaled = root if b > 0 else -(root + 1)
            num = (a << F) + scaled
            if d < 0:
                num, d = -num - 1, -d
            return num // d, 1
        target = 1 << (F // 2 + 2)
        for p, q in _convergents(self.partial_quotients()):
            if q >= target:
                return (p << F) // q, 2
        raise AssertionError("unreachable")

    def to_float(self) -> float:
        return self.fine[0] / (1 << self.fine_bits)

    def angle(self) -> TorusAngle:
        return angle_times_int(1, self)


def _normalize_period(prefix: list[int], period: list[int]) -> tuple[list[int], list[int]]:
    prefix = list(prefix)
    period = list(period)
    while period and prefix and prefix[-1] == period[-1]:
        period = [prefix.pop()] + period[:-1]
    return prefix, period


def _convergents(digits) -> Iterator[tuple[int, int]]:
    p0, q0, p1, q1 = 1, 0, 0, 1
    for a in digits:
        p0, q0, p1, q1 = a * p0 + p1, a * q0 + q1, p0, q0
        yield p0, q0


def precision_guard(k: int, bits: int) -> int:
    return 1 << (bits // 2 - 32)


def angle_times_int(k: int, alpha: RotationSpec, with_bound: bool = False):
    """k*alpha mod 1 at P bits (floor of the 2P-bit product).

    With ``with_bound`` returns ``(angle, bound)`` where bound >= the true
    distance on T between the result and k*alpha.
    """
    P = alpha.precision_bits
    if abs(k) >= precision_guard(k, P):
        raise PrecisionOverflow(f"|k| = {abs(k)} exceeds 2^{P // 2 - 32}; raise precision_bits")
    F = alpha.fine_bits
    num, err_units = alpha.fine
    m = (k * num) % (1 << F)
    angle = TorusAngle(m >> (F - P), P)
    if not with_bound:
        return angle
    bound = (abs(k) * err_units) / (1 << F) + 1.0 / (1 << P)
    return angle, bound


def cf_convergents(alpha: RotationSpec, n: int) -> list[tuple[int, int]]:
    """First n convergents (p_i, q_i), fewer if the expansion terminates."""
    if n < 0:
        raise ValueError("n must be non-negative")
    limit = precision_guard(0, alpha.precision_bits)
    out = []
    if n == 0:
        return out
    for p, q in _convergents(alpha.partial_quotients()):
        if q >= limit:
            raise InsufficientPrecision(
                f"convergent denominator {q} exceeds the {alpha.precision_bits}-bit working range"
            )
        out.append((p, q))
        if len(out) == n:
            break
    return out


@dataclass(frozen=True)
class DiophantineEstimate:
    gamma: float
    tau: float
    scanned_up_to: int
    worst_k: int
    records: tuple = field(default=(), compare=False)


def diophantine_scan(alpha: RotationSpec, K: int) -> DiophantineEstimate:
    """Exhaustive scan of ||k alpha|| for 0 < k <= K.

    The exponent is read off the record minima (which are the convergent
    denominators q_j): tau = 1 + max log(a_{j+1}) / log(q_j) over records
    whose successor is also inside the scan. gamma is then the largest
    constant with ||k alpha|| >= gamma k^-tau for every scanned k.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if alpha.is_rational:
        q = alpha.exact_fraction().denominator
        if q <= K:
            raise RationalAlpha(q)
    F = alpha.fine_bits
    mod = 1 << F
    step = alpha.fine[0]
    acc = 0
    dists = []
    records = []
    best = None
    for k in range(1, K + 1):
        acc = (acc + step) % mod
        d_int = min(acc, mod - acc)
        if d_int == 0:
            raise RationalAlpha(k)
        d = d_int / mod
        dists.append(d)
        if best is None or d < best:
            best = d
            records.append(k)
    tau = 1.0
    for j in range(1, len(records) - 1):
        q = records[j]
        a_next = round((records[j + 1] - records[j - 1]) / q)
        if q >= 2 and a_next >= 1:
            tau = max(tau, 1.0 + math.log(a_next) / math.log(q))
    gamma = math.inf
    worst = 1
    for k, d in enumerate(dists, start=1):
        g = d * k ** tau
        if g < gamma:
            gamma, worst = g, k
    return DiophantineEstimate(gamma, tau, K, worst, tuple(records))
