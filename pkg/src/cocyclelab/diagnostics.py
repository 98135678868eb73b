"""Finite-resolution checks of the normal-form hypotheses and their symptoms.

Every report type here is a plain dataclass with ``to_dict`` (JSON-ready)
and ``to_text`` (aligned columns). None of the probes raise on a failed
check; failures show up as false flags in the report.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import algebra as alg
from .algebra import SU2
from .dynamics import Observable, _prefix_products, birkhoff, default_checkpoints, product_at
from .errors import RationalAlpha
from .normal_form import Cocycle, CocycleSpec, assemble, normal_form_tangent
from .points import OrbitPoints
from .torus import TorusAngle, angle_times_int, dist_mod

SUP_GRID = 4096


def format_table(headers, rows) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, complex):
        return f"{v.real:.6g}{v.imag:+.6g}j"
    return str(v)


def to_json(report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


# --- hypothesis checks ------------------------------------------------------------


@dataclass
class LevelConditions:
    level: int
    k: int
    n: int
    dist_n_alpha: float
    dist_n_top: float
    dist_kn_alpha: float
    n_sup_next: float
    a_gap_next: float
    returns_ok: bool
    top_margin_ok: bool
    resonance_margin_ok: bool


@dataclass
class ConditionReport:
    epsilon: float
    precision_bits: int
    levels: list
    returns_pass: bool
    returns_strict_from_first: bool
    top_margin_pass: bool
    resonance_margin_pass: bool

    @property
    def all_pass(self) -> bool:
        return self.returns_pass and self.top_margin_pass and self.resonance_margin_pass

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_pass"] = self.all_pass
        return d

    def to_text(self) -> str:
        head = ["level", "k", "n", "|n a|", "|n a_top|_Z/2", "|k n a|_Z/2", "n|F_next|", "return", "top", "reson."]
        rows = [
            [r.level, r.k, r.n, r.dist_n_alpha, r.dist_n_top, r.dist_kn_alpha, r.n_sup_next, r.returns_ok, r.top_margin_ok, r.resonance_margin_ok]
            for r in self.levels
        ]
        tail = (
            f"epsilon {self.epsilon:g}; returns {self.returns_pass} (strict from level 1: {self.returns_strict_from_first}); "
            f"top margin {self.top_margin_pass}; resonance margin {self.resonance_margin_pass}\n"
        )
        return format_table(head, rows) + tail


def _sup_next(cocycle: Cocycle, i: int, grid: int) -> float:
    """Sampled sup norm of F_{i+1}, where M_i = A_{i+1} exp(F_{i+1})."""
    spec = cocycle.spec
    if i == spec.depth:
        return 2.0 * math.pi * spec.top_magnitude
    _, t, w = normal_form_tangent(cocycle, i + 1, grid)
    return float(np.max(np.sqrt(t * t + np.abs(w) ** 2)))


def check_conditions(spec: CocycleSpec, grid: int = SUP_GRID, cocycle: Cocycle | None = None) -> ConditionReport:
    """Recompute the landmark conditions of a planned spec in fixed point.

    returns: dist(n_i alpha, Z) strictly decreasing (the landmarks are return
    times to 0). The first landmark n_1 = k_1 is not a difference of
    resonances, so the flag is taken over levels i >= 2; the strict
    comparison from level 1 is reported separately.
    top margin: dist(n_i a_top, Z/2) >= epsilon.
    resonance margin: dist(k_i n_i alpha, Z/2) >= epsilon.
    The column n_i |F_{i+1}| is reported without a flag.
    """
    if spec.alpha.is_rational:
        q = spec.alpha.exact_fraction().denominator
        raise RationalAlpha(q, "check_conditions needs an irrational rotation")
    cocycle = cocycle or assemble(spec)
    eps = spec.epsilon
    rows = []
    for i, lv in enumerate(spec.levels, start=1):
        d2 = dist_mod(angle_times_int(lv.n, spec.alpha), "Z")
        d3 = dist_mod(spec.a_top.times(lv.n), "Z/2")
        d6 = dist_mod(angle_times_int(lv.k * lv.n, spec.alpha), "Z/2")
        a_next = spec.levels[i].a if i < spec.depth else spec.a_top
        rows.append(
            LevelConditions(
                level=i,
                k=lv.k,
                n=lv.n,
                dist_n_alpha=d2,
                dist_n_top=d3,
                dist_kn_alpha=d6,
                n_sup_next=lv.n * _sup_next(cocycle, i, grid),
                a_gap_next=abs((a_next - spec.a_top).signed()),
                returns_ok=True,
                top_margin_ok=d3 >= eps,
                resonance_margin_ok=d6 >= eps,
            )
        )
    for j in range(1, len(rows)):
        rows[j].returns_ok = rows[j].dist_n_alpha < rows[j - 1].dist_n_alpha
    returns = all(r.returns_ok for r in rows[2:]) if len(rows) > 2 else True
    strict_first = all(r.returns_ok for r in rows[1:])
    return ConditionReport(
        epsilon=eps,
        precision_bits=spec.precision_bits,
        levels=rows,
        returns_pass=returns,
        returns_strict_from_first=strict_first,
        top_margin_pass=all(r.top_margin_ok for r in rows),
        resonance_margin_pass=all(r.resonance_margin_ok for r in rows),
    )


# --- accumulation points of partial products ------------------------------------------


@dataclass
class ClusterReport:
    radius: float
    horizon: int
    centers: list
    counts: list
    transient: int
    min_separation: float | None
    subsequence: dict | None = None

    @property
    def n_clusters(self) -> int:
        return len(self.centers)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_clusters"] = self.n_clusters
        return d

    def to_text(self) -> str:
        rows = [[j, c[0], c[1], c[2], c[3], n] for j, (c, n) in enumerate(zip(self.centers, self.counts))]
        out = format_table(["cluster", "q0", "q1", "q2", "q3", "visits"], rows)
        out += f"horizon {self.horizon}; radius {self.radius:g}; transient {self.transient}; min separation {_fmt(self.min_separation)}\n"
        if self.subsequence is not None:
            out += f"along subsequence {self.subsequence['indices']}: {self.subsequence['n_clusters']} clusters\n"
        return out


def partial_products(theta, phi, horizon: int) -> np.ndarray:
    """Quaternions of D(theta_1, phi_1) ... D(theta_j, phi_j), j = 1..horizon, as a (horizon, 4) array."""
    if len(theta) < horizon or len(phi) < horizon:
        raise ValueError("theta and phi need at least `horizon` entries")
    th = np.asarray(theta[:horizon], dtype=float)
    ph = np.asarray(phi[:horizon], dtype=float)
    dz = np.cos(th / 2.0) + 0j
    dw = np.sin(th / 2.0) * np.exp(2j * math.pi * ph)
    out = np.empty((horizon, 4))
    z, w = 1.0 + 0j, 0j
    for j in range(horizon):
        z, w = z * dz[j] - w * np.conj(dw[j]), z * dw[j] + w * np.conj(dz[j])
        if (j + 1) % alg.RENORM_EVERY == 0:
            nrm = math.sqrt(abs(z) ** 2 + abs(w) ** 2)
            z, w = z / nrm, w / nrm
        out[j] = (z.real, z.imag, w.real, w.imag)
    return out


def _neighbor_counts(q: np.ndarray, cos_r: float, chunk: int = 2048) -> np.ndarray:
    counts = np.empty(len(q), dtype=np.int64)
    for s in range(0, len(q), chunk):
        dots = np.abs(q[s:s + chunk] @ q.T)
        counts[s:s + chunk] = np.count_nonzero(dots >= cos_r, axis=1)
    return counts


def cluster_quaternions(q: np.ndarray, radius: float) -> tuple[list, list, int, float | None]:
    """Greedy metric clustering in SO(3) (quaternions modulo sign).

    Points are taken in order of decreasing neighbor count (ties: later
    index first). A point becomes a center when it is at least 2*radius
    from every existing center. Each point is then assigned to the center
    within ``radius`` (unique, by the separation); points with no center in
    range are counted as transient.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(q) == 0:
        return [], [], 0, None
    cos_r = 1.0 - radius * radius / 4.0
    cos_2r = 1.0 - radius * radius  # dist >= 2r  <=>  |dot| <= 1 - r^2
    counts = _neighbor_counts(q, cos_r)
    order = sorted(range(len(q)), key=lambda j: (-counts[j], -j))
    centers: list[int] = []
    for j in order:
        if not centers or np.all(np.abs(q[centers] @ q[j]) <= cos_2r):
            centers.append(j)
    C = q[centers]
    dots = np.abs(q @ C.T)
    within = dots >= cos_r
    owner = np.where(within.any(axis=1), np.argmax(dots, axis=1), -1)
    visits = [int(np.count_nonzero(owner == c)) for c in range(len(centers))]
    transient = int(np.count_nonzero(owner < 0))
    sep = None
    if len(centers) > 1:
        cd = np.clip(np.abs(C @ C.T), 0.0, 1.0)
        np.fill_diagonal(cd, 0.0)
        sep = float(2.0 * math.sqrt(max(0.0, 1.0 - cd.max())))
    canon = [_canonical(C[c]) for c in range(len(centers))]
    return canon, visits, transient, sep


def _canonical(qv) -> list[float]:
    """Sign representative: first nonzero component positive."""
    for v in qv:
        if abs(v) > 1e-15:
            return [float(x) for x in (qv if v > 0 else -qv)]
    return [float(x) for x in qv]


def partial_product_clusters(theta, phi, horizon: int, radius: float, subsequence=None) -> ClusterReport:
    """Accumulation points of the partial products of D(theta_i, phi_i).

    ``subsequence`` (1-based product lengths) additionally clusters only
    the products at those indices.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    q = partial_products(theta, phi, horizon)
    centers, visits, transient, sep = cluster_quaternions(q, radius)
    sub = None
    if subsequence is not None:
        idx = sorted({int(j) for j in subsequence if 1 <= int(j) <= horizon})
        sc, sv, st, ss = cluster_quaternions(q[[j - 1 for j in idx]], radius)
        sub = {"indices": idx, "n_clusters": len(sc), "centers": sc, "counts": sv, "transient": st, "min_separation": ss}
    return ClusterReport(radius, horizon, centers, visits, transient, sep, sub)


# --- replication of the orbit computation at the landmarks --------------------------


@dataclass
class ChainLevel:
    level: int
    n: int
    delta_exact: float
    delta_h: float
    delta_f: float
    delta_total: float
    budget: float
    budget_ok: bool
    lipschitz_bound: float
    delta_h_bound: float
    lipschitz_ok: bool
    top_power_dist_pm_id: float
    top_power_dist_z2: float
    top_power_margin_ok: bool
    direct: bool


@dataclass
class ChainErrorReport:
    epsilon: float
    levels: list

    @property
    def all_ok(self) -> bool:
        return all(r.budget_ok and r.lipschitz_ok and r.top_power_margin_ok for r in self.levels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_ok"] = self.all_ok
        return d

    def to_text(self) -> str:
        head = ["level", "n", "d_exact", "d_H", "d_F", "d_total", "budget", "d_H bound", "|A^n,±Id|", "ok"]
        rows = [
            [r.level, r.n, r.delta_exact, r.delta_h, r.delta_f, r.delta_total, r.budget, r.delta_h_bound,
             r.top_power_dist_pm_id, r.budget_ok and r.lipschitz_ok and r.top_power_margin_ok]
            for r in self.levels
        ]
        return format_table(head, rows)


def lipschitz_bound(spec: CocycleSpec, depth: int) -> float:
    """Lipschitz constant of x -> H_depth(x) in the dist_so3 metric.

    G_j moves only its off-diagonal entry, at speed 4 pi k_j sin(theta_j/2),
    and the Frobenius norm of the first-row change carries a factor sqrt 2.
    """
    return sum(4.0 * math.sqrt(2.0) * math.pi * lv.k * abs(math.sin(lv.theta / 2.0)) for lv in spec.levels[:depth])


def proof_chain_level(cocycle: Cocycle, l: int, direct_threshold: int = 1 << 16) -> ChainLevel:
    spec = cocycle.spec
    lv = spec.levels[l - 1]
    n = lv.n
    x0 = TorusAngle.zero(spec.precision_bits)
    xn = angle_times_int(n, spec.alpha)
    true = product_at(cocycle, x0, n, "auto", direct_threshold)
    h0 = cocycle.h(l, x0)
    hn = cocycle.h(l, xn)
    mid = cocycle.level_power(l, x0, n)
    s1 = alg.compose(alg.compose(hn.inverse(), mid), h0)
    top_n = cocycle.top_power(n)
    final = alg.compose(alg.compose(h0.inverse(), top_n), h0)
    d_exact = alg.dist_so3(true, s1)
    d_h = alg.dist_so3(hn, h0)
    d_f = alg.dist_so3(mid, top_n)
    d_total = alg.dist_so3(true, final)
    budget = d_exact + 2.0 * d_h + d_f
    lip = lipschitz_bound(spec, l)
    h_bound = lip * dist_mod(xn, "Z")
    d_z2 = dist_mod(spec.a_top.times(n), "Z/2")
    return ChainLevel(
        level=l,
        n=n,
        delta_exact=d_exact,
        delta_h=d_h,
        delta_f=d_f,
        delta_total=d_total,
        budget=budget,
        budget_ok=d_total <= budget + 1e-9,
        lipschitz_bound=lip,
        delta_h_bound=h_bound,
        lipschitz_ok=d_h <= h_bound + 1e-12,
        top_power_dist_pm_id=alg.dist_to_pm_identity(top_n),
        top_power_dist_z2=d_z2,
        top_power_margin_ok=d_z2 >= spec.epsilon,
        direct=n <= direct_threshold,
    )


def proof_chain_report(cocycle: Cocycle, levels=None) -> ChainErrorReport:
    """Measure each step of the landmark orbit computation at the given levels (default: all)."""
    spec = cocycle.spec
    levels = range(1, spec.depth + 1) if levels is None else levels
    return ChainErrorReport(epsilon=spec.epsilon, levels=[proof_chain_level(cocycle, l) for l in levels])


# --- ergodic-average spread ---------------------------------------------------------------


@dataclass
class SpreadReport:
    observable: str
    checkpoints: list
    per_start: list
    spread: list

    @property
    def final_spread(self) -> float:
        return self.spread[-1] if self.spread else 0.0

    def to_dict(self) -> dict:
        per_start = [[_json_num(v) for v in series] for series in self.per_start]
        return {"observable": self.observable, "checkpoints": self.checkpoints, "per_start": per_start,
                "spread": self.spread, "final_spread": self.final_spread}

    def to_text(self) -> str:
        rows = [[m, s] + [_fmt(series[j]) for series in self.per_start] for j, (m, s) in enumerate(zip(self.checkpoints, self.spread))]
        head = ["n", "spread"] + [f"start{j}" for j in range(len(self.per_start))]
        return format_table(head, rows)


def _json_num(v):
    return [v.real, v.imag] if isinstance(v, complex) else v


def haar_starts(count: int, seed: int, bits: int = 256) -> list[tuple[TorusAngle, SU2]]:
    """Random (x, S): x uniform on the circle, S Haar-distributed on SU(2)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        num = int.from_bytes(rng.bytes(bits // 8), "big")
        g = rng.standard_normal(4)
        g /= np.linalg.norm(g)
        out.append((TorusAngle(num, bits), SU2(complex(g[0], g[1]), complex(g[2], g[3]))))
    return out


def _birkhoff_job(args):
    spec_json, obs_text, x_num, bits, s, n, cps = args
    cocycle = assemble(CocycleSpec.from_json(spec_json))
    series = birkhoff(cocycle, Observable.parse(obs_text), TorusAngle(x_num, bits), SU2(*s), n, cps)
    return series.averages


def ue_probe(cocycle: Cocycle, obs: Observable, starts, n: int, checkpoints=None, workers: int = 1) -> SpreadReport:
    """Birkhoff averages of ``obs`` from several starts and their spread per checkpoint.

    For real observables the spread is max - min across starts; for complex
    ones it is the largest pairwise distance.
    """
    if not starts:
        raise ValueError("need at least one start")
    if checkpoints is None:
        checkpoints = default_checkpoints(n, [lv.n for lv in cocycle.spec.levels])
    cps = sorted({int(m) for m in checkpoints if 1 <= int(m) <= n})
    if workers > 1 and len(starts) > 1:
        spec_json = cocycle.spec.to_json()
        jobs = [(spec_json, obs.text(), x.numerator, x.precision_bits, (s.z, s.w), n, cps) for x, s in starts]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_start = list(pool.map(_birkhoff_job, jobs))
    else:
        per_start = [birkhoff(cocycle, obs, x, s, n, cps).averages for x, s in starts]
    spread = []
    for j in range(len(cps)):
        vals = [series[j] for series in per_start]
        if obs.is_real:
            spread.append(float(max(vals) - min(vals)))
        else:
            spread.append(float(max(abs(u - v) for u in vals for v in vals)))
    return SpreadReport(observable=obs.text(), checkpoints=cps, per_start=per_start, spread=spread)


# --- orbit coverage ----------------------------------------------------------------


@dataclass
class CoverageReport:
    net: tuple
    checkpoints: list
    visited: list
    fraction: list
    stride: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        rows = list(zip(self.checkpoints, self.visited, self.fraction))
        return format_table(["n", "visited", "fraction"], rows) + f"net {self.net[0]} x {self.net[1]}; stride {self.stride}\n"


def fiber_cells(z, w, per_axis: int) -> np.ndarray:
    """Equal-Haar-measure cells of SU(2)/{+-1}.

    Coordinates: u = |z|^2 (uniform under Haar), psi1 = arg z mod pi, and
    psi2 = arg w shifted by the same multiple of pi, so (z, w) and
    (-z, -w) land in the same cell.
    """
    u = np.clip(np.abs(z) ** 2, 0.0, 1.0)
    az = np.angle(z) % (2 * math.pi)
    flip = az >= math.pi
    psi1 = np.where(flip, az - math.pi, az)
    psi2 = (np.angle(w) + np.where(flip, math.pi, 0.0)) % (2 * math.pi)
    b = per_axis
    iu = np.minimum((u * b).astype(np.int64), b - 1)
    i1 = np.minimum((psi1 / math.pi * b).astype(np.int64), b - 1)
    i2 = np.minimum((psi2 / (2 * math.pi) * b).astype(np.int64), b - 1)
    return (iu * b + i1) * b + i2


def coverage_probe(cocycle: Cocycle, net=(16, 64), n: int = 0, stride: int = 1, checkpoints=None,
                   x0: TorusAngle | None = None, S0: SU2 | None = None) -> CoverageReport:
    """Fraction of the M_x x M_q cells of T x SU(2)/{+-1} visited by the orbit of (x0, S0).

    The orbit points j = 0, stride, 2*stride, ... <= n are binned; the
    start point is always included. M_q must be a perfect cube.
    """
    mx, mq = int(net[0]), int(net[1])
    b = round(mq ** (1.0 / 3.0))
    if mx < 2 or mq < 2 or b ** 3 != mq:
        raise ValueError("net needs M_x >= 2 and M_q a perfect cube >= 8")
    if n < 0 or stride < 1:
        raise ValueError("need n >= 0 and stride >= 1")
    bits = cocycle.spec.precision_bits
    x0 = x0 if x0 is not None else TorusAngle.zero(bits)
    S0 = S0 if S0 is not None else SU2.identity()
    if checkpoints is None:
        checkpoints = default_checkpoints(n, [lv.n for lv in cocycle.spec.levels]) if n else [0]
    cps = sorted({int(m) for m in checkpoints if 0 <= int(m) <= n})
    seen = np.zeros(mx * mq, dtype=bool)

    def mark(xfrac, z, w):
        ix = np.minimum((xfrac * mx).astype(np.int64), mx - 1)
        seen[ix * mq + fiber_cells(z, w, b)] = True

    mark(np.array([x0.to_float()]), np.array([S0.z]), np.array([S0.w]))
    visited, fraction = [], []
    cp_pos = 0
    while cp_pos < len(cps) and cps[cp_pos] == 0:
        visited.append(int(seen.sum()))
        fraction.append(visited[-1] / seen.size)
        cp_pos += 1
    for offset, z, w in _prefix_products(cocycle, x0, n, S0):
        steps = np.arange(offset + 1, offset + 1 + len(z))
        xs = OrbitPoints(x0, cocycle.alpha, offset + 1, len(z)).frac(1)
        keep = steps % stride == 0
        while cp_pos < len(cps) and cps[cp_pos] <= steps[-1]:
            sel = keep & (steps <= cps[cp_pos])
            mark(xs[sel], z[sel], w[sel])
            visited.append(int(seen.sum()))
            fraction.append(visited[-1] / seen.size)
            cp_pos += 1
        mark(xs[keep], z[keep], w[keep])
    return CoverageReport(net=(mx, mq), checkpoints=cps, visited=visited, fraction=fraction, stride=stride)
