"""Monte Carlo on the assembled network and on one-dimensional Bessel comparisons.

Every path draws from its own splitmix64 stream, seeded by mixing the run
seed with the path index, so results do not depend on how paths are
batched or how many threads run the batches.  Kernels are compiled with
``nogil`` and run on a thread pool whose size is capped by ``SDL_THREADS``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ConfigurationError, DomainError, InsufficientDataError
from .forms import FormMatrices
from .mesh import Mode

TIMEOUT = -1
BATCH = 2048
# largest diffusion step allowed, as a fraction of r, when the drift is singular
RESOLVE = 0.05

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def _stream_seed(seed, path):
    return _mix(seed ^ _mix(np.uint64(path) + _GOLDEN))


@nb.njit(inline="always")
def _next(state):
    state = state + _GOLDEN
    return state, _mix(state)


@nb.njit(inline="always")
def _uniform(state):
    """Uniform on (0, 1); never returns 0 so it is safe under log."""
    state, z = _next(state)
    return state, ((z >> np.uint64(11)) + 0.5) * _INV53


def path_seed(seed: int, path: int) -> int:
    """Initial stream state of ``path`` (exposed for tests)."""
    return int(_stream_seed(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), path))


def n_threads() -> int:
    cap = os.environ.get("SDL_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigurationError(f"SDL_THREADS must be an integer, got {cap!r}") from exc
    return n


def _run_batches(kernel, paths: int, threads: int | None = None):
    """Call ``kernel(lo, hi)`` over fixed-size path batches; results in path order."""
    bounds = [(lo, min(lo + BATCH, paths)) for lo in range(0, paths, BATCH)]
    threads = n_threads() if threads is None else threads
    if threads <= 1 or len(bounds) <= 1:
        return [kernel(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: kernel(*b), bounds))


# ---------------------------------------------------------------------------
# jump chain on the network


@dataclass(frozen=True)
class HitRecord:
    absorbed_at: int  # origin node id, or TIMEOUT
    last_annulus_angle: float  # NaN if the annulus was never left
    steps: int


@dataclass(frozen=True)
class WalkConfig:
    start: int
    max_steps: int = 1_000_000
    annulus: tuple = (0.01, 0.1)
    seed: int = 12345
    paths: int = 1000

    def __post_init__(self):
        if self.paths < 1:
            raise ConfigurationError("paths must be >= 1")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        lo, hi = self.annulus
        if not lo < hi:
            raise ConfigurationError(f"annulus needs r_lo < r_hi, got {self.annulus}")


def _transition_table(F: FormMatrices):
    """Row-normalised cumulative conductances of the network (CSR layout)."""
    C = (-F.S).tocsr()
    C.setdiag(0.0)
    C.eliminate_zeros()
    C.sort_indices()
    indptr, indices = C.indptr.astype(np.int64), C.indices.astype(np.int64)
    cum = np.empty(C.nnz)
    for i in range(C.shape[0]):
        lo, hi = indptr[i], indptr[i + 1]
        if hi == lo:
            continue
        c = np.cumsum(C.data[lo:hi])
        cum[lo:hi] = c / c[-1]
        cum[hi - 1] = 1.0
    return indptr, indices, cum


@nb.njit(inline="always")
def _step(state, i, indptr, indices, cum):
    state, u = _uniform(state)
    lo, hi = indptr[i], indptr[i + 1] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    return state, indices[lo]


@nb.njit(nogil=True, cache=True)
def _walk_kernel(lo, hi, seed, start, max_steps, indptr, indices, cum,
                 is_origin, in_annulus, angle):
    n = hi - lo
    absorbed = np.full(n, -1, np.int64)
    last = np.full(n, np.nan)
    steps = np.zeros(n, np.int64)
    for p in range(lo, hi):
        state = _stream_seed(seed, p)
        i = start
        k = 0
        while k < max_steps:
            state, j = _step(state, i, indptr, indices, cum)
            k += 1
            if in_annulus[i] and not in_annulus[j]:
                last[p - lo] = angle[i]
            i = j
            if is_origin[i]:
                absorbed[p - lo] = i
                break
        steps[p - lo] = k
    return absorbed, last, steps


def _walk_setup(F: FormMatrices, cfg: WalkConfig):
    if F.mode is Mode.KILLED:
        raise ConfigurationError("random walk needs a glued or split topology")
    if not 0 <= cfg.start < F.n_mesh:
        raise DomainError(f"start node {cfg.start} is not a mesh node")
    mesh = F.mesh
    lo, hi = cfg.annulus
    if lo < mesh.r_min * (1 - 1e-12) or hi > mesh.radius * (1 + 1e-12):
        raise ConfigurationError(f"annulus {cfg.annulus} outside [{mesh.r_min}, {mesh.radius}]")
    n = F.n_nodes
    is_origin = np.zeros(n, np.bool_)
    is_origin[list(F.origin_nodes)] = True
    r = np.zeros(n)
    r[: F.n_mesh] = mesh.node_radius()
    in_annulus = (r >= lo) & (r <= hi) & ~is_origin
    angle = np.full(n, np.nan)
    angle[: F.n_mesh] = mesh.node_theta(signed=True)
    return is_origin, in_annulus, angle


def walk_arrays(F: FormMatrices, cfg: WalkConfig, threads: int | None = None):
    """Array form of :func:`walk_sample`: ``(absorbed_at, last_annulus_angle, steps)``."""
    is_origin, in_annulus, angle = _walk_setup(F, cfg)
    indptr, indices, cum = _transition_table(F)
    seed = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)

    def kernel(lo, hi):
        return _walk_kernel(lo, hi, seed, cfg.start, cfg.max_steps, indptr, indices, cum,
                            is_origin, in_annulus, angle)

    parts = _run_batches(kernel, cfg.paths, threads)
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def walk_sample(F: FormMatrices, cfg: WalkConfig, threads: int | None = None) -> list[HitRecord]:
    absorbed, last, steps = walk_arrays(F, cfg, threads)
    return [HitRecord(int(a), float(t), int(s)) for a, t, s in zip(absorbed, last, steps)]


@nb.njit(nogil=True, cache=True)
def _return_kernel(lo, hi, seed, start, max_steps, indptr, indices, cum, origin_slot, quadrant, n_origin):
    counts = np.zeros((n_origin, 5), np.int64)
    for p in range(lo, hi):
        state = _stream_seed(seed, p)
        i = start
        for _ in range(max_steps):
            state, j = _step(state, i, indptr, indices, cum)
            s = origin_slot[i]
            if s >= 0:
                counts[s, quadrant[j]] += 1
            i = j
    return counts


@dataclass(frozen=True)
class ReturnStats:
    """Where the walk goes right after each visit to an origin point.

    ``counts[k, q]`` is the number of departures from origin point ``k``
    into quadrant ``q`` (1..4); column 0 collects departures to another
    origin point.
    """

    mode: Mode
    counts: np.ndarray

    @property
    def visits(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def fraction(self, k: int, q: int) -> float:
        return float(self.counts[k, q] / self.visits[k])

    @property
    def from_plus_into_Q1(self) -> float:
        return self.fraction(0, 1)

    @property
    def from_minus_into_Q3(self) -> float:
        if self.mode is Mode.GLUED:
            return self.fraction(0, 3)
        return self.fraction(1, 3)

    def q1_share(self, k: int = 0):
        """Share of Q1 among departures into Q1 or Q3, with its binomial standard error."""
        n = int(self.counts[k, 1] + self.counts[k, 3])
        if n == 0:
            raise InsufficientDataError("no departures into Q1 or Q3")
        p = self.counts[k, 1] / n
        return float(p), float(math.sqrt(0.25 / n)), n


def return_side_stats(F: FormMatrices, cfg: WalkConfig, threads: int | None = None) -> ReturnStats:
    """Non-absorbing walk; tallies the quadrant of the node following each origin visit."""
    is_origin, _, angle = _walk_setup(F, cfg)
    indptr, indices, cum = _transition_table(F)
    n = F.n_nodes
    origin_slot = np.full(n, -1, np.int64)
    for k, o in enumerate(F.origin_nodes):
        origin_slot[o] = k
    quadrant = np.zeros(n, np.int64)
    quadrant[: F.n_mesh] = (F.mesh.node_theta() // (math.pi / 2)).astype(np.int64) + 1
    seed = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)

    def kernel(lo, hi):
        return _return_kernel(lo, hi, seed, cfg.start, cfg.max_steps, indptr, indices, cum,
                              origin_slot, quadrant, len(F.origin_nodes))

    counts = sum(_run_batches(kernel, cfg.paths, threads))
    if np.any(counts.sum(axis=1) == 0):
        raise InsufficientDataError(f"some origin point was never visited within {cfg.max_steps} steps")
    return ReturnStats(F.mode, counts)


# ---------------------------------------------------------------------------
# radial Bessel comparison


@dataclass(frozen=True)
class BesselEstimate:
    estimate: float
    std_err: float
    analytic: float
    paths: int
    aborted: int

    @property
    def z_score(self) -> float:
        if self.std_err == 0:
            return 0.0 if self.estimate == self.analytic else math.inf
        return (self.estimate - self.analytic) / self.std_err


def bessel_analytic(delta: float, r0: float, a: float, b: float) -> float:
    """P(hit a before b) for ``d^2/dr^2 + (delta-1)/r d/dr`` from scale functions."""
    kappa = 2.0 - delta
    if kappa == 0:
        return math.log(b / r0) / math.log(b / a)
    return (r0 ** kappa - b ** kappa) / (a ** kappa - b ** kappa)


@nb.njit(inline="always")
def _crossed(state, x, y, level, inv_h):
    """Brownian-bridge test for an unseen crossing of ``level`` (variance 2 per unit time)."""
    e = (x - level) * (y - level) * inv_h
    if e > 40.0:
        return state, False
    state, u = _uniform(state)
    return state, u < math.exp(-e)


@nb.njit(inline="always")
def _normal_pair(state):
    """Two independent standard normals (Marsaglia polar method)."""
    while True:
        state, u = _uniform(state)
        state, v = _uniform(state)
        u = 2.0 * u - 1.0
        v = 2.0 * v - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return state, u * f, v * f


@nb.njit(nogil=True, cache=True)
def _bessel_kernel(lo, hi, seed, c, r0, a, b, dt, reflect_b, max_steps):
    n = hi - lo
    hit = np.zeros(n, np.int8)
    aborted = np.zeros(n, np.int8)
    h_min = dt / 1024.0
    sq_dt = math.sqrt(2.0 * dt)
    inv_dt = 1.0 / dt
    for p in range(lo, hi):
        state = _stream_seed(seed, p)
        if r0 <= a:
            hit[p - lo] = 1
            continue
        r = r0
        spare = 0.0
        have_spare = False
        k = 0
        while True:
            if k >= max_steps:
                aborted[p - lo] = 1
                break
            k += 1
            if have_spare:
                z = spare
                have_spare = False
            else:
                state, z, spare = _normal_pair(state)
                have_spare = True
            mu = c / r if c != 0.0 else 0.0
            if abs(mu) * dt > 0.5 * (r - a) or (c != 0.0 and 2.0 * dt > (RESOLVE * r) ** 2):
                # the drift c/r varies on the scale r: keep both the drift
                # increment and the diffusion step small against it
                h = dt
                while (abs(mu) * h > 0.5 * (r - a) or 2.0 * h > (RESOLVE * r) ** 2) and h >= h_min:
                    h *= 0.5
                if h < h_min:
                    if c < 0.0:
                        aborted[p - lo] = 1
                        break
                    h = h_min
                y = r + mu * h + math.sqrt(2.0 * h) * z
                inv_h = 1.0 / h
            else:
                y = r + mu * dt + sq_dt * z
                inv_h = inv_dt
            if y <= a:
                hit[p - lo] = 1
                break
            state, crossed = _crossed(state, r, y, a, inv_h)
            if crossed:
                hit[p - lo] = 1
                break
            if reflect_b:
                if y > b:
                    y = 2.0 * b - y
            else:
                if y >= b:
                    break
                state, crossed = _crossed(state, r, y, b, inv_h)
                if crossed:
                    break
            r = y
    return hit, aborted


def bessel_hit_estimate(delta: float, r0: float, a: float, b: float, dt: float, paths: int,
                        seed: int = 12345, reflect_b: bool = False, max_steps: int = 100_000_000,
                        threads: int | None = None) -> BesselEstimate:
    """Euler-Maruyama estimate of P(hit a before b) for ``dr = sqrt(2) dW + (delta-1)/r dt``.

    Unseen crossings within a step are caught with the Brownian-bridge
    probability.  The step is halved (down to ``dt/1024``) while the drift
    increment exceeds half the gap to ``a`` or, for a non-zero drift, while
    the diffusion step exceeds ``RESOLVE * r``; without the latter the
    1/r drift is under-resolved at small r and the estimate is biased.  Outward-drift paths then continue at that floor; inward
    paths that still cannot advance are aborted and reported, not dropped
    silently.
    """
    if not 0 < a <= r0 < b:
        raise DomainError(f"need 0 < a <= r0 < b, got a={a}, r0={r0}, b={b}")
    if not 0 < dt <= a * a / 10:
        raise ConfigurationError(f"dt={dt} must be positive and at most a^2/10={a * a / 10}")
    if paths < 1:
        raise ConfigurationError("paths must be >= 1")
    seed64 = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    def kernel(lo, hi):
        return _bessel_kernel(lo, hi, seed64, float(delta - 1.0), float(r0), float(a), float(b),
                              float(dt), bool(reflect_b), int(max_steps))

    parts = _run_batches(kernel, paths, threads)
    hit = np.concatenate([p[0] for p in parts])
    aborted = np.concatenate([p[1] for p in parts]).astype(bool)
    n_ok = int((~aborted).sum())
    if n_ok == 0:
        raise InsufficientDataError("every Bessel path was aborted")
    k = int(hit[~aborted].sum())
    p = k / n_ok
    analytic = 1.0 if reflect_b else bessel_analytic(delta, r0, a, b)
    return BesselEstimate(p, math.sqrt(p * (1 - p) / n_ok), analytic, n_ok, int(aborted.sum()))
