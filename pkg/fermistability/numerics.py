# Copyright 2024 The FermiStability Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# Numerical engine: quadrature, Legendre polynomials, root finding, log grids,
# the sharp (Mellin-type) transform and seeded Monte Carlo integration

import heapq
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Dict, Optional, Protocol, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from tqdm import tqdm

from fermistability.constants import (
    FORM_KEYS,
    LOG_GRID_DEFAULTS,
    MC_BATCHES,
    QUADRATURE_DEFAULTS,
    SHARP_REL_TOL,
    WINDOW_REL_TOL,
)
from fermistability.errors import (
    DomainError,
    GridTooCoarse,
    InvalidRange,
    NoSignChange,
    NonConvergence,
    ZeroDensity,
)
from fermistability.utils import resolve_threads

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = QUADRATURE_DEFAULTS["rel_tol"]
    abs_tol: float = QUADRATURE_DEFAULTS["abs_tol"]
    max_subdivisions: int = QUADRATURE_DEFAULTS["max_subdivisions"]
    base_order: int = QUADRATURE_DEFAULTS["base_order"]

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if not self.abs_tol >= 0:
            raise DomainError(f"abs_tol must be nonnegative, got {self.abs_tol}")
        if self.max_subdivisions < 1:
            raise DomainError(f"max_subdivisions must be at least 1, got {self.max_subdivisions}")
        if self.base_order < 2:
            raise DomainError(f"base_order must be at least 2, got {self.base_order}")

    def to_dict(self) -> Dict[str, float]:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_subdivisions": self.max_subdivisions,
            "base_order": self.base_order,
        }


DEFAULT_QUADRATURE = QuadratureConfig()


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only, cached)."""
    nodes, weights = leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _evaluate(f: Callable, x: np.ndarray) -> np.ndarray:
    # integrands are called on arrays of nodes; constants broadcast
    return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)


def integrate_adaptive(
    f: Callable[[np.ndarray], ArrayLike],
    a: float,
    b: float,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> float:
    """
    Globally adaptive Gauss-Legendre quadrature.

    Each panel is compared against the sum of its two halves; the panel with the largest
    discrepancy is split until the summed discrepancy drops below max(rel_tol * |I|, abs_tol).
    A semi-infinite range [a, inf) is mapped onto [0, 1) by p = a + t / (1 - t).

    Args:
        f: vectorized integrand, called with a 1-D array of nodes.
        a: finite lower limit.
        b: upper limit, may be np.inf.
        cfg: tolerances and panel order.

    Returns:
        the integral estimate.
    """
    if not np.isfinite(a) or np.isnan(b):
        raise InvalidRange(f"lower limit must be finite, got [{a}, {b}]")
    if not a < b:
        raise InvalidRange(f"integration range [{a}, {b}] is empty or reversed")
    if np.isinf(b):

        def mapped(t):
            s = 1.0 - t
            return _evaluate(f, a + t / s) / (s * s)

        return integrate_adaptive(mapped, 0.0, 1.0, cfg)

    nodes, weights = gauss_legendre(cfg.base_order)

    def panel(lo, hi):
        half = 0.5 * (hi - lo)
        return half * float(np.dot(weights, _evaluate(f, half * nodes + 0.5 * (hi + lo))))

    heap = []

    def push(lo, hi, coarse):
        mid = 0.5 * (lo + hi)
        left, right = panel(lo, mid), panel(mid, hi)
        heapq.heappush(heap, (-abs(left + right - coarse), lo, hi, mid, left, right))

    push(a, b, panel(a, b))
    for _ in range(cfg.max_subdivisions + 1):
        total = math.fsum(entry[4] + entry[5] for entry in heap)
        error = math.fsum(-entry[0] for entry in heap)
        if not math.isfinite(total):
            raise NonConvergence(f"integrand is not finite on [{a}, {b}]")
        if error <= max(cfg.rel_tol * abs(total), cfg.abs_tol):
            return total
        if len(heap) > cfg.max_subdivisions:
            break
        _, lo, hi, mid, left, right = heapq.heappop(heap)
        push(lo, mid, left)
        push(mid, hi, right)
    raise NonConvergence(
        f"adaptive quadrature on [{a}, {b}] stopped at error {error:.3e} after {len(heap)} panels"
    )


def legendre_table(l_max: int, y: ArrayLike) -> np.ndarray:
    """Rows P_0(y) ... P_{l_max}(y) by the three-term recurrence, no range check."""
    y = np.asarray(y, dtype=float)
    table = np.empty((l_max + 1,) + y.shape)
    table[0] = 1.0
    if l_max >= 1:
        table[1] = y
    for j in range(1, l_max):
        table[j + 1] = ((2 * j + 1) * y * table[j] - j * table[j - 1]) / (j + 1)
    return table


def legendre_p(l: int, y: ArrayLike) -> ArrayLike:
    """
    Legendre polynomial P_l(y) for |y| <= 1.
    """
    if l < 0:
        raise DomainError(f"Legendre order must be nonnegative, got {l}")
    y_arr = np.asarray(y, dtype=float)
    if np.any(np.abs(y_arr) > 1.0):
        raise DomainError("Legendre argument must satisfy |y| <= 1")
    values = legendre_table(l, y_arr)[l]
    if y_arr.ndim == 0:
        return float(values)
    return values


def _bisect(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    f_lo = f(lo)
    for _ in range(400):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """
    Root of f inside a sign-changing bracket. Brent's method, bisection if it fails.
    """
    if not lo < hi:
        raise InvalidRange(f"root bracket [{lo}, {hi}] is empty or reversed")
    if not tol > 0:
        raise DomainError(f"root tolerance must be positive, got {tol}")
    f_lo, f_hi = f(lo), f(hi)
    if not f_lo * f_hi < 0:
        raise NoSignChange(f"f({lo})={f_lo} and f({hi})={f_hi} do not bracket a root")
    try:
        return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
    except (RuntimeError, ValueError) as err:
        logger.warning(f"Brent iteration failed ({err}), falling back to bisection")
        return _bisect(f, lo, hi, tol)


def gregory_weights(n_points: int, spacing: float) -> np.ndarray:
    """
    Trapezoid weights with fourth-order Gregory end corrections on a uniform grid.
    """
    if n_points < 8:
        raise DomainError(f"Gregory weights need at least 8 points, got {n_points}")
    weights = np.full(n_points, spacing)
    ends = spacing * np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
    weights[:3] = ends
    weights[-3:] = ends[::-1]
    return weights


@dataclass(frozen=True)
class LogGrid:
    """Uniform grid in x = log p."""

    x_min: float = LOG_GRID_DEFAULTS["x_min"]
    x_max: float = LOG_GRID_DEFAULTS["x_max"]
    n_points: int = LOG_GRID_DEFAULTS["n_points"]

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise InvalidRange(f"grid bounds must be finite, got [{self.x_min}, {self.x_max}]")
        if not self.x_min < self.x_max:
            raise InvalidRange(f"grid bounds [{self.x_min}, {self.x_max}] are empty or reversed")
        if self.n_points < 16:
            raise DomainError(f"a LogGrid needs at least 16 points, got {self.n_points}")

    @classmethod
    def with_spacing(cls, x_min: float, x_max: float, spacing: float) -> "LogGrid":
        n_points = int(math.ceil((x_max - x_min) / spacing - 1e-9)) + 1
        return cls(x_min, x_max, max(16, n_points))

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.linspace(self.x_min, self.x_max, self.n_points)
        nodes.setflags(write=False)
        return nodes

    @property
    def momenta(self) -> np.ndarray:
        return np.exp(self.nodes)

    @cached_property
    def weights(self) -> np.ndarray:
        weights = gregory_weights(self.n_points, self.spacing)
        weights.setflags(write=False)
        return weights

    def shifted(self, shift: float) -> "LogGrid":
        return LogGrid(self.x_min + shift, self.x_max + shift, self.n_points)


DEFAULT_LOG_GRID = LogGrid()


def _energy_weight(x: np.ndarray) -> np.ndarray:
    # sqrt(1 + e^{-2x}) without overflow at very negative x
    return np.exp(0.5 * np.logaddexp(0.0, -2.0 * x))


@dataclass(frozen=True)
class RadialFunction:
    """
    Radial profile g(p) of a charge in one partial wave.

    Samples are stored premultiplied as h(x) = p^2 g(p) at p = e^x, which keeps profiles
    concentrated at very large momenta representable in double precision. `values` returns
    g itself. `closed_form`, when present, evaluates h at arbitrary x; `support` is an
    x-interval outside of which h vanishes identically (a hard edge such as a Heaviside cut).
    """

    grid: LogGrid
    weighted: np.ndarray
    closed_form: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, repr=False)
    support: Tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self):
        weighted = np.array(self.weighted, dtype=float)
        if weighted.shape != (self.grid.n_points,):
            raise DomainError(f"expected {self.grid.n_points} samples, got shape {weighted.shape}")
        if not np.all(np.isfinite(weighted)):
            raise DomainError("radial samples must be finite")
        weighted.setflags(write=False)
        object.__setattr__(self, "weighted", weighted)
        if not self.support[0] < self.support[1]:
            raise InvalidRange(f"empty support {self.support}")
        if not np.isfinite(self.weighted_norm()):
            raise DomainError("weighted norm of the radial profile is not finite")

    @classmethod
    def from_log_profile(
        cls,
        h: Callable[[np.ndarray], np.ndarray],
        grid: LogGrid = DEFAULT_LOG_GRID,
        support: Tuple[float, float] = (-np.inf, np.inf),
    ) -> "RadialFunction":
        """Build from h(x) = e^{2x} g(e^x)."""
        nodes = grid.nodes
        inside = (nodes >= support[0]) & (nodes <= support[1])
        weighted = np.zeros(grid.n_points)
        weighted[inside] = h(nodes[inside])
        return cls(grid, weighted, closed_form=h, support=support)

    @classmethod
    def from_profile(
        cls,
        g: Callable[[np.ndarray], np.ndarray],
        grid: LogGrid = DEFAULT_LOG_GRID,
        p_support: Tuple[float, float] = (0.0, np.inf),
    ) -> "RadialFunction":
        """Build from g(p); `p_support` is the momentum interval where g may be nonzero."""

        def h(x):
            x = np.asarray(x, dtype=float)
            return np.exp(2.0 * x) * g(np.exp(x))

        with np.errstate(divide="ignore"):
            support = (float(np.log(p_support[0])), float(np.log(p_support[1])))
        return cls.from_log_profile(h, grid, support)

    @classmethod
    def zeros(cls, grid: LogGrid = DEFAULT_LOG_GRID) -> "RadialFunction":
        return cls(grid, np.zeros(grid.n_points), closed_form=np.zeros_like)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore", under="ignore"):
            return self.weighted * np.exp(-2.0 * self.nodes)

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.nodes, self.weighted)

    def weighted_at(self, x: ArrayLike) -> np.ndarray:
        """h(x) at arbitrary points; zero outside the support."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        inside = (x >= self.support[0]) & (x <= self.support[1])
        out = np.zeros(x.shape)
        if self.closed_form is not None:
            out[inside] = self.closed_form(x[inside])
        else:
            inside &= (x >= self.grid.x_min) & (x <= self.grid.x_max)
            out[inside] = self._spline(x[inside])
        return out

    def __call__(self, p: ArrayLike) -> ArrayLike:
        p_arr = np.asarray(p, dtype=float)
        if np.any(p_arr <= 0):
            raise DomainError("radial profiles are evaluated at p > 0")
        out = self.weighted_at(np.log(p_arr)).reshape(p_arr.shape) / p_arr**2
        return float(out) if p_arr.ndim == 0 else out

    def integrate_density(self, weight: np.ndarray) -> float:
        """Sum of h(x)^2 * weight(x) over the grid with the grid's quadrature weights."""
        return float(np.dot(self.grid.weights, self.weighted**2 * weight))

    def norm_squared(self) -> float:
        """The L^2 norm squared, int p^2 |g|^2 dp."""
        return self.integrate_density(np.exp(-self.nodes))

    def weighted_norm(self) -> float:
        """int p^2 sqrt(p^2 + 1) |g|^2 dp."""
        return self.integrate_density(_energy_weight(self.nodes))

    def window(self, rel_tol: float = WINDOW_REL_TOL) -> Tuple[float, float]:
        """Smallest x-interval holding every sample above rel_tol of the peak density."""
        density = self.weighted**2 * _energy_weight(self.nodes)
        peak = density.max()
        if peak <= 0:
            return self.grid.x_min, self.grid.x_max
        idx = np.flatnonzero(density > rel_tol * peak)
        first, last = max(idx[0] - 1, 0), min(idx[-1] + 1, self.grid.n_points - 1)
        lo = max(self.nodes[first], self.support[0])
        hi = min(self.nodes[last], self.support[1])
        if hi - lo < 16 * self.grid.spacing:
            centre = 0.5 * (lo + hi)
            lo, hi = centre - 8 * self.grid.spacing, centre + 8 * self.grid.spacing
        return float(lo), float(hi)

    def resample(self, grid: LogGrid) -> "RadialFunction":
        source = self.closed_form if self.closed_form is not None else self.weighted_at
        return RadialFunction(grid, self.weighted_at(grid.nodes), closed_form=source, support=self.support)

    def on_window(self, spacing: float, rel_tol: float = WINDOW_REL_TOL) -> "RadialFunction":
        """Resample onto the significant window with at most the given spacing."""
        lo, hi = self.window(rel_tol)
        return self.resample(LogGrid.with_spacing(lo, hi, spacing))

    def dilate(self, shift: float, factor: float) -> "RadialFunction":
        """The profile x -> factor * h(x - shift) on the shifted grid."""

        def dilated(x):
            return factor * self.weighted_at(np.asarray(x, dtype=float) - shift)

        support = (self.support[0] + shift, self.support[1] + shift)
        return RadialFunction(self.grid.shifted(shift), factor * self.weighted, closed_form=dilated, support=support)

    def normalized(self) -> "RadialFunction":
        norm = self.norm_squared()
        if not norm > 0:
            raise DomainError("cannot normalize a vanishing radial profile")
        return self.dilate(0.0, 1.0 / math.sqrt(norm))


def _sharp_sum(weights: np.ndarray, h: np.ndarray, x: np.ndarray, k: np.ndarray) -> np.ndarray:
    out = np.empty(k.shape, dtype=complex)
    wh = weights * h
    for start in range(0, k.size, 256):
        block = k[start : start + 256]
        out[start : start + 256] = np.exp(-1j * np.outer(block, x)) @ wh
    return out / np.sqrt(2.0 * np.pi)


def mellin_sharp(g: RadialFunction, k: ArrayLike, tol: float = SHARP_REL_TOL) -> Union[complex, np.ndarray]:
    """
    The sharp transform g#(k) = (2 pi)^{-1/2} int dx e^{-ikx} e^{2x} g(e^x).

    Direct summation with Gregory weights. The result is compared with the same rule on every
    other node and GridTooCoarse is raised when the Richardson estimate of the difference
    exceeds tol relative to the scale (2 pi)^{-1/2} int |h| dx.
    """
    k_arr = np.atleast_1d(np.asarray(k, dtype=float))
    x, h, grid = g.nodes, g.weighted, g.grid
    value = _sharp_sum(grid.weights, h, x, k_arr)

    usable = grid.n_points if grid.n_points % 2 else grid.n_points - 1
    full = _sharp_sum(gregory_weights(usable, grid.spacing), h[:usable], x[:usable], k_arr)
    half = _sharp_sum(gregory_weights((usable + 1) // 2, 2 * grid.spacing), h[:usable:2], x[:usable:2], k_arr)
    scale = float(np.dot(grid.weights, np.abs(h))) / np.sqrt(2.0 * np.pi)
    estimate = float(np.max(np.abs(full - half))) / 15.0 if k_arr.size else 0.0
    if estimate > tol * max(scale, np.finfo(float).tiny):
        raise GridTooCoarse(
            f"sharp transform discretization error {estimate:.3e} exceeds {tol:g} x scale {scale:.3e}; "
            f"refine the grid (spacing {grid.spacing:.3e}, max |k| {np.max(np.abs(k_arr)):.3g})"
        )
    if np.ndim(k) == 0:
        return complex(value[0])
    return value.reshape(np.shape(k))


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_err: float
    n_samples: int
    seed: int


class ProposalSampler(Protocol):
    """Sample generator and its normalized density on R^dim."""

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    def density(self, points: np.ndarray) -> np.ndarray:
        ...


class LogProposalSampler(Protocol):
    """Sample generator and the log of its normalized density on R^dim."""

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    def log_density(self, points: np.ndarray) -> np.ndarray:
        ...


def _combine(a: Tuple[int, float, float], b: Tuple[int, float, float]) -> Tuple[int, float, float]:
    # pairwise (count, mean, M2) merge
    n_a, mean_a, m2_a = a
    n_b, mean_b, m2_b = b
    n = n_a + n_b
    if n == 0:
        return 0, 0.0, 0.0
    delta = mean_b - mean_a
    mean = mean_a + delta * n_b / n
    return n, mean, m2_a + m2_b + delta * delta * n_a * n_b / n


def _run_batches(
    dim: int,
    sampler,
    ratios: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    seed: int,
    n_batches: int,
    workers: Optional[int],
    progress: bool,
) -> Tuple[int, float, float]:
    """
    Mean and standard error of ratios(points) over batches drawn from SeedSequence(seed) children.
    Batch statistics are merged in batch order, so the result does not depend on the thread count.
    """
    if dim < 1:
        raise DomainError(f"dimension must be positive, got {dim}")
    if n_samples < 2:
        raise DomainError(f"need at least 2 samples, got {n_samples}")
    n_batches = max(1, min(n_batches, n_samples))
    sizes = [n_samples // n_batches + (i < n_samples % n_batches) for i in range(n_batches)]
    streams = np.random.SeedSequence(seed).spawn(n_batches)

    def run_batch(i):
        rng = np.random.default_rng(streams[i])
        points = sampler.sample(rng, sizes[i])
        if points.shape != (sizes[i], dim):
            raise DomainError(f"sampler returned shape {points.shape}, expected {(sizes[i], dim)}")
        ratio = ratios(points)
        mean = float(np.mean(ratio))
        return sizes[i], mean, float(np.sum((ratio - mean) ** 2))

    with ThreadPoolExecutor(max_workers=resolve_threads(workers)) as pool:
        stats = list(tqdm(pool.map(run_batch, range(n_batches)), total=n_batches, disable=not progress))

    merged = (0, 0.0, 0.0)
    for batch in stats:
        merged = _combine(merged, batch)
    count, mean, m2 = merged
    return count, mean, math.sqrt(m2 / (count - 1)) / math.sqrt(count)


def mc_integrate(
    dim: int,
    sampler: ProposalSampler,
    integrand: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    seed: int,
    n_batches: int = MC_BATCHES,
    workers: Optional[int] = None,
    progress: bool = False,
) -> MCEstimate:
    """
    Importance-sampled estimate of int f(x) dx over R^dim.

    The sample budget is split into batches; batch i draws from its own generator spawned
    from SeedSequence(seed), and batch statistics are merged in batch order, so the estimate
    does not depend on the number of worker threads.
    """

    def ratios(points):
        density = np.asarray(sampler.density(points), dtype=float)
        values = np.asarray(integrand(points), dtype=float)
        if np.any((density <= 0) & (values != 0)):
            raise ZeroDensity("proposal density vanishes where the integrand does not")
        ratio = np.zeros(points.shape[0])
        positive = density > 0
        ratio[positive] = values[positive] / density[positive]
        return ratio

    count, mean, std_err = _run_batches(dim, sampler, ratios, n_samples, seed, n_batches, workers, progress)
    logger.debug(f"MC estimate {mean:.6e} +/- {std_err:.2e} from {count} samples (seed {seed})")
    return MCEstimate(mean=mean, std_err=std_err, n_samples=count, seed=seed)


def mc_integrate_log(
    dim: int,
    sampler: LogProposalSampler,
    log_integrand: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]],
    n_samples: int,
    seed: int,
    log_scale: float = 0.0,
    n_batches: int = MC_BATCHES,
    workers: Optional[int] = None,
    progress: bool = False,
) -> MCEstimate:
    """
    Importance-sampled estimate of int f(x) dx for integrands whose magnitude leaves the float range.

    Args:
        dim: dimension of the sample points.
        sampler: proposal with sample and log_density.
        log_integrand: returns (log|f|, sign(f)) per point; sign 0 marks f = 0.
        n_samples: total sample count.
        seed: master seed.
        log_scale: the weights are accumulated as f/(p e^{log_scale}) and the result is scaled back;
            choose it near log|int f| so the accumulated squares stay finite.
        n_batches: batches, one generator each.
        workers: thread cap.
        progress: show a progress bar.
    """

    def ratios(points):
        log_density = np.asarray(sampler.log_density(points), dtype=float)
        log_abs, sign = log_integrand(points)
        sign = np.asarray(sign, dtype=float)
        active = sign != 0
        if np.any(active & ~np.isfinite(log_density)):
            raise ZeroDensity("proposal density vanishes where the integrand does not")
        ratio = np.zeros(points.shape[0])
        with np.errstate(over="raise"):
            ratio[active] = sign[active] * np.exp(log_abs[active] - log_density[active] - log_scale)
        return ratio

    try:
        count, mean, std_err = _run_batches(dim, sampler, ratios, n_samples, seed, n_batches, workers, progress)
    except FloatingPointError as e:
        raise NonConvergence(f"importance weights overflow at log scale {log_scale:.6g}") from e
    try:
        scale = math.exp(log_scale)
    except OverflowError as e:
        raise DomainError(f"estimate at log scale {log_scale:.6g} exceeds the float range") from e
    logger.debug(f"MC estimate {mean * scale:.6e} +/- {std_err * scale:.2e} from {count} samples (seed {seed})")
    return MCEstimate(mean=mean * scale, std_err=std_err * scale, n_samples=count, seed=seed)


@dataclass(frozen=True)
class FormBreakdown:
    """Value of a charge form split as alpha term + diagonal + off-diagonal."""

    diagonal: float
    off_diagonal: float
    alpha_term: float = 0.0
    std_err: float = 0.0
    n_samples: int = 0
    seed: Optional[int] = None
    total: float = field(init=False)

    def __post_init__(self):
        if not self.std_err >= 0:
            raise DomainError(f"std_err must be nonnegative, got {self.std_err}")
        object.__setattr__(self, "total", self.alpha_term + self.diagonal + self.off_diagonal)

    def to_dict(self) -> Dict[str, Union[float, int, None]]:
        return {key: getattr(self, key) for key in FORM_KEYS}
