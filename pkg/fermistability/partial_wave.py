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

# Partial-wave forms: angular kernels, S_l(k), B_{l,k}, G_diag, G_off and F_zeta

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline
from scipy.special import betaln, gammaln
from tqdm import tqdm

from fermistability.constants import (
    DIRECT_SPACING,
    KERNEL_TABLE_COLUMNS,
    MELLIN_K_MAX,
    SERIES_K_MAX,
    SERIES_T_SPACING,
    SERIES_X_SPACING,
)
from fermistability.errors import DomainError, DuplicateChannel, MethodMismatch, TruncationWarning
from fermistability.numerics import (
    DEFAULT_LOG_GRID,
    DEFAULT_QUADRATURE,
    FormBreakdown,
    LogGrid,
    QuadratureConfig,
    RadialFunction,
    gauss_legendre,
    integrate_adaptive,
    legendre_table,
    mellin_sharp,
)
from fermistability.utils import resolve_threads, table_to_csv

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class OffDiagonalMethod(str, Enum):
    DIRECT = "direct"
    SERIES = "series"
    MELLIN = "mellin"


@dataclass(frozen=True)
class PartialWaveCharge:
    """A radial profile in the angular channel (l, m_z)."""

    l: int
    m_z: int
    radial: RadialFunction

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 0:
            raise DomainError(f"angular momentum must be a nonnegative integer, got {self.l}")
        if int(self.m_z) != self.m_z or abs(self.m_z) > self.l:
            raise DomainError(f"m_z must be an integer with |m_z| <= l, got l={self.l}, m_z={self.m_z}")

    @property
    def channel(self):
        return (self.l, self.m_z)


def _check_mass(m: float) -> None:
    if not m > 0:
        raise DomainError(f"mass ratio must be positive, got {m}")


def _check_zeta(zeta: float) -> None:
    if not zeta >= 0 or not math.isfinite(zeta):
        raise DomainError(f"zeta must be finite and nonnegative, got {zeta}")


def angular_order(m: float, extra: int = 0) -> int:
    """
    Gauss-Legendre order for y-integrals with a pole at |y| >= m + 1, chosen from the
    Bernstein-ellipse rate rho = (m+1) + sqrt(m(m+2)).
    """
    rho = (m + 1.0) + math.sqrt(m * (m + 2.0))
    return int(min(600, max(16, math.ceil(36.0 / (2.0 * math.log(rho))) + 4 + extra)))


def angular_kernel(l: int, p: ArrayLike, q: ArrayLike, zeta: float, m: float) -> ArrayLike:
    """
    int_{-1}^{1} dy P_l(y) / (p^2 + q^2 + 2pqy/(m+1) + zeta).
    """
    _check_mass(m)
    _check_zeta(zeta)
    p_arr, q_arr = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if np.any(p_arr <= 0) or np.any(q_arr <= 0):
        raise DomainError("angular kernel needs p > 0 and q > 0")
    y, w = gauss_legendre(angular_order(m, extra=2 * l))
    coeff = w * legendre_table(l, y)[l]
    base = p_arr**2 + q_arr**2 + zeta
    slope = 2.0 * p_arr * q_arr / (m + 1.0)
    out = np.zeros(np.broadcast(base, slope).shape)
    for y_j, c_j in zip(y, coeff):
        out = out + c_j / (base + slope * y_j)
    if out.ndim == 0:
        return float(out)
    return out


def _sinh_ratio(k: np.ndarray, a: np.ndarray) -> np.ndarray:
    # sinh(k a) / sinh(pi k / 2) for k >= 0, limit 2a/pi at k = 0
    abs_a = np.abs(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(k * (abs_a - 0.5 * np.pi)) * np.expm1(-2.0 * k * abs_a) / np.expm1(-np.pi * k)
    ratio = np.where(k == 0, 2.0 * abs_a / np.pi, ratio)
    return np.sign(a) * ratio


def _cosh_ratio(k: np.ndarray, a: np.ndarray) -> np.ndarray:
    abs_a = np.abs(a)
    return np.exp(k * (abs_a - 0.5 * np.pi)) * (1.0 + np.exp(-2.0 * k * abs_a)) / (1.0 + np.exp(-np.pi * k))


def s_kernel(l: int, k: ArrayLike, m: float, n_fermions: int, k_bound: Optional[float] = None) -> ArrayLike:
    """
    Symbol S_l(k) of the off-diagonal form at zeta = 0 after the sharp transform.

    With a(y) = arcsin(y/(m+1)):
        l odd:  S_l(k) = -pi^2 (N-1) int dy P_l(y) sinh(k a) / (cos a sinh(pi k / 2))
        l even: S_l(k) = +pi^2 (N-1) int dy P_l(y) cosh(k a) / (cos a cosh(pi k / 2))
    S_l is even in k. The quadrature order grows with k_bound, which defaults to max |k|;
    fixing it makes each value independent of the other entries of k.
    """
    _check_mass(m)
    if l < 0:
        raise DomainError(f"angular momentum must be nonnegative, got {l}")
    k_arr = np.abs(np.atleast_1d(np.asarray(k, dtype=float)))
    if k_bound is None:
        k_bound = float(np.max(k_arr, initial=0.0))
    c = m + 1.0
    y, w = gauss_legendre(angular_order(m, extra=2 * l + int(2 * k_bound)))
    a = np.arcsin(y / c)
    weight = w * legendre_table(l, y)[l] / np.sqrt(1.0 - (y / c) ** 2)
    kk = k_arr[:, None]
    if l % 2:
        values = -(np.pi**2) * (n_fermions - 1) * np.sum(_sinh_ratio(kk, a[None, :]) * weight, axis=1)
    else:
        values = np.pi**2 * (n_fermions - 1) * np.sum(_cosh_ratio(kk, a[None, :]) * weight, axis=1)
    if np.ndim(k) == 0:
        return float(values[0])
    return values.reshape(np.shape(k))


def s_kernel_closed_form(l: int, m: float, n_fermions: int) -> float:
    """S_0(0) and S_1(0) in closed form."""
    _check_mass(m)
    arcsin_term = math.atan2(1.0, math.sqrt(m * (m + 2.0)))
    if l == 0:
        return 2.0 * math.pi**2 * (n_fermions - 1) * (m + 1.0) * arcsin_term
    if l == 1:
        return -4.0 * math.pi * (n_fermions - 1) * (m + 1.0) * (1.0 - math.sqrt(m * (m + 2.0)) * arcsin_term)
    raise DomainError(f"closed form at k = 0 is available for l in (0, 1), got {l}")


@dataclass(frozen=True)
class KernelTable:
    l: int
    k_values: np.ndarray
    s_values: np.ndarray
    m: float
    n_fermions: int

    def to_frame(self) -> pd.DataFrame:
        size = len(self.k_values)
        return pd.DataFrame(
            {
                "l": [self.l] * size,
                "m": [float(self.m)] * size,
                "N": [self.n_fermions] * size,
                "k": self.k_values,
                "S_l_k": self.s_values,
            },
            columns=KERNEL_TABLE_COLUMNS,
        )

    def to_csv(self, output_path: Optional[str] = None) -> str:
        return table_to_csv(self.to_frame(), output_path)


def kernel_table(
    l: int, m: float, n_fermions: int, k_max: float, steps: int, workers: Optional[int] = None, progress: bool = False
) -> KernelTable:
    """S_l on the uniform grid 0, k_max/steps, ..., k_max."""
    if steps < 1 or not k_max > 0:
        raise DomainError(f"need k_max > 0 and steps >= 1, got k_max={k_max}, steps={steps}")
    k_values = np.linspace(0.0, k_max, steps + 1)
    chunks = np.array_split(k_values, max(1, min(len(k_values), 4 * resolve_threads(workers))))
    with ThreadPoolExecutor(max_workers=resolve_threads(workers)) as pool:
        parts = list(
            tqdm(
                pool.map(lambda chunk: s_kernel(l, chunk, m, n_fermions, k_bound=k_max), chunks),
                total=len(chunks),
                disable=not progress,
            )
        )
    return KernelTable(l=l, k_values=k_values, s_values=np.concatenate(parts), m=m, n_fermions=n_fermions)


def b_coeff(l: int, k: int, m: float, n_fermions: int) -> float:
    """
    B_{l,k} = 2 pi (N-1) / (2^l l! k!) (-2/(m+1))^k int (1-y^2)^l (d/dy)^l y^k dy.

    The derivative is k!/(k-l)! y^{k-l}, and for even j = k - l
    int_{-1}^{1} (1-y^2)^l y^j dy = B((j+1)/2, l+1), so
    B_{l,k} = 2 pi (N-1) (-2/(m+1))^k B((j+1)/2, l+1) / (2^l l! (k-l)!).
    """
    _check_mass(m)
    if l < 0 or k < 0:
        raise DomainError(f"B coefficients need l, k >= 0, got l={l}, k={k}")
    if k < l or (k - l) % 2:
        return 0.0
    j = k - l
    log_value = (
        math.log(2.0 * math.pi * (n_fermions - 1))
        + k * math.log(2.0 / (m + 1.0))
        - l * math.log(2.0)
        - gammaln(l + 1)
        - gammaln(j + 1)
        + betaln((j + 1) / 2.0, l + 1)
    )
    return (-1.0) ** k * math.exp(log_value)


def diagonal_integral(g: RadialFunction, coefficient: float, zeta: float) -> float:
    """int dp p^2 sqrt(coefficient p^2 + zeta) |g|^2."""
    if not coefficient > 0:
        raise DomainError(f"kinetic coefficient must be positive, got {coefficient}")
    _check_zeta(zeta)
    x = g.nodes
    if zeta > 0:
        # sqrt(c + zeta e^{-2x}) without overflow
        weight = np.exp(0.5 * np.logaddexp(math.log(coefficient), math.log(zeta) - 2.0 * x))
    else:
        weight = np.full(x.shape, math.sqrt(coefficient))
    return g.integrate_density(weight)


def g_diag(g: RadialFunction, zeta: float, m: float) -> float:
    """G_diag = 2 pi^2 int dp p^2 sqrt(m(m+2)p^2/(m+1)^2 + zeta) |g|^2."""
    _check_mass(m)
    return 2.0 * math.pi**2 * diagonal_integral(g, m * (m + 2.0) / (m + 1.0) ** 2, zeta)


def _banded_double_integral(
    r: RadialFunction,
    kernel: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    band: float,
    workers: Optional[int] = None,
    block: int = 128,
) -> float:
    """
    sum_ij w_i h_i K(x_i, x_j) w_j h_j for kernels negligible beyond |x_i - x_j| > band.
    """
    x = r.nodes
    wh = r.grid.weights * r.weighted
    starts = list(range(0, x.size, block))

    def rows(start):
        stop = min(x.size, start + block)
        lo = int(np.searchsorted(x, x[start] - band, side="left"))
        hi = int(np.searchsorted(x, x[stop - 1] + band, side="right"))
        kern = kernel(x[start:stop, None] - x[None, lo:hi], x[start:stop, None], x[None, lo:hi])
        return float(wh[start:stop] @ kern @ wh[lo:hi])

    with ThreadPoolExecutor(max_workers=resolve_threads(workers)) as pool:
        parts = list(pool.map(rows, starts))
    return math.fsum(parts)


def _off_direct(
    g: RadialFunction, l: int, zeta: float, m: float, n_fermions: int, spacing: float, workers: Optional[int] = None
) -> float:
    r = g.on_window(spacing)
    y, w = gauss_legendre(angular_order(m, extra=2 * l))
    coeff = w * legendre_table(l, y)[l]
    slope = 2.0 / (m + 1.0)

    # in x = log p the kernel is e^{-x1-x2} int dy P_l / (2 cosh(x1-x2) + slope y + zeta e^{-x1-x2})
    def kernel(d, x1, x2):
        base = 2.0 * np.cosh(d)
        if zeta > 0:
            with np.errstate(over="ignore"):
                base = base + zeta * np.exp(-(x1 + x2))
        out = np.zeros(base.shape)
        for y_j, c_j in zip(y, coeff):
            out += c_j / (base + slope * y_j)
        return out

    band = 40.0 / (l + 1) + 2.0
    return 2.0 * math.pi * (n_fermions - 1) * _banded_double_integral(r, kernel, band, workers)


def _laplace_square(r: RadialFunction, k: int, zeta: float) -> float:
    """
    int dnu nu^k e^{-zeta nu} |int dp g p^{2+k} e^{-nu p^2}|^2 with nu = e^t, which in x = log p reads
    int dt [int dx h(x) exp((k+1)(x + t/2) - e^{t+2x} - zeta e^t / 2)]^2.
    """
    x = r.nodes
    wh = r.grid.weights * r.weighted
    s_peak = 0.5 * math.log((k + 1) / 2.0)
    t_lo = 2.0 * (s_peak - 40.0 / (k + 1) - 2.0 - x[-1])
    t_hi = 2.0 * (s_peak + 4.0 - x[0])
    if zeta > 0:
        t_hi = min(t_hi, math.log(90.0 / zeta))
    if t_hi <= t_lo:
        return 0.0
    t_grid = LogGrid.with_spacing(t_lo, t_hi, SERIES_T_SPACING)
    t, wt = t_grid.nodes, t_grid.weights
    total = 0.0
    for start in range(0, t.size, 512):
        tb = t[start : start + 512, None]
        with np.errstate(over="ignore", under="ignore"):
            exponent = (k + 1) * (x[None, :] + 0.5 * tb) - np.exp(tb + 2.0 * x[None, :]) - 0.5 * zeta * np.exp(tb)
            inner = np.exp(exponent) @ wh
        total += float(np.dot(wt[start : start + 512], inner**2))
    return total


def series_term(g: RadialFunction, l: int, k: int, zeta: float, m: float, n_fermions: int) -> float:
    """The k-th term B_{l,k} int dnu nu^k e^{-zeta nu} |int dp g p^{2+k} e^{-nu p^2}|^2."""
    b = b_coeff(l, k, m, n_fermions)
    if b == 0.0:
        return 0.0
    return b * _laplace_square(g.on_window(SERIES_X_SPACING), k, zeta)


def series_term_double(g: RadialFunction, l: int, k: int, zeta: float, m: float, n_fermions: int) -> float:
    """
    The same term as B_{l,k} k! int int dp dq p^{2+k} g(p) q^{2+k} g(q) / (p^2 + q^2 + zeta)^{k+1}.
    """
    b = b_coeff(l, k, m, n_fermions)
    if b == 0.0:
        return 0.0
    r = g.on_window(DIRECT_SPACING)

    def kernel(d, x1, x2):
        with np.errstate(over="ignore", under="ignore"):
            return 1.0 / (2.0 * np.cosh(d) + zeta * np.exp(-(x1 + x2))) ** (k + 1)

    return b * math.exp(gammaln(k + 1)) * _banded_double_integral(r, kernel, 40.0 / (k + 1) + 2.0)


def _off_series(
    g: RadialFunction, l: int, zeta: float, m: float, n_fermions: int, k_max: int, tol: float
) -> float:
    if k_max < l:
        raise DomainError(f"series truncation k_max={k_max} must be at least l={l}")
    r = g.on_window(SERIES_X_SPACING)
    terms = []
    for k in range(l, k_max + 1, 2):
        b = b_coeff(l, k, m, n_fermions)
        terms.append(b * _laplace_square(r, k, zeta))
    value = math.fsum(terms)
    # consecutive terms of equal parity shrink at least like (m+1)^{-2}
    ratio = 1.0 / (m + 1.0) ** 2
    tail = abs(terms[-1]) * ratio / (1.0 - ratio)
    if tail > tol * abs(value):
        message = f"series for l={l} truncated at k_max={k_max} has tail bound {tail:.3e} (value {value:.6e})"
        logger.warning(message)
        warnings.warn(message, TruncationWarning)
    return value


def _off_mellin(
    g: RadialFunction, l: int, m: float, n_fermions: int, k_max: float, cfg: QuadratureConfig
) -> float:
    r = g.on_window(min(g.grid.spacing, 0.25 / k_max))

    def integrand(k):
        return s_kernel(l, k, m, n_fermions) * np.abs(mellin_sharp(r, k)) ** 2

    # S_l and |g#|^2 are both even in k
    return 2.0 * integrate_adaptive(integrand, 0.0, k_max, cfg)


def g_off(
    g: RadialFunction,
    l: int,
    zeta: float,
    m: float,
    n_fermions: int,
    method: Union[str, OffDiagonalMethod] = OffDiagonalMethod.DIRECT,
    k_max: Optional[Union[int, float]] = None,
    tol: float = 1e-6,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    workers: Optional[int] = None,
) -> float:
    """
    Off-diagonal form G_off_{zeta,l}[g] = 2 pi (N-1) int int dp dq p^2 g(p) q^2 g(q) K_l(p, q)
    with K_l the angular kernel.

    Args:
        g: radial profile.
        l: angular momentum of the channel.
        zeta: spectral parameter, zeta >= 0.
        m: mass ratio.
        n_fermions: fermion count N.
        method: "direct" (banded double integral), "series" (expansion in B_{l,k}, truncated at
            k_max) or "mellin" (sharp transform against S_l, zeta = 0 only, |k| <= k_max).
        k_max: truncation of the series or of the k-integration.
        tol: relative tolerance of the series tail before a TruncationWarning is issued.
        cfg: quadrature configuration of the k-integration.
        workers: thread cap for the direct double integral.

    Returns:
        the value of the form.
    """
    _check_mass(m)
    _check_zeta(zeta)
    method = OffDiagonalMethod(method)
    if method is OffDiagonalMethod.DIRECT:
        return _off_direct(g, l, zeta, m, n_fermions, DIRECT_SPACING, workers)
    if method is OffDiagonalMethod.SERIES:
        return _off_series(g, l, zeta, m, n_fermions, SERIES_K_MAX if k_max is None else int(k_max), tol)
    if zeta > 0:
        raise MethodMismatch(f"the Mellin method diagonalizes zeta = 0 only, got zeta={zeta}")
    return _off_mellin(g, l, m, n_fermions, MELLIN_K_MAX if k_max is None else float(k_max), cfg)


def f_form(
    charges: Sequence[PartialWaveCharge],
    zeta: float,
    m: float,
    n_fermions: int,
    method: Union[str, OffDiagonalMethod] = OffDiagonalMethod.DIRECT,
    workers: Optional[int] = None,
) -> FormBreakdown:
    """F_zeta as the sum over channels of G_diag + G_off."""
    seen = set()
    for charge in charges:
        if charge.channel in seen:
            raise DuplicateChannel(f"channel (l, m_z) = {charge.channel} appears twice")
        seen.add(charge.channel)
    diagonal = math.fsum(g_diag(c.radial, zeta, m) for c in charges)
    off_diagonal = math.fsum(g_off(c.radial, c.l, zeta, m, n_fermions, method, workers=workers) for c in charges)
    return FormBreakdown(diagonal=diagonal, off_diagonal=off_diagonal)


def _log_gauss_l1(x):
    # h(x) for g(p) = p exp(-p^2)
    return np.exp(3.0 * x - np.exp(2.0 * x))


def _log_exp_p2(x):
    # h(x) for g(p) = p^2 exp(-p)
    return np.exp(4.0 * x - np.exp(x))


def builtin_charge(name: str, grid: LogGrid = DEFAULT_LOG_GRID) -> PartialWaveCharge:
    """
    Named unit-norm charges: "gauss-l1", "exp-p2" and "q-gamma:<gamma>", all in the l=1, m_z=0 channel.
    """
    if name == "gauss-l1":
        radial = RadialFunction.from_log_profile(_log_gauss_l1, grid).normalized()
    elif name == "exp-p2":
        radial = RadialFunction.from_log_profile(_log_exp_p2, grid).normalized()
    elif name.startswith("q-gamma:"):
        from fermistability.trials import q_gamma_radial

        try:
            gamma = float(name.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"cannot parse gamma in charge name {name!r}")
        radial = q_gamma_radial(gamma)
    else:
        raise DomainError(f"unknown charge {name!r}")
    return PartialWaveCharge(l=1, m_z=0, radial=radial)


def load_charge_csv(path: str, l: int = 1, m_z: int = 0, grid: LogGrid = DEFAULT_LOG_GRID) -> PartialWaveCharge:
    """
    Two-column CSV of (p, g(p)), with or without a header row, interpolated in log p.
    """
    table = pd.read_csv(path, header=None).apply(pd.to_numeric, errors="coerce").dropna()
    if table.shape[1] < 2 or len(table) < 4:
        raise DomainError(f"{path} must hold at least 4 rows of two numeric columns")
    p = table.iloc[:, 0].to_numpy(dtype=float)
    g = table.iloc[:, 1].to_numpy(dtype=float)
    if np.any(p <= 0) or np.any(np.diff(p) <= 0):
        raise DomainError(f"momenta in {path} must be positive and strictly increasing")
    x = np.log(p)
    spline = CubicSpline(x, p**2 * g)
    lo, hi = max(x[0], grid.x_min), min(x[-1], grid.x_max)
    if not lo < hi:
        raise DomainError(f"momenta in {path} do not overlap the grid [{grid.x_min}, {grid.x_max}]")
    logger.info(f"Loaded charge with {len(p)} samples from {path}")
    return PartialWaveCharge(l=l, m_z=m_z, radial=RadialFunction.from_log_profile(spline, grid, (x[0], x[-1])))
