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

# Trial charges Q_{n,gamma}, bump orbitals, the Slater charge, the scaling evaluation of F_1
# and the instability scan

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import erf, erfcx
from tqdm import tqdm

from fermistability.constants import (
    DIVERGENCE_RATIO_WINDOW,
    MC_TREND_SIGMAS,
    SCAN_COLUMNS,
    SCALING_CHECK_MAX_N,
    TRIAL_LAMBDA,
    TRIAL_WINDOW_WIDTH,
)
from fermistability.errors import BadProfile, DomainError, SupportOverlap
from fermistability.numerics import (
    DEFAULT_QUADRATURE,
    FormBreakdown,
    LogGrid,
    QuadratureConfig,
    RadialFunction,
    gauss_legendre,
    integrate_adaptive,
)
from fermistability.partial_wave import OffDiagonalMethod, PartialWaveCharge, f_form, g_diag, g_off
from fermistability.stability import lambda_param
from fermistability.utils import resolve_threads, table_to_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialParams:
    """
    Dilation n >= 1, width gamma in (0, 1), bump scale beta in (0, 1] with beta <= n (default n^-2)
    and the azimuthal phase ell >= 1 of the first bump orbital.
    """

    n: float
    gamma: float
    beta: Optional[float] = None
    ell: int = 2

    def __post_init__(self):
        if not self.n >= 1 or not math.isfinite(self.n):
            raise DomainError(f"dilation n must be >= 1, got {self.n}")
        if not 0 < self.gamma < 1:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.beta is None:
            object.__setattr__(self, "beta", self.n**-2)
        if not 0 < self.beta <= 1:
            raise DomainError(f"beta must lie in (0, 1], got {self.beta}")
        if self.beta > self.n:
            raise SupportOverlap(f"beta={self.beta} exceeds n={self.n}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise DomainError(f"bump phase ell must be an integer >= 1, got {self.ell}")


def _check_gamma(gamma: float) -> None:
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")


def c_gamma_norm(gamma: float) -> float:
    """Squared normalization c_gamma^2 = 2 / (1 + erf(1/(2 gamma)))."""
    _check_gamma(gamma)
    return 2.0 / (1.0 + float(erf(1.0 / (2.0 * gamma))))


def _log_amplitude(gamma: float) -> float:
    # log of pi^{-1/4} c_gamma gamma^{1/2} e^{-1/(8 gamma^2)}
    return -0.25 * math.log(math.pi) + 0.5 * math.log(c_gamma_norm(gamma)) + 0.5 * math.log(gamma) - 1.0 / (
        8.0 * gamma**2
    )


def q_gamma(p, gamma: float):
    """
    Q_gamma(p) = pi^{-1/4} c_gamma gamma^{1/2} p^{-1} e^{-1/(8 gamma^2)} e^{-gamma^2 (log p)^2 / 2} for p >= 1, else 0.
    """
    _check_gamma(gamma)
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0):
        raise DomainError("Q_gamma is evaluated at p > 0")
    x = np.log(np.maximum(p_arr, 1.0))
    value = np.where(p_arr >= 1.0, np.exp(_log_amplitude(gamma) - x - 0.5 * gamma**2 * x**2), 0.0)
    return float(value) if value.ndim == 0 else value


def q_moment(gamma: float, a: float) -> float:
    """int_0^inf p^{2+a} |Q_gamma(p)|^2 dp = c^2/2 (1 + erf((1+a)/(2 gamma))) exp((2a + a^2)/(4 gamma^2))."""
    _check_gamma(gamma)
    if a < -1:
        raise DomainError(f"moment order must be >= -1, got {a}")
    return (
        0.5
        * c_gamma_norm(gamma)
        * (1.0 + float(erf((1.0 + a) / (2.0 * gamma))))
        * math.exp((2.0 * a + a * a) / (4.0 * gamma**2))
    )


@lru_cache(maxsize=128)
def q_gamma_radial(gamma: float, n: float = 1.0, spacing: float = 0.01) -> RadialFunction:
    """
    Radial profile n^{-3/2} Q_gamma(p/n) on a log grid starting at the cut p = n and covering
    both the norm density (centred at x = 1/(2 gamma^2)) and the energy density (x = 1/gamma^2).
    """
    _check_gamma(gamma)
    log_c = _log_amplitude(gamma)

    def h(x):
        # e^{2x} Q_gamma(e^x)
        x = np.asarray(x, dtype=float)
        return np.exp(log_c + x - 0.5 * gamma**2 * x**2)

    width = TRIAL_WINDOW_WIDTH / gamma
    x_lo = max(0.0, 0.5 / gamma**2 - width)
    x_hi = 1.0 / gamma**2 + width
    base = RadialFunction.from_log_profile(h, LogGrid.with_spacing(x_lo, x_hi, spacing), support=(0.0, np.inf))
    if n == 1.0:
        return base
    return base.dilate(math.log(n), math.sqrt(n))


def trial_charge_q(params: TrialParams) -> PartialWaveCharge:
    """Q_{n,gamma} in the (l=1, m_z=0) channel."""
    return PartialWaveCharge(l=1, m_z=0, radial=q_gamma_radial(params.gamma, params.n))


def q_gamma_sharp(k, gamma: float):
    """
    Closed form of the sharp transform of Q_gamma:
    (2 pi)^{-1/2} int_0^inf dx e^{-ikx} C e^{x - gamma^2 x^2 / 2} = C / (2 gamma) erfcx((ik - 1) / (sqrt(2) gamma)).
    """
    _check_gamma(gamma)
    k_arr = np.asarray(k, dtype=float)
    z = (1j * k_arr - 1.0) / (math.sqrt(2.0) * gamma)
    value = math.exp(_log_amplitude(gamma)) / (2.0 * gamma) * erfcx(z)
    return complex(value) if value.ndim == 0 else value


def sharp_leading_gaussian(k, gamma: float):
    """(c_gamma^2 / (sqrt(pi) gamma)) e^{3/(4 gamma^2)} e^{-k^2/gamma^2}."""
    k_arr = np.asarray(k, dtype=float)
    return c_gamma_norm(gamma) / (math.sqrt(math.pi) * gamma) * np.exp(0.75 / gamma**2 - k_arr**2 / gamma**2)


def sharp_gaussian_residual(k, gamma: float):
    return np.abs(q_gamma_sharp(k, gamma)) ** 2 - sharp_leading_gaussian(k, gamma)


def _sharp_density(k, gamma: float):
    return np.abs(q_gamma_sharp(k, gamma)) ** 2


def sharp_norm_squared(gamma: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """int dk |Q#_gamma(k)|^2 from the closed form."""
    # the Gaussian core has width gamma and is integrated on its own panel
    core = 10.0 * gamma
    body = integrate_adaptive(lambda k: _sharp_density(k, gamma), 0.0, core, cfg)
    return 2.0 * (body + integrate_adaptive(lambda k: _sharp_density(k, gamma), core, np.inf, cfg))


def sqrt_k_moment(gamma: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """
    int dk sqrt|k| |Q#_gamma(k)|^2. Beyond K = 50/gamma the integrand is replaced by its jump
    asymptote |h(0)|^2 / (2 pi k^2).
    """
    core, cut = 10.0 * gamma, 50.0 / gamma
    body = math.fsum(
        integrate_adaptive(lambda k: np.sqrt(k) * _sharp_density(k, gamma), lo, hi, cfg)
        for lo, hi in ((0.0, core), (core, cut))
    )
    jump = math.exp(2.0 * _log_amplitude(gamma))
    return 2.0 * (body + jump / (math.pi * math.sqrt(cut)))


class BumpProfile:
    """
    Xi(k) = C exp(-1/(k(1-k))) on (0, 1), normalized so int_0^1 k^2 Xi^2 dk = 1.
    """

    def __init__(self, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
        self.constant = 1.0
        norm = integrate_adaptive(lambda k: k**2 * self(k) ** 2, 0.0, 1.0, cfg)
        self.constant = 1.0 / math.sqrt(norm)

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        inside = (k > 0) & (k < 1)
        safe = np.where(inside, k, 0.5)
        return np.where(inside, self.constant * np.exp(-1.0 / (safe * (1.0 - safe))), 0.0)


@lru_cache(maxsize=1)
def default_bump_profile() -> BumpProfile:
    return BumpProfile()


_Y10 = math.sqrt(3.0 / (4.0 * math.pi))


def _spherical(kvecs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    kvecs = np.asarray(kvecs, dtype=float)
    k = np.sqrt(np.sum(kvecs**2, axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_theta = np.where(k > 0, kvecs[..., 2] / k, 1.0)
    phi = np.arctan2(kvecs[..., 1], kvecs[..., 0])
    return k, cos_theta, phi


@dataclass(frozen=True)
class QOrbital:
    """Q_{n,gamma}(k) = n^{-3/2} Q_gamma(|k|/n) Y_1^0(k)."""

    gamma: float
    n: float

    @property
    def radial_support(self) -> Tuple[float, float]:
        return (self.n, np.inf)

    def radial(self, k):
        k = np.asarray(k, dtype=float)
        return self.n**-1.5 * q_gamma(np.maximum(k, np.finfo(float).tiny) / self.n, self.gamma)

    def log_radial(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """(log|radial|, sign) at |k| = e^x; the log is -inf below the cut |k| = n."""
        y = np.asarray(x, dtype=float) - math.log(self.n)
        inside = y >= 0
        y = np.where(inside, y, 0.0)
        offset = _log_amplitude(self.gamma) - 1.5 * math.log(self.n)
        log_abs = np.where(inside, offset - y - 0.5 * self.gamma**2 * y**2, -np.inf)
        return log_abs, inside.astype(float)

    def angular(self, cos_theta, phi):
        return _Y10 * np.asarray(cos_theta, dtype=float) + 0j

    def __call__(self, kvecs):
        k, cos_theta, phi = _spherical(kvecs)
        return self.radial(k) * self.angular(cos_theta, phi)


@dataclass(frozen=True)
class BumpOrbital:
    """Xi_{beta,l}(k) = (4 pi)^{-1/2} beta^{-3/2} Xi(|k|/beta) e^{i l phi}."""

    beta: float
    ell: int
    profile: Callable = field(default=None, compare=False, repr=False)

    @property
    def radial_support(self) -> Tuple[float, float]:
        return (0.0, self.beta)

    def radial(self, k):
        return self.beta**-1.5 * self.profile(np.asarray(k, dtype=float) / self.beta)

    def log_radial(self, x) -> Tuple[np.ndarray, np.ndarray]:
        with np.errstate(over="ignore"):
            value = np.asarray(self.radial(np.exp(np.asarray(x, dtype=float))), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(value)), np.sign(value)

    def angular(self, cos_theta, phi):
        return np.exp(1j * self.ell * np.asarray(phi, dtype=float)) / math.sqrt(4.0 * math.pi)

    def __call__(self, kvecs):
        k, cos_theta, phi = _spherical(kvecs)
        return self.radial(k) * self.angular(cos_theta, phi)


def bump_charge_xi(
    beta: float, ell: int, profile: Optional[Callable] = None, cfg: QuadratureConfig = DEFAULT_QUADRATURE
) -> BumpOrbital:
    """
    Bump orbital of scale beta and azimuthal phase ell. The profile must vanish outside (0, 1) and
    satisfy int_0^1 k^2 Xi^2 dk = 1, both to 1e-10.
    """
    if not 0 < beta <= 1:
        raise DomainError(f"beta must lie in (0, 1], got {beta}")
    if int(ell) != ell or ell < 1:
        raise DomainError(f"ell must be an integer >= 1, got {ell}")
    profile = default_bump_profile() if profile is None else profile
    outside = np.concatenate([np.linspace(1.0, 4.0, 61), -np.linspace(0.0, 1.0, 11)[1:]])
    if np.max(np.abs(profile(outside))) > 1e-10:
        raise BadProfile("bump profile does not vanish outside (0, 1)")
    norm = integrate_adaptive(lambda k: k**2 * profile(k) ** 2, 0.0, 1.0, cfg)
    if abs(norm - 1.0) > 1e-10:
        raise BadProfile(f"bump profile has int k^2 Xi^2 = {norm:.12g}, expected 1")
    return BumpOrbital(beta=beta, ell=int(ell), profile=profile)


def orbital_overlap(a, b, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> complex:
    """
    <a, b> = int d^3k conj(a) b for separable orbitals; exactly 0 when radial supports are disjoint.
    """
    lo = max(a.radial_support[0], b.radial_support[0])
    hi = min(a.radial_support[1], b.radial_support[1])
    if not lo < hi:
        return 0.0 + 0.0j
    radial = integrate_adaptive(lambda k: k**2 * a.radial(k) * b.radial(k), lo, hi, cfg)
    # Gauss-Legendre in cos(theta), trapezoid in phi: exact on the low-order harmonics used here
    cos_theta, w_theta = gauss_legendre(16)
    phi = 2.0 * np.pi * np.arange(64) / 64
    ct, ph = np.meshgrid(cos_theta, phi, indexing="ij")
    integrand = np.conj(a.angular(ct, ph)) * b.angular(ct, ph)
    angular = complex(np.sum(w_theta[:, None] * integrand) * (2.0 * np.pi / 64))
    return radial * angular


@dataclass(frozen=True)
class SlaterCharge:
    """
    xi(k_1, ..., k_{N-1}) = det[phi_j(k_i)] / sqrt((N-1)!) over the orbitals
    [Q_{n,gamma}, Xi_{beta,ell}, Xi_{beta,ell+1}, ...].
    """

    params: TrialParams
    n_fermions: int
    orbitals: Tuple

    def __call__(self, kvecs) -> np.ndarray:
        kvecs = np.asarray(kvecs, dtype=float)
        size = self.n_fermions - 1
        if kvecs.shape[-2:] != (size, 3):
            raise DomainError(f"expected momenta of shape (..., {size}, 3), got {kvecs.shape}")
        if size == 2:
            q, xi = self.orbitals
            first, second = kvecs[..., 0, :], kvecs[..., 1, :]
            # written out so that swapping arguments negates the value exactly
            return (q(first) * xi(second) - q(second) * xi(first)) / math.sqrt(2.0)
        rows = [np.stack([orb(kvecs[..., i, :]) for orb in self.orbitals], axis=-1) for i in range(size)]
        matrix = np.stack(rows, axis=-2)
        return np.linalg.det(matrix) / math.sqrt(math.factorial(size))

    def log_evaluate(self, x, cos_theta, phi) -> Tuple[np.ndarray, np.ndarray]:
        """
        xi at momenta with log-magnitudes x and directions (cos_theta, phi), each of shape (..., N-1),
        returned as (log_scale, scaled) with xi = e^{log_scale} * scaled. Every row of the determinant
        is divided by its largest entry, so momenta far outside the float range are handled.
        """
        size = self.n_fermions - 1
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != size:
            raise DomainError(f"expected {size} momenta along the last axis, got {x.shape}")
        logs, entries = [], []
        for orbital in self.orbitals:
            log_abs, sign = orbital.log_radial(x)
            logs.append(log_abs)
            entries.append(sign * orbital.angular(cos_theta, phi))
        # [..., i, j] holds orbital j at momentum i
        logs = np.stack(logs, axis=-1)
        row_max = np.max(logs, axis=-1)
        row_max = np.where(np.isfinite(row_max), row_max, 0.0)
        matrix = np.stack(entries, axis=-1) * np.exp(logs - row_max[..., None])
        if size == 2:
            det = matrix[..., 0, 0] * matrix[..., 1, 1] - matrix[..., 1, 0] * matrix[..., 0, 1]
        else:
            det = np.linalg.det(matrix)
        return np.sum(row_max, axis=-1) - 0.5 * math.log(math.factorial(size)), det


def slater_charge(params: TrialParams, n_fermions: int) -> SlaterCharge:
    if n_fermions < 3:
        raise DomainError(f"a Slater charge needs N >= 3, got {n_fermions}")
    if params.beta > params.n:
        raise SupportOverlap(f"bump scale beta={params.beta} overlaps the Q support starting at n={params.n}")
    bumps = [bump_charge_xi(params.beta, params.ell + i) for i in range(n_fermions - 2)]
    orbitals = tuple([QOrbital(params.gamma, params.n)] + bumps)
    return SlaterCharge(params=params, n_fermions=n_fermions, orbitals=orbitals)


def f1_direct(params: TrialParams, m: float, n_fermions: int, workers: Optional[int] = None) -> FormBreakdown:
    """F_1[Q_{n,gamma}] evaluated on the dilated charge itself."""
    return f_form([trial_charge_q(params)], TRIAL_LAMBDA, m, n_fermions, workers=workers)


def f1_trial_energy(
    params: TrialParams,
    m: float,
    n_fermions: int,
    freeze_zeta: bool = False,
    verify: Optional[bool] = None,
    workers: Optional[int] = None,
) -> FormBreakdown:
    """
    F_1[Q_{n,gamma}] = n (G_diag_{zeta}[Q_gamma] + G_off_{zeta,1}[Q_gamma]) with zeta = n^{-2}.

    Args:
        params: trial parameters (beta and ell are not used).
        m: mass ratio.
        n_fermions: fermion count N, entering through the (N-1) factor of G_off.
        freeze_zeta: evaluate at zeta = 0, which makes the result exactly linear in n.
        verify: also evaluate F_1 on the dilated charge and log the relative mismatch. The default
            checks every n <= SCALING_CHECK_MAX_N.
        workers: thread cap for the double integral.
    """
    radial = q_gamma_radial(params.gamma)
    zeta = 0.0 if freeze_zeta else TRIAL_LAMBDA / params.n**2
    diagonal = params.n * g_diag(radial, zeta, m)
    off_diagonal = params.n * g_off(radial, 1, zeta, m, n_fermions, OffDiagonalMethod.DIRECT, workers=workers)
    result = FormBreakdown(diagonal=diagonal, off_diagonal=off_diagonal)
    if verify is None:
        verify = params.n <= SCALING_CHECK_MAX_N
    if verify and not freeze_zeta:
        direct = f1_direct(params, m, n_fermions, workers=workers)
        mismatch = abs(direct.total - result.total) / max(abs(result.total), np.finfo(float).tiny)
        level = logging.WARNING if mismatch > 1e-6 else logging.DEBUG
        logger.log(level, f"scaling check at n={params.n}, gamma={params.gamma}: relative mismatch {mismatch:.2e}")
    return result


class Verdict(str, Enum):
    DIVERGING = "Diverging"
    BOUNDED = "Bounded"
    INCONCLUSIVE = "Inconclusive"


def classify_energies(n_values: Sequence[float], totals: Sequence[float]) -> Verdict:
    """
    Diverging: every E(n) < 0, strictly decreasing, and E(2n)/E(n) within the ratio window on each
    doubling pair of the list. Bounded: every E(n) >= 0. Otherwise Inconclusive.
    """
    totals = np.asarray(totals, dtype=float)
    if np.all(totals >= 0):
        return Verdict.BOUNDED
    if np.all(totals < 0) and np.all(np.diff(totals) < 0):
        lo, hi = DIVERGENCE_RATIO_WINDOW
        ratios = []
        for i, n in enumerate(n_values):
            for j in range(i + 1, len(n_values)):
                if math.isclose(n_values[j], 2.0 * n, rel_tol=1e-12):
                    ratios.append(totals[j] / totals[i])
        if ratios and all(lo <= r <= hi for r in ratios):
            return Verdict.DIVERGING
    return Verdict.INCONCLUSIVE


def classify_mc_energies(forms: Sequence[FormBreakdown], sigmas: float = MC_TREND_SIGMAS) -> Verdict:
    """
    Verdict on Monte Carlo energies ordered by increasing dilation, judged against their standard errors.
    Diverging: every total lies more than `sigmas` standard errors below zero and every step drops by
    more than `sigmas` combined standard errors. Bounded: every total lies at least `sigmas` standard
    errors above zero. Otherwise Inconclusive.
    """
    totals = np.array([f.total for f in forms], dtype=float)
    errors = np.array([f.std_err for f in forms], dtype=float)
    if totals.size == 0:
        raise DomainError("no energies to classify")
    if np.all(totals - sigmas * errors >= 0):
        return Verdict.BOUNDED
    steps = np.diff(totals) + sigmas * np.hypot(errors[1:], errors[:-1])
    if np.all(totals + sigmas * errors < 0) and np.all(steps < 0):
        return Verdict.DIVERGING
    return Verdict.INCONCLUSIVE


@dataclass(frozen=True)
class ScanResult:
    m: float
    n_fermions: int
    gamma: float
    n_values: Tuple[float, ...]
    energies: Tuple[FormBreakdown, ...]
    verdict: Verdict

    @property
    def totals(self) -> np.ndarray:
        return np.array([e.total for e in self.energies])

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "m": float(self.m),
                "N": self.n_fermions,
                "gamma": float(self.gamma),
                "n": float(n),
                "E_total": e.total,
                "E_diag": e.diagonal,
                "E_off": e.off_diagonal,
                "verdict": self.verdict.value,
            }
            for n, e in zip(self.n_values, self.energies)
        ]
        return pd.DataFrame(rows, columns=SCAN_COLUMNS)


def _check_n_list(n_list: Sequence[float]) -> Tuple[float, ...]:
    n_values = tuple(float(n) for n in n_list)
    if len(n_values) < 4:
        raise DomainError(f"a scan needs at least 4 dilations, got {len(n_values)}")
    if any(b <= a for a, b in zip(n_values, n_values[1:])) or n_values[0] < 1:
        raise DomainError(f"dilations must be increasing and >= 1, got {n_values}")
    return n_values


def instability_scan(
    m: float,
    n_fermions: int,
    gamma: float,
    n_list: Sequence[float],
    freeze_zeta: bool = False,
    workers: Optional[int] = None,
) -> ScanResult:
    """E(n) = F_1[Q_{n,gamma}] along n_list and its verdict."""
    n_values = _check_n_list(n_list)
    energies = tuple(
        f1_trial_energy(TrialParams(n, gamma), m, n_fermions, freeze_zeta=freeze_zeta, workers=workers)
        for n in n_values
    )
    verdict = classify_energies(n_values, [e.total for e in energies])
    logger.info(f"m={m}, N={n_fermions}, gamma={gamma}: {verdict.value}")
    return ScanResult(m, n_fermions, gamma, n_values, energies, verdict)


@dataclass(frozen=True)
class GridScan:
    results: Tuple[ScanResult, ...]
    verdict: Verdict
    selected_gamma: Optional[float]

    def to_frame(self) -> pd.DataFrame:
        return pd.concat([r.to_frame() for r in self.results], ignore_index=True)

    def to_csv(self, output_path: Optional[str] = None) -> str:
        return table_to_csv(self.to_frame(), output_path)


def scan_grid(
    m: float,
    n_fermions: int,
    gamma_grid: Sequence[float],
    n_list: Sequence[float],
    workers: Optional[int] = None,
    progress: bool = False,
) -> GridScan:
    """
    Run the scan for every gamma. Diverging if any gamma diverges, Bounded if all are bounded,
    Inconclusive otherwise; the selected gamma is the largest diverging one.
    """
    n_values = _check_n_list(n_list)
    points = [(gamma, n) for gamma in gamma_grid for n in n_values]

    def evaluate(point):
        gamma, n = point
        return f1_trial_energy(TrialParams(n, gamma), m, n_fermions, workers=1)

    with ThreadPoolExecutor(max_workers=resolve_threads(workers)) as pool:
        energies = list(tqdm(pool.map(evaluate, points), total=len(points), disable=not progress))

    results = []
    for i, gamma in enumerate(gamma_grid):
        block = tuple(energies[i * len(n_values) : (i + 1) * len(n_values)])
        verdict = classify_energies(n_values, [e.total for e in block])
        logger.info(f"gamma={gamma}: {verdict.value}")
        results.append(ScanResult(m, n_fermions, float(gamma), n_values, block, verdict))

    diverging = [r.gamma for r in results if r.verdict is Verdict.DIVERGING]
    if diverging:
        overall = Verdict.DIVERGING
    elif all(r.verdict is Verdict.BOUNDED for r in results):
        overall = Verdict.BOUNDED
    else:
        overall = Verdict.INCONCLUSIVE
    return GridScan(tuple(results), overall, max(diverging) if diverging else None)


def bound_correction(params: TrialParams, alpha: float) -> float:
    """alpha/n + sqrt(gamma) + sqrt(n beta) e^{9/(16 gamma^2)} + (beta^2/n + beta) e^{5/(4 gamma^2)}."""
    n, gamma, beta = params.n, params.gamma, params.beta
    return (
        alpha / n
        + math.sqrt(gamma)
        + math.sqrt(n * beta) * math.exp(9.0 / (16.0 * gamma**2))
        + (beta**2 / n + beta) * math.exp(5.0 / (4.0 * gamma**2))
    )


def _leading_scale(params: TrialParams, m: float) -> float:
    return 2.0 * math.pi**2 * params.n * math.sqrt(m * (m + 2.0)) / (m + 1.0) * math.exp(0.75 / params.gamma**2)


def analytic_bound(params: TrialParams, m: float, n_fermions: int, alpha: float, c_n: float) -> float:
    """
    Upper bound on the trial energy:
    2 pi^2 n (sqrt(m(m+2))/(m+1)) e^{3/(4 gamma^2)} {1 - Lambda(m, 2) + c_N * correction}.
    The constant c_N is not known in closed form and must be supplied (see fit_bound_constant).
    """
    if c_n < 0:
        raise DomainError(f"c_N must be nonnegative, got {c_n}")
    if n_fermions < 2:
        raise DomainError(f"fermion count must be >= 2, got {n_fermions}")
    correction = bound_correction(params, alpha) if c_n > 0 else 0.0
    return _leading_scale(params, m) * (1.0 - lambda_param(m, 2) + c_n * correction)


def fit_bound_constant(
    records: Iterable[Tuple[TrialParams, FormBreakdown]], m: float, n_fermions: int, alpha: float
) -> float:
    """
    Smallest c_N >= 0 for which analytic_bound dominates every (total + 3 std_err) supplied.
    The value is an empirical fit.
    """
    gap = 1.0 - lambda_param(m, 2)
    fitted = 0.0
    for params, form in records:
        target = (form.total + 3.0 * form.std_err) / _leading_scale(params, m)
        correction = bound_correction(params, alpha)
        if target <= gap:
            continue
        if correction <= 0:
            raise DomainError(f"bound cannot dominate at {params}: correction {correction} is not positive")
        fitted = max(fitted, (target - gap) / correction)
    logger.info(f"fitted c_N = {fitted:.6g} for m={m}, N={n_fermions}, alpha={alpha}")
    return fitted
