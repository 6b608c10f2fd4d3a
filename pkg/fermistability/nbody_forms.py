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

# N-body ingredients: G_lambda, L_lambda, D(K), the charge form at N=2 and N=3, and the cutoff residual

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import hypsecant, norm, truncnorm

from fermistability.constants import (
    MC_BATCHES,
    MC_DEFENSIVE_WEIGHT,
    MC_DEFENSIVE_WIDTH,
    MC_SAMPLES,
    SLATER_TREND_COLUMNS,
    TRIAL_LAMBDA,
)
from fermistability.errors import DomainError, UnsupportedN, WrongN
from fermistability.numerics import (
    DEFAULT_QUADRATURE,
    FormBreakdown,
    MCEstimate,
    QuadratureConfig,
    integrate_adaptive,
    mc_integrate_log,
)
from fermistability.partial_wave import OffDiagonalMethod, PartialWaveCharge, diagonal_integral, f_form
from fermistability.stability import SystemParams, gamma_param, lambda_param
from fermistability.trials import (
    BumpOrbital,
    QOrbital,
    SlaterCharge,
    TrialParams,
    Verdict,
    classify_mc_energies,
    slater_charge,
)

logger = logging.getLogger(__name__)

__all__ = [
    "FormBreakdown",
    "MomentumConfig",
    "RenormResidual",
    "SlaterTrend",
    "cutoff_renorm_residual",
    "d_of_k",
    "green_g",
    "l_lambda",
    "phi_envelope",
    "phi_slater_diag_reduced",
    "phi_slater_mc",
    "phi_two_body",
    "slater_mc_trend",
    "slater_norm_mc",
]


@dataclass(frozen=True)
class MomentumConfig:
    """Momenta k_1, ..., k_N as an (N, 3) array."""

    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float).reshape(-1, 3)
        if vectors.shape[0] < 1 or not np.all(np.isfinite(vectors)):
            raise DomainError("a momentum configuration needs at least one finite vector")
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return self.vectors.shape[0]


MomentumLike = Union[MomentumConfig, np.ndarray, Sequence[Sequence[float]]]


def _as_vectors(kvecs: MomentumLike) -> np.ndarray:
    if isinstance(kvecs, MomentumConfig):
        return kvecs.vectors
    vectors = np.asarray(kvecs, dtype=float)
    if vectors.ndim < 2 or vectors.shape[-1] != 3:
        raise DomainError(f"momenta must have shape (..., count, 3), got {vectors.shape}")
    return vectors


def _check(lam: float, m: float) -> None:
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if not m > 0:
        raise DomainError(f"mass ratio must be positive, got {m}")


def _squares_and_cross(vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    sum_i |k_i|^2 and sum_{i<j} k_i . k_j along the particle axis. Summands are sorted first so that
    the result does not depend on the order of the momenta.
    """
    squares = np.sum(np.sort(np.sum(vectors**2, axis=-1), axis=-1), axis=-1)
    total = np.sum(np.sort(vectors, axis=-2), axis=-2)
    cross = 0.5 * (np.sum(total**2, axis=-1) - squares)
    return squares, cross


def _scalar(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def green_g(kvecs: MomentumLike, lam: float, m: float):
    """G_lambda = [sum k_i^2 + (2/(m+1)) sum_{i<j} k_i . k_j + lambda]^{-1}."""
    _check(lam, m)
    squares, cross = _squares_and_cross(_as_vectors(kvecs))
    return _scalar(1.0 / (squares + 2.0 / (m + 1.0) * cross + lam))


def l_lambda(kvecs: MomentumLike, lam: float, m: float):
    """L_lambda = 2 pi^2 [(m(m+2)/(m+1)^2) sum k_i^2 + (2m/(m+1)^2) sum_{i<j} k_i . k_j + lambda]^{1/2}."""
    _check(lam, m)
    squares, cross = _squares_and_cross(_as_vectors(kvecs))
    c = (m + 1.0) ** 2
    argument = m * (m + 2.0) / c * squares + 2.0 * m / c * cross + lam
    return _scalar(2.0 * math.pi**2 * np.sqrt(argument))


def d_of_k(kvecs: MomentumLike, m: float, n_fermions: int):
    """D(K) = m/((m+1)(m+2)) [(m+3) sum k_i^2 + 2 sum_{i<j} k_i . k_j] over the N-2 momenta k_2, ..., k_{N-1}."""
    if not m > 0:
        raise DomainError(f"mass ratio must be positive, got {m}")
    if n_fermions < 3:
        raise DomainError(f"D(K) is defined for N >= 3, got {n_fermions}")
    vectors = _as_vectors(kvecs)
    if vectors.shape[-2] != n_fermions - 2:
        raise DomainError(f"D(K) takes N-2 = {n_fermions - 2} momenta, got {vectors.shape[-2]}")
    squares, cross = _squares_and_cross(vectors)
    return _scalar(m / ((m + 1.0) * (m + 2.0)) * ((m + 3.0) * squares + 2.0 * cross))


def _channels(xi) -> Sequence[PartialWaveCharge]:
    return [xi] if isinstance(xi, PartialWaveCharge) else list(xi)


def phi_two_body(
    xi, params: SystemParams, method: Union[str, OffDiagonalMethod] = OffDiagonalMethod.DIRECT
) -> FormBreakdown:
    """
    Charge form at N = 2 through Phi_alpha^lambda[xi] - alpha ||xi||^2 = sqrt(lambda) F_1[Q]
    with Q(p) = lambda^{3/4} xi(sqrt(lambda) p).

    Args:
        xi: one PartialWaveCharge or a sequence of them with distinct channels.
        params: system parameters; n_fermions must be 2.
        method: route for the off-diagonal forms.
    """
    if params.n_fermions != 2:
        raise WrongN(f"the two-body reduction needs N = 2, got {params.n_fermions}")
    charges = _channels(xi)
    shift = -0.5 * math.log(params.lam)
    factor = params.lam**-0.25
    rescaled = [PartialWaveCharge(c.l, c.m_z, c.radial.dilate(shift, factor)) for c in charges]
    reduced = f_form(rescaled, 1.0, params.m, 2, method)
    scale = math.sqrt(params.lam)
    norm_squared = math.fsum(c.radial.norm_squared() for c in charges)
    return FormBreakdown(
        diagonal=scale * reduced.diagonal,
        off_diagonal=scale * reduced.off_diagonal,
        alpha_term=params.alpha * norm_squared,
    )


class Envelope(NamedTuple):
    lower: float
    upper: float


def phi_envelope(xi, params: SystemParams) -> Envelope:
    """
    Lower and upper envelopes of the charge form:
    alpha ||xi||^2 + (1 - Lambda) 2 pi^2 int |xi|^2 sqrt((m/(m+1)) k^2 + lambda) and
    alpha ||xi||^2 + (1 + Gamma) 2 pi^2 int |xi|^2 sqrt((m(m+N)/(m+1)^2) k^2 + lambda).
    """
    m, n = params.m, params.n_fermions
    charges = _channels(xi)
    norm_squared = math.fsum(c.radial.norm_squared() for c in charges)
    low = math.fsum(diagonal_integral(c.radial, m / (m + 1.0), params.lam) for c in charges)
    high = math.fsum(diagonal_integral(c.radial, m * (m + n) / (m + 1.0) ** 2, params.lam) for c in charges)
    alpha_term = params.alpha * norm_squared
    return Envelope(
        lower=alpha_term + (1.0 - lambda_param(m, n)) * 2.0 * math.pi**2 * low,
        upper=alpha_term + (1.0 + gamma_param(m, n)) * 2.0 * math.pi**2 * high,
    )


##############################
# Monte Carlo for the N = 3 Slater charge
##############################
# A sample point holds (x, cos_theta, phi) per momentum slot with |k| = e^x, so that
# d^3k = e^{3x} dx dcos_theta dphi and magnitudes beyond the float range stay representable.

_LOG_SPHERE = math.log(4.0 * math.pi)


@dataclass(frozen=True)
class LogNormalBlock:
    """One slot with x - shift normal(mean, sigma) truncated to x - shift >= lower."""

    shift: float
    mean: float
    sigma: float
    lower: float = 0.0
    slots: int = 1

    def _distribution(self):
        return truncnorm((self.lower - self.mean) / self.sigma, np.inf, loc=self.mean, scale=self.sigma)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.shift + self._distribution().rvs(size=(size, 1), random_state=rng)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        return self._distribution().logpdf(x[:, 0] - self.shift)


@dataclass(frozen=True)
class BinnedLogBlock:
    """One slot whose magnitude |k| is uniform within each bin, with the given bin masses."""

    edges: np.ndarray
    masses: np.ndarray
    slots: int = 1

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cdf = np.cumsum(self.masses)
        idx = np.minimum(np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right"), self.masses.size - 1)
        # 1 - u lies in (0, 1], so k stays above the lower edge
        k = self.edges[idx] + np.diff(self.edges)[idx] * (1.0 - rng.random(size))
        return np.log(k)[:, None]

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            k = np.exp(x[:, 0])
        idx = np.searchsorted(self.edges, k, side="left") - 1
        inside = (idx >= 0) & (idx < self.masses.size)
        safe = np.where(inside, idx, 0)
        with np.errstate(divide="ignore"):
            log_pdf = np.log(self.masses[safe] / np.diff(self.edges)[safe]) + x[:, 0]
        return np.where(inside, log_pdf, -np.inf)


@dataclass(frozen=True)
class CoupledLogPairBlock:
    """
    Two slots drawn through their mean u = (x_1 + x_2)/2 - shift, normal(mean, sigma), and their
    difference v = x_1 - x_2, hyperbolic secant with the given width. The map has unit Jacobian.
    """

    shift: float
    mean: float
    sigma: float
    width: float
    slots: int = 2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = norm.rvs(loc=self.mean, scale=self.sigma, size=size, random_state=rng)
        v = hypsecant.rvs(scale=self.width, size=size, random_state=rng)
        return np.stack([self.shift + u + 0.5 * v, self.shift + u - 0.5 * v], axis=-1)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        u = 0.5 * (x[:, 0] + x[:, 1]) - self.shift
        v = x[:, 0] - x[:, 1]
        return norm.logpdf(u, loc=self.mean, scale=self.sigma) + hypsecant.logpdf(v, scale=self.width)


@dataclass(frozen=True)
class LogProductMixture:
    """
    Mixture over components. A component is a tuple of blocks that cover the slots in order;
    every slot gets a uniform direction, which contributes 1/(4 pi) to the density.
    """

    weights: Tuple[float, ...]
    components: Tuple[Tuple, ...]

    @property
    def slots(self) -> int:
        return sum(block.slots for block in self.components[0])

    def _normalized_weights(self) -> np.ndarray:
        weights = np.asarray(self.weights, dtype=float)
        return weights / weights.sum()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        choice = rng.choice(len(self.weights), size=size, p=self._normalized_weights())
        x = np.empty((size, self.slots))
        for c, component in enumerate(self.components):
            idx = np.flatnonzero(choice == c)
            start = 0
            for block in component:
                x[idx, start : start + block.slots] = block.sample(rng, idx.size)
                start += block.slots
        cos_theta = 2.0 * rng.random((size, self.slots)) - 1.0
        phi = 2.0 * np.pi * rng.random((size, self.slots))
        return np.stack([x, cos_theta, phi], axis=-1).reshape(size, 3 * self.slots)

    def log_density(self, points: np.ndarray) -> np.ndarray:
        x = points.reshape(points.shape[0], self.slots, 3)[..., 0]
        parts = []
        for weight, component in zip(self._normalized_weights(), self.components):
            part = np.full(points.shape[0], math.log(weight))
            start = 0
            for block in component:
                part = part + block.log_pdf(x[:, start : start + block.slots])
                start += block.slots
            parts.append(part)
        with np.errstate(divide="ignore"):
            return logsumexp(np.stack(parts), axis=0) - self.slots * _LOG_SPHERE


def q_log_block(orbital: QOrbital, moment: float, widen: float = 1.0) -> LogNormalBlock:
    """
    Slot matching k^{3+moment} |Q_{n,gamma}(k)|^2 in x = log k. With y = x - log n the target is
    exp((1 + moment) y - gamma^2 y^2) on y >= 0.
    """
    gamma = orbital.gamma
    return LogNormalBlock(
        shift=math.log(orbital.n), mean=(1.0 + moment) / (2.0 * gamma**2), sigma=widen / (math.sqrt(2.0) * gamma)
    )


def q_pair_block(orbital: QOrbital, widen: float = 1.0) -> CoupledLogPairBlock:
    """
    Slots (s, t) of conj(Q(s)) Q(t) G_lambda: the mean log-magnitude follows exp(2u - gamma^2 u^2)
    and G_lambda damps the gap v between them like e^{-|v|}.
    """
    gamma = orbital.gamma
    return CoupledLogPairBlock(
        shift=math.log(orbital.n), mean=1.0 / gamma**2, sigma=widen / (math.sqrt(2.0) * gamma), width=widen
    )


def bump_log_block(orbital: BumpOrbital, power: int, bins: int = 4000) -> BinnedLogBlock:
    """Slot with |k| distributed as k^2 |Xi_beta(k)|^power on (0, beta), Simpson masses per bin."""
    u = np.linspace(0.0, 1.0, bins + 1)
    mid = 0.5 * (u[1:] + u[:-1])

    def density(v):
        return v**2 * np.abs(orbital.profile(v)) ** power

    masses = (density(u[:-1]) + 4.0 * density(mid) + density(u[1:])) / 6.0 * np.diff(u)
    return BinnedLogBlock(edges=orbital.beta * u, masses=masses / masses.sum())


def _defensive(build: Callable[[float], Tuple]) -> LogProductMixture:
    # build(widen) gives the blocks of one component
    return LogProductMixture(
        weights=(1.0 - MC_DEFENSIVE_WEIGHT, MC_DEFENSIVE_WEIGHT),
        components=(build(1.0), build(MC_DEFENSIVE_WIDTH)),
    )


def _split(points: np.ndarray, slots: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = points.reshape(points.shape[0], slots, 3)
    return p[..., 0], p[..., 1], p[..., 2]


def _unit_vectors(cos_theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    sin_theta = np.sqrt(np.clip(1.0 - cos_theta**2, 0.0, None))
    return np.stack([sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta], axis=-1)


def _log_quadratic(x: np.ndarray, units: np.ndarray, diagonal: float, cross: float, lam: float) -> np.ndarray:
    """log(diagonal sum |k_i|^2 + cross sum_{i<j} k_i . k_j + lam) from log-magnitudes and unit directions."""
    top = np.max(x, axis=-1)
    scaled = np.exp(x - top[:, None])[..., None] * units
    squares, pairs = _squares_and_cross(scaled)
    with np.errstate(divide="ignore"):
        return np.logaddexp(2.0 * top + np.log(diagonal * squares + cross * pairs), math.log(lam))


def _log_l_lambda(x: np.ndarray, units: np.ndarray, lam: float, m: float) -> np.ndarray:
    c = (m + 1.0) ** 2
    return math.log(2.0 * math.pi**2) + 0.5 * _log_quadratic(x, units, m * (m + 2.0) / c, 2.0 * m / c, lam)


def _log_green_g(x: np.ndarray, units: np.ndarray, lam: float, m: float) -> np.ndarray:
    return -_log_quadratic(x, units, 1.0, 2.0 / (m + 1.0), lam)


def _log_abs(value: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(value))


def _three_body_orbitals(xi: SlaterCharge) -> Tuple[QOrbital, BumpOrbital]:
    if xi.n_fermions != 3:
        raise UnsupportedN(f"Monte Carlo charge forms are available for N = 3 only, got {xi.n_fermions}")
    return xi.orbitals


def _leading_log_scale(q: QOrbital) -> float:
    # log of 2 pi^2 n e^{3/(4 gamma^2)}, the size of the diagonal part and of the Q-Q off-diagonal term
    return math.log(2.0 * math.pi**2 * q.n) + 0.75 / q.gamma**2


def _square_log_integrand(xi: SlaterCharge, q_first: bool, params: Optional[SystemParams] = None):
    """
    |xi(k_1, k_2)|^2, times L_lambda when params are given, on the half of R^6 where k_1 does
    (q_first) or does not lie in the Q support. Both halves carry the same value.
    """
    log_cut = math.log(xi.orbitals[0].n)

    def log_integrand(points):
        x, cos_theta, phi = _split(points, 2)
        log_scale, scaled = xi.log_evaluate(x, cos_theta, phi)
        log_abs = 2.0 * (log_scale + _log_abs(scaled)) + 3.0 * np.sum(x, axis=1)
        if params is not None:
            log_abs = log_abs + _log_l_lambda(x, _unit_vectors(cos_theta, phi), params.lam, params.m)
        in_region = (x[:, 0] >= log_cut) == q_first
        return log_abs, np.where(in_region & (scaled != 0), 1.0, 0.0)

    return log_integrand


def _off_diagonal_log_integrand(xi: SlaterCharge, params: SystemParams, k_in_q: bool):
    """
    (N-1) Re conj(xi(s, k)) xi(t, k) G_lambda(s, t, k) with slots (s, t, k). Disjoint supports leave
    conj(Q(s)) Q(t) |Xi(k)|^2 / 2 where k lies below the Q cut and |Q(k)|^2 conj(Xi(s)) Xi(t) / 2 above it.
    """
    log_cut = math.log(xi.orbitals[0].n)
    log_count = math.log(params.n_fermions - 1)

    def log_integrand(points):
        x, cos_theta, phi = _split(points, 3)
        left_scale, left = xi.log_evaluate(x[:, [0, 2]], cos_theta[:, [0, 2]], phi[:, [0, 2]])
        right_scale, right = xi.log_evaluate(x[:, [1, 2]], cos_theta[:, [1, 2]], phi[:, [1, 2]])
        product = np.real(np.conj(left) * right)
        log_abs = (
            log_count
            + left_scale
            + right_scale
            + _log_abs(product)
            + _log_green_g(x, _unit_vectors(cos_theta, phi), params.lam, params.m)
            + 3.0 * np.sum(x, axis=1)
        )
        in_region = (x[:, 2] >= log_cut) == k_in_q
        return log_abs, np.where(in_region, np.sign(product), 0.0)

    return log_integrand


def _integrate_regions(
    dim: int,
    regions: Sequence[Tuple],
    n_samples: int,
    seed: int,
    n_batches: int,
    workers: Optional[int],
    progress: bool,
) -> MCEstimate:
    """
    Sum of independent estimates over (proposal, log_integrand, log_scale) regions that partition the
    domain. The samples are split evenly and every region gets its own stream spawned from seed.
    """
    count = len(regions)
    sizes = [n_samples // count + (i < n_samples % count) for i in range(count)]
    parts = [
        mc_integrate_log(dim, proposal, integrand, size, child, log_scale, n_batches, workers, progress)
        for (proposal, integrand, log_scale), size, child in zip(regions, sizes, _child_seeds(seed, count))
    ]
    return MCEstimate(
        mean=math.fsum(p.mean for p in parts),
        std_err=math.sqrt(math.fsum(p.std_err**2 for p in parts)),
        n_samples=sum(p.n_samples for p in parts),
        seed=seed,
    )


def _child_seeds(seed: int, count: int) -> Sequence[int]:
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def _check_three_body(xi: SlaterCharge, params: SystemParams) -> None:
    if params.n_fermions < 3:
        raise WrongN(f"a Slater charge form needs N >= 3, got {params.n_fermions}")
    if params.n_fermions > 3:
        raise UnsupportedN(f"Monte Carlo charge forms are available for N = 3 only, got {params.n_fermions}")
    if xi.n_fermions != params.n_fermions:
        raise WrongN(f"charge built for N = {xi.n_fermions} but params have N = {params.n_fermions}")


def phi_slater_mc(
    xi: SlaterCharge,
    params: SystemParams,
    n_samples: int = MC_SAMPLES,
    seed: int = 0,
    n_batches: int = MC_BATCHES,
    workers: Optional[int] = None,
    progress: bool = False,
) -> FormBreakdown:
    """
    Importance-sampled charge form at N = 3:
    Phi_diag = int |xi|^2 L_lambda over R^6 and Phi_off = (N-1) int conj(xi(s, k)) xi(t, k) G_lambda(s, t, k) over R^9.

    Each part is split along the Q cut |k| = n into regions where a single product of orbitals survives,
    and each region is sampled in log-magnitudes from a mixture with a wider defensive component.

    Args:
        xi: Slater charge with disjoint supports, unit norm.
        params: system parameters with n_fermions = 3.
        n_samples: samples per part, split evenly over its two regions.
        seed: master seed; every region uses its own stream spawned from it.
        n_batches: batches per region.
        workers: thread cap.
        progress: show progress bars.

    Returns:
        the breakdown with std_err combining both parts.
    """
    _check_three_body(xi, params)
    q, bump = xi.orbitals
    diag_seed, off_seed = _child_seeds(seed, 2)
    leading = _leading_log_scale(q)

    diagonal_regions = [
        (
            _defensive(lambda w: (q_log_block(q, 1.0, w), bump_log_block(bump, 2))),
            _square_log_integrand(xi, True, params),
            leading,
        ),
        (
            _defensive(lambda w: (bump_log_block(bump, 2), q_log_block(q, 1.0, w))),
            _square_log_integrand(xi, False, params),
            leading,
        ),
    ]
    off_regions = [
        (
            _defensive(lambda w: (q_pair_block(q, w), bump_log_block(bump, 2))),
            _off_diagonal_log_integrand(xi, params, False),
            leading,
        ),
        (
            _defensive(lambda w: (bump_log_block(bump, 1), bump_log_block(bump, 1), q_log_block(q, -2.0, w))),
            _off_diagonal_log_integrand(xi, params, True),
            0.0,
        ),
    ]

    logger.info(f"*** Sampling the N=3 charge form: {n_samples} samples per part, seed {seed} ***")
    diagonal = _integrate_regions(6, diagonal_regions, n_samples, diag_seed, n_batches, workers, progress)
    off = _integrate_regions(9, off_regions, n_samples, off_seed, n_batches, workers, progress)
    logger.info(f"diagonal {diagonal.mean:.6e} +/- {diagonal.std_err:.2e}, off {off.mean:.6e} +/- {off.std_err:.2e}")
    return FormBreakdown(
        diagonal=diagonal.mean,
        off_diagonal=off.mean,
        alpha_term=params.alpha,
        std_err=math.hypot(diagonal.std_err, off.std_err),
        n_samples=diagonal.n_samples + off.n_samples,
        seed=seed,
    )


def phi_slater_diag_reduced(
    xi: SlaterCharge,
    params: SystemParams,
    n_samples: int = MC_SAMPLES,
    seed: int = 0,
    n_batches: int = MC_BATCHES,
    workers: Optional[int] = None,
) -> MCEstimate:
    """
    Diagonal part after orthogonality of the orbitals: int |Q(k_1)|^2 |Xi(k_2)|^2 L_lambda(k_1, k_2).
    """
    _check_three_body(xi, params)
    q, bump = xi.orbitals
    proposal = _defensive(lambda w: (q_log_block(q, 1.0, w), bump_log_block(bump, 2)))

    def log_integrand(points):
        x, cos_theta, phi = _split(points, 2)
        log_q, sign_q = q.log_radial(x[:, 0])
        log_bump, sign_bump = bump.log_radial(x[:, 1])
        angular = q.angular(cos_theta[:, 0], phi[:, 0]) * bump.angular(cos_theta[:, 1], phi[:, 1])
        log_abs = (
            2.0 * (log_q + log_bump + _log_abs(angular))
            + _log_l_lambda(x, _unit_vectors(cos_theta, phi), params.lam, params.m)
            + 3.0 * np.sum(x, axis=1)
        )
        return log_abs, np.where((sign_q * sign_bump != 0) & (angular != 0), 1.0, 0.0)

    return mc_integrate_log(6, proposal, log_integrand, n_samples, seed, _leading_log_scale(q), n_batches, workers)


def slater_norm_mc(
    xi: SlaterCharge, n_samples: int = 100_000, seed: int = 0, n_batches: int = MC_BATCHES
) -> MCEstimate:
    """int |xi|^2 over R^6, split along the Q cut like the diagonal part; 1 for a normalized charge."""
    q, bump = _three_body_orbitals(xi)
    first = _defensive(lambda w: (q_log_block(q, 0.0, w), bump_log_block(bump, 2)))
    second = _defensive(lambda w: (bump_log_block(bump, 2), q_log_block(q, 0.0, w)))
    regions = [
        (first, _square_log_integrand(xi, True), 0.0),
        (second, _square_log_integrand(xi, False), 0.0),
    ]
    return _integrate_regions(6, regions, n_samples, seed, n_batches, None, False)


@dataclass(frozen=True)
class SlaterTrend:
    """Monte Carlo charge forms of the N = 3 Slater charge along increasing dilations."""

    m: float
    gamma: float
    records: Tuple[Tuple[TrialParams, FormBreakdown], ...]
    verdict: Verdict

    @property
    def totals(self) -> np.ndarray:
        return np.array([form.total for _, form in self.records])

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "m": float(self.m),
                "N": 3,
                "gamma": float(self.gamma),
                "n": float(trial.n),
                "E_total": form.total,
                "E_diag": form.diagonal,
                "E_off": form.off_diagonal,
                "std_err": form.std_err,
                "n_samples": form.n_samples,
                "seed": form.seed,
                "verdict": self.verdict.value,
            }
            for trial, form in self.records
        ]
        return pd.DataFrame(rows, columns=SLATER_TREND_COLUMNS)


def slater_mc_trend(
    m: float,
    gamma: float,
    n_list: Sequence[float],
    n_samples: int = MC_SAMPLES,
    seed: int = 0,
    alpha: float = 0.0,
    lam: float = TRIAL_LAMBDA,
    n_batches: int = MC_BATCHES,
    workers: Optional[int] = None,
    progress: bool = False,
) -> SlaterTrend:
    """
    phi_slater_mc on slater_charge(TrialParams(n, gamma), 3) for every n in n_list. Each dilation
    samples its own stream spawned from seed, and the verdict comes from classify_mc_energies.
    """
    n_values = [float(n) for n in n_list]
    if len(n_values) < 2 or any(b <= a for a, b in zip(n_values, n_values[1:])) or n_values[0] < 1:
        raise DomainError(f"a trend needs at least 2 increasing dilations >= 1, got {n_values}")
    params = SystemParams(m=m, n_fermions=3, alpha=alpha, lam=lam)
    records = []
    for n, child in zip(n_values, _child_seeds(seed, len(n_values))):
        trial = TrialParams(n, gamma)
        form = phi_slater_mc(slater_charge(trial, 3), params, n_samples, child, n_batches, workers, progress)
        records.append((trial, form))
    verdict = classify_mc_energies([form for _, form in records])
    logger.info(f"N=3 Slater trend at m={m}, gamma={gamma}: {verdict.value}")
    return SlaterTrend(m, gamma, tuple(records), verdict)


##############################
# Cutoff regularization
##############################


class RenormResidual(NamedTuple):
    integral: float
    residual: float
    mu: float


def cutoff_renorm_residual(
    kvecs: MomentumLike,
    cutoff: float,
    lam: float,
    m: float,
    alpha: float = 0.0,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> RenormResidual:
    """
    Cutoff-regularized integral int_{|s|<R} d^3s G_lambda(k_1, ..., k_{N-1}, s), its residual after
    removing 4 pi R and adding L_lambda(k_1, ..., k_{N-1}), and the coupling mu = -(2 pi)^3 / (4 pi R + alpha).

    The angular integral is done in closed form: with b = 2|K|/(m+1), K the sum of the spectators and
    A the spectator part of the quadratic form plus lambda,
    int dOmega 1/(s^2 + b s cos + A) = (2 pi / (b s)) log((s^2 + b s + A) / (s^2 - b s + A)).
    """
    _check(lam, m)
    if not cutoff > 0:
        raise DomainError(f"cutoff must be positive, got {cutoff}")
    vectors = _as_vectors(kvecs).reshape(-1, 3)
    if vectors.shape[0] == 0:
        squares, cross, total = 0.0, 0.0, np.zeros(3)
    else:
        squares, cross = _squares_and_cross(vectors)
        total = vectors.sum(axis=0)
    slope = 2.0 * float(np.linalg.norm(total)) / (m + 1.0)
    offset = float(squares + 2.0 / (m + 1.0) * cross + lam)

    def subtracted(s):
        s = np.asarray(s, dtype=float)
        if slope == 0.0:
            return -4.0 * np.pi * offset / (s**2 + offset)
        lower = s**2 - slope * s + offset
        with np.errstate(divide="ignore", invalid="ignore"):
            angular = 2.0 * np.pi / (slope * s) * np.log1p(2.0 * slope * s / lower)
        angular = np.where(s > 0, angular, 4.0 * np.pi / offset)
        return s**2 * angular - 4.0 * np.pi

    # the integrand varies on the scale of the spectators and decays like s^-2 beyond it
    knee = min(cutoff, 4.0 * (math.sqrt(offset) + slope))
    body = integrate_adaptive(subtracted, 0.0, knee, cfg)
    if knee < cutoff:
        body += integrate_adaptive(subtracted, knee, cutoff, cfg)
    spectators = float(l_lambda(vectors, lam, m)) if vectors.shape[0] else 2.0 * math.pi**2 * math.sqrt(lam)
    denominator = 4.0 * math.pi * cutoff + alpha
    if denominator == 0:
        raise DomainError(f"coupling mu is singular at alpha = -4 pi R = {alpha}")
    return RenormResidual(
        integral=body + 4.0 * math.pi * cutoff,
        residual=body + spectators,
        mu=-((2.0 * math.pi) ** 3) / denominator,
    )
