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

# Stability functions Lambda(m, N), Gamma(m, N), the theta equation and the critical mass

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import NamedTuple

from fermistability.constants import CRITICAL_MASS_BRACKET, CRITICAL_MASS_TOL
from fermistability.errors import DomainError, UnstableRegime
from fermistability.numerics import find_root

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemParams:
    """
    Physical configuration: mass ratio m (fermion mass 1), fermion count N, coupling alpha and
    spectral shift lam > 0.
    """

    m: float
    n_fermions: int = 2
    alpha: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        _check_mass(self.m)
        _check_n(self.n_fermions)
        if not (math.isfinite(self.alpha)):
            raise DomainError(f"alpha must be finite, got {self.alpha}")
        if not self.lam > 0 or not math.isfinite(self.lam):
            raise DomainError(f"lambda must be positive, got {self.lam}")

    def to_dict(self):
        return asdict(self)


class Regime(str, Enum):
    STABLE_PROVEN = "StableProven"
    UNSTABLE_PROVEN = "UnstableProven"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class StabilityReport:
    lambda_mn: float
    gamma_mn: float
    m_star_2: float
    m_star_n: float
    regime: Regime


class SpectralThreshold(NamedTuple):
    bound: float
    lambda_min: float


def _check_mass(m: float) -> None:
    if not m > 0 or not math.isfinite(m):
        raise DomainError(f"mass ratio must be positive and finite, got {m}")


def _check_n(n_fermions: int) -> None:
    if int(n_fermions) != n_fermions or n_fermions < 2:
        raise DomainError(f"fermion count must be an integer >= 2, got {n_fermions}")


def arcsin_inverse_mass(m: float) -> float:
    """arcsin(1/(m+1)) through atan2, accurate as 1/(m+1) -> 1."""
    return math.atan2(1.0, math.sqrt(m * (m + 2.0)))


def lambda_param(m: float, n_fermions: int) -> float:
    """Lambda(m, N) = (2/pi)(N-1)(m+1)^2 [(m(m+2))^{-1/2} - arcsin(1/(m+1))]."""
    _check_mass(m)
    _check_n(n_fermions)
    bracket = 1.0 / math.sqrt(m * (m + 2.0)) - arcsin_inverse_mass(m)
    return 2.0 / math.pi * (n_fermions - 1) * (m + 1.0) ** 2 * bracket


def gamma_param(m: float, n_fermions: int) -> float:
    """Gamma(m, N) = (N-1)(m+1)^2 (m(m+2))^{-1/2} arcsin(1/(m+1))."""
    _check_mass(m)
    _check_n(n_fermions)
    return (n_fermions - 1) * (m + 1.0) ** 2 / math.sqrt(m * (m + 2.0)) * arcsin_inverse_mass(m)


def theta_residual(m: float, n_fermions: int) -> float:
    """
    cot 2t + 2t - (pi/2)(1 - cos^2 2t / (N-1)) at t = arctan sqrt(1 + 2/m).
    Vanishes exactly where Lambda(m, N) = 1.
    """
    _check_mass(m)
    _check_n(n_fermions)
    theta = math.atan(math.sqrt(1.0 + 2.0 / m))
    two_theta = 2.0 * theta
    return (
        math.cos(two_theta) / math.sin(two_theta)
        + two_theta
        - 0.5 * math.pi * (1.0 - math.cos(two_theta) ** 2 / (n_fermions - 1))
    )


def critical_mass(n_fermions: int, tol: float = CRITICAL_MASS_TOL, method: str = "lambda") -> float:
    """
    The unique m with Lambda(m, N) = 1.

    Args:
        n_fermions: fermion count N >= 2.
        tol: bracket width at termination.
        method: "lambda" roots Lambda(m, N) - 1, "theta" roots the theta equation.

    Returns:
        m*(N).
    """
    _check_n(n_fermions)
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    if method == "lambda":

        def residual(m):
            return lambda_param(m, n_fermions) - 1.0

    elif method == "theta":

        def residual(m):
            return theta_residual(m, n_fermions)

    else:
        raise DomainError(f"unknown critical-mass method {method!r}")
    lo, hi = CRITICAL_MASS_BRACKET
    m_star = find_root(residual, lo, hi, tol)
    logger.debug(f"m*({n_fermions}) = {m_star:.12g} via {method}")
    return m_star


def threshold_from_lambda(alpha: float, lambda_mn: float) -> SpectralThreshold:
    """Lower bound of the form and the shift making it nonnegative, for a given Lambda < 1."""
    if lambda_mn >= 1.0:
        raise UnstableRegime(f"Lambda = {lambda_mn} >= 1, no lower bound is available")
    if alpha >= 0:
        return SpectralThreshold(bound=0.0, lambda_min=0.0)
    gap = 1.0 - lambda_mn
    return SpectralThreshold(
        bound=-(alpha**2) / (4.0 * math.pi**4 * gap),
        lambda_min=alpha**2 / (4.0 * math.pi**4 * gap**2),
    )


def spectral_threshold(params: SystemParams) -> SpectralThreshold:
    """
    For alpha < 0 the bound is -alpha^2 / (4 pi^4 (1 - Lambda)) as stated for the operator; the
    returned lambda_min = alpha^2 / (4 pi^4 (1 - Lambda)^2) is the shift above which the charge
    form is nonnegative, which is what the form evaluators can verify.
    """
    return threshold_from_lambda(params.alpha, lambda_param(params.m, params.n_fermions))


def stability_report(m: float, n_fermions: int, tol: float = CRITICAL_MASS_TOL) -> StabilityReport:
    m_star_2 = critical_mass(2, tol)
    m_star_n = m_star_2 if n_fermions == 2 else critical_mass(n_fermions, tol)
    if m > m_star_n:
        regime = Regime.STABLE_PROVEN
    elif m < m_star_2:
        regime = Regime.UNSTABLE_PROVEN
    else:
        regime = Regime.UNRESOLVED
    return StabilityReport(
        lambda_mn=lambda_param(m, n_fermions),
        gamma_mn=gamma_param(m, n_fermions),
        m_star_2=m_star_2,
        m_star_n=m_star_n,
        regime=regime,
    )
