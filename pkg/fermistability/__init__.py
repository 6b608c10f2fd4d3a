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

__version__ = "0.1.0"
from .errors import (
    DomainError,
    FermiStabilityError,
    NonConvergence,
    TruncationWarning,
)
from .nbody_forms import (
    MomentumConfig,
    cutoff_renorm_residual,
    d_of_k,
    green_g,
    l_lambda,
    phi_envelope,
    phi_slater_mc,
    phi_two_body,
    slater_mc_trend,
)
from .numerics import (
    FormBreakdown,
    LogGrid,
    MCEstimate,
    QuadratureConfig,
    RadialFunction,
    find_root,
    integrate_adaptive,
    legendre_p,
    mc_integrate,
    mc_integrate_log,
    mellin_sharp,
)
from .partial_wave import (
    OffDiagonalMethod,
    PartialWaveCharge,
    angular_kernel,
    b_coeff,
    builtin_charge,
    f_form,
    g_diag,
    g_off,
    kernel_table,
    s_kernel,
)
from .stability import (
    Regime,
    SystemParams,
    critical_mass,
    gamma_param,
    lambda_param,
    spectral_threshold,
    stability_report,
    theta_residual,
)
from .trials import (
    SlaterCharge,
    TrialParams,
    analytic_bound,
    bump_charge_xi,
    c_gamma_norm,
    f1_trial_energy,
    instability_scan,
    q_gamma,
    q_moment,
    scan_grid,
    slater_charge,
    trial_charge_q,
)
from .utils import save_results

__all__ = [
    "DomainError",
    "FermiStabilityError",
    "NonConvergence",
    "TruncationWarning",
    "MomentumConfig",
    "cutoff_renorm_residual",
    "d_of_k",
    "green_g",
    "l_lambda",
    "phi_envelope",
    "phi_slater_mc",
    "phi_two_body",
    "slater_mc_trend",
    "FormBreakdown",
    "LogGrid",
    "MCEstimate",
    "QuadratureConfig",
    "RadialFunction",
    "find_root",
    "integrate_adaptive",
    "legendre_p",
    "mc_integrate",
    "mc_integrate_log",
    "mellin_sharp",
    "OffDiagonalMethod",
    "PartialWaveCharge",
    "angular_kernel",
    "b_coeff",
    "builtin_charge",
    "f_form",
    "g_diag",
    "g_off",
    "kernel_table",
    "s_kernel",
    "Regime",
    "SystemParams",
    "critical_mass",
    "gamma_param",
    "lambda_param",
    "spectral_threshold",
    "stability_report",
    "theta_residual",
    "SlaterCharge",
    "TrialParams",
    "analytic_bound",
    "bump_charge_xi",
    "c_gamma_norm",
    "f1_trial_energy",
    "instability_scan",
    "q_gamma",
    "q_moment",
    "scan_grid",
    "slater_charge",
    "trial_charge_q",
    "save_results",
]
