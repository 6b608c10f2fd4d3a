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

# Defaults shared by the library and the command line

# adaptive quadrature
QUADRATURE_DEFAULTS = {
    "rel_tol": 1e-10,
    "abs_tol": 1e-14,
    "max_subdivisions": 2000,
    "base_order": 15,
}

# log-momentum grid, x = log p
LOG_GRID_DEFAULTS = {
    "x_min": -12.0,
    "x_max": 12.0,
    "n_points": 4096,
}

# relative tolerance of the half-resolution check in the sharp transform
SHARP_REL_TOL = 1e-6

# grid spacing (in x) used by the banded double integrals and the series method
DIRECT_SPACING = 0.04
SERIES_X_SPACING = 0.05
SERIES_T_SPACING = 0.1
# samples below this fraction of the peak density are dropped from integration windows
WINDOW_REL_TOL = 1e-24

SERIES_K_MAX = 30
MELLIN_K_MAX = 40.0

# Monte Carlo
MC_SAMPLES = 10_000_000
MC_BATCHES = 100
# share of the wide component in every proposal mixture, and its width relative to the main one
MC_DEFENSIVE_WEIGHT = 0.1
MC_DEFENSIVE_WIDTH = 2.0
# a Monte Carlo trend only counts when each step clears this many standard errors
MC_TREND_SIGMAS = 3.0

# root bracket for the critical mass
CRITICAL_MASS_BRACKET = (1e-4, 1e2)
CRITICAL_MASS_TOL = 1e-10

# trials
TRIAL_LAMBDA = 1.0
SCAN_GAMMA_GRID = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]
SCAN_N_LIST = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
# dilations of the Monte Carlo N=3 trend
TREND_N_LIST = [1.0, 4.0, 16.0]
DIVERGENCE_RATIO_WINDOW = (1.5, 2.5)
# F_1 is cross-checked on the dilated charge itself up to this dilation unless asked otherwise
SCALING_CHECK_MAX_N = 4.0
# half width, in units of 1/gamma, of the log-momentum window holding Q_gamma
TRIAL_WINDOW_WIDTH = 7.0

# named charges accepted by the command line; "q-gamma:<gamma>" is parsed separately
BUILTIN_CHARGES = {
    "gauss-l1": "p exp(-p^2) in the l=1 channel",
    "exp-p2": "p^2 exp(-p) in the l=1 channel",
    "q-gamma": "trial charge Q_gamma in the l=1 channel, e.g. q-gamma:0.3",
}

# output tables
KERNEL_TABLE_COLUMNS = ["l", "m", "N", "k", "S_l_k"]
SCAN_COLUMNS = ["m", "N", "gamma", "n", "E_total", "E_diag", "E_off", "verdict"]
SLATER_TREND_COLUMNS = [
    "m",
    "N",
    "gamma",
    "n",
    "E_total",
    "E_diag",
    "E_off",
    "std_err",
    "n_samples",
    "seed",
    "verdict",
]
RENORM_COLUMNS = ["R", "m", "lambda", "integral", "residual", "mu"]
FORM_KEYS = ["alpha_term", "diagonal", "off_diagonal", "total", "std_err", "n_samples", "seed"]
FLOAT_FORMAT = "%.17g"

EXIT_CODES = {
    "success": 0,
    "usage": 1,
    "domain": 2,
    "non_convergence": 3,
}

THREADS_ENV = "FERMI_STABILITY_THREADS"
