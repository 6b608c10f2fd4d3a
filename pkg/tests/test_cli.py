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

# end-to-end checks of the command line
import json
import os
import subprocess
import sys
import tempfile
import unittest
from unittest.mock import patch

from fermistability.errors import NonConvergence
from fermistability.fermistability import get_args, main

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def run_cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "fermistability.fermistability", *argv],
        cwd=REPO_ROOT,
        capture_output=True,
        text=True,
    )


class CommandLineTest(unittest.TestCase):
    def test_critical_mass(self):
        result = run_cli("critical-mass", "--n", "2")
        self.assertEqual(result.returncode, 0, result.stderr)
        self.assertAlmostEqual(float(result.stdout.strip()), 0.0735, delta=5e-4)

    def test_lambda(self):
        result = run_cli("lambda", "--m", "1", "--n", "2")
        self.assertEqual(result.returncode, 0, result.stderr)
        fields = dict(line.split("=", 1) for line in result.stdout.strip().split("\n"))
        self.assertEqual(sorted(fields), ["Gamma", "Lambda", "m_star_2", "m_star_N", "regime"])
        self.assertEqual(fields["regime"], "StableProven")
        self.assertLess(float(fields["Lambda"]), 1.0)

    def test_kernel_table_is_reproducible(self):
        argv = ["kernel", "--l", "1", "--m", "1", "--n", "2", "--k-max", "2", "--steps", "4"]
        first = run_cli(*argv, "--threads", "1")
        second = run_cli(*argv, "--threads", "2")
        self.assertEqual(first.returncode, 0, first.stderr)
        lines = first.stdout.split("\n")
        self.assertEqual(lines[0], "l,m,N,k,S_l_k")
        self.assertEqual(len([line for line in lines[1:] if line]), 5)
        self.assertEqual(first.stdout, second.stdout)

    def test_usage_errors(self):
        self.assertEqual(run_cli("lambda", "--m", "1").returncode, 1)
        self.assertEqual(run_cli("no-such-command").returncode, 1)
        bad_range = run_cli("instability", "scan", "--m", "1", "--n-fermions", "2", "--n-list", "1:2")
        self.assertEqual(bad_range.returncode, 1)

    def test_domain_errors(self):
        self.assertEqual(run_cli("lambda", "--m", "-1", "--n", "2").returncode, 2)
        self.assertEqual(run_cli("critical-mass", "--n", "1").returncode, 2)
        self.assertEqual(run_cli("form", "two-body", "--m", "1", "--charge", "gauss-l7").returncode, 2)

    def test_two_body_form_with_output(self):
        with tempfile.TemporaryDirectory() as tmp:
            output = os.path.join(tmp, "form.json")
            argv = ["form", "two-body", "--m", "1", "--charge", "gauss-l1", "--alpha", "0.5"]
            result = run_cli(*argv, "--output", output)
            self.assertEqual(result.returncode, 0, result.stderr)
            with open(output, "r") as f:
                form = json.load(f)
            with open(output + ".config.json", "r") as f:
                config = json.load(f)
        self.assertEqual(
            sorted(form), ["alpha_term", "diagonal", "n_samples", "off_diagonal", "seed", "std_err", "total"]
        )
        self.assertAlmostEqual(form["alpha_term"], 0.5, places=6)
        self.assertGreater(form["total"], form["alpha_term"])
        self.assertEqual(config["command"], "form")
        self.assertEqual(config["charge"], "gauss-l1")

    def test_renorm_check(self):
        result = run_cli("renorm", "check", "--r-list", "10,100", "--m", "1", "--spectators", "0.3,0.1,0.2")
        self.assertEqual(result.returncode, 0, result.stderr)
        lines = [line for line in result.stdout.split("\n") if line]
        self.assertEqual(lines[0], "R,m,lambda,integral,residual,mu")
        self.assertEqual(len(lines), 3)
        residuals = [abs(float(line.split(",")[4])) for line in lines[1:]]
        self.assertLess(residuals[1], residuals[0])

    def test_scan_reports_verdict(self):
        with tempfile.TemporaryDirectory() as tmp:
            output = os.path.join(tmp, "scan.csv")
            argv = ["instability", "scan", "--m", "1", "--n-fermions", "2", "--gamma-grid", "0.3"]
            argv += ["--n-list", "1,2,4,8"]
            result = run_cli(*argv, "--output", output)
            self.assertEqual(result.returncode, 0, result.stderr)
            self.assertEqual(result.stdout.strip().split("\n"), ["verdict=Bounded", "selected_gamma=None"])
            with open(output + ".config.json", "r") as f:
                self.assertEqual(json.load(f)["verdict"], "Bounded")
            with open(output, "r") as f:
                self.assertEqual(len(f.read().strip().split("\n")), 5)

    def test_scan_on_stdout_ends_with_verdict(self):
        argv = ["instability", "scan", "--m", "0.05", "--n-fermions", "2", "--gamma-grid", "0.1,0.3"]
        result = run_cli(*argv, "--n-list", "1,2,4,8")
        self.assertEqual(result.returncode, 0, result.stderr)
        lines = result.stdout.strip().split("\n")
        self.assertEqual(lines[0], "m,N,gamma,n,E_total,E_diag,E_off,verdict")
        self.assertEqual(len(lines), 1 + 8 + 2)
        self.assertEqual(lines[-2], "verdict=Diverging")
        self.assertTrue(lines[-1].startswith("selected_gamma="))
        self.assertIn(float(lines[-1].split("=", 1)[1]), (0.1, 0.3))

        as_json = run_cli(*argv, "--n-list", "1,2,4,8", "--format", "json")
        self.assertEqual(as_json.returncode, 0, as_json.stderr)
        document = json.loads(as_json.stdout)
        self.assertEqual(document["verdict"], "Diverging")
        self.assertEqual(document["selected_gamma"], float(lines[-1].split("=", 1)[1]))
        self.assertEqual(len(document["rows"]), 8)

    def test_slater_trend(self):
        argv = ["instability", "slater-trend", "--m", "0.05", "--gamma", "0.3", "--n-list", "1,4"]
        result = run_cli(*argv, "--samples", "2000", "--seed", "3", "--quiet")
        self.assertEqual(result.returncode, 0, result.stderr)
        lines = result.stdout.strip().split("\n")
        self.assertEqual(lines[0].split(",")[:4], ["m", "N", "gamma", "n"])
        self.assertEqual(len(lines), 1 + 2 + 2)
        self.assertTrue(lines[-2].startswith("verdict="))
        self.assertTrue(lines[-1].startswith("selected_gamma="))
        bad = run_cli(*argv[:-1], "4,1", "--samples", "2000")
        self.assertEqual(bad.returncode, 2)


class MainTest(unittest.TestCase):
    def test_defaults(self):
        args = get_args(["instability", "scan", "--m", "0.05", "--n-fermions", "2"])
        self.assertEqual(args.gamma_grid[0], 0.05)
        self.assertEqual(args.n_list[-1], 64.0)
        args = get_args(["form", "two-body", "--m", "1", "--charge", "q-gamma:0.3", "--lambda", "2"])
        self.assertEqual(args.lam, 2.0)
        self.assertEqual(args.method, "direct")

    def test_usage_exit_code(self):
        with self.assertRaises(SystemExit) as cm:
            main(["kernel", "--l", "1"])
        self.assertEqual(cm.exception.code, 1)

    def test_non_convergence_exit_code(self):
        with patch("fermistability.fermistability.critical_mass", side_effect=NonConvergence("stalled")):
            self.assertEqual(main(["critical-mass", "--n", "2"]), 3)
