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

import json
import logging
import os
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from fermistability.constants import FLOAT_FORMAT, THREADS_ENV

logger = logging.getLogger(__name__)


def resolve_threads(requested: Optional[int] = None) -> int:
    """
    Number of worker threads, capped by the FERMI_STABILITY_THREADS environment variable.
    """
    available = os.cpu_count() or 1
    cap = os.getenv(THREADS_ENV, None)
    if cap is not None:
        try:
            available = max(1, int(cap))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={cap!r}")
    if requested is None:
        return available
    return max(1, min(int(requested), available))


def parse_float_list(text: str) -> List[float]:
    """
    Parse either a comma-separated list ("1,2,4") or an inclusive range ("start:stop:step").
    """
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"Range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"Empty or reversed range {text!r}")
        count = int(round((stop - start) / step)) + 1
        # round off the accumulated representation error so 0.15 prints as 0.15
        return [float(f"{start + i * step:.12g}") for i in range(count)]
    values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ValueError(f"No values in {text!r}")
    return values


def format_float(value: float) -> str:
    return FLOAT_FORMAT % value


def save_results(
    results_dict: Union[Dict, List],
    output_path: str,
) -> str:
    """
    Utility for saving results as sorted, indented JSON.

    Args:
        results_dict: dictionary (or list of records) of results to save.
        output_path: destination file, parent directories are created.

    Returns:
        output_path: the path written.
    """
    dirname = os.path.dirname(output_path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)

    # remove old data
    if os.path.isfile(output_path):
        os.remove(output_path)

    # a list of records is written as one JSON array
    with open(output_path, "w", newline="\n") as f:
        f.write(json.dumps(results_dict, indent=4, sort_keys=True) + "\n")
    return output_path


def table_to_csv(df: pd.DataFrame, output_path: Optional[str] = None) -> str:
    """
    Render a table with 17 significant digits and LF line endings; also write it if a path is given.
    """
    text = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if output_path is not None:
        dirname = os.path.dirname(output_path)
        if dirname:
            os.makedirs(dirname, exist_ok=True)
        with open(output_path, "w", newline="\n") as f:
            f.write(text)
    return text


def config_path_for(output_path: str) -> str:
    return f"{output_path}.config.json"


def save_run_config(config: Dict[str, Any], output_path: str) -> str:
    """Write the resolved run configuration next to an output file."""
    return save_results(config, config_path_for(output_path))
