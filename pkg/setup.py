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

from setuptools import find_packages, setup

# instructions for releasing new version: update the version number in both this file
# and fermistability/__init__.py, then build and upload the sdist and wheel
setup(
    name="fermistability",
    version="0.1.0",  # do not import from init, or we get a weird build error
    author="The FermiStability Authors",
    description="Stability and instability of N fermions plus one particle with zero-range interactions",
    entry_points={
        "console_scripts": [
            "fermistability=fermistability.fermistability:main",
        ],
    },
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    python_requires=">=3.10",
    install_requires=[
        "black",
        "flake8>=6.0",
        "isort>=5.12.0",
        "numpy>=1.24",
        "pandas>=1.5",  # lineterminator keyword of to_csv
        "pytest",
        "scipy>=1.10",
        "tqdm",
    ],
)
