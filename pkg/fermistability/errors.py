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

# Exceptions raised across the package; the CLI maps them to exit codes


class FermiStabilityError(Exception):
    """Base class for every error raised by fermistability."""


class DomainError(FermiStabilityError, ValueError):
    """An input lies outside the domain where a quantity is defined."""


class InvalidRange(DomainError):
    pass


class NoSignChange(DomainError):
    pass


class UnstableRegime(DomainError):
    pass


class MethodMismatch(DomainError):
    pass


class DuplicateChannel(DomainError):
    pass


class WrongN(DomainError):
    pass


class UnsupportedN(DomainError):
    pass


class SupportOverlap(DomainError):
    pass


class BadProfile(DomainError):
    pass


class ZeroDensity(DomainError):
    pass


class NonConvergence(FermiStabilityError, RuntimeError):
    """A numerical procedure stopped before reaching its tolerance."""


class GridTooCoarse(NonConvergence):
    pass


class TruncationWarning(UserWarning):
    """A truncated series has a tail bound above the requested tolerance."""
