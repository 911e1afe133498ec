"""
Exception hierarchy for the solver.
Every error carries the process exit code the CLI should return and a human readable detail.
"""

from typing import Optional


class SemRbException(Exception):
    """Base error: exit code plus detail message"""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class InvalidArgumentError(SemRbException, ValueError):
    exit_code = 2


class ConfigurationError(SemRbException):
    exit_code = 2


class CondensationError(SemRbException):
    """A C or D-hat block could not be factorized"""

    def __init__(self, detail: str, element: Optional[int] = None):
        super().__init__(detail)
        self.element = element


class SingularSystemError(SemRbException):
    exit_code = 1


class ConsistencyError(SemRbException):
    """Online reduced operator disagrees with the projected full operator"""
    exit_code = 1


class NonConvergenceError(SemRbException):
    exit_code = 3


class ArtifactError(SemRbException):
    exit_code = 4


class ArtifactFormatError(ArtifactError):
    """Magic string does not match"""


class ArtifactVersionError(ArtifactError):
    """Format version is not supported"""


class IncompatibleArtifactError(ArtifactError):
    """Fingerprint or payload kind does not match the current discretization"""


class CorruptArtifactError(ArtifactError):
    """File is truncated or otherwise unreadable"""


class MissingArtifactError(ArtifactError):
    def __init__(self, path: str, hint: str):
        super().__init__(f"Artifact not found at {path}. {hint}")
        self.path = path
