"""Exception hierarchy shared by every stage.

Each class carries the exit code the CLI returns when it escapes a stage:
1 for validation problems the user can fix, 2 for runtime failures.
"""

from __future__ import annotations


class ChainforgeError(Exception):
    exit_code = 2


# -----------------------
# Validation errors (exit 1)
# -----------------------
class ValidationError(ChainforgeError):
    exit_code = 1


class ConfigError(ValidationError):
    pass


class StageDependencyError(ValidationError):
    def __init__(self, stage: str, prerequisite: str, missing: str):
        self.stage = stage
        self.prerequisite = prerequisite
        self.missing = missing
        super().__init__(
            f"stage '{stage}' needs {missing}; run 'chainforge {prerequisite}' first"
        )


class SplitSpecError(ValidationError):
    pass


class SamplingCapacityError(ValidationError):
    pass


class ScoreError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    pass


class TranscriptStructureError(ValidationError):
    pass


class MismatchedProblemsError(ValidationError):
    pass


# -----------------------
# Runtime errors (exit 2)
# -----------------------
class BackendError(ChainforgeError):
    pass


class TransportError(BackendError):
    pass


class BackendStatusError(BackendError):
    def __init__(self, status_code: int, message: str):
        self.status_code = status_code
        super().__init__(f"backend answered HTTP {status_code}: {message}")


class MalformedResponseError(BackendError):
    pass


class DatasetIntegrityError(ChainforgeError):
    def __init__(self, path, reason: str):
        self.path = path
        super().__init__(f"{path}: {reason}")


class ReferenceSupportError(ChainforgeError, ValueError):
    pass


class TrainingDivergedError(ChainforgeError):
    def __init__(self, step: int, last_loss: float):
        self.step = step
        self.last_loss = last_loss
        super().__init__(
            f"loss became NaN at step {step} (last finite loss {last_loss:.6g}); "
            "lower the learning rate or beta"
        )


class ChainAborted(BackendError):
    """A chain cut short by the backend; it belongs to neither D_w nor D_l."""

    def __init__(self, problem_id: str, iterations: int, cause: BackendError):
        self.problem_id = problem_id
        self.iterations = iterations
        self.cause = cause
        super().__init__(f"chain for {problem_id} aborted after {iterations} iterations: {cause}")


class GenerationExhaustedError(ChainforgeError):
    pass
