"""Exception types shared across the package.

The CLI maps these onto stable exit codes: validation problems exit 2,
numeric aborts (NaN losses, cluster collapse) exit 3, I/O problems exit 4.
"""


class ValidationError(ValueError):
    """An argument violates a documented precondition."""


class FormatError(ValidationError):
    """A dataset or checkpoint file is malformed; message carries the location."""


class InitializationError(RuntimeError):
    """Model initialization cannot proceed (e.g. fewer complete rows than clusters)."""


class NumericAbort(RuntimeError):
    """Training hit a non-finite loss. Carries the phase and iteration."""

    def __init__(self, phase: str, iteration: int, detail: str = ""):
        self.phase = phase
        self.iteration = iteration
        msg = f"non-finite loss in phase '{phase}' at iteration {iteration}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ClusterCollapseError(RuntimeError):
    """A cluster's soft frequency reached zero, leaving the target distribution undefined."""

    def __init__(self, cluster: int, context: str = ""):
        self.cluster = cluster
        msg = f"cluster {cluster} collapsed (zero soft frequency)"
        if context:
            msg += f" [{context}]"
        super().__init__(msg)
