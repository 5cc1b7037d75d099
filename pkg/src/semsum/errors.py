"""Exception types raised across the package."""


class SemsumError(ValueError):
    """Base class for all package errors."""


class EmbeddingError(SemsumError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"{message} (row={row})"
        super().__init__(message)


class MalformedHeader(EmbeddingError):
    pass


class DimensionMismatch(EmbeddingError):
    pass


class ZeroRow(EmbeddingError):
    pass


class NonFinite(EmbeddingError):
    pass


class Infeasible(SemsumError):
    """No strictly increasing frame selection exists."""


class TotalProbabilityZero(SemsumError):
    """A forward/backward step lost all probability mass.

    Usually means the top-k candidate sets admit no forward transition;
    compute ``hmm_model.minimal_k`` and decode with that k instead.
    """

    def __init__(self, step):
        self.step = step
        super().__init__(
            f"total probability is zero at step t={step}; k is too small for a "
            "forward-only path, use hmm_model.minimal_k(S) to pick k"
        )


class InstanceTooLarge(SemsumError):
    pass
