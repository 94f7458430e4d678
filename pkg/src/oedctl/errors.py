"""Exception types raised across the package."""


class OedError(Exception):
    """Base class for numerical failures reported by oedctl."""

    def record(self):
        """JSON-ready description used by the CLI error channel."""
        return {"error": type(self).__name__, "message": str(self)}


class DimensionMismatch(OedError, ValueError):
    pass


class NotPositiveDefinite(OedError):
    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {self.pivot})")

    def record(self):
        rec = super().record()
        rec["pivot"] = self.pivot
        return rec


class RankDeficient(NotPositiveDefinite):
    def __init__(self, pivot, message=None):
        super().__init__(pivot, message or f"H W^-1 H^T is rank deficient (pivot {int(pivot)})")


class NonFiniteEvaluation(OedError):
    def __init__(self, evaluator, message=None):
        self.evaluator = evaluator
        super().__init__(message or f"evaluator {evaluator!r} returned a non-finite value")

    def record(self):
        rec = super().record()
        rec["evaluator"] = self.evaluator
        return rec


class SingularInputMatrix(OedError):
    pass


class EmptyActiveSet(OedError, ValueError):
    pass


class MaxIterationsExceeded(OedError):
    def __init__(self, report):
        self.report = report
        super().__init__(
            f"no convergence after {report.iterations} iterations "
            f"(|eta|_inf = {report.final_eta_norm:.3e})"
        )


class NoSettle(OedError):
    def __init__(self, solution):
        self.solution = solution
        super().__init__(f"Riccati gain did not settle within horizon {solution.settle_time}")


class LengthMismatch(OedError, ValueError):
    pass


class ZeroReferenceCost(OedError):
    pass


class DegenerateFit(OedError, ValueError):
    pass


class EmptySeries(OedError, ValueError):
    pass

