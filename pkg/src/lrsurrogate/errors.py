"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented invariant or precondition."""


class CatalogError(KeyError):
    """Unknown local operator name or incompatible site dimension."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ResourceError(RuntimeError):
    """Requested dense object exceeds the configured Hilbert-space cap."""


class NumericError(ArithmeticError):
    """An iterative numerical routine failed to converge."""


class EvaluationError(ValueError):
    """A coupling function returned non-finite samples."""


class ResolutionUnreachable(RuntimeError):
    """No partition up to ``n_max`` meets the requested accuracy."""

    def __init__(self, best_n, best_total, epsilon):
        super().__init__(
            f"bound {best_total:.6g} at n={best_n} does not reach epsilon={epsilon:.6g}"
        )
        self.best_n = best_n
        self.best_total = best_total
        self.epsilon = epsilon
