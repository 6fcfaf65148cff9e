"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands do not conform (wrong rank, mismatched extents, bad mode index)."""


class DatasetFormatError(ValueError):
    """A binary container (dataset, checkpoint, report) is malformed."""


class ArchError(ValueError):
    """An architecture descriptor is syntactically or structurally invalid."""


class DegreeBoundError(RuntimeError):
    """No polynomial degree within the probed bound produced a vanishing difference."""


class PointsDegenerateError(RuntimeError):
    """The evaluation points do not determine the monomial coefficients."""


class NotPolynomialError(RuntimeError):
    """Refit residual too large: the probed function is not a polynomial of the stated degree."""

    def __init__(self, residual: float, bound: float):
        super().__init__(
            f"refit residual {residual:.3e} exceeds {bound:.3e}; "
            "function is not a polynomial of the stated degree"
        )
        self.residual = residual
        self.bound = bound


class TrainingDiverged(RuntimeError):
    """A non-finite loss value was encountered during training."""
