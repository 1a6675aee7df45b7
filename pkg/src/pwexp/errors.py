"""Exception types shared across the package."""


class PwexpError(Exception):
    """Base class for errors raised by pwexp operations."""


class EmptyPieceError(PwexpError):
    """A hazard piece contains no events (or no exposure), so its rate is
    not estimable. ``piece`` is the 1-based index of the offending piece."""

    def __init__(self, piece: int, detail: str = "no events"):
        self.piece = piece
        super().__init__(f"hazard piece {piece} is not estimable: {detail}")


class NoFeasibleModelError(PwexpError):
    """Every candidate change-point combination was infeasible."""
