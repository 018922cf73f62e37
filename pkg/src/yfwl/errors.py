"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad input or a
model that is not identified as specified) and :class:`NumericalError`
(a factorization or solve failed on otherwise well-formed input). The CLI
maps them to exit codes 2 and 3.
"""

from __future__ import annotations


class YFWLError(Exception):
    """Base class for all package errors."""


class ValidationError(YFWLError):
    pass


class NumericalError(YFWLError):
    pass


class RankDeficient(NumericalError):
    """A matrix that must have full column rank does not.

    ``block`` names the offending block (``"W1"``, ``"Z"``...) when known and
    ``column`` is the index of the first column found to be dependent.
    """

    def __init__(self, block: str | None = None, column: int | None = None, detail: str = ""):
        self.block = block
        self.column = column
        parts = ["rank deficient"]
        if block is not None:
            parts.append(f"block {block}")
        if column is not None:
            parts.append(f"column {column}")
        msg = ": ".join([parts[0], ", ".join(parts[1:])]) if len(parts) > 1 else parts[0]
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class NotPositiveDefinite(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class ZeroResidual(NumericalError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"first-step residual is zero at observation {index}")


class LeverageAtOne(NumericalError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"leverage h[{index}] = {value!r} is numerically one")


class MissingLeverages(ValidationError):
    pass


class SingleCluster(ValidationError):
    pass


class OrderConditionViolated(ValidationError):
    def __init__(self, n_instruments: int, n_endogenous: int):
        self.n_instruments = n_instruments
        self.n_endogenous = n_endogenous
        super().__init__(
            f"order condition violated: {n_instruments} excluded instrument(s) "
            f"for {n_endogenous} endogenous regressor(s)"
        )


class OverlappingRoles(ValidationError):
    def __init__(self, column: str, roles: tuple[str, ...]):
        self.column = column
        self.roles = roles
        super().__init__(f"column {column!r} appears in more than one role: {', '.join(roles)}")


class UnknownColumn(ValidationError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"unknown column {column!r}")


class EmptyInterestSet(ValidationError):
    pass


class MissingValues(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, line: int, col: int, detail: str = ""):
        self.line = line
        self.col = col
        msg = f"parse error at line {line}, column {col}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class EmptyFile(ValidationError):
    pass


class DuplicateHeader(ValidationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"duplicate column name {name!r} in header")
