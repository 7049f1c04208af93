"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated an operation's precondition or invariant."""


class DataError(ValueError):
    """Malformed input data: bad CSV rows, schema violations, unusable files."""


class InsufficientHistoryError(ContractError):
    """A score was requested before enough epochs were recorded."""


class MissingLabelError(ContractError):
    """A label-dependent quantity was requested for an unlabeled sample."""
