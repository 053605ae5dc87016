class InvalidInput(ValueError):
    """Input violates a documented precondition."""


class EmptyBin(InvalidInput):
    """A per-bin statistic was requested for a bin with no samples."""


class EmptyBatch(InvalidInput):
    """A loss was requested on a batch with no samples."""


class DegenerateBatch(InvalidInput):
    """Weighted MMCE needs both correct and incorrect predictions in the batch."""
