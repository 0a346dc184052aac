"""Error annotation shared by the pipeline stages."""


class StageError(RuntimeError):
    """A module failure annotated with where it happened."""

    def __init__(self, stage, cause, ticker=None, fold=None):
        where = stage + (f" ticker={ticker}" if ticker else "") + (
            f" fold={fold}" if fold is not None else "")
        super().__init__(f"[{where}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.ticker = ticker
        self.fold = fold

    def __reduce__(self):
        return type(self), (self.stage, self.cause, self.ticker, self.fold)
