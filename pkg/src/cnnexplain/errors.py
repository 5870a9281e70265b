"""Exception types raised across the package."""


class CnnExplainError(Exception):
    """Base class for all package errors."""


class ModelError(CnnExplainError):
    """Invalid model structure or parameters."""


class SequenceTooShortError(ModelError):
    def __init__(self, n, kernel_size):
        super().__init__(f"sequence shorter than kernel ({n} < {kernel_size})")


class OutOfVocabularyError(ModelError):
    def __init__(self, token_id, vocab_size):
        super().__init__(f"out-of-vocabulary id {token_id} (vocab size {vocab_size})")


class ForwardOverflowError(ModelError):
    def __init__(self, where=""):
        suffix = f" ({where})" if where else ""
        super().__init__(f"numeric overflow in forward pass{suffix}")


class TrainingDivergedError(CnnExplainError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")


class DatasetError(CnnExplainError):
    """Malformed dataset file or contents."""


class ModelFormatError(CnnExplainError):
    """Model file could not be decoded."""


class OracleTooLargeError(CnnExplainError):
    def __init__(self, size, cap):
        super().__init__(f"instance too large for exhaustive oracle ({size} > {cap})")
