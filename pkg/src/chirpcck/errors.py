"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class InvalidSampleRate(DomainError):
    pass


class ConsistencyError(ValueError):
    """Two inputs that must agree (lengths, rates, plans) do not."""


class DetectionError(RuntimeError):
    """No LoRa preamble could be located in the buffer."""


class DecodeError(RuntimeError):
    """An uncorrectable codeword was met while decoding a payload.

    ``block`` is the interleaver block index and ``codeword`` the index of the
    offending codeword inside that block.
    """

    def __init__(self, block, codeword, message=None):
        self.block = block
        self.codeword = codeword
        super().__init__(message or f"uncorrectable codeword {codeword} in block {block}")


class FormatError(ValueError):
    """A file on disk does not follow the expected layout."""
