"""Exception types raised across the package."""


class Tok2CharError(Exception):
    """Base class for all package errors."""


class InvalidToken(Tok2CharError, KeyError):
    def __init__(self, token_id):
        super().__init__(token_id)
        self.token_id = token_id

    def __str__(self):
        return f"unknown token id {self.token_id!r}"


class UnencodableByte(Tok2CharError, ValueError):
    def __init__(self, position: int, byte: int):
        super().__init__(position, byte)
        self.position = position
        self.byte = byte

    def __str__(self):
        return f"no token covers byte 0x{self.byte:02x} at position {self.position}"


class ErasingVocabulary(Tok2CharError, ValueError):
    """The vocabulary has an entry decoding to the empty string."""


class VocabFormatError(Tok2CharError, ValueError):
    pass


class LMFormatError(Tok2CharError, ValueError):
    pass


class OracleRequiresCap(Tok2CharError, ValueError):
    """Brute-force enumeration needs a TableLM with a hard length cap."""


class DeadEnd(Tok2CharError):
    """Pruning removed every hypothesis able to explain the next character.

    ``index`` is the 0-based position of the character that could not be
    matched.
    """

    def __init__(self, index: int, message: str | None = None):
        super().__init__(index)
        self.index = index
        self.message = message

    def __str__(self):
        return self.message or f"dead end at character index {self.index}"


class UndefinedConditional(Tok2CharError, ZeroDivisionError):
    """Conditioning on an event of probability zero."""


class InvalidDistribution(Tok2CharError, ValueError):
    pass


class HealingFailed(Tok2CharError):
    """Token healing found no admissible token for the dangling suffix."""
