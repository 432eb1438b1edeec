"""Exception hierarchy shared by every catscreen module."""


class CatscreenError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class ParseError(CatscreenError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateIdError(CatscreenError):
    def __init__(self, id_: str):
        self.id = id_
        super().__init__(f"duplicate id {id_!r}")


class MissingPropertyError(CatscreenError):
    def __init__(self, element: str):
        self.element = element
        super().__init__(f"element {element!r} missing from property table")


class UnsupportedFormatError(CatscreenError):
    pass


class OutOfDomainError(CatscreenError):
    def __init__(self, energy: float, domain: tuple[float, float]):
        self.energy = energy
        self.domain = domain
        super().__init__(f"energy {energy!r} outside map domain [{domain[0]}, {domain[1]}]")


class UnknownElementError(CatscreenError):
    pass


class TooManyAtomsError(CatscreenError):
    pass


class ShapeMismatchError(CatscreenError):
    pass


class HeadMismatchError(CatscreenError):
    pass


class EmptyDatasetError(CatscreenError):
    pass


class NonFiniteLossError(CatscreenError):
    pass


class NegativeSigmaError(CatscreenError):
    pass


class PoolExhaustedError(CatscreenError):
    pass


class EmptySetError(CatscreenError):
    pass
