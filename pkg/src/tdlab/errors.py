"""Exception hierarchy shared by every tdlab module."""


class TdlabError(Exception):
    """Base class for all library errors."""


class SingularMatrix(TdlabError):
    pass


class NoConvergence(TdlabError):
    pass


class NotSymmetric(TdlabError):
    pass


class NonFiniteState(TdlabError):
    pass


class UnknownEnvironment(TdlabError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class ReducibleChain(TdlabError):
    pass


class SingularSystem(TdlabError):
    pass


class SingularA(TdlabError):
    pass


class SingularC(TdlabError):
    pass


class InvalidHyper(TdlabError, ValueError):
    pass


class EmptyGrid(TdlabError, ValueError):
    pass
