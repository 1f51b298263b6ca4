"""Exception hierarchy; the CLI maps EmbkitError to exit code 1."""


class EmbkitError(Exception):
    pass


class ModelLoadError(EmbkitError):
    pass


class LayerRangeError(EmbkitError):
    pass


class InputMismatchError(EmbkitError):
    pass


class MalformedTableError(EmbkitError):
    pass
