class CodingError(Exception):
    """Base class for every error raised by the coding library."""


class ModelError(CodingError):
    """Invalid system/source description or argument outside its alphabet."""


class CodeError(CodingError):
    """Malformed block code, pmf or code file."""


class CatalogError(CodingError):
    pass


class CountExceedsLimit(CatalogError):
    def __init__(self, count: int, limit: int):
        super().__init__(f"literal enumeration needs {count} codes, limit is {limit}")
        self.count = count
        self.limit = limit


class EmptyCatalogSlot(CatalogError):
    def __init__(self, l: int):
        super().__init__(f"catalog has no codes of block length {l}")
        self.l = l


class BitstreamError(CodingError):
    pass


class TruncatedBitstream(BitstreamError):
    pass


class IndexOutOfCatalog(BitstreamError):
    pass


class ConfigError(CodingError):
    pass
