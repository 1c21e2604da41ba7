"""Exception and warning types raised across the toolkit."""


class DiscoforgeError(Exception):
    """Base class for all toolkit errors."""


class MissingColumn(DiscoforgeError):
    def __init__(self, name, path=None):
        self.name = name
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"required column {name!r} missing{where}")


class BadDirection(DiscoforgeError):
    def __init__(self, line, value):
        self.line = line
        self.value = value
        super().__init__(f"line {line}: direction must be '1>2' or '1<2', got {value!r}")


class BadSpan(DiscoforgeError):
    pass


class MalformedLine(DiscoforgeError):
    def __init__(self, lineno, path=None):
        self.lineno = lineno
        self.path = path
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{lineno}: token line needs at least 2 tab-separated fields")


class DocMismatch(DiscoforgeError):
    pass


class TemplateError(DiscoforgeError):
    pass


class UnknownPredicate(DiscoforgeError):
    pass


class EmptySupply(DiscoforgeError):
    pass


class MissingInstance(DiscoforgeError):
    pass


class IncompleteBatch(DiscoforgeError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"{c}#{i}:{f}" for c, i, f in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"translation batch incomplete: {shown}{more}")


class DegenerateDump(DiscoforgeError):
    pass


class NotEnoughCandidates(DiscoforgeError):
    pass


class LengthMismatch(DiscoforgeError):
    def __init__(self, gold_n, pred_n):
        self.gold_n = gold_n
        self.pred_n = pred_n
        super().__init__(f"gold has {gold_n} instances, predictions have {pred_n}")


class CorpusSetMismatch(DiscoforgeError):
    pass


class ConfigError(DiscoforgeError):
    pass


class UnknownLabelWarning(UserWarning):
    pass


class SanitizedTextWarning(UserWarning):
    pass


class SentenceNotFoundWarning(UserWarning):
    pass


class FeatureWarning(UserWarning):
    pass


class SupplyShortfallWarning(UserWarning):
    pass
