"""Exception hierarchy shared by all wmtrace modules."""


class WmtraceError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WmtraceError):
    """An experiment configuration failed validation before any work ran."""


class EmptyCorpus(WmtraceError):
    """A corpus (or the surviving part of one) contains no tokens."""


class VocabularyMismatch(WmtraceError):
    """Two objects that must share a vocabulary do not."""


class DegenerateNoise(WmtraceError):
    """Noising clipped every frequency entry to the floor; sigma is far too large."""


class AbsoluteContinuityViolation(WmtraceError):
    """KL(p || q) is infinite: q vanishes somewhere on p's support."""


class AllZeroMass(WmtraceError):
    """A reweighted distribution summed to zero; should be impossible with positive ratios."""


class InvalidRates(WmtraceError):
    """Error-rate ceilings must lie strictly inside (0, 0.5)."""


class ZeroDivergence(WmtraceError):
    """Expected token counts are undefined when the per-token divergence is not positive."""


class AlreadyDecided(WmtraceError):
    """A sequential test state that has reached a decision rejects further updates."""


class InvalidProbability(WmtraceError):
    """A probability fed to the sequential test must lie in (0, 1]."""


class EmptySequence(WmtraceError):
    """An operation that averages over tokens received an empty sequence."""
