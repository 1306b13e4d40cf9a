"""Exception hierarchy shared across the package."""


class PanelModelError(Exception):
    """Base class for all domain errors raised by this package."""


# --- data / ingestion ---

class MissingColumn(PanelModelError):
    pass


class UnbalancedPanel(PanelModelError):
    pass


class NonBinaryOutcome(PanelModelError):
    pass


class NonFiniteCovariate(PanelModelError):
    pass


class EmptyPeriodRange(PanelModelError):
    pass


class PanelTooShort(PanelModelError):
    pass


# --- clustering ---

class KOutOfRange(PanelModelError):
    pass


class ThresholdUnreachable(PanelModelError):
    pass


# --- estimation ---

class NoUsableUnits(PanelModelError):
    pass


class CollinearDesign(PanelModelError):
    pass


class DimensionMismatch(PanelModelError):
    pass


class UnsupportedModelSpec(PanelModelError):
    pass


# --- partial effects ---

class DroppedUnit(PanelModelError):
    pass


class NonBinaryCovariate(PanelModelError):
    pass


class NotConverged(PanelModelError):
    pass


class SingularVcov(PanelModelError):
    pass


# --- GFE orchestration ---

class AllGroupsSeparated(PanelModelError):
    pass


# --- forecasting ---

class WindowTooShort(PanelModelError):
    pass


class DegenerateOutcomes(PanelModelError):
    pass
