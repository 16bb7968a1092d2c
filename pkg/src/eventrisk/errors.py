"""Exception hierarchy shared across the package.

Every error raised deliberately by this package derives from
:class:`EventriskError`, so callers (and the CLI) can distinguish
validation failures from genuine bugs.
"""


class EventriskError(Exception):
    """Base class for all errors raised by this package."""


# --- ingest ---------------------------------------------------------------

class UnknownCategory(EventriskError):
    """PoI category name is not one of the supported groups."""


class NegativeValue(EventriskError):
    def __init__(self, row, col, value):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"negative value {value!r} at row {row}, column {col}")


class DuplicateRegion(EventriskError):
    def __init__(self, region_id, row):
        self.region_id = region_id
        self.row = row
        super().__init__(f"duplicate region_id {region_id!r} at row {row}")


class EmptyTable(EventriskError):
    """Feature table has no data rows or no feature columns."""


class NetworkDisabled(EventriskError):
    """Fetch requested without the explicit network flag."""


class HttpStatus(EventriskError):
    def __init__(self, code, url):
        self.code = code
        self.url = url
        super().__init__(f"HTTP {code} for {url}")


# --- spatial --------------------------------------------------------------

class ExtentTooLarge(EventriskError):
    """Input points span more than the supported planar extent."""


class DuplicateStationPoints(EventriskError):
    """Two stations share the same coordinates."""


class DegenerateBoundary(EventriskError):
    """Bounding region has zero area or is otherwise unusable."""


class ZeroAreaNeighborhood(EventriskError):
    def __init__(self, region_id):
        self.region_id = region_id
        super().__init__(f"neighborhood {region_id!r} has zero usable area")


class RegionMismatch(EventriskError):
    """Feature-table rows and overlap-matrix rows do not align."""


# --- panel ----------------------------------------------------------------

class EmptySpan(EventriskError):
    """Requested span contains no complete period."""


class MissingRegionFeatures(EventriskError):
    def __init__(self, region_ids):
        self.region_ids = list(region_ids)
        super().__init__(
            "regions missing from feature table: " + ", ".join(self.region_ids)
        )


class CutoffOutOfSpan(EventriskError):
    """Date cutoff falls outside the panel span."""


# --- describe -------------------------------------------------------------

class ZeroVariance(EventriskError):
    """Correlation is undefined because one series is constant."""


# --- importance -----------------------------------------------------------

class TooFewRows(EventriskError):
    """Not enough rows to grow a tree under the configured node size."""


# --- nb2 ------------------------------------------------------------------

class LinearPredictorOverflow(EventriskError):
    """Linear predictor exceeded the safe range for exp()."""


class NonConvergence(EventriskError):
    def __init__(self, iterations, message="optimizer failed to converge"):
        self.iterations = iterations
        super().__init__(f"{message} after {iterations} iterations")


class SeparationDetected(EventriskError):
    """Coefficients diverging; data admit no finite optimum."""


class FeatureNameMismatch(EventriskError):
    """Model feature names do not match the supplied panel/table."""


# --- evaluate -------------------------------------------------------------

class LengthMismatch(EventriskError):
    """Actual and predicted vectors differ in length."""


class EmptyInput(EventriskError):
    """Metric requested over zero observations."""


# --- classify -------------------------------------------------------------

class TooFewValues(EventriskError):
    """Fewer values than requested classes."""
