"""Exception hierarchy for the demandsys package."""


class DemandSysError(Exception):
    """Base class for all demandsys errors."""


# --- data ingestion ---

class MissingColumn(DemandSysError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"required column missing: {column!r}")


class NonPositiveValue(DemandSysError):
    def __init__(self, field, row):
        self.field = field
        self.row = row
        super().__init__(f"non-positive {field} at row {row}")


class UnbalancedPanel(DemandSysError):
    pass


class DuplicateKey(DemandSysError):
    pass


class UnmappedVehicleClass(DemandSysError):
    def __init__(self, vehicle_class):
        self.vehicle_class = vehicle_class
        super().__init__(f"vehicle class {vehicle_class!r} has no aggregate good mapping")


class UnitMismatch(DemandSysError):
    pass


class InsufficientPeriods(DemandSysError):
    pass


# --- model evaluation ---

class DimensionMismatch(DemandSysError):
    pass


class WrongForm(DemandSysError):
    pass


class NonPositivePrice(DemandSysError):
    pass


class NonPositiveExpenditure(DemandSysError):
    pass


# --- estimation ---

class RankDeficientDesign(DemandSysError):
    pass


class RankDeficientJacobian(DemandSysError):
    pass


class SingularResidualCovariance(DemandSysError):
    pass


class NonConvergence(DemandSysError):
    pass


# --- elasticities / regularity ---

class ZeroShare(DemandSysError):
    pass


class NegativeVariance(DemandSysError):
    pass


class ModelNotFitted(DemandSysError):
    pass


class NonFiniteEntry(DemandSysError):
    pass


# --- synthetic data ---

class DegenerateShares(DemandSysError):
    pass


class SchemaError(DemandSysError):
    """Malformed parameter or configuration document; message carries the field path."""
