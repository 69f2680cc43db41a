"""
app/models/__init__.py

モデルパッケージ

すべてのモデルをこのパッケージからインポート可能にする。

使用例:
    from app.models import SbmSpec, FitOptions, InvalidInput
"""
from .common import (
    CommandResponse,
    ConfigError,
    DegenerateFit,
    EmptyGraph,
    ErrorDetail,
    GrdpgError,
    InvalidInput,
    InvalidModel,
    NumericalFailure,
    ParseError,
    create_error_response,
    create_success_response,
)
from .design import (
    McDesign,
    McParameterSummary,
    McSummary,
    McSummaryRow,
    SimulationReport,
)
from .fit import (
    BetaReport,
    BetaVariant,
    ClusterConfig,
    ClustererKind,
    EmbedReport,
    EstimatorKind,
    FitOptions,
    FitReport,
    Regime,
    StageTimings,
)
from .sbm import (
    CovariateLaw,
    CovariateLawKind,
    LinkKind,
    SbmSpec,
)

__all__ = [
    # common
    "CommandResponse",
    "ErrorDetail",
    "GrdpgError",
    "InvalidModel",
    "InvalidInput",
    "NumericalFailure",
    "DegenerateFit",
    "ParseError",
    "ConfigError",
    "EmptyGraph",
    "create_success_response",
    "create_error_response",
    # sbm
    "LinkKind",
    "CovariateLawKind",
    "CovariateLaw",
    "SbmSpec",
    # fit
    "EstimatorKind",
    "ClustererKind",
    "BetaVariant",
    "Regime",
    "ClusterConfig",
    "FitOptions",
    "BetaReport",
    "StageTimings",
    "EmbedReport",
    "FitReport",
    # design
    "McDesign",
    "McParameterSummary",
    "McSummaryRow",
    "McSummary",
    "SimulationReport",
]
