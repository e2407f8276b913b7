"""Crowdsourced WiFi fingerprint localization with BLE-labelled training scans."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ChecksumMismatch,
    EmptyFingerprint,
    HybridLocError,
    InvalidArgument,
    InvalidCell,
    MalformedRecord,
    NoOverlap,
    NotFinalized,
    OutOfArea,
    UnsupportedVersion,
    UnusableCell,
)
from .model import (  # noqa: E402
    ApStats,
    AssignmentStrategy,
    BleScan,
    CellStats,
    FingerprintDb,
    GridSpec,
    GroundTruthEstimate,
    RepresentativeMode,
    TaggedScan,
    TrackerConfig,
    WifiScan,
    cell_geometric_center,
    cell_of,
)
from .fingerprint import BuilderConfig, FingerprintBuilder, assign_scan, build_fingerprint  # noqa: E402
from .estimator import Tracker, discrete_estimate, track  # noqa: E402
from .dbfile import load_db, save_db  # noqa: E402
