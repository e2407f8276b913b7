"""Seeded RF world used in place of a physical testbed.

Log-distance path loss with i.i.d. Gaussian shadowing per reading, a hard
receiver-sensitivity cutoff, a parametric BLE localizer that returns a noisy
position plus a confidence radius, simple trajectories, and per-device RSS
offsets. Every output is a pure function of the configuration and its seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgument
from .model import (
    AssignmentStrategy,
    BleScan,
    GridSpec,
    GroundTruthEstimate,
    OffsetMode,
    Point,
    RepresentativeMode,
    RSS_MAX,
    RSS_MIN,
    TaggedScan,
    TrackerConfig,
    WifiScan,
)


@dataclass(frozen=True)
class PathLoss:
    pl0: float = 40.0  # dB at d0
    d0: float = 1.0  # m
    exponent: float = 3.0
    shadowing_sigma: float = 4.0  # dB

    def __post_init__(self):
        if not self.exponent > 0:
            raise InvalidArgument("path-loss exponent must be > 0")
        if not self.d0 > 0:
            raise InvalidArgument("d0 must be > 0")
        if not self.shadowing_sigma >= 0:
            raise InvalidArgument("shadowing_sigma must be >= 0")

    def mean_rss(self, tx_power, distance):
        d = np.maximum(distance, self.d0)
        return tx_power - (self.pl0 + 10.0 * self.exponent * np.log10(d / self.d0))


@dataclass(frozen=True)
class Transmitter:
    tx_id: str
    position: Point
    tx_power: float  # dBm


def _lattice(nx: int, ny: int, width: float, height: float, inset: float) -> List[Point]:
    xs = np.linspace(inset, width - inset, nx)
    ys = np.linspace(inset, height - inset, ny)
    return [(float(x), float(y)) for y in ys for x in xs]


@dataclass(frozen=True)
class Environment:
    """Rectangular floor with WiFi APs and BLE beacons."""

    width: float = 37.0
    height: float = 17.0
    aps: Tuple[Transmitter, ...] = ()
    beacons: Tuple[Transmitter, ...] = ()
    pathloss: PathLoss = PathLoss()
    sensitivity: float = -88.0  # dBm

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvalidArgument("environment must have positive size")
        for t in self.aps + self.beacons:
            if not self.contains(t.position):
                raise InvalidArgument(f"transmitter {t.tx_id} outside the area")

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        return 0.0, 0.0, self.width, self.height

    @property
    def n(self) -> int:
        return len(self.aps)

    @property
    def m(self) -> int:
        return len(self.beacons)

    def contains(self, p: Point) -> bool:
        return 0.0 <= p[0] <= self.width and 0.0 <= p[1] <= self.height

    def grid(self, cell_size: float) -> GridSpec:
        return GridSpec.covering(self.width, self.height, cell_size)

    @classmethod
    def default(
        cls,
        width: float = 37.0,
        height: float = 17.0,
        pathloss: PathLoss = PathLoss(),
        sensitivity: float = -88.0,
        strong_tx: float = 0.0,
        weak_tx: float = -12.0,
        beacon_tx: float = -10.0,
    ) -> "Environment":
        """Four in-floor APs, twelve weaker overheard APs, twenty beacons."""
        strong = [(0.14, 0.7), (0.38, 0.25), (0.62, 0.75), (0.86, 0.3)]
        aps = [Transmitter(f"ap{i:02d}", (fx * width, fy * height), strong_tx) for i, (fx, fy) in enumerate(strong)]
        for i, p in enumerate(_lattice(6, 2, width, height, inset=min(width, height) * 0.12)):
            aps.append(Transmitter(f"ap{i + 4:02d}", p, weak_tx))
        beacons = [
            Transmitter(f"b{i:02d}", p, beacon_tx)
            for i, p in enumerate(_lattice(5, 4, width, height, inset=min(width, height) * 0.1))
        ]
        return cls(width, height, tuple(aps), tuple(beacons), pathloss, sensitivity)


@dataclass(frozen=True)
class BleOracleParams:
    """Noisy BLE localizer: Gaussian position error, confidence proportional to its sigma."""

    loc_noise_sigma: float = 2.0  # m
    confidence_factor: float = 2.0
    min_confidence: float = 0.5  # m

    def __post_init__(self):
        if not self.loc_noise_sigma >= 0:
            raise InvalidArgument("loc_noise_sigma must be >= 0")
        if not self.confidence_factor > 0:
            raise InvalidArgument("confidence_factor must be > 0")
        if not self.min_confidence >= 0:
            raise InvalidArgument("min_confidence must be >= 0")

    @property
    def confidence(self) -> float:
        return max(self.min_confidence, self.confidence_factor * self.loc_noise_sigma)


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str = "ref"
    # dB added to every reported reading; hearing is decided on the physical
    # received power, so the offset moves values without changing the heard set
    rss_offset: float = 0.0
    quantize: bool = False

    def __post_init__(self):
        if abs(self.rss_offset) > 30:
            raise InvalidArgument("|rss_offset| must be <= 30 dB")


def rss_at(ap: Transmitter, point: Point, env: Environment, rng: np.random.Generator,
           device: DeviceProfile = DeviceProfile()) -> Optional[float]:
    """One RSS reading (dBm) from ``ap`` at ``point``, or None when below sensitivity."""
    d = math.hypot(point[0] - ap.position[0], point[1] - ap.position[1])
    noise = env.pathloss.shadowing_sigma * rng.standard_normal()
    power = float(env.pathloss.mean_rss(ap.tx_power, d)) + noise
    if power < env.sensitivity:
        return None
    rss = power + device.rss_offset
    if device.quantize:
        rss = float(round(rss))
    return min(max(rss, RSS_MIN), RSS_MAX)


def _readings(txs: Sequence[Transmitter], point: Point, env: Environment, rng, device: DeviceProfile):
    """Vectorised :func:`rss_at` over all transmitters (same draws, same order)."""
    if not txs:
        return ()
    pos = np.array([t.position for t in txs])
    tx = np.array([t.tx_power for t in txs])
    d = np.hypot(pos[:, 0] - point[0], pos[:, 1] - point[1])
    noise = env.pathloss.shadowing_sigma * rng.standard_normal(len(txs))
    power = env.pathloss.mean_rss(tx, d) + noise
    heard = power >= env.sensitivity
    rss = power + device.rss_offset
    if device.quantize:
        rss = np.round(rss)
    rss = np.clip(rss, RSS_MIN, RSS_MAX)
    return tuple((t.tx_id, float(v)) for t, v, h in zip(txs, rss, heard) if h)


def wifi_scan(point: Point, env: Environment, rng, device: DeviceProfile = DeviceProfile(), timestamp: float = 0.0) -> WifiScan:
    return WifiScan(timestamp, _readings(env.aps, point, env, rng, device))


def ble_scan(point: Point, env: Environment, rng, device: DeviceProfile = DeviceProfile(), timestamp: float = 0.0) -> BleScan:
    return BleScan(timestamp, _readings(env.beacons, point, env, rng, device))


def ble_ground_truth(true_point: Point, oracle: BleOracleParams, rng, env: Optional[Environment] = None) -> GroundTruthEstimate:
    """Noisy location label with its confidence radius, clipped to the area."""
    err = oracle.loc_noise_sigma * rng.standard_normal(2)
    x, y = true_point[0] + float(err[0]), true_point[1] + float(err[1])
    if env is not None:
        x = min(max(x, 0.0), env.width)
        y = min(max(y, 0.0), env.height)
    return GroundTruthEstimate((x, y), oracle.confidence)


def generate_trajectory(env: Environment, kind: str, rng=None, **params) -> List[Tuple[float, float, float]]:
    """Timed points ``(t, x, y)``.

    kinds and their parameters:

    * ``stationary``: ``point``, ``n_samples``, ``dt`` (1 s)
    * ``random_waypoint``: ``n_samples``, ``speed`` (1 m/s), ``dt`` (1 s)
    * ``grid_sweep``: ``spacing`` (1 m), ``dwell`` samples per vertex (1), ``dt``
    """
    dt = float(params.get("dt", 1.0))
    if not dt > 0:
        raise InvalidArgument("dt must be > 0")
    if kind == "stationary":
        point = params.get("point")
        n = int(params.get("n_samples", 0))
        if point is None or n < 1 or not env.contains(point):
            raise InvalidArgument("stationary needs an in-bounds point and n_samples >= 1")
        return [(i * dt, float(point[0]), float(point[1])) for i in range(n)]
    if kind == "random_waypoint":
        n = int(params.get("n_samples", 0))
        speed = float(params.get("speed", 1.0))
        if n < 1 or not speed > 0 or rng is None:
            raise InvalidArgument("random_waypoint needs n_samples >= 1, speed > 0 and an rng")
        size = np.array([env.width, env.height])
        pos = rng.random(2) * size
        target = rng.random(2) * size
        step = speed * dt
        out = []
        for i in range(n):
            out.append((i * dt, float(pos[0]), float(pos[1])))
            remaining = step
            while remaining > 0:
                gap = target - pos
                dist = float(np.hypot(*gap))
                if dist <= remaining:
                    pos = target
                    remaining -= dist
                    target = rng.random(2) * size
                else:
                    pos = pos + gap * (remaining / dist)
                    remaining = 0.0
        return out
    if kind == "grid_sweep":
        spacing = float(params.get("spacing", 1.0))
        dwell = int(params.get("dwell", 1))
        if not spacing > 0 or dwell < 1:
            raise InvalidArgument("grid_sweep needs spacing > 0 and dwell >= 1")
        xs = np.arange(0.0, env.width + 1e-9, spacing)
        ys = np.arange(0.0, env.height + 1e-9, spacing)
        out = []
        t = 0.0
        for j, y in enumerate(ys):
            row = xs if j % 2 == 0 else xs[::-1]  # boustrophedon
            for x in row:
                for _ in range(dwell):
                    out.append((t, float(x), float(y)))
                    t += dt
        return out
    raise InvalidArgument(f"unknown trajectory kind {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines one simulated experiment."""

    seed: int = 0
    cell_size: float = 2.0
    n_training_scans: int = 700
    strategy: AssignmentStrategy = AssignmentStrategy.WEIGHTED_CONFIDENCE
    tracker: TrackerConfig = TrackerConfig()
    oracle: BleOracleParams = BleOracleParams()
    train_device: DeviceProfile = DeviceProfile("train")
    test_device: DeviceProfile = DeviceProfile("test")
    environment: Environment = field(default_factory=Environment.default)
    # test set: a seeded subset of the 1 m grid vertices, each held for scans_per_point scans
    n_test_points: int = 100
    scans_per_point: int = 10
    test_spacing: float = 1.0
    walk_speed: float = 1.0
    sigma_floor: float = 2.0
    min_cell_weight: float = 0.25
    device_offset_correction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", AssignmentStrategy(self.strategy))
        if int(self.n_training_scans) < 1:
            raise InvalidArgument("n_training_scans must be >= 1")
        if int(self.n_test_points) < 1 or int(self.scans_per_point) < 1:
            raise InvalidArgument("test set must be non-empty")
        if not self.cell_size > 0:
            raise InvalidArgument("cell_size must be > 0")

    @property
    def grid(self) -> GridSpec:
        return self.environment.grid(self.cell_size)

    @property
    def n_test_scans(self) -> int:
        return self.n_test_points * self.scans_per_point

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *stream])


_TRAIN, _TEST = 1, 2
_TRAJ, _WIFI, _BLE = 1, 2, 3


@lru_cache(maxsize=16)
def _training(env: Environment, seed: int, n: int, speed: float, oracle: BleOracleParams,
              device: DeviceProfile) -> Tuple[Tuple[TaggedScan, ...], Tuple[Point, ...]]:
    traj = generate_trajectory(env, "random_waypoint", _rng(seed, _TRAIN, _TRAJ), n_samples=n, speed=speed)
    wifi_rng = _rng(seed, _TRAIN, _WIFI)
    ble_rng = _rng(seed, _TRAIN, _BLE)
    scans, truths = [], []
    for t, x, y in traj:
        scan = wifi_scan((x, y), env, wifi_rng, device, timestamp=t)
        label = ble_ground_truth((x, y), oracle, ble_rng, env)
        scans.append(TaggedScan(scan, label, device.device_id))
        truths.append((x, y))
    return tuple(scans), tuple(truths)


@lru_cache(maxsize=16)
def _test(env: Environment, seed: int, n_points: int, dwell: int, spacing: float,
          device: DeviceProfile) -> Tuple[Tuple[Point, WifiScan], ...]:
    vertices = generate_trajectory(env, "grid_sweep", spacing=spacing)
    pick_rng = _rng(seed, _TEST, _TRAJ)
    if n_points < len(vertices):
        idx = np.sort(pick_rng.choice(len(vertices), size=n_points, replace=False))
        vertices = [vertices[i] for i in idx]
    wifi_rng = _rng(seed, _TEST, _WIFI)
    out = []
    t = 0.0
    for _, x, y in vertices:
        for _ in range(dwell):
            out.append(((x, y), wifi_scan((x, y), env, wifi_rng, device, timestamp=t)))
            t += 1.0
    return tuple(out)


def simulate_dataset(config: ExperimentConfig, phase: str):
    """Training: a list of TaggedScans. Test: a list of (true_point, WifiScan) pairs.

    The two phases draw from disjoint seed-derived streams.
    """
    if phase == "training":
        scans, _ = _training(config.environment, config.seed, int(config.n_training_scans),
                             config.walk_speed, config.oracle, config.train_device)
        return list(scans)
    if phase == "test":
        return list(_test(config.environment, config.seed, int(config.n_test_points),
                          int(config.scans_per_point), config.test_spacing, config.test_device))
    raise InvalidArgument(f"phase must be 'training' or 'test', not {phase!r}")


def training_truths(config: ExperimentConfig) -> List[Point]:
    """True positions behind the training scans (what a perfect site survey would record)."""
    _, truths = _training(config.environment, config.seed, int(config.n_training_scans),
                          config.walk_speed, config.oracle, config.train_device)
    return list(truths)


# -- plain-text key = value configuration ---------------------------------------

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _bool(v: str) -> bool:
    try:
        return _BOOL[v.strip().lower()]
    except KeyError:
        raise InvalidArgument(f"not a boolean: {v!r}") from None


# key -> (section, field, parser); section None means ExperimentConfig itself
CONFIG_KEYS: Dict[str, tuple] = {
    "seed": (None, "seed", int),
    "cell_size": (None, "cell_size", float),
    "n_training_scans": (None, "n_training_scans", int),
    "strategy": (None, "strategy", AssignmentStrategy),
    "n_test_points": (None, "n_test_points", int),
    "scans_per_point": (None, "scans_per_point", int),
    "test_spacing": (None, "test_spacing", float),
    "walk_speed": (None, "walk_speed", float),
    "sigma_floor": (None, "sigma_floor", float),
    "min_cell_weight": (None, "min_cell_weight", float),
    "device_offset_correction": (None, "device_offset_correction", _bool),
    "window_k": ("tracker", "window_k", int),
    "offset_correction": ("tracker", "offset_correction", _bool),
    "offset_mode": ("tracker", "offset_mode", OffsetMode),
    "representative_mode": ("tracker", "representative_mode", RepresentativeMode),
    "spatial_com": ("tracker", "spatial_com", _bool),
    "loc_noise_sigma": ("oracle", "loc_noise_sigma", float),
    "confidence_factor": ("oracle", "confidence_factor", float),
    "min_confidence": ("oracle", "min_confidence", float),
    "train_offset": ("train_device", "rss_offset", float),
    "test_offset": ("test_device", "rss_offset", float),
    "train_quantize": ("train_device", "quantize", _bool),
    "test_quantize": ("test_device", "quantize", _bool),
    "width": ("env", "width", float),
    "height": ("env", "height", float),
    "sensitivity": ("env", "sensitivity", float),
    "pl0": ("pathloss", "pl0", float),
    "d0": ("pathloss", "d0", float),
    "pathloss_exponent": ("pathloss", "exponent", float),
    "shadowing_sigma": ("pathloss", "shadowing_sigma", float),
}


def apply_overrides(config: ExperimentConfig, values: Dict[str, object]) -> ExperimentConfig:
    """Return ``config`` with the given (string or typed) key/value overrides applied."""
    top, tracker, oracle, train, test, env_kw, pl_kw = {}, {}, {}, {}, {}, {}, {}
    sections = {None: top, "tracker": tracker, "oracle": oracle, "train_device": train,
                "test_device": test, "env": env_kw, "pathloss": pl_kw}
    for key, raw in values.items():
        try:
            section, name, parse = CONFIG_KEYS[key]
        except KeyError:
            raise InvalidArgument(f"unknown config key {key!r}") from None
        try:
            sections[section][name] = parse(raw.strip()) if isinstance(raw, str) else parse(raw)
        except (ValueError, TypeError) as exc:
            raise InvalidArgument(f"bad value for {key}: {raw!r} ({exc})") from None
    cfg = config
    if tracker:
        top["tracker"] = replace(cfg.tracker, **tracker)
    if oracle:
        top["oracle"] = replace(cfg.oracle, **oracle)
    if train:
        top["train_device"] = replace(cfg.train_device, **train)
    if test:
        top["test_device"] = replace(cfg.test_device, **test)
    if env_kw or pl_kw:
        env = cfg.environment
        pathloss = replace(env.pathloss, **pl_kw)
        width = env_kw.get("width", env.width)
        height = env_kw.get("height", env.height)
        sensitivity = env_kw.get("sensitivity", env.sensitivity)
        if "width" in env_kw or "height" in env_kw:
            env = Environment.default(width, height, pathloss, sensitivity)
        else:
            env = replace(env, pathloss=pathloss, sensitivity=sensitivity)
        top["environment"] = env
    return replace(cfg, **top)


def parse_config_text(text: str) -> Dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return apply_overrides(base or ExperimentConfig(), parse_config_text(fh.read()))


def config_to_text(config: ExperimentConfig) -> str:
    """Serialise the tunable fields in the key = value format :func:`load_config` reads."""
    sub = {None: config, "tracker": config.tracker, "oracle": config.oracle,
           "train_device": config.train_device, "test_device": config.test_device,
           "env": config.environment, "pathloss": config.environment.pathloss}
    lines = []
    for key, (section, name, _) in CONFIG_KEYS.items():
        value = getattr(sub[section], name)
        if hasattr(value, "value"):
            value = value.value
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# -- CSV export ---------------------------------------------------------------------

def write_scans_csv(path, scans: Sequence[WifiScan]) -> None:
    """``timestamp,ap_id,rss``, one row per reading, rows grouped by scan."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "ap_id", "rss"])
        for scan in scans:
            for ap, rss in scan.readings:
                w.writerow([repr(float(scan.timestamp)), ap, repr(rss)])


def read_scans_csv(path) -> List[WifiScan]:
    groups: Dict[float, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:3]] != ["timestamp", "ap_id", "rss"]:
            raise InvalidArgument(f"{path}: expected header timestamp,ap_id,rss")
        for row in reader:
            try:
                groups.setdefault(float(row["timestamp"]), []).append((row["ap_id"], float(row["rss"])))
            except (TypeError, ValueError) as exc:
                raise InvalidArgument(f"{path}: bad row {row} ({exc})") from None
    return [WifiScan(ts, tuple(r)) for ts, r in groups.items()]


def labels_path(path) -> str:
    return f"{path}.labels.csv"


def write_labels_csv(path, rows: Sequence[Tuple[float, float, float, float]], header=("timestamp", "x", "y", "confidence")) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_labels_csv(path) -> Dict[float, Tuple[float, ...]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return {float(r[0]): tuple(float(v) for v in r[1:]) for r in reader if r}


def export_dataset(config: ExperimentConfig, phase: str, path) -> int:
    """Write a simulated dataset as scans CSV plus a ``.labels.csv`` companion keyed by timestamp.

    Training labels are ``timestamp,x,y,confidence`` (the BLE estimate); test
    labels are ``timestamp,true_x,true_y``.
    """
    data = simulate_dataset(config, phase)
    if phase == "training":
        write_scans_csv(path, [s.wifi for s in data])
        write_labels_csv(labels_path(path), [
            (s.wifi.timestamp, s.truth.location[0], s.truth.location[1], s.truth.confidence_radius) for s in data
        ])
    else:
        write_scans_csv(path, [s for _, s in data])
        write_labels_csv(labels_path(path), [(s.timestamp, p[0], p[1]) for p, s in data],
                         header=("timestamp", "true_x", "true_y"))
    return len(data)
