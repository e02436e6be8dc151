"""
Stream Generation
Seeded well-specified logistic streams, deterministic adversarial streams and CSV ingest/egress
"""
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.special import expit

from core.data_models import FeatureLaw, StreamScheme, StreamSpec
from core.exceptions import ConfigError, StreamParseError
from core.loss_model import Observation

# Slack on the realized feature envelope
RADIUS_TOL = 1e-12


@dataclass(frozen=True)
class Stream:
    """Realized observation sequence (X_t, y_t), t = 1..n"""
    spec: StreamSpec
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64 in {-1, +1}
    d_x: float

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n(self) -> int:
        return len(self)

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def observation(self, t: int) -> Observation:
        """The t-th observation, 1-indexed"""
        return Observation(self.features[t - 1], int(self.labels[t - 1]))

    @property
    def observations(self) -> Iterator[Observation]:
        for x, y in zip(self.features, self.labels):
            yield Observation(x, int(y))


def replicate_seed(base_seed: int, replicate: int) -> int:
    """Seed of replicate r: base_seed XOR r"""
    return int(base_seed) ^ int(replicate)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by a 64-bit seed"""
    return np.random.Generator(np.random.Philox(int(seed)))


def _build_stream(spec: StreamSpec, features: np.ndarray, labels: np.ndarray) -> Stream:
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    d_x = float(np.max(np.linalg.norm(features, axis=1))) if len(labels) else 0.0
    return Stream(spec=spec, features=features, labels=labels, d_x=d_x)


def _cycle(rows: List[List[float]], n: int) -> np.ndarray:
    base = np.asarray(rows, dtype=np.float64)
    return base[np.arange(n) % base.shape[0]]


def _draw_features(spec: StreamSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.feature_law == FeatureLaw.UNIFORM_SPHERE:
        gauss = rng.standard_normal((spec.n, spec.d))
        norms = np.linalg.norm(gauss, axis=1, keepdims=True)
        # a zero Gaussian draw has probability 0; map it to e1 to stay on the sphere
        zero = norms[:, 0] == 0.0
        gauss[zero, 0] = 1.0
        norms[zero] = 1.0
        return spec.radius * gauss / norms
    if spec.feature_law == FeatureLaw.UNIFORM_CUBE:
        # radius is the half-width of the cube
        return rng.uniform(-spec.radius, spec.radius, size=(spec.n, spec.d))
    return _cycle(spec.fixed_features, spec.n)


def gen_wellspecified(spec: StreamSpec) -> Stream:
    """
    Draw an iid stream from the logistic model

    Args:
        spec: Stream recipe with scheme wellspecified and theta_true set

    Returns:
        Stream with X_t from the feature law and P(y_t = +1 | X_t) = sigmoid(theta_true^T X_t)
    """
    if spec.scheme != StreamScheme.WELLSPECIFIED:
        raise ConfigError(f"gen_wellspecified needs the wellspecified scheme, got {spec.scheme.value}")

    rng = make_rng(spec.seed)
    features = _draw_features(spec, rng)
    prob_positive = expit(features @ spec.theta_true_array())
    labels = np.where(rng.random(spec.n) < prob_positive, 1, -1)

    stream = _build_stream(spec, features, labels)
    logger.debug(f"Generated wellspecified stream n={spec.n} d={spec.d} seed={spec.seed} d_x={stream.d_x:.6g}")
    return stream


def gen_adversarial(spec: StreamSpec) -> Stream:
    """Deterministic alternating or replayed stream; the seed is ignored"""
    if spec.scheme == StreamScheme.ALTERNATING:
        # +e1, -e1, +e2, -e2, ... scaled to the radius, labels (-1)^t
        basis = []
        for i in range(spec.d):
            e = [0.0] * spec.d
            e[i] = spec.radius
            basis.append(e)
            basis.append([-v for v in e])
        features = _cycle(basis, spec.n)
        labels = np.where(np.arange(1, spec.n + 1) % 2 == 0, 1, -1)
    elif spec.scheme == StreamScheme.FIXED_REPLAY:
        features = _cycle(spec.fixed_features, spec.n)
        labels = np.asarray(spec.fixed_labels, dtype=np.int64)[np.arange(spec.n) % len(spec.fixed_labels)]
    else:
        raise ConfigError(f"gen_adversarial needs alternating or fixed_replay, got {spec.scheme.value}")

    stream = _build_stream(spec, features, labels)
    logger.debug(f"Generated {spec.scheme.value} stream n={spec.n} d={spec.d}")
    return stream


_PANDAS_LINE = re.compile(r"line (\d+)")


def _parse_field(text) -> float:
    """Exact decimal-to-double conversion; missing or non-numeric fields become NaN"""
    try:
        return float(text)
    except (TypeError, ValueError):
        return math.nan


def load_csv(path: Union[str, Path]) -> Stream:
    """
    Parse a `y,x1,...,xd` file into a stream

    Labels in {0, 1} are mapped to {-1, +1}. Line numbers in errors count the header as line 1.
    """
    path = Path(path)
    if not path.exists():
        raise StreamParseError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise StreamParseError(f"empty file: {path}") from e
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        line = int(match.group(1)) if match else None
        raise StreamParseError(f"malformed row in {path.name}: {e}", line) from e

    columns = [str(c).strip() for c in frame.columns]
    d = len(columns) - 1
    expected = ["y"] + [f"x{i}" for i in range(1, d + 1)]
    if d < 1 or columns != expected:
        raise StreamParseError(f"header must be y,x1,...,xd, got {','.join(columns)}", 1)
    if frame.empty:
        raise StreamParseError(f"no observations in {path.name}", 2)

    numeric = frame.apply(lambda column: column.map(_parse_field))
    values = numeric.to_numpy(dtype=np.float64)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        raise StreamParseError(f"non-numeric or missing field: {','.join(frame.iloc[row].fillna('').tolist())}", row + 2)

    raw_labels = values[:, 0]
    uses_zero_one = bool(np.any(raw_labels == 0.0)) and not bool(np.any(raw_labels == -1.0))
    allowed = (0.0, 1.0) if uses_zero_one else (-1.0, 1.0)
    bad_labels = np.flatnonzero(~np.isin(raw_labels, allowed))
    if bad_labels.size:
        row = int(bad_labels[0])
        raise StreamParseError(f"label must be -1/+1 or 0/1, got {frame.iloc[row, 0]}", row + 2)
    labels = np.where(raw_labels > 0, 1, -1)

    features = values[:, 1:]
    spec = StreamSpec(n=len(labels), d=d, scheme=StreamScheme.CSV, csv_path=str(path))
    logger.info(f"Loaded {len(labels)} observations of dimension {d} from {path}")
    return _build_stream(spec, features, labels)


def export_csv(stream: Stream, path: Union[str, Path]) -> Path:
    """Write a stream in the `y,x1,...,xd` format with round-trip precision"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(stream.features, columns=[f"x{i}" for i in range(1, stream.d + 1)])
    frame.insert(0, "y", stream.labels.astype(np.int64))
    frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")
    return path


def generate_stream(spec: StreamSpec) -> Stream:
    """Dispatch on the scheme of a stream recipe"""
    if spec.scheme == StreamScheme.WELLSPECIFIED:
        return gen_wellspecified(spec)
    if spec.scheme in (StreamScheme.ALTERNATING, StreamScheme.FIXED_REPLAY):
        return gen_adversarial(spec)

    loaded = load_csv(spec.csv_path)
    if loaded.d != spec.d:
        raise ConfigError(f"{spec.csv_path} has dimension {loaded.d}, config says d={spec.d}")
    if loaded.n < spec.n:
        raise ConfigError(f"{spec.csv_path} has {loaded.n} rows, config asks for n={spec.n}")
    return _build_stream(spec, loaded.features[: spec.n], loaded.labels[: spec.n])


def replicate_stream(spec: StreamSpec, base_seed: int, replicate: int) -> Stream:
    """Stream of replicate r, seeded with base_seed XOR r"""
    return generate_stream(spec.model_copy(update={"seed": replicate_seed(base_seed, replicate)}))
