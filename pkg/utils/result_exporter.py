"""
Result Exporter
Writes run summaries, curves, traces, bound tables and manifests into the output directory
"""
import json
import math
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from core.data_models import BoundReport
from core.exceptions import ConfigError
from core.loss_model import sigmoid
from regret_lab.trace import LearnerTrace

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"

SUMMARY_FILE = "summary.csv"
CURVES_FILE = "curves.csv"
BOUNDS_FILE = "bound_reports.csv"
MANIFEST_FILE = "manifest.json"
SWEEP_FILE = "sweep.csv"
TEXT_SUMMARY_FILE = "summary.txt"

BOUND_COLUMNS = ["schema_version", "name", "learner", "replicate", "kind", "lhs", "rhs", "slack", "satisfied", "note"]

def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)

def _json_ready(value: Any) -> Any:
    """Replace non-finite floats by strings so the manifest stays strict JSON"""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_ready(value.tolist())
    if isinstance(value, np.generic):
        return _json_ready(value.item())
    return value

class ResultExporter:
    """Single writer for every file of an output directory"""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def _write_frame(self, frame: pd.DataFrame, filename: str) -> Path:
        filepath = self.output_dir / filename
        if "schema_version" not in frame.columns:
            frame.insert(0, "schema_version", SCHEMA_VERSION)
        frame.to_csv(filepath, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
        self.written.append(filepath)
        logger.debug(f"Wrote {len(frame)} rows to {filepath}")
        return filepath

    def write_summary(self, rows: List[Dict[str, Any]]) -> Path:
        """One row per learner x replicate"""
        return self._write_frame(pd.DataFrame(rows), SUMMARY_FILE)

    def write_curves(self, rows: List[Dict[str, Any]]) -> Path:
        """Cumulative loss and regret sampled at powers of two and at n"""
        return self._write_frame(pd.DataFrame(rows), CURVES_FILE)

    def write_trace(self, trace: LearnerTrace, replicate: int) -> Path:
        """Every step of one run"""
        n, d = trace.n, trace.d
        frame = pd.DataFrame({"step": np.arange(1, n + 1), "y": trace.labels})
        for i in range(d):
            frame[f"x{i + 1}"] = trace.features[:, i]
        for i in range(d):
            frame[f"theta{i + 1}"] = trace.iterates[:, i]
        frame["margin"] = trace.margins
        frame["prob_positive"] = sigmoid(trace.margins)
        frame["loss"] = trace.losses
        frame["quad"] = trace.quad
        frame["weight"] = trace.weights
        return self._write_frame(frame, f"trace_{_safe_name(trace.learner)}_r{replicate}.csv")

    def write_bound_reports(self, reports: List[BoundReport]) -> Path:
        rows = [report.model_dump(exclude={"step_details"}) for report in reports]
        frame = pd.DataFrame(rows, columns=BOUND_COLUMNS[1:])
        return self._write_frame(frame, BOUNDS_FILE)

    def write_sweep(self, rows: List[Dict[str, Any]]) -> Path:
        return self._write_frame(pd.DataFrame(rows), SWEEP_FILE)

    def write_manifest(self, manifest: Dict[str, Any]) -> Path:
        """Export complete run description to JSON file"""
        filepath = self.output_dir / MANIFEST_FILE
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(_json_ready(manifest), f, indent=2, default=str, ensure_ascii=False)
        self.written.append(filepath)
        return filepath

    def write_text_summary(self, text: str) -> Path:
        filepath = self.output_dir / TEXT_SUMMARY_FILE
        with open(filepath, 'w', encoding='utf-8') as f:
            f.write(text.strip() + "\n")
        self.written.append(filepath)
        return filepath

def read_manifest(output_dir: Union[str, Path]) -> Dict[str, Any]:
    filepath = Path(output_dir) / MANIFEST_FILE
    if not filepath.exists():
        raise ConfigError(f"no {MANIFEST_FILE} in {output_dir}")
    with open(filepath, 'r', encoding='utf-8') as f:
        return json.load(f)

def read_bound_reports(output_dir: Union[str, Path]) -> Optional[pd.DataFrame]:
    filepath = Path(output_dir) / BOUNDS_FILE
    if not filepath.exists():
        return None
    frame = pd.read_csv(filepath, keep_default_na=False, na_values=[""])
    return frame.astype(object).where(frame.notna(), None)
