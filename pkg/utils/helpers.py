"""
Regret Lab Utility Functions
Common helper functions used across the application
"""
import itertools
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Union

from core.exceptions import ConfigError

# Keys a sweep grid may vary
SWEEP_KEYS = ("n", "d", "p1", "seed")

def load_json_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON object from disk, raising ConfigError on any problem"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: line {e.lineno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return data

def parse_grid(text: str) -> Dict[str, List[Any]]:
    """
    Parse a sweep grid such as "n=100,1000;p1=0.5,1"

    Returns:
        Mapping from swept key to its values, in the order given
    """
    grid: Dict[str, List[Any]] = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise ConfigError(f"grid entry '{part}' must look like key=v1,v2")
        key, values = (s.strip() for s in part.split("=", 1))
        if key not in SWEEP_KEYS:
            raise ConfigError(f"cannot sweep over '{key}', choose from {', '.join(SWEEP_KEYS)}")
        cast = float if key == "p1" else int
        try:
            grid[key] = [cast(v) for v in values.split(",") if v.strip()]
        except ValueError as e:
            raise ConfigError(f"bad value in grid entry '{part}': {e}") from e
        if not grid[key]:
            raise ConfigError(f"grid entry '{part}' has no values")
    if not grid:
        raise ConfigError("empty sweep grid")
    return grid

def grid_points(grid: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product of a grid, first key varying slowest"""
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]

def format_number(value: float, digits: int = 6) -> str:
    """Compact display of a float, keeping inf and nan readable"""
    if value is None:
        return "-"
    if isinstance(value, str):
        return value
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return f"{value:.{digits}g}"

def truncate_text(text: str, max_length: int = 200, suffix: str = "...") -> str:
    """Truncate text to specified length"""
    if not text or len(text) <= max_length:
        return text

    return text[:max_length - len(suffix)] + suffix

def format_list_for_display(items: List[str], max_items: int = 5) -> str:
    """Format list for user-friendly display"""
    if not items:
        return "None"

    if len(items) <= max_items:
        return ", ".join(items)
    else:
        displayed = items[:max_items]
        remaining = len(items) - max_items
        return f"{', '.join(displayed)} and {remaining} more"
