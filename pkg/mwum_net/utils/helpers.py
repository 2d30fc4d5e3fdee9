import os
import json
import math
import hashlib
from typing import Any, List, Sequence


def validate_file_exists(filepath: str) -> bool:
    """Validate that a file exists."""
    return os.path.exists(filepath) and os.path.isfile(filepath)


def create_directory(dir_path: str) -> bool:
    """Create directory if it doesn't exist."""
    try:
        os.makedirs(dir_path, exist_ok=True)
        return True
    except OSError:
        return False


def canonical_json(data: Any) -> str:
    """JSON text with sorted keys and no incidental whitespace."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    """Hex SHA-256 of a UTF-8 string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(filepath: str) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def format_float(value: float) -> str:
    """Shortest round-tripping text for a float; integers stay integral."""
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    value = float(value)
    if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_row(values: Sequence[Any]) -> List[str]:
    """Format a CSV row deterministically."""
    row = []
    for value in values:
        if isinstance(value, str):
            row.append(value)
        elif isinstance(value, bool):
            row.append("true" if value else "false")
        else:
            row.append(format_float(value))
    return row


def parse_number_list(text: str, cast=float) -> List[Any]:
    """Parse '1,2,3' (or '1 2 3') into a list of numbers."""
    parts = [p for p in text.replace(" ", ",").split(",") if p]
    return [cast(p) for p in parts]


def json_safe(data: Any) -> Any:
    """Copy of data with non-finite floats replaced by "inf", "-inf" or "nan"."""
    if isinstance(data, dict):
        return {key: json_safe(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [json_safe(value) for value in data]
    if isinstance(data, float) and not math.isfinite(data):
        if math.isnan(data):
            return "nan"
        return "inf" if data > 0 else "-inf"
    return data
