"""JSON utilities: validation, safe parsing and stable writing."""

import json
from pathlib import Path
from typing import Any, Tuple, Union


def is_valid_json(text: Union[str, bytes]) -> Tuple[bool, Any]:
    """
    Validate a JSON document and return the parsed object.

    Args:
        text: JSON text (str or UTF-8 bytes)

    Returns:
        Tuple of (is_valid, parsed_object_or_error_message)
    """
    try:
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        return True, json.loads(text)
    except json.JSONDecodeError as e:
        return False, f"JSON decode error at line {e.lineno}, column {e.colno}: {e.msg}"
    except UnicodeDecodeError as e:
        return False, f"not UTF-8: {e}"


def dumps_stable(obj: Any) -> str:
    """Serialize with sorted keys and fixed indentation so equal objects give equal bytes."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(obj: Any, file_path: Union[str, Path]) -> Path:
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_stable(obj), encoding="utf-8")
    return path


def read_json(file_path: Union[str, Path]) -> Any:
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"JSON file not found: {path}")
    ok, obj = is_valid_json(path.read_text(encoding="utf-8"))
    if not ok:
        raise ValueError(f"Invalid JSON in {path}: {obj}")
    return obj
