from typing import Any
import json
from pathlib import Path


def write_json_file(data: Any, file_path: Path) -> Path:
    """
    Writes `data` as indented JSON, creating parent directories.

    Args:
        data: JSON-serializable object
        file_path: Destination file

    Returns:
        The written path
    """
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
    return file_path


def read_json_file(file_path: Path) -> Any:
    """
    Reads and returns the contents of a JSON file.

    Args:
        file_path: Path to the JSON file

    Raises:
        FileNotFoundError: If the file does not exist
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"JSON file not found: {file_path}")
    with open(file_path, "r", encoding="utf-8") as f:
        return json.load(f)
