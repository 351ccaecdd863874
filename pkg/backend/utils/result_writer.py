"""
Result artefact output: CSV tables, JSON summaries and SVG plots.
"""

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

from core.exceptions import StorageError
from core.interfaces import IResultWriter

logger = logging.getLogger(__name__)


def format_number(value: Any, float_format: str = ".17g") -> str:
    """Deterministic text for CSV cells; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, float_format)
    return str(value)


def _json_ready(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, complex):
        return [_json_ready(value.real), _json_ready(value.imag)]
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    return value


class ResultWriter(IResultWriter):
    """Writes result files into one output directory, each atomically."""

    def __init__(self, directory, float_format: str = ".17g"):
        self.directory = Path(directory)
        self.float_format = float_format
        self._written: List[Path] = []

    @classmethod
    def from_settings(cls, directory, settings) -> "ResultWriter":
        output = settings.section("output")
        return cls(directory, float_format=getattr(output, "float_format", ".17g"))

    def _write_text(self, filename: str, text: str) -> Path:
        filepath = self.directory / filename
        temp_filepath = filepath.with_suffix(filepath.suffix + ".tmp")
        try:
            filepath.parent.mkdir(parents=True, exist_ok=True)
            with open(temp_filepath, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            temp_filepath.replace(filepath)
        except OSError as e:
            logger.error(f"Failed to write {filepath}: {e}")
            raise StorageError(f"Failed to write {filepath}: {str(e)}", error_code="write_failed",
                               details={"path": str(filepath)})
        self._written.append(filepath)
        logger.info(f"Wrote {filepath}")
        return filepath

    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v, self.float_format) for v in row])
        return self._write_text(filename, buffer.getvalue())

    def write_json(self, filename: str, data: Dict[str, Any]) -> Path:
        text = json.dumps(_json_ready(data), indent=2, ensure_ascii=False, sort_keys=False)
        return self._write_text(filename, text + "\n")

    def write_svg(self, filename: str, content: str) -> Path:
        return self._write_text(filename, content)

    def written(self) -> List[Path]:
        return list(self._written)
