import json
import logging
import os
from typing import Dict, List

import pandas as pd

from .evaluation_manager import TABLE_COLUMNS

logger = logging.getLogger(__name__)


class Utility:
    """Writes run artifacts under one output directory."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _prepare(self, name: str) -> str:
        path = self.path(name)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        return path

    def write_frame(self, frame: pd.DataFrame, name: str) -> str:
        """
        Saves a DataFrame as CSV.

        Args:
            frame (pd.DataFrame): The table to write.
            name (str): File name relative to the output directory.

        Returns:
            str: The path of the written file.
        """
        path = self._prepare(name)
        frame.to_csv(path, index=False, lineterminator="\n")
        logger.info("Wrote %s (%d rows)", path, len(frame))
        return path

    def write_json(self, data, name: str) -> str:
        path = self._prepare(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        logger.info("Wrote %s", path)
        return path

    def write_text(self, text: str, name: str) -> str:
        path = self._prepare(name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info("Wrote %s", path)
        return path


def report_records(table: pd.DataFrame) -> List[Dict]:
    """Rows of a comparison table as JSON-ready dicts, None for undefined values."""
    return [
        {column: (None if pd.isna(value) else value) for column, value in row.items()}
        for row in table.astype(object).to_dict(orient="records")
    ]


def table_from_records(records: List[Dict]) -> pd.DataFrame:
    return pd.DataFrame(records, columns=["Agent"] + TABLE_COLUMNS)


def render_text(table: pd.DataFrame, digits: int = 4) -> str:
    """Aligned plain-text rendering; undefined values print as n/a."""
    formatted = table.copy()
    for column in TABLE_COLUMNS:
        formatted[column] = [
            "n/a" if value is None or pd.isna(value) else f"{value:.{digits}f}" for value in table[column]
        ]
    return formatted.to_string(index=False) + "\n"
