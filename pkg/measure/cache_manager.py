from __future__ import annotations

import json
import logging
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

import pandas as pd

from kernel.interaction import InteractionOperator
from measure.dpp import DEFAULT_ENUMERATION_LIMIT, MeasureTable, exact_distribution
from utils.io_helpers import array_digest, ensure_directory

logger = logging.getLogger(__name__)


class MeasureCache:
    """Parquet store of enumerated measure tables keyed by a digest of (J, ν)."""

    def __init__(self, cache_dir: Path = Path("./cache")):
        self.cache_dir = Path(cache_dir)
        ensure_directory(self.cache_dir)

    @staticmethod
    def cache_key(interaction: InteractionOperator) -> str:
        return array_digest(interaction.matrix, interaction.space.weights)

    def _cache_path(self, cache_key: str) -> Path:
        return self.cache_dir / f"{cache_key}.parquet"

    def _meta_path(self, cache_key: str) -> Path:
        return self.cache_dir / f"{cache_key}.json"

    def save(self, table: MeasureTable, cache_key: str) -> None:
        path = self._cache_path(cache_key)
        table.to_frame().to_parquet(path, index=False)
        meta = {"saved_at": datetime.now(timezone.utc).isoformat(), "n_sites": table.n_sites}
        self._meta_path(cache_key).write_text(json.dumps(meta), encoding="utf-8")
        logger.info("Saved measure table: %s", path)

    def load(self, cache_key: str) -> Optional[MeasureTable]:
        path = self._cache_path(cache_key)
        if not path.exists():
            return None
        logger.info("Loading measure table from cache: %s", path)
        frame = pd.read_parquet(path).sort_values("bitmask")
        n_sites = int(frame["bitmask"].size).bit_length() - 1
        return MeasureTable(n_sites, frame["probability"].to_numpy())

    def get_or_compute(self, interaction: InteractionOperator, limit: int = DEFAULT_ENUMERATION_LIMIT) -> MeasureTable:
        key = self.cache_key(interaction)
        cached = self.load(key)
        if cached is not None and cached.n_sites == interaction.n:
            return cached
        table = exact_distribution(interaction, interaction.space, limit)
        self.save(table, key)
        return table

    def clear(self, older_than: Optional[timedelta] = None) -> int:
        removed = 0
        for p in self.cache_dir.glob("*.parquet"):
            meta = p.with_suffix(".json")
            if older_than is not None:
                if not meta.exists():
                    continue
                try:
                    info = json.loads(meta.read_text(encoding="utf-8"))
                    saved_at = datetime.fromisoformat(info.get("saved_at"))
                except (ValueError, TypeError):
                    continue
                if datetime.now(timezone.utc) - saved_at <= older_than:
                    continue
            p.unlink(missing_ok=True)
            meta.unlink(missing_ok=True)
            removed += 1
        return removed
