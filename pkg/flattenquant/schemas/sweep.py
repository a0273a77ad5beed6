"""
Sweep table artifacts (sweep.json, sweep.csv)
"""

import csv
import io
from typing import Any, Dict, List

from pydantic import BaseModel

from flattenquant.quant.sweep import SweepParam, SweepRow, SweepTable
from flattenquant.schemas.common import ArtifactModel, Decimal


class SweepRowSchema(BaseModel):
    value: str
    flatten_ratio_x: Decimal
    flatten_ratio_w: Decimal
    int4_fraction: Decimal
    mean_output_mse: Decimal
    mean_sqnr_db: Decimal
    total_bytes: int
    total_bitops: int
    saturation_events: int

    @classmethod
    def from_row(cls, row: SweepRow) -> "SweepRowSchema":
        return cls(**vars(row))


class SweepArtifact(ArtifactModel):
    param: SweepParam
    rows: List[SweepRowSchema]

    @classmethod
    def from_table(cls, table: SweepTable, config: Dict[str, Any]) -> "SweepArtifact":
        return cls(config=config, param=table.param, rows=[SweepRowSchema.from_row(r) for r in table.rows])

    def to_csv(self) -> str:
        """Header plus one line per row; reals as in the JSON"""
        fields = list(SweepRowSchema.model_fields)
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=[self.param.value] + fields[1:], lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            dumped = row.model_dump(mode="json")
            writer.writerow({self.param.value: dumped.pop("value"), **dumped})
        return buffer.getvalue()
