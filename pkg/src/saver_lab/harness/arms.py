"""Bandit arm tables in CSV form."""
from __future__ import annotations

import csv
import math
import os

from ..env import LayeredMdp, validate

COLUMNS = ("arm", "reward_mean", "reward_std", "cost_mean", "cost_std")


class ParseError(ValueError):
    def __init__(self, line, detail):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class MissingColumn(ValueError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"arm table is missing column {name!r}")


class EmptyTable(ValueError):
    pass


def load_arm_table_csv(path: str | os.PathLike) -> LayeredMdp:
    """One-state bandit with one arm per row, ordered by the ``arm`` column (arm 0 is the baseline)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in COLUMNS:
            if col not in header:
                raise MissingColumn(col)
        reader.fieldnames = header
        rows = []
        for row in reader:
            line = reader.line_num
            if not any((v or "").strip() for v in row.values()):
                continue
            try:
                arm = int(row["arm"])
                vals = [float(row[c]) for c in COLUMNS[1:]]
            except (TypeError, ValueError):
                raise ParseError(line, f"non-numeric field in {dict(row)!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(line, "non-finite value")
            rows.append((arm, *vals))
    if not rows:
        raise EmptyTable(f"{path}: no arms")
    rows.sort()
    arms = [r[0] for r in rows]
    if arms != list(range(len(rows))):
        raise ParseError(1, f"arm ids must be 0..{len(rows) - 1} without gaps, got {arms}")
    _, rm, rs, cm, cs = zip(*rows)
    mdp = LayeredMdp.bandit(
        reward_mean=rm, reward_std=rs, cost_mean=cm, cost_std=cs, action_names=tuple(f"arm{a}" for a in arms)
    )
    validate(mdp, "bandit")
    return mdp
