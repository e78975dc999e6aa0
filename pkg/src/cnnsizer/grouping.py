"""Class groupings: many-to-one remapping of original class labels.

A grouping merges original classes into grouped classes and may drop classes
entirely. Dropping is expressed by mapping a class to ``None`` (``null`` in the
JSON file format).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import InputError, UnknownClassError

# Accepted as an explicit drop marker in mapping values, alongside None.
DROP = "DROP"


@dataclass(frozen=True)
class ClassGrouping:
    """Mapping from original class ids to grouped class ids (or a drop).

    Invariants enforced at construction:
      * at least 2 distinct grouped classes remain after drops,
      * each original class appears exactly once (dict keys are unique by
        construction; emptiness and whitespace keys are rejected).
    """

    name: str
    mapping: Mapping[str, Optional[str]] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {}
        for orig, grouped in dict(self.mapping).items():
            if not isinstance(orig, str) or not orig.strip():
                raise InputError(f"grouping {self.name!r}: invalid original class id {orig!r}")
            if grouped == DROP:
                grouped = None
            if grouped is not None and (not isinstance(grouped, str) or not grouped.strip()):
                raise InputError(
                    f"grouping {self.name!r}: invalid grouped class id {grouped!r} for {orig!r}"
                )
            cleaned[orig] = grouped
        object.__setattr__(self, "mapping", cleaned)
        if len(self.grouped_classes()) < 2:
            raise InputError(
                f"grouping {self.name!r} keeps {len(self.grouped_classes())} grouped "
                "classes; at least 2 are required"
            )

    @classmethod
    def identity(cls, class_ids: Iterable[str], name: str = "identity") -> "ClassGrouping":
        return cls(name=name, mapping={c: c for c in class_ids})

    def grouped_classes(self) -> set:
        return {g for g in self.mapping.values() if g is not None}

    def map_label(self, class_id: str) -> Optional[str]:
        """Grouped label for an original class, or None when dropped.

        Raises InputError when ``class_id`` is not covered by the grouping.
        """
        if class_id not in self.mapping:
            raise InputError(f"grouping {self.name!r} does not cover class {class_id!r}")
        return self.mapping[class_id]

    def validate_against(self, class_ids: Iterable[str]) -> None:
        """Check the grouping covers exactly the given original classes."""
        present = set(class_ids)
        mapped = set(self.mapping)
        missing = sorted(present - mapped)
        unknown = sorted(mapped - present)
        if missing:
            raise InputError(
                f"grouping {self.name!r} does not mention original classes: {', '.join(missing)}"
            )
        if unknown:
            raise UnknownClassError(
                f"grouping {self.name!r} references unknown classes: {', '.join(unknown)}"
            )

    def to_dict(self) -> dict:
        return {"name": self.name, "mapping": dict(self.mapping)}
