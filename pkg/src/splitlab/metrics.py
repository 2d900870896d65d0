"""Metric catalog: names, kinds, aggregation rules, and scopes.

Anyone can define a metric; the platform only needs to know how to
aggregate it. Binary metrics answer a per-visitor yes/no question
("did this visitor book") and are counted once per visitor; real metrics
accumulate a value per event ("commission of a booking") summed over all
of a visitor's events. Automatic-scope metrics are aggregated for every
experiment and double as the guardrail set; on-demand metrics are only
interesting when an experiment pre-registers them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConflictError, NotFoundError, ValidationFailure

KIND_BINARY = "binary"
KIND_REAL = "real"

AGG_PER_VISITOR_ONCE = "per-visitor-once"
AGG_PER_EVENT_SUM = "per-event-sum"

SCOPE_AUTOMATIC = "automatic"
SCOPE_ON_DEMAND = "on-demand"


@dataclass(frozen=True, slots=True)
class MetricDefinition:
    name: str
    kind: str
    aggregation: str
    scope: str = SCOPE_ON_DEMAND
    description: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValidationFailure("metric name must be non-empty")
        if self.kind not in (KIND_BINARY, KIND_REAL):
            raise ValidationFailure(f"unknown metric kind {self.kind!r}")
        if self.aggregation not in (AGG_PER_VISITOR_ONCE, AGG_PER_EVENT_SUM):
            raise ValidationFailure(f"unknown aggregation {self.aggregation!r}")
        if self.scope not in (SCOPE_AUTOMATIC, SCOPE_ON_DEMAND):
            raise ValidationFailure(f"unknown scope {self.scope!r}")
        if self.kind == KIND_BINARY and self.aggregation != AGG_PER_VISITOR_ONCE:
            raise ValidationFailure("binary metrics are counted once per visitor")
        if self.kind == KIND_REAL and self.aggregation != AGG_PER_EVENT_SUM:
            raise ValidationFailure("real metrics are summed per event")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "aggregation": self.aggregation,
            "scope": self.scope,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricDefinition":
        return cls(
            name=data["name"],
            kind=data["kind"],
            aggregation=data["aggregation"],
            scope=data.get("scope", SCOPE_ON_DEMAND),
            description=data.get("description", ""),
        )


CONVERSION = MetricDefinition(
    name="conversion",
    kind=KIND_BINARY,
    aggregation=AGG_PER_VISITOR_ONCE,
    scope=SCOPE_AUTOMATIC,
    description="Did the visitor convert at least once.",
)

REVENUE = MetricDefinition(
    name="revenue",
    kind=KIND_REAL,
    aggregation=AGG_PER_EVENT_SUM,
    scope=SCOPE_ON_DEMAND,
    description="Total value attributed to the visitor, summed per event.",
)


class MetricCatalog:
    """Name-unique metric registry; supports ``name in catalog``.

    Definitions are immutable once registered: the aggregation semantics
    of historical data must not change under anyone's feet.
    """

    def __init__(self, definitions: list[MetricDefinition] | None = None):
        self._defs: dict[str, MetricDefinition] = {}
        for defn in definitions or ():
            self.register(defn)

    @classmethod
    def with_defaults(cls) -> "MetricCatalog":
        return cls([CONVERSION, REVENUE])

    def register(self, defn: MetricDefinition) -> MetricDefinition:
        if defn.name in self._defs:
            raise ConflictError(f"metric {defn.name!r} is already registered")
        self._defs[defn.name] = defn
        return defn

    def get(self, name: str) -> MetricDefinition:
        try:
            return self._defs[name]
        except KeyError:
            raise NotFoundError(f"metric {name!r} is not registered") from None

    def __contains__(self, name: str) -> bool:
        return name in self._defs

    def __len__(self) -> int:
        return len(self._defs)

    def names(self) -> list[str]:
        return list(self._defs)

    def all(self) -> list[MetricDefinition]:
        return list(self._defs.values())

    def binary_names(self) -> set[str]:
        return {d.name for d in self._defs.values() if d.kind == KIND_BINARY}

    def guardrail_names(self) -> list[str]:
        """Automatic-scope metrics, monitored on every experiment."""
        return [d.name for d in self._defs.values() if d.scope == SCOPE_AUTOMATIC]
